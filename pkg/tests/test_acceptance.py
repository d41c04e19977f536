"""Acceptance criteria, one test each.

Every test records ``(passed, detail)`` in ``conftest.ACCEPTANCE``; the
terminal summary prints one line per criterion.  Runtimes count the work
done inside the test plus the build time of any shared spectra/invariants
fixture it reads (mesh generation is not counted).
"""

import math
import time

import numpy as np

from conftest import ACCEPTANCE, TIMINGS
from specbounds import bounds as B
from specbounds import cli
from specbounds import invariants as I
from specbounds import laplace as L
from specbounds import mesh as Mh
from specbounds import packing as P
from specbounds.plotting import weyl_plot

CORPUS = ["sphere", "ellipsoid", "torus", "implicit_torus", "genus2"]
# degree of a defining polynomial, where one is known
DEGREES = {"torus": 4, "implicit_torus": 4, "genus2": 8}


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    assert ok, f"criterion {n}: {detail}"


def fixture_time(*keys):
    return sum(TIMINGS.get(k, 0.0) for k in keys)


# ---------------------------------------------------------------- 1


def test_criterion_01_sphere_spectrum(sphere5):
    t0 = time.perf_counter()
    sp = L.eigs(L.assemble(sphere5), 9)
    dt = time.perf_counter() - t0
    exact = np.array([2, 2, 2, 6, 6, 6, 6, 6, 12.0])
    rel = np.abs(sp.eigenvalues[1:] - exact) / exact
    hersch = sp.eigenvalues[1] * sphere5.total_area
    hrel = abs(hersch - 8 * math.pi) / (8 * math.pi)
    ok = abs(sp.eigenvalues[0]) < 1e-8 and rel.max() <= 0.01 and hrel <= 0.01 and dt < 30
    record(1, ok, f"max rel err {rel.max():.2e}, lam1*Vol={hersch:.4f} ({hrel:.2e}), {dt:.1f}s")


# ---------------------------------------------------------------- 2


def test_criterion_02_dense_oracle():
    rng = np.random.default_rng(2)
    ico = Mh.gen_icosphere(2)
    noisy = Mh.TriMesh.from_arrays(ico.vertices * (1 + 0.1 * rng.uniform(-1, 1, (ico.n_vertices, 1))),
                                   ico.faces)
    meshes = [ico, noisy, Mh.gen_torus(2, 1, 16, 10), Mh.gen_ellipsoid((2, 1, 1), 2),
              Mh.gen_torus(3, 0.5, 20, 8)]
    t0 = time.perf_counter()
    errs = []
    for m in meshes:
        assert m.n_vertices <= 300
        p = L.assemble(m)
        errs.append(np.abs(L.eigs(p, 9).eigenvalues - L.dense_spectrum(p, 9)).max())
    dt = time.perf_counter() - t0
    ok = max(errs) <= 1e-8 and dt < 10
    record(2, ok, f"max |iterative - dense| = {max(errs):.1e} over {len(meshes)} meshes, {dt:.1f}s")


# ---------------------------------------------------------------- 3


def _pipeline(m, k=20):
    m = Mh.recenter(m)
    pair = L.assemble(m)
    sp = L.eigs(pair, k)
    inv = I.estimate_invariants(m, 10_000, 64, 12, seed=1)
    rep = B.check_bounds(sp, inv, Mh.mesh_stats(m), B.constants(2), degree_bound=4,
                         mean_curvature_energy=L.mean_curvature_energy(m, pair))
    return sp, inv, rep


def test_criterion_03_invariance():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst_lam, worst_rec, flags_ok = 0.0, 0.0, True
    n_compared = 0
    for base in (Mh.gen_icosphere(4), Mh.gen_torus(2, 1, 64, 32)):
        sp0, inv0, rep0 = _pipeline(base)
        moves = {"t=0.5": base.transformed(scale=0.5), "t=3": base.transformed(scale=3.0),
                 "rigid": base.transformed(rotation=Mh.random_rotation(rng),
                                           translation=rng.normal(size=3) * 5)}
        for m in moves.values():
            sp, inv, rep = _pipeline(m)
            lv0, lv = sp0.normalized[1:], sp.normalized[1:]
            worst_lam = max(worst_lam, float(np.max(np.abs(lv - lv0) / lv0)))
            flags_ok &= [r.passed for r in rep.records] == [r.passed for r in rep0.records]
            for a, b in zip(rep0.records, rep.records):
                for x, y in ((a.lhs, b.lhs), (a.rhs, b.rhs)):
                    if math.isfinite(x):
                        worst_rec = max(worst_rec, abs(y - x) / max(abs(x), 1e-300))
                        n_compared += 1
    dt = time.perf_counter() - t0
    ok = flags_ok and worst_lam <= 1e-8 and worst_rec <= 1e-8 and dt < 60
    record(3, ok, f"lam*Vol rel {worst_lam:.1e}, records rel {worst_rec:.1e} ({n_compared} values), "
                  f"verdicts identical={flags_ok}, {dt:.1f}s")


# ---------------------------------------------------------------- 4


def test_criterion_04_intersection_index(corpus):
    t0 = time.perf_counter()
    i_s, h_s = I.intersection_index(corpus["sphere"], 10_000, seed=4)
    i_t, h_t = I.intersection_index(corpus["torus"], 50_000, seed=4)
    i_q, h_q = I.intersection_index(corpus["implicit_torus"], 50_000, seed=4)
    deg = corpus["implicit_torus"].meta["degree"]
    dt = time.perf_counter() - t0
    even = all(c % 2 == 0 for h in (h_s, h_t, h_q) for c in h)
    ok = i_s == 2 and i_t == 4 and i_q == 4 and deg == 4 and i_t <= deg and even and dt < 20
    record(4, ok, f"sphere i={i_s}, torus i={i_t}, quartic torus i={i_q} <= degree {deg}, "
                  f"all counts even={even}, {dt:.1f}s")


# ---------------------------------------------------------------- 5


def test_criterion_05_concentration(corpus_invariants):
    dt = fixture_time(*[("invariants", n) for n in CORPUS])
    Ls = corpus_invariants["sphere"].L_hat / (4 * math.pi)
    ratios = {n: inv.L_hat / (inv.i_hat / 2 * 4 * math.pi) for n, inv in corpus_invariants.items()}
    ok = 0.98 <= Ls <= 1.005 and max(ratios.values()) <= 1.02 and dt < 60
    worst = max(ratios, key=ratios.get)
    record(5, ok, f"sphere L_hat/4pi={Ls:.5f}, max L_hat/((i/2)4pi)={ratios[worst]:.4f} ({worst}), "
                  f"{dt:.1f}s incl. index sampling")


# ---------------------------------------------------------------- 6


def test_criterion_06_projection_lemma(corpus, corpus_invariants):
    t0 = time.perf_counter()
    gs = I.grassmann_average(corpus["sphere"], 200, seed=6, grid_resolution=1024, i_hat=2)
    # the raster error is a deterministic bias; the MC band is widened by its bound
    dev = abs(gs.avg_shadow - math.pi)
    band = 3 * gs.stderr + gs.mean_error_bound
    res = {n: I.grassmann_average(corpus[n], 200, seed=6, grid_resolution=1024,
                                  i_hat=corpus_invariants[n].i_hat) for n in ("torus", "genus2")}
    dt = time.perf_counter() - t0
    ok = dev <= band and all(r.passed for r in res.values()) and dt < 120
    deficit = abs(math.pi - corpus["sphere"].total_area / 4)
    detail = (f"sphere |avg-pi|={dev:.2e} <= 3sigma {3 * gs.stderr:.1e} + raster bound "
              f"{gs.mean_error_bound:.2e} (3sigma alone: {dev <= 3 * gs.stderr}; "
              f"mesh deficit |pi-A/4|={deficit:.1e}); "
              + ", ".join(f"{n} {r.avg_shadow:.3f} >= {r.lemma_rhs:.3f}" for n, r in res.items())
              + f", {dt:.1f}s")
    record(6, ok, detail)


# ---------------------------------------------------------------- 7


def test_criterion_07_moment_chain(corpus):
    t0 = time.perf_counter()
    mom_s = I.moment_of_inertia(corpus["sphere"])
    bad = []
    for n in CORPUS:
        m = corpus[n]
        lam1 = L.eigs(L.assemble(m), 1).eigenvalues[1]
        mom = I.moment_of_inertia(m)
        i_hat, _ = I.intersection_index(m, 2000, seed=7)
        if not lam1 * mom <= 2 * m.total_area * (1 + B.PASS_RTOL):
            bad.append(f"eqlambda {n}")
        if not I.eqint_lower_bound(m.total_area, i_hat) <= mom * (1 + B.PASS_RTOL):
            bad.append(f"eqint {n}")
    cells = {
        "disk": I.grid_cells(lambda x, y: x * x + y * y <= 1, 1.2, 400),
        "annulus": I.grid_cells(lambda x, y: (x * x + y * y <= 1) & (x * x + y * y >= 0.25), 1.2, 400),
        "offcenter": I.grid_cells(lambda x, y: (x - 0.5) ** 2 + y ** 2 <= 0.36, 1.2, 400),
    }
    rr = {k: I.rearrangement_check(*v) for k, v in cells.items()}
    bad += [f"rearrangement {k}" for k, r in rr.items() if not r.passed]
    dt = time.perf_counter() - t0
    mrel = abs(mom_s - 4 * math.pi) / (4 * math.pi)
    ok = mrel <= 0.01 and not bad and dt < 10
    record(7, ok, f"sphere moment rel err {mrel:.1e}; chain failures: {bad or 'none'}, {dt:.1f}s")


# ---------------------------------------------------------------- 8


def test_criterion_08_theorems(corpus, corpus_spectra, corpus_invariants):
    t0 = time.perf_counter()
    failures, counts = [], 0
    reilly_sphere = None
    for n in CORPUS:
        m = corpus[n]
        pair, sp = corpus_spectra[n]
        rep = B.check_bounds(sp, corpus_invariants[n], Mh.mesh_stats(m), B.constants(2),
                             degree_bound=DEGREES.get(n),
                             mean_curvature_energy=L.mean_curvature_energy(m, pair), k_max=50)
        names = rep.names()
        need = ["ElSoufiIlias_genus", "Reilly", "Thm1[i_hat]", "Thm2[i_hat](k=50)",
                "Thm3[L_hat](k=50)", "Thm3[L_from_index](k=50)", "eqlambda", "eqint"]
        if n == "sphere":
            need.append("Hersch")
            reilly_sphere = rep.get("Reilly")
        failures += [f"{n}: missing {x}" for x in need if x not in names]
        failures += [f"{n}: {r.name}" for r in rep.records if not r.passed]
        counts += len(rep.records)
    c = B.constants(2)
    c_ok = (abs(c.log2_C_m - (math.log2(72) + 180)) <= 1e-12 * c.log2_C_m
            and abs(c.c_m / c.C_m - 2 * math.pi) <= 1e-12 * 2 * math.pi)
    reilly_rel = abs(reilly_sphere.lhs - reilly_sphere.rhs) / reilly_sphere.rhs
    dt = time.perf_counter() - t0 + fixture_time(*[(s, n) for s in ("spectra", "invariants") for n in CORPUS])
    ok = not failures and c_ok and reilly_sphere.passed and reilly_rel <= 0.02 and dt < 300
    record(8, ok, f"{counts} records, failures: {failures or 'none'}; Reilly sphere gap {reilly_rel:.1e}; "
                  f"C(2)={c.C_m:.4e} c/C=2pi ok={c_ok}; {dt:.1f}s")


# ---------------------------------------------------------------- 9


def test_criterion_09_packing(sphere5, corpus_invariants):
    t0 = time.perf_counter()
    mu = P.build_measure(sphere5)
    alpha = mu.total / (6 * 8 ** 3 * 2)
    r = P.admissible_r(mu, alpha)
    pk = P.construct_sets(mu, 5, alpha, r)
    pair = L.assemble(sphere5)
    sp = L.eigs(pair, 4)
    rep = P.test_functions(sphere5, pair, pk, sp)
    cap = 6 * 8 ** 3 / r ** 2
    lam4 = sp.eigenvalues[4]
    tol = 1e-8
    phis, _ = P.bump_functions(sphere5, pk, mu)
    disjoint = bool(((np.array(phis) > 0).sum(axis=0) <= 1).all()) and rep.supports_disjoint
    under_cap = all(q <= cap for q in rep.rayleigh)
    minmax = lam4 <= rep.max_rayleigh * (1 + tol) + tol
    dt = time.perf_counter() - t0
    ok = len(pk.sets) == 5 and disjoint and under_cap and minmax and dt < 60
    record(9, ok, f"K=5 r={r:.3e}, max R={rep.max_rayleigh:.2f} <= cap {cap:.3e}, "
                  f"lam4={lam4:.3f} <= max R, disjoint={disjoint}, {dt:.1f}s")


# ---------------------------------------------------------------- 10


def test_criterion_10_weyl(corpus_spectra, corpus_invariants, tmp_path):
    t0 = time.perf_counter()
    c = B.constants(2)
    parts, ok = [], True
    for n in ("sphere", "torus"):
        sp = corpus_spectra[n][1]
        inv = corpus_invariants[n]
        w = B.weyl_scan(sp, inv, c, k_max=50)
        svg = weyl_plot(w, tmp_path / f"weyl_{n}.svg", title=n)
        ok &= w.bounded and w.empirical_sup <= c.c_m * inv.i_hat and svg.stat().st_size > 0
        ok &= len(w.k) == 50
        parts.append(f"{n} sup={w.empirical_sup:.2f} <= c(2)*{inv.i_hat}={w.bound:.3e}")
    dt = time.perf_counter() - t0 + fixture_time(("spectra", "sphere"), ("spectra", "torus"))
    ok = ok and dt < 60
    record(10, ok, "; ".join(parts) + f", plots written, {dt:.1f}s")


# ---------------------------------------------------------------- 11


def test_criterion_11_determinism(tmp_path, capsys):
    names = ("report.json", "bounds.csv", "spectrum.csv", "weyl.svg")
    runs = []
    for tag in ("first", "second"):
        d = tmp_path / tag
        code = cli.main(["check", "--mesh", "torus:R=2,r=1,nu=48,nv=24", "--k", "20", "--seed", "11",
                         "--planes", "50", "--grid", "256", "--out", str(d)])
        runs.append((code, {n: (d / n).read_bytes() for n in names}))
    same = runs[0][1] == runs[1][1]
    ok = same and runs[0][0] == runs[1][0] == 0
    record(11, ok, f"byte-identical {', '.join(names)} = {same}, exit codes {runs[0][0]}, {runs[1][0]}")
