"""Command line front end.

Every command accepts ``--config FILE`` with flat ``key = value`` lines
(keys are flag names without the leading dashes); explicit flags win.
Numbers written to stdout are comma delimited.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from . import bounds as B
from . import invariants as I
from . import laplace as L
from . import mesh as Mh
from . import packing as P
from .report import csv_text, write_csv, write_json

log = logging.getLogger("specbounds")


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (StageError, KeyboardInterrupt):
        raise
    except Exception as exc:  # noqa: BLE001 - every module error is reported with its stage
        raise StageError(name, exc) from exc


# ---------------------------------------------------------------- mesh sources


GENERATORS = {
    "icosphere": (Mh.gen_icosphere, {"subdiv": ("subdivisions", int), "radius": ("radius", float)}),
    "ellipsoid": (None, {"a": ("a", float), "b": ("b", float), "c": ("c", float),
                         "subdiv": ("subdivisions", int)}),
    "torus": (Mh.gen_torus, {"R": ("R", float), "r": ("r", float), "nu": ("nu", int), "nv": ("nv", int)}),
    "implicit_torus": (None, {"R": ("R", float), "r": ("r", float), "res": ("resolution", int)}),
    "genus2": (Mh.gen_genus2, {"res": ("resolution", int), "seed": ("seed", int)}),
    "two_spheres": (Mh.two_spheres, {"sep": ("separation", float), "subdiv": ("subdivisions", int)}),
    "implicit": (None, {"poly": ("poly", str), "res": ("resolution", int), "box": ("box", float)}),
}


def parse_mesh_source(src: str) -> Mh.TriMesh:
    """Load a mesh file, or build one from ``name:key=value,...``.

    Examples: ``icosphere:subdiv=5``, ``torus:R=2,r=1,nu=128,nv=64``,
    ``ellipsoid:a=2,b=1,c=1,subdiv=5``, ``genus2:res=150,seed=7``,
    ``implicit:poly=x^2+y^2+z^2-1,box=1.5,res=64``.
    """
    name, _, rest = src.partition(":")
    if name not in GENERATORS:
        p = Path(src)
        if not p.exists():
            raise FileNotFoundError(f"no such mesh file or generator: {src!r}")
        return Mh.load_mesh(p)
    fn, keys = GENERATORS[name]
    kw = {}
    # the polynomial may itself contain commas only inside parentheses; split at top level
    for item in _split_top(rest):
        if not item:
            continue
        k, eq, v = item.partition("=")
        if not eq or k.strip() not in keys:
            raise ValueError(f"unknown parameter {k!r} for generator {name!r}; "
                             f"expected one of {sorted(keys)}")
        arg, typ = keys[k.strip()]
        kw[arg] = typ(v.strip())
    if name == "ellipsoid":
        axes = (kw.pop("a", 2.0), kw.pop("b", 1.0), kw.pop("c", 1.0))
        return Mh.gen_ellipsoid(axes, **kw)
    if name == "implicit_torus":
        R, r = kw.get("R", 2.0), kw.get("r", 1.0)
        box = R + r + 0.5
        return Mh.gen_implicit(Mh.implicit_torus_poly(R, r), ((-box, -box, -(r + 0.5)), (box, box, r + 0.5)),
                               kw.get("resolution", 128))
    if name == "implicit":
        if "poly" not in kw:
            raise ValueError("implicit generator needs poly=...")
        return Mh.gen_implicit(kw["poly"], kw.get("box", 2.0), kw.get("resolution", 96))
    if name == "torus":
        kw = {"R": 2.0, "r": 1.0, "nu": 128, "nv": 64, **kw}
    return fn(**kw)


def _split_top(s: str):
    depth, cur, out = 0, [], []
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    out.append("".join(cur))
    return out


# ---------------------------------------------------------------- config


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment; values may be quoted."""
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        k, eq, v = line.partition("=")
        if not eq:
            raise ValueError(f"{path}:{n}: expected key = value")
        v = v.strip()
        if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
            v = v[1:-1]
        out[k.strip().replace("-", "_")] = v
    return out


def _positive(typ):
    def conv(s):
        v = typ(s)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v
    return conv


def _common(p, *, k=False, lines=False, centers=False, grid=False, out=True):
    p.add_argument("--mesh", help="mesh file (OFF/OBJ) or generator spec, e.g. icosphere:subdiv=5")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="flat key = value file; flags override it")
    if k:
        p.add_argument("--k", type=int, default=10, help="number of nonzero eigenvalues")
    if lines:
        p.add_argument("--lines", type=_positive(int), default=10_000)
    if centers:
        p.add_argument("--centers", type=_positive(int), default=256)
        p.add_argument("--radii", type=_positive(int), default=24)
    if grid:
        p.add_argument("--grid", type=_positive(int), default=1024)
        p.add_argument("--planes", type=_positive(int), default=200)
    if out:
        p.add_argument("--out", default=".", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="specbounds",
                                 description="Spectral bounds for triangulated surfaces in R^3")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a generated mesh as OFF")
    g.add_argument("kind", choices=["icosphere", "ellipsoid", "torus", "implicit", "implicit_torus",
                                    "genus2", "two_spheres"])
    g.add_argument("--subdiv", type=int, default=5)
    g.add_argument("--R", type=float, default=2.0)
    g.add_argument("--r", type=float, default=1.0)
    g.add_argument("--nu", type=int, default=128)
    g.add_argument("--nv", type=int, default=64)
    g.add_argument("--axes", default="2,1,1")
    g.add_argument("--poly", help="polynomial text or a file containing it")
    g.add_argument("--box", default="2", help="half width, or lo_x,lo_y,lo_z,hi_x,hi_y,hi_z")
    g.add_argument("--res", type=int, default=96)
    g.add_argument("--sep", type=float, default=3.0)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--config")
    g.add_argument("--out", default=None, help="output OFF path")

    s = sub.add_parser("spectrum", help="first k+1 eigenvalues")
    _common(s, k=True)
    s = sub.add_parser("index", help="intersection index by random lines")
    _common(s, lines=True)
    s = sub.add_parser("concentration", help="volume concentration estimate")
    _common(s, centers=True)
    s = sub.add_parser("shadow", help="Grassmannian mean of shadow areas")
    _common(s, lines=True, grid=True)
    s.add_argument("--direction", help="x,y,z: a single shadow instead of the average")

    c = sub.add_parser("check", help="full pipeline and inequality report")
    _common(c, k=True, lines=True, centers=True, grid=True)
    c.add_argument("--degree", type=int, default=None, help="degree bound of a defining polynomial")
    c.add_argument("--pack-k", type=int, default=2, help="k for the packing replay (0 disables)")

    p = sub.add_parser("pack", help="disjoint-set packing and cutoff test functions")
    _common(p, k=False)
    p.add_argument("--K", type=int, default=None, help="number of sets")
    p.add_argument("--k", type=int, default=None, help="replay mode: K = 2k+1 sets for lambda_k")
    p.add_argument("--alpha-policy", choices=["prop", "replay", "components", "explicit"],
                   default=None, help="prop: omega/(2*8^3*K); replay: omega/(6*8^3*k); "
                                      "components: one set per component; explicit: --alpha")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--r", type=float, default=None, help="override the admissible radius")
    p.add_argument("--centers", type=_positive(int), default=256)
    p.add_argument("--radii", type=_positive(int), default=24)
    ap.subcommands = sub.choices
    return ap


def parse_args(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "config", None):
        cfg = read_config(args.config)
        sub = ap.subcommands[args.command]
        known = {a.dest for a in sub._actions}
        bad = sorted(set(cfg) - known)
        if bad:
            ap.error(f"unknown config keys: {', '.join(bad)}")
        sub.set_defaults(**cfg)
        args = ap.parse_args(argv)
    return args


# ---------------------------------------------------------------- commands


def _load(args) -> Mh.TriMesh:
    if not args.mesh:
        raise StageError("mesh", ValueError("--mesh is required"))
    return _stage("mesh", parse_mesh_source, args.mesh)


def _outdir(args) -> Path:
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _print_rows(rows):
    sys.stdout.write(csv_text(rows))


def cmd_gen(args) -> int:
    kind = args.kind
    if kind == "icosphere":
        m = Mh.gen_icosphere(args.subdiv)
    elif kind == "ellipsoid":
        m = Mh.gen_ellipsoid(tuple(float(x) for x in args.axes.split(",")), args.subdiv)
    elif kind == "torus":
        m = Mh.gen_torus(args.R, args.r, args.nu, args.nv)
    elif kind == "implicit_torus":
        m = parse_mesh_source(f"implicit_torus:R={args.R},r={args.r},res={args.res}")
    elif kind == "genus2":
        m = Mh.gen_genus2(args.res, args.seed)
    elif kind == "two_spheres":
        m = Mh.two_spheres(args.sep, args.subdiv)
    else:
        if not args.poly:
            raise StageError("mesh", ValueError("implicit generator needs --poly"))
        text = Path(args.poly).read_text() if Path(args.poly).is_file() else args.poly
        box = [float(x) for x in args.box.split(",")]
        bbox = box[0] if len(box) == 1 else (box[:3], box[3:])
        m = _stage("mesh", Mh.gen_implicit, text.strip(), bbox, args.res)
    out = Path(args.out or f"{kind}.off")
    Mh.save_off(m, out)
    _print_rows([["path", "vertices", "faces", "genus", "area"],
                 [str(out), m.n_vertices, m.n_faces, m.genus, m.total_area]])
    return 0


def _spectrum_rows(sp: L.Spectrum):
    rows = [["j", "lambda", "lambda_vol", "residual"]]
    for j, (lam, lv, res) in enumerate(zip(sp.eigenvalues, sp.normalized, sp.residuals)):
        rows.append([j, float(lam), float(lv), float(res)])
    return rows


def cmd_spectrum(args) -> int:
    m = _load(args)
    pair = _stage("laplace", L.assemble, m)
    sp = _stage("laplace", L.eigs, pair, args.k)
    d = _outdir(args)
    write_csv(d / "spectrum.csv", _spectrum_rows(sp))
    write_json(d / "spectrum.json", {"mesh": args.mesh, "k": args.k, "seed": args.seed,
                                     "spectrum": sp.to_dict()})
    _print_rows(_spectrum_rows(sp))
    return 0


def cmd_index(args) -> int:
    m = _load(args)
    i_hat, hist = _stage("invariants", I.intersection_index, m, args.lines, args.seed)
    write_json(_outdir(args) / "index.json", {"mesh": args.mesh, "seed": args.seed, "lines": args.lines,
                                               "i_hat": i_hat, "histogram": hist})
    _print_rows([["i_hat", "lines", "seed"], [i_hat, args.lines, args.seed]]
                + [["crossings", "count"]] + [[k, v] for k, v in sorted(hist.items())])
    return 0


def cmd_concentration(args) -> int:
    m = Mh.recenter(_load(args))
    Lh, (c, r) = _stage("invariants", I.concentration, m, args.centers, args.radii, args.seed)
    write_json(_outdir(args) / "concentration.json",
               {"mesh": args.mesh, "seed": args.seed, "L_hat": Lh,
                "witness": {"center": c, "radius": r}})
    _print_rows([["L_hat", "witness_x", "witness_y", "witness_z", "witness_r"], [Lh, *map(float, c), r]])
    return 0


def cmd_shadow(args) -> int:
    m = _load(args)
    d = _outdir(args)
    if args.direction:
        vec = [float(x) for x in args.direction.split(",")]
        res = _stage("invariants", I.shadow, m, vec, args.grid)
        write_json(d / "shadow.json", {"mesh": args.mesh, "shadow": res})
        _print_rows([["shadow_area", "signed_mass", "error_bound"],
                     [res.shadow_area, res.signed_mass, res.error_bound]])
        return 0
    g = _stage("invariants", I.grassmann_average, m, args.planes, args.seed, args.grid, None, args.lines)
    write_json(d / "shadow.json", {"mesh": args.mesh, "seed": args.seed, "grassmann": g})
    _print_rows([["avg_shadow", "stderr", "lemma_rhs", "pass"],
                 [g.avg_shadow, g.stderr, g.lemma_rhs, "pass" if g.passed else "fail"]])
    return 0 if g.passed else 1


def run_check(args) -> dict:
    """Whole pipeline; returns the report dict (also written to ``--out``)."""
    from .plotting import weyl_plot

    m = Mh.recenter(_load(args))
    stats = Mh.mesh_stats(m)
    pair = _stage("laplace", L.assemble, m)
    sp = _stage("laplace", L.eigs, pair, args.k)
    h2 = _stage("laplace", L.mean_curvature_energy, m, pair)
    inv = _stage("invariants", I.estimate_invariants, m, args.lines, args.centers, args.radii, args.seed)
    deg = args.degree if args.degree is not None else inv.degree_bound
    consts = B.constants(2)
    rep = _stage("bounds", B.check_bounds, sp, inv, stats, consts, deg, h2, args.k)
    weyl = _stage("bounds", B.weyl_scan, sp, inv, consts, len(sp.eigenvalues) - 1)
    lemma = _stage("invariants", I.grassmann_average, m, args.planes, args.seed, args.grid, inv.i_hat)
    checks = {"bounds": rep.all_passed, "weyl": weyl.bounded, "projection_lemma": lemma.passed,
              "crossings_even": all(c % 2 == 0 for c in inv.i_histogram)}
    replay = None
    if args.pack_k > 0:
        replay = _stage("packing", P.replay, m, args.pack_k, inv.L_hat, pair)
        checks["packing_replay"] = replay.passed
    report = {
        "version": __version__,
        "config": {"mesh": args.mesh, "k": args.k, "seed": args.seed, "lines": args.lines,
                   "centers": args.centers, "radii": args.radii, "grid": args.grid,
                   "planes": args.planes, "degree": deg, "pack_k": args.pack_k},
        "mesh": {"vertices": m.n_vertices, "faces": m.n_faces, "area": stats.area,
                 "genus": stats.genus, "euler_char": stats.euler_char,
                 "components": stats.n_components},
        "constants": consts.to_dict(),
        "spectrum": sp.to_dict(),
        "mean_curvature_energy": h2,
        "invariants": inv.to_dict(),
        "bounds": rep.to_dict(),
        "weyl": {"k": weyl.k, "ratio": weyl.ratio, "log2_bound": weyl.log2_bound,
                 "empirical_sup": weyl.empirical_sup, "bounded": weyl.bounded},
        "projection_lemma": {k: v for k, v in lemma.to_dict().items() if k != "shadows"},
        "packing_replay": replay.to_dict() if replay else None,
        "checks": checks,
        "all_passed": all(checks.values()),
    }
    d = _outdir(args)
    write_json(d / "report.json", report)
    write_csv(d / "bounds.csv", rep.csv_rows())
    write_csv(d / "spectrum.csv", _spectrum_rows(sp))
    weyl_plot(weyl, d / "weyl.svg", title=args.mesh)
    return report


def cmd_check(args) -> int:
    report = run_check(args)
    rows = [["name", "lhs", "rhs", "pass"]]
    for r in report["bounds"]["records"]:
        if r["name"].startswith(("Thm2", "Thm3")) and not r["name"].endswith("(k=1)"):
            continue  # the full table is in bounds.csv
        rows.append([r["name"], r["lhs"], r["rhs"], "pass" if r["passed"] else "fail"])
    rows += [[k, "", "", "pass" if v else "fail"] for k, v in report["checks"].items()]
    rows.append(["all", "", "", "pass" if report["all_passed"] else "fail"])
    _print_rows(rows)
    return 0 if report["all_passed"] else 1


def cmd_pack(args) -> int:
    m = _load(args)
    measure = P.build_measure(m)
    policy = args.alpha_policy or ("replay" if args.k else "prop")
    pair = _stage("laplace", L.assemble, m)
    d = _outdir(args)
    if policy == "replay":
        if not args.k:
            raise StageError("packing", ValueError("replay policy needs --k"))
        Lh, _ = _stage("invariants", I.concentration, Mh.recenter(m), args.centers, args.radii, args.seed)
        res = _stage("packing", P.replay, m, args.k, Lh, pair)
        packing, rep, ok = res.packing, res.report, res.passed
        payload = {"mesh": args.mesh, "seed": args.seed, "policy": policy, "replay": res.to_dict()}
        cap = res.rayleigh_cap
    else:
        if policy == "components":
            packing = _stage("packing", P.component_sets, measure, args.r)
        else:
            K = args.K
            if not K:
                raise StageError("packing", ValueError(f"policy {policy!r} needs --K"))
            if policy == "prop":
                alpha = P.prop_alpha_limit(measure.total, K)
            else:
                if args.alpha is None:
                    raise StageError("packing", ValueError("explicit policy needs --alpha"))
                alpha = args.alpha
            r = args.r if args.r is not None else _stage("packing", P.admissible_r, measure, alpha)
            packing = _stage("packing", P.construct_sets, measure, K, alpha, r,
                             policy=policy)
        sp = _stage("laplace", L.eigs, pair, max(packing.K - 1, 1))
        rep = _stage("packing", P.test_functions, m, pair, packing, sp)
        ok = rep.all_ok
        cap = 6.0 * 8.0 ** packing.ambient_dim_exponent / packing.r ** 2
        payload = {"mesh": args.mesh, "seed": args.seed, "policy": policy,
                   "packing": packing.to_dict(), "test_functions": rep.to_dict()}
    write_json(d / "packing.json", payload)
    rows = rep.rows()
    rows[0].append("cap_6_8e_over_r2")
    for row in rows[1:]:
        row.append(cap)
    write_csv(d / "rayleigh.csv", rows)
    _print_rows(rows)
    return 0 if ok else 1


COMMANDS = {"gen": cmd_gen, "spectrum": cmd_spectrum, "index": cmd_index,
            "concentration": cmd_concentration, "shadow": cmd_shadow, "check": cmd_check,
            "pack": cmd_pack}


def _apply_thread_cap():
    n = os.environ.get("SPECBOUNDS_THREADS")
    if not n:
        return
    try:
        n = max(1, int(n))
    except ValueError:
        log.warning("ignoring SPECBOUNDS_THREADS=%r", n)
        return
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _apply_thread_cap()
    try:
        return COMMANDS[args.command](args)
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, Mh.MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
