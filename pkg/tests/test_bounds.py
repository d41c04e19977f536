import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specbounds import bounds as B
from specbounds import invariants as I
from specbounds import laplace as L
from specbounds import mesh as Mh

# ---------------------------------------------------------------- constants


def test_constants_m2():
    c = B.constants(2)
    assert c.vol_sphere_m == pytest.approx(4 * math.pi, rel=1e-14)
    assert c.vol_sphere_m_minus_1 == pytest.approx(2 * math.pi, rel=1e-14)
    assert c.vol_ball_m == pytest.approx(math.pi, rel=1e-14)
    assert c.A_m == pytest.approx(4.0, rel=1e-14)
    # exponent 2m^2 + 14m + 24 = 60, so C(2) = 6 * 12 * 8^60 = 72 * 2^180
    assert c.log2_C_m == pytest.approx(math.log2(72) + 180, abs=1e-12)
    assert c.C_m == pytest.approx(72 * 2.0 ** 180, rel=1e-12)
    assert c.C_m == pytest.approx(1.1034e56, rel=1e-4)
    assert c.c_m / c.C_m == pytest.approx(2 * math.pi, rel=1e-12)
    assert c.nash_p == 18


def test_constants_m3():
    c = B.constants(3)
    assert c.A_m == pytest.approx(5 * math.pi / 4, rel=1e-13)
    assert c.vol_sphere_m == pytest.approx(2 * math.pi ** 2, rel=1e-13)


@pytest.mark.parametrize("m", range(2, 51))
def test_sphere_volume_identities(m):
    c = B.constants(m)
    assert c.vol_sphere_m == pytest.approx((m + 1) * B.vol_ball(m + 1), rel=1e-12)
    gamma_form = 2 * math.pi ** ((m + 1) / 2) / math.gamma((m + 1) / 2)
    assert c.vol_sphere_m == pytest.approx(gamma_form, rel=1e-12)
    assert c.A_m == pytest.approx((m + 2) / 2 * c.vol_sphere_m / c.vol_sphere_m_minus_1, rel=1e-14)
    # A(m) = (m+2)/2 sqrt(pi) Gamma(m/2) / Gamma((m+1)/2)
    assert c.A_m == pytest.approx((m + 2) / 2 * math.sqrt(math.pi) * math.gamma(m / 2)
                                  / math.gamma((m + 1) / 2), rel=1e-12)


def test_large_m_stays_in_log_space():
    c = B.constants(50)
    assert c.C_m is None and c.c_m is None
    assert c.log2_C_m == pytest.approx(math.log2(6) + 0.04 * math.log2(12) + 3 * (5000 + 700 + 24), rel=1e-15)
    assert B.constants(7).C_m is not None


@pytest.mark.parametrize("m", [1, 51, 0, -3, 2.0, "2"])
def test_constants_range(m):
    with pytest.raises(ValueError):
        B.constants(m)


def test_packing_constant():
    # C(2, 1) = 6 * 8^3 * (12 * 8^6)^(2/2)
    assert 2 ** B.packing_constant_log2(2, 1) == pytest.approx(6 * 8 ** 3 * 12 * 8 ** 6, rel=1e-12)


# ---------------------------------------------------------------- synthetic records


def _stats(area=4 * math.pi, genus=0, comps=1):
    return Mh.MeshStats(area, genus, np.zeros(3), (np.zeros(3), np.ones(3)), 2 - 2 * genus, comps)


def _spec(lams, area=4 * math.pi):
    return L.Spectrum(np.asarray(lams, float), None, len(lams) - 1, area)


def _inv(i=2, Lh=4 * math.pi, moment=4 * math.pi, deg=None):
    return I.GeometricInvariants(i, {i: 1}, Lh, (np.zeros(3), 1.0), moment, degree_bound=deg)


def test_record_semantics():
    r = B._record("x", 1.0, 1.0 - 1e-10, {})
    assert r.passed and r.slack == pytest.approx(-1e-10)
    assert not B._record("x", 1.0, 1.0 - 1e-8, {}).passed
    big = B._record("y", 1e300, math.inf, {}, log2_rhs=2000.0)
    assert big.passed and big.rhs == math.inf and big.log10_rhs == pytest.approx(2000 * math.log10(2))
    assert not B._record("y", 2.0 ** 1000, 2.0 ** 999, {}, log2_rhs=999.0).passed
    # beyond float range the comparison happens on log2 values
    assert not B._record("y", 1e308, math.inf, {}, log2_rhs=1023.1).passed
    assert B._record("y", 1e308, math.inf, {}, log2_rhs=1023.2).passed


def test_record_selection_genus0():
    rep = B.check_bounds(_spec([0, 2, 2, 2, 6]), _inv(), _stats(), B.constants(2))
    names = rep.names()
    assert "Hersch" in names and "ElSoufiIlias_genus" in names
    assert "Milnor_degree" not in names and "Reilly" not in names
    assert "Thm1[i_hat]" in names and "Thm1[degree]" not in names
    assert [f"Thm2[i_hat](k={k})" in names for k in range(1, 5)] == [True] * 4
    assert "Thm3[L_hat](k=4)" in names and "Thm3[L_from_index](k=1)" in names
    assert rep.all_passed
    for r in rep.records:
        assert set(r.inputs.values()) <= {"measured", "degree bound", "constant", "i_hat surrogate",
                                          "measured (lower bound)"}


def test_record_selection_genus1_and_degree():
    rep = B.check_bounds(_spec([0, 1, 1]), _inv(4, deg=4), _stats(genus=1), B.constants(2),
                         mean_curvature_energy=20.0)
    names = rep.names()
    assert "Hersch" not in names
    assert rep.get("ElSoufiIlias_genus").rhs == pytest.approx(16 * math.pi)
    assert rep.get("Milnor_degree").passed and "Thm1[degree]" in names and "Reilly" in names
    bad = B.check_bounds(_spec([0, 1, 1]), _inv(6, deg=4), _stats(genus=1), B.constants(2))
    assert not bad.get("Milnor_degree").passed and not bad.all_passed


def test_failing_record_is_reported():
    # a lambda_1 far above 8 pi / area breaks Hersch
    rep = B.check_bounds(_spec([0, 3.0]), _inv(), _stats(), B.constants(2))
    assert not rep.get("Hersch").passed
    assert rep.to_dict()["all_passed"] is False
    assert rep.csv_rows()[0] == ["name", "lhs", "rhs", "slack", "pass"]


def test_check_bounds_errors():
    with pytest.raises(ValueError, match="lambda_1"):
        B.check_bounds(_spec([0.0]), _inv(), _stats(), B.constants(2))
    with pytest.raises(ValueError):
        B.check_bounds(_spec([0, 2]), _inv(), _stats(), B.constants(3))


def test_thm1_formula_sphere():
    rep = B.check_bounds(_spec([0, 2]), _inv(), _stats(), B.constants(2))
    assert rep.get("Thm1[i_hat]").rhs == pytest.approx(32 * math.pi, rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(i=st.integers(1, 40).map(lambda x: 2 * x), k=st.integers(1, 50))
def test_thm2_rhs_log_form(i, k):
    lam = np.linspace(0, 10, k + 1)
    rep = B.check_bounds(_spec(lam), _inv(i), _stats(), B.constants(2))
    c = B.constants(2)
    r = rep.get(f"Thm2[i_hat](k={k})")
    assert r.rhs == pytest.approx(c.c_m * i * k, rel=1e-12)
    assert r.rhs >= r.lhs


# ---------------------------------------------------------------- measured


@pytest.fixture(scope="module")
def small():
    m = Mh.recenter(Mh.gen_torus(2, 1, 48, 24))
    inv = I.estimate_invariants(m, 2000, 32, 8, seed=2)
    sp = L.eigs(L.assemble(m), 25)
    return m, inv, sp


def test_dilation_invariance(small):
    m, inv, sp = small
    rep = B.check_bounds(sp, inv, Mh.mesh_stats(m), B.constants(2), degree_bound=4,
                         mean_curvature_energy=L.mean_curvature_energy(m))
    t = 3.0
    mt = m.transformed(scale=t)
    inv_t = I.estimate_invariants(mt, 2000, 32, 8, seed=2)
    sp_t = L.eigs(L.assemble(mt), 25)
    rep_t = B.check_bounds(sp_t, inv_t, Mh.mesh_stats(mt), B.constants(2), degree_bound=4,
                           mean_curvature_energy=L.mean_curvature_energy(mt))
    assert rep.names() == rep_t.names()
    for a, b in zip(rep.records, rep_t.records):
        assert a.passed == b.passed
        assert b.lhs == pytest.approx(a.lhs, rel=1e-8)
        assert b.rhs == pytest.approx(a.rhs, rel=1e-8)


def test_thm2_rhs_over_lhs(small):
    m, inv, sp = small
    rep = B.check_bounds(sp, inv, Mh.mesh_stats(m), B.constants(2))
    for k in range(1, 26):
        r = rep.get(f"Thm2[i_hat](k={k})")
        assert r.rhs / r.lhs >= 1


def test_sphere_equality_cases(corpus, corpus_spectra, corpus_invariants):
    m = corpus["sphere"]
    rep = B.check_bounds(corpus_spectra["sphere"][1], corpus_invariants["sphere"], Mh.mesh_stats(m),
                         B.constants(2), mean_curvature_energy=L.mean_curvature_energy(m))
    h = rep.get("Hersch")
    assert h.rhs == pytest.approx(8 * math.pi) and h.lhs == pytest.approx(8 * math.pi, rel=0.02)
    assert h.passed
    rl = rep.get("Reilly")
    # lam_1 * Vol <= 2 * ||H||^2, both sides near 8 pi
    assert rl.lhs / (4 * math.pi) == pytest.approx(2, rel=0.02) and rl.passed
    assert rep.all_passed


# ---------------------------------------------------------------- Weyl scan


def test_weyl_scan(small):
    m, inv, sp = small
    c = B.constants(2)
    w = B.weyl_scan(sp, inv, c)
    assert len(w.k) == 25 and w.bounded
    assert w.bound == pytest.approx(c.c_m * inv.i_hat, rel=1e-12)
    one = B.weyl_scan(sp, inv, c, k_max=1)
    assert one.ratio[0] == pytest.approx(sp.normalized[1], rel=1e-14)
    assert one.rows()[0] == ["k", "lambda_k_Vol_over_k"]


def test_weyl_scan_errors(small):
    m, inv, sp = small
    short = _spec(sp.eigenvalues[:10], sp.total_area)
    with pytest.raises(ValueError, match="too few"):
        B.weyl_scan(short, inv, B.constants(2))
    with pytest.raises(ValueError, match="too few"):
        B.weyl_scan(sp, inv, B.constants(2), k_max=26)
