"""Dimension constants and the eigenvalue inequalities, evaluated against
measured spectra and invariants.

All records are stored in a dilation-invariant normalization, so the report
of ``t * M`` equals the report of ``M``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .invariants import GeometricInvariants, eqint_lower_bound
from .laplace import Spectrum
from .mesh import MeshStats

LN2 = math.log(2.0)
#: relative tolerance on ordinary inequality records
PASS_RTOL = 1e-9
#: relative tolerance for inequalities whose equality case is a round sphere
EQUALITY_CASE_RTOL = 0.02
#: largest log2 value materialized as a float
_LOG2_FLOAT_MAX = 1023.0


def vol_sphere(m: int) -> float:
    """Vol(S^m) = 2 pi^((m+1)/2) / Gamma((m+1)/2)."""
    return math.exp(math.log(2.0) + (m + 1) / 2 * math.log(math.pi) - math.lgamma((m + 1) / 2))


def vol_ball(m: int) -> float:
    """Vol(B^m) = pi^(m/2) / Gamma(m/2 + 1)."""
    return math.exp(m / 2 * math.log(math.pi) - math.lgamma(m / 2 + 1))


@dataclass(frozen=True)
class DimensionConstants:
    m: int
    vol_sphere_m: float
    vol_ball_m: float
    vol_sphere_m_minus_1: float
    A_m: float
    log2_C_m: float
    log2_c_m: float
    nash_p: int

    @property
    def C_m(self) -> float | None:
        return 2.0 ** self.log2_C_m if self.log2_C_m < _LOG2_FLOAT_MAX else None

    @property
    def c_m(self) -> float | None:
        return 2.0 ** self.log2_c_m if self.log2_c_m < _LOG2_FLOAT_MAX else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["C_m"] = self.C_m
        d["c_m"] = self.c_m
        return d


def constants(m: int) -> DimensionConstants:
    """Closed-form constants of the eigenvalue bounds in dimension ``m``.

    ``C(m) = 6 * 12^(2/m) * 8^(2m^2 + 14m + 24)`` and
    ``c(m) = C(m) * (Vol(S^m) / 2)^(2/m)`` are kept as base-2 logarithms.
    """
    if not isinstance(m, (int, np.integer)) or not 2 <= m <= 50:
        raise ValueError(f"m must be an integer in [2, 50], got {m!r}")
    m = int(m)
    vs, vs1 = vol_sphere(m), vol_sphere(m - 1)
    log2_C = math.log2(6.0) + (2.0 / m) * math.log2(12.0) + 3.0 * (2 * m * m + 14 * m + 24)
    log2_c = log2_C + (2.0 / m) * math.log2(vs / 2.0)
    return DimensionConstants(
        m=m, vol_sphere_m=vs, vol_ball_m=vol_ball(m), vol_sphere_m_minus_1=vs1,
        A_m=(m + 2) / 2 * vs / vs1, log2_C_m=log2_C, log2_c_m=log2_c, nash_p=2 * m * m + 5 * m,
    )


def packing_constant_log2(m: int, p: int) -> float:
    """log2 of ``C(m, p) = 6 * 8^(m+p) * (12 * 8^(2(m+p)))^(2/m)``."""
    n = m + p
    return math.log2(6.0) + 3.0 * n + (2.0 / m) * (math.log2(12.0) + 6.0 * n)


# ---------------------------------------------------------------- report


@dataclass
class BoundRecord:
    name: str
    lhs: float
    rhs: float
    passed: bool
    rtol: float
    inputs: dict = field(default_factory=dict)
    log10_rhs: float | None = None

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def to_dict(self) -> dict:
        d = asdict(self)
        d["slack"] = self.slack
        return d


def _record(name, lhs, rhs, inputs, rtol=PASS_RTOL, log2_rhs=None) -> BoundRecord:
    if log2_rhs is not None and log2_rhs >= _LOG2_FLOAT_MAX:
        ok = lhs <= 0 or math.log2(lhs) <= log2_rhs + math.log2(1 + rtol)
        rhs_val = math.inf
    else:
        ok = lhs <= rhs * (1 + rtol)
        rhs_val = rhs
    log10 = log2_rhs * math.log10(2.0) if log2_rhs is not None else None
    return BoundRecord(name, float(lhs), float(rhs_val), bool(ok), rtol, inputs, log10)


@dataclass
class BoundReport:
    records: list

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.records)

    def get(self, name: str) -> BoundRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def names(self) -> list[str]:
        return [r.name for r in self.records]

    def to_dict(self) -> dict:
        return {"all_passed": self.all_passed, "records": [r.to_dict() for r in self.records]}

    def csv_rows(self) -> list[list]:
        rows = [["name", "lhs", "rhs", "slack", "pass"]]
        for r in self.records:
            rows.append([r.name, r.lhs, r.rhs, r.slack, "pass" if r.passed else "fail"])
        return rows


def check_bounds(spectrum: Spectrum, inv: GeometricInvariants, stats: MeshStats,
                 consts: DimensionConstants, degree_bound: int | None = None,
                 mean_curvature_energy: float | None = None, k_max: int = 50) -> BoundReport:
    """Evaluate every applicable inequality.

    Spectrum, invariants and stats must come from the same (barycenter
    centred) mesh.  Records are dilation invariant: eigenvalues enter as
    ``lam * Vol^(2/m)``, the barycenter chain is divided by the matching power
    of Vol.

    Raises
    ------
    ValueError
        Fewer than two eigenvalues, or a genus-0-only inequality requested
        without the data it needs.
    """
    m = consts.m
    if m != 2:
        raise ValueError("spectral checks are implemented for surfaces (m = 2)")
    lam = np.asarray(spectrum.eigenvalues, dtype=float)
    if len(lam) < 2:
        raise ValueError("missing required input: need at least lambda_1")
    vol = stats.area
    lam1n = lam[1] * vol ** (2 / m)
    deg = degree_bound if degree_bound is not None else inv.degree_bound
    recs: list[BoundRecord] = []
    measured = {"lambda_1": "measured", "Vol": "measured"}

    if stats.genus == 0 and stats.n_components == 1:
        recs.append(_record("Hersch", lam1n, m * consts.vol_sphere_m, dict(measured, genus="measured"),
                            EQUALITY_CASE_RTOL))
    if stats.n_components == 1:
        g = stats.genus
        recs.append(_record("ElSoufiIlias_genus", lam1n, 8 * math.pi * ((g + 3) // 2),
                            dict(measured, genus="measured"), EQUALITY_CASE_RTOL))

    if mean_curvature_energy is not None:
        # lam_1 <= m / Vol * ||H||^2, multiplied through by Vol
        recs.append(_record("Reilly", lam[1] * vol, m * mean_curvature_energy,
                            dict(measured, H2="measured"), EQUALITY_CASE_RTOL))

    sources = [("i_hat", inv.i_hat, "measured")]
    if deg is not None:
        sources.append(("degree", deg, "degree bound"))

    for tag, i_val, prov in sources:
        rhs1 = consts.A_m * (i_val / 2) ** (1 + 2 / m) * m * consts.vol_sphere_m ** (2 / m)
        recs.append(_record(f"Thm1[{tag}]", lam1n, rhs1,
                            dict(measured, i=prov, A_m="constant")))

    kk = min(k_max, len(lam) - 1)
    for tag, i_val, prov in sources:
        for k in range(1, kk + 1):
            lhs = lam[k] * vol ** (2 / m)
            l2 = consts.log2_c_m + (2 / m) * (math.log2(i_val) + math.log2(k))
            recs.append(_record(f"Thm2[{tag}](k={k})", lhs, _pow2(l2),
                                {"lambda_k": "measured", "i": prov, "c_m": "constant"},
                                log2_rhs=l2))

    L_sources = [("L_hat", inv.L_hat, "measured (lower bound)"),
                 ("L_from_index", inv.i_hat / 2 * consts.vol_sphere_m, "i_hat surrogate")]
    for tag, L, prov in L_sources:
        for k in range(1, kk + 1):
            lhs = lam[k] * vol ** (2 / m)
            l2 = consts.log2_C_m + (2 / m) * (math.log2(L) + math.log2(k))
            recs.append(_record(f"Thm3[{tag}](k={k})", lhs, _pow2(l2),
                                {"lambda_k": "measured", "L": prov, "C_m": "constant"},
                                log2_rhs=l2))

    if deg is not None:
        recs.append(_record("Milnor_degree", inv.i_hat, deg, {"i_hat": "measured", "N": "degree bound"}))

    # barycenter chain, normalized by Vol (eqlambda) and Vol^(1 + 2/m) (eqint)
    mom = inv.moment_of_inertia
    recs.append(_record("eqlambda", lam[1] * mom / vol, m,
                        dict(measured, moment="measured")))
    recs.append(_record("eqint", eqint_lower_bound(vol, inv.i_hat, m) / vol ** (1 + 2 / m),
                        mom / vol ** (1 + 2 / m), {"moment": "measured", "i": "measured"}))
    return BoundReport(recs)


def _pow2(l2: float) -> float:
    return 2.0 ** l2 if l2 < _LOG2_FLOAT_MAX else math.inf


# ---------------------------------------------------------------- Weyl scan


@dataclass
class WeylTable:
    k: np.ndarray
    ratio: np.ndarray
    bound: float
    log2_bound: float
    empirical_sup: float
    bounded: bool

    def rows(self) -> list[list]:
        return [["k", "lambda_k_Vol_over_k"]] + [[int(a), float(b)] for a, b in zip(self.k, self.ratio)]


def weyl_scan(spectrum: Spectrum, inv: GeometricInvariants, consts: DimensionConstants,
              k_max: int | None = None, min_k: int = 20) -> WeylTable:
    """``lam_k * Vol / k^(2/m)`` for k = 1..k_max against ``c(m) * i_hat^(2/m)``.

    With ``k_max`` omitted the whole spectrum is scanned and at least
    ``min_k`` eigenvalues beyond lam_0 are required.
    """
    m = consts.m
    avail = len(spectrum.eigenvalues) - 1
    if k_max is None:
        if avail < min_k:
            raise ValueError(f"too few eigenvalues: {avail} < {min_k}")
        k_max = avail
    if k_max < 1 or k_max > avail:
        raise ValueError(f"too few eigenvalues for k_max={k_max} (have {avail})")
    k = np.arange(1, k_max + 1)
    lam = np.asarray(spectrum.eigenvalues[1:k_max + 1])
    ratio = lam * spectrum.total_area ** (2 / m) / k ** (2 / m)
    l2 = consts.log2_c_m + (2 / m) * math.log2(inv.i_hat)
    sup = float(ratio.max())
    ok = math.log2(sup) <= l2 if sup > 0 else True
    return WeylTable(k, ratio, _pow2(l2), l2, sup, bool(ok))
