"""Cotangent Laplacian, lumped mass, and the generalized eigenproblem K u = lam M u."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sla

from .mesh import TriMesh

logger = logging.getLogger(__name__)

SHIFT = -1e-8
MAX_RESTARTS = 500
#: block inverse-iteration sweeps after Lanczos (minimum, maximum)
MIN_REFINE = 4
MAX_REFINE = 200
#: random columns added to the refinement block to pick up missed copies
REFINE_PAD = 4
CLUSTER_REL_GAP = 1e-4


class EigenSolverError(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True, eq=False)
class SpectralPair:
    """Stiffness ``K`` (cotangent weights) and diagonal lumped mass ``M``."""

    stiffness: sparse.csc_matrix
    mass: sparse.dia_matrix
    vertex_count: int

    @property
    def mass_diagonal(self) -> np.ndarray:
        return self.mass.diagonal()


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    k_requested: int
    total_area: float
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def normalized(self) -> np.ndarray:
        """Dilation-invariant lam_j * Vol(M) (surfaces, m = 2)."""
        return self.eigenvalues * self.total_area

    def clusters(self, rel_gap: float = CLUSTER_REL_GAP) -> list[dict]:
        return eigenvalue_clusters(self.eigenvalues, rel_gap)

    def to_dict(self) -> dict:
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "normalized": self.normalized.tolist(),
            "residuals": self.residuals.tolist(),
            "clusters": self.clusters(),
        }


def cotangents(mesh: TriMesh) -> np.ndarray:
    """(F, 3) cotangent of the interior angle at each corner."""
    t = mesh.triangles
    cots = np.empty((mesh.n_faces, 3))
    for i in range(3):
        a = t[:, (i + 1) % 3] - t[:, i]
        b = t[:, (i + 2) % 3] - t[:, i]
        with np.errstate(divide="ignore", invalid="ignore"):
            cots[:, i] = np.einsum("ij,ij->i", a, b) / np.linalg.norm(np.cross(a, b), axis=1)
    return cots


def assemble(mesh: TriMesh) -> SpectralPair:
    """Build the cotangent stiffness and lumped (barycentric) mass matrices.

    Off-diagonal entry for edge (i, j) is ``-(cot a + cot b) / 2`` over the two
    angles opposite the edge; rows sum to zero.
    """
    cots = cotangents(mesh)
    bad = np.flatnonzero(~np.all(np.isfinite(cots), axis=1))
    if len(bad):
        raise FloatingPointError(f"non-finite cotangent weights on face {int(bad[0])}")
    f = mesh.faces
    n = mesh.n_vertices
    rows, cols, vals = [], [], []
    for i in range(3):
        # corner i is opposite edge (i+1, i+2)
        a, b = f[:, (i + 1) % 3], f[:, (i + 2) % 3]
        w = -0.5 * cots[:, i]
        rows += [a, b]
        cols += [b, a]
        vals += [w, w]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    off = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    K = (off + sparse.diags(diag)).tocsc()
    K = 0.5 * (K + K.T)
    mass = np.bincount(f.ravel(), weights=np.repeat(mesh.face_areas / 3.0, 3), minlength=n)
    return SpectralPair(K.tocsc(), sparse.diags(mass), n)


def eigs(pair: SpectralPair, k: int, tol: float = 1e-10) -> Spectrum:
    """First ``k + 1`` eigenpairs by shift-invert Lanczos at ``SHIFT``.

    Raises
    ------
    ValueError
        ``k + 1 >= V`` or ``tol`` outside ``(0, 1e-4]``.
    EigenSolverError
        ARPACK did not converge within the restart cap, or a residual
        ``|K u - lam M u|`` exceeds ``tol * |M u|``.
    """
    n = pair.vertex_count
    if k < 0 or k + 1 >= n:
        raise ValueError(f"k too large: need k + 1 < V, got k={k}, V={n}")
    if not 0 < tol <= 1e-4:
        raise ValueError("tol must lie in (0, 1e-4]")
    K, M = pair.stiffness, pair.mass.tocsc()
    mass = pair.mass_diagonal
    nev = k + 1
    # fixed-seed generic start vector; a symmetric one misses copies of multiplets
    v0 = np.random.default_rng(20240917).standard_normal(n)
    n_extra = min(max(4, nev // 5), n - 2 - nev)
    if n <= 64 or n_extra < 1:
        vals, vecs = _dense_eigh(K, mass)
        vals, vecs = vals[:nev], vecs[:, :nev]
        vecs = _mass_orthonormalize(vecs, mass, vals)
        res = _residuals(K, mass, vals, vecs)
    else:
        lu = sla.splu((K - SHIFT * M).tocsc())
        OPinv = sla.LinearOperator(K.shape, matvec=lu.solve, dtype=np.float64)
        try:
            vals, vecs = sla.eigsh(K, k=nev + n_extra, M=M, sigma=SHIFT, which="LM",
                                   OPinv=OPinv, tol=tol * 1e-2, maxiter=MAX_RESTARTS, v0=v0)
        except sla.ArpackNoConvergence as exc:
            res = _residuals(K, mass, exc.eigenvalues, exc.eigenvectors)
            raise EigenSolverError(
                f"shift-invert Lanczos did not converge ({len(exc.eigenvalues)} of {nev} pairs)",
                res,
            ) from exc
        order = np.argsort(vals)
        pad = min(REFINE_PAD, n - len(vals) - 1)
        vals, vecs, res = _block_refine(K, mass, lu.solve, vecs[:, order], nev, tol, pad)
        vals, vecs, res = vals[:nev], vecs[:, :nev], res[:nev]
        vecs = _mass_orthonormalize(vecs, mass, vals)
        res = _residuals(K, mass, vals, vecs)
    mu_norm = np.linalg.norm(mass[:, None] * vecs, axis=0)
    bad = res > tol * mu_norm + 1e-14
    if np.any(bad):
        raise EigenSolverError(f"residual above tolerance for pairs {np.flatnonzero(bad).tolist()}", res)
    total = float(mass.sum())
    return Spectrum(vals, vecs, k, total, res)


def _block_refine(K, mass, solve, V, nev, tol, pad):
    """Block inverse iteration with Rayleigh-Ritz, started from Lanczos vectors.

    Single-vector Lanczos can drop copies of exactly repeated eigenvalues;
    the padded block converges to the whole low eigenspace, so missing copies
    surface as new Ritz values within a few sweeps.
    """
    from scipy.linalg import eigh

    n = V.shape[0]
    rng = np.random.default_rng(20240918)
    V = np.hstack([V, rng.standard_normal((n, pad))])
    prev = None
    for it in range(MAX_REFINE):
        V = V / np.sqrt((V * V * mass[:, None]).sum(axis=0))
        A = V.T @ (K @ V)
        B = V.T @ (mass[:, None] * V)
        theta, Y = eigh(0.5 * (A + A.T), 0.5 * (B + B.T))
        U = V @ Y
        res = _residuals(K, mass, theta, U)
        mu = np.linalg.norm(mass[:, None] * U, axis=0)
        stable = prev is not None and np.all(
            np.abs(theta[:nev] - prev[:nev]) <= tol * (1.0 + np.abs(theta[:nev])))
        if it >= MIN_REFINE and stable and np.all(res[:nev] <= tol * mu[:nev] + 1e-14):
            return theta, U, res
        prev = theta
        V = solve(mass[:, None] * U)
    raise EigenSolverError(f"block refinement did not converge in {MAX_REFINE} sweeps", res[:nev])


def _dense_eigh(K, mass):
    from scipy.linalg import eigh

    s = 1.0 / np.sqrt(mass)
    A = (K.toarray() * s[:, None]) * s[None, :]
    vals, w = eigh(0.5 * (A + A.T))
    return vals, w * s[:, None]


def dense_spectrum(pair: SpectralPair, k: int) -> np.ndarray:
    """Brute-force oracle: eigenvalues of M^-1/2 K M^-1/2 by dense decomposition."""
    vals, _ = _dense_eigh(pair.stiffness, pair.mass_diagonal)
    return vals[: k + 1]


def _mass_orthonormalize(vecs, mass, vals):
    # Gram-Schmidt in the M inner product, within clusters of near-equal values
    vecs = np.array(vecs, dtype=float)
    sign = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])])
    vecs *= np.where(sign == 0, 1.0, sign)
    for j in range(vecs.shape[1]):
        for i in range(j):
            vecs[:, j] -= (vecs[:, i] * mass * vecs[:, j]).sum() * vecs[:, i]
        vecs[:, j] /= np.sqrt((vecs[:, j] ** 2 * mass).sum())
    return vecs


def _residuals(K, mass, vals, vecs):
    return np.linalg.norm(K @ vecs - (mass[:, None] * vecs) * vals[None, :], axis=0)


def eigenvalue_clusters(values, rel_gap: float = CLUSTER_REL_GAP) -> list[dict]:
    """Group consecutive eigenvalues whose relative gap is below ``rel_gap``."""
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return []
    scale = max(float(np.abs(values).max()), np.finfo(float).tiny)
    groups = [[0]]
    for j in range(1, len(values)):
        prev = values[groups[-1][-1]]
        gap = abs(values[j] - prev)
        ref = max(abs(values[j]), abs(prev))
        if gap <= rel_gap * ref or ref <= 1e-8 * scale:
            groups[-1].append(j)
        else:
            groups.append([j])
    return [{"value": float(values[g].mean()), "multiplicity": len(g), "first_index": g[0]}
            for g in groups]


def rayleigh(pair: SpectralPair, f) -> float:
    """``f^T K f / f^T M f``."""
    f = np.asarray(f, dtype=float)
    den = float(f @ (pair.mass_diagonal * f))
    if den <= 0.0:
        raise ZeroDivisionError("Rayleigh quotient of a function with zero mass norm")
    return max(float(f @ (pair.stiffness @ f)), 0.0) / den


def dirichlet_energy(pair: SpectralPair, f) -> float:
    f = np.asarray(f, dtype=float)
    return float(f @ (pair.stiffness @ f))


def mean_curvature_vectors(mesh: TriMesh, pair: SpectralPair | None = None) -> np.ndarray:
    """Discrete mean-curvature vector per vertex, ``H_v = (K X)_v / (2 A_v)``."""
    pair = pair or assemble(mesh)
    return (pair.stiffness @ mesh.vertices) / (2.0 * pair.mass_diagonal[:, None])


def mean_curvature_energy(mesh: TriMesh, pair: SpectralPair | None = None) -> float:
    """``||H||_2^2 = sum_v A_v |H_v|^2``; equals Vol for the unit sphere."""
    pair = pair or assemble(mesh)
    H = mean_curvature_vectors(mesh, pair)
    return float((pair.mass_diagonal * (H * H).sum(axis=1)).sum())
