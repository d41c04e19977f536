"""Extrinsic invariants of a surface: intersection index, volume concentration,
projection (shadow) areas and their Grassmannian mean, moment of inertia.
"""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .mesh import TriMesh, barycenter

DEFAULT_EPS = 1e-9
DEFAULT_GRID = 1024
BARYCENTER_TOL = 1e-9


@dataclass
class GeometricInvariants:
    """Estimated invariants of one mesh, with sampling metadata."""

    i_hat: int
    i_histogram: dict
    L_hat: float
    L_witness: tuple
    moment_of_inertia: float
    sample_counts: dict = field(default_factory=dict)
    seed: int = 0
    degree_bound: int | None = None

    @property
    def degree_agrees(self) -> bool | None:
        if self.degree_bound is None:
            return None
        return self.i_hat <= self.degree_bound

    def to_dict(self) -> dict:
        d = asdict(self)
        d["i_histogram"] = {str(k): v for k, v in sorted(self.i_histogram.items())}
        d["L_witness"] = {"center": list(map(float, self.L_witness[0])),
                          "radius": float(self.L_witness[1])}
        d["degree_agrees"] = self.degree_agrees
        return d


@dataclass
class ShadowResult:
    direction: np.ndarray
    shadow_area: float
    signed_mass: float
    grid_resolution: int
    error_bound: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["direction"] = [float(x) for x in self.direction]
        return d


@dataclass
class GrassmannResult:
    avg_shadow: float
    stderr: float
    mc_error: float
    lemma_rhs: float
    passed: bool
    i_hat: int
    n_planes: int
    seed: int
    mean_error_bound: float
    shadows: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shadows"] = [float(x) for x in self.shadows]
        return d


@functools.lru_cache(maxsize=8)
def bvh(mesh: TriMesh) -> _kernels.BVH:
    return _kernels.build_bvh(mesh.triangles, mesh.face_areas)


# ---------------------------------------------------------------- intersection index


def sample_lines(mesh: TriMesh, n: int, rng: np.random.Generator):
    """Uniform directions; offsets uniform in the projected bounding disk."""
    lo, hi = mesh.bbox
    center = 0.5 * (lo + hi)
    radius = 0.5 * float(np.linalg.norm(hi - lo))
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    # orthonormal frame of the plane orthogonal to each direction
    helper = np.where(np.abs(d[:, [0]]) < 0.9, [[1.0, 0, 0]], [[0, 1.0, 0]])
    e1 = np.cross(d, helper)
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(d, e1)
    rad = radius * np.sqrt(rng.random(n))
    ang = 2 * np.pi * rng.random(n)
    o = center + (rad * np.cos(ang))[:, None] * e1 + (rad * np.sin(ang))[:, None] * e2
    return o, d


def crossing_counts(mesh: TriMesh, origins, dirs, eps: float | None = None,
                    eps_tan: float = DEFAULT_EPS) -> np.ndarray:
    """Crossing count per line; -1 for rejected (non-generic) lines."""
    if eps is None:
        eps = DEFAULT_EPS * mesh.bbox_diagonal
    b = bvh(mesh)
    return _kernels.cast_lines(mesh.triangles, b.lo, b.hi, b.left, b.right, b.start, b.count,
                               b.order, np.ascontiguousarray(origins, dtype=float),
                               np.ascontiguousarray(dirs, dtype=float), eps, eps_tan)


def intersection_index(mesh: TriMesh, n_lines: int = 10_000, seed: int = 0,
                       eps: float | None = None, max_rounds: int = 50):
    """Max transversal crossing count over ``n_lines`` accepted random lines.

    Returns
    -------
    i_hat : int
        Certified lower bound on the intersection index.
    histogram : dict
        crossing count -> number of accepted lines.
    """
    if n_lines < 1:
        raise ValueError("n_lines must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    counts = []
    need = n_lines
    for _ in range(max_rounds):
        o, d = sample_lines(mesh, need, rng)
        c = crossing_counts(mesh, o, d, eps)
        ok = c[c >= 0]
        counts.append(ok)
        need -= len(ok)
        if need <= 0:
            break
    else:
        raise RuntimeError(f"only {n_lines - need} of {n_lines} lines accepted; eps too large?")
    allc = np.concatenate(counts)[:n_lines]
    vals, freq = np.unique(allc, return_counts=True)
    hist = {int(v): int(f) for v, f in zip(vals, freq)}
    return int(allc.max()), hist


# ---------------------------------------------------------------- ball areas and concentration


@functools.lru_cache(maxsize=8)
def _tri_spheres(mesh):
    return _kernels.triangle_spheres(mesh.triangles)


def ball_areas(mesh: TriMesh, centers, radii) -> np.ndarray:
    """``area(M cap B(c, r))`` for each center (rows) and each radius (columns)."""
    radii = np.asarray(radii, dtype=float)
    order = np.argsort(radii)
    b = bvh(mesh)
    c = np.ascontiguousarray(np.atleast_2d(centers), dtype=float)
    tc, tr = _tri_spheres(mesh)
    out = _kernels.ball_areas(mesh.triangles, mesh.face_areas, tc, tr, b.lo, b.hi, b.left,
                              b.right, b.start, b.count, b.area, b.order, c, radii[order])
    res = np.empty_like(out)
    res[:, order] = out
    return res


def ball_area(mesh: TriMesh, center, r: float) -> float:
    if r <= 0:
        return 0.0
    return float(ball_areas(mesh, center, [r])[0, 0])


def surface_samples(mesh: TriMesh, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points uniformly distributed on the surface."""
    f = rng.choice(mesh.n_faces, size=n, p=mesh.face_areas / mesh.total_area)
    u, v = rng.random(n), rng.random(n)
    flip = u + v > 1
    u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
    t = mesh.triangles[f]
    return t[:, 0] + u[:, None] * (t[:, 1] - t[:, 0]) + v[:, None] * (t[:, 2] - t[:, 0])


def concentration(mesh: TriMesh, n_centers: int = 256, n_radii: int = 24, seed: int = 0):
    """Lower estimate of the volume-concentration constant, ``max area(B(x,r)) / r^2``.

    Centers are all vertices, the barycenter, the origin and ``n_centers``
    random surface points; radii are geometric between diag/1000 and diag.
    For each center the radius that just encloses the whole mesh is probed too.

    Returns
    -------
    L_hat : float
    witness : (center, radius)
    """
    if n_centers < 1 or n_radii < 1:
        raise ValueError("n_centers and n_radii must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    diag = mesh.bbox_diagonal
    radii = np.geomspace(diag / 1e3, diag, n_radii)
    special = np.vstack([barycenter(mesh), np.zeros(3)])
    centers = np.vstack([mesh.vertices, special, surface_samples(mesh, n_centers, rng)])
    # enclosing ball of each special center: whole surface inside; this also
    # seeds the running maximum so that most (center, radius) pairs are pruned
    best, wc, wr = -np.inf, None, None
    for c in special:
        R = float(np.linalg.norm(mesh.vertices - c, axis=1).max())
        val = mesh.total_area / (R * R)
        if val > best:
            best, wc, wr = val, c, R
    # random visiting order lifts the running maximum early (better pruning)
    centers = centers[rng.permutation(len(centers))]
    b = bvh(mesh)
    tc, tr = _tri_spheres(mesh)
    val, ci, ri = _kernels.max_ball_ratio(mesh.triangles, mesh.face_areas, tc, tr, b.lo, b.hi,
                                          b.left, b.right, b.start, b.count, b.area, b.order,
                                          np.ascontiguousarray(centers), radii, float(best))
    if ci >= 0:
        best, wc, wr = float(val), centers[ci], float(radii[ri])
    return float(best), (np.asarray(wc, dtype=float), float(wr))


# ---------------------------------------------------------------- shadows


def _plane_basis(direction):
    d = np.asarray(direction, dtype=float)
    nrm = float(np.linalg.norm(d))
    if nrm == 0.0 or not np.isfinite(nrm):
        raise ValueError("degenerate direction")
    d = d / nrm
    helper = np.array([1.0, 0, 0]) if abs(d[0]) < 0.9 else np.array([0, 1.0, 0])
    e1 = np.cross(d, helper)
    e1 /= np.linalg.norm(e1)
    return d, e1, np.cross(d, e1)


def shadow(mesh: TriMesh, direction, grid_resolution: int = DEFAULT_GRID) -> ShadowResult:
    """Area of the projection onto the plane orthogonal to ``direction``.

    ``shadow_area`` counts each covered point once (cell-centre raster);
    ``signed_mass`` is the exact projected area counted with multiplicity.
    ``error_bound`` is (number of cells on the raster outline) x cell area.
    """
    if grid_resolution < 64:
        raise ValueError("grid_resolution must be at least 64")
    d, e1, e2 = _plane_basis(direction)
    p2 = np.column_stack([mesh.vertices @ e1, mesh.vertices @ e2])
    signed = float(np.abs(mesh.face_areas * (mesh.face_normals @ d)).sum())
    lo = p2.min(axis=0)
    side = float((p2.max(axis=0) - lo).max()) * (1 + 1e-9)
    cell = side / grid_resolution
    grid = _kernels.raster_cover(np.ascontiguousarray(p2), mesh.faces, float(lo[0]), float(lo[1]),
                                 cell, grid_resolution)
    area = float(grid.sum()) * cell * cell
    edge = np.zeros_like(grid)
    edge[1:, :] |= grid[1:, :] != grid[:-1, :]
    edge[:-1, :] |= grid[1:, :] != grid[:-1, :]
    edge[:, 1:] |= grid[:, 1:] != grid[:, :-1]
    edge[:, :-1] |= grid[:, 1:] != grid[:, :-1]
    err = float(edge.sum()) * cell * cell
    return ShadowResult(d, area, signed, grid_resolution, err)


def haar_directions(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform unit normals; a uniform 2-plane in R^3 is the complement of one."""
    d = rng.standard_normal((n, 3))
    return d / np.linalg.norm(d, axis=1)[:, None]


def lemma_rhs(total_area: float, i_hat: int, m: int = 2) -> float:
    """``(2 / i) * Vol(B^m) / Vol(S^m) * Vol(M)``."""
    from .bounds import vol_ball, vol_sphere

    return 2.0 / i_hat * vol_ball(m) / vol_sphere(m) * total_area


def grassmann_average(mesh: TriMesh, n_planes: int = 200, seed: int = 0,
                      grid_resolution: int = DEFAULT_GRID, i_hat: int | None = None,
                      n_lines: int = 10_000) -> GrassmannResult:
    """Monte Carlo mean of shadow areas over Haar-random planes, checked
    against the projection lower bound.

    ``passed`` is ``avg >= rhs * (1 - mc_error)`` with ``mc_error`` the
    relative three-standard-error half width.
    """
    if n_planes < 10:
        raise ValueError("n_planes must be at least 10")
    if i_hat is None:
        i_hat, _ = intersection_index(mesh, n_lines, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    dirs = haar_directions(n_planes, rng)
    res = [shadow(mesh, d, grid_resolution) for d in dirs]
    s = np.array([r.shadow_area for r in res])
    avg = float(s.mean())
    se = float(s.std(ddof=1) / math.sqrt(n_planes))
    mc = 3.0 * se / avg if avg > 0 else math.inf
    rhs = lemma_rhs(mesh.total_area, i_hat)
    return GrassmannResult(avg, se, mc, rhs, bool(avg >= rhs * (1 - mc)), int(i_hat),
                           n_planes, seed, float(np.mean([r.error_bound for r in res])), s)


# ---------------------------------------------------------------- moment of inertia


def moment_of_inertia(mesh: TriMesh, check_centered: bool = True) -> float:
    """``int_M |x|^2`` by the exact quadratic rule on each flat triangle.

    Raises ValueError if the barycenter is not at the origin.
    """
    if check_centered:
        b = barycenter(mesh)
        if float(np.linalg.norm(b)) > BARYCENTER_TOL * max(mesh.bbox_diagonal, 1.0):
            raise ValueError(f"barycenter not at origin: {b.tolist()}")
    t = mesh.triangles
    sq = (t * t).sum(axis=2).sum(axis=1)
    s = t.sum(axis=1)
    # int_T |x|^2 = A/12 (sum |v_i|^2 + |sum v_i|^2)
    return float((mesh.face_areas / 12.0 * (sq + (s * s).sum(axis=1))).sum())


def lumped_moment(mesh: TriMesh, mass_diagonal) -> float:
    return float((np.asarray(mass_diagonal) * (mesh.vertices ** 2).sum(axis=1)).sum())


def eqint_lower_bound(total_area: float, i_hat: int, m: int = 2) -> float:
    """Lower bound on the moment of inertia implied by the projection argument."""
    from .bounds import vol_sphere

    ball_second_moment = vol_sphere(m - 1) / (m + 2)
    return 2.0 * (2.0 * total_area / (i_hat * vol_sphere(m))) ** (1 + 2.0 / m) * ball_second_moment


# ---------------------------------------------------------------- rearrangement


@dataclass(frozen=True)
class RearrangementResult:
    integral_omega: float
    integral_star: float
    discretization_bound: float
    passed: bool


def rearrangement_check(centers, cell_area: float, cell_size: float | None = None) -> RearrangementResult:
    """Compare ``int_Omega |x|^2`` with the same integral over the centred disk of equal area.

    ``centers`` are cell centres of a planar cell decomposition of Omega, all
    cells of area ``cell_area`` (side ``cell_size``, default ``sqrt(cell_area)``).
    """
    c = np.asarray(centers, dtype=float)
    if c.size == 0:
        raise ValueError("empty cell set")
    c = c.reshape(-1, 2)
    h = math.sqrt(cell_area) if cell_size is None else cell_size
    area = len(c) * cell_area
    d2 = (c * c).sum(axis=1)
    omega = float(d2.sum() * cell_area)
    rho = math.sqrt(area / math.pi)
    star = 2 * math.pi * rho ** 4 / 4
    # midpoint rule on a square cell: |int - h^2 f(c)| = h^4/6 per cell
    bound = len(c) * h ** 4 / 6.0
    return RearrangementResult(omega, star, bound, bool(omega >= star - bound))


def grid_cells(indicator, extent: float, n: int):
    """Cell centres of an ``n x n`` grid over ``[-extent, extent]^2`` where ``indicator`` holds."""
    h = 2 * extent / n
    xs = -extent + h * (np.arange(n) + 0.5)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    mask = indicator(X, Y)
    return np.column_stack([X[mask], Y[mask]]), h * h


# ---------------------------------------------------------------- bundle


def estimate_invariants(mesh: TriMesh, n_lines: int = 10_000, n_centers: int = 256,
                        n_radii: int = 24, seed: int = 0) -> GeometricInvariants:
    """All invariants of a barycenter-centred mesh, reproducible from ``seed``."""
    i_hat, hist = intersection_index(mesh, n_lines, seed)
    L, wit = concentration(mesh, n_centers, n_radii, seed)
    mom = moment_of_inertia(mesh)
    deg = mesh.meta.get("degree")
    return GeometricInvariants(
        i_hat=i_hat, i_histogram=hist, L_hat=L, L_witness=wit, moment_of_inertia=mom,
        sample_counts={"lines": n_lines, "centers": n_centers, "radii": n_radii},
        seed=seed, degree_bound=int(deg) if deg is not None else None,
    )
