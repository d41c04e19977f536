"""Closed triangulated surfaces: construction, validation, I/O and generators.

Every surface that enters the numeric pipeline is a :class:`TriMesh`, an
immutable, validated, consistently oriented closed triangle mesh in R^3.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

logger = logging.getLogger(__name__)

#: faces with area below this fraction of (bbox diagonal)^2 are rejected
DEGENERATE_AREA_FRACTION = 1e-12
MAX_SUBDIVISIONS = 9
#: minimum distance of a marching-cubes vertex from a grid node, in cell units
NODE_CLEARANCE = 0.02


class MeshError(ValueError):
    """Base class for mesh rejections.

    ``violations`` lists every violated invariant, one message each.
    """

    kind = "mesh"

    def __init__(self, violations: Sequence[str] | str):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__(f"{self.kind} error: " + "; ".join(self.violations))


class MeshParseError(MeshError):
    kind = "parse"


class MeshTopologyError(MeshError):
    kind = "topology"


class MeshGeometryError(MeshError):
    kind = "geometry"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Validated closed orientable triangle mesh.

    Use :meth:`from_arrays` (or the loaders/generators) rather than the
    constructor; the constructor trusts its inputs.

    Attributes
    ----------
    vertices : (V, 3) float array
    faces : (F, 3) int array, consistently oriented
    face_areas : (F,) float array
    total_area : float
        Vol(M) for a surface.
    n_components : int
        Number of connected components (1 for every generator except
        :func:`combine`).
    meta : dict
        Free-form provenance, e.g. the polynomial degree of an implicit
        surface under ``"degree"``.
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_areas: np.ndarray
    total_area: float
    n_components: int = 1
    meta: dict = field(default_factory=dict)

    ambient_dim = 3

    @classmethod
    def from_arrays(cls, vertices, faces, meta: dict | None = None) -> "TriMesh":
        """Validate raw arrays and build a mesh.

        Raises
        ------
        MeshTopologyError
            Boundary edges, non-manifold edges, inconsistent orientation or an
            impossible Euler characteristic.
        MeshGeometryError
            Non-finite coordinates or faces below the degenerate-area cutoff.
        """
        v = np.asarray(vertices, dtype=np.float64)
        f = np.asarray(faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshGeometryError(f"vertices must have shape (V, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3 or len(f) == 0:
            raise MeshTopologyError(f"faces must have shape (F, 3) with F > 0, got {f.shape}")
        if f.min() < 0 or f.max() >= len(v):
            raise MeshTopologyError("face index out of range")
        if not np.all(np.isfinite(v)):
            raise MeshGeometryError("non-finite vertex coordinates")

        violations = _topology_violations(f, len(v))
        if violations:
            raise MeshTopologyError(violations)

        areas = triangle_areas(v, f)
        diag = float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))
        cutoff = DEGENERATE_AREA_FRACTION * diag * diag
        bad = np.flatnonzero(areas < cutoff)
        if len(bad) or diag == 0.0:
            raise MeshGeometryError(
                [f"zero-area face {int(i)} (area {areas[i]:.3e} < {cutoff:.3e})" for i in bad[:20]]
                or ["all vertices coincide"]
            )

        ncomp = _count_components(f, len(v))
        chi = euler_characteristic(f, len(v))
        if chi % 2 != 0 or chi > 2 * ncomp:
            raise MeshTopologyError(
                f"Euler characteristic {chi} impossible for {ncomp} closed orientable component(s)"
            )
        return cls(
            vertices=_readonly(v),
            faces=_readonly(f),
            face_areas=_readonly(areas),
            total_area=float(areas.sum()),
            n_components=ncomp,
            meta=dict(meta or {}),
        )

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def euler_char(self) -> int:
        return euler_characteristic(self.faces, len(self.vertices))

    @property
    def genus(self) -> int:
        """Total genus, summed over components."""
        return (2 * self.n_components - self.euler_char) // 2

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def bbox_diagonal(self) -> float:
        lo, hi = self.bbox
        return float(np.linalg.norm(hi - lo))

    @property
    def triangles(self) -> np.ndarray:
        """(F, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.faces]

    @property
    def face_normals(self) -> np.ndarray:
        """Unit outward normals (for outward-oriented input)."""
        t = self.triangles
        n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        return n / np.linalg.norm(n, axis=1)[:, None]

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, (E, 2), sorted."""
        return _unique_edges(self.faces)

    def transformed(self, scale: float = 1.0, rotation=None, translation=None) -> "TriMesh":
        """Return ``scale * R @ x + t`` applied to every vertex."""
        v = self.vertices * scale
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=float).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=float)
        return TriMesh.from_arrays(v, self.faces, self.meta)


@dataclass(frozen=True)
class MeshStats:
    area: float
    genus: int
    barycenter: np.ndarray
    bounding_box: tuple[np.ndarray, np.ndarray]
    euler_char: int
    n_components: int = 1


def triangle_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    t = vertices[faces]
    return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)


def _unique_edges(faces: np.ndarray) -> np.ndarray:
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    return np.unique(np.sort(e, axis=1), axis=0)


def euler_characteristic(faces: np.ndarray, n_vertices: int) -> int:
    used = len(np.unique(faces))
    return int(used - len(_unique_edges(faces)) + len(faces))


def _topology_violations(faces: np.ndarray, n_vertices: int) -> list[str]:
    out = []
    if np.any((faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])):
        out.append("face with repeated vertex")
        return out
    directed = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    und = np.sort(directed, axis=1)
    _, inv, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if np.any(counts == 1):
        out.append(f"boundary edge ({int(np.sum(counts == 1))} edges with a single face)")
    if np.any(counts > 2):
        out.append(f"non-manifold edge ({int(np.sum(counts > 2))} edges with more than two faces)")
    # consistent orientation: every interior edge is traversed once in each direction
    forward = directed[:, 0] < directed[:, 1]
    sign_sum = np.bincount(inv, weights=np.where(forward, 1.0, -1.0), minlength=len(counts))
    if np.any((counts == 2) & (sign_sum != 0)):
        out.append("inconsistent orientation")
    unused = n_vertices - len(np.unique(faces))
    if unused:
        out.append(f"{unused} unreferenced vertices")
    return out


def _count_components(faces: np.ndarray, n_vertices: int) -> int:
    rows = np.concatenate([faces[:, 0], faces[:, 1], faces[:, 2]])
    cols = np.concatenate([faces[:, 1], faces[:, 2], faces[:, 0]])
    adj = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_vertices, n_vertices))
    n, _ = sparse.csgraph.connected_components(adj, directed=False)
    return int(n)


# ---------------------------------------------------------------- I/O


def load_mesh(path, format: str | None = None) -> TriMesh:
    """Read an ASCII OFF or OBJ triangle mesh and validate it.

    ``format`` defaults to the file suffix.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).upper()
    text = path.read_text()
    if fmt == "OFF":
        v, f = _parse_off(text)
    elif fmt == "OBJ":
        v, f = _parse_obj(text)
    else:
        raise MeshParseError(f"unsupported format {fmt!r}")
    return TriMesh.from_arrays(v, f, {"source": str(path)})


def _tokens(text: str):
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield line.split()


def _parse_off(text: str):
    lines = list(_tokens(text))
    if not lines or not lines[0][0].endswith("OFF"):
        raise MeshParseError("missing OFF header")
    head = lines[0][1:] if len(lines[0]) > 1 else None
    i = 1
    if not head:
        head, i = lines[1], 2
    try:
        nv, nf = int(head[0]), int(head[1])
        v = np.array([[float(x) for x in ln[:3]] for ln in lines[i:i + nv]])
        flines = lines[i + nv:i + nv + nf]
        if len(v) != nv or len(flines) != nf:
            raise MeshParseError(f"expected {nv} vertices and {nf} faces")
        f = []
        for ln in flines:
            if int(ln[0]) != 3:
                raise MeshParseError(f"non-triangular face with {ln[0]} vertices")
            f.append([int(x) for x in ln[1:4]])
    except (ValueError, IndexError) as exc:
        raise MeshParseError(f"malformed OFF: {exc}") from exc
    return v.reshape(-1, 3), np.array(f, dtype=np.int64).reshape(-1, 3)


def _parse_obj(text: str):
    v, f = [], []
    try:
        for tok in _tokens(text):
            if tok[0] == "v":
                v.append([float(x) for x in tok[1:4]])
            elif tok[0] == "f":
                if len(tok) != 4:
                    raise MeshParseError(f"non-triangular face with {len(tok) - 1} vertices")
                idx = [int(t.split("/")[0]) for t in tok[1:]]
                f.append([i - 1 if i > 0 else len(v) + i for i in idx])
    except ValueError as exc:
        raise MeshParseError(f"malformed OBJ: {exc}") from exc
    return np.array(v, dtype=float).reshape(-1, 3), np.array(f, dtype=np.int64).reshape(-1, 3)


def save_off(mesh: TriMesh, path) -> Path:
    """Write ASCII OFF with 17 significant digits (bit-exact round trip)."""
    path = Path(path)
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} 0"]
    lines += [" ".join(format(float(x), ".17g") for x in p) for p in mesh.vertices]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------- generators


def gen_icosphere(subdivisions: int = 0, radius: float = 1.0) -> TriMesh:
    """Loop-style midpoint subdivision of the icosahedron, projected to the sphere."""
    if not 0 <= subdivisions <= MAX_SUBDIVISIONS:
        raise ValueError(f"subdivisions must be in [0, {MAX_SUBDIVISIONS}]")
    if radius <= 0:
        raise ValueError("radius must be positive")
    t = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    v /= np.linalg.norm(v, axis=1)[:, None]
    for _ in range(subdivisions):
        v, f = _subdivide(v, f)
        v /= np.linalg.norm(v, axis=1)[:, None]
    return TriMesh.from_arrays(v * radius, f, {"generator": "icosphere",
                                               "subdivisions": subdivisions, "radius": radius,
                                               "degree": 2})


def _subdivide(v: np.ndarray, f: np.ndarray):
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    key = np.sort(edges, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    mids = 0.5 * (v[uniq[:, 0]] + v[uniq[:, 1]])
    m = inv.reshape(3, -1).T + len(v)  # midpoint index of edges (01, 12, 20)
    a, b, c = f.T
    m01, m12, m20 = m.T
    nf = np.concatenate([
        np.stack([a, m01, m20], 1), np.stack([b, m12, m01], 1),
        np.stack([c, m20, m12], 1), np.stack([m01, m12, m20], 1),
    ])
    return np.vstack([v, mids]), nf


def gen_ellipsoid(axes=(2.0, 1.0, 1.0), subdivisions: int = 5) -> TriMesh:
    s = gen_icosphere(subdivisions, 1.0)
    meta = {"generator": "ellipsoid", "axes": list(map(float, axes)),
            "subdivisions": subdivisions, "degree": 2}
    return TriMesh.from_arrays(s.vertices * np.asarray(axes, dtype=float), s.faces, meta)


def gen_torus(R: float, r: float, nu: int, nv: int) -> TriMesh:
    """Torus of revolution about the z axis, ``nu`` x ``nv`` quad grid split into triangles."""
    if not (R > r > 0):
        raise ValueError(f"degenerate torus parameters: need R > r > 0, got R={R}, r={r}")
    if nu < 3 or nv < 3:
        raise ValueError("nu and nv must be at least 3")
    u = 2 * np.pi * np.arange(nu) / nu
    w = 2 * np.pi * np.arange(nv) / nv
    U, W = np.meshgrid(u, w, indexing="ij")
    v = np.stack([(R + r * np.cos(W)) * np.cos(U),
                  (R + r * np.cos(W)) * np.sin(U),
                  r * np.sin(W)], axis=-1).reshape(-1, 3)
    i, j = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    i, j = i.ravel(), j.ravel()
    p00 = i * nv + j
    p10 = ((i + 1) % nu) * nv + j
    p01 = i * nv + (j + 1) % nv
    p11 = ((i + 1) % nu) * nv + (j + 1) % nv
    f = np.concatenate([np.stack([p00, p10, p11], 1), np.stack([p00, p11, p01], 1)])
    return TriMesh.from_arrays(v, f, {"generator": "torus", "R": R, "r": r,
                                      "nu": nu, "nv": nv, "degree": 4})


def combine(*meshes: TriMesh) -> TriMesh:
    """Disjoint union of meshes (multi-component surface)."""
    vs, fs, off = [], [], 0
    for m in meshes:
        vs.append(m.vertices)
        fs.append(m.faces + off)
        off += m.n_vertices
    return TriMesh.from_arrays(np.vstack(vs), np.vstack(fs), {"generator": "combine"})


def two_spheres(separation: float = 3.0, subdivisions: int = 3) -> TriMesh:
    """Two unit spheres centred at the origin and at ``separation * e_z``."""
    s = gen_icosphere(subdivisions, 1.0)
    return combine(s, s.transformed(translation=(0.0, 0.0, separation)))


# ---------------------------------------------------------------- implicit surfaces


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial in x, y, z with a numpy evaluator."""

    expr: str
    degree: int
    func: Callable = field(repr=False, compare=False)

    @classmethod
    def parse(cls, text: str) -> "Polynomial":
        import sympy

        x, y, z = sympy.symbols("x y z")
        try:
            e = sympy.sympify(text.replace("^", "**"), locals={"x": x, "y": y, "z": z})
            poly = sympy.Poly(sympy.expand(e), x, y, z)
        except (sympy.SympifyError, sympy.PolynomialError, TypeError) as exc:
            raise MeshParseError(f"not a polynomial in x, y, z: {text!r}") from exc
        fn = sympy.lambdify((x, y, z), poly.as_expr(), "numpy")
        return cls(str(poly.as_expr()), int(poly.total_degree()), fn)

    def __call__(self, x, y, z):
        return np.broadcast_to(self.func(x, y, z), np.broadcast(x, y, z).shape)


def gen_implicit(poly, bbox, resolution: int = 96) -> TriMesh:
    """Mesh the zero set of ``poly`` inside ``bbox`` by marching cubes.

    Parameters
    ----------
    poly : Polynomial or str
    bbox : sequence
        ``(lo, hi)`` pair of 3-vectors, or a scalar ``a`` for ``[-a, a]^3``.
    resolution : int
        Number of grid samples along the longest box side.

    Raises
    ------
    MeshError
        If the zero set is empty, touches the box, or the surface is not a
        valid closed manifold.
    """
    from skimage.measure import marching_cubes

    if isinstance(poly, str):
        poly = Polynomial.parse(poly)
    lo, hi = _as_box(bbox)
    ext = hi - lo
    h = float(ext.max()) / (resolution - 1)
    counts = np.maximum(np.ceil(ext / h).astype(int) + 1, 3)
    # irrational sub-cell offset keeps grid nodes off the zero set
    shift = h * np.array([0.1234567, 0.2345678, 0.3456789]) * 1e-3
    axes = [lo[k] + shift[k] + h * np.arange(counts[k]) for k in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    vol = np.asarray(poly(X, Y, Z), dtype=np.float64)

    inside = vol < 0
    if inside.all() or not inside.any():
        raise MeshGeometryError("empty zero set inside bbox")
    faces_of_box = [vol[0], vol[-1], vol[:, 0], vol[:, -1], vol[:, :, 0], vol[:, :, -1]]
    if any((s.min() <= 0) for s in faces_of_box):
        raise MeshGeometryError("zero set touches bbox")

    vol = _keep_off_nodes(vol, NODE_CLEARANCE)
    verts, faces, _, _ = marching_cubes(vol, level=0.0, spacing=(h, h, h),
                                        method="lewiner", allow_degenerate=False)
    verts = verts + np.array([a[0] for a in axes])
    faces = faces.astype(np.int64)
    verts, faces = _drop_unused(verts, faces)
    meta = {"generator": "implicit", "poly": poly.expr, "degree": poly.degree,
            "resolution": resolution}
    try:
        return TriMesh.from_arrays(verts, faces, meta)
    except MeshError as exc:
        raise type(exc)(["non-manifold marching-cubes output after repair"] + exc.violations) from exc


def _keep_off_nodes(vol: np.ndarray, clearance: float) -> np.ndarray:
    """Push near-zero samples away from zero, keeping their sign.

    After this every edge crossing lies at least ``clearance`` (in units of the
    edge length) from both grid nodes, which rules out sliver triangles.
    """
    g = np.zeros_like(vol)
    for ax in range(3):
        d = np.abs(np.diff(vol, axis=ax))
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax], hi[ax] = slice(0, -1), slice(1, None)
        g[tuple(lo)] = np.maximum(g[tuple(lo)], d)
        g[tuple(hi)] = np.maximum(g[tuple(hi)], d)
    floor = clearance * g
    small = np.abs(vol) < floor
    out = vol.copy()
    out[small] = np.where(vol[small] < 0, -floor[small], floor[small])
    return out


def _drop_unused(v: np.ndarray, f: np.ndarray):
    used = np.unique(f)
    remap = np.full(len(v), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return v[used], remap[f]


def _as_box(bbox):
    if np.isscalar(bbox):
        a = float(bbox)
        return np.full(3, -a), np.full(3, a)
    lo, hi = (np.asarray(b, dtype=float) for b in bbox)
    if np.any(hi <= lo):
        raise ValueError("bbox must satisfy lo < hi")
    return lo, hi


def implicit_torus_poly(R: float = 2.0, r: float = 1.0) -> str:
    return f"(x**2 + y**2 + z**2 + {R * R - r * r})**2 - {4 * R * R}*(x**2 + y**2)"


# thickened lemniscate of Bernoulli: a figure-eight tube, genus 2
GENUS2_POLY = "((x**2 + y**2)**2 - x**2 + y**2)**2 + z**2 - 0.03"


def gen_genus2(resolution: int = 200, seed: int | None = None) -> TriMesh:
    """Genus-2 surface; with ``seed`` it is also randomly rotated and offset."""
    m = gen_implicit(GENUS2_POLY, ((-1.35, -0.65, -0.25), (1.35, 0.65, 0.25)), resolution)
    if seed is None:
        return m
    rng = np.random.default_rng(seed)
    rot = random_rotation(rng)
    out = m.transformed(rotation=rot, translation=rng.normal(size=3))
    return TriMesh.from_arrays(out.vertices, out.faces, dict(m.meta, seed=seed))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed rotation in SO(3) (QR of a Gaussian matrix)."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


# ---------------------------------------------------------------- stats and normalization


def mesh_stats(mesh: TriMesh) -> MeshStats:
    return MeshStats(
        area=mesh.total_area,
        genus=mesh.genus,
        barycenter=barycenter(mesh),
        bounding_box=mesh.bbox,
        euler_char=mesh.euler_char,
        n_components=mesh.n_components,
    )


def barycenter(mesh: TriMesh) -> np.ndarray:
    """Area-weighted centroid; equals the lumped-mass vertex barycenter."""
    c = mesh.triangles.mean(axis=1)
    return (mesh.face_areas[:, None] * c).sum(axis=0) / mesh.total_area


def recenter(mesh: TriMesh) -> TriMesh:
    """Translate so the barycenter is at the origin."""
    return mesh.transformed(translation=-barycenter(mesh))


def recenter_unit_area(mesh: TriMesh) -> TriMesh:
    """Translate the barycenter to the origin and dilate to unit area."""
    s = 1.0 / math.sqrt(mesh.total_area)
    out = mesh.transformed(scale=s, translation=-s * barycenter(mesh))
    # one more pass removes the residual O(eps) area error of the dilation
    s2 = 1.0 / math.sqrt(out.total_area)
    if s2 != 1.0:
        out = out.transformed(scale=s2)
    return out
