"""Compiled inner loops: BVH, line casting, ball-surface area, triangle raster."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

LEAF_SIZE = 4
#: straddling nodes below LUMP * best * r^2 stay closed in the bounding pass
LUMP = 0.02


@dataclass(frozen=True, eq=False)
class BVH:
    """Flat axis-aligned bounding-volume hierarchy over mesh triangles.

    Children of an internal node are ``left[i]`` and ``right[i]``; leaves have
    ``left[i] == -1`` and own ``order[start[i]:start[i] + count[i]]``.
    """

    lo: np.ndarray
    hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    area: np.ndarray
    order: np.ndarray


def build_bvh(tris: np.ndarray, areas: np.ndarray) -> BVH:
    """Median split along the widest centroid axis."""
    n = len(tris)
    cent = tris.mean(axis=1)
    tlo = tris.min(axis=1)
    thi = tris.max(axis=1)
    order = np.arange(n)
    cap = 2 * n + 1
    lo = np.zeros((cap, 3))
    hi = np.zeros((cap, 3))
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    count = np.zeros(cap, dtype=np.int64)
    area = np.zeros(cap)
    nodes = 1
    todo = [(0, 0, n)]
    while todo:
        node, s, e = todo.pop()
        idx = order[s:e]
        lo[node] = tlo[idx].min(axis=0)
        hi[node] = thi[idx].max(axis=0)
        area[node] = areas[idx].sum()
        if e - s <= LEAF_SIZE:
            start[node], count[node] = s, e - s
            continue
        c = cent[idx]
        ax = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        mid = (e - s) // 2
        part = np.argpartition(c[:, ax], mid, kind="introselect")
        order[s:e] = idx[part]
        left[node], right[node] = nodes, nodes + 1
        nodes += 2
        todo.append((left[node], s, s + mid))
        todo.append((right[node], s + mid, e))
    return BVH(lo[:nodes], hi[:nodes], left[:nodes], right[:nodes],
               start[:nodes], count[:nodes], area[:nodes], order)


# ---------------------------------------------------------------- line casting


@numba.njit(cache=True)
def _slab_hit(o, d, lo, hi):
    tmin = -np.inf
    tmax = np.inf
    for k in range(3):
        if abs(d[k]) < 1e-300:
            if o[k] < lo[k] or o[k] > hi[k]:
                return False
        else:
            t1 = (lo[k] - o[k]) / d[k]
            t2 = (hi[k] - o[k]) / d[k]
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tmin:
                tmin = t1
            if t2 < tmax:
                tmax = t2
            if tmin > tmax:
                return False
    return True


@numba.njit(cache=True)
def cast_lines(tris, lo, hi, left, right, start, count, order, origins, dirs, eps, eps_tan):
    """Count transversal crossings of each full line with the mesh.

    Returns counts (n,), with -1 marking a rejected line (a hit within ``eps``
    of a triangle edge, or ``|dir . n| < eps_tan`` at a hit).
    """
    n = origins.shape[0]
    out = np.zeros(n, dtype=np.int64)
    stack = np.empty(128, dtype=np.int64)
    for li in range(n):
        o = origins[li]
        d = dirs[li]
        hits = 0
        rejected = False
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0 and not rejected:
            sp -= 1
            node = stack[sp]
            if not _slab_hit(o, d, lo[node], hi[node]):
                continue
            if left[node] >= 0:
                stack[sp] = left[node]
                stack[sp + 1] = right[node]
                sp += 2
                continue
            for q in range(start[node], start[node] + count[node]):
                t = order[q]
                a = tris[t, 0]
                e1 = tris[t, 1] - a
                e2 = tris[t, 2] - a
                p = np.cross(d, e2)
                det = e1[0] * p[0] + e1[1] * p[1] + e1[2] * p[2]
                nrm = np.cross(e1, e2)
                nlen = math.sqrt(nrm[0] ** 2 + nrm[1] ** 2 + nrm[2] ** 2)
                if det == 0.0:
                    continue
                s = o - a
                u = (s[0] * p[0] + s[1] * p[1] + s[2] * p[2]) / det
                qv = np.cross(s, e1)
                v = (d[0] * qv[0] + d[1] * qv[1] + d[2] * qv[2]) / det
                w = 1.0 - u - v
                # distance from the hit to each edge: barycentric * altitude
                l0 = math.sqrt((e2[0] - e1[0]) ** 2 + (e2[1] - e1[1]) ** 2 + (e2[2] - e1[2]) ** 2)
                l1 = math.sqrt(e2[0] ** 2 + e2[1] ** 2 + e2[2] ** 2)
                l2 = math.sqrt(e1[0] ** 2 + e1[1] ** 2 + e1[2] ** 2)
                dw = w * nlen / l0
                du = u * nlen / l1
                dv = v * nlen / l2
                if dw < -eps or du < -eps or dv < -eps:
                    continue
                if dw < eps or du < eps or dv < eps:
                    rejected = True
                    break
                if abs(det) / nlen < eps_tan:
                    rejected = True
                    break
                hits += 1
        out[li] = -1 if rejected else hits
    return out


# ---------------------------------------------------------------- ball areas


@numba.njit(cache=True)
def _seg_area(ax, ay, bx, by, R):
    """Signed area of disk(0, R) intersected with triangle (0, A, B)."""
    dx = bx - ax
    dy = by - ay
    qa = dx * dx + dy * dy
    if qa == 0.0:
        return 0.0
    qb = ax * dx + ay * dy
    qc = ax * ax + ay * ay - R * R
    r2 = R * R
    if qc <= 0.0 and (bx * bx + by * by) <= r2:
        return 0.5 * (ax * by - ay * bx)
    # breakpoints 0 <= s1 <= s2 <= 1 where the segment crosses the circle
    s1 = 0.0
    s2 = 0.0
    disc = qb * qb - qa * qc
    if disc > 0.0:
        sq = math.sqrt(disc)
        s1 = min(max((-qb - sq) / qa, 0.0), 1.0)
        s2 = min(max((-qb + sq) / qa, 0.0), 1.0)
    total = 0.0
    for i in range(3):
        if i == 0:
            t0, t1 = 0.0, s1
        elif i == 1:
            t0, t1 = s1, s2
        else:
            t0, t1 = s2, 1.0
        if t1 <= t0:
            continue
        px = ax + t0 * dx
        py = ay + t0 * dy
        qx = ax + t1 * dx
        qy = ay + t1 * dy
        tm = 0.5 * (t0 + t1)
        mx = ax + tm * dx
        my = ay + tm * dy
        cr = px * qy - py * qx
        if mx * mx + my * my <= r2:
            total += 0.5 * cr
        else:
            total += 0.5 * R * R * math.atan2(cr, px * qx + py * qy)
    return total


@numba.njit(cache=True)
def tri_ball_area(a, b, c, x, r):
    """Exact area of triangle abc (in R^3) inside the closed ball B(x, r)."""
    e1x, e1y, e1z = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    e2x, e2y, e2z = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    nx = e1y * e2z - e1z * e2y
    ny = e1z * e2x - e1x * e2z
    nz = e1x * e2y - e1y * e2x
    nl = math.sqrt(nx * nx + ny * ny + nz * nz)
    nx /= nl
    ny /= nl
    nz /= nl
    dpl = (a[0] - x[0]) * nx + (a[1] - x[1]) * ny + (a[2] - x[2]) * nz
    if abs(dpl) >= r:
        return 0.0
    rho = math.sqrt(r * r - dpl * dpl)
    # in-plane frame: u along e1, w = n x u; origin at the projection of x
    l1 = math.sqrt(e1x * e1x + e1y * e1y + e1z * e1z)
    ux, uy, uz = e1x / l1, e1y / l1, e1z / l1
    wx = ny * uz - nz * uy
    wy = nz * ux - nx * uz
    wz = nx * uy - ny * ux
    px, py, pz = x[0] + dpl * nx, x[1] + dpl * ny, x[2] + dpl * nz
    qx, qy, qz = a[0] - px, a[1] - py, a[2] - pz
    ax = qx * ux + qy * uy + qz * uz
    ay = qx * wx + qy * wy + qz * wz
    bx = ax + l1
    by = ay
    cx = ax + e2x * ux + e2y * uy + e2z * uz
    cy = ay + e2x * wx + e2y * wy + e2z * wz
    s = _seg_area(ax, ay, bx, by, rho) + _seg_area(bx, by, cx, cy, rho) + _seg_area(cx, cy, ax, ay, rho)
    return abs(s)


@numba.njit(cache=True)
def _box_dists(x, lo, hi):
    dmin = 0.0
    dmax = 0.0
    for k in range(3):
        a = lo[k] - x[k]
        b = x[k] - hi[k]
        g = max(a, b, 0.0)
        dmin += g * g
        f = max(abs(lo[k] - x[k]), abs(hi[k] - x[k]))
        dmax += f * f
    return math.sqrt(dmin), math.sqrt(dmax)


@numba.njit(cache=True)
def _first_geq(radii, v):
    # smallest j with radii[j] >= v (len(radii) if none)
    lo = 0
    hi = radii.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if radii[mid] >= v:
            hi = mid
        else:
            lo = mid + 1
    return lo


@numba.njit(cache=True)
def _center_pass(x, tris, areas, tcent, trad, lo, hi, left, right, start, count, node_area,
                 order, radii, stack, full, part, exact, row, lump):
    """One traversal for center ``x``.

    ``full[j]`` collects area certainly inside B(x, r_j) but not B(x, r_{j-1});
    ``part`` is a difference array of area that straddles a sphere.  With
    ``exact`` the straddling triangles are clipped into ``row`` instead.
    Without it, straddling nodes of area below ``lump * r^2`` are not opened.
    """
    nr = radii.shape[0]
    rmax = radii[nr - 1]
    full[:] = 0.0
    part[:] = 0.0
    sp = 1
    stack[0] = 0
    while sp > 0:
        sp -= 1
        node = stack[sp]
        dmin, dmax = _box_dists(x, lo[node], hi[node])
        if dmin > rmax:
            continue
        jlo = _first_geq(radii, dmin)
        jfull = _first_geq(radii, dmax)
        if jlo >= jfull:
            # no radius falls inside [dmin, dmax): all-or-nothing per radius
            full[jfull] += node_area[node]
            continue
        if not exact and node_area[node] <= lump * radii[jlo] * radii[jlo]:
            full[jfull] += node_area[node]
            part[jlo] += node_area[node]
            part[jfull] -= node_area[node]
            continue
        if left[node] >= 0:
            stack[sp] = left[node]
            stack[sp + 1] = right[node]
            sp += 2
            continue
        for q in range(start[node], start[node] + count[node]):
            t = order[q]
            tmax = 0.0
            for v in range(3):
                dd = math.sqrt((tris[t, v, 0] - x[0]) ** 2 + (tris[t, v, 1] - x[1]) ** 2
                               + (tris[t, v, 2] - x[2]) ** 2)
                tmax = max(tmax, dd)
            tmin = math.sqrt((tcent[t, 0] - x[0]) ** 2 + (tcent[t, 1] - x[1]) ** 2
                             + (tcent[t, 2] - x[2]) ** 2) - trad[t]
            j0 = _first_geq(radii, tmin)
            j1 = _first_geq(radii, tmax)
            full[j1] += areas[t]
            if j0 < j1:
                if exact:
                    for j in range(j0, j1):
                        row[j] += tri_ball_area(tris[t, 0], tris[t, 1], tris[t, 2], x, radii[j])
                else:
                    part[j0] += areas[t]
                    part[j1] -= areas[t]


def triangle_spheres(tris):
    """Centroid and enclosing radius about it, per triangle."""
    cent = tris.mean(axis=1)
    rad = np.sqrt(((tris - cent[:, None, :]) ** 2).sum(axis=2)).max(axis=1)
    return cent, rad


@numba.njit(cache=True)
def ball_areas(tris, areas, tcent, trad, lo, hi, left, right, start, count, node_area, order,
               centers, radii):
    """Surface area inside B(c, r) for every center and every (sorted) radius."""
    nc = centers.shape[0]
    nr = radii.shape[0]
    out = np.zeros((nc, nr))
    full = np.zeros(nr + 1)
    part = np.zeros(nr + 1)
    stack = np.empty(128, dtype=np.int64)
    for ci in range(nc):
        row = out[ci]
        _center_pass(centers[ci], tris, areas, tcent, trad, lo, hi, left, right, start, count,
                     node_area, order, radii, stack, full, part, True, row, 0.0)
        acc = 0.0
        for j in range(nr):
            acc += full[j]
            row[j] += acc
    return out


@numba.njit(cache=True)
def max_ball_ratio(tris, areas, tcent, trad, lo, hi, left, right, start, count, node_area, order,
                   centers, radii, best):
    """``max area(B(c, r)) / r^2`` over all centers and radii, at least ``best``.

    A clip-free pass bounds each ratio from above; only radii whose bound
    beats the running maximum are evaluated exactly.  Returns
    ``(best, center_index, radius_index)`` with -1 indices if nothing beat
    the initial value.
    """
    nc = centers.shape[0]
    nr = radii.shape[0]
    full = np.zeros(nr + 1)
    part = np.zeros(nr + 1)
    stack = np.empty(128, dtype=np.int64)
    upper = np.zeros(nr)
    bi = -1
    bj = -1
    for ci in range(nc):
        x = centers[ci]
        _center_pass(x, tris, areas, tcent, trad, lo, hi, left, right, start, count,
                     node_area, order, radii, stack, full, part, False, upper, LUMP * best)
        acc = 0.0
        pacc = 0.0
        m = 0
        for j in range(nr):
            acc += full[j]
            pacc += part[j]
            upper[j] = acc + pacc
            if upper[j] > best * radii[j] * radii[j]:
                m += 1
        if m == 0:
            continue
        sub = np.empty(m)
        idx = np.empty(m, dtype=np.int64)
        m = 0
        for j in range(nr):
            if upper[j] > best * radii[j] * radii[j]:
                sub[m] = radii[j]
                idx[m] = j
                m += 1
        row = np.zeros(m)
        fsub = np.zeros(m + 1)
        psub = np.zeros(m + 1)
        _center_pass(x, tris, areas, tcent, trad, lo, hi, left, right, start, count,
                     node_area, order, sub, stack, fsub, psub, True, row, 0.0)
        acc = 0.0
        for j in range(m):
            acc += fsub[j]
            val = (row[j] + acc) / (sub[j] * sub[j])
            if val > best:
                best = val
                bi = ci
                bj = idx[j]
    return best, bi, bj


# ---------------------------------------------------------------- rasterization


@numba.njit(cache=True)
def raster_cover(p2, faces, x0, y0, cell, n):
    """Mark grid cells whose centre lies in at least one projected triangle."""
    grid = np.zeros((n, n), dtype=np.bool_)
    for t in range(faces.shape[0]):
        ax, ay = p2[faces[t, 0], 0], p2[faces[t, 0], 1]
        bx, by = p2[faces[t, 1], 0], p2[faces[t, 1], 1]
        cx, cy = p2[faces[t, 2], 0], p2[faces[t, 2], 1]
        det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if det == 0.0:
            continue
        i0 = max(int(math.floor((min(ax, bx, cx) - x0) / cell - 0.5)), 0)
        i1 = min(int(math.ceil((max(ax, bx, cx) - x0) / cell - 0.5)), n - 1)
        j0 = max(int(math.floor((min(ay, by, cy) - y0) / cell - 0.5)), 0)
        j1 = min(int(math.ceil((max(ay, by, cy) - y0) / cell - 0.5)), n - 1)
        for i in range(i0, i1 + 1):
            px = x0 + (i + 0.5) * cell
            for j in range(j0, j1 + 1):
                if grid[i, j]:
                    continue
                py = y0 + (j + 0.5) * cell
                w0 = (bx - px) * (cy - py) - (by - py) * (cx - px)
                w1 = (cx - px) * (ay - py) - (cy - py) * (ax - px)
                w2 = (ax - px) * (by - py) - (ay - py) * (bx - px)
                if det > 0:
                    inside = w0 >= 0 and w1 >= 0 and w2 >= 0
                else:
                    inside = w0 <= 0 and w1 <= 0 and w2 <= 0
                if inside:
                    grid[i, j] = True
    return grid
