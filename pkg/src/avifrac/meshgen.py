"""Mesh generation: uniform grids and locally refined all-quad meshes.

Refinement uses a 3-for-1 cell subdivision tree (each split turns a square
cell into 3x3 children), balanced so neighbor cells differ by at most one
level. Cells whose edges face finer neighbors are expanded with conforming
all-quad transition templates, so the final mesh has no hanging nodes. All
template points are exact multiples of one sixth of the finest cell size,
which makes node deduplication integer-exact.

Pre-existing notches are geometric slits produced by duplicating the nodes
along the cut; the two faces become ordinary boundary edges.
"""

from __future__ import annotations

import numpy as np

# Edge indices on a cell: 0 bottom, 1 right, 2 top, 3 left.
# Template coordinates are integer sixths of the cell, counterclockwise quads.
_T_NONE = (((0, 0), (6, 0), (6, 6), (0, 6)),)

_T_B = (
    ((0, 0), (2, 0), (2, 3), (0, 6)),
    ((2, 0), (4, 0), (4, 3), (2, 3)),
    ((4, 0), (6, 0), (6, 6), (4, 3)),
    ((2, 3), (4, 3), (6, 6), (0, 6)),
)

_T_BT = (
    ((0, 0), (2, 0), (2, 6), (0, 6)),
    ((2, 0), (4, 0), (4, 6), (2, 6)),
    ((4, 0), (6, 0), (6, 6), (4, 6)),
)

_T_BR = (
    ((0, 0), (2, 0), (2, 2), (0, 6)),
    ((2, 0), (4, 0), (4, 2), (2, 2)),
    ((4, 0), (6, 0), (6, 2), (4, 2)),
    ((4, 2), (6, 2), (6, 4), (4, 4)),
    ((0, 6), (2, 2), (4, 2), (4, 4)),
    ((0, 6), (4, 4), (6, 4), (6, 6)),
)

_T_BRT = (
    ((0, 0), (2, 0), (2, 6), (0, 6)),
    ((2, 0), (4, 0), (4, 6), (2, 6)),
    ((4, 0), (6, 0), (6, 2), (5, 2)),
    ((5, 2), (6, 2), (6, 4), (5, 4)),
    ((5, 4), (6, 4), (6, 6), (4, 6)),
    ((4, 0), (5, 2), (5, 4), (4, 6)),
)

_T_ALL = tuple(
    ((2 * i, 2 * j), (2 * i + 2, 2 * j), (2 * i + 2, 2 * j + 2), (2 * i, 2 * j + 2))
    for j in range(3) for i in range(3)
)

_CANONICAL = {
    frozenset(): _T_NONE,
    frozenset({0}): _T_B,
    frozenset({0, 2}): _T_BT,
    frozenset({0, 1}): _T_BR,
    frozenset({0, 1, 2}): _T_BRT,
    frozenset({0, 1, 2, 3}): _T_ALL,
}


def _rot_point(p, k):
    x, y = p
    for _ in range(k % 4):
        x, y = 6 - y, x
    return (x, y)


def _template_for(mask: frozenset) -> tuple:
    """Quads (in cell sixths) realizing the given set of refined edges."""
    for canon, quads in _CANONICAL.items():
        for k in range(4):
            if frozenset((i + k) % 4 for i in canon) == mask:
                return tuple(tuple(_rot_point(p, k) for p in quad) for quad in quads)
    raise AssertionError(f"no template for refined-edge mask {sorted(mask)}")


def rect_mesh(width: float, height: float, nx: int, ny: int,
              origin: tuple[float, float] = (0.0, 0.0)):
    """Uniform nx-by-ny grid of rectangles; returns (nodes, elements)."""
    xs = origin[0] + np.linspace(0.0, width, nx + 1)
    ys = origin[1] + np.linspace(0.0, height, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([gx.ravel(), gy.ravel()])
    elems = []
    for j in range(ny):
        for i in range(nx):
            n0 = j * (nx + 1) + i
            elems.append([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
    return nodes, np.array(elems, dtype=np.int64)


class SizeField:
    """Target element size from the distance to a set of guide segments.

    thresholds is a list of (radius, size) pairs, sorted by radius; points
    closer than a radius to any segment get the paired size, anything
    farther gets ``coarse``.
    """

    def __init__(self, segments, thresholds, coarse: float):
        self.segments = [(np.asarray(a, float), np.asarray(b, float))
                         for a, b in segments]
        self.thresholds = sorted(thresholds)
        self.coarse = float(coarse)

    def min_size_over_rect(self, x0, y0, x1, y1) -> float:
        if not self.segments:
            return self.coarse
        dmin = min(_rect_segment_distance(x0, y0, x1, y1, a, b)
                   for a, b in self.segments)
        for radius, size in self.thresholds:
            if dmin < radius:
                return size
        return self.coarse


class UniformSize:
    def __init__(self, size: float):
        self.size = float(size)

    def min_size_over_rect(self, x0, y0, x1, y1) -> float:
        return self.size


def _seg_seg_distance(p1, p2, p3, p4) -> float:
    if _segments_intersect(p1, p2, p3, p4):
        return 0.0
    return min(_point_segment_distance(p1, p3, p4),
               _point_segment_distance(p2, p3, p4),
               _point_segment_distance(p3, p1, p2),
               _point_segment_distance(p4, p1, p2))


def _point_segment_distance(p, a, b) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.hypot(*(p - a)))
    t = np.clip(float((p - a) @ ab) / denom, 0.0, 1.0)
    return float(np.hypot(*(p - (a + t * ab))))


def _segments_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    if ((d1 > 0) != (d2 > 0) or d1 == 0 or d2 == 0) and \
       ((d3 > 0) != (d4 > 0) or d3 == 0 or d4 == 0):
        # conservative: treat touching/collinear overlap as intersecting
        return (min(p1[0], p2[0]) <= max(p3[0], p4[0]) and
                min(p3[0], p4[0]) <= max(p1[0], p2[0]) and
                min(p1[1], p2[1]) <= max(p3[1], p4[1]) and
                min(p3[1], p4[1]) <= max(p1[1], p2[1]))
    return False


def _rect_segment_distance(x0, y0, x1, y1, a, b) -> float:
    inside_a = x0 <= a[0] <= x1 and y0 <= a[1] <= y1
    inside_b = x0 <= b[0] <= x1 and y0 <= b[1] <= y1
    if inside_a or inside_b:
        return 0.0
    corners = [np.array([x0, y0]), np.array([x1, y0]),
               np.array([x1, y1]), np.array([x0, y1])]
    best = np.inf
    for i in range(4):
        best = min(best, _seg_seg_distance(corners[i], corners[(i + 1) % 4], a, b))
    return best


def graded_rect_mesh(width: float, height: float, h_fine: float, levels: int,
                     size_field, origin: tuple[float, float] = (0.0, 0.0)):
    """Locally refined conforming all-quad mesh of an axis-aligned rectangle.

    The coarsest cell is h_fine * 3**levels and must divide both sides
    exactly. ``size_field`` supplies the target size per region (see
    :class:`SizeField`); cells subdivide 3x3 until they meet it or reach the
    finest level, with one-level balancing between neighbors.
    """
    s0 = h_fine * 3 ** levels
    nx0 = width / s0
    ny0 = height / s0
    if abs(nx0 - round(nx0)) > 1e-9 or abs(ny0 - round(ny0)) > 1e-9:
        raise ValueError(
            f"coarse cell {s0:g} (h_fine * 3^levels) must divide width {width:g} "
            f"and height {height:g} exactly")
    nx0, ny0 = int(round(nx0)), int(round(ny0))

    leaves: set[tuple[int, int, int]] = {(0, i, j)
                                         for i in range(nx0) for j in range(ny0)}
    pending = sorted(leaves)

    def covering_leaf(lev, i, j):
        for lv in range(lev, -1, -1):
            f = 3 ** (lev - lv)
            key = (lv, i // f, j // f)
            if key in leaves:
                return key
        return None

    def split(cell):
        lev, i, j = cell
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ni, nj = i + di, j + dj
            if 0 <= ni < nx0 * 3 ** lev and 0 <= nj < ny0 * 3 ** lev:
                cov = covering_leaf(lev, ni, nj)
                if cov is not None and cov[0] < lev:
                    split(cov)
        leaves.remove(cell)
        for a in range(3):
            for b in range(3):
                child = (lev + 1, 3 * i + a, 3 * j + b)
                leaves.add(child)
                pending.append(child)

    while pending:
        cell = pending.pop()
        if cell not in leaves:
            continue
        lev, i, j = cell
        if lev >= levels:
            continue
        s = s0 / 3 ** lev
        x0 = origin[0] + i * s
        y0 = origin[1] + j * s
        target = size_field.min_size_over_rect(x0, y0, x0 + s, y0 + s)
        if s > target * (1.0 + 1e-9):
            split(cell)

    # emit conforming quads via the transition templates
    fine = 3 ** levels
    fine_nx, fine_ny = nx0 * fine, ny0 * fine

    def leaf_level_at(px, py):
        for lv in range(levels, -1, -1):
            f = 3 ** (levels - lv)
            if (lv, px // f, py // f) in leaves:
                return lv
        raise AssertionError("point not covered by any leaf")

    unit = s0 / (6 * fine)
    node_ids: dict[tuple[int, int], int] = {}
    keys: list[tuple[int, int]] = []
    quads: list[list[int]] = []
    for (lev, i, j) in sorted(leaves):
        f = 3 ** (levels - lev)
        mask = set()
        probes = ((0, i * f, j * f - 1), (1, (i + 1) * f, j * f),
                  (2, i * f, (j + 1) * f), (3, i * f - 1, j * f))
        for eidx, px, py in probes:
            if 0 <= px < fine_nx and 0 <= py < fine_ny:
                nl = leaf_level_at(px, py)
                if nl > lev + 1:
                    raise AssertionError("tree balance violated")
                if nl == lev + 1:
                    mask.add(eidx)
        ox, oy = i * f * 6, j * f * 6
        for quad in _template_for(frozenset(mask)):
            ids = []
            for (tx, ty) in quad:
                key = (ox + tx * f, oy + ty * f)
                nid = node_ids.get(key)
                if nid is None:
                    nid = len(keys)
                    node_ids[key] = nid
                    keys.append(key)
                ids.append(nid)
            quads.append(ids)
    nodes = np.array(keys, dtype=float) * unit + np.asarray(origin, float)
    return nodes, np.array(quads, dtype=np.int64)


# ---------------------------------------------------------------------------
# Slits and edge tagging
# ---------------------------------------------------------------------------

def add_slit(nodes: np.ndarray, elements: np.ndarray, p0, p1,
             include_start: bool = True, tol: float | None = None):
    """Cut a horizontal zero-width slit by duplicating the nodes along it.

    Nodes strictly between the endpoints (and the start node when
    ``include_start``, for slits that open at the domain boundary) are
    duplicated; elements above the line keep the copies, elements below the
    originals. The tip node is shared so the crack front stays closed.
    """
    nodes = np.asarray(nodes, float)
    elements = np.array(elements, dtype=np.int64, copy=True)
    (x0, y0), (x1, y1) = p0, p1
    if abs(y1 - y0) > 1e-15 * max(1.0, abs(y0)):
        raise ValueError("only horizontal slits are supported")
    if x1 <= x0:
        raise ValueError("slit endpoints must be ordered left to right")
    yc = y0
    if tol is None:
        span = max(np.ptp(nodes[:, 0]), np.ptp(nodes[:, 1]))
        tol = 1e-9 * span
    on_line = np.abs(nodes[:, 1] - yc) <= tol
    xlo = (nodes[:, 0] >= x0 - tol) if include_start else (nodes[:, 0] > x0 + tol)
    to_dup = np.nonzero(on_line & xlo & (nodes[:, 0] < x1 - tol))[0]
    if to_dup.size == 0:
        raise ValueError("slit duplicates no nodes; check alignment with the mesh")

    dup_set = set(int(n) for n in to_dup)
    centroids_y = nodes[elements, 1].mean(axis=1)
    touching = np.nonzero(np.isin(elements, to_dup).any(axis=1))[0]
    for e in touching:
        ys = nodes[elements[e], 1]
        if ys.min() < yc - tol and ys.max() > yc + tol:
            raise ValueError(f"element {e} straddles the slit line; the slit "
                             "must coincide with mesh lines")
    new_ids = {int(old): nodes.shape[0] + k for k, old in enumerate(to_dup)}
    out_nodes = np.vstack([nodes, nodes[to_dup]])
    for e in touching:
        if centroids_y[e] > yc:
            for i in range(4):
                old = int(elements[e, i])
                if old in dup_set:
                    elements[e, i] = new_ids[old]
    return out_nodes, elements


def boundary_edge_list(elements: np.ndarray) -> list[tuple[int, int]]:
    """Edges owned by exactly one element, as (element, local edge) pairs."""
    from .mesh import EDGE_NODES
    seen: dict[tuple[int, int], list[tuple[int, int]]] = {}
    elements = np.asarray(elements)
    for e in range(elements.shape[0]):
        for local, (i, j) in enumerate(EDGE_NODES):
            a, b = int(elements[e, i]), int(elements[e, j])
            key = (a, b) if a < b else (b, a)
            seen.setdefault(key, []).append((e, local))
    return sorted(owners[0] for owners in seen.values() if len(owners) == 1)


def edges_on_line(nodes: np.ndarray, elements: np.ndarray,
                  edges: list[tuple[int, int]], axis: int, value: float,
                  lo: float = -np.inf, hi: float = np.inf,
                  side: str | None = None, tol: float = 1e-9) -> list[tuple[int, int]]:
    """Filter edges lying on the line coord[axis] == value.

    Both endpoints must sit on the line and inside [lo, hi] along the other
    axis. ``side='+'`` keeps edges whose owning element lies above the line
    along ``axis`` ('-' below); used to tell the two faces of a slit apart.
    """
    from .mesh import EDGE_NODES
    other = 1 - axis
    out = []
    for (e, local) in edges:
        i, j = EDGE_NODES[local]
        a, b = int(elements[e, i]), int(elements[e, j])
        pa, pb = nodes[a], nodes[b]
        if abs(pa[axis] - value) > tol or abs(pb[axis] - value) > tol:
            continue
        if not (lo - tol <= pa[other] <= hi + tol):
            continue
        if not (lo - tol <= pb[other] <= hi + tol):
            continue
        if side is not None:
            centroid = nodes[elements[e]].mean(axis=0)[axis]
            if side == "+" and centroid <= value:
                continue
            if side == "-" and centroid >= value:
                continue
        out.append((e, local))
    return sorted(out)
