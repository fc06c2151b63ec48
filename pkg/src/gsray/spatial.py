"""Morton (Z-order) reordering and a BVH over primitive AABBs.

The BVH is a binned-SAH build (leaf size <= 4) over the per-primitive
boxes.  Two queries are exposed: closest ellipsoid entry along a ray
(the hit surface is the density isosurface, not the box) and collection
of every primitive whose box overlaps a ray segment.  Segment overlap is
a slab interval test, so segments fully enclosed in a box are reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BufferOverflow

MORTON_BITS = 21
MORTON_MAX = (1 << MORTON_BITS) - 1

_M1 = np.uint64(0x1F00000000FFFF)
_M2 = np.uint64(0x1F0000FF0000FF)
_M3 = np.uint64(0x100F00F00F00F00F)
_M4 = np.uint64(0x10C30C30C30C30C3)
_M5 = np.uint64(0x1249249249249249)


def _spread(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64) & np.uint64(MORTON_MAX)
    x = (x | (x << np.uint64(32))) & _M1
    x = (x | (x << np.uint64(16))) & _M2
    x = (x | (x << np.uint64(8))) & _M3
    x = (x | (x << np.uint64(4))) & _M4
    x = (x | (x << np.uint64(2))) & _M5
    return x


def _compact(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64) & _M5
    x = (x | (x >> np.uint64(2))) & _M4
    x = (x | (x >> np.uint64(4))) & _M3
    x = (x | (x >> np.uint64(8))) & _M2
    x = (x | (x >> np.uint64(16))) & _M1
    x = (x | (x >> np.uint64(32))) & np.uint64(MORTON_MAX)
    return x


def morton_encode(p) -> np.ndarray:
    """Interleave 21-bit integer coordinates into a 63-bit Z-order code.

    x occupies bit 0, y bit 1, z bit 2, repeating.  Accepts a (3,) triple
    or an (N, 3) array; bijective on the quantized lattice.
    """
    arr = np.asarray(p)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if np.any(arr < 0) or np.any(arr > MORTON_MAX):
        raise ValueError(f"coordinates must be in [0, 2^{MORTON_BITS})")
    code = (
        _spread(arr[:, 0])
        | (_spread(arr[:, 1]) << np.uint64(1))
        | (_spread(arr[:, 2]) << np.uint64(2))
    )
    return int(code[0]) if single else code


def morton_decode(code) -> np.ndarray:
    """Inverse of morton_encode; returns (3,) or (N, 3) integer coordinates."""
    c = np.atleast_1d(np.asarray(code, dtype=np.uint64))
    out = np.stack(
        [
            _compact(c),
            _compact(c >> np.uint64(1)),
            _compact(c >> np.uint64(2)),
        ],
        axis=-1,
    ).astype(np.int64)
    return out[0] if out.shape[0] == 1 and np.ndim(code) == 0 else out


def quantize_points(points: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Map points in the box [lo, hi] to the 21-bit lattice, per axis."""
    extent = np.maximum(hi - lo, 1e-30)
    t = (np.asarray(points) - lo) / extent
    q = np.clip((t * (MORTON_MAX + 1)).astype(np.int64), 0, MORTON_MAX)
    return q


def morton_order(points: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Stable permutation sorting points by ascending Z-order code."""
    codes = morton_encode(quantize_points(points, lo, hi))
    return np.argsort(codes, kind="stable")


@dataclass
class HitBuffer:
    """Fixed-capacity buffer of primitive indices overlapping a segment."""

    capacity: int = 64
    indices: np.ndarray = field(default=None)
    count: int = 0

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if self.indices is None:
            self.indices = np.empty(self.capacity, dtype=np.int64)

    def reset(self):
        self.count = 0

    def push(self, idx: int):
        if self.count >= self.capacity:
            raise BufferOverflow(self.count + 1, self.capacity)
        self.indices[self.count] = idx
        self.count += 1

    def active(self) -> np.ndarray:
        return self.indices[: self.count]


_LEAF_SIZE = 4
_N_BINS = 16


class Bvh:
    """Flat binary BVH; nodes stored in arrays, traversal by explicit stack.

    Leaves reference contiguous ranges of `prim_order`, a permutation of
    the input box indices.
    """

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.ndim != 2 or lo.shape != hi.shape or lo.shape[0] == 0:
            raise ValueError("need nonempty (N, 3) box corners")
        self.box_lo = lo
        self.box_hi = hi
        n = lo.shape[0]
        centers = 0.5 * (lo + hi)

        max_nodes = 2 * n
        self.node_lo = np.empty((max_nodes, 3))
        self.node_hi = np.empty((max_nodes, 3))
        # leaf: (start, -count); inner: (left_child, right_child)
        self.node_a = np.empty(max_nodes, dtype=np.int64)
        self.node_b = np.empty(max_nodes, dtype=np.int64)
        self.prim_order = np.arange(n, dtype=np.int64)
        self._n_nodes = 0
        self._build(0, n, centers)

    def _alloc(self) -> int:
        i = self._n_nodes
        self._n_nodes += 1
        return i

    def _build(self, start: int, end: int, centers: np.ndarray) -> int:
        node = self._alloc()
        idx = self.prim_order[start:end]
        lo = self.box_lo[idx].min(axis=0)
        hi = self.box_hi[idx].max(axis=0)
        self.node_lo[node] = lo
        self.node_hi[node] = hi
        count = end - start
        if count <= _LEAF_SIZE:
            self.node_a[node] = start
            self.node_b[node] = -count
            return node

        c = centers[idx]
        cmin = c.min(axis=0)
        cmax = c.max(axis=0)
        axis = int(np.argmax(cmax - cmin))
        extent = cmax[axis] - cmin[axis]
        mid = None
        if extent > 1e-12:
            # binned SAH over the widest centroid axis
            rel = (c[:, axis] - cmin[axis]) / extent
            bins = np.minimum((rel * _N_BINS).astype(np.int64), _N_BINS - 1)
            best_cost = np.inf
            best_split = None
            for split in range(1, _N_BINS):
                left = bins < split
                nl = int(np.count_nonzero(left))
                if nl == 0 or nl == count:
                    continue
                llo = self.box_lo[idx[left]].min(axis=0)
                lhi = self.box_hi[idx[left]].max(axis=0)
                rlo = self.box_lo[idx[~left]].min(axis=0)
                rhi = self.box_hi[idx[~left]].max(axis=0)
                cost = nl * _area(llo, lhi) + (count - nl) * _area(rlo, rhi)
                if cost < best_cost:
                    best_cost = cost
                    best_split = split
            if best_split is not None:
                in_left = bins < best_split
                order = np.concatenate([idx[in_left], idx[~in_left]])
                self.prim_order[start:end] = order
                mid = start + int(np.count_nonzero(in_left))
        if mid is None:
            # degenerate spread: median split by centroid
            order = idx[np.argsort(c[:, axis], kind="stable")]
            self.prim_order[start:end] = order
            mid = start + count // 2

        left_child = self._build(start, mid, centers)
        right_child = self._build(mid, end, centers)
        self.node_a[node] = left_child
        self.node_b[node] = right_child
        return node

    # -- queries ---------------------------------------------------------

    def segment_overlaps(self, origin, direction, t0: float, t1: float, buf: HitBuffer,
                         stats=None) -> int:
        """Collect primitives whose AABB interval-overlaps [t0, t1].

        Overlap is tested on the slab interval of the ray against each box,
        so a segment lying fully inside a box is reported.  Raises
        BufferOverflow when more than buf.capacity primitives overlap.
        Returns the number collected.
        """
        buf.reset()
        o = np.asarray(origin, dtype=float)
        d = np.asarray(direction, dtype=float)
        inv = np.where(np.abs(d) > 1e-300, 1.0 / np.where(d == 0.0, 1.0, d), np.inf)
        visits = 0
        stack = [0]
        while stack:
            node = stack.pop()
            visits += 1
            a, b = self._slab(node, o, d, inv)
            if a > t1 or b < t0:
                continue
            na, nb = self.node_a[node], self.node_b[node]
            if nb <= 0:  # leaf
                for i in self.prim_order[na : na - nb]:
                    pa, pb = _box_slab(self.box_lo[i], self.box_hi[i], o, d, inv)
                    if pa <= t1 and pb >= t0:
                        buf.push(int(i))
                continue
            stack.append(int(nb))
            stack.append(int(na))
        if stats is not None:
            stats.node_visits += visits
        return buf.count

    def _slab(self, node: int, o, d, inv):
        return _box_slab(self.node_lo[node], self.node_hi[node], o, d, inv)


def _area(lo, hi) -> float:
    e = hi - lo
    return 2.0 * float(e[0] * e[1] + e[1] * e[2] + e[2] * e[0])


def _box_slab(lo, hi, o, d, inv):
    """Parametric entry/exit of a ray against a box; (inf, -inf) on miss.

    Axes with zero direction are treated as inside/outside tests.
    """
    t0 = -np.inf
    t1 = np.inf
    for k in range(3):
        if d[k] != 0.0:
            a = (lo[k] - o[k]) * inv[k]
            b = (hi[k] - o[k]) * inv[k]
            if a > b:
                a, b = b, a
            if a > t0:
                t0 = a
            if b < t1:
                t1 = b
        elif o[k] < lo[k] or o[k] > hi[k]:
            return np.inf, -np.inf
    return t0, t1


def ray_ellipsoid_interval(o_local, d_local, t_lo, t_hi):
    """Intersection interval of a ray with the unit sphere, in local frame.

    Inputs are the ray origin/direction already mapped by diag(1/s~) R^T.
    Returns (t_in, t_out) clipped to [t_lo, t_hi], or None.  Roots use the
    numerically stable quadratic (Kahan form) to survive grazing rays.
    """
    a = float(np.dot(d_local, d_local))
    b = float(np.dot(o_local, d_local))
    c = float(np.dot(o_local, o_local)) - 1.0
    disc = b * b - a * c
    if disc < 0.0 or a == 0.0:
        return None
    sq = np.sqrt(disc)
    if b >= 0.0:
        q = -(b + sq)
    else:
        q = -(b - sq)
    t0 = q / a
    t1 = c / q if q != 0.0 else t0
    if t0 > t1:
        t0, t1 = t1, t0
    t0 = max(t0, t_lo)
    t1 = min(t1, t_hi)
    if t0 > t1:
        return None
    return t0, t1


def closest_hit(bvh: Bvh, scene, origin, direction, t_lo: float, t_hi: float,
                stats=None):
    """Smallest t in [t_lo, t_hi] where the ray enters any bounding ellipsoid.

    A ray starting inside an ellipsoid "enters" at t_lo.  Returns None when
    nothing intersects.  Traversal visits near children first and prunes
    nodes beyond the current best hit.
    """
    if t_lo > t_hi:
        return None
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    inv = np.where(np.abs(d) > 1e-300, 1.0 / np.where(d == 0.0, 1.0, d), np.inf)
    best = np.inf
    visits = 0
    stack = [(0, 0.0)]
    while stack:
        node, t_entry = stack.pop()
        if t_entry >= best:
            continue
        visits += 1
        a, b = bvh._slab(node, o, d, inv)
        if a > min(t_hi, best) or b < t_lo:
            continue
        na, nb = bvh.node_a[node], bvh.node_b[node]
        if nb <= 0:  # leaf
            for i in bvh.prim_order[na : na - nb]:
                ol = scene.iso_inv[i] @ (o - scene.means[i])
                dl = scene.iso_inv[i] @ d
                hit = ray_ellipsoid_interval(ol, dl, t_lo, min(t_hi, best))
                if hit is not None and hit[0] < best:
                    best = hit[0]
            continue
        la, _ = bvh._slab(int(na), o, d, inv)
        lb, _ = bvh._slab(int(nb), o, d, inv)
        # push far child first so the near one is processed next
        if la <= lb:
            stack.append((int(nb), lb))
            stack.append((int(na), la))
        else:
            stack.append((int(na), la))
            stack.append((int(nb), lb))
    if stats is not None:
        stats.node_visits += visits
        stats.closest_hit_calls += 1
    return float(best) if np.isfinite(best) else None
