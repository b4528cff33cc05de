"""Beam-curve dynamic program over the rectangle partition tree.

``build_beam_tree`` runs the numba kernels level by level (leaves first);
tiles of one level are independent and are processed in parallel with a
deterministic result. The per-tile functions ``bottom_level``,
``best_pixels`` and ``coarser_level`` are plain-Python versions of the same
steps, kept for inspection and for cross-checking the kernels on small
images.
"""

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import _kernels as K
from .partition import DEFAULT_N_MIN, boundary_pixels, build_partition
from .response import DEFAULT_WIDTH, ResponseVector, concatenate, line_response
from .scoring import DEFAULT_BETA, NOISE_GAIN, ThresholdParams, noise_scale

DEFAULT_K = 2


@dataclass(frozen=True)
class MergeMode:
    """``k=None`` scans every interface pixel; an integer keeps the best k."""

    k: int | None = None

    def __post_init__(self):
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")

    @classmethod
    def basic(cls):
        return cls(None)

    @classmethod
    def optimized(cls, k=DEFAULT_K):
        return cls(int(k))

    @property
    def name(self):
        return "basic" if self.k is None else f"fast(k={self.k})"


@dataclass
class OpCounters:
    concatenations: int = 0
    selections: int = 0
    stored: int = 0
    per_level: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DetectParams:
    """Everything the dynamic program needs besides the image.

    ``sigma=None`` switches the merge criterion to plain ``|C|`` (used when
    calibrating the threshold on pure noise).
    """

    w: int = DEFAULT_WIDTH
    sigma: float | None = None
    beta: float = DEFAULT_BETA
    n_min: int = DEFAULT_N_MIN


class FlatTree:
    """Partition tree flattened into the arrays the kernels index."""

    def __init__(self, partition):
        self.partition = partition
        tiles = partition.tiles
        n = len(tiles)
        self.ntiles = n
        self.tx0 = np.array([t.x0 for t in tiles], dtype=np.int32)
        self.ty0 = np.array([t.y0 for t in tiles], dtype=np.int32)
        self.tx1 = np.array([t.x1 for t in tiles], dtype=np.int32)
        self.ty1 = np.array([t.y1 for t in tiles], dtype=np.int32)
        self.tlevel = np.array([t.level for t in tiles], dtype=np.int32)
        self.tc1 = np.full(n, -1, dtype=np.int64)
        self.tc2 = np.full(n, -1, dtype=np.int64)
        self.taxis = np.zeros(n, dtype=np.int32)
        for tid, (c1, c2) in partition.children.items():
            self.tc1[tid] = c1.id
            self.tc2[tid] = c2.id
            self.taxis[tid] = partition.axes[tid]

        pix, masks, index = [], [], []
        for t in tiles:
            p, m = boundary_pixels(*t.bounds)
            pix.append(p)
            masks.append(m)
            index.append({(int(x), int(y)): i for i, (x, y) in enumerate(p)})
        self.index = index
        sizes = np.array([len(p) for p in pix], dtype=np.int64)
        self.bptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.bx = np.concatenate([p[:, 0] for p in pix]).astype(np.int32)
        self.by = np.concatenate([p[:, 1] for p in pix]).astype(np.int32)
        self.bmask = np.concatenate(masks).astype(np.int8)
        self.sptr = np.concatenate([[0], np.cumsum(sizes * (sizes - 1) // 2)]).astype(np.int64)

        self.bmap1 = np.full(len(self.bx), -1, dtype=np.int64)
        self.bmap2 = np.full(len(self.bx), -1, dtype=np.int64)
        iface_sizes = np.zeros(n, dtype=np.int64)
        ic1, ic2 = [], []
        for tid, (c1, c2) in partition.children.items():
            b0 = self.bptr[tid]
            for i, (x, y) in enumerate(pix[tid]):
                key = (int(x), int(y))
                self.bmap1[b0 + i] = index[c1.id].get(key, -1)
                self.bmap2[b0 + i] = index[c2.id].get(key, -1)
            iface = partition.interfaces[tid]
            iface_sizes[tid] = len(iface)
        for tid in range(n):
            if tid in partition.children:
                c1, c2 = partition.children[tid]
                for x, y in partition.interfaces[tid]:
                    ic1.append(index[c1.id][(int(x), int(y))])
                    ic2.append(index[c2.id][(int(x), int(y))])
        self.iptr = np.concatenate([[0], np.cumsum(iface_sizes)]).astype(np.int64)
        self.ic1 = np.array(ic1, dtype=np.int64)
        self.ic2 = np.array(ic2, dtype=np.int64)
        self.levels = [np.flatnonzero(self.tlevel == j).astype(np.int64)
                       for j in range(int(self.tlevel.max()) + 1)]

    @property
    def store_size(self):
        return int(self.sptr[-1])

    def boundary(self, t):
        b0, b1 = self.bptr[t], self.bptr[t + 1]
        return np.stack([self.bx[b0:b1], self.by[b0:b1]], axis=1)

    def trace_args(self):
        return (self.tc1, self.tc2, self.bptr, self.bx, self.by, self.bmap1, self.bmap2,
                self.sptr, self.iptr, self.ic1, self.ic2)


class BeamTree:
    """All tiles' best-curve stores plus operation counters."""

    def __init__(self, flat, img, params, mode):
        self.flat = flat
        self.img = img
        self.params = params
        self.mode = mode
        size = flat.store_size
        self.R = np.zeros(size)
        self.L = np.zeros(size)
        self.kind = np.zeros(size, dtype=np.int8)
        self.junction = np.zeros(size, dtype=np.int16)
        self.cnt = np.zeros((size, 4), dtype=np.uint8)
        self.ncat = np.zeros(flat.ntiles, dtype=np.int64)
        self.nsel = np.zeros(flat.ntiles, dtype=np.int64)
        self.counters = OpCounters()

    @property
    def N(self):
        h, w = self.img.shape
        return h * w

    def score_args(self):
        p = self.params
        if p.sigma is None:
            return 0, float(p.w), 1.0, math.log(6.0 * self.N), float(p.beta)
        return (1, float(p.w), noise_scale(float(p.sigma), NOISE_GAIN), math.log(6.0 * self.N),
                float(p.beta))

    def _slot(self, t, a, b):
        B = self.flat.bptr[t + 1] - self.flat.bptr[t]
        lo, hi = min(a, b), max(a, b)
        return self.flat.sptr[t] + lo * (2 * B - lo - 1) // 2 + (hi - lo - 1), a > b

    def entry(self, t, a, b):
        """Stored response for boundary indices ``a -> b`` of tile ``t`` or None."""
        if a == b:
            return None
        k, flipped = self._slot(t, a, b)
        if self.kind[k] == K.K_EMPTY:
            return None
        R = -self.R[k] if flipped else self.R[k]
        return ResponseVector.make(R, self.L[k], self.pixels(t, a, b), self.params.w)

    def entry_at(self, t, p1, p2):
        """Stored response between two boundary pixels given as (x, y)."""
        idx = self.flat.index[t]
        return self.entry(t, idx[tuple(p1)], idx[tuple(p2)])

    def pixels(self, t, a, b):
        buf = np.empty((self.N + 8, 2), dtype=np.int32)
        n = K.trace(t, a, b, *self.flat.trace_args(), self.kind, self.junction, buf)
        return buf[:n].copy()

    def tile_entries(self, t):
        """``{(a, b): (R, L, kind)}`` for every filled pair ``a < b`` of tile ``t``."""
        B = int(self.flat.bptr[t + 1] - self.flat.bptr[t])
        k0 = self.flat.sptr[t]
        out = {}
        k = k0
        for a in range(B):
            for b in range(a + 1, B):
                if self.kind[k] != K.K_EMPTY:
                    out[(a, b)] = (self.R[k], self.L[k], int(self.kind[k]))
                k += 1
        return out

    def stored_per_level(self):
        counts = {}
        filled = self.kind != K.K_EMPTY
        for j, tiles in enumerate(self.flat.levels):
            counts[j] = int(sum(np.count_nonzero(filled[self.flat.sptr[t]:self.flat.sptr[t + 1]])
                                for t in tiles))
        return counts

    def originating(self):
        """Mask over store slots holding a curve built at that tile (not inherited)."""
        return (self.kind == K.K_LEAF) | (self.kind >= K.K_JA1)


_FLAT_CACHE = {}


def flat_tree(width, height, n_min=DEFAULT_N_MIN):
    key = (width, height, n_min)
    if key not in _FLAT_CACHE:
        if len(_FLAT_CACHE) > 8:
            _FLAT_CACHE.clear()
        _FLAT_CACHE[key] = FlatTree(build_partition(width, height, n_min))
    return _FLAT_CACHE[key]


def build_beam_tree(img, params=None, mode=None, threads=None):
    params = params or DetectParams()
    mode = mode or MergeMode.basic()
    img = np.ascontiguousarray(img, dtype=np.float64)
    h, w = img.shape
    flat = flat_tree(w, h, params.n_min)
    tree = BeamTree(flat, img, params, mode)
    score_mode, fw, sigma, ln6n, beta = tree.score_args()
    k = 0 if mode.k is None else mode.k
    prev = numba.get_num_threads()
    if threads:
        numba.set_num_threads(min(int(threads), numba.config.NUMBA_NUM_THREADS))
    try:
        for j in range(len(flat.levels) - 1, -1, -1):
            K.process_level(flat.levels[j], img, k, score_mode, int(fw), sigma, ln6n, beta,
                            flat.tx0, flat.ty0, flat.tx1, flat.ty1, flat.taxis, flat.tc1,
                            flat.tc2, flat.bptr, flat.bx, flat.by, flat.bmask, flat.bmap1,
                            flat.bmap2, flat.sptr, flat.iptr, flat.ic1, flat.ic2, tree.R,
                            tree.L, tree.kind, tree.junction, tree.cnt, tree.ncat, tree.nsel)
    finally:
        numba.set_num_threads(prev)
    c = tree.counters
    stored = tree.stored_per_level()
    for j, tiles in enumerate(flat.levels):
        c.per_level[j] = {
            "concatenations": int(tree.ncat[tiles].sum()),
            "selections": int(tree.nsel[tiles].sum()),
            "stored": stored[j],
        }
    c.concatenations = int(tree.ncat.sum())
    c.selections = int(tree.nsel.sum())
    c.stored = int(sum(stored.values()))
    return tree


@dataclass
class CurveSet:
    """Positive-score curves sorted by descending score.

    Curves are handles ``(tile, a, b)`` into the tree; pixel chains are
    rebuilt on demand.
    """

    tree: BeamTree
    tile: np.ndarray
    a: np.ndarray
    b: np.ndarray
    score: np.ndarray
    R: np.ndarray
    L: np.ndarray

    def __len__(self):
        return len(self.score)

    @property
    def C(self):
        return self.R / (self.tree.params.w * self.L)

    def __getitem__(self, i):
        t, a, b = int(self.tile[i]), int(self.a[i]), int(self.b[i])
        return self.tree.entry(t, a, b), float(self.score[i])

    def pixels(self, i):
        return self.tree.pixels(int(self.tile[i]), int(self.a[i]), int(self.b[i]))


def collect_curves(tree, min_score=0.0):
    """Every curve built in the tree with score above ``min_score``.

    Inherited slots repeat a child's curve verbatim and are skipped. Order:
    descending score, then tile id, then pair order.
    """
    flat = tree.flat
    score_mode, fw, sigma, ln6n, beta = tree.score_args()
    t, a, b, s, R, L = K.positive_entries(score_mode, fw, sigma, ln6n, beta, flat.ntiles,
                                          flat.bptr, flat.sptr, tree.R, tree.L, tree.kind,
                                          float(min_score))
    # entries come out in (tile, pair) order already; a stable sort keeps it on ties
    order = np.argsort(-s, kind="stable")
    return CurveSet(tree, t[order], a[order], b[order], s[order], R[order], L[order])


# ---------------------------------------------------------------------------
# Plain-Python per-tile steps (reference semantics of the kernels)


def _score(rv, params, N):
    if params.sigma is None:
        return abs(rv.C)
    return ThresholdParams(params.sigma, params.w, N, params.beta).score(rv)


def _better(new, old, params, N):
    sn, so = _score(new, params, N), _score(old, params, N)
    if sn != so:
        return sn > so
    if abs(new.C) != abs(old.C):
        return abs(new.C) > abs(old.C)
    return new.L < old.L


def _different_sides(mask, i, j):
    return i != j and not (mask[i] & mask[j])


def bottom_level(tile, img, params=None):
    """``{(p1, p2): ResponseVector}`` over leaf boundary pairs on different sides."""
    params = params or DetectParams()
    pix, mask = boundary_pixels(*tile.bounds)
    store = {}
    for i in range(len(pix)):
        for j in range(i + 1, len(pix)):
            if _different_sides(mask, i, j):
                p1, p2 = tuple(int(v) for v in pix[i]), tuple(int(v) for v in pix[j])
                store[(p1, p2)] = line_response(img, p1, p2, _fp(params))
    return store


def _fp(params):
    from .response import FilterParams

    return FilterParams(params.w)


def _lookup(store, p, q):
    rv = store.get((p, q))
    if rv is not None:
        return rv
    rv = store.get((q, p))
    return None if rv is None else rv.reversed()


def best_pixels(interface, store1, store2, k, params=None, N=None):
    """The ``k`` interface pixels whose best incoming child curve scores highest.

    Ties keep the earlier interface pixel; the result is in interface order.
    """
    params = params or DetectParams()
    interface = [tuple(int(v) for v in p) for p in interface]
    if k >= len(interface):
        return list(interface)
    best = []
    for p3 in interface:
        s = -math.inf
        for store in (store1, store2):
            for (p, q), rv in store.items():
                if p3 in (p, q):
                    s = max(s, _score(rv, params, N))
        best.append(s)
    order = sorted(range(len(interface)), key=lambda i: (-best[i], i))[:k]
    return [interface[i] for i in sorted(order)]


def coarser_level(tile, child1, child2, interface, store1, store2, mode=None, params=None, N=None):
    """Merge two child stores into the parent's, exactly as the kernel does."""
    params = params or DetectParams()
    mode = mode or MergeMode.basic()
    pix, mask = boundary_pixels(*tile.bounds)
    pts = [tuple(int(v) for v in p) for p in pix]
    side = {p: int(m) for p, m in zip(pts, mask)}
    iface = [tuple(int(v) for v in p) for p in interface]
    store = {}
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if not _different_sides(mask, i, j):
                continue
            p, q = pts[i], pts[j]
            for child, cs in ((child1, store1), (child2, store2)):
                if child.contains(*p) and child.contains(*q):
                    rv = _lookup(cs, p, q)
                    if rv is not None:
                        store[(p, q)] = rv
                        break
    search = iface if mode.k is None else best_pixels(iface, store1, store2, mode.k, params, N)
    in1 = [p for p in pts if child1.contains(*p)]
    in2 = [p for p in pts if child2.contains(*p)]
    iface_line = set(iface)
    for p1 in in1:
        for p2 in in2:
            if p1 == p2 or side[p1] & side[p2]:
                continue
            best = None
            for p3 in search:
                if p3 in (p1, p2):
                    continue
                g1, g2 = _lookup(store1, p1, p3), _lookup(store2, p3, p2)
                if g1 is None or g2 is None:
                    continue
                on1 = sum(1 for x in map(tuple, g1.P) if x in iface_line)
                on2 = sum(1 for x in map(tuple, g2.P) if x in iface_line)
                if on1 > 1 and on2 > 1:
                    continue
                cand = concatenate(g1, g2, params.w)
                if best is None or _better(cand, best, params, N):
                    best = cand
            if best is None:
                continue
            key = (p1, p2) if pts.index(p1) < pts.index(p2) else (p2, p1)
            if key[0] != p1:
                best = best.reversed()
            old = store.get(key)
            if old is None or _better(best, old, params, N):
                store[key] = best
    return store
