"""Independent reference helpers for the tests.

``random_beam_polyline`` draws an edge the partition tree can represent
exactly (one vertex per crossed interface) and renders the matching
noiseless image. ``ParametricSearch`` bounds ``|C|`` over every
tree-representable curve between two boundary pixels without the
detector's greedy selection: ``R`` and ``L`` add under concatenation, so
``max (R - lam w L)`` over all curves is exact by a max-plus recursion over
the tree, and a non-positive maximum certifies that no curve has
``|C| > lam``.
"""

import numpy as np
from scipy import ndimage

from beamcurve.partition import boundary_pixels, build_partition
from beamcurve.response import bresenham, line_contrast_sum


def chain_of(vertices):
    out = [bresenham(vertices[0], vertices[1])]
    for p, q in zip(vertices[1:-1], vertices[2:]):
        out.append(bresenham(p, q)[1:])
    return np.concatenate(out)


def _sides(tile, p):
    pix, mask = boundary_pixels(*tile.bounds)
    idx = {tuple(map(int, q)): i for i, q in enumerate(pix)}
    return int(mask[idx[p]])


def _on_boundary(tile, p):
    x, y = p
    return tile.contains(x, y) and (x in (tile.x0, tile.x1) or y in (tile.y0, tile.y1))


def _valid_pair(tile, p, q):
    return p != q and _on_boundary(tile, p) and _on_boundary(tile, q) and \
        not (_sides(tile, p) & _sides(tile, q))


def _polyline(part, tile, p, q, rng, jitter):
    """Vertices from p to q inside ``tile`` with one vertex per interface crossing."""
    if part.is_leaf(tile):
        return [p, q]
    c1, c2 = part.children[tile.id]
    for c in (c1, c2):
        if c.contains(*p) and c.contains(*q) and _valid_pair(c, p, q):
            return _polyline(part, c, p, q, rng, jitter)
    if not (c1.contains(*p) and c2.contains(*q)):
        if c2.contains(*p) and c1.contains(*q):
            rev = _polyline(part, tile, q, p, rng, jitter)
            return None if rev is None else rev[::-1]
        return None
    axis = part.axes[tile.id]
    iface = part.interfaces[tile.id]
    line = iface[0][0] if axis == 0 else iface[0][1]
    # where the straight segment p-q crosses the interface line
    a, b = (0, 1) if axis == 0 else (1, 0)
    if p[a] == q[a]:
        return None
    t = (line - p[a]) / (q[a] - p[a])
    along = p[b] + t * (q[b] - p[b]) + rng.integers(-jitter, jitter + 1)
    lo, hi = (tile.y0, tile.y1) if axis == 0 else (tile.x0, tile.x1)
    along = int(np.clip(round(along), lo, hi))
    p3 = (line, along) if axis == 0 else (along, line)
    if not (_valid_pair(c1, p, p3) and _valid_pair(c2, p3, q)):
        return None
    v1 = _polyline(part, c1, p, p3, rng, jitter)
    v2 = _polyline(part, c2, p3, q, rng, jitter)
    if v1 is None or v2 is None:
        return None
    # pieces running along the interface on both sides are not representable
    on = [sum(1 for x in map(tuple, chain_of(v)) if x[a] == line) for v in (v1, v2)]
    if on[0] > 1 and on[1] > 1:
        return None
    return v1 + v2[1:]


def render_sides(chain, shape):
    """1 on one side of the chain, 0 on the other, 0.5 on the chain itself."""
    on = np.zeros(shape, dtype=bool)
    on[chain[:, 1], chain[:, 0]] = True
    lab, n = ndimage.label(~on)
    if n != 2:
        return None
    img = np.where(lab == 1, 1.0, 0.0)
    img[on] = 0.5
    return img


def polyline_contrast(img, vertices, w=4):
    R = L = 0.0
    for p, q in zip(vertices[:-1], vertices[1:]):
        r, l = line_contrast_sum(img, p, q, w)
        R += r
        L += l
    return R, L


def random_beam_polyline(size=33, n_min=5, rng=None, jitter=1, w=4, tol=1e-3, tries=10000):
    """``(vertices, chain, image)`` of a random representable contrast-1 edge.

    Endpoints lie on two different sides of the image border; candidates
    whose chain does not split the image in two, that self-intersect, or
    whose own filter response differs from 1 by more than ``tol`` (sharp
    bends let samples cross the edge) are drawn again.
    """
    rng = np.random.default_rng(rng)
    part = build_partition(size, size, n_min)
    root = part.root
    border = [tuple(map(int, p)) for p in boundary_pixels(*root.bounds)[0]]
    for _ in range(tries):
        p, q = (border[i] for i in rng.choice(len(border), 2, replace=False))
        if not _valid_pair(root, p, q):
            continue
        verts = _polyline(part, root, p, q, rng, jitter)
        if verts is None:
            continue
        chain = chain_of(verts)
        if len({tuple(x) for x in chain}) != len(chain):
            continue
        img = render_sides(chain, (size, size))
        if img is None:
            continue
        R, L = polyline_contrast(img, verts, w)
        if abs(abs(R) / (w * L) - 1.0) > tol:
            continue
        return verts, chain, img
    raise RuntimeError("no representable polyline found")


# ---------------------------------------------------------------- exact search

class ParametricSearch:
    """Exact maximum of ``R - lam w L`` over all tree-representable curves.

    Leaf segment responses come from the plain-numpy ``line_contrast_sum``.
    Curves are not filtered for self-intersection, so the search space is a
    superset of what the detector may store.
    """

    def __init__(self, img, w=4, n_min=5):
        self.img = np.asarray(img, dtype=np.float64)
        h, wd = self.img.shape
        self.w = w
        self.part = build_partition(wd, h, n_min)
        self.pix, self.mask, self.index = {}, {}, {}
        for t in self.part.tiles:
            p, m = boundary_pixels(*t.bounds)
            self.pix[t.id], self.mask[t.id] = p, m
            self.index[t.id] = {tuple(map(int, x)): i for i, x in enumerate(p)}
        self.leafRL = {}
        for t in self.part.leaves():
            p, m = self.pix[t.id], self.mask[t.id]
            B = len(p)
            R = np.full((B, B), np.nan)
            L = np.full((B, B), np.nan)
            for i in range(B):
                for j in range(i + 1, B):
                    if m[i] & m[j]:
                        continue
                    r, l = line_contrast_sum(self.img, p[i], p[j], w)
                    R[i, j], R[j, i], L[i, j], L[j, i] = r, -r, l, l
            self.leafRL[t.id] = (R, L)

    def values(self, lam):
        """Per tile, the ``(B, B)`` matrix of best ``R - lam w L`` for ordered pairs."""
        V = {}
        for tile in sorted(self.part.tiles, key=lambda t: -t.level):
            tid = tile.id
            if self.part.is_leaf(tile):
                R, L = self.leafRL[tid]
                V[tid] = np.where(np.isnan(R), -np.inf, R - lam * self.w * L)
                continue
            c1, c2 = self.part.children[tid]
            pix, mask = self.pix[tid], self.mask[tid]
            B = len(pix)
            out = np.full((B, B), -np.inf)
            diff = (mask[:, None] & mask[None, :]) == 0
            np.fill_diagonal(diff, False)
            # inherited: both ends inside one child
            for c in (c1, c2):
                ids = [i for i, x in enumerate(pix) if c.contains(*x)]
                cidx = [self.index[c.id][tuple(map(int, pix[i]))] for i in ids]
                sub = V[c.id][np.ix_(cidx, cidx)]
                cur = out[np.ix_(ids, ids)]
                out[np.ix_(ids, ids)] = np.maximum(cur, sub)
            # concatenations through the interface
            iface = [tuple(map(int, x)) for x in self.part.interfaces[tid]]
            i1 = [i for i, x in enumerate(pix) if c1.contains(*x)]
            i2 = [i for i, x in enumerate(pix) if c2.contains(*x)]
            a1 = [self.index[c1.id][tuple(map(int, pix[i]))] for i in i1]
            a2 = [self.index[c2.id][tuple(map(int, pix[i]))] for i in i2]
            j1 = [self.index[c1.id][x] for x in iface]
            j2 = [self.index[c2.id][x] for x in iface]
            A = V[c1.id][np.ix_(a1, j1)]            # p1 -> p3
            Bm = V[c2.id][np.ix_(j2, a2)]           # p3 -> p2
            best = np.max(A[:, :, None] + Bm[None, :, :], axis=1)
            cur = out[np.ix_(i1, i2)]
            out[np.ix_(i1, i2)] = np.maximum(cur, best)
            cur = out[np.ix_(i2, i1)]
            # reversed direction: p2 -> p3 -> p1 has value of the reversed curve
            Ar = V[c2.id][np.ix_(a2, j2)]
            Br = V[c1.id][np.ix_(j1, a1)]
            out[np.ix_(i2, i1)] = np.maximum(cur, np.max(Ar[:, :, None] + Br[None, :, :], axis=1))
            out[~diff] = -np.inf
            V[tid] = out
        return V

    def excess(self, p1, p2, lam, tile_id=0):
        """``max over curves p1 -> p2 or p2 -> p1 of (R - lam w L)``."""
        V = self.values(lam)
        i, j = self.index[tile_id][tuple(p1)], self.index[tile_id][tuple(p2)]
        return max(V[tile_id][i, j], V[tile_id][j, i])
