"""Numba kernels behind the beam-curve tree.

Layout (built by ``beamtree.FlatTree``): per tile, the boundary pixels are
numbered clockwise and each unordered pair ``a < b`` owns one slot of a
triangular block in the flat store arrays. ``R`` is oriented from ``a`` to
``b``. ``kind`` records how the slot was filled:

    0 empty, 1 leaf segment, 2/3 inherited from child 1/2,
    4 junction with ``a`` in child 1, 5 junction with ``a`` in child 2.

``cnt[:, s]`` counts curve pixels lying on tile side ``s`` (saturating);
it is how concatenations that would touch the interface line twice are
rejected without materialising pixel chains.
"""

import math

import numpy as np
from numba import njit, prange

LN2 = math.log(2.0)
CNT_CAP = 200

K_EMPTY, K_LEAF, K_INH1, K_INH2, K_JA1, K_JA2 = 0, 1, 2, 3, 4, 5

# side slots in cnt: TOP, RIGHT, BOTTOM, LEFT
S_TOP, S_RIGHT, S_BOTTOM, S_LEFT = 0, 1, 2, 3


@njit(inline="always")
def tri(a, b, B):
    return a * (2 * B - a - 1) // 2 + (b - a - 1)


@njit(inline="always")
def score_of(R, L, mode, w, sigma, ln6n, beta):
    c = abs(R) / (w * L)
    if mode == 0:
        return c
    return c - sigma * math.sqrt(2.0 * (ln6n + beta * L * LN2) / (w * L))


@njit(inline="always")
def better(s_new, c_new, l_new, s_old, c_old, l_old):
    if s_new != s_old:
        return s_new > s_old
    if c_new != c_old:
        return c_new > c_old
    return l_new < l_old


@njit(inline="always")
def bilinear(img, x, y):
    """Bilinear interpolation at (x, y); points outside the image are
    mirrored back in across the border pixel line."""
    h = img.shape[0]
    wd = img.shape[1]
    if x < 0.0:
        x = -x
    elif x > wd - 1.0:
        x = 2.0 * (wd - 1.0) - x
    if y < 0.0:
        y = -y
    elif y > h - 1.0:
        y = 2.0 * (h - 1.0) - y
    x = min(max(x, 0.0), wd - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    ix = min(int(math.floor(x)), wd - 2)
    iy = min(int(math.floor(y)), h - 2)
    fx = x - ix
    fy = y - iy
    return ((1.0 - fy) * ((1.0 - fx) * img[iy, ix] + fx * img[iy, ix + 1])
            + fy * ((1.0 - fx) * img[iy + 1, ix] + fx * img[iy + 1, ix + 1]))


@njit(cache=True)
def segment_response(img, x0, y0, x1, y1, w):
    dx = float(x1 - x0)
    dy = float(y1 - y0)
    L = math.sqrt(dx * dx + dy * dy)
    ns = max(1, int(math.ceil(L - 1e-9)))
    nx = -dy / L
    ny = dx / L
    acc = 0.0
    for i in range(ns + 1):
        t = i / ns
        sx = x0 + t * dx
        sy = y0 + t * dy
        d = 0.0
        for o in range(1, w + 1):
            off = o + 0.5
            d += (bilinear(img, sx + off * nx, sy + off * ny)
                  - bilinear(img, sx - off * nx, sy - off * ny))
        if i == 0 or i == ns:
            d *= 0.5
        acc += d
    return acc * (L / ns), L


@njit(cache=True)
def bresenham_into(x0, y0, x1, y1, out, n):
    """Append the chain x0,y0 -> x1,y1 to ``out[n:]``; returns the new length.

    Traced from the lexicographically smaller end, written in request order.
    """
    flip = (x1 < x0) or (x1 == x0 and y1 < y0)
    ax, ay, bx, by = x0, y0, x1, y1
    if flip:
        ax, ay, bx, by = x1, y1, x0, y0
    dx = abs(bx - ax)
    dy = -abs(by - ay)
    sx = 1 if ax < bx else -1
    sy = 1 if ay < by else -1
    err = dx + dy
    count = max(dx, -dy) + 1
    x = ax
    y = ay
    k = 0
    while True:
        if flip:
            out[n + count - 1 - k, 0] = x
            out[n + count - 1 - k, 1] = y
        else:
            out[n + k, 0] = x
            out[n + k, 1] = y
        k += 1
        if x == bx and y == by:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy
    return n + k


@njit(cache=True)
def _leaf_tile(t, img, w, tx0, ty0, tx1, ty1, bptr, bx, by, bmask, sptr, sR, sL, skind, scnt):
    b0 = bptr[t]
    B = bptr[t + 1] - b0
    s0 = sptr[t]
    buf = np.empty((tx1[t] - tx0[t] + ty1[t] - ty0[t] + 4, 2), dtype=np.int32)
    for a in range(B):
        for b in range(a + 1, B):
            if bmask[b0 + a] & bmask[b0 + b]:
                continue
            xa, ya = bx[b0 + a], by[b0 + a]
            xb, yb = bx[b0 + b], by[b0 + b]
            R, L = segment_response(img, xa, ya, xb, yb, w)
            k = s0 + tri(a, b, B)
            sR[k] = R
            sL[k] = L
            skind[k] = K_LEAF
            n = bresenham_into(xa, ya, xb, yb, buf, 0)
            ct = 0
            cr = 0
            cb = 0
            cl = 0
            for i in range(n):
                if buf[i, 1] == ty0[t]:
                    ct += 1
                if buf[i, 0] == tx1[t]:
                    cr += 1
                if buf[i, 1] == ty1[t]:
                    cb += 1
                if buf[i, 0] == tx0[t]:
                    cl += 1
            scnt[k, S_TOP] = min(ct, CNT_CAP)
            scnt[k, S_RIGHT] = min(cr, CNT_CAP)
            scnt[k, S_BOTTOM] = min(cb, CNT_CAP)
            scnt[k, S_LEFT] = min(cl, CNT_CAP)


@njit(cache=True)
def _best_pixels(t, k, mode, w, sigma, ln6n, beta, tc1, tc2, bptr, sptr, iptr, ic1, ic2,
                 sR, sL, skind):
    """Indices (ascending) of the ``k`` interface pixels whose best incoming
    child curve scores highest, and the number of entries scanned."""
    i0 = iptr[t]
    nI = iptr[t + 1] - i0
    if k >= nI:
        return np.arange(nI), 0
    best = np.full(nI, -np.inf)
    scanned = 0
    for side in range(2):
        c = tc1[t] if side == 0 else tc2[t]
        B = bptr[c + 1] - bptr[c]
        s0 = sptr[c]
        for i in range(nI):
            j = ic1[i0 + i] if side == 0 else ic2[i0 + i]
            for q in range(B):
                if q == j:
                    continue
                kk = s0 + (tri(q, j, B) if q < j else tri(j, q, B))
                scanned += 1
                if skind[kk] == K_EMPTY:
                    continue
                s = score_of(sR[kk], sL[kk], mode, w, sigma, ln6n, beta)
                if s > best[i]:
                    best[i] = s
    # stable descending order: ties keep the lower interface index
    order = np.argsort(-best, kind="mergesort")
    chosen = np.sort(order[:k])
    return chosen, scanned


@njit(cache=True)
def _merge_tile(t, k, mode, w, sigma, ln6n, beta,
                taxis, tc1, tc2, bptr, bmask, bmap1, bmap2, sptr, iptr, ic1, ic2,
                sR, sL, skind, sjunc, scnt):
    c1 = tc1[t]
    c2 = tc2[t]
    axis = taxis[t]
    b0 = bptr[t]
    B = bptr[t + 1] - b0
    s0 = sptr[t]
    B1 = bptr[c1 + 1] - bptr[c1]
    B2 = bptr[c2 + 1] - bptr[c2]
    s1 = sptr[c1]
    s2 = sptr[c2]
    i0 = iptr[t]
    nI = iptr[t + 1] - i0
    # interface side of each child, in cnt slots
    if axis == 0:
        if1, if2 = S_RIGHT, S_LEFT
    else:
        if1, if2 = S_BOTTOM, S_TOP

    # BC <- BC1 u BC2 for pairs whose ends both lie on the parent boundary
    for a in range(B):
        for b in range(a + 1, B):
            if bmask[b0 + a] & bmask[b0 + b]:
                continue
            kk = s0 + tri(a, b, B)
            for side in range(2):
                if side == 0:
                    ca, cb, cs, cB, ifs, kind = bmap1[b0 + a], bmap1[b0 + b], s1, B1, if1, K_INH1
                else:
                    ca, cb, cs, cB, ifs, kind = bmap2[b0 + a], bmap2[b0 + b], s2, B2, if2, K_INH2
                if ca < 0 or cb < 0:
                    continue
                if ca < cb:
                    ck = cs + tri(ca, cb, cB)
                    sign = 1.0
                else:
                    ck = cs + tri(cb, ca, cB)
                    sign = -1.0
                if skind[ck] == K_EMPTY:
                    continue
                sR[kk] = sign * sR[ck]
                sL[kk] = sL[ck]
                skind[kk] = kind
                for s in range(4):
                    scnt[kk, s] = 0 if s == ifs else scnt[ck, s]
                break

    if k > 0:
        sel, scanned = _best_pixels(t, k, mode, w, sigma, ln6n, beta, tc1, tc2, bptr, sptr,
                                    iptr, ic1, ic2, sR, sL, skind)
    else:
        sel = np.arange(nI)
        scanned = 0
    nS = sel.shape[0]

    # parent boundary pixels inside each child
    na = 0
    nb = 0
    for a in range(B):
        if bmap1[b0 + a] >= 0:
            na += 1
        if bmap2[b0 + a] >= 0:
            nb += 1
    A1 = np.empty(na, dtype=np.int64)
    A2 = np.empty(nb, dtype=np.int64)
    na = 0
    nb = 0
    for a in range(B):
        if bmap1[b0 + a] >= 0:
            A1[na] = a
            na += 1
        if bmap2[b0 + a] >= 0:
            A2[nb] = a
            nb += 1

    # sub-curves p1 -> p3 in child 1 and p3 -> p2 in child 2
    R1 = np.zeros((na, nS))
    L1 = np.zeros((na, nS))
    K1 = np.full((na, nS), -1, dtype=np.int64)
    for ia in range(na):
        ca = bmap1[b0 + A1[ia]]
        for m in range(nS):
            j = ic1[i0 + sel[m]]
            if j == ca:
                continue
            if ca < j:
                ck = s1 + tri(ca, j, B1)
                sign = 1.0
            else:
                ck = s1 + tri(j, ca, B1)
                sign = -1.0
            if skind[ck] == K_EMPTY:
                continue
            R1[ia, m] = sign * sR[ck]
            L1[ia, m] = sL[ck]
            K1[ia, m] = ck
    R2 = np.zeros((nb, nS))
    L2 = np.zeros((nb, nS))
    K2 = np.full((nb, nS), -1, dtype=np.int64)
    for ib in range(nb):
        cb = bmap2[b0 + A2[ib]]
        for m in range(nS):
            j = ic2[i0 + sel[m]]
            if j == cb:
                continue
            if j < cb:
                ck = s2 + tri(j, cb, B2)
                sign = 1.0
            else:
                ck = s2 + tri(cb, j, B2)
                sign = -1.0
            if skind[ck] == K_EMPTY:
                continue
            R2[ib, m] = sign * sR[ck]
            L2[ib, m] = sL[ck]
            K2[ib, m] = ck

    ncat = 0
    for ia in range(na):
        a = A1[ia]
        for ib in range(nb):
            b = A2[ib]
            if a == b or (bmask[b0 + a] & bmask[b0 + b]):
                continue
            bm = -1
            bs = -np.inf
            bc = 0.0
            bl = 0.0
            br = 0.0
            for m in range(nS):
                k1 = K1[ia, m]
                k2 = K2[ib, m]
                if k1 < 0 or k2 < 0:
                    continue
                ncat += 1
                if scnt[k1, if1] > 1 and scnt[k2, if2] > 1:
                    continue
                R = R1[ia, m] + R2[ib, m]
                L = L1[ia, m] + L2[ib, m]
                s = score_of(R, L, mode, w, sigma, ln6n, beta)
                c = abs(R) / (w * L)
                if bm < 0 or better(s, c, L, bs, bc, bl):
                    bm = m
                    bs = s
                    bc = c
                    bl = L
                    br = R
            if bm < 0:
                continue
            if a < b:
                kk = s0 + tri(a, b, B)
                R = br
                kind = K_JA1
            else:
                kk = s0 + tri(b, a, B)
                R = -br
                kind = K_JA2
            if skind[kk] != K_EMPTY:
                s_old = score_of(sR[kk], sL[kk], mode, w, sigma, ln6n, beta)
                c_old = abs(sR[kk]) / (w * sL[kk])
                if not better(bs, bc, bl, s_old, c_old, sL[kk]):
                    continue
            p3 = sel[bm]
            k1 = K1[ia, bm]
            k2 = K2[ib, bm]
            sR[kk] = R
            sL[kk] = bl
            skind[kk] = kind
            sjunc[kk] = p3
            first = 1 if p3 == 0 else 0
            last = 1 if p3 == nI - 1 else 0
            if axis == 0:
                ct = int(scnt[k1, S_TOP]) + int(scnt[k2, S_TOP]) - first
                cbt = int(scnt[k1, S_BOTTOM]) + int(scnt[k2, S_BOTTOM]) - last
                cl = int(scnt[k1, S_LEFT])
                cr = int(scnt[k2, S_RIGHT])
            else:
                cl = int(scnt[k1, S_LEFT]) + int(scnt[k2, S_LEFT]) - first
                cr = int(scnt[k1, S_RIGHT]) + int(scnt[k2, S_RIGHT]) - last
                ct = int(scnt[k1, S_TOP])
                cbt = int(scnt[k2, S_BOTTOM])
            scnt[kk, S_TOP] = min(ct, CNT_CAP)
            scnt[kk, S_RIGHT] = min(cr, CNT_CAP)
            scnt[kk, S_BOTTOM] = min(cbt, CNT_CAP)
            scnt[kk, S_LEFT] = min(cl, CNT_CAP)
    return ncat, scanned


@njit(parallel=True, cache=True)
def process_level(tiles, img, k, mode, w, sigma, ln6n, beta,
                  tx0, ty0, tx1, ty1, taxis, tc1, tc2, bptr, bx, by, bmask, bmap1, bmap2,
                  sptr, iptr, ic1, ic2, sR, sL, skind, sjunc, scnt, ncat, nsel):
    for i in prange(tiles.shape[0]):
        t = tiles[i]
        if tc1[t] < 0:
            _leaf_tile(t, img, w, tx0, ty0, tx1, ty1, bptr, bx, by, bmask, sptr,
                       sR, sL, skind, scnt)
        else:
            c, s = _merge_tile(t, k, mode, w, sigma, ln6n, beta, taxis, tc1, tc2, bptr,
                               bmask, bmap1, bmap2, sptr, iptr, ic1, ic2,
                               sR, sL, skind, sjunc, scnt)
            ncat[t] = c
            nsel[t] = s


@njit(cache=True)
def trace(t, a, b, tc1, tc2, bptr, bx, by, bmap1, bmap2, sptr, iptr, ic1, ic2,
          skind, sjunc, out, near=None, limit=np.inf):
    """Write the pixel chain of stored curve ``(t, a -> b)`` into ``out``.

    With a ``near`` mask, gives up and returns -1 as soon as more than
    ``limit`` traced pixels are set in it.
    """
    marked = 0
    st_t = np.empty(512, dtype=np.int64)
    st_a = np.empty(512, dtype=np.int64)
    st_b = np.empty(512, dtype=np.int64)
    top = 0
    st_t[0] = t
    st_a[0] = a
    st_b[0] = b
    top = 1
    n = 0
    while top > 0:
        top -= 1
        t = st_t[top]
        a = st_a[top]
        b = st_b[top]
        b0 = bptr[t]
        B = bptr[t + 1] - b0
        lo = min(a, b)
        hi = max(a, b)
        kk = sptr[t] + tri(lo, hi, B)
        kind = skind[kk]
        if kind == K_LEAF:
            start = n - 1 if n > 0 else 0
            m = bresenham_into(bx[b0 + a], by[b0 + a], bx[b0 + b], by[b0 + b], out, start)
            if near is not None:
                # the first pixel of this piece repeats the previous piece's last
                for i in range(n, m):
                    if near[out[i, 1], out[i, 0]]:
                        marked += 1
                if marked > limit:
                    return -1
            n = m
        elif kind == K_INH1:
            st_t[top] = tc1[t]
            st_a[top] = bmap1[b0 + a]
            st_b[top] = bmap1[b0 + b]
            top += 1
        elif kind == K_INH2:
            st_t[top] = tc2[t]
            st_a[top] = bmap2[b0 + a]
            st_b[top] = bmap2[b0 + b]
            top += 1
        else:
            j = iptr[t] + sjunc[kk]
            lo_in_c1 = kind == K_JA1
            a_in_c1 = lo_in_c1 == (a == lo)
            if a_in_c1:
                # a -> p3 in child 1, then p3 -> b in child 2; push second first
                st_t[top] = tc2[t]
                st_a[top] = ic2[j]
                st_b[top] = bmap2[b0 + b]
                st_t[top + 1] = tc1[t]
                st_a[top + 1] = bmap1[b0 + a]
                st_b[top + 1] = ic1[j]
            else:
                st_t[top] = tc1[t]
                st_a[top] = ic1[j]
                st_b[top] = bmap1[b0 + b]
                st_t[top + 1] = tc2[t]
                st_a[top + 1] = bmap2[b0 + a]
                st_b[top + 1] = ic2[j]
            top += 2
    return n


@njit(cache=True)
def positive_entries(mode, w, sigma, ln6n, beta, ntiles, bptr, sptr, sR, sL, skind, min_score):
    """(tile, a, b, score, R, L) of every originating entry scoring above ``min_score``."""
    count = 0
    for t in range(ntiles):
        for kk in range(sptr[t], sptr[t + 1]):
            kd = skind[kk]
            if kd == K_LEAF or kd >= K_JA1:
                if score_of(sR[kk], sL[kk], mode, w, sigma, ln6n, beta) > min_score:
                    count += 1
    ot = np.empty(count, dtype=np.int64)
    oa = np.empty(count, dtype=np.int64)
    ob = np.empty(count, dtype=np.int64)
    osc = np.empty(count)
    oR = np.empty(count)
    oL = np.empty(count)
    n = 0
    for t in range(ntiles):
        B = bptr[t + 1] - bptr[t]
        kk = sptr[t]
        for a in range(B):
            for b in range(a + 1, B):
                kd = skind[kk]
                if kd == K_LEAF or kd >= K_JA1:
                    s = score_of(sR[kk], sL[kk], mode, w, sigma, ln6n, beta)
                    if s > min_score:
                        ot[n] = t
                        oa[n] = a
                        ob[n] = b
                        osc[n] = s
                        oR[n] = sR[kk]
                        oL[n] = sL[kk]
                        n += 1
                kk += 1
    return ot, oa, ob, osc, oR, oL


@njit(cache=True)
def paint_edge_map(E, near, ct, ca, cb, cs, cl, frac, radius, tc1, tc2, bptr, bx, by, bmap1, bmap2,
                   sptr, iptr, ic1, ic2, skind, sjunc):
    """Greedy non-maximal suppression over curves already sorted by score."""
    buf = np.empty((E.shape[0] * E.shape[1] + 8, 2), dtype=np.int32)
    accepted = np.zeros(ct.shape[0], dtype=np.bool_)
    for i in range(ct.shape[0]):
        # a chain of length L has at most L + 1 pixels, so more than
        # frac * (L + 1) marked pixels already decides a rejection
        n = trace(ct[i], ca[i], cb[i], tc1, tc2, bptr, bx, by, bmap1, bmap2, sptr, iptr,
                  ic1, ic2, skind, sjunc, buf, near, frac * (cl[i] + 1.0) + 1e-9)
        if n > 0 and paint_one(E, near, buf, n, cs[i], frac, radius):
            accepted[i] = True
    return accepted


@njit(cache=True)
def paint_one(E, near, pix, n, score, frac, radius):
    """Paint one curve unless more than ``frac`` of its pixels are marked.

    A pixel counts as marked when some pixel within Chebyshev distance
    ``radius`` of it has been painted; ``near`` caches that neighbourhood.
    """
    h = E.shape[0]
    wd = E.shape[1]
    limit = frac * n
    marked = 0
    for i in range(n):
        if near[pix[i, 1], pix[i, 0]]:
            marked += 1
            if marked > limit:
                return False
    for i in range(n):
        y = pix[i, 1]
        x = pix[i, 0]
        if score > E[y, x]:
            E[y, x] = score
        for yy in range(max(y - radius, 0), min(y + radius, h - 1) + 1):
            for xx in range(max(x - radius, 0), min(x + radius, wd - 1) + 1):
                near[yy, xx] = True
    return True
