import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beamcurve.partition import (BOTTOM, LEFT, RIGHT, TOP, PartitionError, Tile, boundary_pairs,
                                 boundary_pixels, build_partition, side_pixels, split,
                                 split_bounds, stored_pair_count)

sizes = st.integers(5, 70)


def test_129_levels_and_level_two_squares():
    part = build_partition(129, 129, 5)
    assert part.depth == 10
    lvl2 = part.level(2)
    assert len(lvl2) == 4
    assert all((t.width, t.height) == (65, 65) for t in lvl2)


def test_single_leaf():
    part = build_partition(5, 5, 5)
    assert len(part.tiles) == 1 and part.is_leaf(part.root)


def test_too_small_rejected():
    with pytest.raises(PartitionError):
        build_partition(4, 9, 5)
    with pytest.raises(PartitionError):
        build_partition(9, 9, 2)


def test_split_examples():
    root = Tile(0, 0, 0, 0, 128, 128)
    c1, c2, iface = split(root)
    assert (c1.width, c1.height) == (65, 129) and (c2.width, c2.height) == (65, 129)
    assert len(iface) == 129 and set(iface[:, 0]) == {64}
    c3, c4, iface2 = split(c1, next_id=3)
    assert (c3.width, c3.height) == (65, 65) and (c4.width, c4.height) == (65, 65)
    assert set(iface2[:, 1]) == {64}
    with pytest.raises(PartitionError):
        split(Tile(0, 0, 0, 0, 4, 4))


def test_dump_lists_every_tile():
    part = build_partition(9, 9, 5)
    text = part.dump()
    assert text.splitlines()[0] == "partition 9x9 n_min=5"
    assert len(text.splitlines()) == 1 + len(part.tiles)
    assert "tile 0 level=0 bounds=0,0,8,8 children=1,2 interface=4,0-4,8" in text


@given(sizes, sizes)
def test_tile_count_law_for_square_grids(w, h):
    part = build_partition(w, h, 5)
    # every level above the leaves is complete: 2^j tiles
    leaf_levels = {t.level for t in part.leaves()}
    for j in range(min(leaf_levels) + 1):
        assert len(part.level(j)) == 2 ** j


@pytest.mark.parametrize("n", [9, 17, 33, 65, 129])
def test_tile_count_law_power_of_two_plus_one(n):
    part = build_partition(n, n, 5)
    for j in range(part.depth + 1):
        assert len(part.level(j)) == 2 ** j


@given(sizes, sizes)
def test_children_cover_parent_with_shared_line(w, h):
    part = build_partition(w, h, 5)
    for tid, (c1, c2) in part.children.items():
        t = part.tiles[tid]
        iface = part.interfaces[tid]
        assert c1.area + c2.area - len(iface) == t.area
        for x, y in iface:
            assert c1.contains(x, y) and c2.contains(x, y)
        # equal halves up to one row or column
        assert abs(c1.area - c2.area) <= max(t.width, t.height)


@given(sizes, sizes)
def test_leaves_cover_image_and_respect_n_min(w, h):
    part = build_partition(w, h, 5)
    cover = np.zeros((h, w), dtype=int)
    for t in part.leaves():
        assert max(t.width, t.height) <= 5
        cover[t.y0:t.y1 + 1, t.x0:t.x1 + 1] += 1
    assert cover.min() >= 1


@pytest.mark.parametrize("n", [17, 33, 65, 129])
def test_even_levels_square_odd_levels_two_to_one(n):
    part = build_partition(n, n, 5)
    for t in part.tiles:
        if t.level % 2 == 0:
            assert abs(t.width - t.height) <= 1
        else:
            assert abs(t.height - 2 * t.width + 1) <= 1 or abs(t.width - 2 * t.height + 1) <= 1


@given(st.integers(0, 20), st.integers(0, 20), st.integers(2, 30), st.integers(2, 30))
def test_boundary_walk(x0, y0, w, h):
    x1, y1 = x0 + w - 1, y0 + h - 1
    pix, mask = boundary_pixels(x0, y0, x1, y1)
    assert len(pix) == 2 * (w + h) - 4
    assert len({tuple(p) for p in pix}) == len(pix)
    assert tuple(pix[0]) == (x0, y0)
    # consecutive pixels are 4-neighbours (clockwise walk)
    steps = np.abs(np.diff(np.vstack([pix, pix[:1]]), axis=0)).sum(axis=1)
    assert np.all(steps == 1)
    corners = {(x0, y0), (x1, y0), (x1, y1), (x0, y1)}
    for p, m in zip(map(tuple, pix), mask):
        nbits = bin(int(m)).count("1")
        assert nbits == (2 if p in corners else 1)


def test_side_pixels():
    t = Tile(0, 0, 2, 3, 6, 5)
    assert side_pixels(t, TOP).tolist() == [[x, 3] for x in range(2, 7)]
    assert side_pixels(t, RIGHT).tolist() == [[6, y] for y in range(3, 6)]
    assert side_pixels(t, BOTTOM)[0].tolist() == [2, 5]
    assert side_pixels(t, LEFT)[-1].tolist() == [2, 5]
    with pytest.raises(ValueError):
        side_pixels(t, 16)


def test_boundary_pairs_root_count():
    n = 33
    part = build_partition(n, n, 5)
    c1, c2 = part.children[0]
    pairs = boundary_pairs(part.root, c1, c2)
    assert len(pairs) == len(set(pairs))
    assert all(p != q for p, q in pairs)
    # about 2n boundary pixels per half, minus same-side pairs
    assert 2.5 * n * n < len(pairs) < 4.5 * n * n


def test_boundary_pairs_thin_tile():
    t = Tile(0, 0, 0, 0, 2, 9)
    b1, b2, _, _ = split_bounds(*t.bounds)
    c1, c2 = Tile(1, 1, *b1), Tile(2, 1, *b2)
    pairs = boundary_pairs(t, c1, c2)
    assert pairs and len(pairs) == len(set(pairs))


@given(st.integers(3, 25), st.integers(3, 25))
def test_stored_pair_count_closed_form(w, h):
    pix, mask = boundary_pixels(0, 0, w - 1, h - 1)
    brute = sum(1 for i, j in itertools.combinations(range(len(pix)), 2) if not mask[i] & mask[j])
    assert stored_pair_count(Tile(0, 0, 0, 0, w - 1, h - 1)) == brute


@pytest.mark.parametrize("n", [33, 65, 129])
def test_stored_pairs_per_level_near_6N(n):
    part = build_partition(n, n, 5)
    N = n * n
    for j in range(part.depth + 1):
        total = sum(stored_pair_count(t) for t in part.level(j))
        assert 3 * N <= total <= 12 * N
