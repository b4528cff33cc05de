import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beamcurve.beamtree import DetectParams, build_beam_tree, collect_curves
from beamcurve.edgemap import EdgeMap, binarize, build_edge_map, detect_edges, save_edge_map
from beamcurve.image import load_image
from beamcurve.response import bresenham


def line(p, q):
    return bresenham(p, q)


def test_empty_list_gives_zero_map():
    E = build_edge_map([], (10, 12))
    assert E.values.shape == (10, 12) and not E.values.any()
    assert E.accepted == 0 and E.considered == 0


def test_identical_curves_keep_first():
    P = line((1, 1), (15, 9))
    E = build_edge_map([(P, 5.0), (P, 3.0)], (20, 20))
    assert E.accepted == 1 and list(E.painted) == [0]
    assert np.all(E.values[P[:, 1], P[:, 0]] == 5.0)
    assert np.count_nonzero(E.values) == len(P)


def test_disjoint_curves_both_painted():
    a, b = line((0, 0), (19, 0)), line((0, 10), (19, 10))
    E = build_edge_map([(a, 4.0), (b, 2.0)], (20, 20))
    assert E.accepted == 2
    assert np.all(E.values[0] == 4.0) and np.all(E.values[10] == 2.0)


def test_nearby_parallel_duplicate_suppressed_by_radius():
    a, b = line((0, 5), (19, 5)), line((0, 6), (19, 6))
    assert build_edge_map([(a, 4.0), (b, 2.0)], (20, 20)).accepted == 1
    exact = build_edge_map([(a, 4.0), (b, 2.0)], (20, 20), radius=0)
    assert exact.accepted == 2


def test_crossing_curve_keeps_higher_value():
    a, b = line((0, 10), (20, 10)), line((10, 0), (10, 20))
    E = build_edge_map([(a, 4.0), (b, 2.0)], (21, 21))
    assert E.accepted == 2
    assert E.values[10, 10] == 4.0 and E.values[0, 10] == 2.0


def test_input_validation():
    P = line((0, 0), (4, 0))
    with pytest.raises(ValueError):
        build_edge_map([(P, 1.0), (P, 2.0)], (5, 5))
    with pytest.raises(ValueError):
        build_edge_map([(P, 0.0)], (5, 5))
    with pytest.raises(ValueError):
        build_edge_map([(P, 1.0)], (5, 5), overlap_fraction=1.5)
    with pytest.raises(ValueError):
        build_edge_map([(P, 1.0)], (5, 5), radius=-1)
    with pytest.raises(ValueError):
        binarize(np.zeros((2, 2)), -1)


def test_binarize_levels():
    E = EdgeMap(np.array([[0.0, 0.5], [1.0, 2.0]]))
    assert binarize(E).tolist() == [[False, True], [True, True]]
    assert E.binarize(1.0).tolist() == [[False, False], [False, True]]
    assert not binarize(E, 5.0).any()
    on = [binarize(E, t).sum() for t in (0, 0.5, 1, 2)]
    assert on == sorted(on, reverse=True)


curve_lists = st.lists(
    st.tuples(st.integers(0, 15), st.integers(0, 15), st.integers(0, 15), st.integers(0, 15),
              st.floats(0.01, 10)),
    max_size=12)


@given(curve_lists, st.floats(0, 1), st.integers(0, 3))
def test_paint_never_decreases_and_values_are_scores(raw, frac, radius):
    curves = [(line((a, b), (c, d)), s) for a, b, c, d, s in raw if (a, b) != (c, d)]
    curves.sort(key=lambda cs: -cs[1])
    prev = np.zeros((16, 16))
    for n in range(len(curves) + 1):
        E = build_edge_map(curves[:n], (16, 16), frac, radius)
        assert np.all(E.values >= prev)
        prev = E.values
    if curves:
        scores = {s for i, (_, s) in enumerate(curves) if i in set(E.painted)}
        assert set(np.unique(E.values[E.values > 0])) <= scores
        # a pixel is nonzero iff some painted curve covers it
        cover = np.zeros((16, 16), bool)
        for i in E.painted:
            P = curves[i][0]
            cover[P[:, 1], P[:, 0]] = True
        assert np.array_equal(cover, E.values > 0)


def _pattern_image(seed=0):
    rng = np.random.default_rng(seed)
    img = np.zeros((65, 65))
    yy, xx = np.mgrid[:65, :65]
    img[(xx - 32) ** 2 + (yy - 32) ** 2 < 18 ** 2] = 1.0
    return img + rng.normal(0, 0.5, img.shape)


def test_kernel_path_matches_list_path():
    img = _pattern_image()
    tree = build_beam_tree(img, DetectParams(sigma=0.5))
    curves = collect_curves(tree)
    fast = build_edge_map(curves, img.shape)
    listed = [(curves.pixels(i), float(curves.score[i])) for i in range(len(curves))]
    slow = build_edge_map(listed, img.shape)
    assert np.array_equal(fast.values, slow.values)
    assert np.array_equal(fast.painted, slow.painted)


def test_detect_edges_deterministic_and_thread_free():
    img = _pattern_image(1)
    a = detect_edges(img, 0.5, threads=1)
    b = detect_edges(img, 0.5, threads=4)
    assert a.accepted > 0
    assert np.array_equal(a.values, b.values)
    c = detect_edges(img, 0.5, k=2)
    assert c.values.shape == img.shape and c.accepted > 0


def test_save_edge_map_roundtrip(tmp_path):
    E = EdgeMap(np.array([[0.0, 0.25], [0.5, 1.0]]))
    path = tmp_path / "e.pgm"
    save_edge_map(E, path, bits=16)
    back = load_image(path)
    assert np.allclose(back, E.values, atol=1e-4)
