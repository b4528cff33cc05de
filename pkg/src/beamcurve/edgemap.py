"""Soft edge map: greedy non-maximal suppression over scored curves.

Curves are visited best first. A curve most of whose pixels are already
marked is dropped as a duplicate; otherwise each of its pixels takes the
larger of its current value and the curve's score. Values never decrease.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as K

DEFAULT_OVERLAP = 0.3
DEFAULT_RADIUS = 2


@dataclass
class EdgeMap:
    values: np.ndarray
    accepted: int = 0
    considered: int = 0
    painted: np.ndarray | None = None  # indices of the painted curves, in visiting order

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def height(self):
        return self.values.shape[0]

    def binarize(self, level=0.0):
        return binarize(self, level)


def binarize(E, level=0.0):
    """Pixels whose value exceeds ``level``."""
    if level < 0:
        raise ValueError("level must be >= 0")
    vals = E.values if isinstance(E, EdgeMap) else np.asarray(E)
    return vals > level


def _check_order(scores):
    scores = np.asarray(scores, dtype=np.float64)
    if np.any(scores <= 0):
        raise ValueError("edge-map curves must have positive scores")
    if np.any(np.diff(scores) > 0):
        raise ValueError("curves must be sorted by descending score")
    return scores


def build_edge_map(curves, dims, overlap_fraction=DEFAULT_OVERLAP, radius=DEFAULT_RADIUS):
    """Paint ``curves`` onto a ``dims = (height, width)`` raster.

    ``curves`` is either a ``CurveSet`` from ``collect_curves`` (painted
    inside a kernel, tracing chains from the tree) or a sequence of
    ``(pixels, score)`` with pixels as ``(n, 2)`` (x, y) arrays.
    """
    if not 0 <= overlap_fraction <= 1:
        raise ValueError("overlap_fraction must lie in [0, 1]")
    if radius < 0:
        raise ValueError("radius must be >= 0")
    E = np.zeros(dims, dtype=np.float64)
    near = np.zeros(dims, dtype=np.bool_)
    if hasattr(curves, "tree"):
        _check_order(curves.score)
        flat, tree = curves.tree.flat, curves.tree
        acc = K.paint_edge_map(E, near, curves.tile, curves.a, curves.b,
                               curves.score.astype(np.float64), curves.L.astype(np.float64),
                               float(overlap_fraction), int(radius),
                               *flat.trace_args(), tree.kind, tree.junction)
        painted = np.flatnonzero(acc)
        return EdgeMap(E, len(painted), len(curves), painted)
    curves = list(curves)
    _check_order([s for _, s in curves])
    painted = []
    for i, (pix, s) in enumerate(curves):
        pix = np.ascontiguousarray(pix, dtype=np.int32).reshape(-1, 2)
        if K.paint_one(E, near, pix, len(pix), float(s), float(overlap_fraction), int(radius)):
            painted.append(i)
    return EdgeMap(E, len(painted), len(curves), np.array(painted, dtype=np.int64))


def save_edge_map(E, path, bits=8):
    """Save min-max scaled to the raster range; the sidecar keeps the scale."""
    from .image import save_image
    vals = E.values if isinstance(E, EdgeMap) else np.asarray(E)
    hi = float(vals.max()) if vals.size and vals.max() > 0 else 1.0
    return save_image(vals, path, bits=bits, lo=0.0, hi=hi)


def detect_edges(img, sigma, k=None, w=4, beta=None, n_min=5, overlap=DEFAULT_OVERLAP,
                 radius=DEFAULT_RADIUS, threads=None):
    """Full pipeline: tree build, positive-score curves, edge map.

    ``k=None`` runs the basic mode, an integer the best-k mode. ``beta``
    defaults to the calibrated detection value.
    """
    from .beamtree import DetectParams, MergeMode, build_beam_tree, collect_curves
    from .scoring import DEFAULT_BETA
    img = np.asarray(img, dtype=np.float64)
    params = DetectParams(w=w, sigma=float(sigma), beta=DEFAULT_BETA if beta is None else beta,
                          n_min=n_min)
    mode = MergeMode.basic() if k is None else MergeMode.optimized(k)
    tree = build_beam_tree(img, params, mode, threads=threads)
    curves = collect_curves(tree)
    E = build_edge_map(curves, img.shape, overlap, radius)
    E.curves = curves
    return E
