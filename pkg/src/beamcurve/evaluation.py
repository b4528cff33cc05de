"""Evaluation: F-measure, the Canny baseline, the SNR sweep and benchmarks.

Detector outputs and ground truth (Canny on the clean pattern) are both
thinned to one-pixel-wide lines before matching, the usual
boundary-benchmark practice. A soft map is scored at its best binarization
level among ``SOFT_LEVELS`` equally spaced fractions of its maximum, per
image.
"""

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.spatial import cKDTree
from skimage.feature import canny
from skimage.morphology import thin

from .edgemap import DEFAULT_OVERLAP, DEFAULT_RADIUS

DEFAULT_TOL = 2.0
CANNY_LOW, CANNY_HIGH = 0.26, 0.65
SNR_GRID = tuple(round(0.6 + 0.2 * i, 1) for i in range(11))
SOFT_LEVELS = 25
SNR_RANGES = {"0.6-1.0": (0.6, 1.0), "1.2-2.0": (1.2, 2.0), "2.2-2.6": (2.2, 2.6)}


@dataclass(frozen=True)
class MatchResult:
    precision: float
    recall: float
    f_score: float
    matched: int
    n_detected: int
    n_truth: int


def _f(p, r):
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def f_measure(detected, truth, tol=DEFAULT_TOL):
    """One-to-one matching of detected to truth pixels within distance ``tol``.

    The matching has maximum cardinality (Hopcroft-Karp on the bipartite
    graph of pixel pairs at most ``tol`` apart), so its size depends only on
    the two pixel sets: deterministic and symmetric under swapping inputs.
    """
    detected = np.asarray(detected, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if detected.shape != truth.shape:
        raise ValueError(f"shape mismatch {detected.shape} vs {truth.shape}")
    dp = np.argwhere(detected)
    tp = np.argwhere(truth)
    nd, nt = len(dp), len(tp)
    matched = 0
    if nd and nt:
        sdm = cKDTree(dp).sparse_distance_matrix(cKDTree(tp), tol, output_type="ndarray")
        if len(sdm):
            graph = csr_matrix((np.ones(len(sdm), dtype=np.int8), (sdm["i"], sdm["j"])),
                               shape=(nd, nt))
            matched = int(np.count_nonzero(maximum_bipartite_matching(graph) >= 0))
    p = matched / nd if nd else 0.0
    r = matched / nt if nt else 0.0
    return MatchResult(p, r, _f(p, r), matched, nd, nt)


def canny_baseline(img, low=CANNY_LOW, high=CANNY_HIGH, smoothing_sigma=1.0):
    """Canny edges with hysteresis thresholds given as fractions of the
    largest smoothed gradient magnitude."""
    if not 0 <= low <= high:
        raise ValueError("need 0 <= low <= high")
    img = np.asarray(img, dtype=np.float64)
    sm = ndimage.gaussian_filter(img, smoothing_sigma, mode="nearest")
    gmax = float(np.hypot(ndimage.sobel(sm, 0), ndimage.sobel(sm, 1)).max())
    if gmax <= 1e-12:
        return np.zeros(img.shape, dtype=bool)
    return canny(img, sigma=smoothing_sigma, low_threshold=low * gmax,
                 high_threshold=high * gmax, mode="nearest")


def thin_edges(mask):
    return thin(np.asarray(mask, dtype=bool))


def score_detection(edges, truth, tol=DEFAULT_TOL, levels=SOFT_LEVELS):
    """F-measure of a binary mask, or of a soft map at its best level.

    Detections and truth are both thinned before matching.
    """
    edges = np.asarray(edges)
    truth = thin_edges(truth)
    if edges.dtype == bool:
        return f_measure(thin_edges(edges), truth, tol)
    top = float(edges.max()) if edges.size else 0.0
    if top <= 0:
        return f_measure(np.zeros(edges.shape, dtype=bool), truth, tol)
    best = None
    for t in range(levels):
        r = f_measure(thin_edges(edges > top * t / levels), truth, tol)
        if best is None or r.f_score > best.f_score:
            best = r
    return best


# ---------------------------------------------------------------- detectors

@dataclass(frozen=True)
class BeamCurveDetector:
    k: int | None = None
    w: int = 4
    beta: float | None = None
    n_min: int = 5
    overlap: float = DEFAULT_OVERLAP
    radius: int = DEFAULT_RADIUS
    threads: int | None = None

    @property
    def name(self):
        return "basic" if self.k is None else f"fast-k{self.k}"

    def __call__(self, img, sigma):
        from .edgemap import detect_edges
        return detect_edges(img, sigma, k=self.k, w=self.w, beta=self.beta, n_min=self.n_min,
                            overlap=self.overlap, radius=self.radius,
                            threads=self.threads).values


@dataclass(frozen=True)
class CannyDetector:
    low: float = CANNY_LOW
    high: float = CANNY_HIGH
    smoothing: float = 1.0
    name: str = "canny"

    def __call__(self, img, sigma):
        return canny_baseline(img, self.low, self.high, self.smoothing)


def default_detectors(k=2, threads=None):
    return [BeamCurveDetector(None, threads=threads), BeamCurveDetector(k, threads=threads),
            CannyDetector()]


# ---------------------------------------------------------------- sweep

@dataclass
class SweepReport:
    snrs: list
    detectors: list
    f: dict = field(default_factory=dict)        # (name, snr) -> per-seed F list
    runtime: dict = field(default_factory=dict)  # (name, snr) -> seconds, summed

    def mean(self, name, snr):
        return float(np.mean(self.f[(name, snr)]))

    def stderr(self, name, snr):
        v = self.f[(name, snr)]
        return float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0

    def range_mean(self, name, lo, hi):
        vals = [self.mean(name, s) for s in self.snrs if lo - 1e-9 <= s <= hi + 1e-9]
        return float(np.mean(vals)) if vals else float("nan")

    def ranges(self):
        return {name: {r: self.range_mean(name, *b) for r, b in SNR_RANGES.items()}
                for name in self.detectors}

    def table(self):
        head = "snr   " + "".join(f"{n:>16}" for n in self.detectors)
        lines = [head]
        for s in self.snrs:
            row = f"{s:<6.2f}" + "".join(
                f"{self.mean(n, s):>10.3f}±{self.stderr(n, s):.3f}" for n in self.detectors)
            lines.append(row)
        lines.append("")
        lines.append("range " + "".join(f"{n:>16}" for n in self.detectors))
        rng = self.ranges()
        for r in SNR_RANGES:
            lines.append(f"{r:<6}" + "".join(f"{rng[n][r]:>16.3f}" for n in self.detectors))
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["detector", "snr", "mean_f", "stderr", "runtime_s", "seeds"])
            for n in self.detectors:
                for s in self.snrs:
                    wr.writerow([n, s, f"{self.mean(n, s):.6f}", f"{self.stderr(n, s):.6f}",
                                 f"{self.runtime[(n, s)]:.4f}", len(self.f[(n, s)])])


def noisy_instance(clean, snr_value, sigma, seed, sp_fraction=0.01):
    """Rescale the clean pattern to contrast ``snr * sigma`` and add noise."""
    from .image import NoiseSpec, add_noise
    lo, hi = float(clean.min()), float(clean.max())
    scaled = (clean - lo) / (hi - lo) * snr_value * sigma
    return add_noise(scaled, NoiseSpec(sigma, sp_fraction, seed=seed))


def snr_sweep(clean, snr_grid=SNR_GRID, seeds=range(10), detectors=None, sigma=0.1,
              sp_fraction=0.01, tol=DEFAULT_TOL, truth=None, progress=None):
    """F-measure of each detector on noisy versions of ``clean``.

    Every (snr, seed) cell uses the same noisy image for all detectors.
    """
    if not len(snr_grid):
        raise ValueError("empty SNR grid")
    detectors = detectors or default_detectors()
    if truth is None:
        truth = canny_baseline(clean)
    seeds = list(seeds)
    rep = SweepReport(list(snr_grid), [d.name for d in detectors])
    for si, s in enumerate(snr_grid):
        for d in detectors:
            rep.f[(d.name, s)] = []
            rep.runtime[(d.name, s)] = 0.0
        for seed in seeds:
            img = noisy_instance(clean, s, sigma, seed_for(seed, si), sp_fraction)
            for d in detectors:
                t0 = time.perf_counter()
                edges = d(img, sigma)
                rep.runtime[(d.name, s)] += time.perf_counter() - t0
                rep.f[(d.name, s)].append(score_detection(edges, truth, tol).f_score)
        if progress:
            progress(s, rep)
    return rep


def seed_for(seed, index):
    """Derive a per-cell seed so each SNR point sees independent noise."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


# ---------------------------------------------------------------- benchmark

@dataclass
class BenchRow:
    size: int
    mode: str
    seconds: float
    concatenations: int
    selections: int
    stored: int

    @property
    def N(self):
        return self.size * self.size


def loglog_slope(x, y):
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(x, y, 1)[0])


def benchmark(sizes=(65, 129, 257), modes=None, repeats=1, sigma=1.0, seed=0, threads=None):
    """Wall-clock and operation counts of the tree build on pure noise."""
    from .beamtree import DetectParams, MergeMode, build_beam_tree
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    modes = modes or [MergeMode.basic(), MergeMode.optimized(2)]
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        img = rng.normal(0.0, sigma, (n, n))
        for m in modes:
            best = math.inf
            for _ in range(max(1, repeats)):
                t0 = time.perf_counter()
                tree = build_beam_tree(img, DetectParams(sigma=sigma), m, threads=threads)
                best = min(best, time.perf_counter() - t0)
            c = tree.counters
            rows.append(BenchRow(n, m.name, best, c.concatenations, c.selections, c.stored))
    return rows


def bench_table(rows):
    lines = [f"{'size':>6} {'mode':>10} {'seconds':>9} {'concat':>14} {'bound':>14} "
             f"{'stored/N':>9}"]
    for r in rows:
        if r.mode == "basic":
            bound = 18 * r.N ** 1.5
        else:
            k = int(r.mode.split("=")[1].rstrip(")"))
            bound = (6 * k + 1) * r.N * math.log2(r.N)
        lines.append(f"{r.size:>6} {r.mode:>10} {r.seconds:>9.3f} {r.concatenations:>14d} "
                     f"{bound:>14.0f} {r.stored / r.N:>9.2f}")
    for mode in dict.fromkeys(r.mode for r in rows):
        sel = [r for r in rows if r.mode == mode]
        if len(sel) > 1:
            s_c = loglog_slope([r.N for r in sel], [r.concatenations for r in sel])
            s_t = loglog_slope([r.N for r in sel], [max(r.seconds, 1e-9) for r in sel])
            lines.append(f"# {mode}: slope(concat vs N) = {s_c:.3f}  slope(time vs N) = {s_t:.3f}")
    return "\n".join(lines) + "\n"


def write_bench_csv(rows, path):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["size", "mode", "seconds", "concatenations", "selections", "stored"])
        for r in rows:
            wr.writerow([r.size, r.mode, f"{r.seconds:.6f}", r.concatenations, r.selections,
                         r.stored])
