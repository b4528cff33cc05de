"""Length-dependent detection threshold and edge score.

A curve of length ``L`` is significant when its mean contrast exceeds the
largest contrast expected among the ``K_L ~ 6 N 2^(beta L)`` pure-noise
candidates of that length,

    T(L) = s * sqrt(2 ln(6 N 2^(beta L)) / (w L)),    s = sigma * sqrt(gain),

and its score is ``|C| - T(L)``. ``gain`` is the variance of one
contrast sample in units of sigma^2: the contrast is a left-minus-right
difference, so pure noise gives ``Var(C) = 2 sigma^2 / (w L)`` and
``gain = 2``. ``calibrate_beta`` measures ``beta`` from the maximal
responses the tree stores on pure-noise images.
"""

import math
from dataclasses import dataclass

import numpy as np

NOISE_GAIN = 2.0
# detection value from 20 noise images of 129^2 (w=4): the 90th percentile
# of the per-image envelope beta (``Calibration.beta_detect``)
DEFAULT_BETA = 0.71
DETECT_QUANTILE = 0.9
LN2 = math.log(2.0)


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ThresholdParams:
    sigma: float
    w: int = 4
    N: int = 129 * 129
    beta: float = DEFAULT_BETA
    gain: float = NOISE_GAIN

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.w < 1 or self.N < 1 or not self.beta > 0 or not self.gain > 0:
            raise ValueError("need w >= 1, N >= 1, beta > 0 and gain > 0")

    @property
    def noise_scale(self):
        return noise_scale(self.sigma, self.gain)

    def threshold(self, L):
        return threshold(L, self)

    def score(self, rv):
        return score(rv, self)


def noise_scale(sigma, gain=NOISE_GAIN):
    """Standard deviation of one contrast sample on pure noise."""
    return sigma * math.sqrt(gain)


def search_space_size(L, N, beta=DEFAULT_BETA):
    """Natural log of the candidate count ``K_L = 6 N 2^(beta L)``."""
    L = np.asarray(L, dtype=np.float64)
    if np.any(L < 0):
        raise ValueError("L must be non-negative")
    out = math.log(6.0 * N) + beta * L * LN2
    return float(out) if out.ndim == 0 else out


def threshold(L, params):
    L = np.asarray(L, dtype=np.float64)
    if np.any(L <= 0):
        raise ValueError("threshold needs L > 0")
    p = params
    # same operation order as the kernel's score so results agree bitwise
    out = p.noise_scale * np.sqrt(2.0 * (math.log(6.0 * p.N) + p.beta * L * LN2) / (p.w * L))
    return float(out) if out.ndim == 0 else out


def asymptotic_threshold(params):
    """Limit of ``T(L)`` for long curves: ``s * sqrt(2 beta ln2 / w)``."""
    return params.noise_scale * math.sqrt(2.0 * params.beta * LN2 / params.w)


def score(rv, params):
    """``|C| - T(L)``; positive means the curve is a significant edge."""
    if rv.L <= 0:
        raise ValueError("score needs L > 0")
    p = params
    c = abs(rv.R) / (p.w * rv.L)
    return c - p.noise_scale * math.sqrt(
        2.0 * (math.log(6.0 * p.N) + p.beta * rv.L * LN2) / (p.w * rv.L))


@dataclass
class Calibration:
    """Empirical maximal noise contrast per unit length bin.

    ``max_contrast`` is the per-image maximum averaged over trials (the
    quantity ``T(L)`` models) and ``beta`` its least-squares fit;
    ``envelope`` is the maximum over all trials and ``trial_max`` holds the
    per-image maxima (trials x bins). ``trial_betas`` holds, per
    image, the smallest ``beta`` whose ``T(L)`` stays above that image's
    maxima at every bin; ``beta_detect`` is their ``DETECT_QUANTILE``
    quantile, the value that keeps noise images free of detections.
    """

    beta: float
    beta_detect: float
    trial_betas: np.ndarray
    lengths: np.ndarray
    max_contrast: np.ndarray
    envelope: np.ndarray
    trial_max: np.ndarray
    counts: np.ndarray
    sigma: float
    w: int
    N: int
    trials: int
    gain: float = NOISE_GAIN

    def params(self, beta=None):
        return ThresholdParams(self.sigma, self.w, self.N, self.beta if beta is None else beta,
                               self.gain)

    def theory(self, beta=None):
        return threshold(self.lengths, self.params(beta))

    def asymptote(self, beta=None):
        return asymptotic_threshold(self.params(beta))

    def table(self):
        lines = [f"# beta = {self.beta:.6f}  beta_detect = {self.beta_detect:.6f}  "
                 f"sigma = {self.sigma:g}  w = {self.w}  N = {self.N}  trials = {self.trials}",
                 f"# T_inf = {self.asymptote():.6f}",
                 "# L  mean_max|C|  max|C|  T(L)  samples"]
        for L, c, e, t, n in zip(self.lengths, self.max_contrast, self.envelope, self.theory(),
                                 self.counts):
            lines.append(f"{L:.3f} {c:.6f} {e:.6f} {t:.6f} {n}")
        return "\n".join(lines) + "\n"


def noise_length_profile(img, w=4, n_min=5, threads=None):
    """(L, |C|) of every curve the tree builds on ``img`` when merging by ``|C|``."""
    from .beamtree import DetectParams, MergeMode, build_beam_tree

    tree = build_beam_tree(img, DetectParams(w=w, sigma=None, n_min=n_min), MergeMode.basic(),
                           threads=threads)
    keep = tree.originating()
    L = tree.L[keep]
    C = np.abs(tree.R[keep]) / (w * L)
    return L, C


def _beta_terms(lengths, max_contrast, sigma, w, N, gain):
    x = lengths * LN2
    y = max_contrast ** 2 * w * lengths / (2.0 * noise_scale(sigma, gain) ** 2) - math.log(6.0 * N)
    return x, y


def fit_beta(lengths, max_contrast, sigma, w, N, gain=NOISE_GAIN):
    """Least-squares slope through the origin of
    ``max|C|^2 w L / (2 s^2) - ln(6N)`` against ``L ln 2``."""
    x, y = _beta_terms(lengths, max_contrast, sigma, w, N, gain)
    return float(np.dot(x, y) / np.dot(x, x))


def envelope_beta(lengths, max_contrast, sigma, w, N, gain=NOISE_GAIN):
    """Smallest ``beta`` with ``T(L) >= max_contrast`` at every length."""
    x, y = _beta_terms(lengths, max_contrast, sigma, w, N, gain)
    return float(np.max(y / x))


def calibrate_beta(image_size=129, sigma=1.0, trials=20, rng=None, w=4, n_min=5,
                   min_samples=10, threads=None):
    """Estimate ``beta`` from pure-noise images.

    For each trial and unit-width length bin the largest ``|C|`` is kept;
    bins must hold at least ``min_samples`` curves over all trials and
    appear in every trial. Returns a ``Calibration``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng)
    N = image_size * image_size
    per_trial = []
    for _ in range(trials):
        img = rng.normal(0.0, sigma, size=(image_size, image_size))
        L, C = noise_length_profile(img, w, n_min, threads)
        bins = np.floor(L).astype(np.int64)
        # first entry of each bin after sorting by (bin, -C) is the bin maximum
        order = np.lexsort((-C, bins))
        b_sorted = bins[order]
        first = np.concatenate([[True], b_sorted[1:] != b_sorted[:-1]])
        top = order[first]
        uniq, cnt = np.unique(bins, return_counts=True)
        per_trial.append({int(bins[i]): (float(C[i]), float(L[i]), int(n))
                          for i, n in zip(top, cnt)})
    common = set(per_trial[0])
    for d in per_trial[1:]:
        common &= set(d)
    keep = []
    for b in sorted(common):
        n = sum(d[b][2] for d in per_trial)
        if b >= 1 and n >= min_samples:
            keep.append((b, n))
    if len(keep) < 3:
        raise CalibrationError(f"only {len(keep)} usable length bins")
    lengths = np.array([np.mean([d[b][1] for d in per_trial]) for b, _ in keep])
    trial_max = np.array([[d[b][0] for b, _ in keep] for d in per_trial])
    mean_max = trial_max.mean(axis=0)
    env = trial_max.max(axis=0)
    counts = np.array([n for _, n in keep])
    beta = fit_beta(lengths, mean_max, sigma, w, N)
    if not beta > 0:
        raise CalibrationError(f"fitted beta {beta} is not positive")
    trial_betas = np.array([
        envelope_beta(np.array([d[b][1] for b, _ in keep]), np.array([d[b][0] for b, _ in keep]),
                      sigma, w, N) for d in per_trial])
    beta_detect = float(np.quantile(trial_betas, DETECT_QUANTILE))
    return Calibration(beta, beta_detect, trial_betas, lengths, mean_max, env, trial_max, counts,
                       sigma, w, N, trials)
