"""Images, synthetic test patterns, the noise model and PGM/PNG I/O.

Images are plain 2-D float64 arrays indexed ``img[y, x]``; ``Image`` wraps
one with its dimensions for the few places that want a typed container.

Pattern config grammar (one element per line, ``#`` starts a comment)::

    size = 129
    background = 0
    foreground = 1
    segment = x0 y0 x1 y1 thickness [intensity]
    ring = cx cy r_inner r_outer [intensity]
    s = cx cy radius thickness [intensity]

Geometry is rasterized by testing pixel centres, so the result is strictly
binary (no anti-aliasing).
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np


class ImageFormatError(ValueError):
    """Malformed image file; ``offset`` is the byte position of the problem."""

    def __init__(self, msg, offset):
        super().__init__(f"{msg} (at byte {offset})")
        self.offset = offset


class PatternError(ValueError):
    pass


@dataclass
class Image:
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("image data must be 2-D")

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def N(self):
        return self.data.size


def as_array(img):
    if isinstance(img, Image):
        return img.data
    return np.asarray(img, dtype=np.float64)


# ---------------------------------------------------------------- noise

@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.1
    sp_fraction: float = 0.0
    sp_magnitude: float = 3.0  # salt = max + m*sigma, pepper = min - m*sigma
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0 <= self.sp_fraction <= 1:
            raise ValueError("sp_fraction must lie in [0, 1]")


def add_noise(img, noise):
    """``img`` plus i.i.d. Gaussian noise, then salt-and-pepper on
    ``floor(sp_fraction * N)`` distinct pixels."""
    clean = as_array(img)
    rng = np.random.default_rng(noise.seed)
    if noise.sigma > 0:
        out = clean + rng.normal(0.0, noise.sigma, size=clean.shape)
    else:
        out = clean.copy()
    n_sp = int(math.floor(noise.sp_fraction * clean.size))
    if n_sp:
        idx = rng.choice(clean.size, size=n_sp, replace=False)
        salt = rng.random(n_sp) < 0.5
        hi = clean.max() + noise.sp_magnitude * noise.sigma
        lo = clean.min() - noise.sp_magnitude * noise.sigma
        out.flat[idx] = np.where(salt, hi, lo)
    return out


def snr(edge_contrast, sigma):
    if sigma == 0:
        return math.inf
    return abs(edge_contrast) / sigma


def estimate_sigma(img):
    """Noise level from the median absolute deviation of the discrete
    Laplacian, rescaled so that white Gaussian noise gives its sigma."""
    a = as_array(img)
    if min(a.shape) < 3:
        raise ValueError("estimate_sigma needs at least a 3x3 image")
    lap = (a[1:-1, :-2] + a[1:-1, 2:] + a[:-2, 1:-1] + a[2:, 1:-1]) - 4.0 * a[1:-1, 1:-1]
    # the 5-point Laplacian of unit white noise has std sqrt(20)
    mad = np.median(np.abs(lap - np.median(lap)))
    return float(mad * 1.482602218505602 / math.sqrt(20.0))


# ---------------------------------------------------------------- patterns

@dataclass(frozen=True)
class Segment:
    x0: float
    y0: float
    x1: float
    y1: float
    thickness: float
    intensity: float = None

    def mask(self, X, Y):
        dx, dy = self.x1 - self.x0, self.y1 - self.y0
        L2 = dx * dx + dy * dy
        t = np.clip(((X - self.x0) * dx + (Y - self.y0) * dy) / L2, 0.0, 1.0) if L2 else 0.0
        d = np.hypot(X - (self.x0 + t * dx), Y - (self.y0 + t * dy))
        return d <= self.thickness / 2.0

    def extent(self):
        r = self.thickness / 2.0
        return (min(self.x0, self.x1) - r, min(self.y0, self.y1) - r,
                max(self.x0, self.x1) + r, max(self.y0, self.y1) + r)


@dataclass(frozen=True)
class Ring:
    cx: float
    cy: float
    r_inner: float
    r_outer: float
    intensity: float = None

    def mask(self, X, Y):
        d = np.hypot(X - self.cx, Y - self.cy)
        return (d >= self.r_inner) & (d <= self.r_outer)

    def extent(self):
        r = self.r_outer
        return (self.cx - r, self.cy - r, self.cx + r, self.cy + r)


@dataclass(frozen=True)
class SCurve:
    """Two mirrored half-ring arcs of the given radius meeting at (cx, cy):
    the upper one bulges left, the lower one right."""
    cx: float
    cy: float
    radius: float
    thickness: float
    intensity: float = None

    def mask(self, X, Y):
        h = self.thickness / 2.0
        up = np.abs(np.hypot(X - self.cx, Y - (self.cy - self.radius)) - self.radius) <= h
        lo = np.abs(np.hypot(X - self.cx, Y - (self.cy + self.radius)) - self.radius) <= h
        return (up & (X <= self.cx)) | (lo & (X >= self.cx))

    def extent(self):
        r, h = self.radius, self.thickness / 2.0
        return (self.cx - r - h, self.cy - 2 * r - h, self.cx + r + h, self.cy + 2 * r + h)


ELEMENT_TYPES = {"segment": Segment, "ring": Ring, "s": SCurve}


@dataclass(frozen=True)
class PatternSpec:
    size: int = 129
    elements: tuple = field(default_factory=tuple)
    background: float = 0.0
    foreground: float = 1.0

    def validate(self):
        if self.size < 1:
            raise PatternError("size must be positive")
        for e in self.elements:
            x0, y0, x1, y1 = e.extent()
            if x0 < 0 or y0 < 0 or x1 > self.size - 1 or y1 > self.size - 1:
                raise PatternError(
                    f"{type(e).__name__} {e} leaves the {self.size}x{self.size} image")
            if e.intensity is not None and e.intensity == self.background:
                raise PatternError(f"{e} has the background intensity")


def default_pattern(size=129):
    """Straight bars, two concentric rings and an 'S' (radius size/6) in the
    centre; strokes are about ``size/18`` wide. Coordinates scale with size."""
    s = (size - 1) / 128.0
    th = 7.0 * s
    r = size / 6.0
    c = (size - 1) / 2.0
    els = (
        SCurve(c, c, r, th),
        Ring(102 * s, 26 * s, 5 * s, 11 * s),
        Ring(102 * s, 26 * s, 17 * s, 23 * s),
        Segment(8 * s, 8 * s, 36 * s, 8 * s, th),
        Segment(10 * s, 26 * s, 22 * s, 56 * s, th),
        Segment(10 * s, 118 * s, 40 * s, 80 * s, th),
        Segment(80 * s, 119 * s, 120 * s, 119 * s, th),
        Segment(116 * s, 58 * s, 108 * s, 100 * s, th),
    )
    return PatternSpec(size, els)


def synth_pattern(spec):
    spec.validate()
    n = spec.size
    Y, X = np.mgrid[0:n, 0:n].astype(np.float64)
    img = np.full((n, n), float(spec.background))
    for e in spec.elements:
        val = spec.foreground if e.intensity is None else e.intensity
        img[e.mask(X, Y)] = val
    return img


def parse_pattern(text):
    """Parse the key-value pattern grammar described in the module docstring."""
    size, bg, fg = 129, 0.0, 1.0
    elements = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PatternError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        try:
            nums = [float(v) for v in val.replace(",", " ").split()]
        except ValueError:
            raise PatternError(f"line {lineno}: non-numeric value {val!r}") from None
        if key == "size":
            size = int(nums[0])
        elif key == "background":
            bg = nums[0]
        elif key == "foreground":
            fg = nums[0]
        elif key in ELEMENT_TYPES:
            cls = ELEMENT_TYPES[key]
            nreq = 5 if cls is Segment else 4
            if len(nums) not in (nreq, nreq + 1):
                raise PatternError(f"line {lineno}: {key} takes {nreq} or {nreq + 1} numbers")
            elements.append(cls(*nums))
        else:
            raise PatternError(f"line {lineno}: unknown key {key!r}")
    spec = PatternSpec(size, tuple(elements), bg, fg)
    spec.validate()
    return spec


def format_pattern(spec):
    lines = [f"size = {spec.size}", f"background = {float(spec.background)!r}",
             f"foreground = {float(spec.foreground)!r}"]
    names = {v: k for k, v in ELEMENT_TYPES.items()}
    for e in spec.elements:
        vals = [getattr(e, f) for f in e.__dataclass_fields__]
        if vals[-1] is None:
            vals = vals[:-1]
        lines.append(f"{names[type(e)]} = " + " ".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def load_pattern(path):
    with open(path) as f:
        return parse_pattern(f.read())


def ground_truth(clean, low=0.26, high=0.65, smoothing=1.0):
    """Reference edges: the Canny detector run on the clean pattern."""
    from .evaluation import canny_baseline
    return canny_baseline(clean, low, high, smoothing)


# ---------------------------------------------------------------- file I/O

def _pgm_token(buf, pos):
    """Next whitespace-delimited header token (comments skipped)."""
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("unexpected end of header", start)
    return buf[start:pos], start, pos


def read_pgm(buf):
    """Decode a binary (P5) PGM; returns ``(data, maxval)`` with raw counts."""
    if buf[:2] != b"P5":
        raise ImageFormatError("not a binary PGM (magic P5 expected)", 0)
    pos = 2
    vals = []
    for name in ("width", "height", "maxval"):
        tok, start, pos = _pgm_token(buf, pos)
        if not tok.isdigit():
            raise ImageFormatError(f"bad {name} {tok!r}", start)
        vals.append(int(tok))
    w, h, maxval = vals
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise ImageFormatError(f"invalid header values {w}x{h} maxval={maxval}", pos)
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise ImageFormatError("missing whitespace before raster", pos)
    pos += 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * dtype.itemsize
    if len(buf) - pos < need:
        raise ImageFormatError(f"raster truncated: {len(buf) - pos} of {need} bytes", len(buf))
    data = np.frombuffer(buf, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return data.astype(np.int64), maxval


def write_pgm(counts, maxval):
    counts = np.asarray(counts)
    h, w = counts.shape
    dtype = ">u2" if maxval > 255 else "u1"
    return f"P5\n{w} {h}\n{maxval}\n".encode() + counts.astype(dtype).tobytes()


def quantize(img, bits=8, lo=None, hi=None):
    """Map ``[lo, hi]`` (default: the data range) linearly onto ``0..2^bits-1``.

    Returns ``(counts, lo, scale)`` so that ``img ~= lo + counts * scale``.
    """
    a = as_array(img)
    maxval = (1 << bits) - 1
    lo = float(a.min()) if lo is None else lo
    hi = float(a.max()) if hi is None else hi
    scale = (hi - lo) / maxval if hi > lo else 1.0
    counts = np.clip(np.rint((a - lo) / scale), 0, maxval).astype(np.int64)
    return counts, lo, scale


def load_image(path, normalize=True):
    """Read a PGM (P5, 8/16 bit) or, with Pillow, a PNG.

    With ``normalize`` intensities are divided by maxval (range [0, 1]),
    unless a ``<path>.scale`` sidecar written by ``save_image`` exists, in
    which case the original intensities are restored.
    """
    path = os.fspath(path)
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image as PILImage
        im = PILImage.open(path)
        counts = np.asarray(im, dtype=np.int64)
        if counts.ndim != 2:
            raise ImageFormatError("only grayscale PNG is supported", 0)
        maxval = 65535 if im.mode.startswith("I") else 255
    else:
        counts, maxval = read_pgm(buf)
    side = path + ".scale"
    if os.path.exists(side):
        meta = read_sidecar(side)
        return meta["offset"] + counts * meta["scale"]
    return counts / maxval if normalize else counts.astype(np.float64)


def save_image(img, path, bits=8, lo=None, hi=None, sidecar=True):
    """Write as PGM (or PNG when the path ends in .png) after quantization;
    the offset/scale go to ``<path>.scale`` so ``load_image`` can undo it."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    path = os.fspath(path)
    counts, lo, scale = quantize(img, bits, lo, hi)
    if path.lower().endswith(".png"):
        from PIL import Image as PILImage
        arr = counts.astype(np.uint16 if bits == 16 else np.uint8)
        PILImage.fromarray(arr).save(path)
    else:
        with open(path, "wb") as f:
            f.write(write_pgm(counts, (1 << bits) - 1))
    if sidecar:
        with open(path + ".scale", "w") as f:
            f.write(f"offset = {lo!r}\nscale = {scale!r}\nbits = {bits}\n")
    return lo, scale


def read_sidecar(path):
    out = {}
    with open(path) as f:
        for line in f:
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = float(v)
    return out

