"""Command-line front end: synth, detect, calibrate, sweep, bench.

Every command writes into a run directory (``--out``) and echoes its
resolved arguments to ``config.json`` there; ``beamcurve --config
run/config.json`` repeats the run.
"""

import argparse
import json
import math
import os
import sys

from .beamtree import DEFAULT_K
from .edgemap import DEFAULT_OVERLAP, DEFAULT_RADIUS
from .partition import DEFAULT_N_MIN
from .response import DEFAULT_WIDTH
from .scoring import DEFAULT_BETA


COMMANDS = ("synth", "detect", "calibrate", "sweep", "bench")


def _float_list(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _int_list(text):
    vals = _float_list(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def _sigma(text):
    if text == "auto":
        return text
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("sigma must be positive or 'auto'")
    return v


def _snr(text):
    if text in ("clean", "inf"):
        return math.inf
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("snr must be positive or 'clean'")
    return v


def _add_detector_flags(p):
    p.add_argument("--mode", choices=("basic", "fast"), default="basic",
                   help="basic scans every interface pixel; fast keeps the best k (default basic)")
    p.add_argument("-k", type=int, default=DEFAULT_K,
                   help=f"interface pixels kept per tile in fast mode (default {DEFAULT_K})")
    p.add_argument("-w", type=int, default=DEFAULT_WIDTH,
                   help=f"filter half-width in pixels (default {DEFAULT_WIDTH})")
    p.add_argument("--beta", type=float, default=DEFAULT_BETA,
                   help=f"search-space growth rate in the threshold (default {DEFAULT_BETA}, "
                        "calibrated on 129x129 noise)")
    p.add_argument("--n-min", type=int, default=DEFAULT_N_MIN,
                   help=f"leaf tile side (default {DEFAULT_N_MIN})")
    p.add_argument("--overlap-fraction", "--overlap", dest="overlap_fraction", type=float,
                   default=DEFAULT_OVERLAP,
                   help="a curve with more than this fraction of already-marked pixels is "
                        f"suppressed (default {DEFAULT_OVERLAP})")
    p.add_argument("--radius", type=int, default=DEFAULT_RADIUS,
                   help=f"a pixel counts as marked within this Chebyshev distance of a painted "
                        f"one (default {DEFAULT_RADIUS})")


def build_parser():
    ap = argparse.ArgumentParser(prog="beamcurve", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", help="repeat a run from its echoed config.json")
    sub = ap.add_subparsers(dest="command")

    def common(p, out):
        p.add_argument("--out", default=out, help=f"run directory (default {out})")
        p.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: all cores); results do not depend on it")

    p = sub.add_parser("synth", help="render the test pattern with noise")
    common(p, "runs/synth")
    p.add_argument("--pattern", help="pattern file (key = value lines); default built-in pattern")
    p.add_argument("--size", type=int, default=129,
                   help="side of the built-in pattern (default 129)")
    p.add_argument("--snr", type=_snr, default=2.0,
                   help="edge contrast over sigma, or 'clean' for no noise (default 2)")
    p.add_argument("--sigma", type=float, default=0.1, help="Gaussian noise level (default 0.1)")
    p.add_argument("--sp-fraction", type=float, default=0.01,
                   help="fraction of salt-and-pepper pixels (default 0.01)")
    p.add_argument("--bits", type=int, choices=(8, 16), default=16,
                   help="raster depth (default 16)")
    p.add_argument("--name", default="image.pgm", help="output file name (default image.pgm)")

    p = sub.add_parser("detect", help="soft edge map of an image")
    common(p, "runs/detect")
    p.add_argument("input", help="PGM or PNG image")
    p.add_argument("--sigma", type=_sigma, default="auto",
                   help="noise level; 'auto' reads the synth metadata or estimates it "
                        "(default auto)")
    _add_detector_flags(p)
    p.add_argument("--top", type=int, default=10, help="curves listed on stdout (default 10)")

    p = sub.add_parser("calibrate", help="fit beta on pure-noise images")
    common(p, "runs/calibrate")
    p.add_argument("--size", type=int, default=129, help="noise image side (default 129)")
    p.add_argument("--sigma", type=float, default=1.0, help="noise level (default 1)")
    p.add_argument("--trials", type=int, default=20, help="noise images (default 20)")
    p.add_argument("-w", type=int, default=DEFAULT_WIDTH,
                   help=f"filter half-width (default {DEFAULT_WIDTH})")
    p.add_argument("--n-min", type=int, default=DEFAULT_N_MIN,
                   help=f"leaf tile side (default {DEFAULT_N_MIN})")

    p = sub.add_parser("sweep", help="F-measure against SNR for beam curves and Canny")
    common(p, "runs/sweep")
    from .evaluation import SNR_GRID
    p.add_argument("--pattern", help="pattern file; default built-in 129x129 pattern")
    p.add_argument("--snr", type=_float_list, default=list(SNR_GRID),
                   help="comma-separated SNR grid (default 0.6 to 2.6 step 0.2)")
    p.add_argument("--seeds", type=int, default=10, help="noise draws per SNR (default 10)")
    p.add_argument("--sigma", type=float, default=0.1, help="noise level (default 0.1)")
    p.add_argument("--sp-fraction", type=float, default=0.01,
                   help="fraction of salt-and-pepper pixels (default 0.01)")
    p.add_argument("-k", type=int, default=DEFAULT_K,
                   help=f"k of the fast detector (default {DEFAULT_K})")
    p.add_argument("--tol", type=float, default=2.0, help="matching distance (default 2)")

    p = sub.add_parser("bench", help="operation counts and run time against image size")
    common(p, "runs/bench")
    p.add_argument("--sizes", type=_int_list, default=[65, 129, 257],
                   help="comma-separated image sides (default 65,129,257)")
    p.add_argument("-k", type=_int_list, default=[DEFAULT_K],
                   help=f"k values of the fast mode (default {DEFAULT_K})")
    p.add_argument("--repeats", type=int, default=1, help="timing repeats, best kept (default 1)")
    return ap


def validate(args):
    """Check flags against the modules' preconditions before any work."""
    def need(ok, msg):
        if not ok:
            raise ValueError(msg)
    if getattr(args, "threads", None) is not None:
        need(args.threads >= 1, "--threads must be >= 1")
    if args.command == "detect":
        need(os.path.isfile(args.input), f"cannot read input image {args.input!r}")
    if args.command in ("detect", "sweep", "bench"):
        ks = args.k if isinstance(args.k, list) else [args.k]
        need(all(k >= 1 for k in ks), "-k must be >= 1")
    if args.command in ("detect", "calibrate"):
        need(args.w >= 1, "-w must be >= 1")
        need(args.n_min >= 2, "--n-min must be >= 2")
    if args.command == "detect":
        need(args.beta > 0, "--beta must be positive")
        need(0 <= args.overlap_fraction <= 1, "--overlap-fraction must lie in [0, 1]")
        need(args.radius >= 0, "--radius must be >= 0")
    if args.command in ("synth", "sweep"):
        need(args.sigma > 0, "--sigma must be positive")
        need(0 <= args.sp_fraction <= 1, "--sp-fraction must lie in [0, 1]")
        if args.pattern:
            need(os.path.isfile(args.pattern), f"cannot read pattern {args.pattern!r}")
    if args.command == "synth":
        need(args.size >= 16, "--size must be >= 16")
    if args.command == "calibrate":
        need(args.sigma > 0 and args.trials >= 1, "need --sigma > 0 and --trials >= 1")
    if args.command == "sweep":
        need(args.seeds >= 1, "--seeds must be >= 1")
        need(all(s > 0 for s in args.snr), "SNR values must be positive")
    if args.command == "bench":
        need(all(s >= 8 for s in args.sizes), "--sizes must be >= 8")
        need(args.sizes == sorted(args.sizes), "--sizes must be ascending")


def _echo_config(args):
    os.makedirs(args.out, exist_ok=True)
    cfg = {k: v for k, v in vars(args).items() if k != "config"}
    if cfg.get("snr") == math.inf:
        cfg["snr"] = "clean"
    with open(os.path.join(args.out, "config.json"), "w") as f:
        json.dump(cfg, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_pattern(path, size=129):
    from .image import default_pattern, load_pattern
    return load_pattern(path) if path else default_pattern(size)


def cmd_synth(args):
    from .image import NoiseSpec, add_noise, format_pattern, save_image, synth_pattern
    spec = _load_pattern(args.pattern, args.size)
    clean = synth_pattern(spec)
    lo, hi = float(clean.min()), float(clean.max())
    if math.isinf(args.snr):
        img, sigma = clean, 0.0
    else:
        scaled = (clean - lo) / (hi - lo) * args.snr * args.sigma
        img, sigma = add_noise(scaled, NoiseSpec(args.sigma, args.sp_fraction, seed=args.seed)), \
            args.sigma
    path = os.path.join(args.out, args.name)
    save_image(img, path, bits=args.bits)
    with open(path + ".meta.json", "w") as f:
        json.dump({"sigma": sigma, "snr": "clean" if math.isinf(args.snr) else args.snr,
                   "seed": args.seed, "sp_fraction": args.sp_fraction}, f, indent=2)
        f.write("\n")
    with open(os.path.join(args.out, "pattern.txt"), "w") as f:
        f.write(format_pattern(spec))
    print(f"wrote {path} ({img.shape[1]}x{img.shape[0]}, sigma={sigma:g})")
    return 0


def _resolve_sigma(args, img):
    from .image import estimate_sigma
    if args.sigma != "auto":
        return float(args.sigma), "given"
    meta = args.input + ".meta.json"
    if os.path.exists(meta):
        with open(meta) as f:
            s = json.load(f).get("sigma", 0)
        if s and s > 0:
            return float(s), "metadata"
    s = estimate_sigma(img)
    if not s > 0:
        raise ValueError("cannot estimate sigma of a noiseless image; pass --sigma")
    return s, "estimated"


def cmd_detect(args):
    from .edgemap import detect_edges, save_edge_map
    from .image import load_image
    img = load_image(args.input)
    sigma, how = _resolve_sigma(args, img)
    k = None if args.mode == "basic" else args.k
    E = detect_edges(img, sigma, k=k, w=args.w, beta=args.beta, n_min=args.n_min,
                     overlap=args.overlap_fraction, radius=args.radius, threads=args.threads)
    save_edge_map(E, os.path.join(args.out, "edges.pgm"), bits=16)
    curves = E.curves
    C = curves.C
    with open(os.path.join(args.out, "curves.tsv"), "w") as f:
        f.write("rank\tscore\tC\tL\tpixels\tx0\ty0\tx1\ty1\n")
        for i in E.painted:
            pix = curves.pixels(i)
            f.write(f"{i}\t{curves.score[i]:.6g}\t{C[i]:.6g}\t{curves.L[i]:.4f}\t{len(pix)}"
                    f"\t{pix[0][0]}\t{pix[0][1]}\t{pix[-1][0]}\t{pix[-1][1]}\n")
    print(f"sigma = {sigma:.6g} ({how})")
    print(f"{len(curves)} significant curves, {E.accepted} painted (curves.tsv), "
          f"{int((E.values > 0).sum())} edge pixels")
    for i in range(min(args.top, len(curves))):
        print(f"  {i:3d}  score {curves.score[i]:.4f}  C {C[i]:+.4f}  L {curves.L[i]:.1f}")
    return 0


def cmd_calibrate(args):
    from .scoring import calibrate_beta
    cal = calibrate_beta(args.size, args.sigma, args.trials, rng=args.seed, w=args.w,
                         n_min=args.n_min, threads=args.threads)
    table = cal.table()
    with open(os.path.join(args.out, "calibration.txt"), "w") as f:
        f.write(table)
    print(table, end="")
    print(f"beta (fit) = {cal.beta:.4f}   beta for detection = {cal.beta_detect:.4f}")
    return 0


def cmd_sweep(args):
    from .evaluation import default_detectors, seed_for, snr_sweep
    from .image import synth_pattern
    clean = synth_pattern(_load_pattern(args.pattern))
    seeds = [seed_for(args.seed, 1000 + i) for i in range(args.seeds)]

    def progress(s, rep):
        print(f"snr {s:.2f}: " + "  ".join(f"{n} {rep.mean(n, s):.3f}" for n in rep.detectors),
              flush=True)

    rep = snr_sweep(clean, args.snr, seeds, default_detectors(args.k, args.threads), args.sigma,
                    args.sp_fraction, args.tol, progress=progress)
    rep.write_csv(os.path.join(args.out, "sweep.csv"))
    table = rep.table()
    with open(os.path.join(args.out, "table.txt"), "w") as f:
        f.write(table)
    print(table, end="")
    return 0


def cmd_bench(args):
    from .beamtree import MergeMode
    from .evaluation import bench_table, benchmark, write_bench_csv
    modes = [MergeMode.basic()] + [MergeMode.optimized(k) for k in args.k]
    rows = benchmark(args.sizes, modes, args.repeats, seed=args.seed, threads=args.threads)
    write_bench_csv(rows, os.path.join(args.out, "bench.csv"))
    table = bench_table(rows)
    with open(os.path.join(args.out, "table.txt"), "w") as f:
        f.write(table)
    print(table, end="")
    return 0


HANDLERS = {"synth": cmd_synth, "detect": cmd_detect, "calibrate": cmd_calibrate,
            "sweep": cmd_sweep, "bench": cmd_bench}


def _from_config(path):
    with open(path) as f:
        cfg = json.load(f)
    if cfg.get("command") not in COMMANDS:
        raise ValueError(f"{path}: unknown command {cfg.get('command')!r}")
    args = build_parser().parse_args([cfg["command"]] + ([cfg["input"]] if "input" in cfg else []))
    for k, v in cfg.items():
        setattr(args, k, v)
    if args.command == "synth":
        args.snr = _snr(str(args.snr))
    return args


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.config:
            args = _from_config(args.config)
        elif args.command is None:
            ap.print_help()
            return 2
        validate(args)
        _echo_config(args)
        return HANDLERS[args.command](args)
    except (OSError, ValueError, RuntimeError) as e:
        print(f"beamcurve {args.command or ''}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
