"""Command-line front end: ``mbwpnm {synth,denoise,metrics,psweep,bench}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import imaging, pipeline, quality

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("mbwpnm")


class UsageError(Exception):
    pass


def _sigma_list(text):
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad sigma list {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("sigmas must be non-negative numbers")
    return vals


def _power(text):
    if text == "auto":
        return None
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad power {text!r}") from None
    if not 0 < p <= 1:
        raise argparse.ArgumentTypeError("p must lie in (0, 1]")
    return p


def _check_bands(sigmas, img):
    if len(sigmas) != img.shape[2]:
        raise UsageError(f"got {len(sigmas)} sigmas for an image with {img.shape[2]} bands")


def _add_config_args(ap, with_p=True):
    d = pipeline.DenoiseConfig()
    if with_p:
        ap.add_argument("--p", type=_power, default=None,
                        help="power in (0, 1] or 'auto' (default: auto)")
    ap.add_argument("--k", type=int, default=d.K, help="outer iterations")
    ap.add_argument("--patch", type=int, default=d.h, help="patch side h")
    ap.add_argument("--group", type=int, default=d.M, help="similar patches per group M")
    ap.add_argument("--window", type=int, default=d.window, help="search window side")
    ap.add_argument("--stride", type=int, default=d.stride, help="reference patch step")
    ap.add_argument("--alpha", type=float, default=d.alpha, help="iterative regularization")
    ap.add_argument("--c", type=float, default=d.c, help="weight constant")
    ap.add_argument("--j", type=int, default=d.J, help="GST iterations")
    ap.add_argument("--raw-weights", action="store_true",
                    help="weight by raw singular values (no noise correction)")
    ap.add_argument("--reestimate-noise", action="store_true",
                    help="re-estimate the noise level every outer iteration")


def _config(args, p=None):
    try:
        return pipeline.DenoiseConfig(
            h=args.patch, M=args.group, window=args.window, stride=args.stride,
            K=args.k, alpha=args.alpha, p=p if p is not None else getattr(args, "p", None),
            c=args.c, J=args.j, corrected_weights=not args.raw_weights,
            reestimate_noise=args.reestimate_noise)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _fmt(v):
    return "inf" if np.isinf(v) else f"{v:.6f}"


def cmd_synth(args):
    img = imaging.load(args.inp)
    _check_bands(args.sigma, img)
    noisy = imaging.add_awgn(img, args.sigma, args.seed)
    imaging.save(noisy, args.out)
    print(f"rms_sigma {pipeline.rms_sigma(args.sigma):.6f}")
    return EXIT_OK


def cmd_denoise(args):
    if args.sigma is None and not args.estimate:
        raise UsageError("give --sigma or --estimate")
    img = imaging.load(args.inp)
    if args.sigma is not None:
        _check_bands(args.sigma, img)
        noise = pipeline.NoiseProfile(tuple(args.sigma))
    else:
        noise = pipeline.estimate_noise(img)
        print("estimated_sigma " + ",".join(f"{s:.4f}" for s in noise.sigmas))
    ref = imaging.load(args.ref) if args.ref else None
    if ref is not None and ref.shape != img.shape:
        raise UsageError(f"--ref shape {ref.shape} differs from input {img.shape}")
    cfg = _config(args).resolved(noise)
    print(f"rms_sigma {noise.rms:.6f} p {cfg.p:g}")

    def report(k, X, dt):
        line = f"iter {k} time {dt:.3f}s"
        if ref is not None:
            r = quality.evaluate(ref, np.clip(X, 0, 255))
            line += (f" psnr {_fmt(r.psnr)} ssim {_fmt(r.ssim)}"
                     f" ergas {_fmt(r.ergas)} sam {_fmt(r.sam)}")
        print(line, flush=True)

    out = pipeline.denoise(img, noise, cfg, callback=report)
    imaging.save(out, args.out)
    return EXIT_OK


def _append_csv(path, header, rows):
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(header)
        w.writerows(rows)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_metrics(args):
    ref, test = imaging.load(args.ref), imaging.load(args.test)
    if ref.shape != test.shape:
        raise UsageError(f"shape mismatch: {ref.shape} vs {test.shape}")
    rep = quality.evaluate(ref, test)
    row = rep.csv_row(args.id or Path(args.test).name)
    if args.csv:
        _append_csv(args.csv, quality.CSV_HEADER, [row])
    print(" ".join(f"{k} {v}" for k, v in zip(quality.CSV_HEADER[1:], row[1:])))
    return EXIT_OK


def _p_values(pmin, pmax, pstep):
    if pstep <= 0:
        raise UsageError("--pstep must be positive")
    vals = []
    k = 0
    while pmin + k * pstep <= pmax + 1e-9:
        p = round(pmin + k * pstep, 10)
        if 0 < p <= 1:
            vals.append(p)
        k += 1
    if not vals:
        raise UsageError("empty p range")
    return vals


def cmd_psweep(args):
    ps = _p_values(args.pmin, args.pmax, args.pstep)
    clean = imaging.load(args.clean)
    _check_bands(args.sigma, clean)
    noisy = imaging.add_awgn(clean, args.sigma, args.seed)
    rows = []
    for p in ps:
        out = pipeline.denoise(noisy, args.sigma, _config(args, p=p))
        val = quality.psnr(clean, out)
        rows.append((f"{p:g}", _fmt(val)))
        print(f"p {p:g} psnr {_fmt(val)}", flush=True)
    best = ps[int(np.argmax([float(r[1]) for r in rows]))]
    if args.csv:
        _write_csv(args.csv, ("p", "psnr"), rows)
    print(f"best_p {best:g}")
    return EXIT_OK


IMAGE_SUFFIXES = {".png", ".pgm", ".ppm", ".mbs"}


def cmd_bench(args):
    d = Path(args.dir)
    if not d.is_dir():
        raise UsageError(f"{d} is not a directory")
    files = sorted(f for f in d.iterdir() if f.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise UsageError(f"no images in {d}")
    header = quality.CSV_HEADER + ("noisy_psnr", "act_s")
    rows, stats = [], []
    for i, f in enumerate(files):
        clean = imaging.load(f)
        _check_bands(args.sigma, clean)
        noisy = imaging.add_awgn(clean, args.sigma, args.seed + i)
        t0 = time.perf_counter()
        out = pipeline.denoise(noisy, args.sigma, _config(args))
        act = time.perf_counter() - t0
        rep = quality.evaluate(clean, out)
        before = quality.psnr(clean, noisy)
        stats.append((rep.psnr, rep.ssim, rep.ergas, rep.sam, before, act))
        rows.append(rep.csv_row(f.name) + [_fmt(before), f"{act:.6f}"])
        print(",".join(rows[-1]), flush=True)
    avg = np.mean(np.array(stats), axis=0)
    rows.append(["average"] + [_fmt(v) for v in avg[:5]] + [f"{avg[5]:.6f}"])
    print(",".join(rows[-1]))
    _write_csv(args.csv, header, rows)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="mbwpnm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="add seeded Gaussian noise")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=_sigma_list, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("denoise", help="denoise an image")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=_sigma_list)
    p.add_argument("--estimate", action="store_true", help="estimate per-band noise")
    p.add_argument("--ref", help="clean image for per-iteration quality")
    p.add_argument("--seed", type=int, default=0, help="accepted for symmetry; unused")
    _add_config_args(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("metrics", help="PSNR/SSIM/ERGAS/SAM of an image pair")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--csv", help="append a row to this CSV file")
    p.add_argument("--id", help="image id for the CSV row (default: test file name)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("psweep", help="PSNR as a function of the power p")
    p.add_argument("--clean", required=True)
    p.add_argument("--sigma", type=_sigma_list, required=True)
    p.add_argument("--pmin", type=float, default=0.05)
    p.add_argument("--pmax", type=float, default=1.0)
    p.add_argument("--pstep", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv")
    _add_config_args(p, with_p=False)
    p.set_defaults(func=cmd_psweep)

    p = sub.add_parser("bench", help="synth + denoise + metrics over a directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--sigma", type=_sigma_list, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", required=True)
    _add_config_args(p)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mbwpnm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - report any failure as exit 1
        log.debug("failure", exc_info=True)
        print(f"mbwpnm {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
