"""Command-line entry point: ``pasguide {degrade,restore,analyze,bench,gradcheck}``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .degrade import apply_degradation, sample_params
from .diffusion import make_schedule
from .gradcheck import run_gradcheck
from .image_core import InvalidInputError, load_image, save_image
from .metrics import analyze_dataset, crop_faces, psnr, read_boxes_csv, write_stats_csv
from .predictors import CountingPredictor, ExactPredictor, GalleryPrior, MixturePredictor
from .sampler import SamplingError, run_pasdiff, write_trace_csv
from .sasi import make_restorer

log = logging.getLogger("pasguide")

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def _images_in(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get("PASGUIDE_THREADS", "1")))


def _build_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {
        "seed": args.seed,
        "T": getattr(args, "T", None),
        "N": getattr(args, "N", None),
        "s": getattr(args, "s", None),
        "lambda_exp": getattr(args, "lambda_exp", None),
        "lambda_ref": getattr(args, "lambda_ref", None),
        "lambda_stru": getattr(args, "lambda_stru", None),
        "injection_mode": getattr(args, "injection", None),
        "retinex_grad_mode": getattr(args, "retinex_grad", None),
        "predictor": getattr(args, "predictor", None),
        "gallery": getattr(args, "gallery", None),
        "reference": getattr(args, "reference", None),
        "restorer": getattr(args, "restorer", None),
        "trace": getattr(args, "trace", None),
        "n_list": getattr(args, "n_list", None),
        "repeats": getattr(args, "repeats", None),
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    for term in ("exp", "ref", "stru"):
        if getattr(args, f"disable_{term}", False):
            setattr(cfg, f"enable_{term}", False)
    cfg.threads = _threads(args)
    cfg.guidance()  # validates guidance fields early
    return cfg


def _predictor(cfg: RunConfig, reference: np.ndarray | None = None):
    if cfg.predictor == "mixture":
        cfg.validate_paths("gallery")
        return MixturePredictor(GalleryPrior.from_dir(cfg.gallery))
    if cfg.predictor == "exact":
        if reference is None:
            cfg.validate_paths("reference")
            reference = load_image(cfg.reference)
        return ExactPredictor(reference)
    raise ConfigError("predictor", f"unknown predictor {cfg.predictor!r}; choose mixture or exact")


def _restorer(cfg: RunConfig):
    if cfg.restorer == "unsharp":
        return make_restorer("unsharp", amount=cfg.unsharp_amount, sigma=cfg.unsharp_sigma)
    return make_restorer(cfg.restorer)


def _schedule(cfg: RunConfig):
    return make_schedule(cfg.T, cfg.beta_start, cfg.beta_end)


def cmd_degrade(args) -> int:
    in_dir, out_dir = Path(args.input_dir), Path(args.output_dir)
    if not in_dir.is_dir():
        log.error("input directory not found: %s", in_dir)
        return 2
    files = _images_in(in_dir)
    if args.count is not None:
        files = files[: args.count]
    clean_dir, deg_dir = out_dir / "clean", out_dir / "degraded"
    clean_dir.mkdir(parents=True, exist_ok=True)
    deg_dir.mkdir(parents=True, exist_ok=True)
    if not files:
        log.warning("no images found in %s; writing an empty manifest", in_dir)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    with open(out_dir / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "sigma", "r", "delta", "q", "alpha", "gamma", "seed"])
        for path in files:
            p = sample_params(rng)
            clean = load_image(path)
            name = path.stem + ".png"
            save_image(clean, clean_dir / name)
            save_image(apply_degradation(clean, p), deg_dir / name)
            writer.writerow(
                [name, f"{p.sigma:.6g}", f"{p.r:.6g}", f"{p.delta:.6g}", p.q, f"{p.alpha_exp:.6g}", f"{p.gamma:.6g}", p.seed]
            )
    log.info("wrote %d pairs to %s", len(files), out_dir)
    return 0


def cmd_restore(args) -> int:
    cfg = _build_config(args)
    if args.input:
        cfg.input = args.input
    if args.output:
        cfg.output = args.output
    cfg.validate_paths("input")
    if not cfg.output:
        raise ConfigError("output", "is required")
    y0 = load_image(cfg.input)
    out, trace = run_pasdiff(y0, _predictor(cfg), _restorer(cfg), cfg.guidance(), _schedule(cfg))
    output = Path(cfg.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    save_image(out, output)
    write_trace_csv(trace, cfg.trace or output.with_suffix(".csv"))
    log.info("restored %s -> %s (%d trace rows)", cfg.input, output, len(trace))
    return 0


def cmd_analyze(args) -> int:
    directory = Path(args.directory)
    if not directory.is_dir():
        log.error("directory not found: %s", directory)
        return 2
    if args.boxes:
        crops_dir = Path(args.output_dir) / "crops"
        crops_dir.mkdir(parents=True, exist_ok=True)
        dropped = 0
        for name, boxes in sorted(read_boxes_csv(args.boxes).items()):
            src = directory / name
            if not src.exists():
                log.warning("annotated image missing: %s", src)
                continue
            crops, n_drop = crop_faces(load_image(src), boxes, args.min_size)
            dropped += n_drop
            for i, crop in enumerate(crops):
                save_image(crop, crops_dir / f"{Path(name).stem}_{i:03d}.png")
        log.info("dropped %d invalid or undersized boxes", dropped)
        directory = crops_dir
    stats = analyze_dataset(directory, args.denoise_sigma)
    write_stats_csv(stats, args.output_dir)
    if stats.skipped:
        log.warning("skipped %d unreadable files", len(stats.skipped))
    log.info("analyzed %d images", len(stats.images))
    return 0


def cmd_bench(args) -> int:
    cfg = _build_config(args)
    dataset = Path(args.dataset)
    clean_dir, deg_dir = dataset / "clean", dataset / "degraded"
    if not deg_dir.is_dir() or not clean_dir.is_dir():
        log.error("dataset must contain clean/ and degraded/ subdirectories: %s", dataset)
        return 2
    restorer = _restorer(cfg)
    shared = _predictor(cfg) if cfg.predictor == "mixture" else None
    rows = []
    for path in _images_in(deg_dir):
        try:
            y0, gt = load_image(path), load_image(clean_dir / path.name)
            predictor = shared or _predictor(cfg, reference=gt)
            for n in cfg.n_list:
                gcfg = cfg.guidance()
                gcfg.N = n
                sched = _schedule(cfg)
                times = []
                for _ in range(max(1, cfg.repeats)):
                    counter = CountingPredictor(predictor)
                    start = time.perf_counter()
                    out, _ = run_pasdiff(y0, counter, restorer, gcfg, sched)
                    times.append(time.perf_counter() - start)
                calls = counter.calls
                rows.append((path.name, n, psnr(y0, gt), psnr(out, gt), statistics.median(times), calls))
        except Exception as exc:
            log.warning("bench failed for %s: %s", path.name, exc)
    report = Path(args.output)
    report.parent.mkdir(parents=True, exist_ok=True)
    with open(report, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "N", "psnr_degraded", "psnr_restored", "wall_time_s", "predictor_calls"])
        for name, n, p_in, p_out, wall, calls in rows:
            writer.writerow([name, n, f"{p_in:.6g}", f"{p_out:.6g}", f"{wall:.6g}", calls])
        for n in cfg.n_list:
            sel = [r for r in rows if r[1] == n]
            if not sel:
                continue
            writer.writerow(
                ["MEAN", n]
                + [f"{statistics.fmean(r[i] for r in sel):.6g}" for i in (2, 3, 4)]
                + [f"{statistics.fmean(r[5] for r in sel):.6g}"]
            )
    log.info("bench report written to %s", report)
    return 0


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(args.seed if args.seed is not None else 0, args.trials)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    if failed:
        worst = max(r.max_rel_error for r in failed)
        print(f"gradcheck FAILED: {len(failed)} suite(s), max relative error {worst:.3e}")
        return 1
    return 0


def _add_guidance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--T", type=int, help="number of diffusion timesteps")
    p.add_argument("--N", type=int, help="gradient steps per timestep")
    p.add_argument("--s", type=float, help="guidance scale")
    p.add_argument("--lambda-exp", type=float)
    p.add_argument("--lambda-ref", type=float)
    p.add_argument("--lambda-stru", type=float)
    p.add_argument("--disable-exp", action="store_true", help="drop the exposure term")
    p.add_argument("--disable-ref", action="store_true", help="drop the reflectance term")
    p.add_argument("--disable-stru", action="store_true", help="drop the structural term")
    p.add_argument("--injection", choices=["sasi", "mse"], help="structural injection mode")
    p.add_argument("--retinex-grad", choices=["frozen", "full"])
    p.add_argument("--predictor", choices=["mixture", "exact"])
    p.add_argument("--gallery", help="directory of PNG gallery images (mixture predictor)")
    p.add_argument("--reference", help="clean image for the exact predictor")
    p.add_argument("--restorer", choices=["identity", "unsharp", "external"])


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps a subcommand's unset flag from clobbering one given before it
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value config file")
    common.add_argument(
        "--threads", type=int, default=argparse.SUPPRESS, help="worker threads (env PASGUIDE_THREADS)"
    )
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="pasguide", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", parents=[common], help="synthesize clean/degraded pairs")
    p.add_argument("input_dir")
    p.add_argument("output_dir")
    p.add_argument("--count", type=int, default=None)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("restore", parents=[common], help="run guided restoration on one image")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--trace", help="trace CSV path (default: output with .csv)")
    _add_guidance_flags(p)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("analyze", parents=[common], help="dataset degradation statistics")
    p.add_argument("directory")
    p.add_argument("output_dir")
    p.add_argument("--boxes", help="CSV of face boxes; crops are analyzed instead of full images")
    p.add_argument("--min-size", type=int, default=32)
    p.add_argument("--denoise-sigma", type=float, default=1.0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bench", parents=[common], help="speed/quality sweep over N")
    p.add_argument("dataset", help="directory with clean/ and degraded/ subdirectories")
    p.add_argument("--output", default="bench.csv")
    p.add_argument("--n-list", type=lambda s: [int(v) for v in s.split(",")])
    p.add_argument("--repeats", type=int)
    _add_guidance_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks")
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    for name in ("seed", "config", "threads", "verbose"):
        if not hasattr(args, name):
            setattr(args, name, None)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (InvalidInputError, SamplingError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
