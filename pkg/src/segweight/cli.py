"""``segweight`` command line: synth, weights, train, eval, sweep, noise-bench, report.

Exit status is 0 on success, 1 on invalid input or arguments, 2 on I/O
problems. Every command writes a ``manifest.json`` into its output
directory recording the command, its configuration and the seed.
"""

from __future__ import annotations

import argparse
import contextlib
import glob
import json
import logging
import os
import sys
import time

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .bench import (
    BENCHMARK_EPOCHS,
    BENCHMARK_SEED,
    NOISE_SIGMA,
    SWEEP_SIGMAS,
    WEIGHTED_SIGMA,
    noise_bench,
    noise_table,
    sweep,
    sweep_table,
)
from .dataset import build_dataset, read_dataset, split_sizes, write_dataset
from .edt import mask_distance_field
from .errors import SegweightError, ValidationError
from .imagery import load_mask, save_pfm, save_weight_map
from .model import load_model, predict
from .synth import SceneParams
from .trainer import TrainConfig, evaluate, train, write_run
from .weighting import accumulate_class_stats, class_weights, pixel_weights

log = logging.getLogger("segweight")

THREADS_ENV = "SEGWEIGHT_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _pair(kind):
    def parse(text):
        try:
            a, b = (kind(v) for v in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected two comma-separated values, got {text!r}")
        return a, b

    return parse


def _size(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}")
    return w, h


def _sigma(text):
    if text.lower() == "none":
        return None
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"sigma must be a number or 'none', got {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError("sigma must be positive")
    return value


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _on_off(text):
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _run_record(args, started: float, outputs) -> dict:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    return {
        "command": args.command,
        "config": config,
        "tool_version": __version__,
        "seed": getattr(args, "seed", None),
        "outputs": sorted(outputs),
        "wall_clock_s": round(time.time() - started, 3),
    }


def _write_manifest(args, started, outputs, extra=None):
    manifest = dict(extra or {})
    manifest["run"] = _run_record(args, started, outputs)
    _write_json(os.path.join(args.out, "manifest.json"), manifest)


# -- commands ----------------------------------------------------------------


def cmd_synth(args) -> None:
    started = time.time()
    width, height = args.size
    params = SceneParams(
        width=width,
        height=height,
        num_blobs=args.blobs,
        coverage=args.coverage,
        roughness=args.roughness,
        contrast=args.contrast,
    )
    sizes = tuple(args.split) if args.split else split_sizes(args.n)
    if len(sizes) != 3:
        raise ValidationError("--split needs three comma-separated counts")
    ds = build_dataset(params, args.n, args.seed, sizes, args.label_noise, args.image_noise)
    write_dataset(ds, args.out)
    path = os.path.join(args.out, "manifest.json")
    with open(path) as fh:
        manifest = json.load(fh)
    manifest["run"] = _run_record(args, started, ["images", "masks", "manifest.json"])
    _write_json(path, manifest)


def cmd_weights(args) -> list:
    paths = sorted(glob.glob(os.path.join(args.masks, "*.png")))
    if not paths:
        raise FileNotFoundError(f"no PNG masks in {args.masks}")
    masks = [load_mask(p, args.classes) for p in paths]
    stats = accumulate_class_stats(masks)
    cw = class_weights(stats) if args.class_weights else None
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    for path, mask in zip(paths, masks):
        stem = os.path.splitext(os.path.basename(path))[0]
        save_weight_map(pixel_weights(mask, cw, args.sigma), os.path.join(args.out, f"{stem}.pfm"))
        outputs.append(f"{stem}.pfm")
        if args.distance:
            save_pfm(mask_distance_field(mask).distance(), os.path.join(args.out, f"{stem}_dist.pfm"))
            outputs.append(f"{stem}_dist.pfm")
    omega = class_weights(stats).weights
    _write_json(
        os.path.join(args.out, "stats.json"),
        {"m": stats.total_pixels, "n_c": list(stats.pixels_per_class), "omega_c": list(omega)},
    )
    outputs.append("stats.json")
    return outputs


def _train_config(args, **overrides) -> dict:
    cfg = {"epochs": args.epochs, "batch_size": args.batch_size, "features": args.features}
    cfg.update(overrides)
    return cfg


def cmd_train(args) -> list:
    data = read_dataset(args.data)
    cfg = TrainConfig(
        sigma=args.sigma,
        use_class_weights=args.class_weights,
        seed=args.seed,
        cache_dir=args.cache_dir,
        **_train_config(args),
    )
    result = train(cfg, data)
    write_run(result, args.out)
    return ["model.msgn", "history.json"]


def cmd_eval(args) -> list:
    data = read_dataset(args.data)
    model = load_model(args.model)
    metrics = evaluate(model, data.split(args.split), use_clean=args.clean)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "metrics.json"), metrics)
    return ["metrics.json"]


def cmd_sweep(args) -> list:
    data = read_dataset(args.data)
    arms = sweep(data, args.seed, args.sigmas, **_train_config(args))
    os.makedirs(args.out, exist_ok=True)
    outputs = ["sweep.md", "sweep.json"]
    for arm in arms:
        slug = "baseline" if arm.name == "baseline" else f"sigma_{arm.name[2:]}"
        write_run(arm.result, os.path.join(args.out, slug))
        outputs.append(slug)
    _write_text(os.path.join(args.out, "sweep.md"), sweep_table(arms))
    _write_json(
        os.path.join(args.out, "sweep.json"),
        {"seed": args.seed, "foreground_class": 1, "rows": [a.to_json() for a in arms]},
    )
    return outputs


def cmd_noise_bench(args) -> list:
    data = read_dataset(args.data)
    report = noise_bench(data, args.noise, args.seed, args.sigma, **_train_config(args))
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "noise_bench.json"), report)
    _write_text(os.path.join(args.out, "noise_bench.md"), noise_table(report))
    return ["noise_bench.json", "noise_bench.md"]


_PALETTE = np.array(
    [[0, 0, 0], [40, 200, 70], [230, 60, 50], [60, 110, 230], [240, 200, 40], [190, 80, 200]],
    dtype=np.uint8,
)


def _colorize(labels: np.ndarray) -> np.ndarray:
    return _PALETTE[labels % len(_PALETTE)]


def _heat(weights: np.ndarray) -> np.ndarray:
    top = float(weights.max()) or 1.0
    t = weights / top
    return (np.stack([t, 0.35 * t, 1.0 - t], axis=-1) * 255).astype(np.uint8)


def cmd_report(args) -> list:
    from PIL import Image

    data = read_dataset(args.data)
    samples = data.split(args.split)[: args.limit]
    if not samples:
        raise ValidationError(f"split {args.split!r} is empty")
    base = load_model(args.baseline)
    weighted = load_model(args.weighted)
    cw = class_weights(accumulate_class_stats(s.mask for s in data.split("train")))
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    gap = 2
    for s in samples:
        img = (s.image.data * 255).round().astype(np.uint8)
        if img.shape[2] == 1:
            img = np.repeat(img, 3, axis=2)
        panels = [
            img,
            _colorize(s.mask.labels),
            _colorize(predict(base, s.image.data)[0]),
            _colorize(predict(weighted, s.image.data)[0]),
            _heat(pixel_weights(s.mask, cw, args.sigma).weights),
        ]
        h, w = s.mask.shape
        canvas = np.full((h, len(panels) * (w + gap) - gap, 3), 255, dtype=np.uint8)
        for i, p in enumerate(panels):
            canvas[:, i * (w + gap) : i * (w + gap) + w] = p
        name = f"panel_{s.id}.png"
        Image.fromarray(canvas).save(os.path.join(args.out, name))
        outputs.append(name)
    return outputs


# -- parser ------------------------------------------------------------------


def _add_training_flags(p, epochs=BENCHMARK_EPOCHS):
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--features", type=int, default=16)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="segweight", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"segweight {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--size", type=_size, default=(64, 64))
    p.add_argument("--seed", type=int, default=BENCHMARK_SEED)
    p.add_argument("--coverage", type=_pair(float), default=(0.05, 0.10))
    p.add_argument("--blobs", type=_pair(int), default=(1, 4))
    p.add_argument("--roughness", type=float, default=0.3)
    p.add_argument("--contrast", type=float, default=1.0)
    p.add_argument("--split", type=lambda t: tuple(int(v) for v in t.split(",")), default=None)
    p.add_argument("--label-noise", type=int, default=0, metavar="PX")
    p.add_argument("--image-noise", type=float, default=0.0, metavar="SIGMA")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("weights", help="compute per-pixel weight maps for a directory of masks")
    p.add_argument("--masks", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--sigma", type=_sigma, required=True)
    p.add_argument("--class-weights", type=_on_off, default=True)
    p.add_argument("--distance", action="store_true", help="also export distance-to-edge PFMs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("train", help="train one arm")
    p.add_argument("--data", required=True)
    p.add_argument("--sigma", type=_sigma, default=None)
    p.add_argument("--class-weights", type=_on_off, default=False)
    p.add_argument("--seed", type=int, default=BENCHMARK_SEED)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--out", required=True)
    _add_training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="per-class PA/IoU of a model on a split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--clean", action="store_true", help="use noise-free images when available")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="baseline plus sigma sweep, Markdown table")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=BENCHMARK_SEED)
    p.add_argument("--sigmas", type=_floats, default=SWEEP_SIGMAS)
    p.add_argument("--out", required=True)
    _add_training_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("noise-bench", help="train on noisy images, test noisy and clean")
    p.add_argument("--data", required=True)
    p.add_argument("--noise", type=float, default=NOISE_SIGMA)
    p.add_argument("--sigma", type=_sigma, default=WEIGHTED_SIGMA)
    p.add_argument("--seed", type=int, default=BENCHMARK_SEED)
    p.add_argument("--out", required=True)
    _add_training_flags(p)
    p.set_defaults(func=cmd_noise_bench)

    p = sub.add_parser("report", help="render ground truth | baseline | weighted panels")
    p.add_argument("--data", required=True)
    p.add_argument("--baseline", required=True)
    p.add_argument("--weighted", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--limit", type=int, default=4)
    p.add_argument("--sigma", type=_sigma, default=WEIGHTED_SIGMA)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return contextlib.nullcontext()
    try:
        n = int(value)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV} must be an integer, got {value!r}")
    return threadpool_limits(limits=max(1, n))


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    started = time.time()
    try:
        with _thread_limit():
            outputs = args.func(args)
        if args.command != "synth":
            _write_manifest(args, started, outputs or [])
    except OSError as exc:
        print(f"segweight {args.command}: I/O error: {exc}", file=sys.stderr)
        return 2
    except (SegweightError, ValueError) as exc:
        print(f"segweight {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
