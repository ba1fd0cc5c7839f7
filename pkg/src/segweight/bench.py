"""The seeded desk-scale benchmark: sigma sweep and train-noisy/test-clean runs.

Every arm trains on the same data with the same seed, so arms differ only
in the per-pixel weights fed to the loss. Reported numbers are foreground
PA and IoU on the test split.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .dataset import Dataset, build_dataset
from .metrics import iou, pixel_accuracy
from .trainer import TrainConfig, TrainResult, _safe, confusion, train
from .synth import SceneParams

BENCHMARK_SEED = 7
BENCHMARK_SCENE = SceneParams(
    width=64, height=64, num_blobs=(1, 4), coverage=(0.05, 0.10), roughness=0.3, contrast=1.0
)
BENCHMARK_SIZES = (120, 40, 40)
BENCHMARK_LABEL_NOISE = 1
BENCHMARK_EPOCHS = 30
SWEEP_SIGMAS = (1.0, 2.0, 3.0)
NOISE_SIGMA = 0.02
WEIGHTED_SIGMA = 2.0


def benchmark_dataset(seed: int = BENCHMARK_SEED) -> Dataset:
    return build_dataset(
        BENCHMARK_SCENE,
        sum(BENCHMARK_SIZES),
        seed,
        sizes=BENCHMARK_SIZES,
        label_noise=BENCHMARK_LABEL_NOISE,
    )


@dataclass
class ArmResult:
    name: str
    result: TrainResult
    metrics: dict

    def to_json(self) -> dict:
        return {"arm": self.name, "best_epoch": self.result.best_epoch, **self.metrics}


def _fg_metrics(model, samples, fg: int, use_clean: bool = False) -> dict:
    conf = confusion(model, samples, use_clean)
    return {"PA": _safe(pixel_accuracy, conf, fg), "IoU": _safe(iou, conf, fg)}


def run_arm(
    data: Dataset,
    name: str,
    sigma: Optional[float],
    use_class_weights: bool,
    seed: int,
    epochs: int = BENCHMARK_EPOCHS,
    **config,
) -> ArmResult:
    cfg = TrainConfig(
        epochs=epochs, sigma=sigma, use_class_weights=use_class_weights, seed=seed, **config
    )
    result = train(cfg, data)
    metrics = _fg_metrics(result.model, data.split("test"), cfg.foreground_class)
    return ArmResult(name, result, metrics)


def sweep(
    data: Dataset,
    seed: int = BENCHMARK_SEED,
    sigmas: Sequence[float] = SWEEP_SIGMAS,
    epochs: int = BENCHMARK_EPOCHS,
    **config,
) -> list:
    """Uniform baseline plus one class-weighted arm per sigma."""
    arms = [run_arm(data, "baseline", None, False, seed, epochs, **config)]
    for s in sigmas:
        arms.append(run_arm(data, f"σ={s:g}", s, True, seed, epochs, **config))
    return arms


def sweep_table(arms: Sequence[ArmResult]) -> str:
    lines = ["| Method | PA | IoU |", "|---|---|---|"]
    for arm in arms:
        lines.append(f"| {arm.name} | {arm.metrics['PA']:.3f} | {arm.metrics['IoU']:.3f} |")
    return "\n".join(lines) + "\n"


def noise_bench(
    data: Dataset,
    noise: float = NOISE_SIGMA,
    seed: int = BENCHMARK_SEED,
    sigma: float = WEIGHTED_SIGMA,
    epochs: int = BENCHMARK_EPOCHS,
    **config,
) -> dict:
    """Train both arms on noisy images, test on noisy and on clean images."""
    noisy = data.with_image_noise(noise, seed)
    test = noisy.split("test")
    report = {"noise_sigma": noise, "seed": seed, "weighted_sigma": sigma, "arms": {}}
    for name, s, cw in (("baseline", None, False), ("weighted", sigma, True)):
        cfg = TrainConfig(epochs=epochs, sigma=s, use_class_weights=cw, seed=seed, **config)
        result = train(cfg, noisy)
        fg = cfg.foreground_class
        on_noisy = _fg_metrics(result.model, test, fg)
        on_clean = _fg_metrics(result.model, test, fg, use_clean=True)
        report["arms"][name] = {
            "best_epoch": result.best_epoch,
            "noisy_test": on_noisy,
            "clean_test": on_clean,
            "PA_drop": on_noisy["PA"] - on_clean["PA"],
        }
    return report


def noise_table(report: dict) -> str:
    lines = [
        "| Method | Noisy PA | Noisy IoU | Noise-free PA | Noise-free IoU |",
        "|---|---|---|---|---|",
    ]
    for name, arm in report["arms"].items():
        n, c = arm["noisy_test"], arm["clean_test"]
        lines.append(f"| {name} | {n['PA']:.3f} | {n['IoU']:.3f} | {c['PA']:.3f} | {c['IoU']:.3f} |")
    return "\n".join(lines) + "\n"
