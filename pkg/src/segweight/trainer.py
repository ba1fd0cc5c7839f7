"""Mini-batch SGD training of :class:`MicroSegNet` under a pixel-weighted loss.

The objective for a batch is the sum over its images of the per-image
weighted cross-entropy (mean over that image's pixels), plus L2 weight decay
applied by the optimizer. ``sigma=None`` and ``use_class_weights=False``
give every pixel weight 1, which is plain cross-entropy training.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .dataset import Dataset
from .errors import TrainingError, UndefinedMetricError, ValidationError
from .loss import loss_gradient, softmax, weighted_loss
from .metrics import ConfusionMatrix, accumulate, iou, pixel_accuracy, summarize
from .model import MicroSegNet, OptimizerState, backward, forward, save_model, sgd_step
from .synth import Rng
from .weighting import (
    ClassWeights,
    WeightCache,
    accumulate_class_stats,
    class_weights,
    pixel_weights,
)

log = logging.getLogger(__name__)

# stream keys under the training seed
_INIT, _SHUFFLE = 10, 11

MONOTONE_EPOCHS = 5


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    sigma: Optional[float] = None
    use_class_weights: bool = False
    seed: int = 7
    features: int = 16
    learning_rate: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    foreground_class: int = 1
    check_monotone: bool = True
    cache_dir: Optional[str] = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.sigma is not None and not self.sigma > 0:
            raise ValidationError("sigma must be positive or None")

    @property
    def arm(self) -> str:
        if self.sigma is None and not self.use_class_weights:
            return "baseline"
        parts = []
        if self.sigma is not None:
            parts.append(f"sigma={self.sigma:g}")
        if self.use_class_weights:
            parts.append("class-weights")
        return "+".join(parts)

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("cache_dir")
        return d


@dataclass
class TrainResult:
    model: MicroSegNet
    history: list
    best_epoch: int
    class_weights: Optional[list] = None
    config: dict = field(default_factory=dict)

    def history_json(self) -> dict:
        return {
            "config": self.config,
            "class_weights": self.class_weights,
            "best_epoch": self.best_epoch,
            "epochs": self.history,
        }


def _stack(images) -> np.ndarray:
    return np.stack([im.data for im in images])


def batch_loss_and_grad(model, images, masks, weights):
    """Summed per-image weighted loss of a batch and the parameter gradients."""
    logits, cache = forward(model, _stack(images))
    probs = softmax(logits)
    total = 0.0
    grad_logits = np.empty_like(probs)
    for i, (mask, w) in enumerate(zip(masks, weights)):
        total += weighted_loss(probs[i], mask, w).total
        grad_logits[i] = loss_gradient(probs[i], mask, w)
    return total, backward(model, cache, grad_logits)


def confusion(model: MicroSegNet, samples, use_clean: bool = False, batch: int = 16) -> ConfusionMatrix:
    conf = ConfusionMatrix.empty(model.num_classes)
    for start in range(0, len(samples), batch):
        chunk = samples[start : start + batch]
        imgs = [s.clean_image if use_clean and s.clean_image is not None else s.image for s in chunk]
        logits, _ = forward(model, _stack(imgs))
        pred = logits.argmax(axis=-1)
        for p, s in zip(pred, chunk):
            conf = accumulate(conf, p, s.mask)
    return conf


def evaluate(model: MicroSegNet, samples, use_clean: bool = False) -> dict:
    """Per-class PA/IoU over a split, aggregated into one confusion matrix."""
    if not samples:
        raise ValidationError("cannot evaluate on an empty split")
    return summarize(confusion(model, samples, use_clean))


def _safe(metric, conf, cls) -> float:
    try:
        return metric(conf, cls)
    except UndefinedMetricError:
        return 0.0


def train(config: TrainConfig, data: Dataset) -> TrainResult:
    train_set = data.split("train")
    val_set = data.split("val")
    if not train_set:
        raise ValidationError("dataset has no training samples")
    masks = [s.mask for s in train_set]

    cw: Optional[ClassWeights] = None
    if config.use_class_weights:
        cw = class_weights(accumulate_class_stats(masks))
    cache = WeightCache(config.cache_dir) if config.cache_dir else None
    if cache is not None:
        weights = [cache.get(m, cw, config.sigma) for m in masks]
    else:
        weights = [pixel_weights(m, cw, config.sigma) for m in masks]

    root = Rng(config.seed)
    model = MicroSegNet.initialized(
        train_set[0].image.channels, data.num_classes, config.features, root.child(_INIT).generator
    )
    model.set_input_stats(_stack(s.image for s in train_set))
    opt = OptimizerState(model, config.learning_rate, config.momentum, config.weight_decay)
    fg = config.foreground_class

    history = []
    best = (-1.0, 0, model.copy())
    for epoch in range(1, config.epochs + 1):
        order = root.child(_SHUFFLE, epoch).generator.permutation(len(train_set))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = batch_loss_and_grad(
                model,
                [train_set[i].image for i in idx],
                [masks[i] for i in idx],
                [weights[i] for i in idx],
            )
            if not math.isfinite(loss):
                raise TrainingError(f"loss became non-finite in epoch {epoch}")
            epoch_loss += loss
            try:
                sgd_step(model, grads, opt)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch}: {exc}") from exc
        epoch_loss /= len(train_set)
        record = {"epoch": epoch, "train_loss": epoch_loss}
        if val_set:
            conf = confusion(model, val_set)
            record["val_PA"] = _safe(pixel_accuracy, conf, fg)
            record["val_IoU"] = _safe(iou, conf, fg)
        history.append(record)
        log.info("%s epoch %d: %s", config.arm, epoch, record)

        if config.check_monotone and 1 < epoch <= MONOTONE_EPOCHS:
            if epoch_loss > history[-2]["train_loss"]:
                raise TrainingError(
                    f"training loss rose in epoch {epoch} "
                    f"({history[-2]['train_loss']:.6g} -> {epoch_loss:.6g}); "
                    "learning rate or data misconfigured"
                )
        score = record.get("val_IoU", -epoch_loss)
        if score > best[0]:
            best = (score, epoch, model.copy())

    return TrainResult(
        model=best[2],
        history=history,
        best_epoch=best[1],
        class_weights=None if cw is None else list(cw.weights),
        config=config.to_json(),
    )


def write_run(result: TrainResult, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    save_model(result.model, os.path.join(out_dir, "model.msgn"))
    with open(os.path.join(out_dir, "history.json"), "w") as fh:
        json.dump(result.history_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
