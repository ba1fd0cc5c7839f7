"""Synthetic dataset assembly and its on-disk layout.

A dataset directory holds::

    manifest.json          parameters, seed and one entry per sample
    images/NNNN.png        8-bit image (noisy, when image noise was requested)
    images_clean/NNNN.png  noise-free image, only when image noise > 0
    masks/NNNN.png         class indices as raw bytes (label noise applied
                           to train/val masks only)

Images are quantised to 8 bits at generation time, so a dataset held in
memory and the same dataset read back from disk are identical.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FormatError, ValidationError
from .imagery import FloatImage, LabelMask, load_image, load_mask, save_image, save_mask
from .synth import Rng, SceneParams, add_gaussian_noise, generate_scene, perturb_boundary

SPLITS = ("train", "val", "test")
MANIFEST = "manifest.json"

# stream keys under the master seed
_SCENE, _LABEL_NOISE, _IMAGE_NOISE = 0, 1, 2


@dataclass(frozen=True, eq=False)
class Sample:
    id: str
    split: str
    image: FloatImage
    mask: LabelMask
    clean_image: Optional[FloatImage] = None


@dataclass
class Dataset:
    samples: list
    num_classes: int = 2
    meta: dict = dataclasses.field(default_factory=dict)

    def split(self, name: str) -> list:
        return [s for s in self.samples if s.split == name]

    def with_image_noise(self, sigma: float, seed: int) -> "Dataset":
        """Copy with Gaussian noise on every image; originals kept as ``clean_image``."""
        root = Rng(seed).child(_IMAGE_NOISE)
        noisy = []
        for i, s in enumerate(self.samples):
            clean = s.clean_image if s.clean_image is not None else s.image
            noisy.append(
                dataclasses.replace(
                    s, image=add_gaussian_noise(clean, sigma, root.child(i)), clean_image=clean
                )
            )
        return Dataset(noisy, self.num_classes, dict(self.meta, image_noise=sigma))

    def clean(self) -> "Dataset":
        return Dataset(
            [
                dataclasses.replace(s, image=s.clean_image, clean_image=None)
                if s.clean_image is not None
                else s
                for s in self.samples
            ],
            self.num_classes,
            dict(self.meta, image_noise=0.0),
        )


def split_sizes(n: int, fractions=(0.6, 0.2, 0.2)) -> tuple[int, int, int]:
    """Train/val/test counts; 200 -> (120, 40, 40)."""
    if n < 3:
        raise ValidationError("need at least 3 samples to fill three splits")
    val = max(1, int(round(n * fractions[1])))
    test = max(1, int(round(n * fractions[2])))
    train = n - val - test
    if train < 1:
        raise ValidationError(f"split of {n} samples leaves no training data")
    return train, val, test


def _quantize(img: FloatImage) -> FloatImage:
    return FloatImage(np.rint(img.data * 255.0) / 255.0)


def build_dataset(
    params: SceneParams,
    n: int,
    seed: int,
    sizes: Optional[tuple[int, int, int]] = None,
    label_noise: int = 0,
    image_noise: float = 0.0,
) -> Dataset:
    sizes = sizes or split_sizes(n)
    if sum(sizes) != n:
        raise ValidationError(f"split sizes {sizes} do not add up to {n}")
    root = Rng(seed)
    splits = [name for name, k in zip(SPLITS, sizes) for _ in range(k)]
    samples = []
    for i, split in enumerate(splits):
        image, mask = generate_scene(params, root.child(_SCENE, i))
        image = _quantize(image)
        if label_noise and split != "test":
            mask = perturb_boundary(mask, label_noise, root.child(_LABEL_NOISE, i))
        samples.append(Sample(f"{i:04d}", split, image, mask))
    ds = Dataset(
        samples,
        2,
        {
            "seed": seed,
            "params": _params_json(params),
            "sizes": list(sizes),
            "label_noise": label_noise,
            "image_noise": 0.0,
        },
    )
    if image_noise > 0:
        ds = ds.with_image_noise(image_noise, seed)
        ds.samples = [dataclasses.replace(s, image=_quantize(s.image)) for s in ds.samples]
    return ds


def _params_json(params: SceneParams) -> dict:
    d = dataclasses.asdict(params)
    d["num_blobs"] = list(params.num_blobs)
    d["coverage"] = list(params.coverage)
    return d


def write_dataset(ds: Dataset, out_dir) -> str:
    out_dir = os.fspath(out_dir)
    for sub in ("images", "masks"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    has_clean = any(s.clean_image is not None for s in ds.samples)
    if has_clean:
        os.makedirs(os.path.join(out_dir, "images_clean"), exist_ok=True)
    entries = []
    for s in ds.samples:
        entry = {
            "id": s.id,
            "split": s.split,
            "image": f"images/{s.id}.png",
            "mask": f"masks/{s.id}.png",
            "coverage": float(s.mask.labels.mean()),
        }
        save_image(s.image, os.path.join(out_dir, entry["image"]))
        save_mask(s.mask, os.path.join(out_dir, entry["mask"]))
        if s.clean_image is not None:
            entry["clean_image"] = f"images_clean/{s.id}.png"
            save_image(s.clean_image, os.path.join(out_dir, entry["clean_image"]))
        entries.append(entry)
    manifest = dict(ds.meta, num_classes=ds.num_classes, samples=entries)
    path = os.path.join(out_dir, MANIFEST)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_dataset(data_dir) -> Dataset:
    data_dir = os.fspath(data_dir)
    path = os.path.join(data_dir, MANIFEST)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no dataset manifest at {path}")
    try:
        with open(path) as fh:
            manifest = json.load(fh)
        num_classes = int(manifest["num_classes"])
        entries = manifest["samples"]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed manifest ({exc})") from exc
    samples = []
    for e in entries:
        clean = None
        if "clean_image" in e:
            clean = load_image(os.path.join(data_dir, e["clean_image"]))
        samples.append(
            Sample(
                e["id"],
                e["split"],
                load_image(os.path.join(data_dir, e["image"])),
                load_mask(os.path.join(data_dir, e["mask"]), num_classes),
                clean,
            )
        )
    meta = {k: v for k, v in manifest.items() if k not in ("samples", "num_classes")}
    return Dataset(samples, num_classes, meta)
