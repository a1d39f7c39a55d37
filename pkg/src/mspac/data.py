"""Synthetic two-modality identities, manifest I/O and the P x M batch sampler.

Each identity owns a Gaussian latent code z.  A modality renders it through
its own fixed linear map, image = reshape(A_mod @ z) + noise, so the two
modalities share identity structure but differ by a linear "modality gap".
The columns of A are horizontal colour bands (a crude head/torso/legs
layout), so identity shows up in local appearance that survives convolution
and global pooling, and differs from stripe to stripe.

Camera layout follows the usual four visible / two thermal setup: visible
cameras 1, 2 (indoor) and 4, 5 (outdoor), thermal cameras 3 and 6.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from .autodiff import mspd

log = logging.getLogger(__name__)

RGB_CAMERAS = (1, 4, 2, 5)  # round-robin order alternates indoor/outdoor
IR_CAMERAS = (3, 6)
OUTDOOR_RGB_CAMERAS = frozenset({4, 5})
CHANNELS = {"rgb": 3, "ir": 1}
MANIFEST_COLUMNS = ("image_id", "identity", "modality", "camera", "split", "path")


class SamplingError(ValueError):
    pass


class DatasetIOError(IOError):
    pass


@dataclass
class SynthConfig:
    n_ids: int = 20
    per_id: int = 8
    query_per_id: int = 4
    latent_dim: int = 16
    noise_sigma: float = 0.5
    bands: int = 6
    smoothness: float = 1.0
    img_h: int = 48
    img_w: int = 16
    seed: int = 0

    def __post_init__(self):
        for key in ("n_ids", "per_id", "latent_dim", "bands", "img_h", "img_w"):
            if getattr(self, key) <= 0:
                raise ValueError(f"data.{key} must be positive")
        if not 0 <= self.query_per_id < self.per_id:
            raise ValueError("data.query_per_id must be in [0, per_id)")
        if self.noise_sigma < 0 or self.smoothness < 0:
            raise ValueError("data.noise_sigma and data.smoothness must be nonnegative")


@dataclass(frozen=True)
class Record:
    image_id: str
    identity: int  # 1-based
    modality: str
    camera: int
    split: str
    path: str


@dataclass
class Dataset:
    records: List[Record]
    images: Dict[str, np.ndarray] = field(repr=False)

    def select(self, split: Optional[str] = None, modality: Optional[str] = None) -> List[Record]:
        return [
            r
            for r in self.records
            if (split is None or r.split == split) and (modality is None or r.modality == modality)
        ]

    def stack(self, records: List[Record]) -> np.ndarray:
        return np.stack([self.images[r.image_id] for r in records])

    @property
    def n_ids(self) -> int:
        return len({r.identity for r in self.records})


def _modality_map(rng: np.random.Generator, cfg: SynthConfig, channels: int) -> np.ndarray:
    # one random colour per horizontal band per latent factor, softened at band edges
    bands = rng.standard_normal((cfg.latent_dim, cfg.bands, channels))
    rows = np.minimum(np.arange(cfg.img_h) * cfg.bands // cfg.img_h, cfg.bands - 1)
    fields = np.repeat(bands[:, rows, None, :], cfg.img_w, axis=2)
    if cfg.smoothness > 0:
        fields = gaussian_filter(fields, sigma=(0, cfg.smoothness, cfg.smoothness, 0), mode="nearest")
    # unit pixel variance for a standard normal latent
    fields /= fields.std(axis=0, keepdims=True) * np.sqrt(cfg.latent_dim)
    return fields.reshape(cfg.latent_dim, -1).T


def generate_dataset(cfg: SynthConfig) -> Dataset:
    """Pure function of ``cfg``: the same config yields bit-identical images."""
    rng = np.random.default_rng(cfg.seed)
    maps = {"rgb": _modality_map(rng, cfg, 3), "ir": _modality_map(rng, cfg, 1)}
    latents = rng.standard_normal((cfg.n_ids, cfg.latent_dim))
    n_train = cfg.per_id - cfg.query_per_id
    records, images = [], {}
    for y in range(cfg.n_ids):
        for modality, cams in (("rgb", RGB_CAMERAS), ("ir", IR_CAMERAS)):
            clean = maps[modality] @ latents[y]
            for k in range(cfg.per_id):
                noise = rng.standard_normal(clean.shape) * cfg.noise_sigma
                img = (clean + noise).reshape(cfg.img_h, cfg.img_w, CHANNELS[modality]).astype(np.float32)
                if k < n_train:
                    split = "train"
                else:
                    split = "query" if modality == "ir" else "gallery"
                image_id = f"{modality}_{y + 1:04d}_{k:02d}"
                records.append(
                    Record(image_id, y + 1, modality, cams[k % len(cams)], split, f"blobs/{image_id}.mspd")
                )
                images[image_id] = img
    return Dataset(records, images)


def write_dataset(ds: Dataset, out_dir) -> Path:
    out = Path(out_dir)
    try:
        (out / "blobs").mkdir(parents=True, exist_ok=True)
        with open(out / "manifest.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(MANIFEST_COLUMNS)
            for r in ds.records:
                writer.writerow([r.image_id, r.identity, r.modality, r.camera, r.split, r.path])
    except OSError as exc:
        raise DatasetIOError(f"cannot write dataset to {out}: {exc}") from exc
    for r in ds.records:
        mspd.save(out / r.path, ds.images[r.image_id])
    return out / "manifest.csv"


def read_manifest(path) -> List[Record]:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DatasetIOError(f"cannot read manifest {path}: {exc}") from exc
    return [
        Record(row["image_id"], int(row["identity"]), row["modality"], int(row["camera"]), row["split"], row["path"])
        for row in rows
    ]


def load_dataset(path) -> Dataset:
    """Load ``manifest.csv`` (or the directory holding it) and every blob."""
    path = Path(path)
    manifest = path / "manifest.csv" if path.is_dir() else path
    records = read_manifest(manifest)
    root = manifest.parent
    images = {}
    for r in records:
        images[r.image_id] = mspd.load(root / r.path)
    return Dataset(records, images)


@dataclass
class Batch:
    rgb: np.ndarray
    ir: np.ndarray
    rgb_labels: np.ndarray  # 1-based identities
    ir_labels: np.ndarray
    rgb_ids: List[str]
    ir_ids: List[str]

    @property
    def labels(self) -> np.ndarray:
        """rgb labels followed by ir labels, matching the model's batch order."""
        return np.concatenate([self.rgb_labels, self.ir_labels])

    def __len__(self):
        return len(self.rgb_labels) + len(self.ir_labels)


def check_batch(batch: Batch, P: int, M: int) -> None:
    ids, counts = np.unique(batch.rgb_labels, return_counts=True)
    ir_ids, ir_counts = np.unique(batch.ir_labels, return_counts=True)
    if len(batch) != 2 * P * M:
        raise SamplingError(f"batch size {len(batch)} != 2*P*M = {2 * P * M}")
    if len(ids) != P or not np.array_equal(ids, ir_ids):
        raise SamplingError("batch must hold the same P identities in both modalities")
    if np.any(counts != M) or np.any(ir_counts != M):
        raise SamplingError(f"every identity needs exactly M={M} images per modality")


class PKSampler:
    """Draw P identities, then M rgb and M ir images of each, all without replacement."""

    def __init__(self, ds: Dataset, P: int, M: int, split: str = "train"):
        if P <= 0 or M <= 0:
            raise ValueError("P and M must be positive")
        self.ds, self.P, self.M = ds, P, M
        self.pool: Dict[int, Dict[str, List[Record]]] = {}
        for r in ds.select(split=split):
            self.pool.setdefault(r.identity, {"rgb": [], "ir": []})[r.modality].append(r)
        self.identities = sorted(self.pool)
        for y in self.identities:
            for modality in ("rgb", "ir"):
                have = len(self.pool[y][modality])
                if have < M:
                    raise SamplingError(f"identity {y} has {have} {modality} images, need M={M}")
        if P > len(self.identities):
            raise SamplingError(f"P={P} exceeds the {len(self.identities)} available identities")

    def sample(self, rng: np.random.Generator) -> Batch:
        chosen = rng.choice(len(self.identities), size=self.P, replace=False)
        picked = {"rgb": [], "ir": []}
        for c in chosen:
            y = self.identities[c]
            for modality in ("rgb", "ir"):
                pool = self.pool[y][modality]
                for i in rng.choice(len(pool), size=self.M, replace=False):
                    picked[modality].append(pool[i])
        return Batch(
            rgb=self.ds.stack(picked["rgb"]),
            ir=self.ds.stack(picked["ir"]),
            rgb_labels=np.array([r.identity for r in picked["rgb"]]),
            ir_labels=np.array([r.identity for r in picked["ir"]]),
            rgb_ids=[r.image_id for r in picked["rgb"]],
            ir_ids=[r.image_id for r in picked["ir"]],
        )

    def batches_per_epoch(self) -> int:
        n_train = sum(len(v["rgb"]) + len(v["ir"]) for v in self.pool.values())
        return n_train // (2 * self.P * self.M)


def sample_batch(ds: Dataset, P: int, M: int, rng: np.random.Generator) -> Batch:
    return PKSampler(ds, P, M).sample(rng)
