"""Training loop, per-epoch log and checkpoints."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from . import config as config_mod
from .autodiff import backward, mspd, no_grad
from .config import RunConfig
from .data import Dataset, PKSampler, generate_dataset, load_dataset
from .losses import renormalize_centers
from .model import Model
from .optim import SGD, NonFiniteGradientError

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "l_id", "l_mecen", "l_total", "lr", "intra_dist")
PROBE_BATCHES = 4


class NumericalError(FloatingPointError):
    """Non-finite loss or gradient during training."""


class CheckpointError(IOError):
    pass


@dataclass
class TrainResult:
    model: Model
    rows: List[Dict[str, float]] = field(default_factory=list)
    checkpoints: List[Path] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def final_checkpoint(self) -> Optional[Path]:
        return self.checkpoints[-1] if self.checkpoints else None


def resolve_dataset(cfg: RunConfig) -> Dataset:
    if cfg.data_dir:
        return load_dataset(cfg.data_dir)
    return generate_dataset(cfg.data)


def build_model(cfg: RunConfig, n_ids: int) -> Model:
    return Model(cfg.encoder, cfg.mspac, cfg.loss, n_ids, seed=cfg.train.seed)


def intra_class_distance(model: Model, ds: Dataset, split: str = "train") -> float:
    """Mean Euclidean distance from each embedding to its identity's mean embedding.

    Both modalities of an identity share one mean, so this also measures how
    well the two modalities are pulled together.
    """
    embs, ids = [], []
    for modality in ("rgb", "ir"):
        recs = ds.select(split, modality)
        if recs:
            embs.append(model.embed_images(ds.stack(recs), modality))
            ids.extend(r.identity for r in recs)
    if not embs:
        return float("nan")
    e = np.concatenate(embs).astype(np.float64)
    ids = np.asarray(ids)
    total = 0.0
    for y in np.unique(ids):
        block = e[ids == y]
        total += np.linalg.norm(block - block.mean(0), axis=1).sum()
    return float(total / len(e))


# ------------------------------------------------------------------ checkpoints

def save_checkpoint(model: Model, path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        lines = []
        for name in sorted(model.params):
            arr = model.params[name].data
            mspd.save(path / f"{name}.mspd", arr)
            lines.append(f"{name} {'x'.join(map(str, arr.shape))}\n")
        (path / "manifest.txt").write_text("".join(lines))
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(model: Model, path) -> Model:
    path = Path(path)
    try:
        names = [ln.split()[0] for ln in (path / "manifest.txt").read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint manifest in {path}: {exc}") from exc
    missing = sorted(set(model.params) - set(names))
    extra = sorted(set(names) - set(model.params))
    if missing or extra:
        raise CheckpointError(f"checkpoint {path} does not fit the model: missing {missing}, unexpected {extra}")
    for name in names:
        arr = mspd.load(path / f"{name}.mspd")
        p = model.params[name]
        if arr.shape != p.shape:
            raise CheckpointError(f"{path / name}: shape {arr.shape}, model expects {p.shape}")
        p.data = arr.astype(p.data.dtype)
    return model


def latest_checkpoint(run_dir) -> Path:
    ckpts = sorted((Path(run_dir) / "checkpoints").glob("epoch_*"))
    if not ckpts:
        raise CheckpointError(f"no checkpoints under {run_dir}")
    return ckpts[-1]


def load_run(run_dir, checkpoint=None, overrides=()) -> tuple:
    """Rebuild config and model from a run directory written by :func:`train`."""
    run_dir = Path(run_dir)
    cfg = config_mod.load(run_dir / "config.txt", overrides)
    n_ids = int((run_dir / "n_ids.txt").read_text())
    model = build_model(cfg, n_ids)
    load_checkpoint(model, checkpoint or latest_checkpoint(run_dir))
    return cfg, model


# ------------------------------------------------------------------ training

def _fmt(x: float) -> str:
    return repr(float(x))


def _write_log(path: Path, rows: List[Dict[str, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in rows:
            w.writerow([int(r["epoch"])] + [_fmt(r[c]) for c in LOG_COLUMNS[1:]])


def _check_finite(value: float, what: str, epoch: int, batch: int) -> None:
    if not np.isfinite(value):
        raise NumericalError(f"non-finite {what} ({value}) at epoch {epoch}, batch {batch}")


def train(
    cfg: RunConfig,
    ds: Optional[Dataset] = None,
    out_dir=None,
    progress: Optional[Callable[[Dict[str, float]], None]] = None,
) -> TrainResult:
    """Train from scratch; write config, log and one checkpoint per epoch into ``out_dir``.

    Row 0 of the log holds the losses of the untrained model on a fixed set of
    probe batches; row e >= 1 holds the mean over the batches of epoch e.
    Wall-clock times go to a separate ``timing.csv`` so the log itself is a
    pure function of the configuration.
    """
    ds = ds if ds is not None else resolve_dataset(cfg)
    n_ids = max(r.identity for r in ds.records)
    model = build_model(cfg, n_ids)
    tc = cfg.train
    sampler = PKSampler(ds, tc.P, tc.M)
    steps = tc.iters_per_epoch or sampler.batches_per_epoch()
    if steps == 0:
        raise ValueError("training split is smaller than one batch")
    opt = SGD(model.trainable, cfg.optim)
    seeds = np.random.SeedSequence(tc.seed).spawn(2)
    rng, probe_rng = np.random.default_rng(seeds[0]), np.random.default_rng(seeds[1])

    out = Path(out_dir) if out_dir is not None else None
    result = TrainResult(model)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(cfg.dumps())
        (out / "n_ids.txt").write_text(f"{n_ids}\n")
        result.checkpoints.append(save_checkpoint(model, out / "checkpoints" / "epoch_000"))

    def emit(row, seconds):
        result.rows.append(row)
        if out is not None:
            _write_log(out / "train_log.csv", result.rows)
            with open(out / "timing.csv", "a" if row["epoch"] else "w") as fh:
                if not row["epoch"]:
                    fh.write("epoch,seconds\n")
                fh.write(f"{int(row['epoch'])},{seconds:.3f}\n")
        if progress:
            progress(row)

    t0 = time.perf_counter()
    with no_grad():
        probe = [model.loss(b.rgb, b.ir, b.labels) for b in (sampler.sample(probe_rng) for _ in range(PROBE_BATCHES))]
    emit(
        {
            "epoch": 0,
            "l_id": float(np.mean([t.l_id.item() for t in probe])),
            "l_mecen": float(np.mean([t.l_center.item() for t in probe])),
            "l_total": float(np.mean([t.total.item() for t in probe])),
            "lr": 0.0,
            "intra_dist": intra_class_distance(model, ds),
        },
        time.perf_counter() - t0,
    )

    for epoch in range(tc.epochs):
        sums = np.zeros(3)
        lr = 0.0
        for b in range(steps):
            batch = sampler.sample(rng)
            opt.zero_grad()
            terms = model.loss(batch.rgb, batch.ir, batch.labels)
            total = terms.total.item()
            _check_finite(total, "loss", epoch + 1, b)
            backward(terms.total)
            try:
                lr = opt.step(epoch)
            except NonFiniteGradientError as exc:
                raise NumericalError(f"{exc} at epoch {epoch + 1}, batch {b}") from exc
            renormalize_centers(model.params["centers"])
            sums += (terms.l_id.item(), terms.l_center.item(), total)
        mean = sums / steps
        row = {
            "epoch": epoch + 1,
            "l_id": mean[0],
            "l_mecen": mean[1],
            "l_total": mean[2],
            "lr": lr,
            "intra_dist": intra_class_distance(model, ds),
        }
        if out is not None:
            result.checkpoints.append(save_checkpoint(model, out / "checkpoints" / f"epoch_{epoch + 1:03d}"))
        emit(row, time.perf_counter() - t0)
        log.info(
            "epoch %d  l_id %.4f  l_mecen %.4f  l_total %.4f  lr %g  intra %.4f",
            epoch + 1, mean[0], mean[1], mean[2], lr, row["intra_dist"],
        )
    result.seconds = time.perf_counter() - t0
    return result


def read_log(path) -> List[Dict[str, float]]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
