"""Marginal exponential center loss, identity loss and their joint objective."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .autodiff import Tensor, ops


class InvalidLabelError(IndexError):
    pass


class DegenerateCenterError(ValueError):
    pass


@dataclass
class LossConfig:
    margin: float = 1.0
    lam: float = 1.0
    clamp: float = 30.0
    id_mode: str = "global"  # global | part
    form: str = "exp"  # exp: MeCen; linear: hinge center loss without the exponential
    reduction: str = "mean"  # how the hinge terms enter the exponent: sum | mean over the batch

    def __post_init__(self):
        if self.margin < 0 or self.lam < 0:
            raise ValueError("loss.margin and loss.lambda must be nonnegative")
        if self.id_mode not in ("global", "part"):
            raise ValueError(f"loss.id_mode must be global|part, got {self.id_mode!r}")
        if self.form not in ("exp", "linear"):
            raise ValueError(f"loss.form must be exp|linear, got {self.form!r}")
        if self.reduction not in ("sum", "mean"):
            raise ValueError(f"loss.reduction must be sum|mean, got {self.reduction!r}")


def _check_labels(labels: np.ndarray, n_rows: int, n_classes: int) -> None:
    if labels.shape != (n_rows,):
        raise InvalidLabelError(f"{labels.shape[0]} labels for {n_rows} samples")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise InvalidLabelError(f"label outside [0, {n_classes}): {labels.min()}..{labels.max()}")


def center_hinge_sum(
    embeddings: Tensor, labels, centers: Tensor, margin: float, reduction: str = "sum"
) -> Tensor:
    """S = 1/2 sum_i max(||x_i - c_{y_i}||^2 - m, 0), or that divided by n for ``mean``."""
    labels = np.asarray(labels, dtype=np.int64)
    _check_labels(labels, embeddings.shape[0], centers.shape[0])
    diff = ops.sub(embeddings, ops.take_rows(centers, labels))
    sq = ops.sum(ops.mul(diff, diff), axis=1)
    hinge = ops.relu(ops.add_scalar(sq, -margin))
    n = embeddings.shape[0]
    factor = 0.5 if reduction == "sum" else 0.5 / max(n, 1)
    return ops.scale(ops.sum(hinge), factor)


def mecen_loss(
    embeddings: Tensor,
    labels,
    centers: Tensor,
    margin: float = 1.0,
    clamp: float = 30.0,
    reduction: str = "sum",
) -> Tensor:
    """exp(min(S, clamp)) - 1, with the whole batch inside one exponential.

    Labels are 0-based center rows.  Past the clamp the gradient is the one
    at the clamp point rather than zero.  ``reduction="mean"`` divides S by
    the batch size, which keeps the exponent O(1) at 64-sample batches.
    """
    s = center_hinge_sum(embeddings, labels, centers, margin, reduction)
    return ops.add_scalar(ops.exp(ops.clamp_max(s, clamp)), -1.0)


def center_loss(embeddings: Tensor, labels, centers: Tensor, margin: float = 0.0, reduction: str = "sum") -> Tensor:
    """Linear variant used by the loss ablation: S itself, optionally with a margin."""
    return center_hinge_sum(embeddings, labels, centers, margin, reduction)


def identity_loss(logits: Tensor, labels) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    _check_labels(labels, logits.shape[0], logits.shape[1])
    return ops.cross_entropy(logits, labels)


@dataclass
class LossTerms:
    total: Tensor
    l_id: Tensor
    l_center: Tensor


def joint_loss(
    embeddings: Tensor,
    logits: Union[Tensor, Sequence[Tensor]],
    labels,
    centers: Tensor,
    cfg: LossConfig,
) -> LossTerms:
    """L_ID + lambda * L_MeCen.

    ``logits`` is one (n, N_ids) tensor in global mode, or the list of
    per-part head outputs in part mode, whose cross-entropies are averaged.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if isinstance(logits, Tensor):
        heads = [logits]
    else:
        heads = list(logits)
    for h in heads:
        if h.shape[0] != embeddings.shape[0]:
            raise ValueError(f"batch mismatch: logits {h.shape} vs embeddings {embeddings.shape}")
    l_id = identity_loss(heads[0], labels)
    for h in heads[1:]:
        l_id = ops.add(l_id, identity_loss(h, labels))
    if len(heads) > 1:
        l_id = ops.scale(l_id, 1.0 / len(heads))
    if cfg.form == "exp":
        l_c = mecen_loss(embeddings, labels, centers, cfg.margin, cfg.clamp, cfg.reduction)
    else:
        l_c = center_loss(embeddings, labels, centers, cfg.margin, cfg.reduction)
    if cfg.lam == 0:
        return LossTerms(l_id, l_id, l_c)
    return LossTerms(ops.add(l_id, ops.scale(l_c, cfg.lam)), l_id, l_c)


def init_centers(n_ids: int, d: int, rng: np.random.Generator) -> np.ndarray:
    c = rng.standard_normal((n_ids, d))
    return (c / np.linalg.norm(c, axis=1, keepdims=True)).astype(np.float32)


def renormalize_centers(centers: Union[Tensor, np.ndarray]) -> None:
    """Project every center row back onto the unit sphere, in place."""
    arr = centers.data if isinstance(centers, Tensor) else centers
    norms = np.sqrt((arr.astype(np.float64) ** 2).sum(axis=1, keepdims=True))
    if np.any(norms == 0):
        raise DegenerateCenterError(f"zero-norm center rows: {np.flatnonzero(norms[:, 0] == 0).tolist()}")
    arr[...] = (arr / norms).astype(arr.dtype)
