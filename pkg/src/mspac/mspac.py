"""Multi-scale part-aware cascading attention.

The global map is cut into horizontal stripes at several scales.  Stage 0
enhances each finest stripe with channel + spatial attention under a
residual connection to itself.  Every later stage height-concatenates
consecutive enhanced children, computes attention from that concatenation,
and adds it back onto the original stripe of the same scale.  When the last
scale is 1 the final stage unifies everything against the backbone map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .autodiff import Tensor, ops, parameter
from .encoder import Params, uniform_init


class InvalidConfigError(ValueError):
    pass


@dataclass
class MspacConfig:
    enabled: bool = True
    scales: Tuple[int, ...] = (6, 3, 1)
    reduction: int = 4
    spatial_kernel: int = 3
    channel: bool = True
    spatial: bool = True
    channel_pool: str = "both"  # both | avg | max

    def __post_init__(self):
        self.scales = tuple(int(p) for p in self.scales)
        if not self.scales:
            raise InvalidConfigError("mspac.scales must not be empty")
        if any(p <= 0 for p in self.scales):
            raise InvalidConfigError("mspac.scales must be positive part counts")
        if any(a <= b for a, b in zip(self.scales, self.scales[1:])):
            raise InvalidConfigError(f"mspac.scales must strictly decrease (fine to coarse), got {self.scales}")
        if self.channel_pool not in ("both", "avg", "max"):
            raise InvalidConfigError(f"mspac.channel_pool must be both|avg|max, got {self.channel_pool!r}")
        if self.spatial_kernel % 2 == 0 or self.spatial_kernel <= 0:
            raise InvalidConfigError("mspac.spatial_kernel must be a positive odd number")
        if self.reduction <= 0:
            raise InvalidConfigError("mspac.reduction must be positive")

    def check_map(self, h: int) -> None:
        if max(self.scales) > h:
            raise InvalidConfigError(f"scale {max(self.scales)} exceeds feature height {h}")
        for fine, coarse in zip(self.scales, self.scales[1:]):
            if fine % coarse:
                raise InvalidConfigError(f"scale {fine} is not a multiple of the next scale {coarse}")
        for p in self.scales:
            if h % p:
                raise InvalidConfigError(f"feature height {h} is not divisible by scale {p}")


@dataclass
class PartPyramid:
    scales: Tuple[int, ...]
    parts: List[List[Tensor]]
    enhanced: List[List[Tensor]]

    @property
    def n_parts(self) -> int:
        return sum(self.scales)


def stripe_bounds(h: int, p: int) -> List[Tuple[int, int]]:
    """Rows of each of ``p`` stripes of height ceil(h/p); the last takes the remainder."""
    if p > h:
        raise InvalidConfigError(f"cannot cut height {h} into {p} stripes")
    step = math.ceil(h / p)
    bounds = []
    for j in range(p):
        lo = j * step
        if lo >= h:
            raise InvalidConfigError(f"height {h} leaves stripe {j} of {p} empty")
        bounds.append((lo, min(lo + step, h)))
    return bounds


def partition(global_map: Tensor, scales: Sequence[int]) -> PartPyramid:
    h = global_map.shape[1]
    parts = [[ops.slice_axis(global_map, 1, lo, hi) for lo, hi in stripe_bounds(h, p)] for p in scales]
    return PartPyramid(tuple(scales), parts, [[] for _ in scales])


# ------------------------------------------------------------------ attention

def init_stage(rng: np.random.Generator, name: str, d: int, cfg: MspacConfig, conv_gain: float = 1.0) -> Params:
    hidden = max(1, d // cfg.reduction)
    k = cfg.spatial_kernel
    return {
        f"{name}.fc1.w": parameter(uniform_init(rng, (d, hidden), d), f"{name}.fc1.w"),
        f"{name}.fc1.b": parameter(np.zeros(hidden, dtype=np.float32), f"{name}.fc1.b"),
        f"{name}.fc2.w": parameter(uniform_init(rng, (hidden, d), hidden), f"{name}.fc2.w"),
        f"{name}.fc2.b": parameter(np.zeros(d, dtype=np.float32), f"{name}.fc2.b"),
        f"{name}.conv.w": parameter(uniform_init(rng, (k, k, 2, 1), 2 * k * k, conv_gain), f"{name}.conv.w"),
        f"{name}.conv.b": parameter(np.zeros(1, dtype=np.float32), f"{name}.conv.b"),
        # fixed at 1 (plain residual); not trained, but zeroing it disables the attention branch
        f"{name}.res_scale": Tensor(np.ones((1, 1, 1, 1), dtype=np.float32), name=f"{name}.res_scale"),
    }


def init_mspac(cfg: MspacConfig, d: int, rng: np.random.Generator, conv_gain: float = 1.0) -> Params:
    params: Params = {}
    for m in range(len(cfg.scales)):
        params.update(init_stage(rng, f"mspac.stage{m}", d, cfg, conv_gain))
    return params


class StageParams:
    """View of one stage's entries in a flat parameter dict."""

    def __init__(self, params: Params, name: str):
        self.params, self.name = params, name

    def __getitem__(self, key: str) -> Tensor:
        return self.params[f"{self.name}.{key}"]


def channel_gate(x_a: Tensor, stage: StageParams, pool: str = "both") -> Tensor:
    """sigmoid(W_F(avg + max) + b_F) over spatial pools: (N,h,W,D) -> (N,1,1,D)."""
    n, _, _, d = x_a.shape
    if pool == "both":
        pooled = ops.add(ops.pool_spatial(x_a, "avg"), ops.pool_spatial(x_a, "max"))
    else:
        pooled = ops.pool_spatial(x_a, pool)
    z = ops.reshape(pooled, (n, d))
    z = ops.relu(ops.dense(z, stage["fc1.w"], stage["fc1.b"]))
    z = ops.dense(z, stage["fc2.w"], stage["fc2.b"])
    return ops.reshape(ops.sigmoid(z), (n, 1, 1, d))


def spatial_gate(x: Tensor, stage: StageParams) -> Tensor:
    """sigmoid(conv([avg_c(x) || max_c(x)])): (N,h,W,D) -> (N,h,W,1)."""
    pooled = ops.concat([ops.pool_channel(x, "avg"), ops.pool_channel(x, "max")], axis=3)
    return ops.sigmoid(ops.conv2d(pooled, stage["conv.w"], stage["conv.b"], "same"))


def enhance(x_a: Tensor, x_o: Tensor, stage: StageParams, cfg: MspacConfig = None) -> Tensor:
    """x_o + x_o * x_a'' with x_a' = x_a * CH(x_a) and x_a'' = x_a' * SP(x_a')."""
    cfg = cfg or MspacConfig()
    if x_a.shape != x_o.shape:
        raise ops.ShapeError(f"enhance: attention input {x_a.shape} vs residual {x_o.shape}")
    x = x_a
    if cfg.channel:
        x = ops.mul(x, channel_gate(x, stage, cfg.channel_pool))
    if cfg.spatial:
        x = ops.mul(x, spatial_gate(x, stage))
    x = ops.mul(x, stage["res_scale"])
    return ops.add(x_o, ops.mul(x_o, x))


def cascade(global_map: Tensor, params: Params, cfg: MspacConfig) -> Tuple[Tensor, PartPyramid]:
    """Fine-to-coarse aggregation; returns the unified map and the pyramid.

    With a final scale of 1 the last stage enhances the concatenation of all
    previous outputs against ``global_map``.  Without it (a single-scale or
    no-unification variant) the output is the height-concatenation of the
    last stage's enhanced parts.
    """
    cfg.check_map(global_map.shape[1])
    pyr = partition(global_map, cfg.scales)
    for m, p in enumerate(cfg.scales):
        stage = StageParams(params, f"mspac.stage{m}")
        originals = pyr.parts[m]
        if m == 0:
            inputs = originals
        else:
            prev = pyr.enhanced[m - 1]
            group = len(prev) // p
            inputs = [ops.concat(prev[j * group : (j + 1) * group], axis=1) for j in range(p)]
        for x_a, x_o in zip(inputs, originals):
            if x_a.shape != x_o.shape:
                raise AssertionError(f"stage {m}: children {x_a.shape} do not tile original part {x_o.shape}")
            pyr.enhanced[m].append(enhance(x_a, x_o, stage, cfg))
    last = pyr.enhanced[-1]
    out = last[0] if len(last) == 1 else ops.concat(last, axis=1)
    return out, pyr
