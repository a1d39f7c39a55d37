"""Two-branch conv encoder: modality-specific stems feeding one shared trunk."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .autodiff import Tensor, ops, parameter

Params = Dict[str, Tensor]


class InvalidInputError(ValueError):
    pass


@dataclass
class EncoderConfig:
    img_h: int = 48
    img_w: int = 16
    rgb_channels: int = 3
    ir_channels: int = 1
    stem_channels: int = 16
    trunk_channels: int = 32
    trunk_strides: Tuple[int, ...] = (2, 1, 1)
    kernel: int = 3
    out_d: int = 64
    embed_dim: int = 128
    conv_gain: float = 4.0  # conv weights ~ U(-s, s), s = sqrt(conv_gain / fan_in)
    embed_scale: float = 0.1  # shrinks the initial embedding toward the unit-norm centers

    def __post_init__(self):
        self.trunk_strides = tuple(int(s) for s in self.trunk_strides)
        if not self.trunk_strides:
            raise ValueError("encoder.trunk_strides needs at least one block")
        for key in ("img_h", "img_w", "stem_channels", "trunk_channels", "out_d", "embed_dim", "kernel"):
            if getattr(self, key) <= 0:
                raise ValueError(f"encoder.{key} must be positive")
        if self.conv_gain <= 0 or self.embed_scale <= 0:
            raise ValueError("encoder.conv_gain and encoder.embed_scale must be positive")
        if self.kernel % 2 == 0:
            raise ValueError("encoder.kernel must be odd")

    @property
    def out_h(self) -> int:
        h = self.img_h
        for s in self.trunk_strides:
            h = -(-h // s)
        return h

    @property
    def out_w(self) -> int:
        w = self.img_w
        for s in self.trunk_strides:
            w = -(-w // s)
        return w

    def channels(self, modality: str) -> int:
        if modality == "rgb":
            return self.rgb_channels
        if modality == "ir":
            return self.ir_channels
        raise InvalidInputError(f"unknown modality {modality!r}")


def uniform_init(rng: np.random.Generator, shape, fan_in: int, gain: float = 1.0) -> np.ndarray:
    s = np.sqrt(gain / fan_in)
    return rng.uniform(-s, s, size=shape).astype(np.float32)


def conv_params(rng, name: str, k: int, cin: int, cout: int, gain: float = 1.0) -> Params:
    fan_in = k * k * cin
    return {
        f"{name}.w": parameter(uniform_init(rng, (k, k, cin, cout), fan_in, gain), f"{name}.w"),
        f"{name}.b": parameter(np.zeros(cout, dtype=np.float32), f"{name}.b"),
    }


def dense_params(rng, name: str, n_in: int, n_out: int, scale: float = 1.0) -> Params:
    w = uniform_init(rng, (n_in, n_out), n_in) * np.float32(scale)
    return {
        f"{name}.w": parameter(w, f"{name}.w"),
        f"{name}.b": parameter(np.zeros(n_out, dtype=np.float32), f"{name}.b"),
    }


def init_encoder(cfg: EncoderConfig, rng: np.random.Generator) -> Params:
    k = cfg.kernel
    params: Params = {}
    g = cfg.conv_gain
    params.update(conv_params(rng, "stem_rgb", k, cfg.rgb_channels, cfg.stem_channels, g))
    params.update(conv_params(rng, "stem_ir", k, cfg.ir_channels, cfg.stem_channels, g))
    cin = cfg.stem_channels
    n_blocks = len(cfg.trunk_strides)
    for i in range(n_blocks):
        cout = cfg.out_d if i == n_blocks - 1 else cfg.trunk_channels
        params.update(conv_params(rng, f"trunk.{i}", k, cin, cout, g))
        cin = cout
    params.update(dense_params(rng, "embed", cfg.out_d, cfg.embed_dim, cfg.embed_scale))
    return params


def stem(images: Tensor, modality: str, params: Params, cfg: EncoderConfig) -> Tensor:
    want = cfg.channels(modality)
    if images.ndim != 4 or images.shape[3] != want:
        raise InvalidInputError(f"{modality} stem expects (N,H,W,{want}) images, got {images.shape}")
    x = ops.conv2d(images, params[f"stem_{modality}.w"], params[f"stem_{modality}.b"], "same")
    return ops.relu(x)


def trunk(x: Tensor, params: Params, cfg: EncoderConfig) -> Tensor:
    for i, s in enumerate(cfg.trunk_strides):
        x = ops.relu(ops.conv2d(x, params[f"trunk.{i}.w"], params[f"trunk.{i}.b"], "same", stride=s))
    return x


def encode(images: Tensor, modality: str, params: Params, cfg: EncoderConfig) -> Tensor:
    """Images (N,H,W,C) -> feature maps (N, out_h, out_w, out_d)."""
    return trunk(stem(images, modality, params, cfg), params, cfg)


def encode_pair(rgb: Tensor, ir: Tensor, params: Params, cfg: EncoderConfig) -> Tensor:
    """Encode both modalities; the rgb maps come first along the batch axis."""
    x = ops.concat([stem(rgb, "rgb", params, cfg), stem(ir, "ir", params, cfg)], axis=0)
    return trunk(x, params, cfg)


def embed(global_feature: Tensor, params: Params) -> Tensor:
    """Spatial average pool, then a dense projection to the embedding space."""
    n, _, _, d = global_feature.shape
    pooled = ops.reshape(ops.pool_spatial(global_feature, "avg"), (n, d))
    return ops.dense(pooled, params["embed.w"], params["embed.b"])
