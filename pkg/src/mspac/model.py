"""Full network: encoder, MSPAC, embedding, identity heads and centers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from . import encoder as enc
from . import mspac
from .autodiff import Tensor, no_grad, ops, parameter
from .encoder import EncoderConfig, Params
from .losses import LossConfig, LossTerms, init_centers, joint_loss
from .mspac import MspacConfig


@dataclass
class ForwardOutput:
    embeddings: Tensor
    logits: object  # Tensor in global mode, list of Tensor in part mode
    global_map: Tensor
    unified: Tensor


class Model:
    def __init__(
        self,
        enc_cfg: EncoderConfig,
        mspac_cfg: MspacConfig,
        loss_cfg: LossConfig,
        n_ids: int,
        seed: int = 0,
    ):
        self.enc_cfg, self.mspac_cfg, self.loss_cfg = enc_cfg, mspac_cfg, loss_cfg
        self.n_ids = n_ids
        mspac_cfg.check_map(enc_cfg.out_h)
        rng = np.random.default_rng(seed)
        d_map, d = enc_cfg.out_d, enc_cfg.embed_dim
        params: Params = {}
        params.update(enc.init_encoder(enc_cfg, rng))
        if mspac_cfg.enabled:
            params.update(mspac.init_mspac(mspac_cfg, d_map, rng, enc_cfg.conv_gain))
        if loss_cfg.id_mode == "global":
            params.update(enc.dense_params(rng, "classifier", d, n_ids))
        else:
            for m, p in enumerate(mspac_cfg.scales):
                for j in range(p):
                    params.update(enc.dense_params(rng, f"head.s{m}.p{j}", d_map, n_ids))
        params["centers"] = parameter(init_centers(n_ids, d, rng), "centers")
        self.params: Params = params

    @property
    def trainable(self) -> Dict[str, Tensor]:
        return {k: p for k, p in self.params.items() if p.requires_grad}

    def features(self, global_map: Tensor):
        """Unified map plus the part features feeding the per-part heads."""
        if self.mspac_cfg.enabled:
            unified, pyr = mspac.cascade(global_map, self.params, self.mspac_cfg)
            return unified, [t for stage in pyr.enhanced for t in stage]
        pyr = mspac.partition(global_map, self.mspac_cfg.scales)
        return global_map, [t for stage in pyr.parts for t in stage]

    def forward(self, rgb, ir) -> ForwardOutput:
        """Batch order in every output is all rgb images, then all ir images."""
        gmap = enc.encode_pair(_as_input(rgb), _as_input(ir), self.params, self.enc_cfg)
        unified, part_feats = self.features(gmap)
        emb = enc.embed(unified, self.params)
        if self.loss_cfg.id_mode == "global":
            logits = ops.dense(emb, self.params["classifier.w"], self.params["classifier.b"])
        else:
            logits = []
            names = [f"head.s{m}.p{j}" for m, p in enumerate(self.mspac_cfg.scales) for j in range(p)]
            for name, feat in zip(names, part_feats):
                n, _, _, d = feat.shape
                pooled = ops.reshape(ops.pool_spatial(feat, "avg"), (n, d))
                logits.append(ops.dense(pooled, self.params[f"{name}.w"], self.params[f"{name}.b"]))
        return ForwardOutput(emb, logits, gmap, unified)

    def loss(self, rgb, ir, labels, cfg: Optional[LossConfig] = None) -> LossTerms:
        """Joint loss for 1-based ``labels`` (rgb block then ir block)."""
        out = self.forward(rgb, ir)
        idx = np.asarray(labels, dtype=np.int64) - 1
        return joint_loss(out.embeddings, out.logits, idx, self.params["centers"], cfg or self.loss_cfg)

    def embed_images(self, images: np.ndarray, modality: str, batch_size: int = 64) -> np.ndarray:
        """Inference-only embeddings for one modality, computed in fixed chunks."""
        chunks: List[np.ndarray] = []
        with no_grad():
            for lo in range(0, len(images), batch_size):
                x = _as_input(images[lo : lo + batch_size])
                gmap = enc.encode(x, modality, self.params, self.enc_cfg)
                unified, _ = self.features(gmap)
                chunks.append(enc.embed(unified, self.params).data.copy())
        if not chunks:
            return np.zeros((0, self.enc_cfg.embed_dim), dtype=np.float32)
        return np.concatenate(chunks)


def _as_input(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x))
