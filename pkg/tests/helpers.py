"""Small run configurations shared by the training, CLI and acceptance tests."""
from mspac import config as cm

# 6 ids of 12x4 images; the 6x2 map still carries the full (6, 3, 1) cascade
TINY = {
    "data.n_ids": 6,
    "data.per_id": 6,
    "data.query_per_id": 2,
    "data.img_h": 12,
    "data.img_w": 4,
    "encoder.img_h": 12,
    "encoder.img_w": 4,
    "encoder.stem_channels": 4,
    "encoder.trunk_channels": 6,
    "encoder.out_d": 8,
    "encoder.embed_dim": 8,
    "train.P": 3,
    "train.M": 2,
    "train.epochs": 2,
    "train.iters_per_epoch": 3,
    "eval.trials": 2,
}


def tiny_config(**extra):
    return cm.build({**TINY, **{k.replace("__", "."): v for k, v in extra.items()}})


def tiny_flags(drop=(), **extra):
    flags = []
    for k, v in {**TINY, **extra}.items():
        if k in drop:
            continue
        flags += [f"--{k}", str(v)]
    return flags
