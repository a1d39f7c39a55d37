"""Repeat the default lambda=1 run over several seeds to gauge run-to-run spread.

    python scripts/sweep_seeds.py --seeds 0,1,2 [--out DIR] [key=value ...]

``train.seed`` and ``data.seed`` are set together, so every row uses fresh
data and a fresh initialisation.
"""
import argparse
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from mspac import config as cm
from mspac.data import generate_dataset
from mspac.evaluation import evaluate_model
from mspac.metrics import EvalMode
from mspac.train import train


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--out", default="runs/seeds")
    ap.add_argument("overrides", nargs="*")
    args = ap.parse_args(argv)
    base = cm.parse_assignments(args.overrides)
    r1s, maps = [], []
    for s in (int(x) for x in args.seeds.split(",")):
        cfg = cm.build({**base, "train.seed": s, "data.seed": s})
        ds = generate_dataset(cfg.data)
        res = train(cfg, ds, Path(args.out) / f"seed{s}")
        (rep,) = evaluate_model(res.model, ds, [EvalMode("all", "multi")])
        r1s.append(rep.cmc[1])
        maps.append(rep.mAP)
        print(f"seed {s}: r1 {rep.cmc[1]:.4f}  mAP {rep.mAP:.4f}", flush=True)
    print(f"r1 {np.mean(r1s):.4f} +- {np.std(r1s):.4f}   mAP {np.mean(maps):.4f} +- {np.std(maps):.4f}")
    return 0


if __name__ == "__main__":
    with threadpool_limits(limits=1):
        sys.exit(main())
