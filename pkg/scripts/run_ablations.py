"""Run ablation axes and collect their CSVs.

    python scripts/run_ablations.py [--axes scales,attention] [--out DIR] [key=value ...]

Each variant is a full training run, so the five axes at the default
settings take several hours on one core; pass e.g. ``train.epochs=10`` for
a quicker look.
"""
import argparse
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from mspac import config as cm
from mspac.ablate import AXES, run_axis
from mspac.data import generate_dataset


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--axes", default=",".join(AXES))
    ap.add_argument("--out", default="runs/ablate")
    ap.add_argument("overrides", nargs="*", help="config key=value pairs")
    args = ap.parse_args(argv)
    cfg = cm.build(cm.parse_assignments(args.overrides))
    ds = generate_dataset(cfg.data)
    for axis in args.axes.split(","):
        path = run_axis(cfg, axis.strip(), Path(args.out), ds, progress=lambda m: print(m, flush=True))
        print(path.read_text())
    return 0


if __name__ == "__main__":
    with threadpool_limits(limits=1):
        sys.exit(main())
