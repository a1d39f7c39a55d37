"""Variant sweeps over one axis at a time, each trained and scored on identical data."""
from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from . import config as config_mod
from .config import RunConfig
from .data import Dataset
from .evaluation import evaluate_model
from .metrics import DEFAULT_KS, EvalMode
from .train import resolve_dataset, train

log = logging.getLogger(__name__)

AXES = ("scales", "attention", "loss", "margin", "lambda")
ABLATE_COLUMNS = ("axis", "variant", "r1", "r5", "r10", "r20", "mAP", "intra_dist", "final_l_total")

Variant = Tuple[str, Dict[str, object]]


def variants(axis: str) -> List[Variant]:
    """(label, config overrides) for every row of the given axis."""
    if axis == "scales":
        rows = [("normal {1}", (1,)), ("normal {3}", (3,)), ("normal {6}", (6,)),
                ("hierarchical {1,3}", (3, 1)), ("hierarchical {3,6}", (6, 3)), ("hierarchical {1,3,6}", (6, 3, 1))]
        return [(label, {"mspac.scales": s}) for label, s in rows]
    if axis == "attention":
        return [
            ("w/o CH", {"mspac.channel": False}),
            ("w/o SP", {"mspac.spatial": False}),
            ("w/o MP", {"mspac.channel_pool": "avg"}),
            ("w/o AP", {"mspac.channel_pool": "max"}),
            ("combined", {}),
        ]
    if axis == "loss":
        return [
            ("baseline", {"loss.lambda": 0.0}),
            ("+center", {"loss.form": "linear", "loss.margin": 0.0}),
            ("+margin", {"loss.form": "linear", "loss.margin": 1.0}),
            ("+exp", {"loss.form": "exp", "loss.margin": 1.0}),
        ]
    if axis == "margin":
        return [(f"m={m}", {"loss.margin": float(m)}) for m in range(6)]
    if axis == "lambda":
        return [(f"lambda={lam:g}", {"loss.lambda": lam}) for lam in (0.0, 0.5, 1.0, 1.5, 2.0, 3.0)]
    raise ValueError(f"unknown ablation axis {axis!r}; choose from {', '.join(AXES)}")


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def run_axis(
    cfg: RunConfig,
    axis: str,
    out_dir,
    ds: Optional[Dataset] = None,
    progress: Optional[Callable[[str], None]] = None,
) -> Path:
    """Train and evaluate each variant of ``axis``; write ``ablate_<axis>.csv`` under ``out_dir``."""
    rows = variants(axis)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = ds if ds is not None else resolve_dataset(cfg)
    mode = EvalMode("all", "multi", cfg.eval.trials, cfg.eval.seed)
    base = cfg.to_flat()
    path = out / f"ablate_{axis}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ABLATE_COLUMNS)
        for i, (label, overrides) in enumerate(rows):
            vcfg = config_mod.build({**base, **overrides})
            if progress:
                progress(f"[{axis} {i + 1}/{len(rows)}] {label}")
            res = train(vcfg, ds, out / axis / f"variant_{i}")
            (report,) = evaluate_model(res.model, ds, [mode])
            last = res.rows[-1]
            w.writerow(
                [axis, label]
                + [_fmt(report.cmc[k]) for k in DEFAULT_KS]
                + [_fmt(report.mAP), _fmt(last["intra_dist"]), _fmt(last["l_total"])]
            )
            fh.flush()
    return path
