"""Command-line entry point: gen-data, train, eval, gradcheck, ablate.

Every config key doubles as a flag (``--loss.lambda 0.5``); flags override
values from ``--config FILE``.  Default output locations live under the
directory named by ``MSPAC_OUT`` (``./runs`` when unset).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from threadpoolctl import threadpool_limits

from . import config as config_mod
from .autodiff import GradCheckError
from .autodiff.mspd import MSPDError
from .checks import parameter_group, run_gradcheck
from .config import ConfigError
from .data import DatasetIOError, SamplingError, generate_dataset, load_dataset, write_dataset
from .metrics import ProtocolError, write_report
from .train import CheckpointError, NumericalError, latest_checkpoint, load_run, train

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
OUT_ENV = "MSPAC_OUT"

log = logging.getLogger("mspac")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def output_root() -> Path:
    return Path(os.environ.get(OUT_ENV) or "runs")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    g = p.add_argument_group("config keys (override the config file)")
    for key in config_mod.known_keys():
        g.add_argument(f"--{key}", dest=f"cfg:{key}", metavar="V", default=None)


def _config_from_args(args) -> config_mod.RunConfig:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg:") and v is not None}
    return config_mod.load(args.config, overrides)


def _print_reports(reports) -> None:
    for r in reports:
        print(r.text())


# ------------------------------------------------------------------ commands

def cmd_gen_data(args) -> int:
    overrides = {}
    if args.ids is not None:
        overrides["data.n_ids"] = args.ids
    if args.per_id is not None:
        overrides["data.per_id"] = args.per_id
    if args.seed is not None:
        overrides["data.seed"] = args.seed
    cfg = _config_from_args(args)
    cfg = config_mod.build({**cfg.to_flat(), **overrides})
    out = Path(args.out) if args.out else output_root() / "data"
    manifest = write_dataset(generate_dataset(cfg.data), out)
    print(f"wrote {manifest}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    if args.data:
        cfg.data_dir = args.data
    out = Path(args.out) if args.out else Path(cfg.out_dir or output_root() / "train")

    def progress(row):
        print(
            f"epoch {int(row['epoch']):3d}  l_id {row['l_id']:.4f}  l_mecen {row['l_mecen']:.4f}  "
            f"l_total {row['l_total']:.4f}  intra {row['intra_dist']:.4f}",
            flush=True,
        )

    res = train(cfg, out_dir=out, progress=progress)
    print(f"trained {cfg.train.epochs} epochs in {res.seconds:.1f}s; checkpoint {res.final_checkpoint}")
    return EXIT_OK


def cmd_eval(args) -> int:
    run_dir = Path(args.run)
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg:") and v is not None}
    checkpoint = Path(args.checkpoint) if args.checkpoint else latest_checkpoint(run_dir)
    cfg, model = load_run(run_dir, checkpoint, overrides)
    from .evaluation import all_modes, evaluate_model  # local: keeps `--help` fast

    ds = load_dataset(args.data) if args.data else (load_dataset(cfg.data_dir) if cfg.data_dir else generate_dataset(cfg.data))
    modes = all_modes(cfg.eval) if args.all_modes else [cfg.eval]
    reports = evaluate_model(model, ds, modes)
    out = Path(args.out) if args.out else run_dir / "metrics.csv"
    write_report(out, reports)
    _print_reports(reports)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    modes = ["global", "part"] if args.id_mode == "both" else [args.id_mode]
    ok = True
    for mode in modes:
        reports = run_gradcheck(mode, lam=args.lam, eps=args.eps, tol_rel=args.tol_rel, samples_per_param=args.samples)
        print(f"# id_mode={mode} lambda={args.lam:g}")
        for r in reports:
            print(f"{r.line()}  [{parameter_group(r.param_name)}]")
        ok &= all(r.passed for r in reports)
    print("gradcheck passed" if ok else "gradcheck FAILED")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_ablate(args) -> int:
    from .ablate import AXES, run_axis

    cfg = _config_from_args(args)
    if args.data:
        cfg.data_dir = args.data
    axes = list(AXES) if args.axis == "all" else [args.axis]
    out = Path(args.out) if args.out else output_root() / "ablate"
    for axis in axes:
        path = run_axis(cfg, axis, out, progress=lambda msg: print(msg, flush=True))
        print(f"wrote {path}")
    return EXIT_OK


# ------------------------------------------------------------------ wiring

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mspac", description="Multi-scale part-aware attention + exponential center loss for RGB-IR re-id.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen-data", help="write a synthetic two-modality dataset")
    g.add_argument("--ids", type=int)
    g.add_argument("--per-id", type=int, help="images per identity per modality")
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    _add_config_flags(g)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model, writing log and checkpoints")
    t.add_argument("--data", help="dataset directory from gen-data (generated in memory when omitted)")
    t.add_argument("--out", help="run directory")
    _add_config_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a trained run on the query/gallery split")
    e.add_argument("--run", required=True, help="run directory written by train")
    e.add_argument("--checkpoint", help="checkpoint directory (default: latest)")
    e.add_argument("--data", help="dataset directory (default: the run's own data settings)")
    e.add_argument("--all-modes", action="store_true", help="report all/indoor x multi/single")
    e.add_argument("--out", help="metrics CSV path (default: RUN/metrics.csv)")
    for key in ("eval.search", "eval.shot", "eval.trials", "eval.seed"):
        e.add_argument(f"--{key}", dest=f"cfg:{key}", metavar="V", default=None)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("gradcheck", help="finite-difference check of every parameter group")
    c.add_argument("--id-mode", choices=("global", "part", "both"), default="both")
    c.add_argument("--lam", type=float, default=1.0)
    c.add_argument("--eps", type=float, default=1e-4)
    c.add_argument("--tol-rel", type=float, default=1e-4)
    c.add_argument("--samples", type=int, default=8, help="probes per parameter tensor")
    c.set_defaults(func=cmd_gradcheck)

    a = sub.add_parser("ablate", help="train and score the variants of one axis")
    a.add_argument("--axis", required=True, choices=("scales", "attention", "loss", "margin", "lambda", "all"))
    a.add_argument("--data")
    a.add_argument("--out")
    _add_config_flags(a)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        # one BLAS thread keeps matmul reductions in a fixed order
        with threadpool_limits(limits=1):
            return args.func(args)
    except (ConfigError, UsageError, ProtocolError, SamplingError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, GradCheckError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetIOError, CheckpointError, MSPDError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
