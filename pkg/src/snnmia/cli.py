"""Command-line entry point: ``snnmia run|sweep|report``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .experiment import StageError, run_all, sweep, write_reports

log = logging.getLogger("snnmia")


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.out is not None:
        cfg = cfg.replace(output_dir=str(args.out))
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    for res in run_all(cfg, workers=args.workers):
        for name, rep in res.reports["attacks"].items():
            print(f"T={res.T} {name:14s} auc={rep['auc']:.4f} "
                  f"tpr@0.1%={rep['tpr_at_0.1%_fpr']:.4f} tpr@1%={rep['tpr_at_1%_fpr']:.4f}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    for row in sweep(cfg, args.axis, workers=args.workers):
        print(f"{row['axis_value']:>8s} {row['attack']:14s} auc={row['auc']:.4f}")
    return 0


def cmd_report(args) -> int:
    scores = Path(args.scores)
    out = Path(args.out) if args.out is not None else scores.parent
    out.mkdir(parents=True, exist_ok=True)
    report = write_reports(scores, out)
    for name, rep in report["attacks"].items():
        print(f"{name:14s} auc={rep['auc']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snnmia", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                       help="parallel training processes (default: CPU count)")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default=None, help="override the output directory")

    p = sub.add_parser("run", help="plan, train, attack and report")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="repeat the run along one axis")
    common(p)
    p.add_argument("--axis", choices=("latency", "dropout"), required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="recompute metrics from a scores.csv")
    p.add_argument("scores", help="path to scores.csv")
    p.add_argument("--out", default=None, help="output directory (default: next to scores)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"error [report]: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
