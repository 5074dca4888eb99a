"""End-to-end audit pipeline: plan, train, confidences, attacks, reports.

Every output file starts with a ``# config_hash=... master_seed=...`` line
(``report.json`` carries the same two values as keys instead).
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attacks import ATTACKS, DropoutSpec, grid_search_dropout, score_all
from .config import ExperimentConfig
from .dataset import Dataset, DatasetError, load_csv, load_idx, make_blobs, plan_splits
from .game import (GameResult, ModelSpec, build_confidence_table, derive_seed, run_game,
                   write_confidence_csv, write_labels_csv)
from .metrics import attack_report
from .trainer import TrainConfig, overfit_regime

log = logging.getLogger(__name__)

SCORE_COLUMNS = ("sample_id", "member", "attack_p", "attack_p_orig", "attack_r", "rmia",
                 "dropout_p", "dropout_N", "pool_kind", "T")
SWEEP_COLUMNS = ("axis_value", "attack", "auc", "tpr_0.1", "tpr_1")


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(message)


def header_line(config_hash: str, master_seed: int) -> str:
    return f"# config_hash={config_hash} master_seed={master_seed}"


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    spec = cfg.dataset
    if spec.kind == "blobs":
        ds = make_blobs(spec.n_per_class, spec.classes, spec.dim, spec.separation,
                        derive_seed(cfg.seed, "dataset"))
    elif spec.kind == "idx":
        ds = load_idx(spec.images, spec.labels)
    else:
        ds = load_csv(spec.path)
    if spec.limit is not None and spec.kind != "blobs":
        ds = ds.subset(np.arange(min(spec.limit, len(ds))))
    if len(ds) % 2:
        ds = ds.subset(np.arange(len(ds) - 1))
    return ds


def train_config(cfg: ExperimentConfig) -> TrainConfig:
    t = cfg.train
    tc = TrainConfig(epochs=t.epochs, batch_size=t.batch_size, lr=t.lr, momentum=t.momentum,
                     weight_decay=t.weight_decay, seed=cfg.seed, optimizer=t.optimizer,
                     surrogate_width=t.surrogate_width)
    return overfit_regime(tc) if t.overfit else tc


def model_spec(cfg: ExperimentConfig, kind: str, T: int) -> ModelSpec:
    m = cfg.model
    return ModelSpec(kind=kind, hidden=m.hidden, T=T, decay=m.decay, threshold=m.threshold,
                     u_reset=m.u_reset, init_gain=m.init_gain)


@dataclass
class RunOutcome:
    T: int | None
    out_dir: Path
    reports: dict
    scores: dict[str, np.ndarray]
    members: np.ndarray
    game: GameResult
    dropout: DropoutSpec | None = None
    grid: dict = field(default_factory=dict)


def _model_tag(cfg: ExperimentConfig, kind: str, T: int | None, sequential_from=None) -> str:
    """Checkpoint identity: everything that changes the trained weights."""
    d = cfg.to_dict()
    key = {"dataset": d["dataset"], "train": d["train"], "n_pairs": cfg.n_pairs, "seed": cfg.seed,
           "model": {k: v for k, v in d["model"].items() if k not in ("latencies", "reference_kind")},
           "kind": kind, "T": T if kind == "snn" else None, "from": sequential_from}
    return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:16]


class Experiment:
    """One configured audit; models are cached on disk under the output directory."""

    def __init__(self, cfg: ExperimentConfig, out_dir=None, workers: int = 1):
        self.cfg = cfg
        self.out = Path(out_dir if out_dir is not None else cfg.output_dir)
        self.workers = workers
        self.header = header_line(cfg.config_hash, cfg.seed)
        self._dataset = None
        self._plan = None
        self._games: dict = {}

    @property
    def dataset(self) -> Dataset:
        if self._dataset is None:
            try:
                self._dataset = load_dataset(self.cfg)
            except (DatasetError, OSError, ValueError) as exc:
                raise StageError("dataset", str(exc)) from exc
        return self._dataset

    @property
    def plan(self):
        if self._plan is None:
            try:
                self._plan = plan_splits(self.dataset, self.cfg.n_pairs, derive_seed(self.cfg.seed, "plan"))
            except ValueError as exc:
                raise StageError("plan", str(exc)) from exc
        return self._plan

    def game(self, T: int) -> GameResult:
        """Target of the configured kind at latency ``T`` plus its reference pool."""
        if T in self._games:
            return self._games[T]
        cfg = self.cfg
        pool_kind = cfg.model.reference_kind or cfg.model.kind
        tcfg = train_config(cfg)
        init_from, prev_T = None, None
        if cfg.train.sequential and cfg.model.kind == "snn":
            earlier = sorted(t for t in cfg.model.latencies if t < T)
            if earlier:
                prev_T = earlier[-1]
                init_from = self.game(prev_T)
        target_spec = model_spec(cfg, cfg.model.kind, T)
        pool_spec = model_spec(cfg, pool_kind, T)
        ckpt_dir = self.out / "models" / (f"{cfg.model.kind}_T{T}" if cfg.model.kind == "snn" else "ann")
        D, plan = self.dataset, self.plan  # load outside the train stage so errors name their own stage

        def tag(i, spec):
            return _model_tag(cfg, spec.kind, spec.T, prev_T)

        try:
            if pool_kind == cfg.model.kind:
                game = run_game(D, plan, target_spec, tcfg, seed=cfg.seed,
                                workers=self.workers, ckpt_dir=ckpt_dir, tag=tag, init_from=init_from)
            else:
                # the foreign-kind pool lives in its own directory so it is shared across latencies
                own = run_game(D, plan, target_spec, tcfg, seed=cfg.seed,
                               workers=self.workers, ckpt_dir=ckpt_dir, tag=tag, init_from=init_from)
                pool_dir = self.out / "models" / (f"{pool_kind}_T{T}" if pool_kind == "snn" else "ann")
                other = run_game(D, plan, pool_spec, tcfg, seed=cfg.seed,
                                 workers=self.workers, ckpt_dir=pool_dir, tag=tag)
                game = GameResult(own.target, other.pool, own.labels, own.plan,
                                  own.checkpoints + other.checkpoints)
        except (ValueError, RuntimeError) as exc:
            raise StageError("train", str(exc)) from exc
        self._games[T] = game
        return game

    def run(self, T: int, dropout: bool | None = None, out_dir=None) -> RunOutcome:
        cfg = self.cfg
        use_dropout = cfg.dropout.enabled if dropout is None else dropout
        out = Path(out_dir) if out_dir is not None else self.out / f"T{T}"
        out.mkdir(parents=True, exist_ok=True)
        game = self.game(T)
        D = self.dataset
        models = [game.target] + game.pool.models
        spec, grid = None, {}
        try:
            if use_dropout:
                dseed = derive_seed(cfg.seed, "dropout", T)
                res = grid_search_dropout(game.pool.networks, D.flat(), D.y, D.ids,
                                          game.pool.membership, cfg.dropout.attack,
                                          cfg.dropout.p_grid, cfg.dropout.n_grid, dseed)
                spec = res.spec
                grid = {"surrogate_model": res.surrogate_model, "attackers": res.attackers,
                        "baseline_auc": res.baseline_auc, "p": spec.p, "N": spec.n_passes,
                        "seed": spec.seed,
                        "cells": [{"p": p, "N": n, "auc": a} for (p, n), a in sorted(res.cells.items())]}
            table = build_confidence_table(models, D, spec)
        except ValueError as exc:
            raise StageError("confidences", str(exc)) from exc
        try:
            scores = score_all(table.target, table.references, game.pool.membership, cfg.attacks)
        except ValueError as exc:
            raise StageError("attacks", str(exc)) from exc

        write_confidence_csv(table, out / "confidence.csv", self.header)
        write_labels_csv(D.ids, game.labels, out / "labels.csv", self.header)
        target_T = T if cfg.model.kind == "snn" else None
        write_scores_csv(out / "scores.csv", self.header, D.ids, game.labels.bits, scores,
                         spec, game.pool.kind, target_T)
        reports = write_reports(out / "scores.csv", out)
        meta = {"config_hash": cfg.config_hash, "master_seed": cfg.seed, "T": target_T,
                "target_train_acc": game.target.train_acc, "target_test_acc": game.target.test_acc,
                "pool_kind": game.pool.kind,
                "pool_train_acc": [m.train_acc for m in game.pool.models],
                "pool_test_acc": [m.test_acc for m in game.pool.models],
                "dropout": grid or None}
        (out / "run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return RunOutcome(target_T, out, reports, scores, game.labels.bits, game, spec, grid)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_scores_csv(path, header, ids, members, scores, spec, pool_kind, T) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for i, sid in enumerate(ids):
            row = [int(sid), int(members[i])]
            row += [_fmt(scores[a][i]) if a in scores else "" for a in ATTACKS]
            row += [_fmt(spec.p) if spec else "", _fmt(spec.n_passes) if spec else "",
                    pool_kind, _fmt(T)]
            w.writerow(row)


def read_scores_csv(path):
    """Returns ``(header_line, members, {attack: scores})`` for enabled attacks."""
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing header comment line")
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SCORE_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        rows = list(reader)
    members = np.array([int(r["member"]) for r in rows], dtype=bool)
    scores = {}
    for a in ATTACKS:
        vals = [r[a] for r in rows]
        if all(v != "" for v in vals):
            scores[a] = np.array([float(v) for v in vals])
    extra = rows[0] if rows else {}
    return first, members, scores, extra


def parse_header(line: str) -> dict:
    out = {}
    for tok in line.lstrip("#").split():
        k, _, v = tok.partition("=")
        out[k] = v
    return out


def write_reports(scores_path, out_dir) -> dict:
    """Compute metrics from a scores file and write report.json, roc.csv and hist.csv.

    Depends only on the scores file, so rerunning it on the same file gives
    byte-identical outputs.
    """
    out_dir = Path(out_dir)
    header, members, scores, extra = read_scores_csv(scores_path)
    head = parse_header(header)
    report = {"config_hash": head.get("config_hash"), "master_seed": int(head.get("master_seed", 0)),
              "pool_kind": extra.get("pool_kind"), "T": int(extra["T"]) if extra.get("T") else None,
              "dropout_p": float(extra["dropout_p"]) if extra.get("dropout_p") else None,
              "dropout_N": int(extra["dropout_N"]) if extra.get("dropout_N") else None,
              "attacks": {}}
    for name, s in scores.items():
        rep = attack_report(s, members)
        report["attacks"][name] = rep.as_dict()
        adir = out_dir / "attacks" / name
        adir.mkdir(parents=True, exist_ok=True)
        with open(adir / "roc.csv", "w") as fh:
            fh.write(header + "\n")
            fh.write("beta,fpr,tpr\n")
            for b, f, t in zip(rep.curve.thresholds, rep.curve.fpr, rep.curve.tpr):
                fh.write(f"{'inf' if math.isinf(b) else repr(float(b))},{float(f)!r},{float(t)!r}\n")
        with open(adir / "hist.csv", "w") as fh:
            fh.write(header + "\n")
            fh.write("bin_lo,bin_hi,member_count,nonmember_count\n")
            e = rep.hist.edges
            for i in range(len(e) - 1):
                fh.write(f"{float(e[i])!r},{float(e[i + 1])!r},"
                         f"{int(rep.hist.member_counts[i])},{int(rep.hist.nonmember_counts[i])}\n")
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def run_all(cfg: ExperimentConfig, out_dir=None, workers: int = 1) -> list[RunOutcome]:
    exp = Experiment(cfg, out_dir, workers)
    return [exp.run(T) for T in sorted(cfg.model.latencies)]


def sweep(cfg: ExperimentConfig, axis: str, out_dir=None, workers: int = 1) -> list[dict]:
    """Latency sweep (one run per latency) or dropout sweep (off/on per latency)."""
    exp = Experiment(cfg, out_dir, workers)
    rows = []
    latencies = sorted(cfg.model.latencies)
    if axis == "latency":
        for T in latencies:
            res = exp.run(T)
            rows += _sweep_rows(str(T), res)
    elif axis == "dropout":
        for T in latencies:
            for on in (False, True):
                label = "on" if on else "off"
                value = label if len(latencies) == 1 else f"T{T}:{label}"
                res = exp.run(T, dropout=on, out_dir=exp.out / f"T{T}" / f"dropout_{label}")
                rows += _sweep_rows(value, res)
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")
    with open(exp.out / "sweep.csv", "w", newline="") as fh:
        fh.write(exp.header + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([r[c] if not isinstance(r[c], float) else repr(r[c]) for c in SWEEP_COLUMNS])
    return rows


def _sweep_rows(value: str, res: RunOutcome) -> list[dict]:
    return [{"axis_value": value, "attack": name, "auc": rep["auc"],
             "tpr_0.1": rep["tpr_at_0.1%_fpr"], "tpr_1": rep["tpr_at_1%_fpr"]}
            for name, rep in res.reports["attacks"].items()]
