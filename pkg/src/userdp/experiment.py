"""Desk-scale utility sweeps over a grid of user counts and items per user.

Seeding: the cell at position ``i`` of the sorted ``(n, m)`` grid runs with
``cell_seed = SeedSequence(master_seed, spawn_key=(i,)).generate_state(1)[0]``,
and trial ``t`` of that cell draws everything from
``numpy.random.default_rng([cell_seed, t])``. The ``seed`` column of the CSV is the
cell seed, so :func:`run_cell` with it reproduces the row on its own.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import jsonschema
import numpy as np

from .core import Dataset, FiniteDistribution, tv_distance
from .learners import (
    ProbabilisticRepresentation,
    agnostic_pac_learn,
    baseline_discard,
    build_grid_cover,
    hypothesis_error,
    hypothesis_select,
    learn_discrete,
    pac_learn,
    threshold_concepts,
)

TASKS = ("learn-discrete", "learn-discrete-discard", "hypothesis-select", "pac-learn", "agnostic-pac-learn")

CSV_COLUMNS = ("task", "n", "m", "epsilon", "alpha", "trials", "success_rate", "median_error", "seed")

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["task", "n", "m", "alpha", "epsilon", "trials", "seed"],
    "properties": {
        "task": {"enum": list(TASKS)},
        "n": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "m": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "c_tau": {"type": "number", "exclusiveMinimum": 0},
        "k": {"type": "integer", "minimum": 2},
        "source": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 2},
        "candidates": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number", "minimum": 0}},
            "minItems": 2,
        },
        "num_candidates": {"type": "integer", "minimum": 2},
        "num_points": {"type": "integer", "minimum": 1},
        "target_threshold": {"type": "integer", "minimum": 0},
        "label_noise": {"type": "number", "minimum": 0, "maximum": 0.5},
    },
    "additionalProperties": False,
}


def validate_config(config: dict) -> dict:
    """Validate against :data:`CONFIG_SCHEMA` and fill defaults."""
    jsonschema.validate(config, CONFIG_SCHEMA)
    cfg = dict(config)
    cfg.setdefault("c_tau", 1.0)
    if cfg["task"].startswith("learn-discrete"):
        k = cfg.setdefault("k", len(cfg["source"]) if "source" in cfg else 3)
        cfg.setdefault("source", [1.0 / k] * k)
        if len(cfg["source"]) != k:
            raise ValueError("source must have k entries")
    elif cfg["task"] == "hypothesis-select":
        cfg.setdefault("k", len(cfg["source"]) if "source" in cfg else 3)
        cfg.setdefault("num_candidates", 20)
    else:
        cfg.setdefault("num_points", 16)
        cfg.setdefault("target_threshold", cfg["num_points"] // 2)
        cfg.setdefault("label_noise", 0.0)
    if "source" in cfg:
        FiniteDistribution(cfg["source"])
    return cfg


def cell_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence(master_seed, spawn_key=(index,)).generate_state(1)[0])


def planted_candidates(source: FiniteDistribution, alpha: float, count: int, rng) -> list[FiniteDistribution]:
    """One candidate within TV ``0.1 alpha`` of ``source`` (at index 0) plus ``count - 1`` random ones."""
    k = len(source)
    mix = 0.1 * alpha
    planted = FiniteDistribution((1 - mix) * source.masses + mix / k)
    others = [FiniteDistribution(rng.dirichlet(np.ones(k))) for _ in range(count - 1)]
    return [planted] + others


def labeled_source(num_points: int, target_threshold: int, label_noise: float) -> FiniteDistribution:
    """Uniform points labeled by a threshold, each label flipped with probability ``label_noise``."""
    masses = np.zeros(2 * num_points)
    for x in range(num_points):
        y = int(x >= target_threshold)
        masses[2 * x + y] += (1 - label_noise) / num_points
        masses[2 * x + 1 - y] += label_noise / num_points
    return FiniteDistribution(masses)


@dataclass
class _Task:
    cfg: dict

    def __post_init__(self):
        cfg = self.cfg
        task = cfg["task"]
        if task.startswith("learn-discrete"):
            self.source = FiniteDistribution(cfg["source"])
            self.cover = build_grid_cover(cfg["k"], cfg["alpha"])
        elif task == "hypothesis-select":
            if "source" in cfg:
                self.source = FiniteDistribution(cfg["source"])
            else:
                self.source = FiniteDistribution(np.random.default_rng(cfg["seed"]).dirichlet(np.ones(cfg["k"])))
            if "candidates" in cfg:
                self.candidates = [FiniteDistribution(c) for c in cfg["candidates"]]
            else:
                self.candidates = planted_candidates(
                    self.source, cfg["alpha"], cfg["num_candidates"], np.random.default_rng(cfg["seed"])
                )
        else:
            self.source = labeled_source(cfg["num_points"], cfg["target_threshold"], cfg["label_noise"])
            self.concepts = threshold_concepts(cfg["num_points"])
            self.pr = ProbabilisticRepresentation.point_mass(list(self.concepts))
            self.best_error = min(hypothesis_error(c, self.source) for c in self.concepts)

    def trial(self, n: int, m: int, rng) -> tuple[float, object]:
        """Run one trial; returns (error, output)."""
        cfg = self.cfg
        ds = Dataset.sample(self.source, n, m, rng)
        task, eps, alpha, c_tau = cfg["task"], cfg["epsilon"], cfg["alpha"], cfg["c_tau"]
        if task == "learn-discrete":
            out = learn_discrete(ds, cfg["k"], alpha, eps, c_tau, rng, cover=self.cover)
            return tv_distance(out, self.source), out.masses.tolist()
        if task == "learn-discrete-discard":
            out = learn_discrete(baseline_discard(ds), cfg["k"], alpha, eps, c_tau, rng, cover=self.cover)
            return tv_distance(out, self.source), out.masses.tolist()
        if task == "hypothesis-select":
            idx = hypothesis_select(self.candidates, ds, eps, alpha, c_tau, rng)
            return tv_distance(self.candidates[idx], self.source), idx
        if task == "pac-learn":
            h = pac_learn(self.pr, ds, eps, rng, alpha=alpha)
            return hypothesis_error(h, self.source), np.asarray(h).tolist()
        h = agnostic_pac_learn(self.pr, ds, eps, alpha, c_tau, rng)
        return hypothesis_error(h, self.source), np.asarray(h).tolist()

    def success(self, error: float) -> bool:
        task, alpha = self.cfg["task"], self.cfg["alpha"]
        if task == "agnostic-pac-learn":
            return error <= self.best_error + alpha
        return error <= alpha


def run_trials(cfg: dict, n: int, m: int, seed: int, task: _Task | None = None) -> list[dict]:
    task = _Task(cfg) if task is None else task
    rows = []
    for t in range(cfg["trials"]):
        rng = np.random.default_rng([seed, t])
        err, out = task.trial(n, m, rng)
        rows.append({"trial": t, "error": err, "success": task.success(err), "output": out})
    return rows


def run_cell(cfg: dict, n: int, m: int, seed: int, task: _Task | None = None) -> dict:
    """One grid cell: ``cfg['trials']`` seeded trials at ``(n, m)``."""
    trials = run_trials(cfg, n, m, seed, task)
    errors = np.array([r["error"] for r in trials])
    return {
        "task": cfg["task"],
        "n": n,
        "m": m,
        "epsilon": cfg["epsilon"],
        "alpha": cfg["alpha"],
        "trials": cfg["trials"],
        "success_rate": float(np.mean([r["success"] for r in trials])),
        "median_error": float(np.median(errors)),
        "seed": seed,
        "errors": errors.tolist(),
    }


def run_experiment(config: dict) -> dict:
    """Sweep the ``(n, m)`` grid; returns ``{'rows': [...], 'summary': {...}}``."""
    cfg = validate_config(config)
    task = _Task(cfg)
    grid = sorted((n, m) for n in sorted(set(cfg["n"])) for m in sorted(set(cfg["m"])))
    rows = [run_cell(cfg, n, m, cell_seed(cfg["seed"], i), task) for i, (n, m) in enumerate(grid)]
    summary = {
        "task": cfg["task"],
        "cells": len(rows),
        "config": cfg,
        "results": [{k: r[k] for k in CSV_COLUMNS} for r in rows],
    }
    return {"rows": rows, "summary": summary}


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in CSV_COLUMNS])
    return buf.getvalue()


def calibrate_users(
    config: dict,
    m: int,
    target: float = 0.9,
    n_start: int = 16,
    growth: float = 1.5,
    n_max: int = 1 << 20,
) -> int:
    """Smallest ``n`` on a geometric ladder whose success rate reaches ``target``.

    Uses ``config['seed']`` to derive the cell seeds, so the result is reproducible;
    confirm the calibrated ``n`` with an independent seed before relying on it.
    """
    cfg = validate_config(config)
    task = _Task(cfg)
    n, step = n_start, 0
    while n <= n_max:
        row = run_cell(cfg, n, m, cell_seed(cfg["seed"], step), task)
        if row["success_rate"] >= target:
            return n
        n = max(n + 1, math.ceil(n * growth))
        step += 1
    raise RuntimeError(f"no n <= {n_max} reached success rate {target}")


def dumps_summary(summary: dict) -> str:
    return json.dumps(summary, sort_keys=True, indent=2)
