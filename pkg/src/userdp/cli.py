"""Command-line entry point: ``userdp <subcommand> ...``.

Exit codes: 0 success, 1 invalid input or precondition failure, 2 a brute-force
computation would exceed its budget. ``USERDP_BUDGET`` overrides the default budget.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import jsonschema
import numpy as np

from . import calculus, experiment
from .audit import verify_item_dp, verify_user_dp
from .core import BudgetExceededError, Dataset, PrivacyParams
from .delstab import BOTTOM, DelStab
from .learners import build_grid_cover, learn_discrete_distribution
from .mechanisms import (
    CountSummaryMechanism,
    ExactMechanism,
    constant_mechanism,
    first_item_mechanism,
    pac_em_mechanism,
    randomized_response_bit,
    randomized_response_count,
)

EXIT_OK, EXIT_INVALID, EXIT_BUDGET = 0, 1, 2


def default_budget() -> int:
    return int(os.environ.get("USERDP_BUDGET", 2_000_000))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def load_mechanism(desc: dict) -> ExactMechanism:
    """Build a mechanism from its JSON description (see README for the formats)."""
    kind = desc.get("type")
    if kind == "constant":
        return constant_mechanism(desc["pmf"], desc.get("input_users"))
    if kind == "first_item":
        return first_item_mechanism(int(desc["universe_size"]), desc.get("input_users"))
    if kind == "rr_bit":
        return randomized_response_bit(float(desc["epsilon0"]))
    if kind == "rr_count":
        return randomized_response_count(float(desc["epsilon0"]), int(desc["input_users"]), int(desc["m"]))
    if kind == "count_summary":
        return CountSummaryMechanism.from_item_weights(
            desc["item_weights"], desc["tables"], int(desc["input_users"]), int(desc["m"])
        )
    if kind == "pac_em":
        return pac_em_mechanism(desc["hypotheses"], float(desc["epsilon"]))
    if kind == "learn_discrete":
        k, alpha = int(desc["k"]), float(desc["alpha"])
        cover = build_grid_cover(k, alpha, resolution=desc.get("resolution"))
        eps, c_tau = float(desc["epsilon"]), float(desc.get("c_tau", 1.0))
        return ExactMechanism(
            lambda ds: learn_discrete_distribution(ds, k, alpha, eps, c_tau, cover=cover),
            len(cover),
            name="learn-discrete",
        )
    raise ValueError(f"unknown mechanism type {kind!r}")


def _read_json(path: str):
    with open(path) as fh:
        return json.load(fh)


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True, indent=2))


def cmd_params(args) -> int:
    pp = PrivacyParams(args.epsilon, args.delta)
    _emit(calculus.summary(pp, args.m, args.c_delta))
    return EXIT_OK


def cmd_audit(args) -> int:
    desc = _read_json(args.mechanism)
    mech = load_mechanism(desc)
    universe = args.universe_size if args.universe_size is not None else desc.get("universe_size")
    n = args.n if args.n is not None else desc.get("n")
    m = args.m if args.m is not None else desc.get("m", 1)
    if universe is None or n is None:
        raise ValueError("audit needs universe_size and n (flags or mechanism file)")
    verify = verify_user_dp if args.level == "user" else verify_item_dp
    report = verify(
        mech,
        int(universe),
        int(n),
        int(m),
        PrivacyParams(args.epsilon, args.delta),
        mode=args.mode,
        budget=args.budget if args.budget is not None else default_budget(),
        rng_seed=args.seed,
    )
    _emit(report.to_dict())
    return EXIT_OK


def cmd_delstab_demo(args) -> int:
    mech = load_mechanism(_read_json(args.mechanism))
    ds = Dataset.from_dict(_read_json(args.dataset))
    pp = PrivacyParams(args.epsilon, args.delta)
    budget = args.budget if args.budget is not None else default_budget()
    ptr = DelStab(mech, pp, budget)
    out = ptr.run(ds, args.seed)
    result = {
        "epsilon": pp.epsilon,
        "delta": pp.delta,
        "kappa": ptr.kappa,
        "seed": args.seed,
        "outcome": "bottom" if out is BOTTOM else int(out),
    }
    if isinstance(mech, CountSummaryMechanism):
        law = ptr.distribution(ds)
        result["pmf"] = law.masses[:-1].tolist()
        result["bottom_probability"] = float(law.masses[-1])
        result["stable_levels"] = ptr.stable_levels(ds).astype(int).tolist()
    _emit(result)
    return EXIT_OK


def _learner_command(task: str):
    def run(args) -> int:
        cfg = _read_json(args.config)
        if not isinstance(cfg, dict):
            raise ValueError("config must be a JSON object")
        cfg = dict(cfg)
        cfg.setdefault("task", task)
        if cfg["task"] != task:
            raise ValueError(f"config task {cfg['task']!r} does not match subcommand {task!r}")
        for key in ("n", "m"):
            if isinstance(cfg.get(key), int):
                cfg[key] = [cfg[key]]
        cfg = experiment.validate_config(cfg)
        if len(cfg["n"]) != 1 or len(cfg["m"]) != 1:
            raise ValueError("single-run subcommands take one n and one m; use `experiment` for grids")
        n, m = cfg["n"][0], cfg["m"][0]
        trials = experiment.run_trials(cfg, n, m, cfg["seed"])
        errors = [t["error"] for t in trials]
        result = {
            "task": task,
            "n": n,
            "m": m,
            "epsilon": cfg["epsilon"],
            "alpha": cfg["alpha"],
            "trials": cfg["trials"],
            "seed": cfg["seed"],
            "success_rate": float(np.mean([t["success"] for t in trials])),
            "median_error": float(np.median(errors)),
            "outputs": [t["output"] for t in trials],
        }
        if args.csv:
            with open(args.csv, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["trial", "error", "success", "output"])
                for t in trials:
                    writer.writerow([t["trial"], repr(t["error"]), int(t["success"]), json.dumps(t["output"])])
        _emit(result)
        return EXIT_OK

    return run


def cmd_experiment(args) -> int:
    cfg = _read_json(args.config)
    result = experiment.run_experiment(cfg)
    text = experiment.rows_to_csv(result["rows"])
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(experiment.dumps_summary(result["summary"]))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="userdp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("params", help="derived privacy parameters for (epsilon, delta[, m])")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--m", type=int)
    p.add_argument("--c-delta", type=float, default=1.0)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("audit", help="verify user- or item-level DP of a mechanism")
    p.add_argument("--mechanism", required=True)
    p.add_argument("--mode", choices=["exhaustive", "sampled"], default="exhaustive")
    p.add_argument("--level", choices=["user", "item"], default="user")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--budget", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--universe-size", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("delstab-demo", help="run DelStab once and print the exact law when available")
    p.add_argument("--mechanism", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int)
    p.set_defaults(func=cmd_delstab_demo)

    for name in ("learn-discrete", "hypothesis-select", "pac-learn"):
        p = sub.add_parser(name, help=f"seeded {name} trials from a JSON config")
        p.add_argument("config")
        p.add_argument("--csv", help="write a per-trial CSV log here")
        p.set_defaults(func=_learner_command(name))

    p = sub.add_parser("experiment", help="sweep an (n, m) grid and write CSV + JSON summary")
    p.add_argument("config")
    p.add_argument("--csv", help="CSV output path (default: stdout)")
    p.add_argument("--json", help="JSON summary output path")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"userdp: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if not getattr(args, "command", None):
        parser.print_help(sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except BudgetExceededError as exc:
        print(f"userdp: infeasible at this size: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        print(f"userdp: config error at {path}: {exc.message}", file=sys.stderr)
        return EXIT_INVALID
    except json.JSONDecodeError as exc:
        print(f"userdp: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"userdp: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
