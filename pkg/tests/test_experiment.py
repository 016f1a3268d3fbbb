import csv
import io

import jsonschema
import numpy as np
import pytest

from userdp.experiment import (
    CSV_COLUMNS,
    calibrate_users,
    cell_seed,
    labeled_source,
    planted_candidates,
    rows_to_csv,
    run_cell,
    run_experiment,
    validate_config,
)
from userdp.core import FiniteDistribution, tv_distance

BASE = {"task": "learn-discrete", "n": [30], "m": [2, 4], "alpha": 0.5, "epsilon": 1.0, "trials": 4, "seed": 3}


def test_validation_fills_defaults_and_rejects_unknown_keys():
    cfg = validate_config(BASE)
    assert cfg["k"] == 3 and cfg["c_tau"] == 1.0
    with pytest.raises(jsonschema.ValidationError):
        validate_config({**BASE, "colour": "red"})
    with pytest.raises(jsonschema.ValidationError):
        validate_config({**BASE, "alpha": 1.5})
    with pytest.raises(ValueError):
        validate_config({**BASE, "k": 4, "source": [0.5, 0.5]})


def test_empty_grid_gives_header_only():
    out = run_experiment({**BASE, "n": []})
    assert rows_to_csv(out["rows"]) == ",".join(CSV_COLUMNS) + "\n"


def test_csv_is_reproducible_and_rows_rerun_standalone():
    a = rows_to_csv(run_experiment(BASE)["rows"])
    b = rows_to_csv(run_experiment(BASE)["rows"])
    assert a == b
    rows = list(csv.DictReader(io.StringIO(a)))
    assert [(int(r["n"]), int(r["m"])) for r in rows] == [(30, 2), (30, 4)]
    cfg = validate_config(BASE)
    for r in rows:
        again = run_cell(cfg, int(r["n"]), int(r["m"]), int(r["seed"]))
        assert repr(again["median_error"]) == r["median_error"]
        assert repr(again["success_rate"]) == r["success_rate"]


def test_cell_seeds_are_distinct():
    seeds = {cell_seed(0, i) for i in range(100)}
    assert len(seeds) == 100
    assert cell_seed(5, 2) == cell_seed(5, 2)


def test_planted_candidate_is_close():
    src = FiniteDistribution([0.5, 0.3, 0.2])
    cands = planted_candidates(src, 0.3, 20, np.random.default_rng(0))
    assert len(cands) == 20
    assert tv_distance(cands[0], src) <= 0.1 * 0.3


def test_labeled_source_noise():
    src = labeled_source(4, 2, 0.25)
    assert src.masses.tolist() == [0.1875, 0.0625, 0.1875, 0.0625, 0.0625, 0.1875, 0.0625, 0.1875]


@pytest.mark.parametrize(
    "task,extra",
    [
        ("hypothesis-select", {"num_candidates": 5}),
        ("pac-learn", {"num_points": 8}),
        ("agnostic-pac-learn", {"num_points": 8, "label_noise": 0.1}),
        ("learn-discrete-discard", {}),
    ],
)
def test_every_task_runs(task, extra):
    out = run_experiment({**BASE, "task": task, "m": [2], **extra})
    row = out["rows"][0]
    assert 0 <= row["success_rate"] <= 1
    assert out["summary"]["cells"] == 1


def test_calibration_returns_passing_n():
    cfg = {**BASE, "trials": 10}
    n = calibrate_users(cfg, 4, target=0.8, n_start=8)
    cell = run_cell(validate_config(cfg), n, 4, 0)
    assert n >= 8 and 0 <= cell["success_rate"] <= 1
