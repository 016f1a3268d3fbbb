import json
import subprocess
import sys

import pytest

from userdp.cli import main


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return str(p)


def test_params_prints_kappa(capsys):
    assert main(["params", "--epsilon", "0.3", "--delta", "0.03"]) == 0
    assert json.loads(capsys.readouterr().out)["kappa"] == 51


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand(capsys):
    assert main(["frobnicate"]) == 1


def test_invalid_params(capsys):
    assert main(["params", "--epsilon", "1", "--delta", "2"]) == 1


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "userdp", "params", "--epsilon", "6", "--delta", "0.5"], capture_output=True, text=True)
    assert out.returncode == 0
    assert json.loads(out.stdout)["kappa"] == 4


def test_audit_exhaustive(tmp_path, capsys):
    mech = write(tmp_path, "m.json", {"type": "pac_em", "hypotheses": [[0, 1], [1, 1]], "epsilon": 1.0, "universe_size": 4, "n": 2, "m": 2})
    assert main(["audit", "--mechanism", mech, "--epsilon", "1.0"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["verdict"] == "pass" and report["mode"] == "exhaustive"


def test_audit_budget_exit_code(tmp_path, capsys, monkeypatch):
    mech = write(tmp_path, "m.json", {"type": "first_item", "universe_size": 4})
    args = ["audit", "--mechanism", mech, "--epsilon", "1", "--universe-size", "4", "--n", "4", "--m", "4"]
    assert main(args + ["--budget", "100"]) == 2
    monkeypatch.setenv("USERDP_BUDGET", "100")
    assert main(args) == 2


def test_audit_sampled_is_reproducible(tmp_path, capsys):
    mech = write(tmp_path, "m.json", {"type": "rr_bit", "epsilon0": 1.0, "universe_size": 2, "n": 3, "m": 1})
    args = ["audit", "--mechanism", mech, "--epsilon", "1.0", "--mode", "sampled", "--budget", "30", "--seed", "9"]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first


def test_unknown_mechanism_type(tmp_path, capsys):
    mech = write(tmp_path, "m.json", {"type": "mystery"})
    assert main(["audit", "--mechanism", mech, "--epsilon", "1", "--universe-size", "2", "--n", "1"]) == 1


def test_delstab_demo(tmp_path, capsys):
    mech = write(tmp_path, "m.json", {"type": "rr_count", "epsilon0": 1.0, "input_users": 2, "m": 2})
    ds = write(tmp_path, "d.json", {"universe_size": 2, "m": 2, "users": [[i % 2, (i // 2) % 2] for i in range(18)]})
    assert main(["delstab-demo", "--mechanism", mech, "--dataset", ds, "--epsilon", "6", "--delta", "0.5", "--seed", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["kappa"] == 4
    assert abs(sum(out["pmf"]) + out["bottom_probability"] - 1) < 1e-9
    assert len(out["stable_levels"]) == 9


def test_delstab_demo_rejects_short_dataset(tmp_path, capsys):
    mech = write(tmp_path, "m.json", {"type": "rr_count", "epsilon0": 1.0, "input_users": 2, "m": 2})
    ds = write(tmp_path, "d.json", {"universe_size": 2, "m": 2, "users": [[0, 1]] * 5})
    assert main(["delstab-demo", "--mechanism", mech, "--dataset", ds, "--epsilon", "6", "--delta", "0.5"]) == 1


LEARN = {"n": 30, "m": 2, "alpha": 0.5, "epsilon": 1.0, "trials": 3, "seed": 1}


@pytest.mark.parametrize(
    "cmd,extra",
    [("learn-discrete", {"k": 2}), ("hypothesis-select", {"num_candidates": 4}), ("pac-learn", {"num_points": 6})],
)
def test_learner_subcommands(tmp_path, capsys, cmd, extra):
    cfg = write(tmp_path, "c.json", {**LEARN, **extra})
    log = str(tmp_path / "log.csv")
    assert main([cmd, cfg, "--csv", log]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["task"] == cmd and len(out["outputs"]) == 3
    assert open(log).read().startswith("trial,error,success,output\n")


def test_learner_task_mismatch(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {**LEARN, "task": "pac-learn"})
    assert main(["learn-discrete", cfg]) == 1


def test_experiment_outputs(tmp_path, capsys):
    cfg = {"task": "learn-discrete", "n": [20], "m": [1, 2], "alpha": 0.5, "epsilon": 1.0, "trials": 3, "seed": 4}
    path = write(tmp_path, "c.json", cfg)
    csv1, csv2, js = (str(tmp_path / f) for f in ("a.csv", "b.csv", "s.json"))
    assert main(["experiment", path, "--csv", csv1, "--json", js]) == 0
    assert main(["experiment", path, "--csv", csv2]) == 0
    assert open(csv1, "rb").read() == open(csv2, "rb").read()
    assert json.load(open(js))["cells"] == 2
    assert main(["experiment", path]) == 0
    assert capsys.readouterr().out == open(csv1).read()


def test_experiment_empty_grid(tmp_path, capsys):
    path = write(tmp_path, "c.json", {"task": "learn-discrete", "n": [], "m": [1], "alpha": 0.5, "epsilon": 1.0, "trials": 3, "seed": 4})
    assert main(["experiment", path]) == 0
    assert capsys.readouterr().out == "task,n,m,epsilon,alpha,trials,success_rate,median_error,seed\n"


def test_experiment_schema_error(tmp_path, capsys):
    path = write(tmp_path, "c.json", {"task": "learn-discrete", "n": ["x"], "m": [1], "alpha": 0.5, "epsilon": 1, "trials": 3, "seed": 4})
    assert main(["experiment", path]) == 1
    assert "n/0" in capsys.readouterr().err


def test_experiment_bad_json(tmp_path, capsys):
    path = write(tmp_path, "c.json", "{not json")
    assert main(["experiment", path]) == 1
    assert "invalid JSON" in capsys.readouterr().err


def test_experiment_infeasible_grid(tmp_path, capsys):
    path = write(tmp_path, "c.json", {"task": "learn-discrete", "k": 8, "n": [5], "m": [1], "alpha": 0.01, "epsilon": 1, "trials": 1, "seed": 0})
    assert main(["experiment", path]) == 2
