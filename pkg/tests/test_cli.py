"""End-to-end CLI runs on micro budgets."""

import json

import numpy as np
import pytest

from drivefit.cli import main
from drivefit.dynamics import get_vehicle
from drivefit.nn import policy_new, save_policy, save_value, value_new
from drivefit.prior import _scripted_burnin

SPORTY = get_vehicle("sporty")


def _write_burnin(path, vehicle=SPORTY, v=5.0, steps=10):
    bi = _scripted_burnin(lambda i: 0.0, lambda i: v, steps, vehicle, 10.0)
    bi.to_csv(path)
    return path


def _write_artifacts(root, vehicle=SPORTY, window=8, seed=0):
    rng = np.random.default_rng(seed)
    out = root / vehicle.name
    out.mkdir(parents=True)
    save_policy(policy_new(window, rng, hidden=16, encoder_out=16),
                out / "policy.json")
    save_value(value_new(window, rng, hidden=16, encoder_out=16),
               out / "value.json")
    return root


def test_gen_scenarios_all(tmp_path, capsys):
    rc = main(["gen-scenarios", "--vehicle", "sporty", "--out", str(tmp_path)])
    assert rc == 0
    names = {p.name for p in tmp_path.glob("*.csv")}
    assert names == {"straight.csv", "left_turn.csv", "right_turn.csv",
                     "full_stop.csv", "s_shape.csv"}
    out = capsys.readouterr().out
    assert "straight" in out and "waypoints" in out


def test_gen_scenarios_subset_and_unknown(tmp_path, capsys):
    rc = main(["gen-scenarios", "--vehicle", "sporty",
               "--scenarios", "straight,full_stop", "--out", str(tmp_path)])
    assert rc == 0
    assert {p.name for p in tmp_path.glob("*.csv")} == {"straight.csv",
                                                        "full_stop.csv"}
    rc = main(["gen-scenarios", "--vehicle", "sporty",
               "--scenarios", "u_turn", "--out", str(tmp_path)])
    assert rc == 2
    assert "u_turn" in capsys.readouterr().err


def test_train_micro_budget(tmp_path, capsys):
    rc = main(["train", "--vehicle", "sporty", "--scenarios", "straight",
               "--total-steps", "2048", "--seed", "0",
               "--out", str(tmp_path / "art")])
    assert rc == 0
    out_dir = tmp_path / "art" / "sporty"
    for name in ("policy.json", "value.json", "training_log.csv"):
        assert (out_dir / name).exists()
    assert "trained sporty" in capsys.readouterr().out


def test_sample_prior_writes_candidates(tmp_path, capsys):
    burnin = _write_burnin(tmp_path / "burnin.csv")
    rc = main(["sample-prior", "--burnin", str(burnin), "--n", "3",
               "--seed", "1", "--out", str(tmp_path / "cand")])
    assert rc == 0
    files = sorted(p.name for p in (tmp_path / "cand").glob("*.csv"))
    assert files == ["candidate_000.csv", "candidate_001.csv", "candidate_002.csv"]
    assert "3 candidates" in capsys.readouterr().out


def test_refine_selects_one_candidate(tmp_path, capsys):
    art = _write_artifacts(tmp_path / "art")
    burnin = _write_burnin(tmp_path / "burnin.csv")
    rc = main(["refine", "--vehicle", "sporty",
               "--policy", str(art / "sporty" / "policy.json"),
               "--value", str(art / "sporty" / "value.json"),
               "--burnin", str(burnin), "--num-candidates", "4",
               "--seed", "2", "--out", str(tmp_path / "ref")])
    assert rc == 0
    table = (tmp_path / "ref" / "candidates.csv").read_text().splitlines()
    assert table[0] == "sample_id,s0_value,weight,selected_flag"
    assert len(table) == 5
    flags = [int(line.split(",")[3]) for line in table[1:]]
    assert sum(flags) == 1
    assert (tmp_path / "ref" / "selected.csv").exists()
    assert len(list((tmp_path / "ref").glob("candidate_*.csv"))) == 4
    assert "selected candidate" in capsys.readouterr().out


def test_evaluate_then_report(tmp_path, capsys):
    art = _write_artifacts(tmp_path / "art")
    cfg = {
        "vehicles": ["sporty"], "ics": ["fast_straight"], "seeds": [0],
        "artifacts_dir": str(art), "num_candidates": 2,
        "num_posterior_draws": 1,
        "prior": {"horizon": 15},
    }
    cfg_path = tmp_path / "experiment.json"
    cfg_path.write_text(json.dumps(cfg))
    rc = main(["evaluate", "--config", str(cfg_path),
               "--out", str(tmp_path / "rep")])
    assert rc == 0
    assert (tmp_path / "rep" / "comparison.csv").exists()
    assert (tmp_path / "rep" / "weighted_expectation.csv").exists()
    capsys.readouterr()
    rc = main(["report", "--in", str(tmp_path / "rep")])
    assert rc == 0
    out = capsys.readouterr().out
    assert "prior" in out.splitlines()[0]
    assert "sporty" in out


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["calibrate"])
    assert exc.value.code == 2
