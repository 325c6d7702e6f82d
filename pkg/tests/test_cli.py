import csv
import json

import numpy as np
import pytest

from spinchaos.cli import ExperimentConfig, main, stream
from spinchaos.errors import DomainError


def run(tmp_path, name, command, config):
    cfg_path = tmp_path / f"{name}.json"
    cfg_path.write_text(json.dumps(config))
    out = tmp_path / name
    status = main([command, "--config", str(cfg_path), "--out", str(out)])
    return status, out


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_config_round_trip_and_validation():
    cfg = ExperimentConfig(command="gap", K=4, lambdas=[1.0, 2.0], faults=["t=1"])
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(DomainError):
        ExperimentConfig(t=1.5).validate()
    with pytest.raises(DomainError):
        ExperimentConfig.from_dict({"bogus": 1})
    assert cfg.hash() == ExperimentConfig.from_json(cfg.to_json()).hash()
    assert cfg.hash() != ExperimentConfig(command="gap", K=4, lambdas=[1.0, 2.0]).hash()


def test_named_streams_are_independent_and_reproducible():
    a = stream(7, "chaos").random(5)
    assert np.array_equal(a, stream(7, "chaos").random(5))
    assert not np.array_equal(a, stream(7, "scaling/diluted").random(5))
    assert not np.array_equal(a, stream(8, "chaos").random(5))


@pytest.mark.parametrize("command", ["sample", "chaos", "scaling"])
def test_reruns_are_byte_identical(tmp_path, command):
    config = {"N": 8, "lambdas": [2.0, 8.0], "replicas": 3, "gauss_samples": 4, "seed": 11}
    _, a = run(tmp_path, "a", command, config)
    _, b = run(tmp_path, "b", command, config)
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file() and p.suffix == ".csv")
    assert files
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()
    meta_a = json.loads((a / f"{command}.json").read_text())
    meta_b = json.loads((b / f"{command}.json").read_text())
    meta_a["config"].pop("out"), meta_b["config"].pop("out")
    assert meta_a == meta_b


def test_threads_do_not_change_results(tmp_path):
    config = {"N": 8, "lambdas": [4.0], "replicas": 4, "gauss_samples": 4}
    _, a = run(tmp_path, "a", "scaling", config)
    _, b = run(tmp_path, "b", "scaling", dict(config, threads=2))
    assert (a / "scaling.csv").read_bytes() == (b / "scaling.csv").read_bytes()


def test_verify_passes_on_fast_suites(tmp_path):
    status, out = run(tmp_path, "v", "verify", {"suites": ["sign_moments", "conditions", "gamma_q_identity"]})
    assert status == 0
    rows = read_csv(out / "verify.csv")
    assert {r["suite"] for r in rows} == {"sign_moments", "conditions", "gamma_q_identity"}
    assert all(r["passed"] == "1" for r in rows)
    assert json.loads((out / "verify.json").read_text())["passed"] is True


def test_fault_t1_breaks_conditions_suite(tmp_path):
    status, out = run(tmp_path, "f", "verify", {"suites": ["conditions"], "faults": ["t=1"]})
    assert status != 0
    rows = read_csv(out / "verify.csv")
    assert any(r["passed"] == "0" and "xi0_below_xi" in r["check"] for r in rows)


def test_fault_layer_correlation_breaks_covariance_suite(tmp_path):
    status, out = run(tmp_path, "f", "verify", {"suites": ["covariance"], "faults": ["layer-rho-t"]})
    assert status != 0
    rows = read_csv(out / "verify.csv")
    assert all(r["passed"] == "1" for r in rows if "scaled" in r["check"])
    assert any(r["passed"] == "0" for r in rows if "argument" in r["check"])


def test_gap_with_given_gamma(tmp_path):
    config = {"gamma_P": "3;0.74 0.357;0.87 1.456;1.0 1.456", "q_points": 5, "psi_cells": 64,
              "epsilons": [0.3]}
    status, out = run(tmp_path, "g", "gap", config)
    assert status == 0
    rows = read_csv(out / "gap.csv")
    assert [float(r["q"]) for r in rows] == [-1.0, -0.5, 0.5, 1.0]
    assert all(float(r["gap"]) < 0 for r in rows)
    eta = read_csv(out / "gap_eta.csv")
    assert float(eta[0]["eta_hat"]) > 0


def test_parisi_outputs_per_k_rows(tmp_path):
    status, out = run(tmp_path, "p", "parisi", {"k_max": 2, "multistart": 1, "max_evals": 60})
    assert status == 0
    rows = read_csv(out / "parisi.csv")
    assert [r["k"] for r in rows] == ["1", "2"]
    assert float(rows[1]["value"]) <= float(rows[0]["value"]) + 1e-9
    assert len(rows[0]["config_hash"]) == 16


def test_invalid_config_exits_with_status_2(tmp_path):
    status, _ = run(tmp_path, "bad", "chaos", {"t": 2.0})
    assert status == 2
