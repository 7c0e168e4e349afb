"""Command-line interface behavior and exit codes."""

from __future__ import annotations

import json

import pytest

from duodenoise.cli import main


def test_verify_passes(capsys):
    assert main(["verify", "--n", "5"]) == 0
    out = capsys.readouterr().out
    assert "[PASS]" in out and "[FAIL]" not in out


def test_estimate_identity_on_bsc(capsys):
    code = main([
        "estimate",
        "--channel", '{"type": "bsc", "delta": 0.25}',
        "--denoiser", '{"type": "identity"}',
        "--sequence", "0,1,1,0",
    ])
    assert code == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.25, abs=1e-12)


def test_estimate_erasure_form(capsys):
    code = main([
        "estimate",
        "--channel", '{"type": "bec", "epsilon": 0.5}',
        "--denoiser", '{"type": "identity"}',
        "--sequence", "0 1 2 2",
        "--erasure-form",
    ])
    assert code == 0
    # both unerased symbols would be reconstructed as 0 had they been erased
    assert float(capsys.readouterr().out) == pytest.approx(0.25, abs=1e-12)


def test_combine_plain(capsys):
    code = main([
        "combine",
        "--channel", '{"type": "bsc", "delta": 0.2}',
        "--pair", '{"type": "bsc_counterexample_pair", "delta": 0.2}',
        "--sequence", "1,0,0,0,0,0,0,0",
    ])
    assert code == 0
    result = json.loads(capsys.readouterr().out)
    assert result["chosen"] in (1, 2)
    assert len(result["output"]) == 8
    assert result["estimates"][0] < 0  # odd parity drives the copier negative


def test_combine_randomized(capsys):
    code = main([
        "combine", "--randomized", "--seed", "5", "--m", "16",
        "--channel", '{"type": "bsc", "delta": 0.2}',
        "--pair", '{"type": "bsc_counterexample_pair", "delta": 0.2}',
        "--sequence", ",".join(["1"] + ["0"] * 31),
    ])
    assert code == 0
    result = json.loads(capsys.readouterr().out)
    assert "mask_weight" in result


def test_experiment_runs_config(tmp_path, capsys):
    csv_path = tmp_path / "trials.csv"
    config = {
        "channel": {"type": "bec", "epsilon": 0.5},
        "n": 32,
        "denoisers": {"type": "bec_parity_pair"},
        "trials": 10,
        "master_seed": 3,
        "epsilons": [0.1],
        "output": {"path": str(csv_path), "format": "csv"},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(config))
    assert main(["experiment", str(cfg_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["trials"] == 10
    assert csv_path.read_text().startswith("trial,seed,parity,")


def test_influence_exact(capsys):
    code = main(["influence", "--n", "8", "--q", "0.1", "--mode", "exact"])
    assert code == 0
    result = json.loads(capsys.readouterr().out)
    assert result["influence"] == pytest.approx(8 * 0.8 ** 8, abs=1e-12)


def test_bad_config_exits_one(tmp_path, capsys):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text('{"channel": {"type": "bsc", "delta": 0.2}}')
    assert main(["experiment", str(cfg_path)]) == 1
    assert "error:" in capsys.readouterr().err


def test_bad_channel_json_exits_one(capsys):
    code = main([
        "estimate", "--channel", '{"type": "warp"}',
        "--denoiser", '{"type": "identity"}', "--sequence", "0,1",
    ])
    assert code == 1
