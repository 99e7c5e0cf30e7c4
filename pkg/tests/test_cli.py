"""End-to-end pipeline through the command-line entry point."""

import hashlib
import json
from pathlib import Path

import pytest

from delaykoop import cli
from delaykoop.config import RunConfig, config_hash, save_config


def tiny_config(**kw):
    base = dict(
        name="tiny",
        samples=600,
        hold_min=5,
        hold_max=20,
        noise_std=0.02,
        edmd_n_delays=6,
        eta_H=8,
        N_L=4,
        window_stride=4,
        lstm_hidden=3,
        latent_dim=4,
        encoder_hidden=(8,),
        decoder_hidden=(8,),
        epochs=2,
        lr=1e-3,
        signal_seed=5,
        noise_seed=6,
        train_seed=7,
    )
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture()
def cfg_path(tmp_path):
    path = tmp_path / "tiny.cfg"
    save_config(tiny_config(), path)
    return path


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_simulate_writes_datasets_and_manifest(cfg_path, tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", str(cfg_path), "--out", str(out)]) == 0
    for kind in ("train_clean", "train_noisy", "test_clean", "test_noisy"):
        assert (out / "data" / f"{kind}.csv").exists()
    stdout = capsys.readouterr().out
    assert "simulated 600 samples" in stdout

    chash = config_hash(tiny_config())
    saved = json.loads((out / "config.json").read_text())
    assert saved.pop("config_hash") == chash
    assert RunConfig.from_doc(saved) == tiny_config()

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_hash"] == chash
    assert manifest["seeds"] == {"signal": 5, "noise": 6, "train": 7}
    for rel, digest in manifest["files"].items():
        assert sha256(out / rel) == digest

    first_line = (out / "data" / "train_noisy.csv").read_text().splitlines()[0]
    assert first_line == f"# config_hash={chash}"


def test_train_requires_simulated_data(cfg_path, tmp_path, capsys):
    out = tmp_path / "empty"
    code = cli.main(["train", "--config", str(cfg_path), "--out", str(out),
                     "--family", "dko"])
    assert code == 3
    assert "simulate" in capsys.readouterr().err


def test_unknown_family_is_config_error(cfg_path, tmp_path):
    out = tmp_path / "run"
    cli.main(["simulate", "--config", str(cfg_path), "--out", str(out)])
    code = cli.main(["train", "--config", str(cfg_path), "--out", str(out),
                     "--family", "edmd"])
    assert code == 2


def test_missing_config_file_is_config_error(tmp_path):
    code = cli.main(["simulate", "--config", str(tmp_path / "nope.cfg"),
                     "--out", str(tmp_path / "run")])
    assert code == 2


def test_evaluate_requires_models(cfg_path, tmp_path):
    out = tmp_path / "run"
    cli.main(["simulate", "--config", str(cfg_path), "--out", str(out)])
    assert cli.main(["evaluate", "--config", str(cfg_path), "--out", str(out)]) == 3


def test_full_pipeline_and_reports(cfg_path, tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    # eDMD lifted dimensions with 6 delays: 6 monomials + [2 sqrt] + 6
    assert "edmd-known: lifted dimension 14" in stdout
    assert "edmd-unknown: lifted dimension 12" in stdout
    assert "dko: A_K 4x4" in stdout
    assert "MAE [m]" in stdout

    for rel in (
        "models/edmd_known.json",
        "models/edmd_unknown.json",
        "models/dko.json",
        "models/dko_train_log.csv",
        "report/metrics.csv",
        "report/rollout.csv",
        "report/eigs.csv",
        "report/rollout.svg",
        "report/eigs.svg",
        "report/report.json",
    ):
        assert (out / rel).exists(), rel

    chash = config_hash(tiny_config())
    metrics = (out / "report" / "metrics.csv").read_text().splitlines()
    assert metrics[0] == f"# config_hash={chash}"
    names = {row.split(",")[0] for row in metrics[2:]}
    assert {"mae_dko", "mae_edmd_known", "mae_edmd_unknown"} <= names

    log = (out / "models" / "dko_train_log.csv").read_text().splitlines()
    assert log[1] == "epoch,loss,recon,step,pred,lpred"
    assert len(log) == 2 + 2  # comment + header + one row per epoch

    report_doc = json.loads((out / "report" / "report.json").read_text())
    assert report_doc["config_hash"] == chash
    assert set(report_doc["maes"]) == {"dko", "edmd_known", "edmd_unknown"}
    assert "truth_linearized" in report_doc["eig_sets"]

    manifest = json.loads((out / "manifest.json").read_text())
    for rel, digest in manifest["files"].items():
        assert sha256(out / rel) == digest
    assert "report/metrics.csv" in manifest["files"]


def test_pipeline_byte_identical_reruns(cfg_path, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(out_a)]) == 0
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(out_b)]) == 0
    files = sorted(p.relative_to(out_a) for p in out_a.rglob("*") if p.is_file())
    assert files
    for rel in files:
        assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes(), rel


def test_seed_override_changes_data(cfg_path, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    cli.main(["simulate", "--config", str(cfg_path), "--out", str(out_a)])
    code = cli.main(["simulate", "--config", str(cfg_path), "--out", str(out_b),
                     "--seed", "99"])
    assert code == 0
    a = (out_a / "data" / "train_noisy.csv").read_bytes()
    b = (out_b / "data" / "train_noisy.csv").read_bytes()
    assert a != b
    manifest = json.loads((out_b / "manifest.json").read_text())
    assert manifest["seeds"] == {"signal": 99, "noise": 100, "train": 101}


def test_out_directory_locked_to_config(cfg_path, tmp_path):
    out = tmp_path / "run"
    cli.main(["simulate", "--config", str(cfg_path), "--out", str(out)])
    other = tmp_path / "other.cfg"
    save_config(tiny_config(samples=700), other)
    code = cli.main(["simulate", "--config", str(other), "--out", str(out)])
    assert code == 3


def test_divergent_training_reports_numerical_failure(tmp_path, capsys):
    import numpy as np

    path = tmp_path / "explode.cfg"
    save_config(tiny_config(lr=1e150), path)
    out = tmp_path / "run"
    cli.main(["simulate", "--config", str(path), "--out", str(out)])
    with np.errstate(over="ignore", invalid="ignore"):  # overflow is the point
        code = cli.main(["train", "--config", str(path), "--out", str(out),
                         "--family", "dko"])
    assert code == 4
    assert "numerical" in capsys.readouterr().err
