import json
import struct

import numpy as np
import pytest

from osnn.cli import ExperimentConfig
from osnn.cli.data import (load_mnist, load_split, parse_idx_images, parse_idx_labels, write_idx_images,
                           write_idx_labels)
from osnn.cli.main import main
from osnn.errors import ConfigError, FormatError
from osnn.layers import Sequential, build_paper_model
from osnn.quant import QuantSpec


@pytest.fixture(scope="module")
def fake_mnist(tmp_path_factory):
    d = tmp_path_factory.mktemp("mnist")
    rng = np.random.default_rng(5)
    for split, n in (("train", 120), ("t10k", 60)):
        labels = rng.integers(0, 10, n)
        imgs = rng.integers(0, 60, (n, 28, 28))
        for i, c in enumerate(labels):
            imgs[i, 2 * c:2 * c + 6, 4:24] = 255
        write_idx_images(d / f"{split}-images.idx3-ubyte", imgs)
        write_idx_labels(d / f"{split}-labels.idx1-ubyte", labels)
    return d


def run_cli(tmp_path, task, cfg, name="out", seed=None):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(cfg))
    args = [task, "--config", str(p), "--out", str(tmp_path / name)]
    if seed is not None:
        args += ["--seed", str(seed)]
    return main(args), tmp_path / name


# IDX

def test_idx_round_trip(tmp_path, rng):
    imgs = rng.integers(0, 256, (7, 28, 28))
    imgs[0, 0, 0], imgs[0, 0, 1] = 255, 0
    labels = rng.integers(0, 10, 7)
    write_idx_images(tmp_path / "i", imgs)
    write_idx_labels(tmp_path / "l", labels)
    d = load_mnist(tmp_path / "i", tmp_path / "l", "x")
    assert d.images.shape == (7, 1, 28, 28)
    assert np.array_equal(d.images[:, 0], imgs / 255.0)
    assert d.images[0, 0, 0, 0] == 1.0 and d.images[0, 0, 0, 1] == 0.0
    assert np.array_equal(d.labels, labels)


def test_idx_errors():
    with pytest.raises(FormatError) as e:
        parse_idx_images(b"")
    assert e.value.offset == 0
    with pytest.raises(FormatError) as e:
        parse_idx_images(struct.pack(">IIII", 0x801, 1, 28, 28))
    assert e.value.offset == 0
    with pytest.raises(FormatError):
        parse_idx_images(struct.pack(">IIII", 0x803, 2, 28, 28) + bytes(28 * 28))
    with pytest.raises(FormatError):
        parse_idx_images(struct.pack(">II", 0x803, 2))
    with pytest.raises(FormatError) as e:
        parse_idx_labels(struct.pack(">II", 0x801, 3) + bytes([1, 12, 3]))
    assert e.value.offset == 9


def test_image_label_count_mismatch(tmp_path):
    write_idx_images(tmp_path / "i", np.zeros((3, 28, 28)))
    write_idx_labels(tmp_path / "l", [1, 2])
    with pytest.raises(FormatError):
        load_mnist(tmp_path / "i", tmp_path / "l")


@pytest.mark.needs_mnist
def test_real_mnist_test_split():
    d = load_split("test")
    assert d.images.shape == (10000, 1, 28, 28)
    assert d.labels.min() == 0 and d.labels.max() == 9


# config

def test_config_defaults_and_errors(tmp_path):
    c = ExperimentConfig()
    assert c["train.epochs"] == 20 and c["model.k"] == 4
    assert ExperimentConfig({"train": {"lr": 0.1}})["train.lr"] == 0.1
    with pytest.raises(ConfigError) as e:
        ExperimentConfig({"train.lrr": 0.1})
    assert e.value.path == "train.lrr"
    with pytest.raises(ConfigError):
        ExperimentConfig({"train.epochs": "ten"})
    with pytest.raises(ConfigError):
        ExperimentConfig({"task": "dance"})
    assert c.hash() == c.with_overrides(out_dir="elsewhere").hash() != c.with_overrides(seed=1).hash()
    assert ExperimentConfig({"chip.er_db": "inf"})["chip.er_db"] == float("inf")


def test_cli_config_error_exit_code(tmp_path, capsys):
    rc, _ = run_cli(tmp_path, "train", {"train": {"lrr": 1}})
    assert rc == 2
    assert "train.lrr" in capsys.readouterr().err


def test_cli_module_error_exit_code(tmp_path, capsys):
    rc, _ = run_cli(tmp_path, "cost", {"cost": {"k": 6}})
    assert rc == 1
    assert "ShapeError" in capsys.readouterr().err
    rc, _ = run_cli(tmp_path, "eval", {})
    assert rc == 2


# tasks

def test_cost_task(tmp_path):
    rc, out = run_cli(tmp_path, "cost", {"cost": {"m": 32, "n": 32, "k": 8}})
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    assert abs(rep["delay_ps"] - 163.8) <= 0.1 and rep["consistent"]
    h = rep["config_hash"]
    assert (out / "report.txt").read_text().startswith(f"# config_hash={h}")
    assert json.loads((out / "config.json").read_text())["cost.k"] == 8


def test_train_zero_epochs_checkpoint_is_init(tmp_path, fake_mnist):
    cfg = {"data": {"dir": str(fake_mnist)}, "train": {"epochs": 0}, "seed": 3}
    rc, out = run_cli(tmp_path, "train", cfg)
    assert rc == 0
    ck = Sequential.load(out / "checkpoint.json")
    assert ck.state_hash() == build_paper_model(4, "hadamard", QuantSpec(3), 3).state_hash()


def test_train_is_reproducible_and_eval_confusion(tmp_path, fake_mnist):
    cfg = {"data": {"dir": str(fake_mnist)}, "train": {"epochs": 2, "batch_size": 32}}
    rc1, o1 = run_cli(tmp_path, "train", cfg, "a", seed=9)
    rc2, o2 = run_cli(tmp_path, "train", cfg, "b", seed=9)
    assert rc1 == rc2 == 0
    assert (o1 / "metrics.csv").read_bytes() == (o2 / "metrics.csv").read_bytes()
    rep = json.loads((o1 / "report.json").read_text())
    assert (o1 / "metrics.csv").read_text().startswith(f"# config_hash={rep['config_hash']}")

    ev = {"data": {"dir": str(fake_mnist)}, "model": {"checkpoint": str(o1 / "checkpoint.json")},
          "noise": {"input_sigma": 0.05}, "eval": {"noise_seeds": 3}}
    rc, oe = run_cli(tmp_path, "eval", ev, "e")
    assert rc == 0
    r = json.loads((oe / "report.json").read_text())
    cm = np.array(r["confusion"])
    labels = load_split("test", str(fake_mnist)).labels
    assert np.array_equal(cm.sum(axis=1), np.bincount(labels, minlength=10))
    assert len(r["accuracy_per_seed"]) == 3
    assert (oe / "confusion.csv").exists()


def test_chip_tasks(tmp_path, fake_mnist):
    chip = {"kappa_std": 0.02, "phase_offset_std": 0.05, "er_db": 25.0, "seed": 1}
    rc, oc = run_cli(tmp_path, "calibrate", {"chip": chip}, "cal")
    assert rc == 0
    assert json.loads((oc / "report.json").read_text())["residual_rms"] < 1e-3
    assert (oc / "chip.json").exists()

    rc, od = run_cli(tmp_path, "dpe-fit", {"chip": chip, "dpe": {"samples": 600, "epochs": 150}}, "dpe")
    assert rc == 0
    rep = json.loads((od / "report.json").read_text())
    assert rep["n_params"] == 48 and rep["holdout_rmse"] < 0.01

    ck = tmp_path / "init.json"
    build_paper_model(seed=0).save(ck)
    cfg = {"data": {"dir": str(fake_mnist)}, "model": {"checkpoint": str(ck)}, "chip": dict(chip, subset=20)}
    rc, oe = run_cli(tmp_path, "chip-eval", cfg, "ce")
    assert rc == 0
    r = json.loads((oe / "report.json").read_text())
    assert r["n"] == 20 and 0 <= r["accuracy"] <= 1


def test_fidelity_task(tmp_path):
    rc, out = run_cli(tmp_path, "fidelity", {"fidelity": {"k": 4, "targets": 3, "iterations": 50, "restarts": 1}})
    assert rc == 0
    r = json.loads((out / "report.json").read_text())
    assert r["closed_form"]["dft"] > 1 - 1e-9 and r["closed_form"]["hadamard"] > 1 - 1e-9


def test_prune_task(tmp_path, fake_mnist):
    ck = tmp_path / "init.json"
    build_paper_model(seed=0).save(ck)
    cfg = {"data": {"dir": str(fake_mnist)}, "model": {"checkpoint": str(ck)},
           "train": {"epochs": 1, "group_lambda": 0.01, "prune_tau": 0.3, "prune_epochs": 1, "batch_size": 32}}
    rc, out = run_cli(tmp_path, "prune", cfg)
    assert rc == 0
    r = json.loads((out / "report.json").read_text())
    assert 0 <= r["pruned_fraction"] <= 1 and r["area_after_mm2"] <= r["area_before_mm2"]
    assert "config_hash" in json.loads((out / "mask.json").read_text())
