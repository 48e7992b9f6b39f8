"""Command-line entry point: ``osnn <task> [--config FILE] [--seed N] [--out DIR] [--threads N]``."""

import argparse
import json
import os
from pathlib import Path
import sys

from ..errors import ConfigError, OsnnError

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _parser():
    from .config import TASKS
    p = argparse.ArgumentParser(prog="osnn", description="Optical subspace neural network toolkit")
    p.add_argument("task", choices=TASKS)
    p.add_argument("--config", help="JSON config file (dotted or nested keys)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1, reproducible)")
    return p


class Outputs:
    """Writes artifacts tagged with the config hash."""

    def __init__(self, cfg):
        self.dir = Path(cfg["out_dir"])
        self.dir.mkdir(parents=True, exist_ok=True)
        self.hash = cfg.hash()
        (self.dir / "config.json").write_text(cfg.to_json() + "\n")

    def json(self, name, payload):
        payload = dict(payload, config_hash=self.hash)
        path = self.dir / name
        path.write_text(json.dumps(payload, indent=1, sort_keys=True, default=_default) + "\n")
        return path

    def text(self, name, body):
        path = self.dir / name
        path.write_text(f"# config_hash={self.hash}\n{body}\n")
        return path


def _default(o):
    import numpy as np
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def _data(cfg, split):
    from .data import load_split
    d = load_split(split, cfg["data.dir"] or None)
    lim = cfg[f"data.{split}_limit"]
    return d.subset(lim) if lim > 0 else d


def _train_config(cfg):
    from ..photonics.variation import NoiseSpec
    from ..quant import QuantSpec
    from ..training.train import TrainConfig
    return TrainConfig(lr=cfg["train.lr"], momentum=cfg["train.momentum"], epochs=cfg["train.epochs"],
                       batch_size=cfg["train.batch_size"], lr_milestones=tuple(cfg["train.lr_milestones"]),
                       lr_decay=cfg["train.lr_decay"],
                       quant=QuantSpec(cfg["model.bits"], enabled=cfg["model.quantize"]),
                       noise=_noise(cfg), group_lambda=cfg["train.group_lambda"],
                       prune_tau=cfg["train.prune_tau"], prune_epochs=cfg["train.prune_epochs"], seed=cfg["seed"])


def _noise(cfg):
    from ..photonics.variation import NoiseSpec
    return NoiseSpec(cfg["noise.input_sigma"], cfg["noise.phase_drift_sigma"], cfg["noise.detector_sigma"])


def _model(cfg, required=False):
    from ..layers import Sequential, build_paper_model
    from ..quant import QuantSpec
    if cfg["model.checkpoint"]:
        return Sequential.load(cfg["model.checkpoint"])
    if required:
        raise ConfigError("this task needs a trained checkpoint", "model.checkpoint")
    return build_paper_model(cfg["model.k"], cfg["model.transform"],
                             QuantSpec(cfg["model.bits"], enabled=cfg["model.quantize"]), cfg["seed"])


def _chip(cfg, k):
    from ..photonics import ChipInstance, VariationModel
    if cfg["chip.path"]:
        return ChipInstance.load(cfg["chip.path"])
    var = VariationModel(cfg["chip.kappa_std"], cfg["chip.phase_offset_std"], cfg["chip.er_db"], cfg["chip.seed"])
    return ChipInstance(k, var, _noise(cfg), cfg["chip.layout"])


def _fit_dpe(cfg, chip, calibration, out):
    from ..photonics import sample_measurements
    from ..training.dpe import DpeModel, fit_dpe
    if cfg["dpe.path"]:
        return DpeModel.load(cfg["dpe.path"]), None
    samples = sample_measurements(chip, cfg["dpe.samples"], rng_seed=cfg["seed"])
    init = DpeModel(chip.k, er_eps=calibration.er_eps, ordering=chip.network.ordering)
    dpe, rep = fit_dpe(samples, init, epochs=cfg["dpe.epochs"], lr=cfg["dpe.lr"], seed=cfg["seed"])
    dpe.save(out.dir / "dpe.json")
    return dpe, rep


def _confusion(pred, labels, out):
    import numpy as np
    cm = np.zeros((10, 10), dtype=np.int64)
    np.add.at(cm, (labels, pred), 1)
    body = "true\\pred," + ",".join(str(i) for i in range(10)) + "\n"
    body += "\n".join(f"{i}," + ",".join(str(v) for v in cm[i]) for i in range(10))
    out.text("confusion.csv", body)
    return cm


def task_train(cfg, out):
    from ..training.calibration import calibrate_devices
    from ..training.train import format_metrics_csv, train
    model = _model(cfg)
    tc = _train_config(cfg)
    tr, te = _data(cfg, "train"), _data(cfg, "test")
    dpe = cal = None
    if cfg["train.backend"] == "dpe":
        chip = _chip(cfg, model.layers[0].k)
        cal = calibrate_devices(chip, cfg["chip.sweep_points"])
        dpe, _ = _fit_dpe(cfg, chip, cal, out)
    model, rows = train(model, tr, te, tc, cfg["train.backend"], dpe, cal)
    (out.dir / "metrics.csv").write_text(format_metrics_csv(rows, out.hash))
    model.save(out.dir / "checkpoint.json")
    out.json("report.json", {"task": "train", "train_config_hash": tc.hash(), "state_hash": model.state_hash(),
                             "final": rows[-1] if rows else None, "epochs": len(rows)})
    return 0


def task_eval(cfg, out):
    import numpy as np
    from ..training.noise import NoisyExecutor
    model = _model(cfg, required=True)
    te = _data(cfg, "test")
    noise = _noise(cfg)
    accs, preds = [], None
    for s in range(max(1, cfg["eval.noise_seeds"]) if not noise.is_zero else 1):
        ex = None if noise.is_zero else NoisyExecutor(noise, np.random.default_rng(cfg["seed"] + s))
        p = model.predict(te.images, ex).argmax(axis=1)
        preds = p if preds is None else preds
        accs.append(float(np.mean(p == te.labels)))
    cm = _confusion(preds, te.labels, out)
    out.json("report.json", {"task": "eval", "accuracy": float(np.mean(accs)), "accuracy_per_seed": accs,
                             "n": len(te), "confusion": cm, "noise": noise.to_dict()})
    return 0


def task_chip_eval(cfg, out):
    import numpy as np
    from ..training.calibration import calibrate_devices
    from ..training.deploy import evaluate_on_chip
    from ..training.dpe import DpeModel
    model = _model(cfg, required=True)
    chip = _chip(cfg, model.layers[0].k)
    chip.save(out.dir / "chip.json")
    te = _data(cfg, "test")
    if cfg["chip.subset"] > 0:
        te = te.subset(cfg["chip.subset"])
    cal = calibrate_devices(chip, cfg["chip.sweep_points"]) if cfg["chip.mapping"] == "calibrated" else None
    sign = None
    pre = cfg["chip.predistort"]
    if cfg["dpe.path"]:
        sign = DpeModel.load(cfg["dpe.path"]).params["att_sign_offset"]
        pre = False
    acc, pred = evaluate_on_chip(model, chip, te, cal, cfg["chip.mapping"], cfg["seed"], sign_offset=sign,
                                 predistort=pre, return_predictions=True)
    cm = _confusion(pred, te.labels, out)
    ideal = float(np.mean(model.predict(te.images).argmax(axis=1) == te.labels))
    out.json("report.json", {"task": "chip-eval", "accuracy": acc, "ideal_accuracy": ideal, "n": len(te),
                             "mapping": cfg["chip.mapping"], "confusion": cm})
    return 0


def task_prune(cfg, out):
    from ..cost import model_cost
    from ..training.prune import prune_sigma_groups
    from ..training.train import format_metrics_csv
    model = _model(cfg, required=True)
    tc = _train_config(cfg)
    m, mask, met = prune_sigma_groups(model, _data(cfg, "train"), _data(cfg, "test"), tc)
    (out.dir / "metrics.csv").write_text(format_metrics_csv(met["rows"], out.hash))
    m.save(out.dir / "checkpoint.json")
    out.json("mask.json", mask.to_dict())
    before = model_cost(model)["area_mm2"]
    after = model_cost(m, prune_mask=mask)["area_mm2"]
    rep = {key: v for key, v in met.items() if key != "rows"}
    rep.update(task="prune", area_before_mm2=before, area_after_mm2=after, area_reduction=1 - after / before)
    out.json("report.json", rep)
    return 0


def task_fidelity(cfg, out):
    from ..butterfly import ButterflyNetwork, configure_dft, configure_hadamard, transfer_matrix
    from ..butterfly.fit import expressivity_report, fidelity
    import numpy as np
    k = cfg["fidelity.k"]
    net = ButterflyNetwork(k)
    exact = {"dft": fidelity(transfer_matrix(ButterflyNetwork(k, "bit_reversed"), configure_dft(k)),
                             np.fft.fft(np.eye(k)) / np.sqrt(k)),
             "hadamard": fidelity(transfer_matrix(net, configure_hadamard(k)), _sylvester(k) / np.sqrt(k))}
    rep = expressivity_report(k, cfg["fidelity.targets"], seed=cfg["seed"], iterations=cfg["fidelity.iterations"],
                              restarts=cfg["fidelity.restarts"])
    out.json("report.json", {"task": "fidelity", "k": k, "closed_form": exact, "expressivity": rep})
    return 0


def _sylvester(k):
    import numpy as np
    H = np.ones((1, 1))
    while H.shape[0] < k:
        H = np.block([[H, H], [H, -H]])
    return H


def task_cost(cfg, out):
    from ..cost import ComponentLibrary, cost_report
    name = cfg["cost.library"]
    lib = ComponentLibrary.load(name) if name.endswith(".json") else ComponentLibrary.preset(name)
    rep = cost_report(cfg["cost.arch"], cfg["cost.m"], cfg["cost.n"], cfg["cost.k"], lib,
                      use_wdm=cfg["cost.wdm"], reconfig_rate=cfg["cost.reconfig_rate"])
    out.json("report.json", dict(rep.to_dict(), task="cost", consistent=rep.check()))
    out.text("report.txt", rep.table())
    return 0


def task_dpe_fit(cfg, out):
    from ..training.calibration import calibrate_devices
    from ..training.dpe import DpeModel, rmse
    from ..photonics import sample_measurements
    chip = _chip(cfg, cfg["model.k"])
    chip.save(out.dir / "chip.json")
    cal = calibrate_devices(chip, cfg["chip.sweep_points"])
    dpe, rep = _fit_dpe(cfg, chip, cal, out)
    check = sample_measurements(chip, 200, rng_seed=cfg["seed"] + 1)
    payload = {"task": "dpe-fit", "n_params": dpe.n_params, "fresh_rmse": rmse(dpe, check),
               "oracle_rmse": rmse(DpeModel.from_chip(chip), check)}
    if rep is not None:
        payload.update(train_rmse=rep.train_rmse, holdout_rmse=rep.holdout_rmse, epochs=rep.epochs)
    out.json("report.json", payload)
    return 0


def task_calibrate(cfg, out):
    from ..training.calibration import calibrate_devices
    chip = _chip(cfg, cfg["model.k"])
    chip.save(out.dir / "chip.json")
    cal = calibrate_devices(chip, cfg["chip.sweep_points"])
    out.json("calibration.json", cal.to_dict())
    out.json("report.json", {"task": "calibrate", "residual_rms": cal.residual_rms, "er_eps": cal.er_eps,
                             "n_attenuators": len(cal.curves)})
    return 0


TASK_FUNCS = {"train": task_train, "eval": task_eval, "chip-eval": task_chip_eval, "prune": task_prune,
              "fidelity": task_fidelity, "cost": task_cost, "dpe-fit": task_dpe_fit, "calibrate": task_calibrate}


def run(cfg):
    """Dispatch ``cfg['task']``; returns an exit code."""
    out = Outputs(cfg)
    return TASK_FUNCS[cfg["task"]](cfg, out)


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    for v in THREAD_VARS:
        os.environ.setdefault(v, str(args.threads))
    from .config import ExperimentConfig
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        over = {"task": args.task}
        if args.seed is not None:
            over["seed"] = args.seed
        if args.out is not None:
            over["out_dir"] = args.out
        cfg = cfg.with_overrides(**over)
        return run(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except OsnnError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
