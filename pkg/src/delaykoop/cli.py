"""Command-line pipeline: simulate data, fit models, evaluate, report.

    delaykoop simulate --config desk.cfg --out runs/desk
    delaykoop train    --config desk.cfg --out runs/desk --family dko
    delaykoop evaluate --config desk.cfg --out runs/desk
    delaykoop run      --config desk.cfg --out runs/desk

Every command is deterministic for a fixed config: identical invocations
produce byte-identical files.  Outputs carry the SHA-256 hash of the
resolved configuration, and manifest.json lists a checksum for every file
written.  Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import dko as dko_mod
from . import edmd as edmd_mod
from . import evaluation, report
from .config import ConfigError, RunConfig, config_hash, load_config
from .dataset import Trajectory, fit_normalizer, make_windows, split_train_test
from .sim import TankParams, add_noise, generate_random_input, simulate

__all__ = ["main", "DataError"]

FAMILIES = ("edmd-known", "edmd-unknown", "dko")


class DataError(RuntimeError):
    """Missing or inconsistent datasets/checkpoints."""


def _resolve_config(args) -> tuple[RunConfig, str]:
    cfg = load_config(args.config) if args.config else RunConfig()
    over = {}
    if getattr(args, "seed", None) is not None:
        over.update(
            signal_seed=args.seed, noise_seed=args.seed + 1, train_seed=args.seed + 2
        )
    if getattr(args, "samples", None) is not None:
        over["samples"] = args.samples
    if getattr(args, "epochs", None) is not None:
        over["epochs"] = args.epochs
    if over:
        try:
            cfg = cfg.replace(**over)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg, config_hash(cfg)


def _tank_params(cfg: RunConfig) -> TankParams:
    return TankParams(
        k1=cfg.k1, k2=cfg.k2, F1=cfg.F1, F2=cfg.F2,
        tau_steps=cfg.tau_steps, Ts=cfg.Ts,
    )


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def _update_manifest(out: Path, cfg: RunConfig, chash: str, new_files: list[Path]):
    """Merge checksums of newly written files into manifest.json."""
    mpath = out / "manifest.json"
    doc = {"config_hash": chash, "name": cfg.name, "files": {}}
    if mpath.exists():
        with open(mpath) as f:
            old = json.load(f)
        if old.get("config_hash") != chash:
            raise DataError(
                f"{out} holds outputs for config {old.get('config_hash')[:12]}..., "
                f"current config is {chash[:12]}...; use a fresh --out directory"
            )
        doc["files"] = old.get("files", {})
    doc["seeds"] = {
        "signal": cfg.signal_seed, "noise": cfg.noise_seed, "train": cfg.train_seed
    }
    for path in new_files:
        doc["files"][str(path.relative_to(out))] = _sha256(path)
    doc["files"] = dict(sorted(doc["files"].items()))
    _write_json(mpath, doc)


def _save_config_copy(out: Path, cfg: RunConfig, chash: str) -> Path:
    path = out / "config.json"
    doc = cfg.to_doc()
    doc["config_hash"] = chash
    _write_json(path, doc)
    return path


def _load_split(out: Path, kind: str) -> Trajectory:
    path = out / "data" / f"{kind}.csv"
    if not path.exists():
        raise DataError(f"{path} not found; run the simulate command first")
    try:
        return Trajectory.load_csv(path)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def cmd_simulate(args) -> int:
    cfg, chash = _resolve_config(args)
    out = Path(args.out)
    (out / "data").mkdir(parents=True, exist_ok=True)
    params = _tank_params(cfg)
    signal = generate_random_input(
        cfg.signal_seed, cfg.samples,
        q_min=cfg.q_min, q_max=cfg.q_max,
        hold_min=cfg.hold_min, hold_max=cfg.hold_max,
    )
    clean = simulate(params, signal, x0=cfg.x0)
    noisy = add_noise(clean, cfg.noise_std, cfg.noise_seed)
    comment = f"config_hash={chash}"
    written = [_save_config_copy(out, cfg, chash)]
    for label, traj in (("clean", clean), ("noisy", noisy)):
        train, test = split_train_test(traj)
        for kind, part in (("train", train), ("test", test)):
            path = out / "data" / f"{kind}_{label}.csv"
            part.save_csv(path, header_comment=comment)
            written.append(path)
    _update_manifest(out, cfg, chash, written)
    print(f"simulated {cfg.samples} samples at Ts={cfg.Ts} s, "
          f"input delay {cfg.tau_steps} samples")
    print(f"noise std {cfg.noise_std}, split 50:50 "
          f"({split_train_test(noisy)[0].n_samples} train samples)")
    for path in written:
        print(f"wrote {path}")
    return 0


def _train_edmd(cfg: RunConfig, chash: str, out: Path, family: str) -> list[Path]:
    train = _load_split(out, "train_noisy")
    spec = edmd_mod.DictionarySpec(
        degree=cfg.edmd_degree,
        include_sqrt=(family == "edmd-known"),
        n_delays=cfg.edmd_n_delays,
        n_states=train.n_states,
        n_inputs=train.n_inputs,
    )
    model = edmd_mod.fit_trajectory(
        train, spec, ridge=cfg.edmd_ridge, clamp_negative=True
    )
    p = edmd_mod.lifted_dim(spec)
    print(f"{family}: lifted dimension {p}, ridge {cfg.edmd_ridge}, "
          f"one-step lifted residual {model.residual:.6f}")
    path = out / "models" / f"{family.replace('-', '_')}.json"
    edmd_mod.save_model(model, path, extra={"config_hash": chash, "family": family})
    return [path]


def _train_dko(cfg: RunConfig, chash: str, out: Path) -> list[Path]:
    train = _load_split(out, "train_noisy")
    windows = make_windows(
        train, eta_H=cfg.eta_H, N_L=cfg.N_L, stride=cfg.window_stride
    )
    if not windows:
        raise DataError(
            f"training split too short for eta_H={cfg.eta_H}, N_L={cfg.N_L}"
        )
    normalizer = fit_normalizer(train)
    model = dko_mod.init_model(
        np.random.default_rng([cfg.train_seed, 0]),
        n_states=train.n_states,
        n_inputs=train.n_inputs,
        lstm_hidden=cfg.lstm_hidden,
        encoder_hidden=cfg.encoder_hidden,
        decoder_hidden=cfg.decoder_hidden,
        latent_dim=cfg.latent_dim,
        eta_H=cfg.eta_H,
        normalizer=normalizer,
    )
    print(f"dko: A_K {model.latent_dim}x{model.latent_dim}, "
          f"B_K {model.latent_dim}x{model.n_inputs}, "
          f"{len(windows)} windows (stride {cfg.window_stride})")
    tc = dko_mod.TrainConfig(
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        lr=cfg.lr,
        lr_decay=cfg.lr_decay,
        seed=cfg.train_seed,
        weights=dko_mod.LossWeights(*cfg.loss_weights),
        N_L=cfg.N_L,
        eta_H=cfg.eta_H,
    )
    interval = max(1, cfg.epochs // 20)

    def progress(rec):
        e = int(rec["epoch"])
        if e % interval == 0 or e == cfg.epochs - 1:
            print(f"epoch {e:5d}  loss {rec['loss']:.6f}  "
                  f"step {rec['step']:.6f}  pred {rec['pred']:.6f}  "
                  f"lpred {rec['lpred']:.6f}")

    history = dko_mod.train(model, windows, tc, callback=progress)
    mdir = out / "models"
    mdir.mkdir(parents=True, exist_ok=True)
    cpath = mdir / "dko.json"
    extra = {"config_hash": chash, "family": "dko", "epochs": cfg.epochs}
    if history:
        extra["final_loss"] = history[-1]["loss"]
    dko_mod.save_checkpoint(model, cpath, extra=extra)
    lpath = mdir / "dko_train_log.csv"
    with open(lpath, "w") as f:
        f.write(f"# config_hash={chash}\n")
        f.write("epoch,loss,recon,step,pred,lpred\n")
        for rec in history:
            f.write(
                f"{int(rec['epoch'])},{rec['loss']!r},{rec['recon']!r},"
                f"{rec['step']!r},{rec['pred']!r},{rec['lpred']!r}\n"
            )
    return [cpath, lpath]


def cmd_train(args) -> int:
    cfg, chash = _resolve_config(args)
    out = Path(args.out)
    if args.family not in FAMILIES:
        raise ConfigError(
            f"unknown family {args.family!r}; choose from {', '.join(FAMILIES)}"
        )
    (out / "models").mkdir(parents=True, exist_ok=True)
    if args.family == "dko":
        written = _train_dko(cfg, chash, out)
    else:
        written = _train_edmd(cfg, chash, out, args.family)
    _update_manifest(out, cfg, chash, written)
    for path in written:
        print(f"wrote {path}")
    return 0


def _load_models(out: Path) -> dict:
    models = {}
    path = out / "models" / "dko.json"
    if path.exists():
        try:
            models["dko"] = dko_mod.load_checkpoint(path)
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from exc
    for family in ("edmd-known", "edmd-unknown"):
        path = out / "models" / f"{family.replace('-', '_')}.json"
        if path.exists():
            try:
                models[family.replace("-", "_")] = edmd_mod.load_model(path)
            except ValueError as exc:
                raise DataError(f"{path}: {exc}") from exc
    if not models:
        raise DataError(f"no model checkpoints under {out / 'models'}; train first")
    return models


def cmd_evaluate(args) -> int:
    cfg, chash = _resolve_config(args)
    out = Path(args.out)
    test_noisy = _load_split(out, "test_noisy")
    test_clean = _load_split(out, "test_clean")
    models = _load_models(out)
    rep, preds = evaluation.evaluate(
        models, test_noisy, test_clean,
        tank_params=_tank_params(cfg), operating_levels=(1.0, 1.0),
    )
    rdir = out / "report"
    rdir.mkdir(parents=True, exist_ok=True)
    t = test_noisy.t[rep.start :]
    written = []

    path = rdir / "metrics.csv"
    report.write_metrics_csv(path, rep.metric_rows(), config_hash=chash)
    written.append(path)
    path = rdir / "rollout.csv"
    report.write_rollout_csv(path, t, preds, config_hash=chash)
    written.append(path)
    path = rdir / "eigs.csv"
    report.write_eigs_csv(path, rep.eig_sets, config_hash=chash)
    written.append(path)
    path = rdir / "rollout.svg"
    report.plot_rollout_svg(path, t, preds, config_hash=chash)
    written.append(path)
    path = rdir / "eigs.svg"
    report.plot_eigs_svg(path, rep.eig_sets, config_hash=chash)
    written.append(path)
    path = rdir / "report.json"
    doc = rep.to_doc()
    doc["config_hash"] = chash
    _write_json(path, doc)
    written.append(path)

    _update_manifest(out, cfg, chash, written)
    print(f"warm-up start {rep.start}, {rep.n_predicted} predicted samples")
    print(f"{'model':14s} {'MAE [m]':>10s} {'MAE [%]':>9s}")
    for name in sorted(rep.maes):
        print(f"{name:14s} {rep.maes[name]:10.4f} {rep.mae_pct[name]:8.1f}%")
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_run(args) -> int:
    for step in (cmd_simulate, _run_all_train, cmd_evaluate):
        code = step(args)
        if code:
            return code
    return 0


def _run_all_train(args) -> int:
    for family in FAMILIES:
        sub = argparse.Namespace(**vars(args))
        sub.family = family
        code = cmd_train(sub)
        if code:
            return code
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delaykoop",
        description="Koopman surrogate models of a delayed two-tank plant: "
                    "simulate, fit eDMD and deep-Koopman models, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, family=False):
        p.add_argument("--config", help="JSON run configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override all seeds "
                       "(signal=N, noise=N+1, train=N+2)")
        p.add_argument("--samples", type=int, help="override sample count")
        p.add_argument("--epochs", type=int, help="override training epochs")
        if family:
            p.add_argument("--family", required=True,
                           help=f"model family: {', '.join(FAMILIES)}")

    p = sub.add_parser("simulate", help="generate clean and noisy datasets")
    common(p)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("train", help="fit one model family")
    common(p, family=True)
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("evaluate", help="score trained models on the test split")
    common(p)
    p.set_defaults(func=cmd_evaluate)
    p = sub.add_parser("run", help="simulate, train all families, evaluate")
    common(p)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
