"""Declarative experiment configuration.

One JSON document describes a full run: plant constants, input signal,
noise, both eDMD dictionaries, the deep-model architecture, and training
settings.  Loading is strict (unknown keys are rejected) and the document
round-trips losslessly, so a config file plus its SHA-256 hash pins an
experiment exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

__all__ = ["ConfigError", "RunConfig", "load_config", "save_config", "config_hash"]


class ConfigError(ValueError):
    """Invalid or malformed run configuration."""


@dataclass(frozen=True)
class RunConfig:
    name: str = "run"

    # plant
    k1: float = 0.015
    k2: float = 0.015
    F1: float = 1.0
    F2: float = 1.0
    Ts: float = 10.0
    tau_steps: int = 20
    x0: tuple[float, float] = (1.0, 1.0)

    # input signal and measurement noise
    samples: int = 400000
    q_min: float = 0.0
    q_max: float = 0.03
    hold_min: int = 50
    hold_max: int = 200
    signal_seed: int = 1
    noise_std: float = 0.1
    noise_seed: int = 2

    # eDMD dictionaries (known = sqrt terms included, unknown = without)
    edmd_degree: int = 2
    edmd_n_delays: int = 20
    edmd_ridge: float = 1e-8

    # deep Koopman architecture and training
    eta_H: int = 25
    N_L: int = 30
    window_stride: int = 1
    lstm_hidden: int = 8
    latent_dim: int = 40
    encoder_hidden: tuple[int, ...] = (60, 60)
    decoder_hidden: tuple[int, ...] = (60, 60)
    epochs: int = 1500
    batch_size: int = 100
    lr: float = 1e-3
    lr_decay: float = 1.0
    train_seed: int = 3
    loss_weights: tuple[float, float, float, float] = (0.0, 1.0, 10.0, 1.0)

    def __post_init__(self):
        checks = [
            (self.samples >= 2, "samples must be >= 2"),
            (self.Ts > 0, "Ts must be positive"),
            (self.tau_steps >= 0, "tau_steps must be >= 0"),
            (min(self.k1, self.k2) > 0, "k1, k2 must be positive"),
            (min(self.F1, self.F2) > 0, "F1, F2 must be positive"),
            (self.q_min <= self.q_max, "q_min must be <= q_max"),
            (1 <= self.hold_min <= self.hold_max, "need 1 <= hold_min <= hold_max"),
            (self.noise_std >= 0, "noise_std must be >= 0"),
            (self.edmd_degree >= 1, "edmd_degree must be >= 1"),
            (self.edmd_n_delays >= 0, "edmd_n_delays must be >= 0"),
            (self.edmd_ridge >= 0, "edmd_ridge must be >= 0"),
            (self.eta_H >= 1, "eta_H must be >= 1"),
            (self.N_L >= 1, "N_L must be >= 1"),
            (self.window_stride >= 1, "window_stride must be >= 1"),
            (self.lstm_hidden >= 1, "lstm_hidden must be >= 1"),
            (self.latent_dim >= 1, "latent_dim must be >= 1"),
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.lr > 0, "lr must be positive"),
            (0 < self.lr_decay <= 1, "lr_decay must be in (0, 1]"),
            (len(self.x0) == 2 and min(self.x0) >= 0, "x0 must be two nonnegative levels"),
            (len(self.loss_weights) == 4 and min(self.loss_weights) >= 0,
             "loss_weights must be four nonnegative numbers"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        # Frozen dataclass: coerce list-typed JSON values through object.__setattr__.
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        object.__setattr__(
            self, "encoder_hidden", tuple(int(v) for v in self.encoder_hidden)
        )
        object.__setattr__(
            self, "decoder_hidden", tuple(int(v) for v in self.decoder_hidden)
        )
        object.__setattr__(
            self, "loss_weights", tuple(float(v) for v in self.loss_weights)
        )

    def to_doc(self) -> dict:
        doc = dataclasses.asdict(self)
        for key in ("x0", "encoder_hidden", "decoder_hidden", "loss_weights"):
            doc[key] = list(doc[key])
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **kwargs) -> "RunConfig":
        return dataclasses.replace(self, **kwargs)


def load_config(path) -> RunConfig:
    try:
        with open(path) as f:
            doc = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if isinstance(doc, dict):
        stated = doc.pop("config_hash", None)
    else:
        stated = None
    cfg = RunConfig.from_doc(doc)
    if stated is not None and stated != config_hash(cfg):
        raise ConfigError(
            f"config file {path} carries hash {stated[:12]}... but its "
            "contents hash differently; the file was edited inconsistently"
        )
    return cfg


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as f:
        json.dump(cfg.to_doc(), f, indent=1)
        f.write("\n")


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 of the canonical JSON form of the resolved configuration."""
    blob = json.dumps(cfg.to_doc(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
