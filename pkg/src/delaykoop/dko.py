"""Deep Koopman model with an LSTM history encoder.

The model advances a latent vector linearly, z_{k+1} = A_K z_k + B_K u_k,
where z_k is produced by an MLP encoder applied to the current state
concatenated with the final hidden state of an LSTM run over the history
matrix (the last eta_H state/input samples, oldest first).  An MLP decoder
maps latent vectors back to states.

Training minimizes a four-term loss averaged over supervision windows:

    L = w_rec  * ||x_k - dec(enc(x_k, H_k))||^2
      + w_step * ||xhat_{k+1} - x_{k+1}||^2
      + w_pred * sum_{i=1..N_L} ||xhat_{k+i} - x_{k+i}||^2
      + w_lpred* sum_{i=1..N_L} ||zhat_{k+i} - enc(x_{k+i}, H_{k+i})||^2

with xhat/zhat produced by the linear latent rollout from z_k.  Gradients
flow through the latent-loss targets enc(x_{k+i}, H_{k+i}) as well; there
is no stop-gradient anywhere.  All arithmetic is float64 and all gradients
are exact (verified against central finite differences in the test suite).

Internally every quantity is normalized with the stored Normalizer; the
public encode/decode/rollout functions take and return physical units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dataset import Normalizer, SupervisionWindow, Trajectory

__all__ = [
    "LossWeights",
    "TrainConfig",
    "DeepKoopmanModel",
    "init_model",
    "parameters",
    "encode",
    "decode",
    "latent_rollout",
    "rollout",
    "window_loss",
    "batch_loss_and_grads",
    "finite_difference_check",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class LossWeights:
    """Weights of the four loss terms."""

    recon: float = 0.0
    step: float = 1.0
    pred: float = 10.0
    lpred: float = 1.0

    def __post_init__(self):
        if min(self.recon, self.step, self.pred, self.lpred) < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for `train`.

    N_L and eta_H, when given, are validated against the supplied windows
    and model.  clip, when set, caps the global gradient norm (a numerical
    guard only; off by default).
    """

    epochs: int
    batch_size: int = 100
    lr: float = 1e-3
    lr_decay: float = 1.0  # per-epoch multiplier; 1.0 keeps lr constant
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    N_L: int | None = None
    eta_H: int | None = None
    clip: float | None = None
    shuffle: bool = True
    grad_check: bool = True  # cheap finite-difference probe before epoch 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ValueError("lr_decay must be in (0, 1]")
        if self.N_L is not None and self.N_L < 1:
            raise ValueError("N_L must be >= 1")
        if self.eta_H is not None and self.eta_H < 1:
            raise ValueError("eta_H must be >= 1")
        if self.clip is not None and self.clip <= 0:
            raise ValueError("clip must be positive when set")


@dataclass
class DeepKoopmanModel:
    """Encoder/decoder networks, latent matrices, and the data normalizer."""

    lstm: nn.LstmParams
    encoder: nn.MlpParams
    decoder: nn.MlpParams
    A_K: np.ndarray
    B_K: np.ndarray
    normalizer: Normalizer
    eta_H: int

    def __post_init__(self):
        p = self.latent_dim
        self.A_K = np.asarray(self.A_K, dtype=np.float64)
        self.B_K = np.asarray(self.B_K, dtype=np.float64)
        if self.A_K.shape != (p, p):
            raise ValueError(f"A_K shape {self.A_K.shape} != ({p}, {p})")
        if self.B_K.shape != (p, self.n_inputs):
            raise ValueError(f"B_K shape {self.B_K.shape} != ({p}, {self.n_inputs})")
        if self.encoder.layers[0].W.shape[1] != self.n_states + self.lstm_hidden:
            raise ValueError("encoder input size != n_states + lstm hidden size")
        if self.decoder.layers[0].W.shape[1] != p:
            raise ValueError("decoder input size != latent dim")
        if self.eta_H < 1:
            raise ValueError("eta_H must be >= 1")

    @property
    def n_states(self) -> int:
        return self.decoder.layers[-1].W.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.lstm.W_i.shape[1] - self.n_states

    @property
    def lstm_hidden(self) -> int:
        return self.lstm.W_i.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.encoder.layers[-1].W.shape[0]


def init_model(
    rng: np.random.Generator,
    n_states: int = 2,
    n_inputs: int = 1,
    lstm_hidden: int = 8,
    encoder_hidden: tuple[int, ...] = (60, 60),
    decoder_hidden: tuple[int, ...] = (60, 60),
    latent_dim: int = 40,
    eta_H: int = 25,
    normalizer: Normalizer | None = None,
) -> DeepKoopmanModel:
    """Fresh model: every dense weight uniform +-1/sqrt(fan_in), LSTM
    forget bias 1.  A_K gets the same treatment as any dense layer; its
    spectral radius then starts well inside the unit circle, so early
    rollouts are contractive and training grows only the slow modes the
    data asks for.  (Identity-like inits start *on* the circle and drift
    outside it, which ruins long free-run rollouts.)
    """
    lstm = nn.init_lstm(n_states + n_inputs, lstm_hidden, rng)
    encoder = nn.init_mlp(
        [n_states + lstm_hidden, *encoder_hidden, latent_dim], rng
    )
    decoder = nn.init_mlp([latent_dim, *decoder_hidden, n_states], rng)
    bound = 1.0 / np.sqrt(latent_dim)
    A_K = rng.uniform(-bound, bound, size=(latent_dim, latent_dim))
    B_K = rng.uniform(-bound, bound, size=(latent_dim, n_inputs))
    if normalizer is None:
        normalizer = Normalizer.identity(n_states, n_inputs)
    return DeepKoopmanModel(
        lstm=lstm,
        encoder=encoder,
        decoder=decoder,
        A_K=A_K,
        B_K=B_K,
        normalizer=normalizer,
        eta_H=eta_H,
    )


def parameters(model: DeepKoopmanModel) -> dict[str, np.ndarray]:
    """Flat name -> array view of every trainable tensor (not copies)."""
    out: dict[str, np.ndarray] = {}
    for gate in ("i", "f", "g", "o"):
        out[f"lstm.W_{gate}"] = getattr(model.lstm, f"W_{gate}")
        out[f"lstm.U_{gate}"] = getattr(model.lstm, f"U_{gate}")
        out[f"lstm.b_{gate}"] = getattr(model.lstm, f"b_{gate}")
    for prefix, mlp in (("encoder", model.encoder), ("decoder", model.decoder)):
        for i, layer in enumerate(mlp.layers):
            out[f"{prefix}.{i}.W"] = layer.W
            out[f"{prefix}.{i}.b"] = layer.b
    out["A_K"] = model.A_K
    out["B_K"] = model.B_K
    return out


def _check_history(model: DeepKoopmanModel, history: np.ndarray) -> np.ndarray:
    history = np.asarray(history, dtype=np.float64)
    want = (model.n_states + model.n_inputs, model.eta_H)
    if history.shape != want:
        raise ValueError(f"history shape {history.shape} != {want}")
    return history


def _normalize_history(model: DeepKoopmanModel, history: np.ndarray) -> np.ndarray:
    n = model.n_states
    out = np.empty_like(history)
    out[:n] = model.normalizer.apply_states(history[:n])
    out[n:] = model.normalizer.apply_inputs(history[n:])
    return out


def encode(model: DeepKoopmanModel, x: np.ndarray, history: np.ndarray) -> np.ndarray:
    """Lift one physical state (n,) with its history matrix (n+m, eta_H)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != model.n_states:
        raise ValueError(f"state has {x.shape[0]} entries, model expects {model.n_states}")
    history = _normalize_history(model, _check_history(model, history))
    h, _, _ = nn.lstm_forward(model.lstm, history.T)
    xn = model.normalizer.apply_states(x[:, None])[:, 0]
    z, _ = nn.mlp_forward(model.encoder, np.concatenate([xn, h]))
    return z


def decode(model: DeepKoopmanModel, z: np.ndarray) -> np.ndarray:
    """Map latent vectors back to physical states; z is (p,) or (B, p)."""
    y, _ = nn.mlp_forward(model.decoder, np.asarray(z, dtype=np.float64))
    return model.normalizer.invert_states(y.T).T if y.ndim == 2 else (
        model.normalizer.invert_states(y[:, None])[:, 0]
    )


def latent_rollout(model: DeepKoopmanModel, z0: np.ndarray, Un: np.ndarray) -> np.ndarray:
    """Linear latent trajectory from z0 under normalized inputs Un (m, N).

    Returns (N+1, p) with row 0 = z0; affine in (z0, Un) by construction.
    """
    z = np.asarray(z0, dtype=np.float64)
    Un = np.atleast_2d(np.asarray(Un, dtype=np.float64))
    N = Un.shape[1]
    Z = np.empty((N + 1, model.latent_dim))
    Z[0] = z
    for k in range(N):
        z = model.A_K @ z + model.B_K @ Un[:, k]
        Z[k + 1] = z
    return Z


def rollout(
    model: DeepKoopmanModel,
    x0: np.ndarray,
    history: np.ndarray,
    U: np.ndarray,
) -> np.ndarray:
    """Open-loop prediction: encode once, apply the linear latent dynamics
    over the input sequence U (m, N), decode every latent vector.

    Returns physical states (n, N+1); column 0 is the decoded
    reconstruction of x0.
    """
    U = np.atleast_2d(np.asarray(U, dtype=np.float64))
    if U.shape[0] != model.n_inputs:
        raise ValueError(f"input rows {U.shape[0]} != {model.n_inputs}")
    Un = model.normalizer.apply_inputs(U)
    Z = latent_rollout(model, encode(model, x0, history), Un)
    y, _ = nn.mlp_forward(model.decoder, Z)
    return model.normalizer.invert_states(y.T)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def window_loss(
    model: DeepKoopmanModel,
    window: SupervisionWindow,
    weights: LossWeights = LossWeights(),
) -> tuple[float, dict[str, float]]:
    """Reference (unbatched) loss of one supervision window.

    Returns (total, components) where components holds the unweighted
    values of the four terms.  Raises if the latent term is active but the
    window was built without extended histories.
    """
    if weights.lpred > 0 and window.extended_histories is None:
        raise ValueError(
            "latent prediction loss needs extended histories; build windows "
            "with with_extended_histories=True"
        )
    total, comps, _ = _batched_loss(model, _batch_from_windows(model, [window]), weights)
    return total, comps


class _Batch:
    """Normalized arrays for a batch of windows (row-major layouts)."""

    __slots__ = ("H", "Xrows", "U", "Xfut", "B", "N_L")

    def __init__(self, H, Xrows, U, Xfut, B, N_L):
        self.H = H          # (B*(N_L+1), eta_H, n+m) histories at k, k+1, ..
        self.Xrows = Xrows  # (B*(N_L+1), n) states at the same samples
        self.U = U          # (B, N_L, m) inputs driving the rollout
        self.Xfut = Xfut    # (B, N_L, n) target states
        self.B = B
        self.N_L = N_L


def _normalized_trajectory_arrays(
    model: DeepKoopmanModel, traj: Trajectory
) -> tuple[np.ndarray, np.ndarray]:
    return (
        model.normalizer.apply_states(traj.X),
        model.normalizer.apply_inputs(traj.U),
    )


def _history_rows(Xn, Un, anchors, eta_H):
    """(R, eta_H, n+m) history tensor; row r covers samples
    anchors[r]-eta_H .. anchors[r]-1, oldest first."""
    n, m = Xn.shape[0], Un.shape[0]
    cols = anchors[:, None] + np.arange(-eta_H, 0)[None, :]
    out = np.empty((anchors.shape[0], eta_H, n + m))
    out[:, :, :n] = Xn[:, cols].transpose(1, 2, 0)
    out[:, :, n:] = Un[:, cols].transpose(1, 2, 0)
    return out


def _batch_from_windows(
    model: DeepKoopmanModel,
    windows: list[SupervisionWindow],
    cache: dict | None = None,
) -> _Batch:
    eta_H = windows[0].eta_H
    N_L = windows[0].N_L
    if eta_H != model.eta_H:
        raise ValueError(f"window eta_H {eta_H} != model eta_H {model.eta_H}")
    if cache is None:
        cache = {}
    per = []
    for w in windows:
        if w.eta_H != eta_H or w.N_L != N_L:
            raise ValueError("all windows in a batch must share eta_H and N_L")
        key = id(w.traj)
        if key not in cache:
            cache[key] = _normalized_trajectory_arrays(model, w.traj)
        Xn, Un = cache[key]
        anchors = w.k + np.arange(N_L + 1)
        per.append(
            (
                _history_rows(Xn, Un, anchors, eta_H),
                Xn[:, anchors].T,
                Un[:, w.k : w.k + N_L].T,
                Xn[:, w.k + 1 : w.k + N_L + 1].T,
            )
        )
    B = len(windows)
    H = np.concatenate([p[0] for p in per], axis=0)
    Xrows = np.concatenate([p[1] for p in per], axis=0)
    U = np.stack([p[2] for p in per], axis=0)
    Xfut = np.stack([p[3] for p in per], axis=0)
    return _Batch(H, Xrows, U, Xfut, B, N_L)


def _batch_from_arrays(
    model: DeepKoopmanModel, Xn: np.ndarray, Un: np.ndarray, ks: np.ndarray, N_L: int
) -> _Batch:
    """Fast path used by train(): every window comes from one normalized
    trajectory and is identified by its anchor sample."""
    eta_H = model.eta_H
    B = ks.shape[0]
    anchors = (ks[:, None] + np.arange(N_L + 1)[None, :]).ravel()
    H = _history_rows(Xn, Un, anchors, eta_H)
    Xrows = Xn[:, anchors].T
    ucols = ks[:, None] + np.arange(N_L)[None, :]
    U = Un[:, ucols].transpose(1, 2, 0)
    Xfut = Xn[:, ucols + 1].transpose(1, 2, 0)
    return _Batch(H, np.ascontiguousarray(Xrows), U, Xfut, B, N_L)


def _batched_loss(model, batch: _Batch, weights, with_grads: bool = False):
    """Loss (and optionally exact gradients) of a batch, averaged over windows."""
    B, N_L = batch.B, batch.N_L
    n, p = model.n_states, model.latent_dim

    h, _, lstm_cache = nn.lstm_forward(model.lstm, batch.H)
    enc_in = np.concatenate([batch.Xrows, h], axis=1)
    Zall, enc_cache = nn.mlp_forward(model.encoder, enc_in)
    Zr = Zall.reshape(B, N_L + 1, p)
    z0 = Zr[:, 0]
    ztgt = Zr[:, 1:]

    # Linear latent rollout from z0 under the window's inputs.
    Zs = np.empty((B, N_L + 1, p))
    Zs[:, 0] = z0
    for i in range(1, N_L + 1):
        Zs[:, i] = Zs[:, i - 1] @ model.A_K.T + batch.U[:, i - 1] @ model.B_K.T

    dec_in = np.concatenate([z0, Zs[:, 1:].reshape(B * N_L, p)], axis=0)
    dec_out, dec_cache = nn.mlp_forward(model.decoder, dec_in)
    recon_hat = dec_out[:B]
    pred_hat = dec_out[B:].reshape(B, N_L, n)

    x_k = batch.Xrows.reshape(B, N_L + 1, n)[:, 0]
    r_rec = recon_hat - x_k
    r_pred = pred_hat - batch.Xfut
    r_lat = Zs[:, 1:] - ztgt
    comps = {
        "recon": float((r_rec * r_rec).sum() / B),
        "step": float((r_pred[:, 0] * r_pred[:, 0]).sum() / B),
        "pred": float((r_pred * r_pred).sum() / B),
        "lpred": float((r_lat * r_lat).sum() / B),
    }
    total = (
        weights.recon * comps["recon"]
        + weights.step * comps["step"]
        + weights.pred * comps["pred"]
        + weights.lpred * comps["lpred"]
    )
    if not with_grads:
        return total, comps, None

    d_pred = (2.0 * weights.pred / B) * r_pred
    d_pred[:, 0] += (2.0 * weights.step / B) * r_pred[:, 0]
    d_recon = (2.0 * weights.recon / B) * r_rec
    d_dec_out = np.concatenate([d_recon, d_pred.reshape(B * N_L, n)], axis=0)
    d_dec_in, dec_grads = nn.mlp_backward(model.decoder, dec_cache, d_dec_out)

    d_zhat = d_dec_in[B:].reshape(B, N_L, p)
    d_zhat += (2.0 * weights.lpred / B) * r_lat
    d_ztgt = (-2.0 * weights.lpred / B) * r_lat

    # Backpropagation through the latent rollout.
    dA = np.zeros_like(model.A_K)
    dB = np.zeros_like(model.B_K)
    g = np.zeros((B, p))
    for i in range(N_L, 0, -1):
        g += d_zhat[:, i - 1]
        dA += g.T @ Zs[:, i - 1]
        dB += g.T @ batch.U[:, i - 1]
        g = g @ model.A_K

    d_Zall = np.empty((B, N_L + 1, p))
    d_Zall[:, 0] = d_dec_in[:B] + g
    d_Zall[:, 1:] = d_ztgt
    d_enc_in, enc_grads = nn.mlp_backward(
        model.encoder, enc_cache, d_Zall.reshape(B * (N_L + 1), p)
    )
    _, lstm_grads = nn.lstm_backward(model.lstm, lstm_cache, d_enc_in[:, n:])

    grads: dict[str, np.ndarray] = {}
    for name, arr in lstm_grads.items():
        grads[f"lstm.{name}"] = arr
    for prefix, mg in (("encoder", enc_grads), ("decoder", dec_grads)):
        for i, (dW, db) in enumerate(mg):
            grads[f"{prefix}.{i}.W"] = dW
            grads[f"{prefix}.{i}.b"] = db
    grads["A_K"] = dA
    grads["B_K"] = dB
    return total, comps, grads


def batch_loss_and_grads(
    model: DeepKoopmanModel,
    windows: list[SupervisionWindow],
    weights: LossWeights = LossWeights(),
) -> tuple[float, dict[str, float], dict[str, np.ndarray]]:
    """Mean loss over the windows and exact gradients for every parameter."""
    if not windows:
        raise ValueError("empty window batch")
    if weights.lpred > 0 and any(w.extended_histories is None for w in windows):
        raise ValueError(
            "latent prediction loss needs extended histories; build windows "
            "with with_extended_histories=True"
        )
    return _batched_loss(model, _batch_from_windows(model, windows), weights, True)


def finite_difference_check(
    model: DeepKoopmanModel,
    windows: list[SupervisionWindow],
    weights: LossWeights = LossWeights(),
    n_probes: int = 5,
    rng: np.random.Generator | None = None,
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients
    at `n_probes` random parameter entries per tensor."""
    if rng is None:
        rng = np.random.default_rng(0)
    params = parameters(model)
    batch = _batch_from_windows(model, windows)
    _, _, grads = _batched_loss(model, batch, weights, True)

    def loss_fn():
        total, _, _ = _batched_loss(model, batch, weights)
        return total

    worst = 0.0
    for name, arr in params.items():
        flat = arr.reshape(-1)
        for j in rng.choice(flat.size, size=min(n_probes, flat.size), replace=False):
            num = nn.central_difference(loss_fn, flat, int(j), step)
            ana = grads[name].reshape(-1)[int(j)]
            denom = max(abs(num), abs(ana), 1e-6)
            worst = max(worst, abs(num - ana) / denom)
    return worst


def train(
    model: DeepKoopmanModel,
    windows: list[SupervisionWindow],
    config: TrainConfig,
    callback=None,
) -> list[dict[str, float]]:
    """Minibatch Adam over the supervision windows.

    Shuffles with an epoch-keyed seeded generator, so a given (seed, epoch)
    always visits windows in the same order.  Returns one record per epoch
    with the mean weighted loss and unweighted components; `callback`, if
    given, is invoked with each record as it is produced.  Aborts with
    ArithmeticError if the loss turns non-finite.
    """
    if not windows:
        raise ValueError("no supervision windows to train on")
    weights = config.weights
    if weights.lpred > 0 and any(w.extended_histories is None for w in windows):
        raise ValueError(
            "latent prediction loss needs extended histories; build windows "
            "with with_extended_histories=True"
        )
    N_L = windows[0].N_L
    if config.N_L is not None and config.N_L != N_L:
        raise ValueError(f"config N_L {config.N_L} != window N_L {N_L}")
    if config.eta_H is not None and config.eta_H != model.eta_H:
        raise ValueError(f"config eta_H {config.eta_H} != model eta_H {model.eta_H}")
    trajs: list[Trajectory] = []
    traj_index: dict[int, int] = {}
    ks = np.empty(len(windows), dtype=np.int64)
    tidx = np.empty(len(windows), dtype=np.int64)
    for i, w in enumerate(windows):
        if w.eta_H != model.eta_H or w.N_L != N_L:
            raise ValueError("all windows must share the model eta_H and one N_L")
        key = id(w.traj)
        if key not in traj_index:
            traj_index[key] = len(trajs)
            trajs.append(w.traj)
        ks[i] = w.k
        tidx[i] = traj_index[key]
    arrays = [_normalized_trajectory_arrays(model, t) for t in trajs]

    params = parameters(model)
    adam = nn.init_adam(params, lr=config.lr)

    if config.grad_check:
        probe = windows[: min(4, len(windows))]
        err = finite_difference_check(
            model, probe, weights, n_probes=2, rng=np.random.default_rng(0)
        )
        if err > 1e-4:
            raise ArithmeticError(
                f"gradient self-check failed before training: relative error {err:.3e}"
            )

    W = len(windows)
    history: list[dict[str, float]] = []
    for epoch in range(config.epochs):
        adam.lr = config.lr * config.lr_decay**epoch
        if config.shuffle:
            order = np.random.default_rng([config.seed, 1, epoch]).permutation(W)
        else:
            order = np.arange(W)
        sum_total = 0.0
        sums = {"recon": 0.0, "step": 0.0, "pred": 0.0, "lpred": 0.0}
        for start in range(0, W, config.batch_size):
            sel = order[start : start + config.batch_size]
            groups = tidx[sel]
            parts_total = 0.0
            # Group by source trajectory so each batch is one array pass.
            grads_acc: dict[str, np.ndarray] | None = None
            for g in np.unique(groups):
                rows = sel[groups == g]
                Xn, Un = arrays[g]
                batch = _batch_from_arrays(model, Xn, Un, ks[rows], N_L)
                total, comps, grads = _batched_loss(model, batch, weights, True)
                frac = rows.size / sel.size
                parts_total += frac * total
                for c in sums:
                    sums[c] += comps[c] * rows.size
                if grads_acc is None:
                    grads_acc = grads
                    if frac != 1.0:
                        for arr in grads_acc.values():
                            arr *= frac
                else:
                    for name in grads_acc:
                        grads_acc[name] += frac * grads[name]
            if not np.isfinite(parts_total):
                raise ArithmeticError(
                    f"non-finite loss at epoch {epoch}, window offset {start}; "
                    "reduce the learning rate or check the data for NaNs"
                )
            if config.clip is not None:
                gnorm = np.sqrt(sum(float((g * g).sum()) for g in grads_acc.values()))
                if gnorm > config.clip:
                    scale = config.clip / gnorm
                    for g in grads_acc.values():
                        g *= scale
            nn.adam_step(params, grads_acc, adam)
            sum_total += parts_total * sel.size
        record = {"epoch": float(epoch), "loss": sum_total / W}
        for c in sums:
            record[c] = sums[c] / W
        history.append(record)
        if callback is not None:
            callback(record)
    return history


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

DKO_FORMAT = "delaykoop-dko"
DKO_VERSION = 1


def checkpoint_doc(model: DeepKoopmanModel, extra: dict | None = None) -> dict:
    doc = {
        "format": DKO_FORMAT,
        "version": DKO_VERSION,
        "arch": {
            "n_states": model.n_states,
            "n_inputs": model.n_inputs,
            "lstm_hidden": model.lstm_hidden,
            "encoder_sizes": [lay.W.shape[1] for lay in model.encoder.layers]
            + [model.latent_dim],
            "decoder_sizes": [lay.W.shape[1] for lay in model.decoder.layers]
            + [model.n_states],
            "latent_dim": model.latent_dim,
            "eta_H": model.eta_H,
        },
        "normalizer": model.normalizer.to_doc(),
        "params": nn.params_to_doc(parameters(model)),
    }
    if extra:
        doc["meta"] = extra
    return doc


def model_from_checkpoint_doc(doc: dict) -> DeepKoopmanModel:
    if doc.get("format") != DKO_FORMAT or doc.get("version") != DKO_VERSION:
        raise ValueError(
            f"unsupported checkpoint {doc.get('format')!r} v{doc.get('version')!r}"
        )
    arch = doc["arch"]
    model = init_model(
        np.random.default_rng(0),
        n_states=arch["n_states"],
        n_inputs=arch["n_inputs"],
        lstm_hidden=arch["lstm_hidden"],
        encoder_hidden=tuple(arch["encoder_sizes"][1:-1]),
        decoder_hidden=tuple(arch["decoder_sizes"][1:-1]),
        latent_dim=arch["latent_dim"],
        eta_H=arch["eta_H"],
        normalizer=Normalizer.from_doc(doc["normalizer"]),
    )
    stored = nn.params_from_doc(doc["params"])
    params = parameters(model)
    if set(stored) != set(params):
        raise ValueError("checkpoint parameter names do not match the architecture")
    for name, arr in stored.items():
        if arr.shape != params[name].shape:
            raise ValueError(f"checkpoint tensor {name} has shape {arr.shape}, "
                             f"expected {params[name].shape}")
        params[name][...] = arr
    return model


def save_checkpoint(model: DeepKoopmanModel, path, extra: dict | None = None) -> None:
    with open(path, "w") as f:
        json.dump(checkpoint_doc(model, extra), f, indent=1)
        f.write("\n")


def load_checkpoint(path) -> DeepKoopmanModel:
    with open(path) as f:
        return model_from_checkpoint_doc(json.load(f))
