"""Minimal dense neural-network core.

Float64 throughout: MLP and LSTM forward passes with caches, hand-derived
exact backward passes (including backpropagation through time), and the
Adam optimizer.  Shapes are validated on entry; there is no silent
broadcasting.  All forward/backward code is deterministic for fixed inputs.

Parameters are plain numpy arrays grouped in small dataclasses; optimizers
and serialization work over flat ``{name: array}`` dictionaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

__all__ = [
    "DenseLayer",
    "MlpParams",
    "LstmParams",
    "AdamState",
    "init_mlp",
    "init_lstm",
    "mlp_forward",
    "mlp_backward",
    "lstm_forward",
    "lstm_backward",
    "init_adam",
    "adam_step",
    "params_to_doc",
    "params_from_doc",
    "central_difference",
]

_ACTIVATIONS = ("elu", "linear")


def _elu(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))


def _elu_grad_from_output(z: np.ndarray, a: np.ndarray) -> np.ndarray:
    # d elu/dz = 1 for z > 0, exp(z) = a + 1 otherwise
    return np.where(z > 0, 1.0, a + 1.0)


@dataclass
class DenseLayer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: str = "linear"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64).ravel()
        if self.W.ndim != 2 or self.b.shape[0] != self.W.shape[0]:
            raise ValueError(f"inconsistent layer shapes W{self.W.shape} b{self.b.shape}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class MlpParams:
    """Ordered dense layers; the output layer must be linear."""

    layers: list[DenseLayer]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("MLP needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.W.shape[1] != prev.W.shape[0]:
                raise ValueError("adjacent layer dimensions do not chain")
        if self.layers[-1].activation != "linear":
            raise ValueError("output layer activation must be linear")

    @property
    def input_size(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def output_size(self) -> int:
        return self.layers[-1].W.shape[0]


def init_mlp(sizes: list[int], rng: np.random.Generator, hidden_activation: str = "elu") -> MlpParams:
    """Layers sized per `sizes`; weights and biases uniform in
    [-1/sqrt(fan_in), +1/sqrt(fan_in)]; hidden activations as given, linear output.
    """
    if len(sizes) < 2:
        raise ValueError("sizes must list at least input and output width")
    layers = []
    for li, (d_in, d_out) in enumerate(zip(sizes, sizes[1:])):
        bound = 1.0 / np.sqrt(d_in)
        act = hidden_activation if li < len(sizes) - 2 else "linear"
        layers.append(
            DenseLayer(
                W=rng.uniform(-bound, bound, size=(d_out, d_in)),
                b=rng.uniform(-bound, bound, size=d_out),
                activation=act,
            )
        )
    return MlpParams(layers)


def mlp_forward(params: MlpParams, x: np.ndarray):
    """Affine + activation chain.  Accepts (in,) or (B, in); returns the
    matching rank plus a cache sufficient for the exact backward pass.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != params.input_size:
        raise ValueError(f"input shape {x.shape} does not match MLP input size {params.input_size}")
    cache = {"inputs": [], "pre": [], "post": [], "single": single}
    A = X
    for layer in params.layers:
        cache["inputs"].append(A)
        Z = A @ layer.W.T + layer.b
        if layer.activation == "elu":
            A = _elu(Z)
        else:
            A = Z
        cache["pre"].append(Z)
        cache["post"].append(A)
    out = A[0] if single else A
    return out, cache


def mlp_backward(params: MlpParams, cache: dict, d_out: np.ndarray):
    """Gradients of a scalar loss given d(loss)/d(output).

    Returns (d_input, grads) where grads is a list of (dW, db) per layer.
    """
    d_out = np.asarray(d_out, dtype=np.float64)
    dA = d_out[None, :] if cache["single"] else d_out
    if dA.shape != cache["post"][-1].shape:
        raise ValueError(f"d_out shape {d_out.shape} does not match forward output")
    grads = [None] * len(params.layers)
    for li in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[li]
        if layer.activation == "elu":
            dZ = dA * _elu_grad_from_output(cache["pre"][li], cache["post"][li])
        else:
            dZ = dA
        grads[li] = (dZ.T @ cache["inputs"][li], dZ.sum(axis=0))
        dA = dZ @ layer.W
    d_in = dA[0] if cache["single"] else dA
    return d_in, grads


@dataclass
class LstmParams:
    """Single-cell LSTM: sigmoid input/forget/output gates, tanh candidate."""

    W_i: np.ndarray
    W_f: np.ndarray
    W_g: np.ndarray
    W_o: np.ndarray
    U_i: np.ndarray
    U_f: np.ndarray
    U_g: np.ndarray
    U_o: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_g: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        H, D = self.W_i.shape
        for nm in ("W_i", "W_f", "W_g", "W_o"):
            a = np.asarray(getattr(self, nm), dtype=np.float64)
            setattr(self, nm, a)
            if a.shape != (H, D):
                raise ValueError(f"{nm} shape {a.shape} != ({H}, {D})")
        for nm in ("U_i", "U_f", "U_g", "U_o"):
            a = np.asarray(getattr(self, nm), dtype=np.float64)
            setattr(self, nm, a)
            if a.shape != (H, H):
                raise ValueError(f"{nm} shape {a.shape} != ({H}, {H})")
        for nm in ("b_i", "b_f", "b_g", "b_o"):
            a = np.asarray(getattr(self, nm), dtype=np.float64).ravel()
            setattr(self, nm, a)
            if a.shape != (H,):
                raise ValueError(f"{nm} shape {a.shape} != ({H},)")

    @property
    def input_size(self) -> int:
        return self.W_i.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.W_i.shape[0]


def init_lstm(input_size: int, hidden_size: int, rng: np.random.Generator) -> LstmParams:
    """Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] weights, zero biases
    except the forget-gate bias at 1.0 (keeps early memory open).
    """
    bw = 1.0 / np.sqrt(input_size)
    bu = 1.0 / np.sqrt(hidden_size)
    H, D = hidden_size, input_size
    return LstmParams(
        W_i=rng.uniform(-bw, bw, (H, D)),
        W_f=rng.uniform(-bw, bw, (H, D)),
        W_g=rng.uniform(-bw, bw, (H, D)),
        W_o=rng.uniform(-bw, bw, (H, D)),
        U_i=rng.uniform(-bu, bu, (H, H)),
        U_f=rng.uniform(-bu, bu, (H, H)),
        U_g=rng.uniform(-bu, bu, (H, H)),
        U_o=rng.uniform(-bu, bu, (H, H)),
        b_i=np.zeros(H),
        b_f=np.ones(H),
        b_g=np.zeros(H),
        b_o=np.zeros(H),
    )


def _lstm_stacked(params: LstmParams):
    # Gate order [i, f, o, g]: the three sigmoid gates form one contiguous
    # block so each nonlinearity is a single vectorized call.
    W = np.concatenate([params.W_i, params.W_f, params.W_o, params.W_g], axis=0)
    U = np.concatenate([params.U_i, params.U_f, params.U_o, params.U_g], axis=0)
    b = np.concatenate([params.b_i, params.b_f, params.b_o, params.b_g])
    return W, U, b


def lstm_forward(params: LstmParams, seq: np.ndarray):
    """Run the recursion from h0 = c0 = 0 over a sequence.

    seq: (T, D) for one sequence or (B, T, D) for a batch, columns in
    increasing time order.  Returns (h_final, c_final, cache).
    """
    seq = np.asarray(seq, dtype=np.float64)
    single = seq.ndim == 2
    X = seq[None, :, :] if single else seq
    if X.ndim != 3 or X.shape[2] != params.input_size:
        raise ValueError(f"sequence shape {seq.shape} does not match LSTM input size {params.input_size}")
    B, T, D = X.shape
    if T == 0:
        raise ValueError("empty sequence")
    H = params.hidden_size
    W, U, b = _lstm_stacked(params)

    # Time-major internally so each per-step slice is contiguous.
    Xt = np.ascontiguousarray(X.transpose(1, 0, 2))
    inp = (Xt.reshape(T * B, D) @ W.T).reshape(T, B, 4 * H)
    gates = np.empty((T, B, 4 * H))
    c_prev = np.empty((T, B, H))
    h_prev = np.empty((T, B, H))
    tanh_c = np.empty((T, B, H))

    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        a = inp[t]
        a += h @ U.T
        a += b
        g_t = gates[t]
        expit(a[:, : 3 * H], out=g_t[:, : 3 * H])
        np.tanh(a[:, 3 * H :], out=g_t[:, 3 * H :])
        c_prev[t] = c
        h_prev[t] = h
        c = g_t[:, H : 2 * H] * c + g_t[:, :H] * g_t[:, 3 * H :]
        tc = np.tanh(c)
        tanh_c[t] = tc
        h = g_t[:, 2 * H : 3 * H] * tc
    cache = {
        "Xt": Xt,
        "gates": gates,
        "c_prev": c_prev,
        "h_prev": h_prev,
        "tanh_c": tanh_c,
        "W": W,
        "U": U,
        "single": single,
    }
    if single:
        return h[0], c[0], cache
    return h, c, cache


def lstm_backward(params: LstmParams, cache: dict, d_h: np.ndarray, d_c: np.ndarray | None = None):
    """Backpropagation through time from gradients at the final step.

    Returns (d_seq, grads) where grads maps parameter field names to
    gradient arrays.
    """
    Xt = cache["Xt"]
    T, B, D = Xt.shape
    H = params.hidden_size
    W, U = cache["W"], cache["U"]
    gates, c_prev, h_prev, tanh_c = (
        cache["gates"],
        cache["c_prev"],
        cache["h_prev"],
        cache["tanh_c"],
    )

    d_h = np.asarray(d_h, dtype=np.float64)
    dh = d_h[None, :].copy() if cache["single"] else d_h.copy()
    if dh.shape != (B, H):
        raise ValueError(f"d_h shape {d_h.shape} does not match hidden state ({B}, {H})")
    if d_c is None:
        dc = np.zeros((B, H))
    else:
        dc = (d_c[None, :].copy() if cache["single"] else np.asarray(d_c, dtype=np.float64).copy())

    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * H)
    dXt = np.empty_like(Xt)
    da = np.empty((B, 4 * H))
    for t in range(T - 1, -1, -1):
        g_t = gates[t]
        i, f, o, g = g_t[:, :H], g_t[:, H : 2 * H], g_t[:, 2 * H : 3 * H], g_t[:, 3 * H :]
        tc = tanh_c[t]
        do = dh * tc
        dc += dh * o * (1.0 - tc * tc)
        da[:, :H] = dc * g * i * (1.0 - i)
        da[:, H : 2 * H] = dc * c_prev[t] * f * (1.0 - f)
        da[:, 2 * H : 3 * H] = do * o * (1.0 - o)
        da[:, 3 * H :] = dc * i * (1.0 - g * g)
        dW += da.T @ Xt[t]
        dU += da.T @ h_prev[t]
        db += da.sum(axis=0)
        dXt[t] = da @ W
        dh = da @ U
        dc *= f
    dX = dXt.transpose(1, 0, 2)
    grads = {
        "W_i": dW[:H],
        "W_f": dW[H : 2 * H],
        "W_o": dW[2 * H : 3 * H],
        "W_g": dW[3 * H :],
        "U_i": dU[:H],
        "U_f": dU[H : 2 * H],
        "U_o": dU[2 * H : 3 * H],
        "U_g": dU[3 * H :],
        "b_i": db[:H],
        "b_f": db[H : 2 * H],
        "b_o": db[2 * H : 3 * H],
        "b_g": db[3 * H :],
    }
    d_seq = dX[0] if cache["single"] else dX
    return d_seq, grads


@dataclass
class AdamState:
    """First/second moment accumulators mirroring a named parameter set."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_adam(params: dict[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, t=0)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p)
        state.v[name] = np.zeros_like(p)
    return state


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState):
    """Standard bias-corrected Adam update, applied in place.

    Raises ValueError naming the parameter when a gradient is non-finite.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for '{name}'")
        if not np.isfinite(g).all():
            raise ValueError(f"non-finite gradient for parameter '{name}'")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


PARAMS_FORMAT = "delaykoop-params"
PARAMS_VERSION = 1


def params_to_doc(params: dict[str, np.ndarray]) -> dict:
    """Versioned document listing every tensor with shape and row-major values.

    JSON-serializing the result round-trips bit-exactly (floats are emitted
    with shortest-exact repr).
    """
    return {
        "format": PARAMS_FORMAT,
        "version": PARAMS_VERSION,
        "tensors": [
            {"name": name, "shape": list(p.shape), "data": p.ravel().tolist()}
            for name, p in params.items()
        ],
    }


def params_from_doc(doc: dict) -> dict[str, np.ndarray]:
    if doc.get("format") != PARAMS_FORMAT or doc.get("version") != PARAMS_VERSION:
        raise ValueError(
            f"unsupported parameter document {doc.get('format')!r} v{doc.get('version')!r}"
        )
    out = {}
    for entry in doc["tensors"]:
        arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        out[entry["name"]] = arr
    return out


def central_difference(f, arr: np.ndarray, index, step: float = 1e-5) -> float:
    """Central finite difference of scalar f() with respect to arr[index].

    Perturbs in place and restores the entry; f must recompute from the
    current parameter values on each call.
    """
    old = arr[index]
    arr[index] = old + step
    f_plus = f()
    arr[index] = old - step
    f_minus = f()
    arr[index] = old
    return (f_plus - f_minus) / (2.0 * step)
