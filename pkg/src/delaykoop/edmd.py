"""Extended-DMD baseline: dictionary lifting with delayed-input embedding.

The lifted vector concatenates, in this fixed order: the constant 1, all
monomials of the states up to the configured total degree (raw states
first), optionally the square root of each state, and the last `n_delays`
input samples (newest first).  A discrete linear model

    z_{k+1} = A z_k + B u_k

is fitted over lifted snapshots by ridge-regularized least squares, and
prediction is a pure linear rollout in lifted space: the dictionary is
evaluated once at the initial condition and never rebuilt, so the delayed
input coordinates evolve only through the learned shift structure in A, B.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dataset import Trajectory

__all__ = [
    "DictionarySpec",
    "EdmdModel",
    "lifted_dim",
    "lift",
    "lift_trajectory",
    "fit",
    "fit_trajectory",
    "predict_rollout",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class DictionarySpec:
    """Dictionary layout: polynomial degree, optional sqrt terms, input delays."""

    degree: int = 2
    include_sqrt: bool = True
    n_delays: int = 20
    n_states: int = 2
    n_inputs: int = 1

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.n_delays < 0:
            raise ValueError("n_delays must be >= 0")
        if self.n_states < 1 or self.n_inputs < 1:
            raise ValueError("need at least one state and one input channel")

    @property
    def state_indices(self) -> list[int]:
        """Positions of the raw states inside the lifted vector (after the 1)."""
        return list(range(1, 1 + self.n_states))

    def monomial_exponents(self) -> list[tuple[int, ...]]:
        """Exponent tuples in term order: degree 0, then each total degree
        up to `degree` with combinations in lexicographic variable order
        (x1^2, x1*x2, x2^2, ...).
        """
        exps = []
        for deg in range(self.degree + 1):
            for combo in itertools.combinations_with_replacement(range(self.n_states), deg):
                e = [0] * self.n_states
                for idx in combo:
                    e[idx] += 1
                exps.append(tuple(e))
        return exps


def lifted_dim(spec: DictionarySpec) -> int:
    """p = C(n+d, d) + n * [sqrt] + n_delays * m."""
    n, d = spec.n_states, spec.degree
    return (
        math.comb(n + d, d)
        + (n if spec.include_sqrt else 0)
        + spec.n_delays * spec.n_inputs
    )


def _sqrt_block(X: np.ndarray, clamp_negative: bool) -> np.ndarray:
    if (X < 0).any():
        if not clamp_negative:
            raise ValueError(
                "negative state with sqrt dictionary terms; pass clamp_negative=True "
                "to evaluate sqrt(max(x, 0)) instead"
            )
        X = np.maximum(X, 0.0)
    return np.sqrt(X)


def lift(
    x: np.ndarray,
    past_inputs: np.ndarray,
    spec: DictionarySpec,
    clamp_negative: bool = False,
) -> np.ndarray:
    """Lift one state with its delayed-input history to a length-p vector.

    `past_inputs` holds the last n_delays input samples newest first
    (past_inputs[..., 0] = u_{k-1}); shape (n_delays,) for one input
    channel or (m, n_delays) in general.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != spec.n_states:
        raise ValueError(f"state has {x.shape[0]} entries, spec expects {spec.n_states}")
    past = np.asarray(past_inputs, dtype=np.float64)
    if past.ndim == 1:
        past = past[None, :]
    if past.shape != (spec.n_inputs, spec.n_delays):
        raise ValueError(
            f"past_inputs shape {np.shape(past_inputs)} does not match "
            f"({spec.n_inputs}, {spec.n_delays})"
        )
    return lift_columns(x[:, None], past[:, :, None], spec, clamp_negative)[:, 0]


def lift_columns(
    X: np.ndarray,
    past: np.ndarray,
    spec: DictionarySpec,
    clamp_negative: bool = False,
) -> np.ndarray:
    """Vectorized lift: X (n, M), past (m, n_delays, M) -> Z (p, M)."""
    n, M = X.shape
    Z = np.empty((lifted_dim(spec), M))
    # Powers of each state up to the degree, reused across monomials.
    pows = [[np.ones(M)] for _ in range(n)]
    for i in range(n):
        for _ in range(spec.degree):
            pows[i].append(pows[i][-1] * X[i])
    row = 0
    for e in spec.monomial_exponents():
        term = pows[0][e[0]].copy()
        for i in range(1, n):
            if e[i]:
                term *= pows[i][e[i]]
        Z[row] = term
        row += 1
    if spec.include_sqrt:
        Z[row : row + n] = _sqrt_block(X, clamp_negative)
        row += n
    for j in range(spec.n_delays):
        Z[row : row + spec.n_inputs] = past[:, j, :]
        row += spec.n_inputs
    return Z


def lift_trajectory(
    traj: Trajectory, spec: DictionarySpec, clamp_negative: bool = False
) -> tuple[np.ndarray, int]:
    """Lift every sample with a full delay history.

    Returns (L, k0) where column c of L is the lifted vector at sample
    k0 + c and k0 = n_delays is the first sample with enough input history.
    """
    T = traj.n_samples
    k0 = spec.n_delays
    if T < k0:
        raise ValueError(f"trajectory too short for {spec.n_delays} input delays")
    M = T - k0 + 1
    past = np.empty((spec.n_inputs, spec.n_delays, M))
    for j in range(1, spec.n_delays + 1):
        past[:, j - 1, :] = traj.U[:, k0 - j : T + 1 - j]
    return lift_columns(traj.X[:, k0:], past, spec, clamp_negative), k0


@dataclass
class EdmdModel:
    """Fitted linear dynamics over lifted coordinates."""

    spec: DictionarySpec
    A: np.ndarray  # (p, p)
    B: np.ndarray  # (p, m)
    ridge: float
    residual: float = 0.0  # RMS lifted one-step residual over the fit data

    def __post_init__(self):
        p = lifted_dim(self.spec)
        self.A = np.asarray(self.A, dtype=np.float64)
        self.B = np.asarray(self.B, dtype=np.float64)
        if self.A.shape != (p, p) or self.B.shape != (p, self.spec.n_inputs):
            raise ValueError(
                f"A {self.A.shape} / B {self.B.shape} inconsistent with lifted dim {p}"
            )
        if not (np.isfinite(self.A).all() and np.isfinite(self.B).all()):
            raise ValueError("fitted matrices contain non-finite entries")

    @property
    def state_indices(self) -> list[int]:
        return self.spec.state_indices


def fit(
    Z: np.ndarray,
    U: np.ndarray,
    Z_next: np.ndarray,
    spec: DictionarySpec,
    ridge: float = 1e-8,
) -> EdmdModel:
    """Least-squares fit of [A B] from lifted snapshot pairs.

    Minimizes sum_k ||z_{k+1} - A z_k - B u_k||^2 + ridge * ||[A B]||_F^2
    via the regularized normal equations with a Cholesky factorization.
    """
    Z = np.asarray(Z, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    Z_next = np.asarray(Z_next, dtype=np.float64)
    p = lifted_dim(spec)
    m = spec.n_inputs
    if Z.shape[0] != p or Z_next.shape[0] != p or U.shape[0] != m:
        raise ValueError("snapshot row counts do not match the dictionary spec")
    M = Z.shape[1]
    if U.shape[1] != M or Z_next.shape[1] != M:
        raise ValueError("snapshot column counts disagree")
    if M < p + m:
        raise ValueError(f"need at least {p + m} snapshot pairs, got {M}")
    if not (np.isfinite(Z).all() and np.isfinite(U).all() and np.isfinite(Z_next).all()):
        raise ValueError("snapshots contain non-finite entries")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")

    G = np.vstack([Z, U])
    gram = G @ G.T
    gram[np.diag_indices_from(gram)] += ridge
    rhs = Z_next @ G.T
    try:
        cho = scipy.linalg.cho_factor(gram, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "Gram matrix is singular (rank-deficient snapshots); "
            "pass a positive ridge value"
        ) from exc
    AB = scipy.linalg.cho_solve(cho, rhs.T).T
    A, B = AB[:, :p], AB[:, p:]
    res = Z_next - AB @ G
    residual = float(np.sqrt((res * res).sum() / M))
    return EdmdModel(spec=spec, A=A, B=B, ridge=ridge, residual=residual)


def fit_trajectory(
    traj: Trajectory,
    spec: DictionarySpec,
    ridge: float = 1e-8,
    clamp_negative: bool = False,
) -> EdmdModel:
    """Lift a trajectory and fit; snapshots start once a full delay history exists."""
    L, k0 = lift_trajectory(traj, spec, clamp_negative)
    return fit(L[:, :-1], traj.U[:, k0:], L[:, 1:], spec, ridge)


def predict_rollout(
    model: EdmdModel,
    x0: np.ndarray,
    past_inputs: np.ndarray,
    U: np.ndarray,
    N: int | None = None,
    clamp_negative: bool = False,
    relift: bool = False,
) -> np.ndarray:
    """Open-loop prediction over N input samples.

    Returns the state components of the lifted rollout, shape (n, N+1),
    column 0 matching x0.  With relift=True (diagnostic mode only), the
    dictionary is re-evaluated from the decoded state after every step
    instead of propagating linearly.
    """
    U = np.atleast_2d(np.asarray(U, dtype=np.float64))
    if U.shape[0] != model.spec.n_inputs:
        raise ValueError(f"input rows {U.shape[0]} != {model.spec.n_inputs}")
    if N is None:
        N = U.shape[1]
    if U.shape[1] < N:
        raise ValueError(f"need {N} input samples, got {U.shape[1]}")
    spec = model.spec
    z = lift(x0, past_inputs, spec, clamp_negative)
    sidx = model.state_indices
    out = np.empty((spec.n_states, N + 1))
    out[:, 0] = z[sidx]
    if not relift:
        for k in range(N):
            z = model.A @ z + model.B @ U[:, k]
            out[:, k + 1] = z[sidx]
        return out
    # Diagnostic re-lifting mode: rebuild nonlinear terms each step while
    # shifting the delay coordinates explicitly.
    past = np.asarray(past_inputs, dtype=np.float64)
    if past.ndim == 1:
        past = past[None, :]
    past = past.copy()
    for k in range(N):
        z = model.A @ z + model.B @ U[:, k]
        x = z[sidx]
        out[:, k + 1] = x
        if spec.n_delays > 0:
            past = np.concatenate([U[:, k : k + 1], past[:, :-1]], axis=1)
        z = lift(x, past, spec, clamp_negative=True)
    return out


EDMD_FORMAT = "delaykoop-edmd"
EDMD_VERSION = 1


def model_to_doc(model: EdmdModel) -> dict:
    return {
        "format": EDMD_FORMAT,
        "version": EDMD_VERSION,
        "dictionary": {
            "degree": model.spec.degree,
            "include_sqrt": model.spec.include_sqrt,
            "n_delays": model.spec.n_delays,
            "n_states": model.spec.n_states,
            "n_inputs": model.spec.n_inputs,
        },
        "ridge": model.ridge,
        "residual": model.residual,
        "A": {"shape": list(model.A.shape), "data": model.A.ravel().tolist()},
        "B": {"shape": list(model.B.shape), "data": model.B.ravel().tolist()},
    }


def model_from_doc(doc: dict) -> EdmdModel:
    if doc.get("format") != EDMD_FORMAT or doc.get("version") != EDMD_VERSION:
        raise ValueError(f"unsupported model document {doc.get('format')!r} v{doc.get('version')!r}")
    spec = DictionarySpec(**doc["dictionary"])
    A = np.array(doc["A"]["data"]).reshape(doc["A"]["shape"])
    B = np.array(doc["B"]["data"]).reshape(doc["B"]["shape"])
    return EdmdModel(spec=spec, A=A, B=B, ridge=doc["ridge"], residual=doc["residual"])


def save_model(model: EdmdModel, path, extra: dict | None = None) -> None:
    doc = model_to_doc(model)
    if extra:
        doc["meta"] = extra
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_model(path) -> EdmdModel:
    with open(path) as f:
        return model_from_doc(json.load(f))
