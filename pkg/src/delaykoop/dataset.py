"""Trajectory containers and training-data preparation.

Turns simulated trajectories into the structures the identification code
consumes: history windows, multi-step supervision windows, per-channel
normalization, and the contiguous train/test split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Trajectory",
    "SupervisionWindow",
    "Normalizer",
    "build_history",
    "split_train_test",
    "make_windows",
    "fit_normalizer",
]


@dataclass
class Trajectory:
    """Time-indexed state/input record of one experiment.

    X has shape (n, T+1): states at samples 0..T.  U has shape (m, T):
    the input held over [t_k, t_k + Ts) for k = 0..T-1.  Ts is the
    sampling period in seconds.
    """

    X: np.ndarray
    U: np.ndarray
    Ts: float

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.U = np.asarray(self.U, dtype=np.float64)
        if self.X.ndim != 2 or self.U.ndim != 2:
            raise ValueError("X and U must be 2-D arrays")
        if self.X.shape[1] != self.U.shape[1] + 1:
            raise ValueError(
                f"X must have exactly one more column than U, "
                f"got X {self.X.shape} vs U {self.U.shape}"
            )
        if not (np.isfinite(self.X).all() and np.isfinite(self.U).all()):
            raise ValueError("trajectory contains non-finite entries")
        if self.Ts <= 0:
            raise ValueError("Ts must be positive")

    @property
    def n_states(self) -> int:
        return self.X.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.U.shape[0]

    @property
    def n_samples(self) -> int:
        """Number of input samples T (states run 0..T)."""
        return self.U.shape[1]

    @property
    def t(self) -> np.ndarray:
        """Sample times in seconds, length T+1."""
        return np.arange(self.X.shape[1]) * self.Ts

    def save_csv(self, path, header_comment: str | None = None) -> None:
        """Write `t,h1,h2,q` rows, one per sample, at full precision.

        The final state row has no input sample; its q cell is left empty.
        Values are written with repr() so a round-trip is bit-exact.
        """
        if self.n_states != 2 or self.n_inputs != 1:
            raise ValueError("CSV format is defined for 2 states / 1 input")
        lines = []
        if header_comment:
            lines.append(f"# {header_comment}")
        lines.append("t,h1,h2,q")
        T = self.n_samples
        for k in range(T + 1):
            q = repr(float(self.U[0, k])) if k < T else ""
            lines.append(
                f"{repr(k * self.Ts)},{repr(float(self.X[0, k]))},"
                f"{repr(float(self.X[1, k]))},{q}"
            )
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")

    @classmethod
    def load_csv(cls, path) -> "Trajectory":
        """Read a trajectory written by :meth:`save_csv`."""
        ts, h1, h2, q = [], [], [], []
        with open(path) as f:
            rows = [ln.strip() for ln in f if ln.strip() and not ln.startswith("#")]
        if not rows or rows[0] != "t,h1,h2,q":
            raise ValueError(f"{path}: expected header 't,h1,h2,q'")
        for row in rows[1:]:
            cells = row.split(",")
            if len(cells) != 4:
                raise ValueError(f"{path}: malformed row {row!r}")
            ts.append(float(cells[0]))
            h1.append(float(cells[1]))
            h2.append(float(cells[2]))
            if cells[3] != "":
                q.append(float(cells[3]))
        if len(q) != len(ts) - 1:
            raise ValueError(f"{path}: expected exactly one trailing row without q")
        X = np.array([h1, h2])
        U = np.array([q])
        Ts = ts[1] - ts[0] if len(ts) > 1 else 1.0
        return cls(X=X, U=U, Ts=Ts)


def build_history(traj: Trajectory, k: int, eta_H: int) -> np.ndarray:
    """History matrix at sample k: states stacked over inputs.

    Returns the (n+m, eta_H) matrix whose columns are samples
    k-eta_H .. k-1 in increasing time order (oldest first)::

        [[x_{k-eta_H} ... x_{k-1}],
         [u_{k-eta_H} ... u_{k-1}]]
    """
    if eta_H < 1:
        raise ValueError("eta_H must be >= 1")
    if k < eta_H:
        raise ValueError(f"no full history at k={k} with eta_H={eta_H}; windows are not zero-padded")
    if k > traj.n_samples:
        raise ValueError(f"k={k} out of range for trajectory with T={traj.n_samples}")
    return np.vstack([traj.X[:, k - eta_H : k], traj.U[:, k - eta_H : k]])


def split_train_test(traj: Trajectory) -> tuple[Trajectory, Trajectory]:
    """Contiguous 50:50 split; the first half (train) gets the extra sample
    when T is odd.  No (x_k, u_k) sample pair is shared; concatenating the
    halves reproduces the original sequence.
    """
    T = traj.n_samples
    if T < 2:
        raise ValueError("need at least 2 samples to split")
    s = math.ceil(T / 2)
    train = Trajectory(X=traj.X[:, : s + 1].copy(), U=traj.U[:, :s].copy(), Ts=traj.Ts)
    test = Trajectory(X=traj.X[:, s:].copy(), U=traj.U[:, s:].copy(), Ts=traj.Ts)
    return train, test


@dataclass
class SupervisionWindow:
    """One multi-step training example anchored at sample k.

    Exposes the history at k, the current state x_k, the next N_L inputs
    and states, and (when enabled) the true histories at k+1 .. k+N_L that
    the latent-trajectory loss needs.  All fields are views into the source
    trajectory, materialized on access.
    """

    traj: Trajectory
    k: int
    eta_H: int
    N_L: int
    with_extended_histories: bool = True

    def __post_init__(self):
        if self.N_L < 1:
            raise ValueError("N_L must be >= 1")
        if self.k < self.eta_H or self.k + self.N_L > self.traj.n_samples:
            raise ValueError(f"window at k={self.k} does not fit the trajectory")

    @property
    def history(self) -> np.ndarray:
        return build_history(self.traj, self.k, self.eta_H)

    @property
    def x_k(self) -> np.ndarray:
        return self.traj.X[:, self.k].copy()

    @property
    def u_future(self) -> np.ndarray:
        """Inputs u_k .. u_{k+N_L-1}, shape (m, N_L)."""
        return self.traj.U[:, self.k : self.k + self.N_L].copy()

    @property
    def x_future(self) -> np.ndarray:
        """States x_{k+1} .. x_{k+N_L}, shape (n, N_L)."""
        return self.traj.X[:, self.k + 1 : self.k + self.N_L + 1].copy()

    @property
    def extended_histories(self) -> list[np.ndarray] | None:
        """Histories at k+1 .. k+N_L, or None when disabled."""
        if not self.with_extended_histories:
            return None
        return [build_history(self.traj, self.k + i, self.eta_H) for i in range(1, self.N_L + 1)]


def make_windows(
    traj: Trajectory,
    eta_H: int,
    N_L: int,
    stride: int = 1,
    with_extended_histories: bool = True,
) -> list[SupervisionWindow]:
    """Supervision windows anchored at k = eta_H, eta_H+stride, ...

    A window at k needs samples k-eta_H .. k+N_L, so the count is
    floor((T - eta_H - N_L)/stride) + 1.  Returns an empty list when the
    horizon does not fit (not an error).
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    T = traj.n_samples
    if T < eta_H + N_L:
        return []
    return [
        SupervisionWindow(traj, k, eta_H, N_L, with_extended_histories)
        for k in range(eta_H, T - N_L + 1, stride)
    ]


@dataclass
class Normalizer:
    """Per-channel affine maps for states and inputs.

    States map to zero mean / unit variance on the data the normalizer was
    fitted on; inputs map to [0, 1] over their observed range.  Channels
    with no spread keep scale 1 so the map stays invertible.
    """

    state_shift: np.ndarray
    state_scale: np.ndarray
    input_shift: np.ndarray
    input_scale: np.ndarray

    def __post_init__(self):
        for name in ("state_shift", "state_scale", "input_shift", "input_scale"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64).ravel())
        if (self.state_scale <= 0).any() or (self.input_scale <= 0).any():
            raise ValueError("scales must be positive")

    @classmethod
    def identity(cls, n_states: int, n_inputs: int) -> "Normalizer":
        return cls(
            state_shift=np.zeros(n_states),
            state_scale=np.ones(n_states),
            input_shift=np.zeros(n_inputs),
            input_scale=np.ones(n_inputs),
        )

    # Channel-major arrays (n, ...) in, same shape out.
    def apply_states(self, X: np.ndarray) -> np.ndarray:
        return (X - self.state_shift[:, None]) / self.state_scale[:, None]

    def invert_states(self, Xn: np.ndarray) -> np.ndarray:
        return Xn * self.state_scale[:, None] + self.state_shift[:, None]

    def apply_inputs(self, U: np.ndarray) -> np.ndarray:
        return (U - self.input_shift[:, None]) / self.input_scale[:, None]

    def invert_inputs(self, Un: np.ndarray) -> np.ndarray:
        return Un * self.input_scale[:, None] + self.input_shift[:, None]

    def apply(self, traj: Trajectory) -> Trajectory:
        return Trajectory(
            X=self.apply_states(traj.X), U=self.apply_inputs(traj.U), Ts=traj.Ts
        )

    def invert(self, traj: Trajectory) -> Trajectory:
        return Trajectory(
            X=self.invert_states(traj.X), U=self.invert_inputs(traj.U), Ts=traj.Ts
        )

    def to_doc(self) -> dict:
        return {
            "state_shift": self.state_shift.tolist(),
            "state_scale": self.state_scale.tolist(),
            "input_shift": self.input_shift.tolist(),
            "input_scale": self.input_scale.tolist(),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Normalizer":
        return cls(
            state_shift=np.array(doc["state_shift"]),
            state_scale=np.array(doc["state_scale"]),
            input_shift=np.array(doc["input_shift"]),
            input_scale=np.array(doc["input_scale"]),
        )


def fit_normalizer(train: Trajectory) -> Normalizer:
    """Fit normalization statistics on the training half only."""
    mu = train.X.mean(axis=1)
    sd = train.X.std(axis=1)
    sd = np.where(sd > 0, sd, 1.0)
    lo = train.U.min(axis=1)
    hi = train.U.max(axis=1)
    rng = np.where(hi > lo, hi - lo, 1.0)
    return Normalizer(state_shift=mu, state_scale=sd, input_shift=lo, input_scale=rng)
