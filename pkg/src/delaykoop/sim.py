"""Two-tank cascade with delayed inflow: simulation and data synthesis.

The plant is a pair of gravity-drained tanks in series.  The inflow q acts
on the first tank after a transport delay of `tau_steps` whole sampling
periods:

    dh1/dt = q(t - tau) - (k1/F1) * sqrt(h1)
    dh2/dt = (k1/F2) * sqrt(h1) - (k2/F2) * sqrt(h2)

Levels are clamped at zero so the square roots stay defined under
aggressive inputs.  Integration is classical RK4 with sub-steps inside each
sampling interval; the delayed inflow is held constant over the interval
(zero-order hold).  All routines are pure given their arguments, and RNG
seeds are explicit, so identical calls give bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .dataset import Trajectory

__all__ = [
    "TankParams",
    "TankState",
    "derivative",
    "step",
    "simulate",
    "generate_random_input",
    "add_noise",
    "steady_state",
]


@dataclass(frozen=True)
class TankParams:
    """Physical constants, transport delay (in samples) and sampling period."""

    k1: float = 0.015
    k2: float = 0.015
    F1: float = 1.0
    F2: float = 1.0
    tau_steps: int = 20
    Ts: float = 10.0

    def __post_init__(self):
        for name in ("k1", "k2", "F1", "F2", "Ts"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.tau_steps < 0 or int(self.tau_steps) != self.tau_steps:
            raise ValueError("tau_steps must be a nonnegative integer")


class TankState(NamedTuple):
    h1: float
    h2: float


def derivative(state: Sequence[float], delayed_q: float, params: TankParams) -> tuple[float, float]:
    """Right-hand side (dh1/dt, dh2/dt) at the given levels and delayed inflow.

    Raises ValueError on negative levels rather than taking sqrt of a
    negative number.
    """
    h1, h2 = float(state[0]), float(state[1])
    if h1 < 0 or h2 < 0:
        raise ValueError(f"levels must be nonnegative, got ({h1}, {h2})")
    s1 = math.sqrt(h1)
    s2 = math.sqrt(h2)
    return (
        delayed_q - params.k1 / params.F1 * s1,
        params.k1 / params.F2 * s1 - params.k2 / params.F2 * s2,
    )


def _rk4_advance(h1: float, h2: float, q: float, a1: float, b1: float, b2: float, dt: float):
    """One RK4 step of size dt with constant inflow q.

    a1 = k1/F1, b1 = k1/F2, b2 = k2/F2.  Stage states are clamped at zero
    before the sqrt so intermediate stages near the origin stay defined;
    the returned state is clamped as well.
    """
    s1 = math.sqrt(h1 if h1 > 0 else 0.0)
    s2 = math.sqrt(h2 if h2 > 0 else 0.0)
    k1a = q - a1 * s1
    k1b = b1 * s1 - b2 * s2

    p1 = h1 + 0.5 * dt * k1a
    p2 = h2 + 0.5 * dt * k1b
    s1 = math.sqrt(p1 if p1 > 0 else 0.0)
    s2 = math.sqrt(p2 if p2 > 0 else 0.0)
    k2a = q - a1 * s1
    k2b = b1 * s1 - b2 * s2

    p1 = h1 + 0.5 * dt * k2a
    p2 = h2 + 0.5 * dt * k2b
    s1 = math.sqrt(p1 if p1 > 0 else 0.0)
    s2 = math.sqrt(p2 if p2 > 0 else 0.0)
    k3a = q - a1 * s1
    k3b = b1 * s1 - b2 * s2

    p1 = h1 + dt * k3a
    p2 = h2 + dt * k3b
    s1 = math.sqrt(p1 if p1 > 0 else 0.0)
    s2 = math.sqrt(p2 if p2 > 0 else 0.0)
    k4a = q - a1 * s1
    k4b = b1 * s1 - b2 * s2

    h1 = h1 + dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
    h2 = h2 + dt / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
    return (h1 if h1 > 0 else 0.0, h2 if h2 > 0 else 0.0)


def step(
    state: Sequence[float],
    input_buffer: Sequence[float],
    params: TankParams,
    dt: float,
) -> TankState:
    """Advance one interval of length dt with RK4 and a zero-order-hold input.

    `input_buffer[0]` must be the inflow sample delayed by params.tau_steps
    relative to the interval being integrated; maintaining that buffer is
    the caller's job (see :func:`simulate`).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if len(input_buffer) == 0:
        raise ValueError(
            f"input buffer is empty; with tau_steps={params.tau_steps} the "
            "delayed inflow sample must be supplied (zeros before t=0)"
        )
    h1, h2 = float(state[0]), float(state[1])
    if h1 < 0 or h2 < 0:
        raise ValueError(f"levels must be nonnegative, got ({h1}, {h2})")
    q = float(input_buffer[0])
    a1 = params.k1 / params.F1
    b1 = params.k1 / params.F2
    b2 = params.k2 / params.F2
    return TankState(*_rk4_advance(h1, h2, q, a1, b1, b2, dt))


def simulate(
    params: TankParams,
    signal: np.ndarray,
    x0: Sequence[float] = (1.0, 1.0),
    n_steps: int | None = None,
    n_substeps: int = 10,
) -> Trajectory:
    """Simulate n_steps sampling intervals under the given inflow sequence.

    State k+1 is driven by input sample k - tau_steps; inputs before t=0
    are zero by convention.  Each interval is integrated with `n_substeps`
    RK4 sub-steps of size Ts/n_substeps.
    """
    signal = np.asarray(signal, dtype=np.float64).ravel()
    if n_steps is None:
        n_steps = len(signal)
    if len(signal) < n_steps:
        raise ValueError(f"signal has {len(signal)} samples, need {n_steps}")
    if n_substeps < 1:
        raise ValueError("n_substeps must be >= 1")

    a1 = params.k1 / params.F1
    b1 = params.k1 / params.F2
    b2 = params.k2 / params.F2
    dt = params.Ts / n_substeps
    tau = params.tau_steps

    X = np.empty((2, n_steps + 1))
    h1, h2 = float(x0[0]), float(x0[1])
    if h1 < 0 or h2 < 0:
        raise ValueError("initial levels must be nonnegative")
    X[0, 0] = h1
    X[1, 0] = h2
    sig = signal.tolist()
    for k in range(n_steps):
        j = k - tau
        q = sig[j] if j >= 0 else 0.0
        for _ in range(n_substeps):
            h1, h2 = _rk4_advance(h1, h2, q, a1, b1, b2, dt)
        X[0, k + 1] = h1
        X[1, k + 1] = h2
    return Trajectory(X=X, U=signal[:n_steps].copy()[None, :], Ts=params.Ts)


def generate_random_input(
    seed: int,
    n_steps: int,
    q_min: float = 0.0,
    q_max: float = 0.03,
    hold_min: int = 50,
    hold_max: int = 200,
) -> np.ndarray:
    """Piecewise-constant excitation: uniform segment values and hold lengths.

    Each segment value is drawn uniformly from [q_min, q_max] and held for
    a uniform integer number of samples in [hold_min, hold_max].
    Deterministic for a fixed seed.
    """
    if q_min > q_max:
        raise ValueError("q_min must not exceed q_max")
    if not (1 <= hold_min <= hold_max):
        raise ValueError("need 1 <= hold_min <= hold_max")
    rng = np.random.default_rng(seed)
    out = np.empty(n_steps)
    filled = 0
    while filled < n_steps:
        value = rng.uniform(q_min, q_max)
        hold = int(rng.integers(hold_min, hold_max + 1))
        out[filled : filled + hold] = value
        filled += hold
    return out


def add_noise(traj: Trajectory, std: float, seed: int) -> Trajectory:
    """Add i.i.d. zero-mean Gaussian noise to every state sample.

    Inputs are known applied commands and stay untouched.  std = 0 returns
    an identical copy.
    """
    if std < 0:
        raise ValueError("std must be nonnegative")
    if std == 0:
        return Trajectory(X=traj.X.copy(), U=traj.U.copy(), Ts=traj.Ts)
    rng = np.random.default_rng(seed)
    noisy = traj.X + rng.normal(0.0, std, size=traj.X.shape)
    return Trajectory(X=noisy, U=traj.U.copy(), Ts=traj.Ts)


def steady_state(q: float, params: TankParams) -> TankState:
    """Closed-form fixed point for a constant inflow q."""
    if q < 0:
        raise ValueError("q must be nonnegative")
    h1 = (q * params.F1 / params.k1) ** 2
    h2 = (q * params.F1 / params.k2) ** 2
    return TankState(h1, h2)
