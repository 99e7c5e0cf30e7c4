"""Model comparison on held-out data: open-loop rollouts, MAE, eigenvalues.

Every model is evaluated the same way: it receives the measured (noisy)
state and input history up to a shared warm-up sample, then predicts the
rest of the test horizon open loop from the recorded inputs alone.  Errors
are measured against the noise-free truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dko as dko_mod
from . import edmd as edmd_mod
from .dataset import Trajectory, build_history

__all__ = [
    "mae",
    "warmup_start",
    "rollout_dko",
    "rollout_edmd",
    "model_eigs",
    "dominant_real_eig",
    "linearized_truth_eigs",
    "EvalReport",
    "evaluate",
]


def mae(X_pred: np.ndarray, X_true: np.ndarray) -> float:
    """Mean absolute error over all state channels and samples."""
    X_pred = np.asarray(X_pred, dtype=np.float64)
    X_true = np.asarray(X_true, dtype=np.float64)
    if X_pred.shape != X_true.shape:
        raise ValueError(f"shape mismatch {X_pred.shape} vs {X_true.shape}")
    return float(np.mean(np.abs(X_pred - X_true)))


def warmup_start(eta_H: int, n_delays: int) -> int:
    """First sample from which every model can predict: enough history for
    the LSTM encoder and enough past inputs for the delay embedding."""
    return max(eta_H, n_delays)


def rollout_dko(
    model: dko_mod.DeepKoopmanModel, traj: Trajectory, start: int
) -> np.ndarray:
    """Open-loop prediction over traj from sample `start` to the end.

    Initial state and history come from traj (the measured data); returns
    (n, T - start + 1) with column 0 the decoded reconstruction at `start`.
    """
    if start < model.eta_H:
        raise ValueError(f"start {start} < eta_H {model.eta_H}")
    hist = build_history(traj, start, model.eta_H)
    return dko_mod.rollout(model, traj.X[:, start], hist, traj.U[:, start:])


def rollout_edmd(
    model: edmd_mod.EdmdModel,
    traj: Trajectory,
    start: int,
    clamp_negative: bool = True,
) -> np.ndarray:
    """eDMD counterpart of rollout_dko; column 0 equals the measured state."""
    nd = model.spec.n_delays
    if start < nd:
        raise ValueError(f"start {start} < n_delays {nd}")
    if nd > 0:
        past = traj.U[:, start - nd : start][:, ::-1]
    else:
        past = np.zeros((model.spec.n_inputs, 0))
    return edmd_mod.predict_rollout(
        model,
        traj.X[:, start],
        past,
        traj.U[:, start:],
        clamp_negative=clamp_negative,
    )


def model_eigs(A: np.ndarray) -> np.ndarray:
    """Eigenvalues of a square matrix, sorted by descending modulus (ties
    broken by descending real then imaginary part)."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"need a square matrix, got {A.shape}")
    try:
        vals = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"eigenvalue iteration failed: {exc}") from exc
    order = np.lexsort((-vals.imag, -vals.real, -np.abs(vals)))
    return vals[order]


def dominant_real_eig(eigs: np.ndarray, rel_tol: float = 1e-6) -> float:
    """Largest-modulus eigenvalue whose imaginary part is negligible."""
    eigs = np.asarray(eigs)
    for lam in eigs:  # already sorted by modulus
        if abs(lam.imag) <= rel_tol * max(1.0, abs(lam)):
            return float(lam.real)
    raise ValueError("no real eigenvalue found")


def linearized_truth_eigs(params, levels: tuple[float, float] = (1.0, 1.0)) -> np.ndarray:
    """Discrete-time eigenvalues of the plant linearized at an operating point.

    The continuous Jacobian at levels (h1*, h2*) is lower triangular with
    diagonal (-k1/(2 F1 sqrt(h1*)), -k2/(2 F2 sqrt(h2*))); the exact
    zero-order-hold discretization has eigenvalues exp(lambda * Ts).
    Returned sorted descending.
    """
    h1, h2 = levels
    if h1 <= 0 or h2 <= 0:
        raise ValueError("linearization requires strictly positive levels")
    lam1 = -params.k1 / (2.0 * params.F1 * np.sqrt(h1))
    lam2 = -params.k2 / (2.0 * params.F2 * np.sqrt(h2))
    out = np.exp(np.array([lam1, lam2]) * params.Ts)
    return np.sort(out)[::-1]


@dataclass
class EvalReport:
    """MAE per model plus eigenvalue summaries, ready for serialization."""

    start: int
    n_predicted: int
    maes: dict[str, float]
    mae_pct: dict[str, float] = field(default_factory=dict)  # 100% = best model
    eig_sets: dict[str, np.ndarray] = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "start": self.start,
            "n_predicted": self.n_predicted,
            "maes": {k: float(v) for k, v in self.maes.items()},
            "mae_pct": {k: float(v) for k, v in self.mae_pct.items()},
            "eig_sets": {
                name: [[float(z.real), float(z.imag)] for z in vals]
                for name, vals in self.eig_sets.items()
            },
        }

    def metric_rows(self) -> list[tuple[str, float]]:
        """Flat (name, value) pairs in a fixed order for the metrics table."""
        rows = [("start", float(self.start)), ("n_predicted", float(self.n_predicted))]
        for name in sorted(self.maes):
            rows.append((f"mae_{name}", self.maes[name]))
        for name in sorted(self.mae_pct):
            rows.append((f"mae_pct_{name}", self.mae_pct[name]))
        for name in sorted(self.eig_sets):
            vals = self.eig_sets[name]
            if len(vals):
                rows.append((f"dominant_eig_re_{name}", float(vals[0].real)))
                rows.append((f"dominant_eig_im_{name}", float(vals[0].imag)))
        return rows


def evaluate(
    models: dict,
    test_noisy: Trajectory,
    test_clean: Trajectory,
    tank_params=None,
    operating_levels: tuple[float, float] = (1.0, 1.0),
) -> tuple[EvalReport, dict[str, np.ndarray]]:
    """Roll every model over the test trajectory and score against truth.

    `models` maps a name to either a DeepKoopmanModel or an EdmdModel.  The
    warm-up start is shared: the maximum history requirement over all
    models.  MAE covers the strictly predicted samples (start+1 onward).
    Returns the report and the per-model predictions (n, N+1) including the
    shared truth slice under key "truth".
    """
    if test_noisy.X.shape != test_clean.X.shape:
        raise ValueError("noisy and clean test trajectories disagree in shape")
    need = [0]
    for m in models.values():
        if isinstance(m, dko_mod.DeepKoopmanModel):
            need.append(m.eta_H)
        elif isinstance(m, edmd_mod.EdmdModel):
            need.append(m.spec.n_delays)
        else:
            raise TypeError(f"cannot evaluate model of type {type(m).__name__}")
    start = max(need)
    T = test_noisy.n_samples
    if start >= T:
        raise ValueError(f"test trajectory too short: {T} samples, warm-up {start}")

    truth = test_clean.X[:, start:]
    preds: dict[str, np.ndarray] = {"truth": truth}
    maes: dict[str, float] = {}
    report = EvalReport(start=start, n_predicted=T - start, maes=maes)
    for name, m in models.items():
        if isinstance(m, dko_mod.DeepKoopmanModel):
            X = rollout_dko(m, test_noisy, start)
            report.eig_sets[name] = model_eigs(m.A_K)
        else:
            X = rollout_edmd(m, test_noisy, start)
            report.eig_sets[name] = model_eigs(m.A)
        preds[name] = X
        maes[name] = mae(X[:, 1:], truth[:, 1:])
    best = min(maes.values())
    for name, value in maes.items():
        report.mae_pct[name] = 100.0 * value / best if best > 0 else 100.0
    if tank_params is not None:
        report.eig_sets["truth_linearized"] = linearized_truth_eigs(
            tank_params, operating_levels
        ).astype(np.complex128)
    return report, preds
