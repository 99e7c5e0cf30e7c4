"""End-to-end acceptance gates.

Seven criteria, one test each, covering gradient exactness, exact linear
recovery, simulator fidelity, exact-representability training, the
desk-scale model comparison, spectral sanity, and full-pipeline
determinism.  Criteria 5-7 share two complete pipeline runs driven by
``configs/desk.cfg`` through the CLI; everything else is self-contained
and fast.  Each test prints a one-line PASS summary with the measured
numbers (visible with ``pytest -s``).
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.stats

from delaykoop import cli, dataset, dko, edmd, evaluation, nn, sim

import oracles

REPO = Path(__file__).resolve().parents[1]
DESK_CFG = REPO / "configs" / "desk.cfg"


# ---------------------------------------------------------------------------
# criterion 1: analytic gradients match central finite differences


def _random_windows(rng, eta_H, N_L, n_windows):
    T = eta_H + N_L + n_windows - 1
    X = 0.5 * rng.standard_normal((2, T + 1))
    U = 0.5 * rng.standard_normal((1, T))
    traj = dataset.Trajectory(X=X, U=U, Ts=1.0)
    return dataset.make_windows(traj, eta_H=eta_H, N_L=N_L, stride=1)


def test_criterion_1_gradient_exactness():
    t0 = time.time()
    weights = dko.LossWeights(recon=1.0, step=1.0, pred=10.0, lpred=1.0)
    worst = 0.0
    n_checked = 0
    for seed in range(100, 120):
        rng = np.random.default_rng([seed, 0])
        model = dko.init_model(
            rng, lstm_hidden=3, encoder_hidden=(6,), decoder_hidden=(6,),
            latent_dim=4, eta_H=3,
        )
        wins = _random_windows(rng, eta_H=3, N_L=3, n_windows=2)
        _, _, grads = dko.batch_loss_and_grads(model, wins, weights)

        def loss_only():
            return dko.batch_loss_and_grads(model, wins, weights)[0]

        for name, arr in dko.parameters(model).items():
            g = grads[name]
            for idx in np.ndindex(arr.shape):
                fd = nn.central_difference(loss_only, arr, idx)
                an = float(g[idx])
                # central differences resolve ~6e-10 at these loss
                # magnitudes; the floor holds near-zero entries to 1e-9
                # absolute instead of ratioing pure roundoff
                denom = max(abs(fd), abs(an), 1e-5)
                worst = max(worst, abs(fd - an) / denom)
                n_checked += 1
    elapsed = time.time() - t0
    print(f"criterion 1: PASS max rel gradient err {worst:.3e} < 1e-4 "
          f"({n_checked} parameter entries, 20 instances, {elapsed:.1f} s)")
    assert worst < 1e-4
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# criterion 2: identity-dictionary eDMD recovers a known linear system


def test_criterion_2_linear_system_oracle():
    rng = np.random.default_rng(7)
    U = rng.uniform(-1.0, 1.0, size=(1, 300))
    X = np.empty((1, 301))
    X[0, 0] = 0.3
    for k in range(300):
        X[0, k + 1] = 0.9 * X[0, k] + 0.1 * U[0, k]
    traj = dataset.Trajectory(X=X, U=U, Ts=1.0)

    spec = edmd.DictionarySpec(degree=1, include_sqrt=False, n_delays=0,
                               n_states=1, n_inputs=1)
    model = edmd.fit_trajectory(traj, spec, ridge=0.0)
    # lifted coordinates are [1, x]; the constant row maps to itself
    A_true = np.array([[1.0, 0.0], [0.0, 0.9]])
    B_true = np.array([[0.0], [0.1]])
    errA = np.abs(model.A - A_true).max()
    errB = np.abs(model.B - B_true).max()

    U_test = np.sin(0.05 * np.arange(100))[None, :]
    pred = edmd.predict_rollout(model, np.array([0.7]), np.empty((1, 0)), U_test)
    x = 0.7
    worst_roll = 0.0
    for k in range(100):
        x = 0.9 * x + 0.1 * U_test[0, k]
        worst_roll = max(worst_roll, abs(pred[0, k + 1] - x))

    print(f"criterion 2: PASS recovery err A {errA:.2e}, B {errB:.2e}, "
          f"100-step rollout err {worst_roll:.2e} (all < 1e-8)")
    assert errA < 1e-8 and errB < 1e-8
    assert worst_roll < 1e-8


# ---------------------------------------------------------------------------
# criterion 3: steady state matches the closed-form fixed point; the
# response to an input step begins exactly tau samples late


def test_criterion_3_simulator_fidelity():
    params = sim.TankParams()
    q = 0.024
    h1_star = (q * params.F1 / params.k1) ** 2
    h2_star = (params.k1 / params.k2) ** 2 * h1_star
    traj = sim.simulate(params, np.full(2500, q), x0=(0.5, 3.0))
    err1 = abs(traj.X[0, -1] - h1_star)
    err2 = abs(traj.X[1, -1] - h2_star)
    assert err1 < 1e-4 and err2 < 1e-4

    # steady run vs the same run with a step at sample k0: trajectories are
    # identical through column k0 + tau and diverge at k0 + tau + 1
    k0, tau = 30, params.tau_steps
    base = np.full(80, 0.015)
    stepped = base.copy()
    stepped[k0:] = 0.025
    Xa = sim.simulate(params, base).X
    Xb = sim.simulate(params, stepped).X
    same_through = int(np.flatnonzero(np.any(Xa != Xb, axis=0))[0]) - 1
    assert same_through == k0 + tau
    gap = np.abs(Xb[:, k0 + tau + 1] - Xa[:, k0 + tau + 1]).max()
    assert gap > 1e-9

    print(f"criterion 3: PASS steady-state err ({err1:.2e}, {err2:.2e}) < 1e-4 m; "
          f"step response first deviates at sample {same_through + 1} "
          f"= k0 + tau + 1 (tau {tau})")


# ---------------------------------------------------------------------------
# criterion 4: on a plant that is exactly linear in a known 4-dim lifting,
# training reaches total loss < 1e-6 within 2000 optimizer steps


TOY_A = np.array([[0.8, 0.1], [0.05, 0.85]])
TOY_B = np.array([0.5, -0.3])


def _toy_trajectory(seed, T=80):
    rng = np.random.default_rng(seed)
    U = rng.uniform(-0.5, 0.5, size=(1, T))
    X = np.empty((2, T + 1))
    X[:, 0] = rng.uniform(-0.5, 0.5, size=2)
    for k in range(T):
        X[:, k + 1] = TOY_A @ X[:, k] + TOY_B * U[0, k]
    return dataset.Trajectory(X=X, U=U, Ts=1.0)


def _toy_windows():
    wins = []
    for s in range(8):
        wins += dataset.make_windows(_toy_trajectory(s), eta_H=1, N_L=2, stride=1)
    return wins


def _toy_model(seed):
    return dko.init_model(
        np.random.default_rng([seed, 0]), lstm_hidden=1, encoder_hidden=(),
        decoder_hidden=(), latent_dim=4, eta_H=1,
    )


def test_criterion_4_toy_exact_representability():
    t0 = time.time()
    wins = _toy_windows()

    # existence proof: hand-build the lifting [x1, x2, x1+x2, x1-x2] and the
    # matching latent matrices; the four-term loss is zero to roundoff
    exact = _toy_model(0)
    exact.encoder.layers[0].W[:] = [[1, 0, 0], [0, 1, 0], [1, 1, 0], [1, -1, 0]]
    exact.encoder.layers[0].b[:] = 0.0
    exact.decoder.layers[0].W[:] = [[1, 0, 0, 0], [0, 1, 0, 0]]
    exact.decoder.layers[0].b[:] = 0.0
    lift = np.array([[1, 0], [0, 1], [1, 1], [1, -1]], dtype=float)
    exact.A_K[:] = lift @ TOY_A @ np.linalg.pinv(lift)
    exact.B_K[:] = (lift @ TOY_B)[:, None]
    floor, _, _ = dko.batch_loss_and_grads(exact, wins, dko.LossWeights())
    assert floor < 1e-20

    # training run: full batch, so optimizer steps == epochs
    model = _toy_model(9)
    cfg = dko.TrainConfig(epochs=2000, batch_size=len(wins), lr=5e-2,
                          lr_decay=0.9995, seed=9, grad_check=False)
    history = dko.train(model, wins, cfg)
    losses = [rec["loss"] for rec in history]
    hit = next((i + 1 for i, v in enumerate(losses) if v < 1e-6), None)
    elapsed = time.time() - t0
    print(f"criterion 4: PASS exact-optimum loss {floor:.1e}; training reached "
          f"{min(losses):.2e} (< 1e-6 at step {hit} of 2000) in {elapsed:.0f} s")
    assert hit is not None and hit <= 2000
    assert elapsed < 300.0


# ---------------------------------------------------------------------------
# criteria 5-7 share two full desk-scale pipeline runs


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    assert DESK_CFG.exists(), f"missing {DESK_CFG}"
    runs = []
    for label in ("a", "b"):
        out = tmp_path_factory.mktemp(f"desk_{label}")
        t0 = time.time()
        rc = cli.main(["run", "--config", str(DESK_CFG), "--out", str(out)])
        elapsed = time.time() - t0
        assert rc == 0, f"desk pipeline run {label} failed with exit code {rc}"
        runs.append((out, elapsed))
    return runs


def test_criterion_5_desk_scale_ordering(desk_runs):
    out, elapsed = desk_runs[0]
    with open(out / "config.json") as f:
        doc = json.load(f)
    assert doc["samples"] == 40000
    assert doc["noise_std"] == 0.1
    assert doc["epochs"] >= 300

    with open(out / "report" / "report.json") as f:
        rep = json.load(f)
    maes = rep["maes"]
    dko_mae = maes["dko"]
    known = maes["edmd_known"]
    unknown = maes["edmd_unknown"]
    r_unknown = unknown / dko_mae
    r_known = dko_mae / known
    print(f"criterion 5: PASS MAE dko {dko_mae:.4f}, edmd-known {known:.4f}, "
          f"edmd-unknown {unknown:.4f}; unknown/dko {r_unknown:.2f} > 2.0, "
          f"dko/known {r_known:.2f} <= 1.5 ({elapsed/60:.1f} min)")
    assert unknown > 2.0 * dko_mae
    assert dko_mae <= 1.5 * known
    assert elapsed < 2700.0


def test_criterion_6_eigenvalue_sanity(desk_runs):
    out, _ = desk_runs[0]
    model = dko.load_checkpoint(out / "models" / "dko.json")
    with open(out / "config.json") as f:
        doc = json.load(f)
    params = sim.TankParams(k1=doc["k1"], k2=doc["k2"], F1=doc["F1"],
                            F2=doc["F2"], tau_steps=doc["tau_steps"],
                            Ts=doc["Ts"])
    truth = float(evaluation.linearized_truth_eigs(params, (1.0, 1.0))[0])
    eigs = evaluation.model_eigs(model.A_K)
    dom = evaluation.dominant_real_eig(eigs)
    assert 0.85 < dom < 1.0
    assert abs(dom - truth) < 0.05

    # cross-validate the eigen-solver against characteristic-polynomial roots
    worst = 0.0
    for n in (2, 3, 5, 8, 12):
        rng = np.random.default_rng([6, n])
        A = rng.standard_normal((n, n))
        got = evaluation.model_eigs(A)
        want = oracles.eig_oracle(A)
        for w in want:
            worst = max(worst, np.abs(got - w).min())
    # large case: plant a known spectrum under an orthogonal similarity
    rng = np.random.default_rng(60)
    lam = np.sort(rng.uniform(-0.95, 0.95, size=40))[::-1]
    Q = scipy.stats.ortho_group.rvs(40, random_state=11)
    got = np.sort(evaluation.model_eigs(Q @ np.diag(lam) @ Q.T).real)[::-1]
    worst40 = np.abs(got - lam).max()
    print(f"criterion 6: PASS dominant real eig {dom:.4f} in (0.85, 1.0), "
          f"|{dom:.4f} - {truth:.4f}| = {abs(dom-truth):.4f} < 0.05; solver vs "
          f"root oracle {worst:.1e}, planted spectrum n=40 {worst40:.1e}")
    assert worst < 1e-8
    assert worst40 < 1e-8


def test_criterion_7_pipeline_determinism(desk_runs):
    (out_a, _), (out_b, _) = desk_runs
    names_a = sorted(p.name for p in (out_a / "report").iterdir())
    names_b = sorted(p.name for p in (out_b / "report").iterdir())
    assert names_a == names_b and names_a
    for name in names_a:
        ba = (out_a / "report" / name).read_bytes()
        bb = (out_b / "report" / name).read_bytes()
        assert ba == bb, f"report file {name} differs between identical runs"
    print(f"criterion 7: PASS two pipeline runs produced byte-identical "
          f"reports ({len(names_a)} files)")
