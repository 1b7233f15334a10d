"""Generalized JST averaging: predict with the clock model, then equalize residuals.

Measurements are consumed at the step being corrected: the estimate for
step k uses y[k].  Step 0 is the initial guess and is never corrected.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from clockensemble.model import (
    EnsembleConfig,
    e_head,
    ensemble_matrices,
    transition_matrix,
)
from clockensemble.output import RunOutput
from clockensemble.simulate import Trajectory


def jst_predict(x_hat: np.ndarray, A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Advance ``x_hat`` (..., n*m) by the clock model ``A``.

    Returns the predicted time deviations of all clocks and the new state.
    """
    n = A.shape[0]
    m = x_hat.shape[-1] // n
    X = A @ x_hat.reshape(x_hat.shape[:-1] + (n, m))
    x_new = X.reshape(x_hat.shape)
    return x_new[..., :m].copy(), x_new


def jst_weight_update(d: np.ndarray, y: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Weighting and update procedure.

    The reference clock's deviation becomes the weighted average of all
    predictions moved onto it through the measurements y_im = h^i - h^m;
    every other clock is then pinned to the reference by its measurement.
    """
    y_full = np.concatenate([y, np.zeros(y.shape[:-1] + (1,))], axis=-1)
    ref = (d - y_full) @ beta
    return ref[..., None] + y_full


def _collect(cfg, traj, x_hat, algorithm, keep_states):
    m = cfg.m
    eps = traj.states[..., :m] - x_hat[..., :m]
    return RunOutput(
        algorithm=algorithm,
        ta=eps @ cfg.weights,
        residuals=eps,
        x_hat=x_hat if keep_states else None,
    )


def jst_run(cfg: EnsembleConfig, traj: Trajectory, *, keep_states: bool = True) -> RunOutput:
    """Run the generalized JST procedure over a (possibly batched) trajectory."""
    n, m, T = cfg.n, cfg.m, cfg.horizon
    y = traj.measurements
    batch = y.shape[:-2]
    x = np.broadcast_to(cfg.x0_guess, batch + (n * m,)).copy()
    x_hat = np.empty(batch + (T + 1, n * m))
    x_hat[..., 0, :] = x
    for k in range(1, T + 1):
        d, x = jst_predict(x, transition_matrix(n, float(cfg.tau[k - 1])))
        x[..., :m] = jst_weight_update(d, y[..., k, :], cfg.weights)
        x_hat[..., k, :] = x
    return _collect(cfg, traj, x_hat, "jst", keep_states)


def jst_run_matrix(cfg: EnsembleConfig, traj: Trajectory) -> RunOutput:
    """Same sequence as :func:`jst_run`, computed from the closed-form state-space update.

    x1[k+1] = 1 beta^T {(C ⊗ I) F[k] x[k] - E y[k+1]} + E y[k+1]
    x_{2:n}[k+1] = (A_{2:n}[k] ⊗ I) x_{2:n}[k]
    """
    n, m, T = cfg.n, cfg.m, cfg.horizon
    beta = cfg.weights
    ones_beta = np.outer(np.ones(m), beta)
    E = e_head(m)
    y = traj.measurements
    batch = y.shape[:-2]
    x = np.broadcast_to(cfg.x0_guess, batch + (n * m,)).copy()
    x_hat = np.empty(batch + (T + 1, n * m))
    x_hat[..., 0, :] = x
    for k in range(T):
        F, _, _ = ensemble_matrices(cfg, k)
        A = transition_matrix(n, float(cfg.tau[k]))
        Ey = y[..., k + 1, :] @ E.T
        head = (x @ F[:m].T - Ey) @ ones_beta.T + Ey
        tail = x[..., m:] @ np.kron(A[1:, 1:], np.eye(m)).T
        x = np.concatenate([head, tail], axis=-1)
        x_hat[..., k + 1, :] = x
    return _collect(cfg, traj, x_hat, "jst-matrix", True)


def rate_estimate(dev_now: np.ndarray, dev_before: np.ndarray, interval: float) -> np.ndarray:
    """Predicted frequency rate from two external time-deviation readings ``interval`` apart."""
    return (np.asarray(dev_now, float) - np.asarray(dev_before, float)) / interval


def jst_run_order2(
    cfg: EnsembleConfig, traj: Trajectory, deviation_guess: np.ndarray, rate_guess: np.ndarray
) -> RunOutput:
    """Original second-order JST loop: Δĥ += α̂₂ τ, then weighting and update.

    Thin wrapper: the generalized procedure with x̂[0] = (Δĥ[0], α̂₂).
    """
    if cfg.n != 2:
        raise ValueError(f"the second-order procedure needs n = 2, got n = {cfg.n}")
    guess = np.concatenate([np.asarray(deviation_guess, float), np.asarray(rate_guess, float)])
    if guess.shape != (2 * cfg.m,):
        raise ValueError(f"need {cfg.m} deviations and {cfg.m} rates")
    return jst_run(replace(cfg, x0_guess=guess), traj)
