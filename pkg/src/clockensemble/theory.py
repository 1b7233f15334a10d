"""Closed-form predictions for both algorithms, used as executable oracles.

Everything here is driven by the *realized* noises of a trajectory, so the
recursions must reproduce the simulated algorithms step by step, or by the
noise statistics, so they must match Monte-Carlo moments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from clockensemble.model import (
    EnsembleConfig,
    ObservableSystem,
    ensemble_noise_cov,
    kron_factor,
    observable_decomp,
    pinv_diff,
    transition_matrix,
)
from clockensemble.simulate import Trajectory


class HypothesisError(ValueError):
    """The configuration does not satisfy the hypotheses of the requested result."""


class RiccatiError(RuntimeError):
    """Steady-state covariance did not converge."""


def ta_recursion_jst(
    eps_ens: np.ndarray, A: np.ndarray, beta: np.ndarray, v: np.ndarray
) -> np.ndarray:
    """One step of eps_ens[k+1] = A eps_ens[k] + (I_n ⊗ beta^T) v[k]."""
    n = A.shape[0]
    m = beta.size
    return eps_ens @ A.T + v.reshape(v.shape[:-1] + (n, m)) @ beta


def _ens(x: np.ndarray, n: int, beta: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[:-1] + (n, beta.size)) @ beta


def ta_series_jst(cfg: EnsembleConfig, traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Averaged atomic time predicted for JST from the realized process noise alone.

    Returns ``(ta, eps_ens)`` with shapes (..., T+1) and (..., T+1, n).
    """
    n, T = cfg.n, cfg.horizon
    eps = np.empty(traj.states.shape[:-1] + (n,))
    eps[..., 0, :] = _ens(traj.states[..., 0, :] - cfg.x0_guess, n, cfg.weights)
    for k in range(T):
        A = transition_matrix(n, float(cfg.tau[k]))
        eps[..., k + 1, :] = ta_recursion_jst(eps[..., k, :], A, cfg.weights, traj.process_noises[..., k, :])
    return eps[..., 0], eps


@dataclass
class CkfErrors:
    """Prediction errors of the Kalman filter split into observable / unobservable parts."""

    eps_o: np.ndarray
    eps_obar: np.ndarray
    eps_ens: np.ndarray

    @property
    def ta(self) -> np.ndarray:
        return self.eps_ens[..., 0]


def ckf_error_recursion(
    cfg: EnsembleConfig, traj: Trajectory, gains_hat: np.ndarray
) -> CkfErrors:
    """Propagate the filter's error through the observable/unobservable recursions.

    ``gains_hat[k]`` is the observable-space gain K̂_k.  Valid when Ŵ = Q ⊗ I_m,
    in which case the unobservable error ignores measurements completely.
    """
    n, m, T = cfg.n, cfg.m, cfg.horizon
    beta = cfg.weights
    sysm = observable_decomp(cfg, 0)
    row = np.kron(np.eye(n), beta @ pinv_diff(m))  # I_n ⊗ beta^T V†
    v, w = traj.process_noises, traj.measurement_noises
    batch = traj.states.shape[:-2]
    eps_o = np.empty(batch + (T + 1, n * (m - 1)))
    eps_obar = np.empty(batch + (T + 1, n))
    eps_ens = np.empty(batch + (T + 1, n))
    e0 = traj.states[..., 0, :] - cfg.x0_guess
    eps_o[..., 0, :] = e0 @ sysm.to_obs.T
    eps_obar[..., 0, :] = e0 @ sysm.to_unobs.T
    eps_ens[..., 0, :] = _ens(e0, n, beta)
    for k in range(T):
        A = transition_matrix(n, float(cfg.tau[k]))
        F_o = np.kron(A, np.eye(m - 1))
        K = gains_hat[k]
        innov = eps_o[..., k, :] @ sysm.H_o.T + w[..., k, :]
        eps_o[..., k + 1, :] = eps_o[..., k, :] @ F_o.T - innov @ K.T + v[..., k, :] @ sysm.to_obs.T
        eps_obar[..., k + 1, :] = eps_obar[..., k, :] @ A.T + v[..., k, :] @ sysm.to_unobs.T
        eps_ens[..., k + 1, :] = (
            ta_recursion_jst(eps_ens[..., k, :], A, beta, v[..., k, :]) - innov @ (row @ K).T
        )
    return CkfErrors(eps_o=eps_o, eps_obar=eps_obar, eps_ens=eps_ens)


def residual_theory(
    cfg: EnsembleConfig, traj: Trajectory, errors: CkfErrors
) -> tuple[np.ndarray, np.ndarray]:
    """Clock residuals of both algorithms predicted from the filter's error split.

    eps1_jst[k] = -V† w[k] + C eps_obar[k] 1,  eps1_ckf[k] = V† H_o eps_o[k] + C eps_obar[k] 1.
    The JST expression holds for k >= 1 (step 0 is the uncorrected guess).
    """
    _require_residual_hypotheses(cfg)
    m = cfg.m
    Vp = pinv_diff(m)
    common = errors.eps_obar[..., :1]
    jst = -traj.measurement_noises @ Vp.T + common
    ckf = errors.eps_o[..., : m - 1] @ Vp.T + common
    return jst, ckf


def ta_moments(
    cfg: EnsembleConfig, mu0: np.ndarray, P0: Optional[np.ndarray], k
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of TA[k] when the initial error is mu0 ⊗ 1 with covariance P0.

    Needs a constant sampling interval and identical clocks (true W = Q ⊗ I_m).
    ``k`` may be an int or an array of step indices.
    """
    if not cfg.constant_tau:
        raise HypothesisError("TA moments need a constant sampling interval")
    if not cfg.homogeneous:
        raise HypothesisError("TA moments need identical clocks (W = Q ⊗ I_m)")
    n, m = cfg.n, cfg.m
    beta = cfg.weights
    tau = float(cfg.tau[0])
    A = transition_matrix(n, tau)
    Q = ensemble_noise_cov(cfg.clocks[:1], tau)  # one clock: n x n block
    mu0 = np.asarray(mu0, dtype=float)
    ks = np.atleast_1d(np.asarray(k, dtype=int))
    kmax = int(ks.max())
    B = np.kron(np.eye(n), beta[None, :])
    cov = np.zeros((n, n)) if P0 is None else B @ np.asarray(P0, float) @ B.T
    mean_vec = mu0.copy()
    means = np.empty(kmax + 1)
    variances = np.empty(kmax + 1)
    bb = float(beta @ beta)
    for i in range(kmax + 1):
        means[i] = mean_vec[0]
        variances[i] = cov[0, 0]
        mean_vec = A @ mean_vec
        cov = A @ cov @ A.T + bb * Q
    if np.ndim(k) == 0:
        return means[ks[0]], variances[ks[0]]
    return means[ks], variances[ks]


def _riccati_map(P, F, H, W, R):
    S = H @ P @ H.T + R
    gain = np.linalg.solve(S, H @ P @ F.T)
    out = F @ P @ F.T - (F @ P @ H.T) @ gain + W
    return 0.5 * (out + out.T)


def riccati_residual(P: np.ndarray, F: np.ndarray, H: np.ndarray, W: np.ndarray, R: np.ndarray) -> float:
    """Relative Frobenius residual of the filter Riccati equation at P."""
    norm = np.linalg.norm(P)
    diff = np.linalg.norm(_riccati_map(P, F, H, W, R) - P)
    return diff / norm if norm > 0 else diff


def riccati_steady_state(
    F: np.ndarray,
    H: np.ndarray,
    W: np.ndarray,
    R_hat: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 10**6,
    method: str = "doubling",
) -> np.ndarray:
    """Steady state of P <- F (P - K H P) F^T + W.

    ``method="iterate"`` runs the filter recursion itself until the relative
    Frobenius change stays below ``tol`` for 10 consecutive steps.
    ``method="doubling"`` (default) jumps from the 2^j-th to the 2^(j+1)-th
    iterate of the same recursion, so it converges to the same limit in a
    few dozen steps even when the filter's own time constant is huge.
    """
    F, H, W, R_hat = (np.asarray(a, dtype=float) for a in (F, H, W, R_hat))
    scale = max(np.abs(W).max(), np.abs(R_hat).max())
    if scale == 0.0:
        return np.zeros_like(W)
    W_s, R_s = W / scale, R_hat / scale
    if method == "iterate":
        P = W_s.copy()
        calm = 0
        for _ in range(max_iter):
            P_next = _riccati_map(P, F, H, W_s, R_s)
            norm = np.linalg.norm(P_next)
            change = np.linalg.norm(P_next - P) / norm if norm > 0 else 0.0
            P = P_next
            calm = calm + 1 if change <= tol else 0
            if calm >= 10:
                return P * scale
        raise RiccatiError(f"Riccati iteration did not converge in {max_iter} steps")
    if method != "doubling":
        raise ValueError(f"unknown Riccati method {method!r}")

    d = F.shape[0]
    I = np.eye(d)
    A_k = F.T.copy()
    G_k = H.T @ np.linalg.solve(R_s, H)
    P = W_s.copy()
    calm = 0
    for _ in range(min(max_iter, 200)):
        M = I + G_k @ P
        A_sol = np.linalg.solve(M, A_k)
        P_next = P + A_k.T @ P @ A_sol
        G_k = G_k + A_k @ np.linalg.solve(M, G_k) @ A_k.T
        A_k = A_k @ A_sol
        P_next = 0.5 * (P_next + P_next.T)
        G_k = 0.5 * (G_k + G_k.T)
        norm = np.linalg.norm(P_next)
        change = np.linalg.norm(P_next - P) / norm if norm > 0 else 0.0
        P = P_next
        calm = calm + 1 if change <= tol else 0
        if calm >= 2:
            return P * scale
    raise RiccatiError("Riccati doubling did not converge")


@dataclass
class HypothesisReport:
    """Which equivalence hypotheses a configuration meets."""

    w_kronecker: bool
    equal_weights: bool
    p0_scalar: bool
    constant_tau: bool
    Q: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def prediction(self) -> Optional[str]:
        """'equal' / 'unequal' TA for JST vs. the filter, or None when Ŵ breaks the hypotheses."""
        if not (self.w_kronecker and self.p0_scalar):
            return None
        return "equal" if self.equal_weights else "unequal"


def _w_guess_factor(cfg: EnsembleConfig) -> Optional[np.ndarray]:
    if cfg.w_guess is not None:
        return kron_factor(cfg.w_guess, cfg.m)
    if cfg.homogeneous:
        return ensemble_noise_cov(cfg.clocks[:1], float(cfg.tau[0]))
    return None


def check_equivalence_hypotheses(cfg: EnsembleConfig, rtol: float = 1e-12) -> HypothesisReport:
    m = cfg.m
    Q = _w_guess_factor(cfg)
    equal = bool(np.allclose(cfg.weights, 1.0 / m, rtol=0.0, atol=rtol))
    return HypothesisReport(
        w_kronecker=Q is not None,
        equal_weights=equal,
        p0_scalar=True,  # P_0 = p0 I by construction
        constant_tau=cfg.constant_tau,
        Q=Q,
    )


def _require_residual_hypotheses(cfg: EnsembleConfig) -> None:
    report = check_equivalence_hypotheses(cfg)
    if not report.w_kronecker:
        raise HypothesisError("residual results need Ŵ = Q ⊗ I_m")
    if not report.equal_weights:
        raise HypothesisError("residual results need equal weights 1/m")


@dataclass
class LiResult:
    values: np.ndarray
    verdicts: list[str]
    difference: np.ndarray  # V† (R - H_o P_ss H_o^T) V†^T
    all_jst_better: bool  # R - H_o P_ss H_o^T negative definite


class TheoryOracle:
    """Closed-form quantities for one configuration; the Riccati solve is cached."""

    def __init__(self, cfg: EnsembleConfig):
        self.cfg = cfg
        self.hypotheses = check_equivalence_hypotheses(cfg)

    @cached_property
    def system(self) -> ObservableSystem:
        return observable_decomp(self.cfg, 0)

    @cached_property
    def P_ss(self) -> np.ndarray:
        if not self.cfg.constant_tau:
            raise HypothesisError("steady-state covariance needs a constant sampling interval")
        s = self.system
        return riccati_steady_state(s.F_o, s.H_o, s.W_o, self.cfg.r_guess)

    def closed_loop_radius(self) -> float:
        """Spectral radius of F_o - K_ss H_o for the steady-state gain K_ss = P_ss H_o^T S^-1.

        The gain carries no F factor, so for long sampling intervals and
        high model orders this can exceed 1, and then the filter diverges.
        """
        s = self.system
        S = s.H_o @ self.P_ss @ s.H_o.T + self.cfg.r_guess
        K = np.linalg.solve(S, s.H_o @ self.P_ss).T
        return float(np.abs(np.linalg.eigvals(s.F_o - K @ s.H_o)).max())

    def li_criterion(self, R: Optional[np.ndarray] = None) -> LiResult:
        _require_residual_hypotheses(self.cfg)
        R = self.cfg.r if R is None else np.asarray(R, dtype=float)
        H_o = self.system.H_o
        gap = R - H_o @ self.P_ss @ H_o.T
        Vp = pinv_diff(self.cfg.m)
        diff = Vp @ gap @ Vp.T
        values = np.diag(diff).copy()
        tol = 1e-6 * np.linalg.norm(gap, 2)
        verdicts = ["jst" if L < -tol else "ckf" if L > tol else "tie" for L in values]
        all_better = bool(np.linalg.eigvalsh(0.5 * (gap + gap.T)).max() < 0)
        return LiResult(values=values, verdicts=verdicts, difference=diff, all_jst_better=all_better)


def li_criterion(cfg: EnsembleConfig, R: Optional[np.ndarray] = None) -> LiResult:
    return TheoryOracle(cfg).li_criterion(R)
