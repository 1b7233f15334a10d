"""Conventional Kalman filter on the full ensemble state, and its observable-subspace twin.

The filter follows the one-step predictor form

    K_k     = P_k H^T (H P_k H^T + R̂)^-1
    P_{k+1} = F[k] (P_k - K_k H P_k) F[k]^T + Ŵ
    x̂[k+1]  = F[k] x̂[k] + K_k (y[k] - H x̂[k])

so x̂[k] uses measurements up to k-1.  The gain has no F factor, so the
error dynamics F - K H are only stable while F stays close enough to the
identity (see ``TheoryOracle.closed_loop_radius``).  The full state is undetectable: the
common mode of P grows without bound, which is what makes long runs
numerically fragile.  Two remedies are available: a covariance-reduction
hook applied after each covariance update, and running the very same
recursion in the canonical basis z = ((I ⊗ V) x, (1/m)(I ⊗ 1^T) x), where the
common-mode blocks of F, H and P_0 are exact zeros.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from clockensemble.model import (
    EnsembleConfig,
    diff_matrix,
    ensemble_noise_cov,
    kron_factor,
    observable_decomp,
    observation_matrix,
    pinv_diff,
    transition_matrix,
)
from clockensemble.output import RunOutput
from clockensemble.simulate import Trajectory

Reduction = Callable[[np.ndarray], np.ndarray]


class FilterError(LinAlgError):
    """Innovation covariance is not positive definite."""


@dataclass
class CkfState:
    x_hat: np.ndarray
    P: np.ndarray
    K: Optional[np.ndarray] = None


@dataclass
class ObsCkfState:
    xi_hat: np.ndarray
    P_hat: np.ndarray
    K_hat: Optional[np.ndarray] = None


def kalman_gain(P: np.ndarray, H: np.ndarray, R_hat: np.ndarray) -> np.ndarray:
    S = H @ P @ H.T + R_hat
    try:
        factor = cho_factor(S, lower=True)
    except LinAlgError as exc:
        raise FilterError(f"innovation covariance is not positive definite: {exc}") from None
    return cho_solve(factor, H @ P).T


def _covariance_update(P, K, F, H, W_hat, R_hat, joseph):
    if joseph:
        IKH = np.eye(P.shape[0]) - K @ H
        post = IKH @ P @ IKH.T + K @ R_hat @ K.T
    else:
        post = P - K @ H @ P
    P_next = F @ post @ F.T + W_hat
    return 0.5 * (P_next + P_next.T)


def ckf_step(
    state: CkfState,
    F: np.ndarray,
    H: np.ndarray,
    W_hat: np.ndarray,
    R_hat: np.ndarray,
    y: np.ndarray,
    *,
    joseph: bool = False,
) -> CkfState:
    """One filter step; ``state.x_hat`` may carry leading path axes."""
    K = kalman_gain(state.P, H, R_hat)
    P = _covariance_update(state.P, K, F, H, W_hat, R_hat, joseph)
    innovation = y - state.x_hat @ H.T
    x_hat = state.x_hat @ F.T + innovation @ K.T
    return CkfState(x_hat=x_hat, P=P, K=K)


def obs_ckf_step(
    state: ObsCkfState,
    F_o: np.ndarray,
    H_o: np.ndarray,
    W_o: np.ndarray,
    R_hat: np.ndarray,
    y: np.ndarray,
) -> ObsCkfState:
    """Filter step on the observable coordinates xi_o = (I ⊗ V) x."""
    full = ckf_step(CkfState(state.xi_hat, state.P_hat), F_o, H_o, W_o, R_hat, y)
    return ObsCkfState(xi_hat=full.x_hat, P_hat=full.P, K_hat=full.K)


class CommonModeProjection:
    """Remove the unobservable common-mode growth from P.

    P <- M P M + G clip(Cc) G^T with M = I_n ⊗ (I - 11^T/m), G = I_n ⊗ 1 and
    Cc = G^T P G / m^2 the common-mode covariance, whose eigenvalues are
    clipped to ``cap``.  The default cap of 0 drops the common mode
    entirely.  Neither term changes P H^T in exact arithmetic under the
    homogeneous-noise hypotheses, so the state estimates are unaffected.
    """

    def __init__(self, n: int, m: int, cap: float = 0.0):
        self.M = np.kron(np.eye(n), pinv_diff(m) @ diff_matrix(m))
        self.G = np.kron(np.eye(n), np.ones((m, 1)))
        self.m = m
        self.cap = float(cap)

    def __call__(self, P: np.ndarray) -> np.ndarray:
        reduced = self.M @ P @ self.M.T
        if self.cap > 0.0:
            common = self.G.T @ P @ self.G / self.m**2
            vals, vecs = np.linalg.eigh(0.5 * (common + common.T))
            common = (vecs * np.clip(vals, 0.0, self.cap)) @ vecs.T
            reduced = reduced + self.G @ common @ self.G.T
        return 0.5 * (reduced + reduced.T)


def covariance_reduction(P: np.ndarray, n: int, m: int, cap: float = 0.0) -> np.ndarray:
    """Apply the default :class:`CommonModeProjection` once."""
    return CommonModeProjection(n, m, cap)(P)


def resolve_reduction(
    reduction: Union[None, str, Reduction], n: int, m: int
) -> Optional[Reduction]:
    if reduction is None or reduction == "none":
        return None
    if reduction == "common-mode":
        return CommonModeProjection(n, m)
    if callable(reduction):
        return reduction
    raise ValueError(f"unknown reduction strategy {reduction!r}; use 'none', 'common-mode' or a callable")


def _step_operators(cfg: EnsembleConfig):
    """F[k] and Ŵ[k] for every step, built once per distinct tau."""
    cache = {}
    for tau in np.unique(cfg.tau):
        F = np.kron(transition_matrix(cfg.n, float(tau)), np.eye(cfg.m))
        W = cfg.w_guess if cfg.w_guess is not None else ensemble_noise_cov(cfg.clocks, float(tau))
        cache[float(tau)] = (F, W)
    return [cache[float(t)] for t in cfg.tau]


def canonical_basis(n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """``(T, T^-1)`` with z = T x stacking observable and common-mode coordinates."""
    I_n = np.eye(n)
    T = np.vstack([np.kron(I_n, diff_matrix(m)), np.kron(I_n, np.ones((1, m))) / m])
    T_inv = np.hstack([np.kron(I_n, pinv_diff(m)), np.kron(I_n, np.ones((m, 1)))])
    return T, T_inv


def ckf_run(
    cfg: EnsembleConfig,
    traj: Trajectory,
    reduction: Union[None, str, Reduction] = None,
    *,
    basis: str = "state",
    joseph: bool = False,
    keep_states: bool = True,
    keep_gains: bool = False,
    diagnostics: bool = True,
) -> RunOutput:
    """Run the full-state filter from P_0 = p0 I over a (possibly batched) trajectory.

    ``basis="canonical"`` runs the identical recursion on z = T x; outputs
    (estimates, gains, covariance diagnostics) are mapped back to x.
    """
    n, m, T = cfg.n, cfg.m, cfg.horizon
    H = observation_matrix(n, m)
    ops = _step_operators(cfg)
    reduce = resolve_reduction(reduction, n, m)
    if basis == "state":
        to_z = from_z = np.eye(n * m)
    elif basis == "canonical":
        if reduce is not None:
            raise ValueError("covariance reduction applies to the state basis only")
        to_z, from_z = canonical_basis(n, m)
        ops = [(to_z @ F @ from_z, to_z @ W @ to_z.T) for F, W in ops]
        H = H @ from_z
    else:
        raise ValueError(f"unknown basis {basis!r}; use 'state' or 'canonical'")
    y = traj.measurements
    batch = y.shape[:-2]

    state = CkfState(
        x_hat=np.broadcast_to(cfg.x0_guess @ to_z.T, batch + (n * m,)).copy(),
        P=cfg.p0 * to_z @ to_z.T,
    )
    z_hat = np.empty(batch + (T + 1, n * m))
    z_hat[..., 0, :] = state.x_hat
    p_trace = np.empty(T + 1) if diagnostics else None
    p_max = np.empty(T + 1) if diagnostics else None
    gains = np.empty((T, n * m, m - 1)) if keep_gains else None

    for k in range(T + 1):
        if diagnostics:
            P_x = from_z @ state.P @ from_z.T
            p_trace[k] = np.trace(P_x)
            p_max[k] = np.linalg.eigvalsh(P_x)[-1]
        if k == T:
            break
        F, W_hat = ops[k]
        state = ckf_step(state, F, H, W_hat, cfg.r_guess, y[..., k, :], joseph=joseph)
        if reduce is not None:
            state.P = reduce(state.P)
        z_hat[..., k + 1, :] = state.x_hat
        if keep_gains:
            gains[k] = from_z @ state.K

    x_hat = z_hat if basis == "state" else z_hat @ from_z.T
    eps = traj.states[..., :m] - x_hat[..., :m]
    name = "ckf" if basis == "state" else "ckf-canonical"
    return RunOutput(
        algorithm=name if reduce is None else "ckf-reduced",
        ta=eps @ cfg.weights,
        residuals=eps,
        x_hat=x_hat if keep_states else None,
        p_trace=p_trace,
        p_max_eig=p_max,
        gains=gains,
    )


@dataclass
class ObsRunOutput:
    """Observable-subspace filter history: ``xi_hat[k]``, gains K̂_k and covariances P̂_k."""

    xi_hat: np.ndarray
    innovations: np.ndarray
    gains: np.ndarray
    covariances: np.ndarray


def obs_ckf_run(
    cfg: EnsembleConfig, traj: Trajectory, P0_hat: Optional[np.ndarray] = None
) -> ObsRunOutput:
    """Observable-subspace filter, started consistently with :func:`ckf_run` by default."""
    n, m, T = cfg.n, cfg.m, cfg.horizon
    systems = {float(t): observable_decomp(cfg, int(np.argmax(cfg.tau == t))) for t in np.unique(cfg.tau)}
    first = systems[float(cfg.tau[0])]
    if P0_hat is None:
        P0_hat = cfg.p0 * first.to_obs @ first.to_obs.T
    y = traj.measurements
    batch = y.shape[:-2]
    d = n * (m - 1)
    state = ObsCkfState(
        xi_hat=np.broadcast_to(cfg.x0_guess @ first.to_obs.T, batch + (d,)).copy(),
        P_hat=np.array(P0_hat, dtype=float),
    )
    xi = np.empty(batch + (T + 1, d))
    innov = np.empty(batch + (T, m - 1))
    gains = np.empty((T, d, m - 1))
    covs = np.empty((T + 1, d, d))
    xi[..., 0, :] = state.xi_hat
    covs[0] = state.P_hat
    for k in range(T):
        sys_k = systems[float(cfg.tau[k])]
        innov[..., k, :] = y[..., k, :] - state.xi_hat @ sys_k.H_o.T
        state = obs_ckf_step(state, sys_k.F_o, sys_k.H_o, sys_k.W_o, cfg.r_guess, y[..., k, :])
        xi[..., k + 1, :] = state.xi_hat
        gains[k] = state.K_hat
        covs[k + 1] = state.P_hat
    return ObsRunOutput(xi_hat=xi, innovations=innov, gains=gains, covariances=covs)


def obs_ckf_lifted(cfg: EnsembleConfig, traj: Trajectory) -> RunOutput:
    """Observable filter mapped back to clock space.

    The common-mode estimate is propagated open loop, which is exactly what
    the full filter does when Ŵ = Q ⊗ I_m (its gain never touches the common
    mode).  Other Ŵ are rejected.
    """
    for tau in np.unique(cfg.tau):
        k = int(np.argmax(cfg.tau == tau))
        if kron_factor(cfg.w_hat(k), cfg.m) is None:
            raise ValueError("the observable filter alone needs Ŵ = Q ⊗ I_m")
    n, m, T = cfg.n, cfg.m, cfg.horizon
    obs = obs_ckf_run(cfg, traj)
    sysm = observable_decomp(cfg, 0)
    batch = traj.measurements.shape[:-2]
    common = np.empty(batch + (T + 1, n))
    common[..., 0, :] = cfg.x0_guess @ sysm.to_unobs.T
    for k in range(T):
        common[..., k + 1, :] = common[..., k, :] @ transition_matrix(n, float(cfg.tau[k])).T
    x_hat = sysm.join(obs.xi_hat, common)
    eps = traj.states[..., :m] - x_hat[..., :m]
    return RunOutput(
        algorithm="obs-ckf",
        ta=eps @ cfg.weights,
        residuals=eps,
        x_hat=x_hat,
        p_trace=np.trace(obs.covariances, axis1=1, axis2=2),
        gains=obs.gains,
    )
