"""State-space model of an m-clock ensemble of n-th order clocks.

State layout is derivative-order major: ``x = (x_1, ..., x_n)`` where each
block ``x_i`` holds the i-th state component of all m clocks, so block 1 is
the vector of time deviations.  Every Kronecker product in the package
follows ``(order matrix) ⊗ (clock matrix)`` with this layout, and
``x.reshape(n, m)`` recovers the blocks as rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

ArrayLike = Union[Sequence[float], np.ndarray]

WEIGHT_TOL = 1e-12


class ConfigError(ValueError):
    """Invalid ensemble or experiment configuration."""


@dataclass(frozen=True)
class ClockSpec:
    """Order and diffusion coefficients of a single clock."""

    order: int
    sigma: tuple[float, ...]

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ConfigError(f"clock order must be an integer >= 1, got {self.order!r}")
        sigma = tuple(float(s) for s in self.sigma)
        if len(sigma) != self.order:
            raise ConfigError(f"sigma needs {self.order} entries, got {len(sigma)}")
        if any(not math.isfinite(s) or s < 0 for s in sigma):
            raise ConfigError(f"sigma entries must be finite and >= 0, got {sigma}")
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "sigma", sigma)


def _as_matrix(value, size: int, name: str) -> np.ndarray:
    """Scalar -> value * I, otherwise a symmetric PSD size x size matrix."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = float(arr) * np.eye(size)
    if arr.shape != (size, size):
        raise ConfigError(f"{name} must be {size}x{size}, got shape {arr.shape}")
    if not np.allclose(arr, arr.T, rtol=1e-12, atol=0.0):
        raise ConfigError(f"{name} must be symmetric")
    scale = max(np.abs(arr).max(), np.finfo(float).tiny)
    if np.linalg.eigvalsh(arr / scale).min() < -1e-10:
        raise ConfigError(f"{name} must be positive semidefinite")
    return arr


@dataclass
class EnsembleConfig:
    """Everything needed to simulate an ensemble and run both algorithms.

    ``r`` is the actual measurement-noise covariance used by the simulator;
    ``r_guess`` and ``w_guess`` are what the Kalman filter believes.  A
    ``w_guess`` of ``None`` means the filter uses the true process-noise
    covariance at every step (which follows ``tau`` when it varies).
    ``x0_cov``, if given, makes the true initial state Gaussian around ``x0``.
    """

    clocks: Sequence[ClockSpec]
    horizon: int
    tau: Union[float, ArrayLike] = 1.0
    weights: Optional[ArrayLike] = None
    r: Union[float, ArrayLike] = 0.0
    r_guess: Optional[Union[float, ArrayLike]] = None
    w_guess: Optional[ArrayLike] = None
    p0: float = 1e-8
    x0: Optional[ArrayLike] = None
    x0_guess: Optional[ArrayLike] = None
    x0_cov: Optional[ArrayLike] = None

    def __post_init__(self):
        self.clocks = tuple(self.clocks)
        m = len(self.clocks)
        if m < 2:
            raise ConfigError(f"an ensemble needs at least 2 clocks, got {m}")
        orders = {c.order for c in self.clocks}
        if len(orders) != 1:
            raise ConfigError(f"all clocks must share one model order, got {sorted(orders)}")
        n = orders.pop()
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ConfigError(f"horizon must be a positive integer, got {self.horizon!r}")
        self.horizon = int(self.horizon)

        tau = np.asarray(self.tau, dtype=float)
        if tau.ndim == 0:
            tau = np.full(self.horizon, float(tau))
        elif tau.ndim != 1 or tau.size < self.horizon:
            raise ConfigError(f"tau schedule needs at least {self.horizon} entries, got {tau.size}")
        if not np.all(tau > 0) or not np.all(np.isfinite(tau)):
            raise ConfigError("tau entries must all be positive and finite")
        self.tau = tau[: self.horizon].copy()

        if self.weights is None:
            beta = np.full(m, 1.0 / m)
        else:
            beta = np.asarray(self.weights, dtype=float)
        if beta.shape != (m,):
            raise ConfigError(f"weights must have {m} entries, got shape {beta.shape}")
        if abs(beta.sum() - 1.0) > WEIGHT_TOL:
            raise ConfigError(f"weights must sum to 1, got {float(beta.sum())!r}")
        self.weights = beta

        self.r = _as_matrix(self.r, m - 1, "r")
        self.r_guess = self.r.copy() if self.r_guess is None else _as_matrix(self.r_guess, m - 1, "r_guess")
        if self.w_guess is not None:
            self.w_guess = _as_matrix(self.w_guess, n * m, "w_guess")
        if not self.p0 > 0:
            raise ConfigError(f"p0 must be positive, got {self.p0!r}")
        self.p0 = float(self.p0)

        self.x0 = np.zeros(n * m) if self.x0 is None else np.asarray(self.x0, dtype=float).copy()
        if self.x0.shape != (n * m,):
            raise ConfigError(f"x0 must have {n * m} entries, got shape {self.x0.shape}")
        guess = self.x0 if self.x0_guess is None else self.x0_guess
        self.x0_guess = np.asarray(guess, dtype=float).copy()
        if self.x0_guess.shape != (n * m,):
            raise ConfigError(f"x0_guess must have {n * m} entries, got shape {self.x0_guess.shape}")
        if self.x0_cov is not None:
            self.x0_cov = _as_matrix(self.x0_cov, n * m, "x0_cov")

    @property
    def m(self) -> int:
        return len(self.clocks)

    @property
    def n(self) -> int:
        return self.clocks[0].order

    @property
    def constant_tau(self) -> bool:
        return bool(np.all(self.tau == self.tau[0]))

    @property
    def homogeneous(self) -> bool:
        """True when every clock has the same diffusion coefficients."""
        return len({c.sigma for c in self.clocks}) == 1

    def w_hat(self, k: int) -> np.ndarray:
        """Process-noise covariance the filter assumes at step k."""
        if self.w_guess is not None:
            return self.w_guess
        return ensemble_noise_cov(self.clocks, float(self.tau[k]))


def homogeneous_ensemble(
    m: int, sigma: Sequence[float], horizon: int, **kwargs
) -> EnsembleConfig:
    """Shortcut for m identical clocks."""
    clock = ClockSpec(len(sigma), tuple(sigma))
    return EnsembleConfig(clocks=[clock] * m, horizon=horizon, **kwargs)


def transition_matrix(n: int, tau: float) -> np.ndarray:
    """Upper-triangular Taylor matrix with entries tau^(j-i) / (j-i)!."""
    if int(n) != n or n < 1:
        raise ValueError(f"order must be an integer >= 1, got {n!r}")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau!r}")
    A = np.zeros((n, n))
    for d in range(n):
        coef = tau**d / math.factorial(d)
        idx = np.arange(n - d)
        A[idx, idx + d] = coef
    return A


def _noise_cov(sigma: Sequence[float], tau: float) -> np.ndarray:
    # channel i enters rows a <= i with weight s^(i-a)/(i-a)!; integrate the product over [0, tau]
    n = len(sigma)
    Q = np.zeros((n, n))
    for i, s in enumerate(sigma):
        if s == 0.0:
            continue
        for a in range(i + 1):
            for b in range(i + 1):
                p, q = i - a, i - b
                Q[a, b] += s * tau ** (p + q + 1) / (
                    math.factorial(p) * math.factorial(q) * (p + q + 1)
                )
    return Q


def process_noise_cov(clock: ClockSpec, tau: float) -> np.ndarray:
    """Covariance of one clock's discretized process noise over an interval tau."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau!r}")
    return _noise_cov(clock.sigma, tau)


def ensemble_noise_cov(clocks: Sequence[ClockSpec], tau: float) -> np.ndarray:
    """Block-diagonal-by-clock process-noise covariance in the ensemble layout."""
    m = len(clocks)
    n = clocks[0].order
    W = np.zeros((n * m, n * m))
    for j, clock in enumerate(clocks):
        idx = np.arange(n) * m + j
        W[np.ix_(idx, idx)] = process_noise_cov(clock, tau)
    return W


def diff_matrix(m: int) -> np.ndarray:
    """``[I_{m-1}, -1]``: differences of every clock against reference clock m."""
    if int(m) != m or m < 2:
        raise ValueError(f"need m >= 2 clocks, got {m!r}")
    return np.hstack([np.eye(m - 1), -np.ones((m - 1, 1))])


def pinv_diff(m: int) -> np.ndarray:
    """Closed-form Moore-Penrose pseudoinverse of :func:`diff_matrix`."""
    V = diff_matrix(m)
    return V.T @ (np.eye(m - 1) - np.ones((m - 1, m - 1)) / m)


def observation_matrix(n: int, m: int) -> np.ndarray:
    C = np.zeros((1, n))
    C[0, 0] = 1.0
    return np.kron(C, diff_matrix(m))


def ensemble_matrices(cfg: EnsembleConfig, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(F[k], H, W[k])`` with W the true process-noise covariance."""
    tau = float(cfg.tau[k])
    F = np.kron(transition_matrix(cfg.n, tau), np.eye(cfg.m))
    H = observation_matrix(cfg.n, cfg.m)
    W = ensemble_noise_cov(cfg.clocks, tau)
    return F, H, W


def e_head(m: int) -> np.ndarray:
    """``[I_{m-1}; 0]``, embedding the m-1 measurements into clock space (y_mm = 0)."""
    return np.vstack([np.eye(m - 1), np.zeros((1, m - 1))])


@dataclass(frozen=True)
class Projections:
    P: np.ndarray
    P_bar: np.ndarray
    V_ddag: np.ndarray


def _check_weights(beta: np.ndarray) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 1 or beta.size < 2:
        raise ValueError("weights must be a vector of length >= 2")
    if abs(beta.sum() - 1.0) > WEIGHT_TOL:
        raise ValueError(f"weights must sum to 1, got {beta.sum()!r}")
    return beta


def projections(beta: ArrayLike) -> Projections:
    """Weighted-average projector ``1 beta^T``, its complement, and ``V-double-dagger``."""
    beta = _check_weights(beta)
    m = beta.size
    ones = np.ones(m)
    P = np.outer(ones, beta)
    V_ddag = pinv_diff(m) - np.outer(ones, (beta - ones / m)[: m - 1])
    return Projections(P=P, P_bar=np.eye(m) - P, V_ddag=V_ddag)


def jst_error_operators(n: int, beta: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    """Operators ``(F_ddag, F_bar)`` of the JST prediction-error recursion.

    ``eps[k+1] = F_ddag (A[k] ⊗ I) eps[k] + F_ddag v[k] - F_bar w[k+1]``.
    """
    beta = _check_weights(beta)
    m = beta.size
    proj = projections(beta)
    F_ddag = np.eye(n * m)
    F_ddag[:m, :m] = proj.P
    F_bar = np.zeros((n * m, m - 1))
    F_bar[:m] = proj.V_ddag
    return F_ddag, F_bar


@dataclass(frozen=True)
class ObservableSystem:
    """Observable subsystem plus the coordinate maps between x and (xi_o, xi_obar)."""

    F_o: np.ndarray
    H_o: np.ndarray
    W_o: np.ndarray
    to_obs: np.ndarray
    to_unobs: np.ndarray
    from_obs: np.ndarray
    from_unobs: np.ndarray = field(repr=False)

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return x @ self.to_obs.T, x @ self.to_unobs.T

    def join(self, xi_o: np.ndarray, xi_obar: np.ndarray) -> np.ndarray:
        return xi_o @ self.from_obs.T + xi_obar @ self.from_unobs.T


def observable_decomp(cfg: EnsembleConfig, k: int) -> ObservableSystem:
    """Observable Kalman canonical decomposition at step k (uses the filter's W guess)."""
    n, m = cfg.n, cfg.m
    I_n = np.eye(n)
    V = diff_matrix(m)
    to_obs = np.kron(I_n, V)
    C = np.zeros((1, n))
    C[0, 0] = 1.0
    return ObservableSystem(
        F_o=np.kron(transition_matrix(n, float(cfg.tau[k])), np.eye(m - 1)),
        H_o=np.kron(C, np.eye(m - 1)),
        W_o=to_obs @ cfg.w_hat(k) @ to_obs.T,
        to_obs=to_obs,
        to_unobs=np.kron(I_n, np.ones((1, m))) / m,
        from_obs=np.kron(I_n, pinv_diff(m)),
        from_unobs=np.kron(I_n, np.ones((m, 1))),
    )


def kron_factor(W: np.ndarray, m: int, rtol: float = 1e-9) -> Optional[np.ndarray]:
    """Return Q if ``W == Q ⊗ I_m`` within ``rtol`` (relative to max|W|), else None."""
    W = np.asarray(W, dtype=float)
    if W.shape[0] % m:
        return None
    n = W.shape[0] // m
    Q = W[::m, ::m].copy()
    scale = np.abs(W).max()
    if scale == 0.0:
        return Q
    if np.abs(np.kron(Q, np.eye(m)) - W).max() > rtol * scale:
        return None
    return Q
