"""Ground-truth ensemble trajectories with reproducible, separable noise streams."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from clockensemble.model import EnsembleConfig, ensemble_noise_cov, transition_matrix

# stream ids; each (seed, stream) pair is its own Philox key
PROCESS = 0
INITIAL = 1
MEASUREMENT = 2


@dataclass(frozen=True)
class NoiseSeeds:
    process_seed: int
    measurement_seed: int

    @classmethod
    def from_seed(cls, seed: int) -> "NoiseSeeds":
        return cls(process_seed=seed, measurement_seed=seed + 1)


def gaussian_stream(seed: int, stream: int, steps: int, dim: int) -> np.ndarray:
    """Standard normals of shape ``(steps, dim)`` for one (seed, stream) key.

    Each draw consumes exactly one 64-bit word (inverse-CDF transform rather
    than rejection sampling), so row k always comes from the same counter
    range: extending the horizon or drawing other streams never changes it.
    """
    bitgen = np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), stream]))
    raw = bitgen.random_raw(steps * dim)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u).reshape(steps, dim)


def psd_sqrt(W: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix via eigendecomposition.

    Tolerates singular W (zero-variance channels); raises on clearly
    negative eigenvalues.
    """
    W = np.asarray(W, dtype=float)
    if not np.allclose(W, W.T, rtol=1e-12, atol=0.0):
        raise np.linalg.LinAlgError("covariance is not symmetric")
    scale = np.abs(W).max()
    if scale == 0.0:
        return np.zeros_like(W)
    vals, vecs = np.linalg.eigh(W / scale)
    if vals.min() < -1e-10:
        raise np.linalg.LinAlgError(f"covariance is not PSD (min eigenvalue {vals.min() * scale:.3g})")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None) * scale)) @ vecs.T


def sample_process_noise(z: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Map standard normals ``z`` (..., d) to zero-mean Gaussians with covariance W."""
    return z @ psd_sqrt(W).T


@dataclass
class Trajectory:
    """Realized truth of one run (or a batch, with a leading path axis).

    ``states[k]`` is x[k] for k = 0..T, ``measurements[k]`` is y[k] for
    k = 0..T, ``process_noises[k]`` is v[k] for k = 0..T-1 and
    ``measurement_noises[k]`` is w[k].
    """

    states: np.ndarray
    measurements: np.ndarray
    process_noises: np.ndarray
    measurement_noises: np.ndarray

    @property
    def batched(self) -> bool:
        return self.states.ndim == 3

    @property
    def horizon(self) -> int:
        return self.states.shape[-2] - 1

    def path(self, i: int) -> "Trajectory":
        if not self.batched:
            raise ValueError("trajectory is not batched")
        return Trajectory(
            self.states[i], self.measurements[i], self.process_noises[i], self.measurement_noises[i]
        )


@lru_cache(maxsize=64)
def _step_factors(clocks: tuple, tau: float) -> tuple[np.ndarray, np.ndarray]:
    A = transition_matrix(clocks[0].order, tau)
    root = psd_sqrt(ensemble_noise_cov(clocks, tau))
    A.setflags(write=False)
    root.setflags(write=False)
    return A, root


def _noises(cfg: EnsembleConfig, seeds: NoiseSeeds):
    n, m, T = cfg.n, cfg.m, cfg.horizon
    z = gaussian_stream(seeds.process_seed, PROCESS, T, n * m)
    v = np.empty_like(z)
    for tau in np.unique(cfg.tau):
        sel = cfg.tau == tau
        _, root = _step_factors(cfg.clocks, float(tau))
        v[sel] = z[sel] @ root.T
    w = gaussian_stream(seeds.measurement_seed, MEASUREMENT, T + 1, m - 1) @ psd_sqrt(cfg.r).T
    x0 = cfg.x0.copy()
    if cfg.x0_cov is not None:
        x0 = x0 + gaussian_stream(seeds.process_seed, INITIAL, 1, n * m)[0] @ psd_sqrt(cfg.x0_cov).T
    return x0, v, w


def _propagate(cfg: EnsembleConfig, x0: np.ndarray, v: np.ndarray, w: np.ndarray) -> Trajectory:
    # x0: (..., nm), v: (..., T, nm), w: (..., T+1, m-1)
    n, m, T = cfg.n, cfg.m, cfg.horizon
    batch = x0.shape[:-1]
    states = np.empty(batch + (T + 1, n * m))
    states[..., 0, :] = x0
    X = x0.reshape(batch + (n, m))
    for k in range(T):
        A, _ = _step_factors(cfg.clocks, float(cfg.tau[k]))
        X = A @ X + v[..., k, :].reshape(batch + (n, m))
        states[..., k + 1, :] = X.reshape(batch + (n * m,))
    # y = (C ⊗ V) x + w, i.e. time deviation of each clock minus the reference clock
    dev = states[..., :m]
    y = dev[..., : m - 1] - dev[..., m - 1 : m] + w
    return Trajectory(states=states, measurements=y, process_noises=v, measurement_noises=w)


def run_truth(cfg: EnsembleConfig, seeds: NoiseSeeds) -> Trajectory:
    """Simulate one path of the ensemble over ``cfg.horizon`` steps."""
    x0, v, w = _noises(cfg, seeds)
    return _propagate(cfg, x0, v, w)


def run_truth_batch(cfg: EnsembleConfig, seeds: Sequence[NoiseSeeds]) -> Trajectory:
    """Simulate several independent paths at once; path i equals ``run_truth(cfg, seeds[i])``."""
    parts = [_noises(cfg, s) for s in seeds]
    x0 = np.stack([p[0] for p in parts])
    v = np.stack([p[1] for p in parts])
    w = np.stack([p[2] for p in parts])
    return _propagate(cfg, x0, v, w)


def replay(cfg: EnsembleConfig, x0: np.ndarray, v: np.ndarray, w: np.ndarray) -> Trajectory:
    """Rebuild a trajectory from stored noise realizations."""
    return _propagate(cfg, np.asarray(x0, float), np.asarray(v, float), np.asarray(w, float))


def seed_list(seed: int, paths: int) -> list[NoiseSeeds]:
    """Deterministic per-path seeds derived from one master seed."""
    children = np.random.SeedSequence(seed).generate_state(2 * paths, dtype=np.uint64)
    return [NoiseSeeds(int(children[2 * i]), int(children[2 * i + 1])) for i in range(paths)]
