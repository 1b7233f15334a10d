"""Statistics over runs: Allan deviation, Monte-Carlo bands, residual variances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass
class AdevCurve:
    taus: np.ndarray
    adev: np.ndarray


def octave_factors(length: int) -> list[int]:
    """Averaging factors 1, 2, 4, ... usable on a phase series of ``length`` samples."""
    out, f = [], 1
    while length - 2 * f >= 1:
        out.append(f)
        f *= 2
    return out


def overlapping_adev(
    phase: Sequence[float], tau0: float, factors: Optional[Sequence[int]] = None
) -> AdevCurve:
    """Overlapping Allan deviation of a time-deviation (phase) series sampled every tau0.

    sigma^2(f tau0) = sum_i (x[i+2f] - 2 x[i+f] + x[i])^2 / (2 (f tau0)^2 (N - 2f))
    """
    x = np.asarray(phase, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise ValueError("phase series needs at least 3 samples")
    if not tau0 > 0:
        raise ValueError(f"tau0 must be positive, got {tau0!r}")
    factors = octave_factors(x.size) if factors is None else sorted(int(f) for f in factors)
    taus, devs = [], []
    for f in factors:
        if f < 1 or x.size - 2 * f < 1:
            raise ValueError(f"series of {x.size} samples is too short for averaging factor {f}")
        d2 = x[2 * f :] - 2.0 * x[f:-f] + x[: -2 * f]
        taus.append(f * tau0)
        devs.append(np.sqrt(np.mean(d2**2) / (2.0 * (f * tau0) ** 2)))
    return AdevCurve(taus=np.array(taus), adev=np.array(devs))


def loglog_slope(curve: AdevCurve) -> float:
    return float(np.polyfit(np.log10(curve.taus), np.log10(curve.adev), 1)[0])


@dataclass
class Band:
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


def confidence_band(paths: np.ndarray, level: float = 0.98) -> Band:
    """Pointwise mean and central empirical quantile band across paths (axis 0)."""
    paths = np.asarray(paths, dtype=float)
    if paths.ndim != 2 or paths.shape[0] < 2:
        raise ValueError("need a (paths, steps) array with at least 2 paths")
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level!r}")
    lo, hi = np.quantile(paths, [(1 - level) / 2, (1 + level) / 2], axis=0)
    return Band(mean=paths.mean(axis=0), lo=lo, hi=hi)


@dataclass
class VarianceComparison:
    """Tail-window Var(JST residual) - Var(filter residual) per clock, with its standard error."""

    difference: np.ndarray
    stderr: np.ndarray
    var_jst: np.ndarray
    var_ckf: np.ndarray


def residual_variance_compare(
    eps_jst: np.ndarray,
    eps_ckf: np.ndarray,
    tail_fraction: float = 0.2,
    batches: int = 20,
) -> VarianceComparison:
    """Compare residual variances over the final ``tail_fraction`` of steps.

    Inputs are (paths, steps, m) residual arrays from the same trajectories.
    Variances are taken across paths at each step and averaged over the tail
    window.  The standard error comes from splitting the paths into
    ``batches`` independent groups.
    """
    eps_jst = np.asarray(eps_jst, dtype=float)
    eps_ckf = np.asarray(eps_ckf, dtype=float)
    if eps_jst.shape != eps_ckf.shape or eps_jst.ndim != 3:
        raise ValueError("need two (paths, steps, clocks) arrays of equal shape")
    paths, steps, _ = eps_jst.shape
    if paths < 2 * batches:
        raise ValueError(f"need at least {2 * batches} paths for {batches} batches")
    start = min(steps - 1, int(np.floor((1.0 - tail_fraction) * steps)))
    tail_j = eps_jst[:, start:]
    tail_c = eps_ckf[:, start:]
    var_j = tail_j.var(axis=0, ddof=1).mean(axis=0)
    var_c = tail_c.var(axis=0, ddof=1).mean(axis=0)
    groups = np.array_split(np.arange(paths), batches)
    per_group = np.array(
        [
            tail_j[g].var(axis=0, ddof=1).mean(axis=0) - tail_c[g].var(axis=0, ddof=1).mean(axis=0)
            for g in groups
        ]
    )
    return VarianceComparison(
        difference=var_j - var_c,
        stderr=per_group.std(axis=0, ddof=1) / np.sqrt(batches),
        var_jst=var_j,
        var_ckf=var_c,
    )
