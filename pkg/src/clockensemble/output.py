from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class RunOutput:
    """Per-step results of one algorithm over a trajectory (or batch of them).

    ``residuals[..., k, i]`` is the clock residual of clock i at step k, i.e.
    true minus predicted time deviation, and ``ta`` is its weighted sum.
    Covariance diagnostics are only produced by the Kalman filter and are
    path-independent.
    """

    algorithm: str
    ta: np.ndarray
    residuals: np.ndarray
    x_hat: Optional[np.ndarray] = None
    p_trace: Optional[np.ndarray] = None
    p_max_eig: Optional[np.ndarray] = None
    gains: Optional[np.ndarray] = None
