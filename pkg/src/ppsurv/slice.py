"""Univariate slice sampling (stepping-out and shrinkage)."""
from __future__ import annotations

import math

import numpy as np

from .errors import SamplerError

MAX_SHRINK = 200


def slice_sample_1d(log_density, x0: float, width: float = 1.0, max_steps: int = 10,
                    rng: np.random.Generator | None = None, fx0: float | None = None,
                    coordinate: str = "x", return_logp: bool = False):
    """One slice-sampling update of ``x0`` under ``log_density``.

    The initial interval of size ``width`` is placed at random around ``x0``
    and stepped out at most ``max_steps`` times in total, then shrunk toward
    ``x0`` until a point inside the slice is found.
    """
    if width <= 0:
        raise ValueError("width must be positive")
    rng = np.random.default_rng() if rng is None else rng
    if fx0 is None:
        fx0 = log_density(x0)
    if not math.isfinite(fx0):
        raise SamplerError(f"{coordinate}: log density is not finite at the starting point {x0!r}")
    level = fx0 - rng.exponential()
    left = x0 - width * rng.random()
    right = left + width
    j = int(math.floor(max_steps * rng.random()))
    k = max_steps - 1 - j
    while j > 0 and log_density(left) > level:
        left -= width
        j -= 1
    while k > 0 and log_density(right) > level:
        right += width
        k -= 1
    for _ in range(MAX_SHRINK):
        x1 = left + rng.random() * (right - left)
        f1 = log_density(x1)
        if math.isnan(f1):
            raise SamplerError(f"{coordinate}: log density returned NaN at {x1!r}")
        if f1 > level:
            return (x1, f1) if return_logp else x1
        if x1 < x0:
            left = x1
        else:
            right = x1
    raise SamplerError(f"{coordinate}: shrinkage did not find a point in the slice")
