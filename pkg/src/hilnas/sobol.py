"""Sobol points on the unit cube.

Backed by :class:`scipy.stats.qmc.Sobol` (Joe-Kuo direction numbers). The
all-zero point at index 0 is skipped, so ``sobol(n, d)[0]`` is
``(0.5, ..., 0.5)``. A nonzero seed selects an Owen-scrambled copy of the
sequence.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.stats import qmc

MAX_DIMS = 21201


def sobol(n: int, dims: int, seed: int = 0, skip: int = 0) -> np.ndarray:
    """``n`` points of ``[0, 1)^dims``, starting after ``skip`` earlier points.

    With ``seed == 0`` this is the unscrambled sequence from index ``1 + skip``.
    """
    if not 1 <= dims <= MAX_DIMS:
        raise ValueError(f"dims must be in [1, {MAX_DIMS}]")
    if n < 0:
        raise ValueError("n must be >= 0")
    if seed == 0:
        eng = qmc.Sobol(dims, scramble=False)
        eng.fast_forward(1 + skip)
    else:
        eng = qmc.Sobol(dims, scramble=True, rng=np.random.default_rng(seed))
        if skip:
            eng.fast_forward(skip)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # balance warning for non-power-of-2 n
        return eng.random(n)


class SobolStream:
    """Stateful cursor over one Sobol sequence; successive draws continue it."""

    def __init__(self, dims: int, seed: int = 0):
        self.dims = dims
        self.seed = seed
        self.drawn = 0
        if seed == 0:
            self._eng = qmc.Sobol(dims, scramble=False)
            self._eng.fast_forward(1)
        else:
            self._eng = qmc.Sobol(dims, scramble=True, rng=np.random.default_rng(seed))

    def draw(self, n: int) -> np.ndarray:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            pts = self._eng.random(n)
        self.drawn += n
        return pts
