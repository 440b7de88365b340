"""Helpers for moment functions written as (outcome pattern -> value) tables."""

from __future__ import annotations

from typing import Iterable, Optional, Sequence, Tuple

import numpy as np


def match(y: np.ndarray, pattern: Sequence[int], positions: Optional[Sequence[int]] = None) -> np.ndarray:
    """True where ``y`` agrees with ``pattern``.

    ``positions`` are 1-based periods; by default the pattern is a prefix.
    """
    if positions is None:
        positions = range(1, len(pattern) + 1)
    mask = np.ones(y.shape[:-1], dtype=bool)
    for pos, val in zip(positions, pattern):
        mask &= y[..., pos - 1] == val
    return mask


def piecewise(
    y: np.ndarray,
    cases: Iterable[Tuple[Sequence[int], np.ndarray]],
    positions: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Value of the first matching case, 0 where no pattern matches.

    Values are computed for every outcome and then masked, so branches that
    overflow are harmless.
    """
    cases = list(cases)
    shape = y.shape[:-1]
    for _, value in cases:
        shape = np.broadcast_shapes(shape, np.shape(value))
    out = np.zeros(shape)
    with np.errstate(over="ignore", invalid="ignore"):
        for pattern, value in reversed(cases):
            out = np.where(match(y, pattern, positions), value, out)
    return out


class IndexDiffs:
    """Lazy ``exp(z_t - z_s)`` lookups for a single-index path ``z``."""

    def __init__(self, z: np.ndarray):
        self.z = z

    def d(self, t: int, s: int) -> np.ndarray:
        return self.z[..., t - 1] - self.z[..., s - 1]

    def e(self, t: int, s: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.d(t, s))


def as_int(a) -> np.ndarray:
    return np.asarray(a).astype(np.int64)
