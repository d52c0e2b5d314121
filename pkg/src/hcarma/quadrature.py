"""Composite Simpson weights on uniform grids."""

from __future__ import annotations

import math

import numpy as np

MIN_INTERVALS = 16


def simpson_weights(n_intervals: int, h: float) -> np.ndarray:
    """Weights for the integral over ``n_intervals`` uniform steps of size ``h``.

    Even counts use the composite 1-4-2-...-4-1 rule.  Odd counts >= 3 use
    Simpson on the first n-3 intervals and the 3/8 rule on the last three.
    A single interval falls back to the trapezoid rule.
    """
    n = int(n_intervals)
    w = np.zeros(n + 1)
    if n == 0:
        return w
    if n == 1:
        w[:] = h / 2
        return w
    m = n if n % 2 == 0 else n - 3
    if m > 0:
        s = np.full(m + 1, 2.0)
        s[1:m:2] = 4.0
        s[0] = s[m] = 1.0
        w[:m + 1] += s * (h / 3)
    if n % 2:
        w[m:m + 4] += np.array([1.0, 3.0, 3.0, 1.0]) * (3 * h / 8)
    return w


def uniform_grid(length: float, nodes_per_unit: int, min_intervals: int = MIN_INTERVALS,
                 max_step: float | None = None, even: bool = True) -> tuple[np.ndarray, float]:
    """Uniform grid on [0, length] with at least ``nodes_per_unit`` intervals per unit.

    ``max_step`` adds a stiffness floor so that fast modes are resolved.
    """
    if length <= 0:
        return np.zeros(1), 0.0
    n = max(int(math.ceil(nodes_per_unit * length)), min_intervals)
    if max_step is not None and max_step > 0:
        n = max(n, int(math.ceil(length / max_step)))
    if even and n % 2:
        n += 1
    h = length / n
    return np.linspace(0.0, length, n + 1), h


def simpson(values: np.ndarray, h: float) -> np.ndarray:
    """Integrate samples on a uniform grid along axis 0."""
    w = simpson_weights(values.shape[0] - 1, h)
    return np.tensordot(w, values, axes=(0, 0))
