"""Double-well potential, its convex-concave split, and the secant slope."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Array = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PotentialSplit:
    """A potential W = W_plus - W_minus with both parts convex.

    ``convex_curvature`` and ``concave_curvature`` (W_plus'', W_minus'')
    enter the Newton Jacobian of the first-order schemes. The values of the
    two parts are optional and only used to check the split.
    """

    value: Array
    derivative: Array
    convex_derivative: Array
    concave_derivative: Array
    convex_curvature: Array
    concave_curvature: Array
    convex_value: Array | None = None
    concave_value: Array | None = None
    name: str = "custom"


def _w(u):
    return 0.25 * (u * u - 1.0) ** 2


def _dw(u):
    return (u * u - 1.0) * u


def double_well() -> PotentialSplit:
    """W(u) = (u^2 - 1)^2 / 4 split as (u^4 + 1)/4 - u^2/2."""
    return PotentialSplit(
        value=_w,
        derivative=_dw,
        convex_derivative=lambda u: u**3,
        concave_derivative=lambda u: 1.0 * u,
        convex_curvature=lambda u: 3.0 * u**2,
        concave_curvature=lambda u: np.ones_like(u, dtype=float),
        convex_value=lambda u: 0.25 * (u**4 + 1.0),
        concave_value=lambda u: 0.5 * u**2,
        name="double_well",
    )


def cn_slope(a, b):
    """Secant slope of the double well between ``a`` and ``b``.

    ``cn_slope(a, b) * (b - a) == W(b) - W(a)`` holds identically, which is
    what makes the Crank-Nicolson type schemes dissipative.
    """
    return (0.5 * (a * a + b * b) - 1.0) * 0.5 * (a + b)


def cn_slope_partials(a, b):
    """Return (d/da, d/db) of :func:`cn_slope`."""
    q = 0.5 * (a * a + b * b) - 1.0
    s = 0.5 * (a + b)
    return a * s + 0.5 * q, b * s + 0.5 * q


DOUBLE_WELL = double_well()
