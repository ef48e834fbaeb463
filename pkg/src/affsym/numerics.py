"""Finite-difference helpers shared by the apparatus and the verifier."""

from __future__ import annotations

from typing import Callable

import numpy as np

EPS = float(np.finfo(float).eps)

__all__ = [
    "EPS",
    "default_step",
    "richardson_gradient",
    "stencil_points",
    "combine_stencil",
]


def default_step(points, exponent: float = 1.0 / 3.0, scale: float = 1.0) -> np.ndarray:
    """Per-coordinate step ``scale * eps**exponent * (1 + |x|)``."""
    points = np.asarray(points, dtype=float)
    return scale * EPS**exponent * (1.0 + np.abs(points))


def stencil_points(points: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Offsets ``x +- h e_a`` and ``x +- 2h e_a`` for every coordinate ``a``.

    Args:
        points: array ``(N, d)``.
        steps: array ``(N, d)`` of step sizes.

    Returns:
        Array ``(N, d, 4, d)``; the third axis runs over ``(+h, -h, +2h, -2h)``.
    """
    n, d = points.shape
    out = np.repeat(points[:, None, None, :], d, axis=1).repeat(4, axis=2)
    mult = np.array([1.0, -1.0, 2.0, -2.0])
    for a in range(d):
        out[:, a, :, a] += mult[None, :] * steps[:, a, None]
    return out


def combine_stencil(values: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Richardson-combined central differences from stencil values.

    ``values`` has shape ``(N, d, 4, ...)`` laid out as in :func:`stencil_points`.
    Returns ``(N, d, ...)`` derivatives with O(h^4) truncation error.
    """
    extra = values.ndim - 3
    h = steps.reshape(steps.shape + (1,) * extra)
    d_h = (values[:, :, 0] - values[:, :, 1]) / (2.0 * h)
    d_2h = (values[:, :, 2] - values[:, :, 3]) / (4.0 * h)
    return (4.0 * d_h - d_2h) / 3.0


def richardson_gradient(
    func: Callable[[np.ndarray], np.ndarray],
    points,
    steps=None,
) -> np.ndarray:
    """Gradient of a batched field by Richardson-extrapolated central differences.

    Args:
        func: maps ``(M, d)`` points to ``(M, ...)`` values.
        points: ``(N, d)`` evaluation points.
        steps: optional ``(N, d)`` steps; defaults to :func:`default_step`.

    Returns:
        ``(N, d, ...)`` array, derivative index second.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if steps is None:
        steps = default_step(points)
    steps = np.broadcast_to(np.asarray(steps, dtype=float), points.shape)
    n, d = points.shape
    pts = stencil_points(points, steps).reshape(n * d * 4, d)
    vals = np.asarray(func(pts))
    vals = vals.reshape((n, d, 4) + vals.shape[1:])
    return combine_stencil(vals, steps)
