"""Central finite-difference helpers shared by task-map adapters and test oracles."""

from typing import Callable

import numpy as np

REL_STEP = 1e-6


def step_size(point: np.ndarray) -> float:
    """Step 1e-6 * (1 + ||point||) used for every central difference."""
    return REL_STEP * (1.0 + float(np.linalg.norm(point)))


def central_jacobian(fn: Callable, point: np.ndarray) -> np.ndarray:
    """
    Jacobian of a vector (or scalar) function by central differences.

    :param fn: Callable mapping an n-vector to an m-vector or a scalar.
    :param point: Evaluation point.
    :return: Array of shape (m, n); a scalar function yields shape (n,).
    :rtype: np.ndarray
    """
    point = np.asarray(point, dtype=float)
    h = step_size(point)
    columns = []
    for j in range(point.size):
        offset = np.zeros_like(point)
        offset[j] = h
        columns.append(
            (np.asarray(fn(point + offset)) - np.asarray(fn(point - offset))) / (2 * h)
        )
    return np.stack(columns, axis=-1)


def central_gradient(fn: Callable, point: np.ndarray) -> np.ndarray:
    """Gradient of a scalar function by central differences."""
    return np.asarray(central_jacobian(fn, point), dtype=float).reshape(-1)


def directional_derivative(fn: Callable, point: np.ndarray, direction: np.ndarray):
    """Central difference of ``fn`` along ``direction`` (step scaled by the point)."""
    point = np.asarray(point, dtype=float)
    h = step_size(point)
    forward = np.asarray(fn(point + h * direction))
    backward = np.asarray(fn(point - h * direction))
    return (forward - backward) / (2 * h)
