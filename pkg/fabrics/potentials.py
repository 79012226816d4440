"""Scalar potential and switch profiles shared by geometries, energies and forcing."""

import numpy as np
from scipy.special import expit


def tanh_switch(value: float, rate: float, shift: float = 0.0):
    """
    Smooth switch 1/2 (tanh(-rate (value - shift)) + 1), near 1 below ``shift``.

    :return: Tuple (switch value, derivative with respect to ``value``).
    """
    t = np.tanh(-rate * (value - shift))
    return 0.5 * (t + 1.0), -0.5 * rate * (1.0 - t * t)


def inverse_square_barrier(phi: float, k: float):
    """psi = k / phi^2 and d psi / d phi."""
    return k / phi**2, -2.0 * k / phi**3


def limit_barrier(x: float, a1: float, a2: float, a3: float, a4: float):
    """
    psi = a1 / x^2 + a2 log(exp(-a3 (x - a4)) + 1) and its derivative.

    The soft-plus term keeps a nearly constant gradient far from the limit.
    """
    value = a1 / x**2 + a2 * np.logaddexp(0.0, -a3 * (x - a4))
    slope = -2.0 * a1 / x**3 - a2 * a3 * expit(-a3 * (x - a4))
    return value, slope


def smooth_norm(x: np.ndarray, k: float, alpha: float) -> float:
    """psi_1 = k (|x| + log(1 + exp(-2 alpha |x|)) / alpha)."""
    rho = np.linalg.norm(x)
    return float(k * (rho + np.logaddexp(0.0, -2.0 * alpha * rho) / alpha))


def smooth_norm_gradient(x: np.ndarray, k: float, alpha: float) -> np.ndarray:
    """
    Gradient k tanh(alpha |x|) x / |x| of :func:`smooth_norm`, zero at the origin.

    Leading axes of ``x`` are batch axes.
    """
    x = np.asarray(x, dtype=float)
    rho = np.linalg.norm(x, axis=-1, keepdims=True)
    scaled = k * np.tanh(alpha * rho) * x
    return np.divide(scaled, rho, out=np.zeros_like(scaled), where=rho > 0.0)


def radial_priority(x: np.ndarray, m_upper: float, m_lower: float, alpha_m: float):
    """
    Priority weight w = (m_upper - m_lower) exp(-(alpha_m |x|)^2) + m_lower.

    :return: Tuple (w, grad w); leading axes of ``x`` are batch axes.
    """
    x = np.asarray(x, dtype=float)
    rho = np.linalg.norm(x, axis=-1, keepdims=True)
    bump = (m_upper - m_lower) * np.exp(-((alpha_m * rho) ** 2))
    return bump[..., 0] + m_lower, -2.0 * alpha_m**2 * bump * x
