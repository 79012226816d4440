"""Exception types raised by the fabrics engine."""

from typing import Any, Dict, Optional

import numpy as np


class FabricError(Exception):
    """Base class for all engine errors."""


class DimensionMismatchError(FabricError, ValueError):
    """Raised when specs, maps or energies are combined across mismatched dimensions."""


class ParameterError(FabricError, ValueError):
    """Raised for unknown catalogue kinds, invalid parameter values or empty trees."""


class ZeroVelocityError(FabricError, ValueError):
    """Raised when a velocity-dependent projection is requested at rest."""


class EvaluationError(FabricError, ArithmeticError):
    """
    Raised when an evaluation produces non-finite values or leaves its domain.

    :param message: Human readable description.
    :param state: Snapshot of the offending state, e.g. ``{"x": ..., "xd": ...}``.
    """

    def __init__(self, message: str, state: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.state = {
            key: np.array(value, dtype=float, copy=True)
            for key, value in (state or {}).items()
        }


class BoundaryViolation(EvaluationError):
    """Raised when a barrier coordinate reaches the boundary (x <= 1e-9)."""


class ConfigError(FabricError, ValueError):
    """
    Raised for invalid experiment config documents.

    :param message: Description of the problem.
    :param key_path: Dotted path of the offending key, e.g. ``tree[2].geometry.lam``.
    """

    def __init__(self, message: str, key_path: str = "") -> None:
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}" if key_path else message)
