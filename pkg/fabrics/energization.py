"""
Energization: bending a system along its velocity so it conserves an energy.

Given xdd + h = 0 and an energy L_e, the energized system xdd = -h - alpha xd with

    alpha = -(xd^T M_e xd)^-1 xd^T (M_e h - f_e)

conserves H_e. The same system in force form is the zero-work spec
(M_e, f_e + P_e (M_e h - f_e)) with the energy projector
P_e = M_e R_pe = I - M_e xd xd^T / (xd^T M_e xd).
"""

from dataclasses import dataclass
import logging
from typing import Callable, Iterable, Tuple

import numpy as np

from .energy import EnergyLagrangian, pull_energy
from .exceptions import EvaluationError, ZeroVelocityError
from .spec_core import DEFAULT_COND_CAP, Spec, TaskMap, solve_metric

VELOCITY_FLOOR = 1e-9


def projector_from_metric(metric: np.ndarray, xd: np.ndarray) -> np.ndarray:
    """
    P_e = M_e R_pe with R_pe = M_e^-1 - xd xd^T / (xd^T M_e xd), expanded without
    the inverse.

    :raises ZeroVelocityError: When xd is zero or xd^T M_e xd is not positive.
    """
    xd = np.asarray(xd, dtype=float)
    weighted = metric @ xd
    norm = float(xd @ weighted)
    if not np.any(xd) or norm <= 0.0:
        raise ZeroVelocityError("Energy projector undefined for xd^T M_e xd <= 0")
    return np.eye(xd.size) - np.outer(weighted, xd) / norm


def projector_pe(energy: EnergyLagrangian, x: np.ndarray, xd: np.ndarray) -> np.ndarray:
    """Energy projector P_e of ``energy`` at (x, xd); satisfies xd^T P_e r = 0."""
    metric, _ = energy.el_terms(x, xd)
    return projector_from_metric(metric, xd)


def energization_alpha(
    metric: np.ndarray, force: np.ndarray, h: np.ndarray, xd: np.ndarray
) -> float:
    """
    alpha = -(xd^T M xd)^-1 xd^T (M h - f), zero below the velocity floor.
    """
    if np.linalg.norm(xd) < VELOCITY_FLOOR:
        return 0.0
    norm = float(xd @ metric @ xd)
    if norm <= 0.0:
        return 0.0
    return float(-(xd @ (metric @ h - force)) / norm)


@dataclass(frozen=True)
class EnergizedSystem:
    """
    The system xdd = -h - alpha xd conserving ``energy``.

    :param energy: Energy to conserve.
    :param base_h: Callable (x, xd) -> h of xdd + h = 0.
    :param cond_cap: Condition cap for the zero-work spec solve.
    """

    energy: EnergyLagrangian
    base_h: Callable
    cond_cap: float = DEFAULT_COND_CAP

    def alpha(self, x: np.ndarray, xd: np.ndarray) -> float:
        """Energization coefficient at (x, xd)."""
        metric, force = self.energy.el_terms(x, xd)
        return energization_alpha(metric, force, self.base_h(x, xd), xd)

    def acceleration(self, x: np.ndarray, xd: np.ndarray) -> np.ndarray:
        """alpha-form acceleration -h - alpha xd."""
        metric, force = self.energy.el_terms(x, xd)
        h = np.asarray(self.base_h(x, xd), dtype=float)
        return -h - energization_alpha(metric, force, h, xd) * xd

    def terms(self, x: np.ndarray, xd: np.ndarray):
        """Zero-work form (M_e, f_e + P_e (M_e h - f_e)); (M_e, M_e h) at rest."""
        metric, force = self.energy.el_terms(x, xd)
        h = np.asarray(self.base_h(x, xd), dtype=float)
        if np.linalg.norm(xd) < VELOCITY_FLOOR:
            return metric, metric @ h
        return metric, force + projector_from_metric(metric, xd) @ (metric @ h - force)

    def spec(self) -> Spec:
        """Force-form spec of the energized system."""
        return Spec.from_terms(self.energy.dim, self.terms)

    def zero_work_acceleration(self, x: np.ndarray, xd: np.ndarray) -> np.ndarray:
        """Acceleration of the zero-work spec by a metric solve."""
        metric, force = self.terms(x, xd)
        return solve_metric(metric, -force, self.cond_cap, {"x": x, "xd": xd})


def energize(energy: EnergyLagrangian, h: Callable) -> EnergizedSystem:
    """Energizes xdd + h = 0 with respect to ``energy``."""
    return EnergizedSystem(energy=energy, base_h=h)


def energize_then_pullback(
    energy: EnergyLagrangian,
    h: Callable,
    task_map: TaskMap,
    q: np.ndarray,
    qd: np.ndarray,
) -> np.ndarray:
    """Root acceleration from energizing in the leaf and pulling the spec back."""
    x, jac, xd, curv = task_map.evaluate(q, qd)
    metric, force = energize(energy, h).terms(x, xd)
    root_metric = jac.T @ metric @ jac
    root_force = jac.T @ (force + metric @ curv)
    return _rank_checked_solve(root_metric, -root_force, q, qd)


def pullback_then_energize(
    energy: EnergyLagrangian,
    h: Callable,
    task_map: TaskMap,
    q: np.ndarray,
    qd: np.ndarray,
) -> np.ndarray:
    """
    Root acceleration from pulling back (M_e, M_e h) and energizing with the pulled
    energy.
    """
    x, jac, xd, curv = task_map.evaluate(q, qd)
    metric, _ = energy.el_terms(x, xd)
    root_metric = jac.T @ metric @ jac
    root_h = _rank_checked_solve(
        root_metric, jac.T @ (metric @ (np.asarray(h(x, xd)) + curv)), q, qd
    )
    pulled = pull_energy(task_map, energy)
    pulled_metric, pulled_force = pulled.el_terms(q, qd)
    return -root_h - energization_alpha(pulled_metric, pulled_force, root_h, qd) * qd


def _rank_checked_solve(metric, rhs, q, qd):
    if np.linalg.matrix_rank(metric) < metric.shape[0]:
        raise EvaluationError("Rank-deficient pullback metric", {"q": q, "qd": qd})
    return solve_metric(metric, rhs, DEFAULT_COND_CAP, {"q": q, "qd": qd})


def commutation_check(
    energy: EnergyLagrangian,
    h: Callable,
    task_map: TaskMap,
    states: Iterable[Tuple[np.ndarray, np.ndarray]],
) -> float:
    """
    Maximum deviation between energize-then-pullback and pullback-then-energize.

    :param states: Iterable of root states (q, qd).
    :return: max |a - b| over the states.
    :raises EvaluationError: At the first state with a rank-deficient pullback metric.
    """
    deviation = 0.0
    for q, qd in states:
        q = np.asarray(q, dtype=float)
        qd = np.asarray(qd, dtype=float)
        first = energize_then_pullback(energy, h, task_map, q, qd)
        second = pullback_then_energize(energy, h, task_map, q, qd)
        deviation = max(deviation, float(np.linalg.norm(first - second)))
    logging.debug(f"Commutation deviation over states: {deviation:.3e}")
    return deviation
