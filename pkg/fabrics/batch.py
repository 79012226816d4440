"""
Evaluation of many root states of one system in a single pass.

Every particle of an experiment shares the same tree, so the leaf terms of all of
them are computed as stacked arrays: metrics of shape (B, n, n), forces of shape
(B, n). One eigendecomposition per state then solves every right-hand side the
step needs. Results match :class:`FabricSystem` state by state.
"""

from typing import Dict, Tuple

import numpy as np

from .exceptions import ParameterError
from .forcing import VELOCITY_FLOOR, potential_value
from .potentials import radial_priority
from .spec_core import solve_metric_batch
from .system import OBSERVED, FabricSystem


def alpha_batch(
    metric: np.ndarray, force: np.ndarray, xdd_d: np.ndarray, xd: np.ndarray
) -> np.ndarray:
    """
    Row-wise alpha = -(xd^T M xd)^-1 xd^T (M xdd_d + f), zero below the velocity
    floor or for a non-positive xd^T M xd.
    """
    norm = np.einsum("bi,bij,bj->b", xd, metric, xd)
    work = np.einsum("bi,bij,bj->b", xd, metric, xdd_d) + np.einsum(
        "bi,bi->b", xd, force
    )
    valid = (np.linalg.norm(xd, axis=-1) >= VELOCITY_FLOOR) & (norm > 0.0)
    return np.where(valid, -work / np.where(valid, norm, 1.0), 0.0)


class BatchedSystem:
    """
    Batch evaluator of a :class:`FabricSystem` whose parts all broadcast.

    :param system: The system to evaluate.
    :raises ParameterError: If the system has no batched form.
    """

    def __init__(self, system: FabricSystem) -> None:
        if not system.batched:
            raise ParameterError(
                f"System '{system.config.name}' ({system.variant}) cannot be batched"
            )
        self.system = system
        self.fabric = system.fabric
        self.cond_cap = system.fabric.cond_cap

    def evaluate(
        self, q: np.ndarray, qd: np.ndarray
    ) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        """
        Accelerations and observations of a batch of states.

        :param q: Root positions of shape (B, n).
        :param qd: Root velocities of shape (B, n).
        :return: Tuple (accelerations of shape (B, n), observation columns keyed
            by :data:`OBSERVED`).
        :raises EvaluationError: If any state crosses a barrier or a solve fails.
        """
        q = np.asarray(q, dtype=float)
        qd = np.asarray(qd, dtype=float)
        metric, f_geometry, f_energy, energy = self.fabric.batch_terms(q, qd)
        columns = {name: np.zeros(q.shape[0]) for name in OBSERVED}
        # Finsler systems only, so H_e = L_e
        columns["H_e"] = energy
        state = {"q": q, "qd": qd}
        if self.system.variant == "forced":
            qdd = self._forced(q, qd, metric, f_geometry, f_energy, energy, columns)
            return qdd, columns

        solution, asymmetry = solve_metric_batch(
            metric, f_geometry[..., None], self.cond_cap, state
        )
        columns["asymmetry"] = asymmetry
        h2 = solution[..., 0]
        if self.system.variant == "fabric":
            alpha = alpha_batch(metric, -f_energy, h2, qd)
            columns["alpha_Le"] = alpha_batch(metric, f_energy, -h2, qd)
            return -h2 - alpha[:, None] * qd, columns
        return -h2, columns

    def _forced(self, q, qd, metric, f_geometry, f_energy, energy, columns):
        potential = self.system.potential
        ctl = self.system.controller
        x, jac, _, _ = potential.task_map.evaluate_batch(q, qd)
        weight, _ = radial_priority(
            x, potential.m_upper, potential.m_lower, potential.alpha_m
        )
        leaf_gradient = weight[:, None] * potential.base_gradient(x)
        grad_psi = (np.swapaxes(jac, -1, -2) @ leaf_gradient[..., None])[..., 0]
        solution, asymmetry = solve_metric_batch(
            metric,
            np.stack([f_geometry, grad_psi], axis=-1),
            self.cond_cap,
            {"q": q, "qd": qd},
        )
        unforced = -solution[..., 0]
        forced = unforced - solution[..., 1]

        if ctl.use_system_energy:
            ex_metric, ex_force, l_ex = metric, f_energy, energy
        else:
            ex_metric, ex_force, l_ex = ctl.execution_energy.batch_terms(q, qd)

        alpha_ex0 = alpha_batch(ex_metric, ex_force, unforced, qd)
        alpha_ex_psi = alpha_batch(ex_metric, ex_force, forced, qd)
        alpha_le = alpha_batch(metric, f_energy, unforced, qd)
        eta = ctl.eta(l_ex)
        alpha_ex = eta * alpha_ex0 + (1.0 - eta) * alpha_ex_psi
        switch = ctl.damping_switch(np.linalg.norm(x, axis=-1))
        beta = (
            switch * ctl.damping
            + ctl.damping_min
            + np.maximum(0.0, alpha_ex - alpha_le)
        )
        columns.update(
            {
                "psi": potential_value(potential, x),
                "L_ex": l_ex,
                "alpha_ex0": alpha_ex0,
                "alpha_ex_psi": alpha_ex_psi,
                "alpha_ex": alpha_ex,
                "alpha_Le": alpha_le,
                "eta": eta,
                "beta": beta,
                "asymmetry": asymmetry,
            }
        )
        return forced + (alpha_ex - beta)[:, None] * qd
