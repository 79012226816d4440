"""
Forcing potentials, damping and execution-energy speed control.

The executed root acceleration is

    xdd = -h2 - M_e^-1 dpsi + alpha_ex qd - beta qd

where alpha_ex blends the coefficients conserving the execution energy without and
with the potential, weighted by a tanh switch on the execution energy, and beta
adds position-dependent damping on top of the minimum needed for convergence.
"""

from dataclasses import dataclass, field
import logging
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import integrate

from .energy import EnergyLagrangian, IsotropicEnergy, make_builtin_energy
from .exceptions import DimensionMismatchError, ParameterError
from .geometry import WeightedGeometry, make_builtin_geometry
from .potentials import radial_priority, smooth_norm_gradient, tanh_switch
from .spec_core import DEFAULT_COND_CAP, TaskMap, solve_metric

VELOCITY_FLOOR = 1e-9
PSI_GRID = 4001


def _coerce_floats(params, names) -> None:
    for name in names:
        value = getattr(params, name)
        try:
            object.__setattr__(params, name, float(value))
        except (TypeError, ValueError) as e:
            raise ParameterError(
                f"Parameter '{name}' must be a number, got {value!r}"
            ) from e


@dataclass(frozen=True)
class ForcingPotential:
    """
    Attractor potential psi_1 = k (|x| + log(1 + exp(-2 alpha_psi |x|)) / alpha_psi)
    on x = phi(q), weighted by the priority M_psi = w(|x|) I.

    :param task_map: Attractor task map, usually x = q - q_d.
    :param k: Gradient magnitude far from the target.
    :param alpha_psi: Softening rate of the norm near the target.
    :param m_upper: Priority at the target.
    :param m_lower: Priority far from the target.
    :param alpha_m: Width rate of the priority bump.
    :param register_priority_energy: Add 1/2 qd^T M_psi qd to the system energy.
    """

    task_map: TaskMap
    k: float = 5.0
    alpha_psi: float = 10.0
    m_upper: float = 2.0
    m_lower: float = 0.3
    alpha_m: float = 0.75
    register_priority_energy: bool = True

    def __post_init__(self):
        _coerce_floats(self, ("k", "alpha_psi", "m_upper", "m_lower", "alpha_m"))
        for name in ("k", "alpha_psi", "m_upper", "alpha_m"):
            if not getattr(self, name) > 0.0:
                raise ParameterError(f"Forcing parameter '{name}' must be positive")
        if not 0.0 <= self.m_lower <= self.m_upper:
            raise ParameterError("Forcing priority needs 0 <= m_lower <= m_upper")

    def base_gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradient of psi_1; its norm never exceeds k."""
        return smooth_norm_gradient(np.asarray(x, dtype=float), self.k, self.alpha_psi)

    def priority_weight(self, x: np.ndarray) -> float:
        """Scalar w(|x|) with m_lower <= w <= m_upper."""
        return float(radial_priority(x, self.m_upper, self.m_lower, self.alpha_m)[0])

    def priority_metric(self, x: np.ndarray) -> np.ndarray:
        """M_psi = w(|x|) I."""
        return self.priority_weight(x) * np.eye(self.task_map.codomain_dim)

    def priority_energy(self) -> IsotropicEnergy:
        """Energy 1/2 xd^T M_psi xd on the attractor space."""
        return make_builtin_energy(
            "priority_radial",
            {
                "m_upper": self.m_upper,
                "m_lower": self.m_lower,
                "alpha_m": self.alpha_m,
                "dim": self.task_map.codomain_dim,
            },
        )

    def priority_geometry(self) -> WeightedGeometry:
        """Zero geometry weighted by M_psi, entering the fabric like any other leaf."""
        return WeightedGeometry(
            make_builtin_geometry("zero_baseline", {"dim": self.task_map.codomain_dim}),
            self.priority_energy(),
        )


def potential_force(p: ForcingPotential, q: np.ndarray) -> np.ndarray:
    """
    Root gradient dpsi = J^T M_psi(x) dpsi_1(x) at x = phi(q).

    :param p: Forcing potential.
    :param q: Root position.
    """
    x = np.atleast_1d(np.asarray(p.task_map.map(q), dtype=float))
    jac = np.asarray(p.task_map.jacobian(q), dtype=float).reshape(
        p.task_map.codomain_dim, p.task_map.domain_dim
    )
    return jac.T @ (p.priority_weight(x) * p.base_gradient(x))


def potential_value(p: ForcingPotential, x: np.ndarray):
    """
    Scalar psi with gradient M_psi dpsi_1, integrated along the radial profile.

    The profile is tabulated once per call with the trapezoidal rule on
    :data:`PSI_GRID` radii and interpolated, so a batch of positions costs one
    table. Only used for diagnostics; the dynamics need the gradient alone.

    :param x: Attractor-space position, leading axes are batch axes.
    :return: psi as a float, or an array over the batch axes.
    """
    rho = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    reach = float(np.max(rho, initial=0.0))
    if reach == 0.0:
        return 0.0 if rho.ndim == 0 else np.zeros(rho.shape)
    radii = np.linspace(0.0, reach, PSI_GRID)
    weight = (p.m_upper - p.m_lower) * np.exp(-((p.alpha_m * radii) ** 2)) + p.m_lower
    table = integrate.cumulative_trapezoid(
        weight * p.k * np.tanh(p.alpha_psi * radii), radii, initial=0.0
    )
    values = np.interp(rho, radii, table)
    return float(values) if rho.ndim == 0 else values


def alpha_from_terms(
    metric: np.ndarray, force: np.ndarray, xdd_d: np.ndarray, xd: np.ndarray
) -> float:
    """alpha = -(xd^T M xd)^-1 xd^T (M xdd_d + f), zero below the velocity floor."""
    if np.linalg.norm(xd) < VELOCITY_FLOOR:
        return 0.0
    norm = float(xd @ metric @ xd)
    if norm <= 0.0:
        return 0.0
    return float(-(xd @ (metric @ xdd_d + force)) / norm)


def alpha_projection(
    energy: EnergyLagrangian, xdd_d: np.ndarray, x: np.ndarray, xd: np.ndarray
) -> float:
    """
    Coefficient making xdd = xdd_d + alpha xd conserve ``energy``.

    With a Euclidean energy this is -xd^T xdd_d / xd^T xd.
    """
    metric, force = energy.el_terms(x, xd)
    return alpha_from_terms(metric, force, np.asarray(xdd_d, dtype=float), xd)


@dataclass(frozen=True)
class SpeedController:
    """
    Execution-energy regulation and damping parameters.

    :param execution_energy: Execution energy L_ex; ignored when
        ``use_system_energy`` is set.
    :param v_d: Desired speed; the desired execution energy is 1/2 v_d^2.
    :param alpha_eta: Rate of the eta switch.
    :param alpha_shift: Offset of the eta switch.
    :param damping: Damping gain B inside the damping radius.
    :param damping_min: Minimum damping B_min added everywhere.
    :param alpha_beta: Rate of the damping switch.
    :param r_beta: Damping radius in the attractor space.
    :param eta_fixed: Optional constant eta overriding the switch.
    :param use_system_energy: Regulate the system energy itself (L_ex = L_e).
    """

    execution_energy: EnergyLagrangian = field(
        default_factory=lambda: make_builtin_energy("euclidean", {"lam": 1.0, "dim": 2})
    )
    v_d: float = 2.0
    alpha_eta: float = 10.0
    alpha_shift: float = 0.0
    damping: float = 6.5
    damping_min: float = 0.01
    alpha_beta: float = 0.5
    r_beta: float = 1.5
    eta_fixed: Optional[float] = None
    use_system_energy: bool = False

    def __post_init__(self):
        _coerce_floats(
            self,
            (
                "v_d",
                "alpha_eta",
                "alpha_shift",
                "damping",
                "damping_min",
                "alpha_beta",
                "r_beta",
            ),
        )
        if self.eta_fixed is not None:
            _coerce_floats(self, ("eta_fixed",))
        if self.damping < 0.0 or self.damping_min < 0.0:
            raise ParameterError("Damping gains must be non-negative")
        if not self.v_d > 0.0:
            raise ParameterError("Desired speed v_d must be positive")
        if self.eta_fixed is not None and not 0.0 <= self.eta_fixed <= 1.0:
            raise ParameterError("eta_fixed must lie in [0, 1]")
        if self.damping_min == 0.0:
            logging.warning("Minimum damping is zero; convergence is not guaranteed")

    @property
    def target_energy(self) -> float:
        """Desired execution energy L_ex,d = 1/2 v_d^2."""
        return 0.5 * self.v_d**2

    def eta(self, l_ex):
        """
        eta = 1/2 (tanh(-alpha_eta (L_ex - L_ex,d) - alpha_shift) + 1).

        Elementwise for an array of execution energies.
        """
        if self.eta_fixed is not None:
            value = np.full(np.shape(l_ex), self.eta_fixed)
        else:
            shifted = -self.alpha_eta * (np.asarray(l_ex) - self.target_energy)
            value = 0.5 * (np.tanh(shifted - self.alpha_shift) + 1.0)
        return float(value) if np.ndim(value) == 0 else value

    def damping_switch(self, distance):
        """s_beta = 1/2 (tanh(-alpha_beta (|x| - r_beta)) + 1), elementwise."""
        distance = np.asarray(distance, dtype=float)
        value = tanh_switch(distance, self.alpha_beta, self.r_beta)[0]
        return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class StepDiagnostics:
    """Per-step speed-control scalars."""

    alpha_ex0: float
    alpha_ex_psi: float
    alpha_le: float
    eta: float
    beta: float
    alpha_ex: float
    l_ex: float


def regulate_speed(
    h2: np.ndarray,
    system_terms: Tuple[np.ndarray, np.ndarray],
    system_energy: EnergyLagrangian,
    grad_psi: np.ndarray,
    ctl: SpeedController,
    q: np.ndarray,
    qd: np.ndarray,
    attractor_distance: float,
    cond_cap: float = DEFAULT_COND_CAP,
) -> Tuple[np.ndarray, StepDiagnostics]:
    """
    Speed-controlled acceleration from already evaluated root terms.

    :param h2: Root generator value h~2.
    :param system_terms: System-energy terms (M_e, f_e) at (q, qd).
    :param system_energy: The system energy (for L_ex = L_e).
    :param grad_psi: Root potential gradient.
    :param attractor_distance: |x| in the attractor space, drives s_beta.
    """
    metric, force_e = system_terms
    state = {"q": q, "qd": qd}
    potential_accel = solve_metric(metric, grad_psi, cond_cap, state)
    unforced = -h2
    forced = -h2 - potential_accel

    if ctl.use_system_energy:
        ex_metric, ex_force = metric, force_e
        l_ex = system_energy.value(q, qd)
    else:
        ex_metric, ex_force = ctl.execution_energy.el_terms(q, qd)
        l_ex = ctl.execution_energy.value(q, qd)

    alpha_ex0 = alpha_from_terms(ex_metric, ex_force, unforced, qd)
    alpha_ex_psi = alpha_from_terms(ex_metric, ex_force, forced, qd)
    alpha_le = alpha_from_terms(metric, force_e, unforced, qd)
    eta = ctl.eta(l_ex)
    alpha_ex = eta * alpha_ex0 + (1.0 - eta) * alpha_ex_psi
    beta = (
        ctl.damping_switch(attractor_distance) * ctl.damping
        + ctl.damping_min
        + max(0.0, alpha_ex - alpha_le)
    )
    qdd = forced + (alpha_ex - beta) * qd
    return qdd, StepDiagnostics(
        alpha_ex0, alpha_ex_psi, alpha_le, eta, beta, alpha_ex, l_ex
    )


def speed_controlled_step(
    fabric_h2: Callable,
    system_energy: EnergyLagrangian,
    potential: Optional[ForcingPotential],
    ctl: SpeedController,
    q: np.ndarray,
    qd: np.ndarray,
) -> Tuple[np.ndarray, StepDiagnostics]:
    """
    Executed acceleration -h2 - M_e^-1 dpsi + alpha_ex qd - beta qd with diagnostics.

    :param fabric_h2: Callable (q, qd) -> root generator h~2.
    :param system_energy: System energy providing M_e and f_e.
    :param potential: Forcing potential, or None for an unforced fabric.
    :param ctl: Speed controller.
    :raises BoundaryViolation: If a barrier is crossed during evaluation.
    """
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    if system_energy.dim != q.size:
        raise DimensionMismatchError(
            f"System energy dim {system_energy.dim} != state dim {q.size}"
        )
    if potential is None:
        grad_psi = np.zeros_like(q)
        distance = float(np.linalg.norm(q))
    else:
        grad_psi = potential_force(potential, q)
        distance = float(np.linalg.norm(potential.task_map.map(q)))
    return regulate_speed(
        np.asarray(fabric_h2(q, qd), dtype=float),
        system_energy.el_terms(q, qd),
        system_energy,
        grad_psi,
        ctl,
        q,
        qd,
        distance,
    )


def total_energy_rate(
    system_energy: EnergyLagrangian,
    potential: Optional[ForcingPotential],
    q: np.ndarray,
    qd: np.ndarray,
    qdd: np.ndarray,
) -> float:
    """d/dt (H_e + psi) = qd^T (M_e qdd + f_e) + qd^T dpsi."""
    metric, force = system_energy.el_terms(q, qd)
    rate = float(qd @ (metric @ qdd + force))
    if potential is not None:
        rate += float(qd @ potential_force(potential, q))
    return rate


class ConvergenceMonitor:
    """
    Tracks the convergence criterion |qd| < speed_tol and |phi(q)| < distance_tol
    held for ``hold`` seconds of simulated time.
    """

    def __init__(
        self,
        task_map: TaskMap,
        speed_tol: float = 1e-3,
        distance_tol: float = 0.1,
        hold: float = 0.5,
    ) -> None:
        self.task_map = task_map
        self.speed_tol = speed_tol
        self.distance_tol = distance_tol
        self.hold = hold
        self._since: Optional[float] = None

    def update(self, t: float, q: np.ndarray, qd: np.ndarray) -> bool:
        """Feeds one state; returns True once the criterion has held long enough."""
        inside = (
            np.linalg.norm(qd) < self.speed_tol
            and np.linalg.norm(self.task_map.map(q)) < self.distance_tol
        )
        if not inside:
            self._since = None
            return False
        if self._since is None:
            self._since = t
        return t - self._since >= self.hold - 1e-9
