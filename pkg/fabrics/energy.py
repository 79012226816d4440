"""
Energy Lagrangians and the catalogue of Finsler energies.

An energy provides its value L_e(x, xd), the Euler-Lagrange terms (M_e, f_e) of
M_e xdd + f_e = 0 and the Hamiltonian H_e. Every catalogued energy has the form
L_e = 1/2 s(x, xd) xd^T G(x) xd with an analytic metric G, its gradient and an
optional piecewise-constant velocity switch s, so the Euler-Lagrange terms are

    M_e = s G
    f_e = s (dG_ij/dx_k xd_j xd_k - 1/2 dG_jk/dx_i xd_j xd_k)

and the switch contributes no derivative terms. Energies whose source form reads
xd^T G xd carry the 1/2 so that M_e equals the metric G.
"""

import logging
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import (
    BoundaryViolation,
    DimensionMismatchError,
    EvaluationError,
    ParameterError,
)
from .numdiff import central_gradient
from .potentials import radial_priority, tanh_switch
from .spec_core import TaskMap

X_MIN = 1e-9
HESSIAN_STEP = 1e-4

Terms = Tuple[np.ndarray, np.ndarray]


class EnergyLagrangian:
    """
    Base class of energy Lagrangians on a ``dim``-dimensional space.

    Subclasses implement :meth:`value` and :meth:`el_terms`. The default
    Hamiltonian uses a finite-difference momentum p = dL/dxd.

    :param dim: Dimension of the space.
    :param name: Label used in diagnostics.
    """

    batched = False

    def __init__(self, dim: int, name: str = "") -> None:
        self.dim = dim
        self.name = name

    def value(self, x: np.ndarray, xd: np.ndarray) -> float:
        """Lagrangian L_e(x, xd)."""
        raise NotImplementedError

    def el_terms(self, x: np.ndarray, xd: np.ndarray) -> Terms:
        """Euler-Lagrange terms (M_e, f_e) at (x, xd)."""
        raise NotImplementedError

    def momentum(self, x: np.ndarray, xd: np.ndarray) -> np.ndarray:
        """Momentum p = dL/dxd."""
        return central_gradient(lambda v: self.value(x, v), xd)

    def hamiltonian(self, x: np.ndarray, xd: np.ndarray) -> float:
        """Hamiltonian H = p^T xd - L."""
        return float(self.momentum(x, xd) @ xd - self.value(x, xd))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dim={self.dim}, name={self.name!r})"


class FinslerEnergy(EnergyLagrangian):
    """
    Energy L_e = 1/2 L_g^2 of a Finsler structure L_g.

    Degree-2 homogeneity makes the Hamiltonian equal to the energy itself.
    """

    def structure_value(self, x: np.ndarray, xd: np.ndarray) -> float:
        """Finsler structure L_g = sqrt(2 L_e)."""
        return float(np.sqrt(max(2.0 * self.value(x, xd), 0.0)))

    def hamiltonian(self, x: np.ndarray, xd: np.ndarray) -> float:
        return self.value(x, xd)


class MetricEnergy(FinslerEnergy):
    """
    L_e = 1/2 s(x, xd) xd^T G(x) xd with analytic G and dG.

    :param dim: Dimension of the space.
    :param metric_fn: Callable x -> G(x).
    :param metric_grad_fn: Callable x -> dG with dG[k, i, j] = dG_ij/dx_k.
    :param switch_fn: Optional callable (x, xd) -> 0 or 1.
    :param domain_fn: Optional callable x -> None raising when x leaves the domain.
    :param name: Label used in diagnostics.
    """

    def __init__(
        self,
        dim: int,
        metric_fn: Callable,
        metric_grad_fn: Callable,
        switch_fn: Optional[Callable] = None,
        domain_fn: Optional[Callable] = None,
        name: str = "",
    ) -> None:
        super().__init__(dim, name)
        self.metric_fn = metric_fn
        self.metric_grad_fn = metric_grad_fn
        self.switch_fn = switch_fn
        self.domain_fn = domain_fn

    def switch(self, x: np.ndarray, xd: np.ndarray) -> float:
        """Velocity switch s(x, xd), 1 when no switch is configured."""
        return 1.0 if self.switch_fn is None else float(self.switch_fn(x, xd))

    def metric(self, x: np.ndarray) -> np.ndarray:
        """Metric G(x) after the domain check."""
        if self.domain_fn is not None:
            self.domain_fn(x)
        return np.asarray(self.metric_fn(x), dtype=float).reshape(self.dim, self.dim)

    def value(self, x: np.ndarray, xd: np.ndarray) -> float:
        s = self.switch(x, xd)
        if s == 0.0:
            if self.domain_fn is not None:
                self.domain_fn(x)
            return 0.0
        return float(0.5 * s * xd @ self.metric(x) @ xd)

    def momentum(self, x: np.ndarray, xd: np.ndarray) -> np.ndarray:
        """Momentum p = s G xd; the switch is constant around xd."""
        s = self.switch(x, xd)
        if s == 0.0:
            return np.zeros(self.dim)
        return s * self.metric(x) @ np.asarray(xd, dtype=float)

    def el_terms(self, x: np.ndarray, xd: np.ndarray) -> Terms:
        s = self.switch(x, xd)
        if s == 0.0:
            if self.domain_fn is not None:
                self.domain_fn(x)
            return np.zeros((self.dim, self.dim)), np.zeros(self.dim)
        metric = self.metric(x)
        grad = np.asarray(self.metric_grad_fn(x), dtype=float).reshape(
            self.dim, self.dim, self.dim
        )
        force = np.einsum("kij,j,k->i", grad, xd, xd) - 0.5 * np.einsum(
            "ijk,j,k->i", grad, xd, xd
        )
        return s * metric, s * force


class IsotropicEnergy(MetricEnergy):
    """
    Metric energy with G(x) = g(x) I.

    :param dim: Dimension of the space.
    :param scale_fn: Callable x -> (g(x), grad g(x)).
    :param batched: The callables accept positions with leading batch axes, which
        enables :meth:`batch_terms`.
    """

    def __init__(
        self,
        dim: int,
        scale_fn: Callable,
        switch_fn: Optional[Callable] = None,
        domain_fn: Optional[Callable] = None,
        name: str = "",
        batched: bool = False,
    ) -> None:
        eye = np.eye(dim)
        super().__init__(
            dim,
            lambda x: scale_fn(x)[0] * eye,
            lambda x: np.einsum("k,ij->kij", scale_fn(x)[1], eye),
            switch_fn,
            domain_fn,
            name,
        )
        self.scale_fn = scale_fn
        self.batched = batched

    def el_terms(self, x: np.ndarray, xd: np.ndarray) -> Terms:
        s = self.switch(x, xd)
        if self.domain_fn is not None:
            self.domain_fn(x)
        if s == 0.0:
            return np.zeros((self.dim, self.dim)), np.zeros(self.dim)
        scale, grad = self.scale_fn(x)
        grad = np.asarray(grad, dtype=float)
        force = (grad @ xd) * xd - 0.5 * (xd @ xd) * grad
        return s * scale * np.eye(self.dim), s * force

    def batch_terms(self, x: np.ndarray, xd: np.ndarray):
        """
        Euler-Lagrange terms and energies of a batch of states.

        :param x: Positions of shape (B, dim).
        :param xd: Velocities of shape (B, dim).
        :return: Tuple (M_e of shape (B, dim, dim), f_e of shape (B, dim), L_e of
            shape (B,)).
        :raises ParameterError: If the callables do not broadcast.
        :raises BoundaryViolation: If any state leaves the domain.
        """
        if not self.batched:
            raise ParameterError(f"Energy '{self.name}' has no batched form")
        if self.domain_fn is not None:
            self.domain_fn(x)
        lead = x.shape[:-1]
        s = np.ones(lead)
        if self.switch_fn is not None:
            s = np.broadcast_to(np.asarray(self.switch_fn(x, xd), dtype=float), lead)
        scale, grad = self.scale_fn(x)
        scale = s * np.broadcast_to(np.asarray(scale, dtype=float), lead)
        grad = np.broadcast_to(np.asarray(grad, dtype=float), x.shape)
        speed_sq = np.sum(xd * xd, axis=-1)
        along = np.sum(grad * xd, axis=-1)
        force = s[..., None] * (
            along[..., None] * xd - 0.5 * speed_sq[..., None] * grad
        )
        metric = scale[..., None, None] * np.eye(self.dim)
        return metric, force, 0.5 * scale * speed_sq


class PulledBackEnergy(EnergyLagrangian):
    """
    Energy L(phi(q), J qd) of a leaf energy seen from the root.

    Its Euler-Lagrange terms are exactly (J^T M J, J^T (f + M Jdot qd)).
    """

    def __init__(self, energy: EnergyLagrangian, task_map: TaskMap) -> None:
        if energy.dim != task_map.codomain_dim:
            raise DimensionMismatchError(
                f"Energy '{energy.name}' has dim {energy.dim}, "
                f"map '{task_map.name}' has codomain {task_map.codomain_dim}"
            )
        super().__init__(task_map.domain_dim, f"{energy.name}@{task_map.name}")
        self.energy = energy
        self.task_map = task_map

    def _leaf_state(self, q, qd):
        x, jac, xd, _ = self.task_map.evaluate(q, qd)
        return x, xd

    def value(self, q: np.ndarray, qd: np.ndarray) -> float:
        return self.energy.value(*self._leaf_state(q, qd))

    def el_terms(self, q: np.ndarray, qd: np.ndarray) -> Terms:
        x, jac, xd, curv = self.task_map.evaluate(q, qd)
        metric, force = self.energy.el_terms(x, xd)
        return jac.T @ metric @ jac, jac.T @ (force + metric @ curv)

    def hamiltonian(self, q: np.ndarray, qd: np.ndarray) -> float:
        return self.energy.hamiltonian(*self._leaf_state(q, qd))


class PulledBackFinslerEnergy(PulledBackEnergy, FinslerEnergy):
    """Pullback of a Finsler energy; still Finsler in the root velocity."""

    def hamiltonian(self, q: np.ndarray, qd: np.ndarray) -> float:
        return self.value(q, qd)


def pull_energy(task_map: TaskMap, energy: EnergyLagrangian) -> PulledBackEnergy:
    """Pulls an energy back through a task map, keeping the Finsler refinement."""
    if isinstance(energy, FinslerEnergy):
        return PulledBackFinslerEnergy(energy, task_map)
    return PulledBackEnergy(energy, task_map)


class SystemEnergy(EnergyLagrangian):
    """
    Sum of (pulled-back) component energies defining the system energy L_e.

    :param components: Energies on a common space.
    """

    def __init__(self, components: Sequence[EnergyLagrangian], name: str = "system"):
        components = list(components)
        if not components:
            raise ParameterError("System energy needs at least one component")
        dims = {component.dim for component in components}
        if len(dims) != 1:
            raise DimensionMismatchError(f"Mixed component dimensions {sorted(dims)}")
        super().__init__(dims.pop(), name)
        self.components = components

    @property
    def is_finsler(self) -> bool:
        """True when every component is a Finsler energy."""
        return all(isinstance(c, FinslerEnergy) for c in self.components)

    def value(self, x: np.ndarray, xd: np.ndarray) -> float:
        return float(sum(c.value(x, xd) for c in self.components))

    def el_terms(self, x: np.ndarray, xd: np.ndarray) -> Terms:
        metric = np.zeros((self.dim, self.dim))
        force = np.zeros(self.dim)
        for component in self.components:
            m, f = component.el_terms(x, xd)
            metric += m
            force += f
        return metric, force

    def hamiltonian(self, x: np.ndarray, xd: np.ndarray) -> float:
        return float(sum(c.hamiltonian(x, xd) for c in self.components))


def el_terms_fd_oracle(
    energy: EnergyLagrangian, x: np.ndarray, xd: np.ndarray
) -> Terms:
    """
    Euler-Lagrange terms from finite differences of ``energy.value`` only.

    M_e = d2L/dxd2 and f_e = d2L/dxd dx xd - dL/dx. First differences use the step
    1e-6 (1 + |.|); nested second differences use 1e-4 (1 + |.|), where roundoff
    stays below the oracle tolerance.

    :raises EvaluationError: If the Lagrangian is non-finite at a stencil point.
    """
    x = np.asarray(x, dtype=float)
    xd = np.asarray(xd, dtype=float)
    n = x.size

    def lagrangian(pos, vel):
        try:
            val = float(energy.value(pos, vel))
        except EvaluationError as e:
            raise EvaluationError(
                f"Oracle stencil left the domain: {e}", e.state
            ) from e
        if not np.isfinite(val):
            raise EvaluationError(
                "Non-finite Lagrangian in oracle", {"x": pos, "xd": vel}
            )
        return val

    hv = HESSIAN_STEP * (1.0 + np.linalg.norm(xd))
    hx = HESSIAN_STEP * (1.0 + np.linalg.norm(x))
    eye = np.eye(n)

    metric = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            ei, ej = hv * eye[i], hv * eye[j]
            metric[i, j] = (
                lagrangian(x, xd + ei + ej)
                - lagrangian(x, xd + ei - ej)
                - lagrangian(x, xd - ei + ej)
                + lagrangian(x, xd - ei - ej)
            ) / (4 * hv * hv)

    def velocity_gradient(pos):
        return np.array(
            [
                (lagrangian(pos, xd + hv * eye[i]) - lagrangian(pos, xd - hv * eye[i]))
                / (2 * hv)
                for i in range(n)
            ]
        )

    mixed = np.zeros(n)
    speed = np.linalg.norm(xd)
    if speed > 0.0:
        direction = xd / speed
        mixed = (
            velocity_gradient(x + hx * direction)
            - velocity_gradient(x - hx * direction)
        ) / (2 * hx) * speed
    position_gradient = central_gradient(lambda pos: lagrangian(pos, xd), x)
    return 0.5 * (metric + metric.T), mixed - position_gradient


def hamiltonian_rate(
    energy: EnergyLagrangian, x: np.ndarray, xd: np.ndarray, xdd: np.ndarray
) -> float:
    """Energy time derivative dH/dt = xd^T (M_e xdd + f_e)."""
    metric, force = energy.el_terms(x, xd)
    return float(xd @ (metric @ xdd + force))


def _barrier_domain(name: str) -> Callable:
    def check(x):
        coordinate = np.asarray(x)[..., 0]
        if np.any(coordinate <= X_MIN):
            raise BoundaryViolation(
                f"Barrier coordinate {np.min(coordinate):.3e} at or below {X_MIN} "
                f"in '{name}'",
                {"x": x},
            )

    return check


def _circle_coordinate(center: np.ndarray, radius: float):
    """phi = |q - q_o|/r - 1 with gradient and Hessian."""

    def evaluate(q):
        diff = q - center
        dist = np.linalg.norm(diff)
        if dist == 0.0:
            raise EvaluationError("Evaluation at the obstacle center", {"q": q})
        unit = diff / dist
        phi = dist / radius - 1.0
        if phi <= X_MIN:
            raise BoundaryViolation(
                f"Obstacle distance {phi:.3e} at or below {X_MIN}", {"q": q}
            )
        hessian = (np.eye(q.size) - np.outer(unit, unit)) / (radius * dist)
        return phi, unit / radius, hessian

    return evaluate


def _positive(params: Dict[str, Any], *names: str) -> None:
    for name in names:
        if name in params and not float(params[name]) > 0.0:
            raise ParameterError(
                f"Parameter '{name}' must be positive, got {params[name]}"
            )


def _euclidean(params):
    lam = float(params.get("lam", 1.0))
    dim = int(params.get("dim", 2))
    zero = np.zeros(dim)
    return IsotropicEnergy(dim, lambda x: (lam, zero), name="euclidean", batched=True)


def _barrier_scaled(params):
    lam = float(params.get("lam", 0.25))
    power = float(params.get("power", 1.0))
    check = _barrier_domain("barrier_scaled")

    def scale(x):
        coordinate = np.asarray(x, dtype=float)[..., :1]
        return (
            lam / coordinate[..., 0] ** power,
            -power * lam / coordinate ** (power + 1.0),
        )

    # active only while the coordinate decreases
    return IsotropicEnergy(
        1,
        scale,
        switch_fn=lambda x, xd: np.where(np.asarray(xd)[..., 0] < 0.0, 1.0, 0.0),
        domain_fn=check,
        name="barrier_scaled",
        batched=True,
    )


def _chomp_like(params):
    k = float(params.get("k", 0.5))
    circle = _circle_coordinate(
        np.asarray(params.get("center", [0.0, 0.0]), dtype=float),
        float(params.get("radius", 1.0)),
    )

    def scale(q):
        phi, grad_phi, _ = circle(q)
        return k / phi**2, -2.0 * k / phi**3 * grad_phi

    return IsotropicEnergy(2, scale, domain_fn=lambda q: circle(q), name="chomp_like")


def _directional(params):
    circle = _circle_coordinate(
        np.asarray(params.get("center", [0.0, 0.0]), dtype=float),
        float(params.get("radius", 1.0)),
    )

    def metric(q):
        phi, a, _ = circle(q)
        return np.outer(a, a) / phi**2

    def metric_grad(q):
        phi, a, hess = circle(q)
        outer = np.outer(a, a)
        return (
            np.einsum("k,ij->kij", -2.0 * a / phi**3, outer)
            + (np.einsum("ki,j->kij", hess, a) + np.einsum("i,kj->kij", a, hess))
            / phi**2
        )

    return MetricEnergy(
        2, metric, metric_grad, domain_fn=lambda q: circle(q), name="directional"
    )


def _radial_switch(params):
    m_upper = float(params.get("m_upper", 1.0))
    m_lower = float(params.get("m_lower", 0.0))
    alpha_s = float(params.get("alpha_s", 25.0))
    radius = float(params.get("radius", 5.0))
    dim = int(params.get("dim", 2))

    def scale(x):
        x = np.asarray(x, dtype=float)
        rho = np.linalg.norm(x, axis=-1, keepdims=True)
        s, ds = tanh_switch(rho, alpha_s, radius)
        unit = np.divide(x, rho, out=np.zeros_like(x), where=rho > 0.0)
        gap = m_upper - m_lower
        return s[..., 0] * gap + m_lower, gap * ds * unit

    return IsotropicEnergy(dim, scale, name="radial_switch", batched=True)


def _vortex_zone(params):
    mass = float(params.get("mass", 0.5))
    center = np.asarray(params.get("center", [0.0, 0.0]), dtype=float)
    radius = float(params.get("radius", 1.0))

    def scale(q):
        diff = np.asarray(q, dtype=float) - center
        rho = np.linalg.norm(diff, axis=-1, keepdims=True)
        # zero outside the zone
        gap = np.minimum(rho - radius, 0.0)
        unit = np.divide(diff, rho, out=np.zeros_like(diff), where=rho > 0.0)
        return mass * gap[..., 0] ** 2 / radius**2, 2.0 * mass * gap / radius**2 * unit

    return IsotropicEnergy(2, scale, name="vortex_zone", batched=True)


def _priority_radial(params):
    m_upper = float(params.get("m_upper", 2.0))
    m_lower = float(params.get("m_lower", 0.3))
    alpha_m = float(params.get("alpha_m", 0.75))
    dim = int(params.get("dim", 2))
    return IsotropicEnergy(
        dim,
        lambda x: radial_priority(x, m_upper, m_lower, alpha_m),
        name="priority_radial",
        batched=True,
    )


def _height_decay(params):
    lam = float(params.get("lam", 5.0))
    sigma = float(params.get("sigma", 0.3))
    floor = float(params.get("floor", 0.0))
    normal = np.asarray(params.get("normal", [0.0, 1.0]), dtype=float)

    def scale(x):
        g = lam * np.exp(-(np.asarray(x, dtype=float) @ normal - floor) / sigma)
        return g, -np.expand_dims(g, -1) / sigma * normal

    return IsotropicEnergy(2, scale, name="height_decay", batched=True)


def _horizontal_gaussian(params):
    lam = float(params.get("lam", 5.0))
    sigma = float(params.get("sigma", 0.3))
    goal = np.asarray(params.get("goal", [0.0, 0.0]), dtype=float)
    axis = np.array([1.0, 0.0])

    def scale(x):
        s = (np.asarray(x, dtype=float) - goal) @ axis
        g = lam * np.exp(-(s**2) / (2 * sigma**2))
        return g, -np.expand_dims(g * s, -1) / sigma**2 * axis

    return IsotropicEnergy(2, scale, name="horizontal_gaussian", batched=True)


ENERGY_KINDS: Dict[str, Tuple[Callable, Tuple[str, ...]]] = {
    "euclidean": (_euclidean, ("lam", "dim")),
    "barrier_scaled": (_barrier_scaled, ("lam", "power")),
    "chomp_like": (_chomp_like, ("k", "center", "radius")),
    "directional": (_directional, ("center", "radius")),
    "radial_switch": (
        _radial_switch, ("m_upper", "m_lower", "alpha_s", "radius", "dim")
    ),
    "vortex_zone": (_vortex_zone, ("mass", "center", "radius")),
    "priority_radial": (_priority_radial, ("m_upper", "m_lower", "alpha_m", "dim")),
    "height_decay": (_height_decay, ("lam", "sigma", "floor", "normal")),
    "horizontal_gaussian": (_horizontal_gaussian, ("lam", "sigma", "goal")),
}


def make_builtin_energy(
    kind: str, params: Optional[Dict[str, Any]] = None
) -> EnergyLagrangian:
    """
    Constructs one of the catalogued energies.

    :param kind: Catalogue name, one of :data:`ENERGY_KINDS`.
    :param params: Keyword parameters of that kind.
    :return: The energy.
    :rtype: EnergyLagrangian
    :raises ParameterError: For unknown kinds, unknown or non-positive parameters.
    """
    params = dict(params or {})
    if kind not in ENERGY_KINDS:
        logging.warning(f"Unknown energy kind requested: {kind}")
        raise ParameterError(f"Unknown energy kind '{kind}'")
    builder, allowed = ENERGY_KINDS[kind]
    unknown = sorted(set(params) - set(allowed))
    if unknown:
        raise ParameterError(f"Unknown parameters {unknown} for energy '{kind}'")
    try:
        _positive(params, "lam", "k", "radius", "mass", "alpha_s", "alpha_m", "sigma")
        _positive(params, "m_upper", "dim", "power")
        if "m_lower" in params and float(params["m_lower"]) < 0.0:
            raise ParameterError("Parameter 'm_lower' must be non-negative")
        return builder(params)
    except ParameterError:
        raise
    except (TypeError, ValueError) as e:
        raise ParameterError(f"Bad parameter for energy '{kind}': {e}") from e


def energy_kinds() -> List[str]:
    """Names of the catalogued energies."""
    return sorted(ENERGY_KINDS)
