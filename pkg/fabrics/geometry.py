"""
Geometry generators and their metric-weighted combination.

A generator is an acceleration policy xdd + h2(x, xd) = 0 whose h2 is positively
homogeneous of degree 2 in the velocity, so its solution paths do not depend on the
traversal speed. Paired with a priority energy it becomes a weighted geometry whose
spec (M_e, M_e h2) can be pulled back and summed on a transform tree.
"""

from dataclasses import dataclass
import logging
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .energy import (
    EnergyLagrangian,
    SystemEnergy,
    X_MIN,
    make_builtin_energy,
    pull_energy,
)
from .exceptions import (
    BoundaryViolation,
    DimensionMismatchError,
    ParameterError,
    ZeroVelocityError,
)
from .potentials import inverse_square_barrier, limit_barrier, smooth_norm_gradient
from .spec_core import DEFAULT_COND_CAP, Spec, TaskMap, solve_metric

VELOCITY_EPS = 1e-12
ROTATION = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class GeometryGenerator:
    """
    Generator xdd + h2(x, xd) = 0 on a ``dim``-dimensional space.

    :param dim: Dimension of the space.
    :param h2: Callable (x, xd) -> h2 vector, homogeneous of degree 2 in xd.
    :param name: Catalogue name or label.
    :param batched: True when ``h2`` broadcasts over leading batch axes.
    """

    dim: int
    h2: Callable
    name: str = ""
    batched: bool = False


@dataclass(frozen=True)
class WeightedGeometry:
    """
    A generator weighted by the energy tensor of a priority energy.

    :param generator: The geometry generator.
    :param priority: Energy whose M_e weighs the generator.
    """

    generator: GeometryGenerator
    priority: EnergyLagrangian

    def __post_init__(self):
        if self.generator.dim != self.priority.dim:
            raise DimensionMismatchError(
                f"Generator '{self.generator.name}' dim {self.generator.dim} does not "
                f"match priority '{self.priority.name}' dim {self.priority.dim}"
            )

    def terms(self, x: np.ndarray, xd: np.ndarray):
        """Induced spec terms (M_e, M_e h2)."""
        metric, _ = self.priority.el_terms(x, xd)
        if not np.any(metric):
            return metric, np.zeros(self.generator.dim)
        return metric, metric @ np.asarray(self.generator.h2(x, xd), dtype=float)

    def spec(self) -> Spec:
        """Force-form spec (M_e, M_e h2)."""
        return Spec.from_terms(self.generator.dim, self.terms)


def geometric_projection(h2_val: np.ndarray, xd: np.ndarray) -> np.ndarray:
    """
    Velocity-orthogonal component (I - u u^T) h2 with u = xd / |xd|.

    :raises ZeroVelocityError: When xd is zero.
    """
    speed = np.linalg.norm(xd)
    if speed == 0.0:
        raise ZeroVelocityError("Geometric projection undefined at zero velocity")
    unit = np.asarray(xd, dtype=float) / speed
    h2_val = np.asarray(h2_val, dtype=float)
    return h2_val - unit * (unit @ h2_val)


class WeightedFabric:
    """
    Metric-weighted combination of leaf geometries on a star-shaped tree.

    One pass over the leaves yields both the combined geometry spec
    sum_i (J^T M J, J^T M (h2 + Jdot qd)) and the Euler-Lagrange terms of the
    system energy sum_i L_i(phi_i(q), J_i qd).

    :param leaves: List of (TaskMap from root, WeightedGeometry) pairs.
    :param root_dim: Root dimension.
    """

    def __init__(
        self,
        leaves: Sequence[Tuple[TaskMap, WeightedGeometry]],
        root_dim: int,
        cond_cap: float = DEFAULT_COND_CAP,
    ) -> None:
        self.leaves = list(leaves)
        if not self.leaves:
            raise ParameterError("Cannot combine an empty list of geometries")
        for task_map, weighted in self.leaves:
            if task_map.domain_dim != root_dim:
                raise DimensionMismatchError(
                    f"Map '{task_map.name}' domain {task_map.domain_dim} "
                    f"!= root {root_dim}"
                )
            if task_map.codomain_dim != weighted.generator.dim:
                raise DimensionMismatchError(
                    f"Map '{task_map.name}' codomain {task_map.codomain_dim} != "
                    f"geometry dim {weighted.generator.dim}"
                )
        self.root_dim = root_dim
        self.cond_cap = cond_cap
        self.energy = SystemEnergy(
            [
                pull_energy(task_map, weighted.priority)
                for task_map, weighted in self.leaves
            ]
        )

    def terms(self, q: np.ndarray, qd: np.ndarray):
        """
        Root terms at one state.

        :return: Tuple (M, f_geometry, f_energy) where M is shared by the geometry
            spec and the system energy.
        """
        n = self.root_dim
        metric = np.zeros((n, n))
        f_geometry = np.zeros(n)
        f_energy = np.zeros(n)
        for task_map, weighted in self.leaves:
            x, jac, xd, curv = task_map.evaluate(q, qd)
            leaf_metric, leaf_force = weighted.priority.el_terms(x, xd)
            if not np.any(leaf_metric) and not np.any(leaf_force):
                continue
            h2 = np.asarray(weighted.generator.h2(x, xd), dtype=float)
            metric += jac.T @ leaf_metric @ jac
            f_geometry += jac.T @ (leaf_metric @ (h2 + curv))
            f_energy += jac.T @ (leaf_force + leaf_metric @ curv)
        return metric, f_geometry, f_energy

    @property
    def batched(self) -> bool:
        """True when every leaf map, generator and priority accepts batches."""
        return all(
            task_map.batched
            and weighted.generator.batched
            and weighted.priority.batched
            for task_map, weighted in self.leaves
        )

    def batch_terms(self, q: np.ndarray, qd: np.ndarray):
        """
        Root terms of a batch of states, matching :meth:`terms` state by state.

        :param q: Root positions of shape (B, n).
        :param qd: Root velocities of shape (B, n).
        :return: Tuple (M, f_geometry, f_energy, L_e) of shapes (B, n, n), (B, n),
            (B, n) and (B,).
        :raises ParameterError: If a leaf has no batched form.
        """
        count, n = q.shape
        metric = np.zeros((count, n, n))
        f_geometry = np.zeros((count, n))
        f_energy = np.zeros((count, n))
        energy = np.zeros(count)
        for task_map, weighted in self.leaves:
            x, jac, xd, curv = task_map.evaluate_batch(q, qd)
            leaf_metric, leaf_force, leaf_energy = weighted.priority.batch_terms(x, xd)
            if not np.any(leaf_metric) and not np.any(leaf_force):
                continue
            h2 = np.broadcast_to(weighted.generator.h2(x, xd), x.shape)
            jac_t = np.swapaxes(jac, -1, -2)
            pulled = jac_t @ leaf_metric
            metric += pulled @ jac
            f_geometry += (pulled @ (h2 + curv)[..., None])[..., 0]
            f_energy += (jac_t @ leaf_force[..., None])[..., 0]
            f_energy += (pulled @ curv[..., None])[..., 0]
            energy += leaf_energy
        return metric, f_geometry, f_energy, energy

    def h2(self, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
        """Root generator h~2 = M^-1 f_geometry."""
        metric, f_geometry, _ = self.terms(q, qd)
        return solve_metric(metric, f_geometry, self.cond_cap, {"q": q, "qd": qd})

    @property
    def spec(self) -> Spec:
        """Combined geometry spec on the root."""
        return Spec.from_terms(self.root_dim, lambda q, qd: self.terms(q, qd)[:2])


def combine_weighted(
    geometries: Sequence[Tuple[TaskMap, WeightedGeometry]], root_dim: int
) -> Tuple[Spec, SystemEnergy]:
    """
    Pulls back and sums weighted geometries.

    :return: The root spec and the system energy (sum of pulled-back priorities);
        the canonical root acceleration is -(sum M~_i)^-1 sum M~_i h~2_i.
    :raises ParameterError: If the list is empty.
    :raises DimensionMismatchError: If a map does not start at the root.
    """
    fabric = WeightedFabric(geometries, root_dim)
    return fabric.spec, fabric.energy


def _speed_sq(xd):
    xd = np.asarray(xd, dtype=float)
    return np.sum(xd * xd, axis=-1, keepdims=True)


def _circle(params):
    center = np.asarray(params.get("center", [0.0, 0.0]), dtype=float)
    radius = float(params.get("radius", 1.0))

    def evaluate(q):
        diff = np.asarray(q, dtype=float) - center
        dist = np.linalg.norm(diff, axis=-1, keepdims=True)
        phi = dist / radius - 1.0
        if np.any(dist == 0.0) or np.any(phi <= X_MIN):
            raise BoundaryViolation(
                f"Obstacle distance {np.min(phi):.3e} at the boundary", {"q": q}
            )
        return phi, diff / (dist * radius)

    return evaluate


def _zero_baseline(params):
    dim = int(params.get("dim", 2))
    return GeometryGenerator(
        dim,
        lambda x, xd: np.zeros_like(np.asarray(xd, dtype=float)),
        "zero_baseline",
        batched=True,
    )


def _barrier_gradient(params):
    lam = float(params.get("lam", 0.7))
    k = float(params.get("k", 0.5))
    circle = _circle(params)

    def h2(q, xd):
        phi, grad_phi = circle(q)
        _, slope = inverse_square_barrier(phi, k)
        return lam * _speed_sq(xd) * slope * grad_phi

    return GeometryGenerator(2, h2, "barrier_gradient", batched=True)


def _chomp_derived(params):
    circle = _circle(params)

    def h2(q, xd):
        phi, grad_phi = circle(q)
        # grad g / g for g = k / phi^2
        log_grad = -2.0 * grad_phi / phi
        along = np.sum(log_grad * xd, axis=-1, keepdims=True)
        return -(along * xd - 0.5 * _speed_sq(xd) * log_grad)

    return GeometryGenerator(2, h2, "chomp_derived", batched=True)


def _finsler_scaled(params):
    lam = float(params.get("lam", 0.7))
    k = float(params.get("k", 0.5))
    circle = _circle(params)

    def h2(q, xd):
        phi, grad_phi = circle(q)
        along = np.sum(grad_phi * np.asarray(xd, dtype=float), axis=-1, keepdims=True)
        energy = 0.5 * along**2 / phi**2
        _, slope = inverse_square_barrier(phi, k)
        return lam * energy * slope * grad_phi

    return GeometryGenerator(2, h2, "finsler_scaled", batched=True)


def _expansion(params):
    dim = int(params.get("dim", 2))
    return GeometryGenerator(
        dim,
        lambda x, xd: -_speed_sq(xd) * np.asarray(x, dtype=float),
        "expansion",
        batched=True,
    )


def _limit(params):
    lam = float(params.get("lam", 0.25))
    a1 = float(params.get("a1", 0.4))
    a2 = float(params.get("a2", 0.2))
    a3 = float(params.get("a3", 20.0))
    a4 = float(params.get("a4", 5.0))

    def h2(x, xd):
        coordinate = np.asarray(x, dtype=float)[..., :1]
        if np.any(coordinate <= X_MIN):
            raise BoundaryViolation(
                f"Limit coordinate {np.min(coordinate):.3e} at the boundary", {"x": x}
            )
        _, slope = limit_barrier(coordinate, a1, a2, a3, a4)
        return lam * np.asarray(xd, dtype=float)[..., :1] ** 2 * slope

    return GeometryGenerator(1, h2, "limit", batched=True)


def _vortex(params):
    strength = float(params.get("f", 2.0))
    sign = float(params.get("sign", 1.0))
    if sign not in (-1.0, 1.0):
        raise ParameterError(f"Vortex sign must be +1 or -1, got {sign}")
    rotation = sign * ROTATION

    def h2(q, xd):
        xd = np.asarray(xd, dtype=float)
        speed = np.linalg.norm(xd, axis=-1, keepdims=True)
        turned = strength * speed * (xd @ rotation.T)
        return np.where(speed < VELOCITY_EPS, 0.0, turned)

    return GeometryGenerator(2, h2, "vortex", batched=True)


def _attractor(params):
    lam = float(params.get("lam", 7.0))
    k = float(params.get("k", 1.0))
    alpha = float(params.get("alpha_psi", 1.0))
    dim = int(params.get("dim", 2))

    def h2(x, xd):
        return lam * _speed_sq(xd) * smooth_norm_gradient(x, k, alpha)

    return GeometryGenerator(dim, h2, "attractor", batched=True)


def _redundancy(params):
    if "q0" not in params:
        raise ParameterError("Redundancy geometry needs 'q0'")
    q0 = np.asarray(params["q0"], dtype=float)
    lam = float(params.get("lam", 1.0))

    def h2(q, qd):
        return lam * _speed_sq(qd) * (np.asarray(q, dtype=float) - q0)

    return GeometryGenerator(q0.size, h2, "redundancy", batched=True)


def _floor_lift(params):
    normal = np.asarray(params.get("normal", [0.0, 1.0]), dtype=float)
    normal = normal / np.linalg.norm(normal)
    lam = float(params.get("lam", 1.0))

    def h2(x, xd):
        return -lam * _speed_sq(xd) * normal

    return GeometryGenerator(2, h2, "floor_lift", batched=True)


def _goal_attract(params):
    if "goal" not in params:
        raise ParameterError("Goal-attract geometry needs 'goal'")
    goal = np.asarray(params["goal"], dtype=float)

    def h2(x, xd):
        return _speed_sq(xd) * (np.asarray(x, dtype=float) - goal)

    return GeometryGenerator(goal.size, h2, "goal_attract", batched=True)


GEOMETRY_KINDS: Dict[str, Tuple[Callable, Tuple[str, ...]]] = {
    "zero_baseline": (_zero_baseline, ("dim",)),
    "barrier_gradient": (_barrier_gradient, ("lam", "k", "center", "radius")),
    "chomp_derived": (_chomp_derived, ("k", "center", "radius")),
    "finsler_scaled": (_finsler_scaled, ("lam", "k", "center", "radius")),
    "expansion": (_expansion, ("dim",)),
    "limit": (_limit, ("lam", "a1", "a2", "a3", "a4")),
    "vortex": (_vortex, ("f", "sign")),
    "attractor": (_attractor, ("lam", "k", "alpha_psi", "dim")),
    "redundancy": (_redundancy, ("q0", "lam")),
    "floor_lift": (_floor_lift, ("normal", "lam")),
    "goal_attract": (_goal_attract, ("goal",)),
}


def make_builtin_geometry(
    kind: str, params: Optional[Dict[str, Any]] = None
) -> GeometryGenerator:
    """
    Constructs one of the catalogued geometry generators.

    Every built-in returns h2 = 0 at zero velocity.

    :param kind: Catalogue name, one of :data:`GEOMETRY_KINDS`.
    :param params: Keyword parameters of that kind.
    :raises ParameterError: For unknown kinds or parameters.
    """
    params = dict(params or {})
    if kind not in GEOMETRY_KINDS:
        logging.warning(f"Unknown geometry kind requested: {kind}")
        raise ParameterError(f"Unknown geometry kind '{kind}'")
    builder, allowed = GEOMETRY_KINDS[kind]
    unknown = sorted(set(params) - set(allowed))
    if unknown:
        raise ParameterError(f"Unknown parameters {unknown} for geometry '{kind}'")
    try:
        for name in ("lam", "k", "radius", "f", "alpha_psi", "a3"):
            if name in params and not float(params[name]) > 0.0:
                raise ParameterError(
                    f"Parameter '{name}' must be positive, got {params[name]}"
                )
        return builder(params)
    except ParameterError:
        raise
    except (TypeError, ValueError) as e:
        raise ParameterError(f"Bad parameter for geometry '{kind}': {e}") from e


def weighted(
    geometry_kind: str,
    geometry_params: Optional[Dict[str, Any]],
    energy_kind: str,
    energy_params: Optional[Dict[str, Any]],
) -> WeightedGeometry:
    """Catalogue generator paired with a catalogue priority energy."""
    return WeightedGeometry(
        make_builtin_geometry(geometry_kind, geometry_params),
        make_builtin_energy(energy_kind, energy_params),
    )


def geometry_kinds() -> List[str]:
    """Names of the catalogued generators."""
    return sorted(GEOMETRY_KINDS)
