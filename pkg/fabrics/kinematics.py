"""
Task maps used by the experiments.

Includes the planar serial arm, joint and coordinate limit maps, circular obstacle
distance, floor height and horizontal goal offset, the polar chart and the
attractor map x = q - q_d. Every map supplies an analytic Jacobian and curvature.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np

from .exceptions import EvaluationError, ParameterError
from .spec_core import TaskMap, compose, linear_map

DISTANCE_KINDS = (
    "upper_limit",
    "lower_limit",
    "circle_obstacle",
    "floor_height",
    "horizontal_goal_distance",
)


@dataclass(frozen=True)
class PlanarArm:
    """
    Planar serial arm with revolute joints and its base at the origin.

    :param link_lengths: Link lengths in meters.
    :param joint_limits: (lower, upper) bounds per joint in radians.
    :param q0: Default configuration.
    """

    link_lengths: Tuple[float, ...] = (1.0, 1.0, 1.0)
    joint_limits: Tuple[Tuple[float, float], ...] = (
        (-np.pi, np.pi),
        (-np.pi, np.pi),
        (-np.pi, np.pi),
    )
    q0: Tuple[float, ...] = (np.pi / 2, -np.pi / 4, -np.pi / 4)

    def __post_init__(self):
        n = len(self.link_lengths)
        if len(self.joint_limits) != n or len(self.q0) != n:
            raise ParameterError("Arm link, limit and q0 lengths must match")
        if any(length <= 0.0 for length in self.link_lengths):
            raise ParameterError("Link lengths must be positive")
        if any(lower >= upper for lower, upper in self.joint_limits):
            raise ParameterError("Joint limits need lower < upper")

    @property
    def dof(self) -> int:
        """Number of joints."""
        return len(self.link_lengths)

    def joint_positions(self, q: np.ndarray) -> np.ndarray:
        """Base, joint and end-effector positions, shape (dof + 1, 2)."""
        angles = np.cumsum(q)
        links = np.asarray(self.link_lengths)[:, None] * np.stack(
            [np.cos(angles), np.sin(angles)], axis=1
        )
        return np.vstack([np.zeros(2), np.cumsum(links, axis=0)])


def arm_fk(arm: PlanarArm, q: np.ndarray):
    """
    End-effector position, Jacobian and curvature callable of a planar arm.

    Leading axes of ``q`` are batch axes.

    :return: Tuple (ee position, J of shape (2, dof), callable qd -> Jdot qd).
    """
    q = np.asarray(q, dtype=float)
    lengths = np.asarray(arm.link_lengths)
    angles = np.cumsum(q, axis=-1)
    cos, sin = np.cos(angles), np.sin(angles)
    ee = np.stack([cos @ lengths, sin @ lengths], axis=-1)
    # column j sums the links at and beyond joint j
    tail_x = np.flip(np.cumsum(np.flip(lengths * cos, -1), axis=-1), -1)
    tail_y = np.flip(np.cumsum(np.flip(lengths * sin, -1), axis=-1), -1)
    jac = np.stack([-tail_y, tail_x], axis=-2)

    def curvature(qd):
        rates = np.cumsum(np.asarray(qd, dtype=float), axis=-1) ** 2
        return -np.stack([(cos * rates) @ lengths, (sin * rates) @ lengths], axis=-1)

    return ee, jac, curvature


def end_effector_map(arm: PlanarArm) -> TaskMap:
    """Task map q -> end-effector position."""
    return TaskMap(
        arm.dof,
        2,
        lambda q: arm_fk(arm, q)[0],
        lambda q: arm_fk(arm, q)[1],
        lambda q, qd: arm_fk(arm, q)[2](qd),
        "end_effector",
        batched=True,
    )


@dataclass(frozen=True)
class DistanceMap1D:
    """
    Scalar distance-like map, positive on the admissible interior.

    :param kind: One of :data:`DISTANCE_KINDS`.
    :param params: Kind parameters: ``index``, ``bound`` and ``dim`` for limits;
        ``center``, ``radius`` for circles; ``floor``, ``normal`` for the floor;
        ``goal``, ``axis`` for the horizontal goal distance.
    """

    kind: str
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DISTANCE_KINDS:
            raise ParameterError(f"Unknown distance map kind '{self.kind}'")

    def task_map(self) -> TaskMap:
        """The map as a TaskMap into R^1."""
        builder = _DISTANCE_BUILDERS[self.kind]
        return builder(self.params)


def _limit(params, sign):
    dim = int(params.get("dim", 2))
    index = int(params["index"])
    bound = float(params["bound"])
    row = np.zeros((1, dim))
    row[0, index] = sign
    # upper: bound - q_j, lower: q_j - bound
    side = "upper" if sign < 0 else "lower"
    return linear_map(row, np.array([-sign * bound]), f"{side}_limit_{index}")


def _circle_obstacle(params):
    center = np.asarray(params.get("center", [0.0, 0.0]), dtype=float)
    radius = float(params.get("radius", 1.0))
    if radius <= 0.0:
        raise ParameterError("Obstacle radius must be positive")

    def unit(q):
        diff = np.asarray(q, dtype=float) - center
        dist = np.linalg.norm(diff, axis=-1, keepdims=True)
        if np.any(dist == 0.0):
            raise EvaluationError(
                "Distance map evaluated at the circle center", {"q": q}
            )
        return diff / dist, dist

    def curvature(q, qd):
        direction, dist = unit(q)
        qd = np.asarray(qd, dtype=float)
        tangential = qd - direction * np.sum(direction * qd, axis=-1, keepdims=True)
        return np.sum(tangential * tangential, axis=-1, keepdims=True) / (radius * dist)

    return TaskMap(
        center.size,
        1,
        lambda q: unit(q)[1] / radius - 1.0,
        lambda q: unit(q)[0][..., None, :] / radius,
        curvature,
        "circle_obstacle",
        batched=True,
    )


def _floor_height(params):
    normal = np.asarray(params.get("normal", [0.0, 1.0]), dtype=float)
    normal = normal / np.linalg.norm(normal)
    offset = np.array([-float(params.get("floor", 0.0))])
    return linear_map(normal[None, :], offset, "floor_height")


def _horizontal_goal_distance(params):
    goal = np.asarray(params["goal"], dtype=float)
    axis = np.zeros((1, goal.size))
    axis[0, int(params.get("axis", 0))] = 1.0
    return linear_map(axis, -axis @ goal, "horizontal_goal_distance")


_DISTANCE_BUILDERS: Dict[str, Callable] = {
    "upper_limit": lambda params: _limit(params, -1.0),
    "lower_limit": lambda params: _limit(params, 1.0),
    "circle_obstacle": _circle_obstacle,
    "floor_height": _floor_height,
    "horizontal_goal_distance": _horizontal_goal_distance,
}


def distance_map(dmap: DistanceMap1D, q: np.ndarray, qd: np.ndarray = None):
    """
    Evaluates a distance map.

    :param q: Position (root or task space, depending on the map).
    :param qd: Optional velocity for the curvature term (zero by default).
    :return: Tuple (value, Jacobian row, curvature Jdot qd).
    :raises EvaluationError: At the center of a circle obstacle.
    """
    q = np.asarray(q, dtype=float)
    qd = np.zeros_like(q) if qd is None else np.asarray(qd, dtype=float)
    task_map = dmap.task_map()
    value = float(np.asarray(task_map.map(q))[0])
    row = np.asarray(task_map.jacobian(q), dtype=float).reshape(-1)
    curv = float(np.asarray(task_map.curvature(q, qd))[0])
    return value, row, curv


def polar_map() -> TaskMap:
    """
    Polar chart (r, theta) -> (r cos theta, r sin theta); det J = r.

    :raises EvaluationError: For r <= 0.
    """

    def check(q):
        if q[0] <= 0.0:
            raise EvaluationError("Polar map needs r > 0", {"q": q})

    def forward(q):
        check(q)
        r, theta = q
        return np.array([r * np.cos(theta), r * np.sin(theta)])

    def jacobian(q):
        check(q)
        r, theta = q
        c, s = np.cos(theta), np.sin(theta)
        return np.array([[c, -r * s], [s, r * c]])

    def curvature(q, qd):
        check(q)
        r, theta = q
        rd, thetad = qd
        c, s = np.cos(theta), np.sin(theta)
        return np.array(
            [
                -2.0 * rd * thetad * s - r * thetad**2 * c,
                2.0 * rd * thetad * c - r * thetad**2 * s,
            ]
        )

    return TaskMap(2, 2, forward, jacobian, curvature, "polar")


def cartesian_to_polar_map() -> TaskMap:
    """
    Inverse chart (x, y) -> (r, theta), theta by atan2.

    :raises EvaluationError: At the origin.
    """

    def radius(q):
        r = float(np.hypot(q[0], q[1]))
        if r == 0.0:
            raise EvaluationError("Polar coordinates undefined at the origin", {"q": q})
        return r

    def forward(q):
        return np.array([radius(q), np.arctan2(q[1], q[0])])

    def jacobian(q):
        r = radius(q)
        x, y = q
        return np.array([[x / r, y / r], [-y / r**2, x / r**2]])

    def curvature(q, qd):
        r = radius(q)
        x, y = q
        xd, yd = qd
        cross = x * yd - y * xd
        radial = x * xd + y * yd
        return np.array([cross**2 / r**3, -2.0 * radial * cross / r**4])

    return TaskMap(2, 2, forward, jacobian, curvature, "cartesian_to_polar")


def attractor_map(target: Sequence[float]) -> TaskMap:
    """Attractor map x = q - q_d."""
    target = np.asarray(target, dtype=float)
    return linear_map(np.eye(target.size), -target, "attractor")


def limit_maps(lower: Sequence[float], upper: Sequence[float]) -> List[TaskMap]:
    """The 2n limit maps of an n-dimensional box, upper then lower per coordinate."""
    dim = len(lower)
    maps = []
    for index in range(dim):
        sides = (("upper_limit", upper[index]), ("lower_limit", lower[index]))
        for kind, bound in sides:
            params = {"index": index, "bound": bound, "dim": dim}
            maps.append(DistanceMap1D(kind, params).task_map())
    return maps


def joint_limit_maps(arm: PlanarArm) -> List[TaskMap]:
    """Limit maps of every joint of an arm."""
    lower, upper = zip(*arm.joint_limits)
    return limit_maps(lower, upper)


def ee_map(arm: PlanarArm, outer: TaskMap) -> TaskMap:
    """An end-effector-space map seen from the joint space."""
    return compose(outer, end_effector_map(arm), f"{outer.name}@ee")


def sample_reaching_goals(
    rng: np.random.Generator,
    count: int,
    radius_range: Sequence[float],
    angle_range: Sequence[float],
    min_separation: float = 0.0,
) -> np.ndarray:
    """
    Seeded goals in an annular sector around the arm base.

    Draws are rejected until consecutive goals are at least ``min_separation`` apart.
    """
    goals: List[np.ndarray] = []
    while len(goals) < count:
        radius = rng.uniform(*radius_range)
        angle = rng.uniform(*angle_range)
        goal = radius * np.array([np.cos(angle), np.sin(angle)])
        if goals and np.linalg.norm(goal - goals[-1]) < min_separation:
            continue
        goals.append(goal)
    return np.array(goals)


def sample_floor_goals(
    rng: np.random.Generator,
    count: int,
    near_range: Sequence[float],
    far_range: Sequence[float],
    floor: float = 0.0,
    height: float = 0.0,
) -> np.ndarray:
    """
    Seeded goals at ``height`` above the floor line, alternating between a near
    and a far band.

    Consecutive goals are therefore at least ``far_range[0] - near_range[1]`` apart.

    :raises ParameterError: If the bands overlap.
    """
    if near_range[1] >= far_range[0]:
        raise ParameterError("Floor goal bands must not overlap")
    bands = (near_range, far_range)
    return np.array(
        [[rng.uniform(*bands[index % 2]), floor + height] for index in range(count)]
    )
