"""
Assembly of one root system from an experiment config.

The config's tree components become (task map, weighted geometry) leaves, the
forcing section becomes a ForcingPotential whose priority joins the fabric, and the
speed-control section becomes a SpeedController. ``FabricSystem.acceleration``
then dispatches on the experiment variant.
"""

from dataclasses import dataclass
import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from config import Config
from .energization import (
    energization_alpha,
    energize_then_pullback,
    pullback_then_energize,
)
from .exceptions import ConfigError, DimensionMismatchError, ParameterError
from .forcing import (
    ConvergenceMonitor,
    ForcingPotential,
    SpeedController,
    StepDiagnostics,
    alpha_from_terms,
    potential_force,
    potential_value,
    regulate_speed,
)
from .energy import make_builtin_energy
from .geometry import WeightedFabric, WeightedGeometry, weighted
from .kinematics import (
    DistanceMap1D,
    PlanarArm,
    attractor_map,
    cartesian_to_polar_map,
    ee_map,
    end_effector_map,
)
from .spec_core import TaskMap, identity_map, metric_asymmetry, solve_metric

GOAL = "goal"
ORDERS = ("root", "leaf")
OBSERVED = (
    "H_e",
    "psi",
    "L_ex",
    "alpha_ex0",
    "alpha_ex_psi",
    "alpha_ex",
    "alpha_Le",
    "eta",
    "beta",
    "asymmetry",
)


@dataclass(frozen=True)
class Leaf:
    """One resolved tree component."""

    name: str
    task_map: TaskMap
    geometry: WeightedGeometry


def make_arm(block: Optional[Dict[str, Any]]) -> Optional[PlanarArm]:
    """PlanarArm from the ``experiment.arm`` block, or None."""
    if block is None:
        return None
    kwargs = {}
    if "link_lengths" in block:
        kwargs["link_lengths"] = tuple(float(v) for v in block["link_lengths"])
    if "joint_limits" in block:
        kwargs["joint_limits"] = tuple(
            (float(lo), float(hi)) for lo, hi in block["joint_limits"]
        )
    if "q0" in block:
        kwargs["q0"] = tuple(float(v) for v in block["q0"])
    return PlanarArm(**kwargs)


def substitute_goal(value: Any, goal: Optional[np.ndarray]) -> Any:
    """Replaces every ``goal`` placeholder string in a parameter tree."""
    if isinstance(value, str) and value == GOAL:
        if goal is None:
            raise ConfigError("A 'goal' placeholder needs a segment goal")
        return [float(v) for v in goal]
    if isinstance(value, dict):
        return {key: substitute_goal(item, goal) for key, item in value.items()}
    if isinstance(value, list):
        return [substitute_goal(item, goal) for item in value]
    return value


def _reason(error: Exception) -> str:
    if isinstance(error, KeyError):
        return f"missing parameter {error}"
    return str(error)


def _need_arm(arm, kind):
    if arm is None:
        raise ConfigError(f"Map kind '{kind}' needs an experiment.arm section")
    return arm


def build_map(
    block: Dict[str, Any], root_dim: int, arm: Optional[PlanarArm]
) -> TaskMap:
    """
    Task map from a ``map`` block whose placeholders are already substituted.

    :raises ConfigError: For arm maps without an arm.
    :raises DimensionMismatchError: If the map does not start at the root.
    """
    kind = block["kind"]
    if kind == "identity":
        task_map = identity_map(root_dim)
    elif kind == "attractor":
        task_map = attractor_map(block["target"])
    elif kind in ("upper_limit", "lower_limit"):
        params = {"index": block["index"], "bound": block["bound"], "dim": root_dim}
        task_map = DistanceMap1D(kind, params).task_map()
    elif kind == "circle_obstacle":
        params = {
            "center": block.get("center", [0.0, 0.0]),
            "radius": block.get("radius", 1.0),
        }
        task_map = DistanceMap1D(kind, params).task_map()
    elif kind == "cartesian_to_polar":
        task_map = cartesian_to_polar_map()
    elif kind in ("joint_upper_limit", "joint_lower_limit"):
        arm = _need_arm(arm, kind)
        index = int(block["index"])
        lower, upper = arm.joint_limits[index]
        bound = upper if kind == "joint_upper_limit" else lower
        params = {"index": index, "bound": bound, "dim": arm.dof}
        task_map = DistanceMap1D(kind.replace("joint_", ""), params).task_map()
    elif kind == "end_effector":
        task_map = end_effector_map(_need_arm(arm, kind))
    elif kind == "ee_attractor":
        task_map = ee_map(_need_arm(arm, kind), attractor_map(block["target"]))
    elif kind == "ee_floor_height":
        params = {
            "floor": block.get("floor", 0.0),
            "normal": block.get("normal", [0.0, 1.0]),
        }
        floor = DistanceMap1D("floor_height", params).task_map()
        task_map = ee_map(_need_arm(arm, kind), floor)
    else:
        raise ConfigError(f"unknown map kind '{kind}'")
    if task_map.domain_dim != root_dim:
        raise DimensionMismatchError(
            f"Map '{kind}' starts in dimension {task_map.domain_dim}, "
            f"root is {root_dim}"
        )
    return task_map


def expand_tree(tree: Sequence[Dict[str, Any]], rng: np.random.Generator):
    """
    Expands ``field`` items into plain components.

    A vortex field contributes one vortex leaf per center with a random sign and a
    strength f ~ U(f_min, f_max), drawn in center order.

    :return: Tuple (components, draws) where draws lists the sampled vortices.
    """
    components: List[Dict[str, Any]] = []
    draws: List[Dict[str, Any]] = []
    for item in tree:
        if "field" not in item:
            components.append(item)
            continue
        block = item["field"]
        for index, center in enumerate(block["centers"]):
            low, high = block.get("f_min", 2.0), block.get("f_max", 10.0)
            strength = float(rng.uniform(low, high))
            sign = float(rng.choice([-1.0, 1.0]))
            draws.append({"center": list(center), "f": strength, "sign": sign})
            components.append(
                {
                    "name": f"{item.get('name', 'field')}_{index}",
                    "map": {"kind": "identity"},
                    "geometry": {"kind": "vortex", "f": strength, "sign": sign},
                    "energy": {
                        "kind": "vortex_zone",
                        "mass": block.get("mass", 0.5),
                        "center": list(center),
                        "radius": block.get("radius", 1.0),
                    },
                }
            )
    return components, draws


def build_leaves(
    components: Sequence[Dict[str, Any]],
    root_dim: int,
    arm: Optional[PlanarArm],
    goal: Optional[np.ndarray] = None,
) -> List[Leaf]:
    """Resolves plain components into leaves."""
    leaves = []
    for index, item in enumerate(components):
        item = substitute_goal(item, goal)
        geometry = {k: v for k, v in item["geometry"].items() if k != "kind"}
        energy = {k: v for k, v in item["energy"].items() if k != "kind"}
        try:
            pair = weighted(
                item["geometry"]["kind"], geometry, item["energy"]["kind"], energy
            )
            leaves.append(
                Leaf(
                    item.get("name", f"leaf_{index}"),
                    build_map(item["map"], root_dim, arm),
                    pair,
                )
            )
        except (ConfigError, DimensionMismatchError):
            raise
        except (ParameterError, KeyError, TypeError, ValueError) as e:
            raise ConfigError(_reason(e), f"tree[{index}]") from e
    return leaves


def build_potential(
    block: Optional[Dict[str, Any]],
    root_dim: int,
    arm: Optional[PlanarArm],
    goal: Optional[np.ndarray] = None,
) -> Optional[ForcingPotential]:
    """ForcingPotential from the ``forcing`` section, or None."""
    if block is None:
        return None
    block = substitute_goal(block, goal)
    params = {k: v for k, v in block.items() if k != "map"}
    try:
        return ForcingPotential(build_map(block["map"], root_dim, arm), **params)
    except (ConfigError, DimensionMismatchError):
        raise
    except (ParameterError, KeyError, TypeError, ValueError) as e:
        raise ConfigError(_reason(e), "forcing") from e


def build_controller(block: Optional[Dict[str, Any]], root_dim: int) -> SpeedController:
    """SpeedController with a Euclidean execution energy on the root."""
    block = dict(block or {})
    try:
        return SpeedController(
            execution_energy=make_builtin_energy(
                "euclidean", {"lam": 1.0, "dim": root_dim}
            ),
            **block,
        )
    except (ParameterError, TypeError, ValueError) as e:
        raise ConfigError(_reason(e), "speed_control") from e


class FabricSystem:
    """
    Root system of one experiment (or one arm segment).

    :param config: Validated experiment config.
    :param goal: Segment goal substituted for ``goal`` placeholders.
    :param components: Already expanded tree components; expanded from
        ``config.tree`` with the config seed when omitted.
    :param leaf_index: Keep only this component (single-generator rollouts).
    :param order: ``root`` (pull back then energize) or ``leaf`` (energize then
        pull back) for the commutation variant.
    """

    def __init__(
        self,
        config,
        goal: Optional[np.ndarray] = None,
        components: Optional[Sequence[Dict[str, Any]]] = None,
        leaf_index: Optional[int] = None,
        order: str = "root",
    ) -> None:
        if order not in ORDERS:
            raise ParameterError(f"Unknown commutation order '{order}'")
        self.config = config
        self.variant = config.variant
        self.root_dim = config.root_dim
        self.order = order
        self.arm = make_arm(config.arm)
        if self.arm is not None and self.arm.dof != self.root_dim:
            raise ConfigError(
                "Arm joint count differs from root_dim", "experiment.root_dim"
            )
        self.goal = None if goal is None else np.asarray(goal, dtype=float)
        if components is None:
            components, _ = expand_tree(
                config.tree, np.random.default_rng(config.seed)
            )
        if leaf_index is not None:
            components = [components[leaf_index]]
        self.leaves = build_leaves(components, self.root_dim, self.arm, self.goal)
        self.potential = (
            build_potential(config.forcing, self.root_dim, self.arm, self.goal)
            if self.variant == "forced"
            else None
        )
        fabric_leaves = [(leaf.task_map, leaf.geometry) for leaf in self.leaves]
        if self.potential is not None and self.potential.register_priority_energy:
            fabric_leaves.append(
                (self.potential.task_map, self.potential.priority_geometry())
            )
        self.fabric = WeightedFabric(fabric_leaves, self.root_dim, Config.COND_CAP)
        self.controller = (
            build_controller(config.speed_control, self.root_dim)
            if self.variant == "forced"
            else None
        )
        logging.debug(
            f"Assembled {self.variant} system '{config.name}' "
            f"with {len(fabric_leaves)} leaves"
        )

    @property
    def energy(self):
        """System energy: the sum of the pulled-back priorities."""
        return self.fabric.energy

    @property
    def batched(self) -> bool:
        """
        True when the whole system can be evaluated on a batch of states at once.

        The commutation variant and any leaf, potential or execution energy without
        a batched form keep the system on single-state evaluation.
        """
        if self.variant == "commutation" or not self.fabric.batched:
            return False
        if not self.energy.is_finsler:
            return False
        if self.potential is not None and not self.potential.task_map.batched:
            return False
        ctl = self.controller
        if ctl is not None and not (
            ctl.use_system_energy or ctl.execution_energy.batched
        ):
            return False
        return True

    def convergence_monitor(self) -> Optional[ConvergenceMonitor]:
        """Monitor on the forcing task map, or None for unforced systems."""
        if self.potential is None:
            return None
        return ConvergenceMonitor(self.potential.task_map)

    def _forced(self, q, qd, terms=None):
        metric, f_geometry, f_energy = terms or self.fabric.terms(q, qd)
        state = {"q": q, "qd": qd}
        h2 = solve_metric(metric, f_geometry, self.fabric.cond_cap, state)
        x = np.asarray(self.potential.task_map.map(q), dtype=float)
        return regulate_speed(
            h2,
            (metric, f_energy),
            self.fabric.energy,
            potential_force(self.potential, q),
            self.controller,
            q,
            qd,
            float(np.linalg.norm(x)),
            self.fabric.cond_cap,
        )

    def _energized(self, q, qd, terms=None):
        metric, f_geometry, f_energy = terms or self.fabric.terms(q, qd)
        state = {"q": q, "qd": qd}
        h2 = solve_metric(metric, f_geometry, self.fabric.cond_cap, state)
        alpha = energization_alpha(metric, f_energy, h2, qd)
        return -h2 - alpha * qd, alpha_from_terms(metric, f_energy, -h2, qd)

    def _commutation(self, q, qd):
        leaf = self.leaves[0]
        if self.order == "root":
            method = pullback_then_energize
        else:
            method = energize_then_pullback
        return method(
            leaf.geometry.priority, leaf.geometry.generator.h2, leaf.task_map, q, qd
        )

    def acceleration(
        self, q: np.ndarray, qd: np.ndarray, t: float = 0.0
    ) -> np.ndarray:
        """
        Root acceleration of the configured variant.

        :raises EvaluationError: When a barrier is crossed or a solve fails.
        """
        q = np.asarray(q, dtype=float)
        qd = np.asarray(qd, dtype=float)
        if self.variant == "forced":
            return self._forced(q, qd)[0]
        if self.variant == "fabric":
            return self._energized(q, qd)[0]
        if self.variant == "commutation":
            return self._commutation(q, qd)
        return -self.fabric.h2(q, qd)

    def observe(self, q: np.ndarray, qd: np.ndarray) -> Dict[str, float]:
        """
        Energies and speed-control diagnostics at one state.

        ``asymmetry`` is the largest element of |M - M^T| of the root metric; the
        solves use its symmetric part. Diagnostics that do not apply to the
        variant are 0.0.
        """
        q = np.asarray(q, dtype=float)
        qd = np.asarray(qd, dtype=float)
        terms = self.fabric.terms(q, qd)
        row = {name: 0.0 for name in OBSERVED}
        row["H_e"] = float(self.fabric.energy.hamiltonian(q, qd))
        row["asymmetry"] = metric_asymmetry(terms[0])
        if self.variant == "forced":
            _, diag = self._forced(q, qd, terms)
            row.update(_diagnostics(diag))
            row["psi"] = potential_value(
                self.potential, self.potential.task_map.map(q)
            )
        elif self.variant == "fabric":
            row["alpha_Le"] = self._energized(q, qd, terms)[1]
        return row


def _diagnostics(diag: StepDiagnostics) -> Dict[str, float]:
    return {
        "L_ex": diag.l_ex,
        "alpha_ex0": diag.alpha_ex0,
        "alpha_ex_psi": diag.alpha_ex_psi,
        "alpha_ex": diag.alpha_ex,
        "alpha_Le": diag.alpha_le,
        "eta": diag.eta,
        "beta": diag.beta,
    }
