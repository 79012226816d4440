"""
Experiment registry and rollout planning.

The registry builds every shipped experiment document in code. Layered point-mass
experiments are built by extension: each layer appends components to the previous
layer's list and never edits it. ``configs/*.yml`` mirror these documents.
"""

import copy
from dataclasses import dataclass, field
import logging
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from .config_schema import ExperimentConfig
from .exceptions import ConfigError
from .kinematics import PlanarArm, arm_fk, sample_floor_goals, sample_reaching_goals

LAYERS = "ABCDE"
POINT_TARGET = [-2.5, -3.75]
ARM_Q0 = [float(np.pi / 2), float(-np.pi / 4), float(-np.pi / 4)]
ARM_LIMITS = [[float(-np.pi), float(np.pi)]] * 3

LIMIT_GEOMETRY = {
    "kind": "limit",
    "lam": 0.25,
    "a1": 0.4,
    "a2": 0.2,
    "a3": 20.0,
    "a4": 5.0,
}
LIMIT_ENERGY = {"kind": "barrier_scaled", "lam": 0.25}
# Without forcing the fabric alone must keep particles off the boundaries.
FABRIC_LIMIT_ENERGY = dict(LIMIT_ENERGY, power=4.0)
ATTRACTOR_GEOMETRY = {
    "kind": "attractor",
    "lam": 7.0,
    "k": 1.0,
    "alpha_psi": 1.0,
    "dim": 2,
}
ATTRACTOR_ENERGY = {
    "kind": "radial_switch",
    "m_upper": 1.0,
    "m_lower": 0.0,
    "alpha_s": 25.0,
    "radius": 5.0,
    "dim": 2,
}

POINT_SPEED_CONTROL = {
    "v_d": 2.0,
    "alpha_eta": 10.0,
    "alpha_shift": 0.0,
    "damping": 6.5,
    "damping_min": 0.01,
    "alpha_beta": 0.5,
    "r_beta": 1.5,
    "eta_fixed": None,
    "use_system_energy": False,
}


def _forcing(map_block: Dict[str, Any]) -> Dict[str, Any]:
    return {
        "map": map_block,
        "k": 5.0,
        "alpha_psi": 10.0,
        "m_upper": 2.0,
        "m_lower": 0.3,
        "alpha_m": 0.75,
        "register_priority_energy": True,
    }


def layer_components(forced: bool = True) -> List[List[Dict[str, Any]]]:
    """
    Components added by each layer A..E, in order.

    :param forced: False selects the steeper barrier energies of the bare fabric.
    """
    limit_energy = LIMIT_ENERGY if forced else FABRIC_LIMIT_ENERGY
    baseline = {
        "name": "baseline",
        "map": {"kind": "identity"},
        "geometry": {"kind": "zero_baseline", "dim": 2},
        "energy": {"kind": "euclidean", "lam": 1.0, "dim": 2},
    }
    limits = []
    for index in range(2):
        for side, bound in (("upper", 4.0), ("lower", -4.0)):
            limits.append(
                {
                    "name": f"{side}_limit_{index}",
                    "map": {
                        "kind": f"{side}_limit",
                        "index": index,
                        "bound": bound,
                    },
                    "geometry": dict(LIMIT_GEOMETRY),
                    "energy": dict(limit_energy),
                }
            )
    obstacle = {
        "name": "obstacle",
        "map": {"kind": "circle_obstacle", "center": [0.0, 0.0], "radius": 1.0},
        "geometry": dict(LIMIT_GEOMETRY),
        "energy": dict(limit_energy),
    }
    vortices = {
        "name": "vortices",
        "field": {
            "kind": "vortex_field",
            "centers": [[x, y] for y in (-2.0, 2.0) for x in (-3.0, -1.0, 1.0, 3.0)],
            "radius": 1.0,
            "mass": 0.5,
            "f_min": 2.0,
            "f_max": 10.0,
        },
    }
    attractor = {
        "name": "attractor",
        "map": {"kind": "attractor", "target": list(POINT_TARGET)},
        "geometry": dict(ATTRACTOR_GEOMETRY),
        "energy": dict(ATTRACTOR_ENERGY),
    }
    return [[baseline], limits, [obstacle], [vortices], [attractor]]


def layered_document(layer: str, forced: bool = True) -> Dict[str, Any]:
    """Point-mass document of one layer, forced or as the bare fabric."""
    if layer not in LAYERS:
        raise ConfigError(f"unknown layer '{layer}'")
    tree: List[Dict[str, Any]] = []
    for added in layer_components(forced)[: LAYERS.index(layer) + 1]:
        tree = tree + added
    return {
        "experiment": {
            "name": f"layered_{layer}" + ("" if forced else "_fabric"),
            "variant": "forced" if forced else "fabric",
            "root_dim": 2,
            "seed": 0,
        },
        "tree": tree,
        "forcing": (
            _forcing({"kind": "attractor", "target": list(POINT_TARGET)})
            if forced
            else None
        ),
        "speed_control": dict(POINT_SPEED_CONTROL) if forced else None,
        "integration": {
            "dt": 0.01,
            "horizon": 16.0,
            "initial_conditions": {
                "kind": "radial_fan",
                "center": [2.0, 3.0],
                "speed": 1.5,
                "count": 14,
            },
        },
        "output": {"plot_style": "paths"},
    }


def path_consistency_document() -> Dict[str, Any]:
    """Three obstacle generators, each run at two speeds from the same starts."""
    circle = {"center": [0.0, 0.0], "radius": 1.0}
    generators = [
        {"kind": "barrier_gradient", "lam": 0.7, "k": 0.5, **circle},
        {"kind": "chomp_derived", "k": 0.5, **circle},
        {"kind": "finsler_scaled", "lam": 0.7, "k": 0.5, **circle},
    ]
    return {
        "experiment": {
            "name": "path_consistency",
            "variant": "geometry",
            "root_dim": 2,
            "seed": 0,
        },
        "tree": [
            {
                "name": generator["kind"],
                "map": {"kind": "identity"},
                "geometry": generator,
                "energy": {"kind": "euclidean", "lam": 1.0, "dim": 2},
            }
            for generator in generators
        ],
        "forcing": None,
        "speed_control": None,
        "integration": {
            "dt": 0.01,
            "horizon": 20.0,
            "arc_length": 7.0,
            "initial_conditions": {
                "kind": "line_starts",
                "starts": [[-3.0, y] for y in (-1.5, -1.0, -0.5, 0.5, 1.0, 1.5)],
                "direction": [1.0, 0.0],
                "speeds": [[1.5, 0.75], [0.75, 0.375], [1.5, 0.75]],
            },
        },
        "output": {"plot_style": "paths"},
    }


def commutation_document() -> Dict[str, Any]:
    """Cartesian root with a polar leaf, energized in both orders."""
    return {
        "experiment": {
            "name": "commutation_polar",
            "variant": "commutation",
            "root_dim": 2,
            "seed": 0,
        },
        "tree": [
            {
                "name": "expansion",
                "map": {"kind": "cartesian_to_polar"},
                "geometry": {"kind": "expansion", "dim": 2},
                "energy": {"kind": "euclidean", "lam": 1.0, "dim": 2},
            }
        ],
        "forcing": None,
        "speed_control": None,
        "integration": {
            "dt": 0.01,
            "horizon": 16.0,
            "initial_conditions": {
                "kind": "polar_fan",
                "radius": 2.0,
                "count": 8,
                "speed": 0.15,
                "heading": 1.0,
                "spread": 0.9,
            },
        },
        "output": {"plot_style": "energy_trace"},
    }


def _arm_base_components() -> List[Dict[str, Any]]:
    components = [
        {
            "name": "baseline",
            "map": {"kind": "identity"},
            "geometry": {"kind": "zero_baseline", "dim": 3},
            "energy": {"kind": "euclidean", "lam": 0.5, "dim": 3},
        }
    ]
    for index in range(3):
        for side in ("upper", "lower"):
            components.append(
                {
                    "name": f"joint_{side}_limit_{index}",
                    "map": {"kind": f"joint_{side}_limit", "index": index},
                    "geometry": dict(LIMIT_GEOMETRY),
                    "energy": dict(LIMIT_ENERGY),
                }
            )
    return components


def _redundancy_component() -> Dict[str, Any]:
    return {
        "name": "redundancy",
        "map": {"kind": "identity"},
        "geometry": {"kind": "redundancy", "q0": list(ARM_Q0), "lam": 10.0},
        "energy": {"kind": "euclidean", "lam": 2.0, "dim": 3},
    }


def _arm_document(
    name: str,
    tree: List[Dict[str, Any]],
    goals: Dict[str, Any],
    speed_control: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    return {
        "experiment": {
            "name": name,
            "variant": "forced",
            "root_dim": 3,
            "seed": 7,
            "arm": {
                "link_lengths": [1.0, 1.0, 1.0],
                "joint_limits": copy.deepcopy(ARM_LIMITS),
                "q0": list(ARM_Q0),
            },
        },
        "tree": tree,
        "forcing": _forcing({"kind": "ee_attractor", "target": "goal"}),
        "speed_control": speed_control or dict(POINT_SPEED_CONTROL, v_d=1.0),
        "integration": {"dt": 0.01, "horizon": 16.0, "initial_conditions": goals},
        "output": {"plot_style": "arm_frames"},
    }


def arm_goal_reaching_document(redundancy: bool = True) -> Dict[str, Any]:
    """Five seeded end-effector goals reached in sequence."""
    tree = _arm_base_components() + [
        {
            "name": "ee_attractor",
            "map": {"kind": "ee_attractor", "target": "goal"},
            "geometry": dict(ATTRACTOR_GEOMETRY),
            "energy": dict(ATTRACTOR_ENERGY),
        }
    ]
    if redundancy:
        tree.append(_redundancy_component())
    goals = {
        "kind": "reaching_goals",
        "count": 5,
        "radius_range": [1.2, 2.5],
        "angle_range": [float(-np.pi / 6), float(2 * np.pi / 3)],
        "min_separation": 0.8,
    }
    name = "arm_goal_reaching" if redundancy else "arm_goal_reaching_no_redundancy"
    return _arm_document(name, tree, goals)


def arm_behavior_shaping_document() -> Dict[str, Any]:
    """Floor goals reached by lifting off the floor and descending above the goal."""
    tree = _arm_base_components() + [
        _redundancy_component(),
        {
            "name": "floor_lift",
            "map": {"kind": "end_effector"},
            "geometry": {"kind": "floor_lift", "normal": [0.0, 1.0], "lam": 5.0},
            "energy": {
                "kind": "height_decay",
                "lam": 10.0,
                "sigma": 0.2,
                "floor": 0.0,
                "normal": [0.0, 1.0],
            },
        },
        {
            "name": "ee_floor",
            "map": {"kind": "ee_floor_height", "floor": 0.0, "normal": [0.0, 1.0]},
            "geometry": dict(LIMIT_GEOMETRY),
            "energy": dict(LIMIT_ENERGY),
        },
        {
            "name": "goal_attract",
            "map": {"kind": "end_effector"},
            "geometry": {"kind": "goal_attract", "goal": "goal"},
            "energy": {
                "kind": "horizontal_gaussian",
                "lam": 5.0,
                "sigma": 0.3,
                "goal": "goal",
            },
        },
    ]
    goals = {
        "kind": "floor_goals",
        "count": 5,
        "near_range": [0.8, 1.3],
        "far_range": [2.3, 2.7],
        "floor": 0.0,
        "height": 0.2,
    }
    # slower approach with damping that engages well before the goal
    speed_control = dict(POINT_SPEED_CONTROL, v_d=1.0, alpha_beta=5.0, r_beta=0.5)
    return _arm_document("arm_behavior_shaping", tree, goals, speed_control)


def _registry() -> Dict[str, Callable[[], Dict[str, Any]]]:
    entries: Dict[str, Callable[[], Dict[str, Any]]] = {
        "path_consistency": path_consistency_document,
        "commutation_polar": commutation_document,
    }
    for layer in LAYERS:
        entries[f"layered_{layer}"] = lambda layer=layer: layered_document(layer)
        entries[f"layered_{layer}_fabric"] = lambda layer=layer: layered_document(
            layer, False
        )
    entries["arm_goal_reaching"] = arm_goal_reaching_document
    entries["arm_goal_reaching_no_redundancy"] = lambda: arm_goal_reaching_document(
        False
    )
    entries["arm_behavior_shaping"] = arm_behavior_shaping_document
    return entries


REGISTRY = _registry()


def experiment_names() -> List[str]:
    """Registered experiment names."""
    return list(REGISTRY)


def registry_document(name: str) -> Dict[str, Any]:
    """
    Fresh document of a registered experiment.

    :raises ConfigError: For unknown names.
    """
    if name not in REGISTRY:
        raise ConfigError(f"unknown experiment '{name}'", "experiment.name")
    return REGISTRY[name]()


def registry_config(name: str) -> ExperimentConfig:
    """Validated config of a registered experiment."""
    return ExperimentConfig.from_document(registry_document(name))


@dataclass(frozen=True)
class RolloutPlan:
    """
    One rollout to integrate.

    :param label: Unique label, also the CSV file stem.
    :param q0: Initial root position.
    :param qd0: Initial root velocity.
    :param horizon: Horizon in seconds.
    :param leaf_index: Restrict the tree to one component.
    :param order: Commutation order.
    :param meta: Extra fields for the manifest and summaries.
    """

    label: str
    q0: np.ndarray
    qd0: np.ndarray
    horizon: float
    leaf_index: Optional[int] = None
    order: str = "root"
    meta: Dict[str, Any] = field(default_factory=dict)


def _radial_fan(config: ExperimentConfig, params) -> List[RolloutPlan]:
    center = np.asarray(params["center"], dtype=float)
    count = int(params["count"])
    plans = []
    for index in range(count):
        angle = 2.0 * np.pi * index / count
        direction = np.array([np.cos(angle), np.sin(angle)])
        plans.append(
            RolloutPlan(
                f"{config.name}_{index:02d}",
                center.copy(),
                float(params["speed"]) * direction,
                config.horizon,
                meta={"particle": index},
            )
        )
    return plans


def _line_starts(config: ExperimentConfig, params) -> List[RolloutPlan]:
    direction = np.asarray(params["direction"], dtype=float)
    direction = direction / np.linalg.norm(direction)
    speeds = params["speeds"]
    if len(speeds) != len(config.tree):
        raise ConfigError(
            "one speed pair per tree component is required",
            "integration.initial_conditions.speeds",
        )
    arc_length = config.arc_length or config.horizon
    plans = []
    for leaf_index, item in enumerate(config.tree):
        for start_index, start in enumerate(params["starts"]):
            for speed in speeds[leaf_index]:
                plans.append(
                    RolloutPlan(
                        f"{item['name']}_{start_index:02d}_v{speed:g}",
                        np.asarray(start, dtype=float),
                        float(speed) * direction,
                        min(config.horizon, arc_length / float(speed)),
                        leaf_index=leaf_index,
                        meta={
                            "generator": item["name"],
                            "start": start_index,
                            "speed": float(speed),
                        },
                    )
                )
    return plans


def _polar_fan(config: ExperimentConfig, params) -> List[RolloutPlan]:
    """
    Starts on a circle of Cartesian root positions, each paired with a velocity
    turned ``heading`` radians away from the outward radial direction.
    """
    radius = float(params["radius"])
    speed = float(params["speed"])
    heading = float(params["heading"])
    spread = float(params.get("spread", np.pi))
    angles = np.linspace(-spread, spread, int(params["count"]))
    plans = []
    for index, angle in enumerate(angles):
        q0 = radius * np.array([np.cos(angle), np.sin(angle)])
        qd0 = speed * np.array([np.cos(angle + heading), np.sin(angle + heading)])
        for order in ("root", "leaf"):
            plans.append(
                RolloutPlan(
                    f"{config.name}_{index:02d}_{order}",
                    q0.copy(),
                    qd0.copy(),
                    config.horizon,
                    order=order,
                    meta={"pair": index, "order": order},
                )
            )
    return plans


PLANNERS = {
    "radial_fan": _radial_fan,
    "line_starts": _line_starts,
    "polar_fan": _polar_fan,
}
GOAL_KINDS = ("reaching_goals", "floor_goals")


def rollout_plans(config: ExperimentConfig) -> List[RolloutPlan]:
    """
    Independent rollouts of a non-arm experiment.

    :raises ConfigError: For goal sequences, which are chained rather than planned.
    """
    kind = config.initial_conditions["kind"]
    if kind not in PLANNERS:
        raise ConfigError(
            f"initial conditions '{kind}' are not independent rollouts",
            "integration.initial_conditions.kind",
        )
    plans = PLANNERS[kind](config, config.initial_conditions)
    logging.info(f"Planned {len(plans)} rollouts for '{config.name}'")
    return plans


def sample_goals(config: ExperimentConfig, arm: PlanarArm) -> np.ndarray:
    """
    Seeded goal sequence of an arm experiment.

    Goals use a stream separate from the vortex draws so changing one does not
    move the other.
    """
    params = config.initial_conditions
    rng = np.random.default_rng([config.seed, 1])
    if params["kind"] == "reaching_goals":
        return sample_reaching_goals(
            rng,
            int(params["count"]),
            params["radius_range"],
            params["angle_range"],
            float(params.get("min_separation", 0.0)),
        )
    if params["kind"] == "floor_goals":
        return sample_floor_goals(
            rng,
            int(params["count"]),
            params["near_range"],
            params["far_range"],
            float(params.get("floor", 0.0)),
            float(params.get("height", 0.0)),
        )
    raise ConfigError(
        f"'{params['kind']}' is not a goal sequence",
        "integration.initial_conditions.kind",
    )


def arm_start(arm: PlanarArm):
    """Resting state at q0 and its end-effector position."""
    q0 = np.asarray(arm.q0, dtype=float)
    return q0, np.zeros_like(q0), arm_fk(arm, q0)[0]
