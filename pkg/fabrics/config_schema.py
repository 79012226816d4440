"""
Experiment config documents: strict YAML schema, overrides and the config object.

A config document has the sections ``experiment``, ``tree``, ``forcing``,
``speed_control``, ``integration`` and ``output``. Unknown keys anywhere, including
the per-kind parameters of maps, geometries and energies, are rejected with the
dotted key path of the offending entry.
"""

import copy
from dataclasses import dataclass, field
import logging
import re
from typing import Any, Dict, List, Optional

import yaml

from .energy import ENERGY_KINDS
from .exceptions import ConfigError
from .geometry import GEOMETRY_KINDS

VARIANTS = ("forced", "fabric", "geometry", "commutation")

MAP_PARAMS: Dict[str, tuple] = {
    "identity": (),
    "attractor": ("target",),
    "upper_limit": ("index", "bound"),
    "lower_limit": ("index", "bound"),
    "circle_obstacle": ("center", "radius"),
    "cartesian_to_polar": (),
    "joint_upper_limit": ("index",),
    "joint_lower_limit": ("index",),
    "end_effector": (),
    "ee_attractor": ("target",),
    "ee_floor_height": ("floor", "normal"),
}

FIELD_PARAMS: Dict[str, tuple] = {
    "vortex_field": ("centers", "radius", "mass", "f_min", "f_max"),
}

INITIAL_CONDITION_PARAMS: Dict[str, tuple] = {
    "radial_fan": ("center", "speed", "count"),
    "line_starts": ("starts", "direction", "speeds"),
    "polar_fan": ("radius", "count", "speed", "heading", "spread"),
    "reaching_goals": ("count", "radius_range", "angle_range", "min_separation"),
    "floor_goals": ("count", "near_range", "far_range", "floor", "height"),
}

FORCING_KEYS = (
    "map",
    "k",
    "alpha_psi",
    "m_upper",
    "m_lower",
    "alpha_m",
    "register_priority_energy",
)

SPEED_CONTROL_KEYS = (
    "v_d",
    "alpha_eta",
    "alpha_shift",
    "damping",
    "damping_min",
    "alpha_beta",
    "r_beta",
    "eta_fixed",
    "use_system_energy",
)

SECTIONS = ("experiment", "tree", "forcing", "speed_control", "integration", "output")
EXPERIMENT_KEYS = ("name", "variant", "root_dim", "seed", "arm")
ARM_KEYS = ("link_lengths", "joint_limits", "q0")
INTEGRATION_KEYS = ("dt", "horizon", "arc_length", "initial_conditions")
OUTPUT_KEYS = ("plot_style",)


def _reject_unknown(mapping: Any, allowed, path: str) -> None:
    if not isinstance(mapping, dict):
        raise ConfigError("expected a mapping", path)
    for key in mapping:
        if key not in allowed:
            key_path = f"{path}.{key}" if path else str(key)
            raise ConfigError(f"unknown key '{key}'", key_path)


def _require(mapping: Dict, keys, path: str) -> None:
    for key in keys:
        if key not in mapping:
            raise ConfigError("missing required key", f"{path}.{key}" if path else key)


def _number(value: Any, path: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path)
    if positive and not value > 0:
        raise ConfigError(f"expected a positive number, got {value}", path)
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", path)
    return value


def _kind_block(block: Any, catalogue: Dict[str, tuple], path: str) -> None:
    if not isinstance(block, dict) or "kind" not in block:
        raise ConfigError("expected a mapping with a 'kind'", path)
    kind = block["kind"]
    if kind not in catalogue:
        raise ConfigError(f"unknown kind '{kind}'", f"{path}.kind")
    allowed = catalogue[kind]
    if isinstance(allowed, tuple) and len(allowed) == 2 and callable(allowed[0]):
        allowed = allowed[1]
    _reject_unknown(block, ("kind",) + tuple(allowed), path)


def _validate_tree(tree: Any) -> None:
    if not isinstance(tree, list) or not tree:
        raise ConfigError("expected a non-empty list of components", "tree")
    for index, item in enumerate(tree):
        path = f"tree[{index}]"
        if not isinstance(item, dict):
            raise ConfigError("expected a mapping", path)
        if "field" in item:
            _reject_unknown(item, ("name", "field"), path)
            _kind_block(item["field"], FIELD_PARAMS, f"{path}.field")
            continue
        _reject_unknown(item, ("name", "map", "geometry", "energy"), path)
        _require(item, ("name", "map", "geometry", "energy"), path)
        _kind_block(item["map"], MAP_PARAMS, f"{path}.map")
        _kind_block(item["geometry"], GEOMETRY_KINDS, f"{path}.geometry")
        _kind_block(item["energy"], ENERGY_KINDS, f"{path}.energy")


def validate_document(document: Any) -> None:
    """
    Validates a config document against the strict schema.

    :raises ConfigError: With the key path of the first problem found.
    """
    _reject_unknown(document, SECTIONS, "")
    _require(document, ("experiment", "tree", "integration"), "")

    experiment = document["experiment"]
    _reject_unknown(experiment, EXPERIMENT_KEYS, "experiment")
    _require(experiment, ("name", "variant", "root_dim"), "experiment")
    if experiment["variant"] not in VARIANTS:
        raise ConfigError(
            f"unknown variant '{experiment['variant']}'", "experiment.variant"
        )
    _integer(experiment["root_dim"], "experiment.root_dim")
    if "seed" in experiment:
        _integer(experiment["seed"], "experiment.seed")
    if experiment.get("arm") is not None:
        _reject_unknown(experiment["arm"], ARM_KEYS, "experiment.arm")

    _validate_tree(document["tree"])

    forcing = document.get("forcing")
    if forcing is not None:
        _reject_unknown(forcing, FORCING_KEYS, "forcing")
        _require(forcing, ("map",), "forcing")
        _kind_block(forcing["map"], MAP_PARAMS, "forcing.map")
        for key in ("k", "alpha_psi", "m_upper", "alpha_m"):
            if key in forcing:
                _number(forcing[key], f"forcing.{key}", positive=True)

    speed = document.get("speed_control")
    if speed is not None:
        _reject_unknown(speed, SPEED_CONTROL_KEYS, "speed_control")
        for key in SPEED_CONTROL_KEYS[:7]:
            if key in speed:
                _number(speed[key], f"speed_control.{key}")

    integration = document["integration"]
    _reject_unknown(integration, INTEGRATION_KEYS, "integration")
    _require(integration, ("dt", "horizon", "initial_conditions"), "integration")
    _number(integration["dt"], "integration.dt", positive=True)
    _number(integration["horizon"], "integration.horizon", positive=True)
    if "arc_length" in integration:
        _number(integration["arc_length"], "integration.arc_length", positive=True)
    _kind_block(
        integration["initial_conditions"],
        INITIAL_CONDITION_PARAMS,
        "integration.initial_conditions",
    )

    if document.get("output") is not None:
        _reject_unknown(document["output"], OUTPUT_KEYS, "output")


_INDEX = re.compile(r"^(?P<key>[^\[\]]+)(\[(?P<index>\d+)\])?$")


def apply_overrides(document: Dict[str, Any], overrides: List[str]) -> Dict[str, Any]:
    """
    Applies ``key.path=value`` overrides to a copy of a document.

    Values are parsed with YAML scalar rules; list entries use ``key[i]``.

    :raises ConfigError: For malformed overrides or paths that do not resolve.
    """
    document = copy.deepcopy(document)
    for override in overrides or []:
        if "=" not in override:
            raise ConfigError(f"override '{override}' is not key=value")
        path, raw = override.split("=", 1)
        value = yaml.safe_load(raw)
        parts = path.strip().split(".")
        node = document
        for position, part in enumerate(parts):
            match = _INDEX.match(part)
            if not match:
                raise ConfigError("malformed override path", path)
            key, index = match.group("key"), match.group("index")
            last = position == len(parts) - 1
            if not isinstance(node, dict) or (key not in node and not last):
                raise ConfigError("override path does not exist", path)
            if index is None:
                if last:
                    node[key] = value
                else:
                    node = node[key]
                continue
            items = node.get(key)
            if not isinstance(items, list) or int(index) >= len(items):
                raise ConfigError("override index out of range", path)
            if last:
                items[int(index)] = value
            else:
                node = items[int(index)]
        logging.info(f"Config override applied: {path} = {value!r}")
    return document


@dataclass
class ExperimentConfig:
    """
    Validated experiment configuration.

    :param name: Registered experiment name.
    :param variant: One of ``forced``, ``fabric``, ``geometry``, ``commutation``.
    :param root_dim: Root dimension.
    :param tree: Tree components as plain mappings.
    :param forcing: Forcing section or None.
    :param speed_control: Speed-control section or None.
    :param dt: Integration step in seconds.
    :param horizon: Horizon in seconds (per segment for arm experiments).
    :param initial_conditions: Initial-condition generator mapping.
    :param seed: Seed of every random draw.
    :param arm: Optional planar arm description.
    :param arc_length: Optional path length budget (path-consistency runs).
    :param output: Output options.
    """

    name: str
    variant: str
    root_dim: int
    tree: List[Dict[str, Any]]
    forcing: Optional[Dict[str, Any]]
    speed_control: Optional[Dict[str, Any]]
    dt: float
    horizon: float
    initial_conditions: Dict[str, Any]
    seed: int = 0
    arm: Optional[Dict[str, Any]] = None
    arc_length: Optional[float] = None
    output: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_document(cls, document: Dict[str, Any]) -> "ExperimentConfig":
        """Validates a document and builds the config."""
        validate_document(document)
        document = copy.deepcopy(document)
        experiment = document["experiment"]
        integration = document["integration"]
        return cls(
            name=experiment["name"],
            variant=experiment["variant"],
            root_dim=experiment["root_dim"],
            seed=experiment.get("seed", 0),
            arm=experiment.get("arm"),
            tree=document["tree"],
            forcing=document.get("forcing"),
            speed_control=document.get("speed_control"),
            dt=float(integration["dt"]),
            horizon=float(integration["horizon"]),
            arc_length=integration.get("arc_length"),
            initial_conditions=integration["initial_conditions"],
            output=document.get("output") or {},
        )

    def to_document(self) -> Dict[str, Any]:
        """Serializable document; parsing it back yields an equal config."""
        experiment = {
            "name": self.name,
            "variant": self.variant,
            "root_dim": self.root_dim,
            "seed": self.seed,
        }
        if self.arm is not None:
            experiment["arm"] = copy.deepcopy(self.arm)
        integration: Dict[str, Any] = {"dt": self.dt, "horizon": self.horizon}
        if self.arc_length is not None:
            integration["arc_length"] = self.arc_length
        integration["initial_conditions"] = copy.deepcopy(self.initial_conditions)
        return {
            "experiment": experiment,
            "tree": copy.deepcopy(self.tree),
            "forcing": copy.deepcopy(self.forcing),
            "speed_control": copy.deepcopy(self.speed_control),
            "integration": integration,
            "output": copy.deepcopy(self.output),
        }


def load_document(path: str) -> Dict[str, Any]:
    """
    Reads a YAML config document.

    :raises ConfigError: If the file is missing or is not valid YAML.
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            document = yaml.safe_load(handle)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from e
    if not isinstance(document, dict):
        raise ConfigError(f"config {path} is not a mapping")
    return document


def load_config(path: str, overrides: Optional[List[str]] = None) -> ExperimentConfig:
    """Loads, overrides and validates a config file."""
    document = apply_overrides(load_document(path), overrides or [])
    return ExperimentConfig.from_document(document)


def dump_document(document: Dict[str, Any]) -> str:
    """YAML text of a document with key order preserved."""
    return yaml.safe_dump(document, sort_keys=False)
