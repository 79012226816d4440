"""This module summarizes experiment runs into per-rollout tables and manifest
metrics."""

import logging
from typing import Any, Dict

import numpy as np
import pandas as pd

from .energization import commutation_check
from .exceptions import EvaluationError
from .kinematics import arm_fk
from .sim import (
    ExperimentRun,
    RolloutRecord,
    arc_length,
    frechet_distance,
    truncate_to_arc_length,
)
from .system import FabricSystem, build_map, make_arm, substitute_goal

LIFT_WINDOW = (0.25, 0.75)
DRIFT_FLOOR = 1e-12


def energy_drift(record: RolloutRecord) -> float:
    """max_t |H_e(t) - H_e(0)| / max(|H_e(0)|, 1e-12)."""
    energy = record.observations["H_e"]
    if energy.size == 0 or not np.isfinite(energy[0]):
        return float("nan")
    scale = max(abs(energy[0]), DRIFT_FLOOR)
    return float(np.max(np.abs(energy - energy[0])) / scale)


def lift_height(
    heights: np.ndarray, progress: np.ndarray, window=LIFT_WINDOW
) -> float:
    """Largest height while the horizontal progress is inside ``window``."""
    inside = (progress >= window[0]) & (progress <= window[1])
    if not np.any(inside):
        return float("nan")
    return float(np.max(heights[inside]))


class RunAnalyzer:
    """Analyzes the records of one experiment run."""

    def __init__(self, run: ExperimentRun) -> None:
        """Initializes the analyzer with a run and its config."""
        self.run = run
        self.config = run.config
        self.arm = make_arm(self.config.arm)

    def _obstacle_maps(self):
        maps = []
        for item in self.config.tree:
            if item.get("map", {}).get("kind") == "circle_obstacle":
                maps.append(build_map(item["map"], self.config.root_dim, self.arm))
        return maps

    def _forcing_map(self, record: RolloutRecord):
        if self.config.forcing is None:
            return None
        goal = record.meta.get("goal")
        goal = None if goal is None else np.asarray(goal)
        block = substitute_goal(self.config.forcing["map"], goal)
        return build_map(block, self.config.root_dim, self.arm)

    def rollout_table(self) -> pd.DataFrame:
        """One row per rollout with its terminal event and trajectory metrics."""
        obstacles = self._obstacle_maps()
        rows = []
        for record in self.run.records:
            row: Dict[str, Any] = {
                "label": record.label,
                "event": record.event,
                "final_time": float(record.times[-1]),
                "steps": int(record.times.size - 1),
                "energy_drift": energy_drift(record),
                "max_abs_coordinate": float(np.max(np.abs(record.positions))),
                "final_speed": float(np.linalg.norm(record.velocities[-1])),
                "max_speed": float(np.max(np.linalg.norm(record.velocities, axis=1))),
                "metric_asymmetry": record.max_metric_asymmetry,
            }
            if obstacles:
                row["min_obstacle_distance"] = float(
                    min(
                        np.min([task_map.map(q)[0] for q in record.positions])
                        for task_map in obstacles
                    )
                )
            forcing_map = self._forcing_map(record)
            if forcing_map is not None:
                final = forcing_map.map(record.positions[-1])
                row["final_goal_distance"] = float(np.linalg.norm(final))
            rows.append(row)
        return pd.DataFrame(rows)

    def frechet_table(self) -> pd.DataFrame:
        """Frechet distance of every generator and start between its two speeds."""
        rows = []
        records = pd.DataFrame(
            [
                {
                    "generator": r.meta["generator"],
                    "start": r.meta["start"],
                    "speed": r.meta["speed"],
                    "record": r,
                }
                for r in self.run.records
            ]
        )
        groups = records.groupby(["generator", "start"], sort=True)
        for (generator, start), group in groups:
            ordered = group.sort_values("speed")["record"]
            paths = [record.positions for record in ordered]
            common = min(arc_length(path) for path in paths)
            truncated = [truncate_to_arc_length(path, common) for path in paths]
            rows.append(
                {
                    "generator": generator,
                    "start": int(start),
                    "arc_length": common,
                    "frechet": frechet_distance(truncated[0], truncated[-1]),
                }
            )
        return pd.DataFrame(rows)

    def commutation_metrics(self) -> Dict[str, float]:
        """Order agreement of the polar leaf, per state and along rollouts."""
        leaf = FabricSystem(self.config).leaves[0]
        by_pair: Dict[int, Dict[str, RolloutRecord]] = {}
        for record in self.run.records:
            by_pair.setdefault(record.meta["pair"], {})[record.meta["order"]] = record
        deviation, disagreement = 0.0, 0.0
        for pair in by_pair.values():
            root, leaf_record = pair["root"], pair["leaf"]
            states = zip(root.positions, root.velocities)
            try:
                deviation = max(
                    deviation,
                    commutation_check(
                        leaf.geometry.priority,
                        leaf.geometry.generator.h2,
                        leaf.task_map,
                        states,
                    ),
                )
            except EvaluationError as e:
                logging.warning(f"Commutation check stopped: {e}")
                deviation = float("inf")
            steps = min(len(root.positions), len(leaf_record.positions))
            gap = np.abs(root.positions[:steps] - leaf_record.positions[:steps])
            disagreement = max(disagreement, float(np.max(gap)))
        return {
            "max_commutation_deviation": deviation,
            "max_rollout_disagreement": disagreement,
        }

    def arm_table(self) -> pd.DataFrame:
        """Per-segment goal error, rest deviation from q0 and lift height."""
        q0 = np.asarray(self.arm.q0)
        rows = []
        for record in self.run.records:
            goal = np.asarray(record.meta["goal"])
            ee = np.array([arm_fk(self.arm, q)[0] for q in record.positions])
            start = ee[0]
            span = goal[0] - start[0]
            if abs(span) > 0.0:
                progress = (ee[:, 0] - start[0]) / span
            else:
                progress = np.zeros(len(ee))
            rows.append(
                {
                    "segment": record.meta["segment"],
                    "goal_error": float(np.linalg.norm(ee[-1] - goal)),
                    "rest_deviation": float(np.linalg.norm(record.positions[-1] - q0)),
                    "lift_height": lift_height(ee[:, 1] - goal[1], progress),
                    "event": record.event,
                }
            )
        return pd.DataFrame(rows)


def summarize(run: ExperimentRun) -> Dict[str, Any]:
    """
    Experiment-level metrics for the manifest.

    :return: Dict with event counts, energy drift, metric asymmetry, constraint
        margins and the experiment-specific metrics (Frechet distances,
        commutation, arm segments).
    """
    analyzer = RunAnalyzer(run)
    table = analyzer.rollout_table()
    events = table["event"].value_counts().to_dict()
    summary: Dict[str, Any] = {
        "rollouts": int(len(table)),
        "events": {str(key): int(value) for key, value in events.items()},
        "barrier_violations": int(run.violations),
        "max_energy_drift": float(table["energy_drift"].max()),
        "max_abs_coordinate": float(table["max_abs_coordinate"].max()),
        "speed_band": [
            float(table["final_speed"].min()),
            float(table["max_speed"].max()),
        ],
        "max_metric_asymmetry": float(table["metric_asymmetry"].max()),
    }
    if "min_obstacle_distance" in table:
        margin = table["min_obstacle_distance"].min()
        summary["min_obstacle_distance"] = float(margin)
    if "final_goal_distance" in table:
        distance = table["final_goal_distance"].max()
        summary["max_final_goal_distance"] = float(distance)
        converged = table[table["event"] == "converged"]
        summary["max_convergence_time"] = (
            float(converged["final_time"].max()) if not converged.empty else None
        )

    kind = run.config.initial_conditions["kind"]
    if kind == "line_starts":
        frechet = analyzer.frechet_table()
        summary["max_frechet_distance"] = float(frechet["frechet"].max())
        worst = frechet.groupby("generator")["frechet"].max()
        summary["frechet_by_generator"] = {
            str(key): float(value) for key, value in worst.items()
        }
    elif kind == "polar_fan":
        summary.update(analyzer.commutation_metrics())
    elif analyzer.arm is not None:
        arm = analyzer.arm_table()
        summary["goal_errors"] = [float(v) for v in arm["goal_error"]]
        summary["mean_rest_deviation"] = float(arm["rest_deviation"].mean())
        summary["lift_heights"] = [float(v) for v in arm["lift_height"]]
    logging.info(f"Summary of '{run.config.name}': {summary['events']}")
    return summary

