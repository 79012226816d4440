"""
Static SVG figures of finished runs.

Styles: ``paths`` (root paths with obstacle and limit overlays), ``arm_frames``
(one panel of fading arm poses per goal segment) and ``energy_trace`` (energies and
speed-control diagnostics against time, with a JSON stats block).
"""

import json
import logging
import os
from typing import Any, Dict, List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Circle, Rectangle  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .exceptions import ParameterError  # noqa: E402
from .export import load_manifest, load_trajectories  # noqa: E402
from .kinematics import PlanarArm  # noqa: E402
from .system import make_arm  # noqa: E402

STYLES = ("paths", "arm_frames", "energy_trace")
POSE_COUNT = 12
MIN_ALPHA = 0.1


def _positions(frame: pd.DataFrame, prefix: str = "q") -> np.ndarray:
    columns = sorted(
        (
            c
            for c in frame.columns
            if c.startswith(prefix) and c[len(prefix) :].isdigit()
        ),
        key=lambda c: int(c[len(prefix) :]),
    )
    return frame[columns].to_numpy()


def _overlays(ax, config: Dict[str, Any]) -> None:
    bounds: Dict[int, List[float]] = {}
    for item in config["tree"]:
        block = item.get("map", {})
        if block.get("kind") == "circle_obstacle":
            ax.add_patch(
                Circle(
                    block.get("center", [0.0, 0.0]),
                    block.get("radius", 1.0),
                    color="0.6",
                    alpha=0.6,
                )
            )
        elif block.get("kind") in ("upper_limit", "lower_limit"):
            bounds.setdefault(block["index"], []).append(block["bound"])
        elif "field" in item:
            for center in item["field"]["centers"]:
                ax.add_patch(
                    Circle(
                        center,
                        item["field"].get("radius", 1.0),
                        fill=False,
                        linestyle=":",
                        color="0.5",
                    )
                )
    if len(bounds) == 2 and all(len(b) == 2 for b in bounds.values()):
        (x_lo, x_hi), (y_lo, y_hi) = sorted(bounds[0]), sorted(bounds[1])
        ax.add_patch(
            Rectangle((x_lo, y_lo), x_hi - x_lo, y_hi - y_lo, fill=False, color="k")
        )
    forcing = config.get("forcing")
    if forcing and forcing["map"].get("kind") == "attractor":
        target = forcing["map"]["target"]
        ax.plot(target[0], target[1], marker="*", markersize=12, color="tab:red")


def plot_paths(
    manifest: Dict[str, Any], trajectories: Dict[str, pd.DataFrame], path: str
) -> None:
    """Root paths of every rollout over the configured obstacles and limits."""
    fig, ax = plt.subplots(figsize=(6, 6))
    _overlays(ax, manifest["config"])
    for label, frame in trajectories.items():
        positions = _positions(frame)
        ax.plot(positions[:, 0], positions[:, 1], linewidth=1.0, label=label)
        ax.plot(positions[0, 0], positions[0, 1], "o", color="k", markersize=3)
    ax.set_aspect("equal")
    ax.set_xlabel("q1")
    ax.set_ylabel("q2")
    ax.set_title(manifest["experiment"])
    fig.savefig(path, format="svg")
    plt.close(fig)


def _draw_arm(ax, arm: PlanarArm, q: np.ndarray, alpha: float) -> None:
    joints = arm.joint_positions(q)
    ax.plot(
        joints[:, 0], joints[:, 1], "-o", color="tab:blue", alpha=alpha, markersize=3
    )


def plot_arm_frames(
    manifest: Dict[str, Any], trajectories: Dict[str, pd.DataFrame], path: str
) -> None:
    """One panel per segment; poses darken from the start to the end of a segment."""
    arm = make_arm(manifest["config"]["experiment"].get("arm"))
    if arm is None:
        raise ParameterError("arm_frames needs an arm experiment")
    count = len(trajectories)
    fig, axes = plt.subplots(1, count, figsize=(3 * count, 3.5), squeeze=False)
    reach = float(sum(arm.link_lengths))
    for ax, entry in zip(axes[0], manifest["rollouts"]):
        positions = _positions(trajectories[entry["label"]])
        picks = np.linspace(
            0, len(positions) - 1, min(POSE_COUNT, len(positions))
        ).astype(int)
        fades = np.linspace(MIN_ALPHA, 1.0, len(picks))
        for index, alpha in zip(picks, fades):
            _draw_arm(ax, arm, positions[index], alpha)
        goal = entry["meta"].get("goal")
        if goal is not None:
            ax.plot(goal[0], goal[1], marker="*", markersize=10, color="tab:red")
        ax.axhline(0.0, color="0.3", linewidth=0.8)
        ax.set_xlim(-reach, reach)
        ax.set_ylim(-reach, reach)
        ax.set_aspect("equal")
        ax.set_title(f"segment {entry['meta'].get('segment', '')}")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def energy_stats(trajectories: Dict[str, pd.DataFrame]) -> Dict[str, Any]:
    """Per-rollout relative H_e drift and its maximum."""
    drifts = {}
    for label, frame in trajectories.items():
        energy = frame["H_e"].to_numpy()
        scale = max(abs(energy[0]), 1e-12)
        drifts[label] = float(np.max(np.abs(energy - energy[0])) / scale)
    return {"drift": drifts, "max_drift": max(drifts.values()) if drifts else 0.0}


def plot_energy_trace(
    manifest: Dict[str, Any], trajectories: Dict[str, pd.DataFrame], path: str
) -> Dict[str, Any]:
    """System energy and diagnostics against time; writes stats JSON beside the SVG."""
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for label, frame in trajectories.items():
        top.plot(frame["t"], frame["H_e"], linewidth=1.0, label=label)
        style = {"linewidth": 0.8, "alpha": 0.5}
        bottom.plot(frame["t"], frame["beta"], color="tab:red", **style)
        bottom.plot(frame["t"], frame["alpha_ex"], color="tab:green", **style)
    top.set_ylabel("H_e")
    bottom.set_ylabel("beta (red), alpha_ex (green)")
    bottom.set_xlabel("t [s]")
    top.set_title(manifest["experiment"])
    fig.savefig(path, format="svg")
    plt.close(fig)

    stats = energy_stats(trajectories)
    with open(os.path.splitext(path)[0] + ".json", "w", encoding="utf-8") as handle:
        json.dump(stats, handle, indent=2)
    return stats


def plot_run(run_dir: str, style: str) -> str:
    """
    Renders one style for a run directory.

    :return: Path of the SVG file.
    :raises FileNotFoundError: If the run has no manifest.
    :raises ParameterError: For unknown styles.
    """
    if style not in STYLES:
        raise ParameterError(f"Unknown plot style '{style}'")
    manifest = load_manifest(run_dir)
    trajectories = load_trajectories(run_dir, manifest)
    path = os.path.join(run_dir, f"{style}.svg")
    if style == "paths":
        plot_paths(manifest, trajectories, path)
    elif style == "arm_frames":
        plot_arm_frames(manifest, trajectories, path)
    else:
        plot_energy_trace(manifest, trajectories, path)
    logging.info(f"Wrote {path}")
    return path
