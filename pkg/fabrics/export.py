"""
Run directories: trajectory CSVs and the run manifest.

A run directory holds one ``<label>.csv`` per rollout and a ``manifest.json``
written once after all rollouts finished.
"""

import json
import logging
import os
from typing import Any, Dict

import numpy as np
import pandas as pd

from .config_schema import ExperimentConfig
from .sim import ExperimentRun, RolloutRecord

MANIFEST = "manifest.json"
FLOAT_FORMAT = "%.17g"


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def write_trajectory(record: RolloutRecord, path: str) -> None:
    """Writes one rollout as a UTF-8, LF-terminated CSV with 17 significant digits."""
    record.to_frame().to_csv(
        path,
        index=False,
        float_format=FLOAT_FORMAT,
        lineterminator="\n",
        encoding="utf-8",
    )


def read_trajectory(path: str) -> pd.DataFrame:
    """
    Reads a trajectory CSV back.

    :raises FileNotFoundError: If the file does not exist.
    """
    frame = pd.read_csv(path, dtype={"event": str}, float_precision="round_trip")
    frame["event"] = frame["event"].fillna("")
    return frame


def write_run(run: ExperimentRun, out_dir: str, summary: Dict[str, Any]) -> str:
    """
    Writes every rollout CSV, then the manifest.

    :return: Path of the manifest.
    """
    os.makedirs(out_dir, exist_ok=True)
    rollouts = []
    for record in run.records:
        filename = f"{record.label}.csv"
        write_trajectory(record, os.path.join(out_dir, filename))
        entry = {
            "label": record.label,
            "csv": filename,
            "event": record.event,
            "final_time": float(record.times[-1]),
            "meta": record.meta,
        }
        if record.event_state is not None:
            entry["event_state"] = record.event_state
        rollouts.append(entry)
    manifest = {
        "experiment": run.config.name,
        "config": run.config.to_document(),
        "seed": run.config.seed,
        "rollouts": rollouts,
        "summary": summary,
        "random_draws": run.draws,
    }
    path = os.path.join(out_dir, MANIFEST)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, default=_json_default)
    logging.info(f"Wrote {len(rollouts)} trajectories and the manifest to {out_dir}")
    return path


def load_manifest(run_dir: str) -> Dict[str, Any]:
    """
    Reads the manifest of a run directory.

    :raises FileNotFoundError: If the directory has no manifest.
    """
    path = os.path.join(run_dir, MANIFEST)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"No {MANIFEST} in {run_dir}")
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def load_trajectories(
    run_dir: str, manifest: Dict[str, Any]
) -> Dict[str, pd.DataFrame]:
    """Trajectory tables of every rollout listed in a manifest, keyed by label."""
    return {
        entry["label"]: read_trajectory(os.path.join(run_dir, entry["csv"]))
        for entry in manifest["rollouts"]
    }


def manifest_config(manifest: Dict[str, Any]) -> ExperimentConfig:
    """The config snapshot stored in a manifest."""
    return ExperimentConfig.from_document(manifest["config"])
