"""
Fixed-step RK4 rollouts, path metrics and experiment execution.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from config import Config
from .batch import BatchedSystem
from .config_schema import ExperimentConfig
from .exceptions import EvaluationError, ParameterError
from .experiments import (
    GOAL_KINDS,
    RolloutPlan,
    arm_start,
    rollout_plans,
    sample_goals,
)
from .system import OBSERVED, FabricSystem, expand_tree, make_arm

EVENTS = ("converged", "max_time", "barrier_violation")
CSV_DIAGNOSTICS = ("H_e", "L_ex", "alpha_ex", "alpha_Le", "eta", "beta", "asymmetry")
FRECHET_SAMPLES = 500


@dataclass(frozen=True)
class RolloutRecord:
    """
    Write-once result of one rollout.

    :param label: Rollout label.
    :param times: Times t_k = k dt.
    :param positions: Root positions, shape (steps, n).
    :param velocities: Root velocities, shape (steps, n).
    :param observations: Per-step energies and diagnostics keyed by name.
    :param event: Terminal event, one of :data:`EVENTS`.
    :param seed: Seed of the experiment.
    :param event_state: State snapshot carried by a barrier violation.
    :param meta: Plan metadata (generator, speed, goal, ...).
    """

    label: str
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    observations: Dict[str, np.ndarray]
    event: str
    seed: int = 0
    event_state: Optional[Dict[str, Any]] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def events(self) -> List[str]:
        """Event list; a rollout ends with exactly one terminal event."""
        return [self.event]

    @property
    def dim(self) -> int:
        """Root dimension."""
        return self.positions.shape[1]

    @property
    def max_metric_asymmetry(self) -> float:
        """Largest |M - M^T| element of the root metric seen along the rollout."""
        asymmetry = self.observations.get("asymmetry")
        if asymmetry is None or asymmetry.size == 0:
            return 0.0
        return float(np.nanmax(asymmetry))

    def to_frame(self) -> pd.DataFrame:
        """
        Trajectory table with columns t, q1..qn, qd1..qdn, the diagnostics and event.

        Only the last row carries the terminal event.
        """
        n = self.dim
        columns: Dict[str, Any] = {"t": self.times}
        for i in range(n):
            columns[f"q{i + 1}"] = self.positions[:, i]
        for i in range(n):
            columns[f"qd{i + 1}"] = self.velocities[:, i]
        for name in CSV_DIAGNOSTICS:
            columns[name] = self.observations[name]
        events = [""] * len(self.times)
        events[-1] = self.event
        columns["event"] = events
        return pd.DataFrame(columns)


def _checked(accel: Callable, q, qd, t):
    value = np.asarray(accel(q, qd, t), dtype=float)
    if not np.all(np.isfinite(value)):
        raise EvaluationError("Non-finite acceleration", {"q": q, "qd": qd})
    return value


def rk4_step(accel: Callable, q: np.ndarray, qd: np.ndarray, t: float, dt: float):
    """One classical RK4 step of the first-order lift (q, qd)."""
    a1 = _checked(accel, q, qd, t)
    q2, v2 = q + 0.5 * dt * qd, qd + 0.5 * dt * a1
    a2 = _checked(accel, q2, v2, t + 0.5 * dt)
    q3, v3 = q + 0.5 * dt * v2, qd + 0.5 * dt * a2
    a3 = _checked(accel, q3, v3, t + 0.5 * dt)
    q4, v4 = q + dt * v3, qd + dt * a3
    a4 = _checked(accel, q4, v4, t + dt)
    return (
        q + dt / 6.0 * (qd + 2.0 * v2 + 2.0 * v3 + v4),
        qd + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
    )


def _observations(rows: List[Dict[str, float]]) -> Dict[str, np.ndarray]:
    return {
        name: np.array([row.get(name, 0.0) for row in rows]) for name in OBSERVED
    }


def rk4_rollout(
    accel: Callable,
    q0: np.ndarray,
    qd0: np.ndarray,
    dt: float,
    horizon: float,
    observe: Optional[Callable] = None,
    monitor=None,
    label: str = "rollout",
    seed: int = 0,
    meta: Optional[Dict[str, Any]] = None,
) -> RolloutRecord:
    """
    Integrates qdd = accel(q, qd, t) with fixed-step RK4.

    Evaluation errors end the rollout with a ``barrier_violation`` event instead of
    propagating.

    :param accel: Callable (q, qd, t) -> qdd.
    :param observe: Optional callable (q, qd) -> dict of :data:`OBSERVED` values.
    :param monitor: Optional object with ``update(t, q, qd) -> bool``; True ends the
        rollout with ``converged``.
    :raises ParameterError: If dt or horizon is not positive.
    """
    if not dt > 0.0 or not horizon > 0.0:
        raise ParameterError("dt and horizon must be positive")
    steps = int(round(horizon / dt))
    q = np.asarray(q0, dtype=float).copy()
    qd = np.asarray(qd0, dtype=float).copy()
    positions, velocities = [q.copy()], [qd.copy()]
    rows: List[Dict[str, float]] = []
    event, event_state = "max_time", None

    def record(q_k, qd_k):
        rows.append(observe(q_k, qd_k) if observe else {})

    try:
        record(q, qd)
    except EvaluationError as e:
        rows.append({name: float("nan") for name in OBSERVED})
        event, event_state, steps = "barrier_violation", e.state, 0

    taken = 0
    for k in range(steps):
        t = k * dt
        try:
            q_next, qd_next = rk4_step(accel, q, qd, t, dt)
            if not (np.all(np.isfinite(q_next)) and np.all(np.isfinite(qd_next))):
                raise EvaluationError("Non-finite state", {"q": q_next, "qd": qd_next})
            record(q_next, qd_next)
        except EvaluationError as e:
            event, event_state = "barrier_violation", e.state
            logging.warning(f"Rollout '{label}' stopped at t={t:.2f}: {e}")
            break
        q, qd = q_next, qd_next
        positions.append(q.copy())
        velocities.append(qd.copy())
        taken = k + 1
        if monitor is not None and monitor.update((k + 1) * dt, q, qd):
            event = "converged"
            break

    logging.debug(f"Rollout '{label}' ended with {event} after {taken} steps")
    return RolloutRecord(
        label=label,
        times=np.arange(taken + 1) * dt,
        positions=np.array(positions),
        velocities=np.array(velocities),
        observations=_observations(rows),
        event=event,
        seed=seed,
        event_state=event_state,
        meta=dict(meta or {}),
    )


def _row(columns: Dict[str, np.ndarray], index: int) -> Dict[str, float]:
    return {name: float(columns[name][index]) for name in OBSERVED}


class _Track:
    """Growing history of one particle of a batched rollout."""

    def __init__(self, plan: RolloutPlan, steps: int, monitor) -> None:
        self.plan = plan
        self.steps = steps
        self.monitor = monitor
        self.positions = [np.asarray(plan.q0, dtype=float).copy()]
        self.velocities = [np.asarray(plan.qd0, dtype=float).copy()]
        self.rows: List[Dict[str, float]] = []
        self.event = "max_time"
        self.event_state: Optional[Dict[str, Any]] = None

    def to_record(self, dt: float, seed: int) -> RolloutRecord:
        taken = len(self.positions) - 1
        logging.debug(
            f"Rollout '{self.plan.label}' ended with {self.event} after {taken} steps"
        )
        return RolloutRecord(
            label=self.plan.label,
            times=np.arange(taken + 1) * dt,
            positions=np.array(self.positions),
            velocities=np.array(self.velocities),
            observations=_observations(self.rows),
            event=self.event,
            seed=seed,
            event_state=self.event_state,
            meta=dict(self.plan.meta),
        )


def _evaluate_batch(batch: BatchedSystem, q, qd, observe: bool = False):
    """
    Accelerations and observations of a batch of states.

    A failing batch is evaluated again one state at a time, so only the offending
    states are reported.

    :return: Tuple (accelerations, observation columns, {row: EvaluationError}).
    """
    try:
        acc, columns = batch.evaluate(q, qd)
        if np.all(np.isfinite(acc)):
            return acc, columns, {}
    except EvaluationError:
        pass
    system = batch.system
    acc = np.full(q.shape, np.nan)
    columns = {name: np.full(q.shape[0], np.nan) for name in OBSERVED}
    errors: Dict[int, EvaluationError] = {}
    for i in range(q.shape[0]):
        try:
            acc[i] = _checked(system.acceleration, q[i], qd[i], 0.0)
            if observe:
                for name, value in system.observe(q[i], qd[i]).items():
                    columns[name][i] = value
        except EvaluationError as e:
            errors[i] = e
    return acc, columns, errors


def batched_rollouts(
    system: FabricSystem,
    plans: Sequence[RolloutPlan],
    dt: float,
    seed: int = 0,
) -> List[RolloutRecord]:
    """
    Integrates every plan of one system together with fixed-step RK4.

    Each step evaluates all running particles at once; the first stage of a step
    reuses the evaluation that produced the observation of the current state.
    Particles leave the batch when they converge, reach their own horizon or hit a
    barrier. The records equal those of :func:`rk4_rollout` up to round-off.

    :param system: A system whose :attr:`FabricSystem.batched` is True.
    :param plans: Rollouts of that system; their ``leaf_index`` and ``order`` are
        not used.
    :raises ParameterError: If dt or a horizon is not positive.
    """
    if not dt > 0.0 or not all(plan.horizon > 0.0 for plan in plans):
        raise ParameterError("dt and horizon must be positive")
    batch = BatchedSystem(system)
    tracks = [
        _Track(plan, int(round(plan.horizon / dt)), system.convergence_monitor())
        for plan in plans
    ]
    q = np.array([track.positions[0] for track in tracks])
    qd = np.array([track.velocities[0] for track in tracks])

    acc, columns, errors = _evaluate_batch(batch, q, qd, observe=True)
    running = []
    for index, track in enumerate(tracks):
        if index in errors:
            track.rows.append({name: float("nan") for name in OBSERVED})
            track.event, track.event_state = "barrier_violation", errors[index].state
        else:
            track.rows.append(_row(columns, index))
            if track.steps > 0:
                running.append(index)

    k = 0
    while running:
        live = np.array(running)
        t = k * dt
        failed: Dict[int, EvaluationError] = {}

        def stage(qs, vs):
            keep = [j for j in range(len(live)) if j not in failed]
            out = np.full(qs.shape, np.nan)
            if keep:
                values, _, stage_errors = _evaluate_batch(batch, qs[keep], vs[keep])
                out[keep] = values
                for j, error in stage_errors.items():
                    failed[keep[j]] = error
            return out

        q0, v0, a1 = q[live], qd[live], acc[live]
        q2, v2 = q0 + 0.5 * dt * v0, v0 + 0.5 * dt * a1
        a2 = stage(q2, v2)
        q3, v3 = q0 + 0.5 * dt * v2, v0 + 0.5 * dt * a2
        a3 = stage(q3, v3)
        q4, v4 = q0 + dt * v3, v0 + dt * a3
        a4 = stage(q4, v4)
        q_next = q0 + dt / 6.0 * (v0 + 2.0 * v2 + 2.0 * v3 + v4)
        qd_next = v0 + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        for j in range(len(live)):
            if j not in failed and not (
                np.all(np.isfinite(q_next[j])) and np.all(np.isfinite(qd_next[j]))
            ):
                failed[j] = EvaluationError(
                    "Non-finite state", {"q": q_next[j], "qd": qd_next[j]}
                )

        keep = [j for j in range(len(live)) if j not in failed]
        if keep:
            new_acc, columns, errors = _evaluate_batch(
                batch, q_next[keep], qd_next[keep], observe=True
            )
            for position, j in enumerate(keep):
                if position in errors:
                    failed[j] = errors[position]
                    continue
                index = live[j]
                acc[index] = new_acc[position]
        running = []
        for j, index in enumerate(live):
            track = tracks[index]
            if j in failed:
                track.event = "barrier_violation"
                track.event_state = failed[j].state
                logging.warning(
                    f"Rollout '{track.plan.label}' stopped at t={t:.2f}: {failed[j]}"
                )
                continue
            q[index], qd[index] = q_next[j], qd_next[j]
            track.positions.append(q_next[j].copy())
            track.velocities.append(qd_next[j].copy())
            track.rows.append(_row(columns, keep.index(j)))
            if track.monitor is not None and track.monitor.update(
                (k + 1) * dt, q_next[j], qd_next[j]
            ):
                track.event = "converged"
            elif k + 1 < track.steps:
                running.append(index)
        k += 1

    return [track.to_record(dt, seed) for track in tracks]


def resample_by_arc_length(
    path: np.ndarray, samples: int = FRECHET_SAMPLES
) -> np.ndarray:
    """Points spaced uniformly in arc length along a polyline."""
    path = np.asarray(path, dtype=float)
    if path.ndim == 1:
        path = path[:, None]
    steps = np.linalg.norm(np.diff(path, axis=0), axis=1)
    lengths = np.concatenate([[0.0], np.cumsum(steps)])
    if lengths[-1] == 0.0:
        return np.repeat(path[:1], samples, axis=0)
    grid = np.linspace(0.0, lengths[-1], samples)
    return np.column_stack(
        [np.interp(grid, lengths, path[:, i]) for i in range(path.shape[1])]
    )


def arc_length(path: np.ndarray) -> float:
    """Total polyline length."""
    steps = np.diff(np.asarray(path, dtype=float), axis=0)
    return float(np.sum(np.linalg.norm(steps, axis=1)))


def truncate_to_arc_length(path: np.ndarray, length: float) -> np.ndarray:
    """Prefix of a polyline with the given length, ending on an interpolated point."""
    path = np.asarray(path, dtype=float)
    segments = np.linalg.norm(np.diff(path, axis=0), axis=1)
    cumulative = np.concatenate([[0.0], np.cumsum(segments)])
    if length >= cumulative[-1]:
        return path
    end = int(np.searchsorted(cumulative, length, side="right"))
    fraction = (length - cumulative[end - 1]) / segments[end - 1]
    tip = path[end - 1] + fraction * (path[end] - path[end - 1])
    return np.vstack([path[:end], tip])


def frechet_distance(
    path_a: np.ndarray, path_b: np.ndarray, samples: int = FRECHET_SAMPLES
) -> float:
    """
    Discrete Frechet distance after arc-length resampling of both paths.

    The coupling table is filled one anti-diagonal at a time.

    :raises ParameterError: If a path is empty.
    """
    if len(path_a) == 0 or len(path_b) == 0:
        raise ParameterError("Frechet distance needs non-empty paths")
    a = resample_by_arc_length(path_a, samples)
    b = resample_by_arc_length(path_b, samples)
    dist = cdist(a, b)
    n, m = dist.shape
    coupling = np.full((n, m), np.inf)
    coupling[0, 0] = dist[0, 0]
    for diagonal in range(1, n + m - 1):
        i = np.arange(max(0, diagonal - m + 1), min(n, diagonal + 1))
        j = diagonal - i
        best = np.full(i.size, np.inf)
        up = i > 0
        best[up] = np.minimum(best[up], coupling[i[up] - 1, j[up]])
        left = j > 0
        best[left] = np.minimum(best[left], coupling[i[left], j[left] - 1])
        both = up & left
        best[both] = np.minimum(best[both], coupling[i[both] - 1, j[both] - 1])
        coupling[i, j] = np.maximum(dist[i, j], best)
    return float(coupling[-1, -1])


@dataclass
class ExperimentRun:
    """
    Records of one experiment run plus its random draws.

    :param config: The config that was run.
    :param records: One record per rollout (per segment for arm experiments).
    :param draws: Random draws (vortex fields, goals) for the manifest.
    """

    config: ExperimentConfig
    records: List[RolloutRecord]
    draws: Dict[str, Any] = field(default_factory=dict)

    @property
    def violations(self) -> int:
        """Number of rollouts ended by a barrier violation."""
        return sum(record.event == "barrier_violation" for record in self.records)

def _run_plan(config: ExperimentConfig, components, plan: RolloutPlan) -> RolloutRecord:
    system = FabricSystem(
        config, components=components, leaf_index=plan.leaf_index, order=plan.order
    )
    return rk4_rollout(
        system.acceleration,
        plan.q0,
        plan.qd0,
        config.dt,
        plan.horizon,
        observe=system.observe,
        monitor=system.convergence_monitor(),
        label=plan.label,
        seed=config.seed,
        meta=plan.meta,
    )


def _run_plans(
    config: ExperimentConfig, components, plans: List[RolloutPlan], threads
) -> List[RolloutRecord]:
    """
    Runs independent rollouts, batching the plans that share a system.

    Plans are grouped by (leaf_index, order). A group whose system is batched runs
    as one :func:`batched_rollouts` call; the others fan out over threads.
    """
    groups: Dict[tuple, List[int]] = {}
    for index, plan in enumerate(plans):
        groups.setdefault((plan.leaf_index, plan.order), []).append(index)
    records: List[Optional[RolloutRecord]] = [None] * len(plans)
    pending: List[int] = []
    for (leaf_index, order), indices in groups.items():
        system = FabricSystem(
            config, components=components, leaf_index=leaf_index, order=order
        )
        if not (Config.BATCHED and system.batched):
            pending.extend(indices)
            continue
        group = [plans[index] for index in indices]
        for index, record in zip(
            indices, batched_rollouts(system, group, config.dt, config.seed)
        ):
            records[index] = record
    if pending:
        logging.debug(f"{len(pending)} rollouts of '{config.name}' run one by one")
        workers = max(1, min(threads or Config.THREADS, Config.THREADS, len(pending)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done = pool.map(lambda i: _run_plan(config, components, plans[i]), pending)
            for index, record in zip(pending, done):
                records[index] = record
    return records


def _run_goal_sequence(
    config: ExperimentConfig, components, goals
) -> List[RolloutRecord]:
    arm = make_arm(config.arm)
    q, qd, _ = arm_start(arm)
    records = []
    for index, goal in enumerate(goals):
        system = FabricSystem(config, goal=goal, components=components)
        plan = RolloutPlan(
            f"{config.name}_segment_{index + 1}",
            q,
            qd,
            config.horizon,
            meta={"segment": index + 1, "goal": [float(v) for v in goal]},
        )
        if Config.BATCHED and system.batched:
            record = batched_rollouts(system, [plan], config.dt, config.seed)[0]
        else:
            record = rk4_rollout(
                system.acceleration,
                plan.q0,
                plan.qd0,
                config.dt,
                plan.horizon,
                observe=system.observe,
                monitor=system.convergence_monitor(),
                label=plan.label,
                seed=config.seed,
                meta=plan.meta,
            )
        records.append(record)
        logging.info(
            f"Segment {index + 1} of '{config.name}' ended with {record.event}"
        )
        if record.event == "barrier_violation":
            break
        q, qd = record.positions[-1], record.velocities[-1]
    return records


def run_experiment(
    config: ExperimentConfig, threads: Optional[int] = None
) -> ExperimentRun:
    """
    Runs every rollout of an experiment.

    Rollouts sharing a batched system are integrated together; the rest are fanned
    out over at most ``threads`` workers (``Config.THREADS`` by default). Arm goal
    segments run in sequence, each starting from the final state of the previous
    one.
    """
    logging.info(
        f"Running experiment '{config.name}' ({config.variant}), seed {config.seed}"
    )
    components, vortices = expand_tree(
        config.tree, np.random.default_rng(config.seed)
    )
    draws: Dict[str, Any] = {}
    if vortices:
        draws["vortices"] = vortices

    if config.initial_conditions["kind"] in GOAL_KINDS:
        goals = sample_goals(config, make_arm(config.arm))
        draws["goals"] = goals.tolist()
        records = _run_goal_sequence(config, components, goals)
    else:
        records = _run_plans(config, components, rollout_plans(config), threads)

    run = ExperimentRun(config, records, draws)
    if run.violations:
        logging.warning(f"{run.violations} rollouts of '{config.name}' hit a barrier")
    return run
