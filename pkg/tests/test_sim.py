"""
Module to test RK4 rollouts, path metrics and experiment runs.
"""

import unittest
from unittest import mock

import numpy as np

from config import Config
from fabrics.config_schema import ExperimentConfig, apply_overrides
from fabrics.exceptions import BoundaryViolation, ParameterError
from fabrics.experiments import RolloutPlan, registry_document, rollout_plans
from fabrics.sim import (
    CSV_DIAGNOSTICS,
    arc_length,
    batched_rollouts,
    frechet_distance,
    resample_by_arc_length,
    rk4_rollout,
    run_experiment,
    truncate_to_arc_length,
)
from fabrics.system import FabricSystem


def short_config(name, *overrides):
    document = apply_overrides(registry_document(name), list(overrides))
    return ExperimentConfig.from_document(document)


class StopAfter:
    """Monitor reporting convergence from a given time on."""

    def __init__(self, time):
        self.time = time

    def update(self, t, q, qd):
        return t >= self.time - 1e-12


class RolloutTest(unittest.TestCase):
    """
    Test suite for fixed-step RK4 rollouts.
    """

    def test_constant_acceleration_is_exact(self):
        """
        Test that RK4 integrates a constant acceleration exactly.
        """
        accel = np.array([0.5, -2.0])
        record = rk4_rollout(
            lambda q, qd, t: accel, np.zeros(2), np.array([1.0, 0.0]), 0.1, 2.0
        )
        self.assertEqual(record.event, "max_time")
        self.assertEqual(len(record.times), 21)
        np.testing.assert_allclose(
            record.positions[-1], [2.0 + 0.25 * 4.0, -4.0], atol=1e-10
        )
        np.testing.assert_allclose(record.velocities[-1], [2.0, -4.0], atol=1e-10)

    def test_harmonic_oscillator(self):
        """
        Test RK4 accuracy on qdd = -q over ten seconds.
        """
        record = rk4_rollout(
            lambda q, qd, t: -q, np.array([1.0]), np.array([0.0]), 0.01, 10.0
        )
        self.assertAlmostEqual(record.times[-1], 10.0)
        self.assertAlmostEqual(record.positions[-1, 0], np.cos(10.0), places=6)
        self.assertAlmostEqual(record.velocities[-1, 0], -np.sin(10.0), places=6)

    def test_barrier_violation_ends_rollout(self):
        """
        Test that a boundary violation ends the rollout with its state snapshot.
        """

        def accel(q, qd, t):
            if q[0] <= 0.0:
                raise BoundaryViolation("crossed", {"q": q})
            return np.zeros(1)

        record = rk4_rollout(accel, np.array([0.53]), np.array([-1.0]), 0.1, 5.0)
        self.assertEqual(record.events, ["barrier_violation"])
        self.assertIn("q", record.event_state)
        self.assertLess(record.times[-1], 1.0)
        self.assertTrue(np.all(record.positions[:, 0] > 0.0))

    def test_non_finite_acceleration(self):
        """
        Test that a NaN acceleration ends the rollout as a violation.
        """
        record = rk4_rollout(
            lambda q, qd, t: np.array([np.nan]), np.zeros(1), np.zeros(1), 0.1, 1.0
        )
        self.assertEqual(record.event, "barrier_violation")
        self.assertEqual(len(record.times), 1)

    def test_monitor_stops_rollout(self):
        """
        Test that the monitor ends the rollout with a converged event.
        """
        record = rk4_rollout(
            lambda q, qd, t: np.zeros(1),
            np.zeros(1),
            np.zeros(1),
            0.1,
            5.0,
            monitor=StopAfter(0.5),
        )
        self.assertEqual(record.event, "converged")
        self.assertAlmostEqual(record.times[-1], 0.5)

    def test_invalid_step(self):
        """
        Test that a non-positive step is rejected.
        """
        with self.assertRaises(ParameterError):
            rk4_rollout(lambda q, qd, t: q, np.zeros(1), np.zeros(1), 0.0, 1.0)

    def test_frame_columns(self):
        """
        Test the trajectory table layout with the event on the last row only.
        """
        record = rk4_rollout(lambda q, qd, t: -q, np.ones(2), np.zeros(2), 0.1, 0.3)
        frame = record.to_frame()
        self.assertEqual(
            list(frame.columns),
            ["t", "q1", "q2", "qd1", "qd2", *CSV_DIAGNOSTICS, "event"],
        )
        self.assertEqual(list(frame["event"]), ["", "", "", "max_time"])


    def test_max_metric_asymmetry(self):
        """
        Test that the record reports the largest observed metric asymmetry.
        """
        record = rk4_rollout(
            lambda q, qd, t: np.zeros(1),
            np.zeros(1),
            np.ones(1),
            0.1,
            0.3,
            observe=lambda q, qd: {"asymmetry": float(q[0])},
        )
        self.assertAlmostEqual(record.max_metric_asymmetry, 0.3)
        self.assertIn("asymmetry", record.to_frame().columns)

class PathMetricTest(unittest.TestCase):
    """
    Test suite for arc length, truncation and the Frechet distance.
    """

    def setUp(self):
        """
        Set up a straight segment sampled at two densities.
        """
        self.coarse = np.array([[0.0, 0.0], [3.0, 4.0]])
        self.fine = np.column_stack(
            [np.linspace(0.0, 3.0, 31), np.linspace(0.0, 4.0, 31)]
        )

    def test_arc_length(self):
        """
        Test the polyline length.
        """
        self.assertAlmostEqual(arc_length(self.coarse), 5.0)
        self.assertAlmostEqual(arc_length(self.fine), 5.0)

    def test_truncate(self):
        """
        Test truncation to half the length ends on an interpolated point.
        """
        half = truncate_to_arc_length(self.coarse, 2.5)
        np.testing.assert_allclose(half[-1], [1.5, 2.0])
        self.assertAlmostEqual(arc_length(half), 2.5)
        truncated = truncate_to_arc_length(self.coarse, 9.0)
        np.testing.assert_array_equal(truncated, self.coarse)

    def test_resample_spacing(self):
        """
        Test that resampled points are uniformly spaced.
        """
        points = resample_by_arc_length(self.coarse, 11)
        gaps = np.linalg.norm(np.diff(points, axis=0), axis=1)
        np.testing.assert_allclose(gaps, 0.5)

    def test_frechet_identical_paths(self):
        """
        Test that the same path at different sampling densities has zero distance.
        """
        self.assertLess(frechet_distance(self.coarse, self.fine), 1e-12)

    def test_frechet_offset(self):
        """
        Test that a parallel copy is as far as its offset.
        """
        shifted = self.fine + np.array([0.4, -0.3])
        self.assertAlmostEqual(frechet_distance(self.fine, shifted), 0.5)

    def test_frechet_empty(self):
        """
        Test that empty paths are rejected.
        """
        with self.assertRaises(ParameterError):
            frechet_distance(np.empty((0, 2)), self.fine)


class ExperimentRunTest(unittest.TestCase):
    """
    Test suite for experiment runs.
    """

    def test_deterministic(self):
        """
        Test that two runs of the same config produce identical trajectories.
        """
        config = short_config("layered_D_fabric", "integration.horizon=0.5")
        first = run_experiment(config, threads=2)
        second = run_experiment(config, threads=1)
        self.assertEqual(first.draws, second.draws)
        self.assertEqual(
            [r.label for r in first.records], [r.label for r in second.records]
        )
        for a, b in zip(first.records, second.records):
            np.testing.assert_array_equal(a.positions, b.positions)
            np.testing.assert_array_equal(a.velocities, b.velocities)

    def test_fabric_run_records_energy(self):
        """
        Test that an unforced fabric run records a constant system energy.
        """
        config = short_config("layered_A_fabric", "integration.horizon=1.0")
        run = run_experiment(config)
        self.assertEqual(len(run.records), 14)
        self.assertEqual(run.violations, 0)
        for record in run.records:
            self.assertEqual(record.event, "max_time")
            np.testing.assert_allclose(record.observations["H_e"], 1.125)

    def test_batching_does_not_change_runs(self):
        """
        Test that batched and one-by-one runs of a vortex layer agree.
        """
        config = short_config("layered_D", "integration.horizon=0.3")
        batched = run_experiment(config)
        with mock.patch.object(Config, "BATCHED", False):
            single = run_experiment(config, threads=1)
        for a, b in zip(batched.records, single.records):
            self.assertEqual(a.label, b.label)
            self.assertEqual(a.event, b.event)
            np.testing.assert_allclose(a.positions, b.positions, rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(
                a.observations["H_e"], b.observations["H_e"], rtol=1e-9
            )


class BatchedRolloutTest(unittest.TestCase):
    """
    Test suite for integrating many particles of one system together.
    """

    def setUp(self):
        """
        Sets up a short forced obstacle layer.
        """
        self.config = short_config("layered_C", "integration.horizon=0.3")
        self.system = FabricSystem(self.config)

    def _single(self, plan):
        return rk4_rollout(
            self.system.acceleration,
            plan.q0,
            plan.qd0,
            self.config.dt,
            plan.horizon,
            observe=self.system.observe,
            monitor=self.system.convergence_monitor(),
            label=plan.label,
            meta=plan.meta,
        )

    def test_matches_single_state_rollouts(self):
        """
        Test that every batched particle follows its own single-state rollout.
        """
        plans = rollout_plans(self.config)[:4]
        records = batched_rollouts(self.system, plans, self.config.dt)
        self.assertEqual([r.label for r in records], [p.label for p in plans])
        for plan, record in zip(plans, records):
            single = self._single(plan)
            self.assertEqual(record.event, single.event)
            self.assertEqual(record.positions.shape, (31, 2))
            np.testing.assert_allclose(
                record.positions, single.positions, rtol=1e-9, atol=1e-12
            )
            np.testing.assert_allclose(
                record.velocities, single.velocities, rtol=1e-9, atol=1e-12
            )
            for name in ("H_e", "L_ex", "alpha_ex", "alpha_Le", "eta", "beta"):
                np.testing.assert_allclose(
                    record.observations[name],
                    single.observations[name],
                    rtol=1e-7,
                    atol=1e-9,
                    err_msg=name,
                )
            np.testing.assert_allclose(
                record.observations["psi"], single.observations["psi"], atol=1e-4
            )
            self.assertLess(record.max_metric_asymmetry, 1e-12)

    def test_violating_particle_leaves_the_batch(self):
        """
        Test that a particle starting inside the obstacle stops alone.
        """
        good = rollout_plans(self.config)[0]
        inside = RolloutPlan("inside", np.array([0.2, 0.0]), np.array([1.0, 0.0]), 0.3)
        records = batched_rollouts(self.system, [good, inside], self.config.dt)
        self.assertEqual(records[1].event, "barrier_violation")
        self.assertEqual(records[1].positions.shape, (1, 2))
        self.assertIsNotNone(records[1].event_state)
        np.testing.assert_allclose(
            records[0].positions, self._single(good).positions, rtol=1e-9, atol=1e-12
        )

    def test_own_horizons(self):
        """
        Test that each particle stops at its own horizon.
        """
        plans = [
            RolloutPlan("short", np.array([2.0, 3.0]), np.array([1.0, 0.0]), 0.1),
            RolloutPlan("long", np.array([2.0, 3.0]), np.array([0.0, 1.0]), 0.2),
        ]
        records = batched_rollouts(self.system, plans, self.config.dt)
        self.assertEqual([r.times.size for r in records], [11, 21])
        self.assertEqual([r.event for r in records], ["max_time", "max_time"])

    def test_unbatched_system(self):
        """
        Test that a commutation system is refused.
        """
        system = FabricSystem(short_config("commutation_polar"), order="root")
        plans = rollout_plans(short_config("commutation_polar"))[:1]
        with self.assertRaises(ParameterError):
            batched_rollouts(system, plans, 0.01)


if __name__ == "__main__":
    unittest.main()
