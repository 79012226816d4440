"""
Module to test the task maps: planar arm, distance maps, charts and goal sampling.
"""

import unittest

import numpy as np

from fabrics.exceptions import EvaluationError, ParameterError
from fabrics.kinematics import (
    DistanceMap1D,
    PlanarArm,
    arm_fk,
    cartesian_to_polar_map,
    distance_map,
    end_effector_map,
    limit_maps,
    polar_map,
    sample_floor_goals,
    sample_reaching_goals,
)
from fabrics.system import build_map

STEP = 1e-6


def central_jacobian(fn, q):
    columns = []
    for index in range(q.size):
        offset = np.zeros(q.size)
        offset[index] = STEP
        columns.append((fn(q + offset) - fn(q - offset)) / (2 * STEP))
    return np.stack(columns, axis=1)


class PlanarArmTest(unittest.TestCase):
    """
    Test suite for the planar arm kinematics.
    """

    def setUp(self):
        """
        Set up the default three-link arm.
        """
        self.arm = PlanarArm()
        self.q = np.array([0.4, -0.7, 1.1])
        self.qd = np.array([0.3, -0.5, 0.8])

    def test_default_pose(self):
        """
        Test the end-effector position at the default configuration.
        """
        ee, _, _ = arm_fk(self.arm, np.asarray(self.arm.q0))
        half = np.sqrt(0.5)
        np.testing.assert_allclose(ee, [1.0 + half, 1.0 + half], atol=1e-12)
        joints = self.arm.joint_positions(np.asarray(self.arm.q0))
        np.testing.assert_allclose(joints[-1], ee, atol=1e-12)

    def test_batch_matches_single_states(self):
        """
        Test that a stack of configurations gives the per-configuration results.
        """
        qs = np.array([self.q, np.asarray(self.arm.q0), np.zeros(3)])
        qds = np.array([self.qd, -self.qd, np.ones(3)])
        ee, jac, curvature = arm_fk(self.arm, qs)
        self.assertEqual(ee.shape, (3, 2))
        self.assertEqual(jac.shape, (3, 2, 3))
        rates = curvature(qds)
        for b in range(3):
            single_ee, single_jac, single_curvature = arm_fk(self.arm, qs[b])
            np.testing.assert_allclose(ee[b], single_ee, atol=1e-12)
            np.testing.assert_allclose(jac[b], single_jac, atol=1e-12)
            np.testing.assert_allclose(rates[b], single_curvature(qds[b]), atol=1e-12)

    def test_end_effector_floor_height(self):
        """
        Test the end-effector height map used by the floor barrier.
        """
        config_map = {"kind": "ee_floor_height", "floor": 0.5, "normal": [0.0, 1.0]}
        task_map = build_map(config_map, 3, self.arm)
        ee, jac, _ = arm_fk(self.arm, self.q)
        x, leaf_jac, xd, _ = task_map.evaluate(self.q, self.qd)
        np.testing.assert_allclose(x, [ee[1] - 0.5], atol=1e-12)
        np.testing.assert_allclose(leaf_jac, jac[1:2], atol=1e-12)
        np.testing.assert_allclose(xd, jac[1:2] @ self.qd, atol=1e-12)
        self.assertTrue(task_map.batched)

    def test_jacobian_matches_finite_difference(self):
        """
        Test the analytic Jacobian against central differences.
        """
        _, jac, _ = arm_fk(self.arm, self.q)
        numeric = central_jacobian(lambda q: arm_fk(self.arm, q)[0], self.q)
        np.testing.assert_allclose(jac, numeric, atol=1e-6)

    def test_curvature_matches_finite_difference(self):
        """
        Test Jdot qd against the time derivative of J along qd.
        """
        task_map = end_effector_map(self.arm)
        ahead = task_map.jacobian(self.q + STEP * self.qd)
        behind = task_map.jacobian(self.q - STEP * self.qd)
        numeric = (ahead - behind) / (2 * STEP) @ self.qd
        curvature = task_map.curvature(self.q, self.qd)
        np.testing.assert_allclose(curvature, numeric, atol=1e-6)

    def test_invalid_arm(self):
        """
        Test that mismatched lengths and inverted limits are rejected.
        """
        with self.assertRaises(ParameterError):
            PlanarArm(link_lengths=(1.0, 1.0))
        with self.assertRaises(ParameterError):
            PlanarArm(joint_limits=((1.0, -1.0), (-1.0, 1.0), (-1.0, 1.0)))


class DistanceMapTest(unittest.TestCase):
    """
    Test suite for scalar distance maps and charts.
    """

    def test_circle_obstacle(self):
        """
        Test value, Jacobian row and curvature of the unit circle distance.
        """
        dmap = DistanceMap1D("circle_obstacle", {"center": [0.0, 0.0], "radius": 1.0})
        value, row, curv = distance_map(
            dmap, np.array([2.0, 0.0]), np.array([0.0, 1.0])
        )
        self.assertAlmostEqual(value, 1.0)
        np.testing.assert_allclose(row, [1.0, 0.0])
        self.assertAlmostEqual(curv, 0.5)

    def test_circle_obstacle_batch(self):
        """
        Test that the obstacle distance broadcasts over a batch of positions.
        """
        task_map = DistanceMap1D(
            "circle_obstacle", {"center": [1.0, 0.0], "radius": 0.5}
        ).task_map()
        q = np.array([[3.0, 0.0], [1.0, 2.0]])
        qd = np.array([[0.0, 1.0], [1.0, 0.0]])
        x, jac, xd, curv = task_map.evaluate_batch(q, qd)
        np.testing.assert_allclose(x, [[3.0], [3.0]])
        np.testing.assert_allclose(jac, [[[2.0, 0.0]], [[0.0, 2.0]]])
        np.testing.assert_allclose(xd, [[0.0], [0.0]])
        # tangential speed squared over (radius * distance)
        np.testing.assert_allclose(curv, [[1.0], [1.0]])

    def test_circle_center(self):
        """
        Test that the circle distance is undefined at the center.
        """
        dmap = DistanceMap1D("circle_obstacle", {"center": [1.0, 1.0]})
        with self.assertRaises(EvaluationError):
            distance_map(dmap, np.array([1.0, 1.0]))

    def test_limit_maps(self):
        """
        Test upper and lower limit distances inside a box.
        """
        q = np.array([1.0, 2.0])
        maps = limit_maps([-4.0, -4.0], [4.0, 4.0])
        values = [float(task_map.map(q)[0]) for task_map in maps]
        np.testing.assert_allclose(values, [3.0, 5.0, 2.0, 6.0])

    def test_floor_height(self):
        """
        Test the floor height along the default normal.
        """
        floor = DistanceMap1D("floor_height", {"floor": 0.5})
        value, row, _ = distance_map(floor, np.array([3.0, 2.0]))
        self.assertAlmostEqual(value, 1.5)
        np.testing.assert_allclose(row, [0.0, 1.0])

    def test_unknown_kind(self):
        """
        Test that unknown distance kinds are rejected.
        """
        with self.assertRaises(ParameterError):
            DistanceMap1D("sphere")

    def test_polar_charts(self):
        """
        Test the polar chart and its inverse.
        """
        np.testing.assert_allclose(
            cartesian_to_polar_map().map(np.array([3.0, 4.0])),
            [5.0, np.arctan2(4.0, 3.0)],
        )
        np.testing.assert_allclose(
            polar_map().map(np.array([2.0, np.pi / 2])), [0.0, 2.0], atol=1e-12
        )
        with self.assertRaises(EvaluationError):
            cartesian_to_polar_map().map(np.zeros(2))
        with self.assertRaises(EvaluationError):
            polar_map().jacobian(np.array([0.0, 1.0]))


class GoalSamplingTest(unittest.TestCase):
    """
    Test suite for seeded goal sampling.
    """

    def test_floor_goals_alternate(self):
        """
        Test that floor goals alternate between the near and far bands.
        """
        goals = sample_floor_goals(np.random.default_rng(3), 6, (0.5, 1.0), (1.8, 2.4))
        for index, (x, y) in enumerate(goals):
            low, high = ((0.5, 1.0), (1.8, 2.4))[index % 2]
            self.assertTrue(low <= x <= high)
            self.assertEqual(y, 0.0)

    def test_floor_goals_height(self):
        """
        Test that floor goals sit at the requested height above the floor line.
        """
        goals = sample_floor_goals(
            np.random.default_rng(3), 4, (0.5, 1.0), (1.8, 2.4), floor=-0.5, height=0.2
        )
        np.testing.assert_allclose(goals[:, 1], -0.3)

    def test_floor_bands_overlap(self):
        """
        Test that overlapping floor bands are rejected.
        """
        with self.assertRaises(ParameterError):
            sample_floor_goals(np.random.default_rng(3), 4, (0.5, 2.0), (1.8, 2.4))

    def test_reaching_goals(self):
        """
        Test that reaching goals are seeded, lie in the sector and are separated.
        """
        args = (8, (1.5, 2.5), (0.0, np.pi), 1.0)
        goals = sample_reaching_goals(np.random.default_rng(7), *args)
        again = sample_reaching_goals(np.random.default_rng(7), *args)
        np.testing.assert_array_equal(goals, again)
        radii = np.linalg.norm(goals, axis=1)
        self.assertTrue(np.all((radii >= 1.5 - 1e-12) & (radii <= 2.5 + 1e-12)))
        self.assertTrue(np.all(goals[:, 1] >= -1e-12))
        gaps = np.linalg.norm(np.diff(goals, axis=0), axis=1)
        self.assertTrue(np.all(gaps >= 1.0))


if __name__ == "__main__":
    unittest.main()
