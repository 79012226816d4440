"""
Module to test forcing potentials, speed control and the convergence monitor.
"""

import unittest

import numpy as np

from fabrics.energy import make_builtin_energy
from fabrics.exceptions import ParameterError
from fabrics.forcing import (
    ConvergenceMonitor,
    ForcingPotential,
    SpeedController,
    alpha_projection,
    potential_force,
    speed_controlled_step,
    total_energy_rate,
)
from fabrics.geometry import WeightedFabric, weighted
from fabrics.kinematics import attractor_map
from fabrics.spec_core import identity_map


class ForcingPotentialTest(unittest.TestCase):
    """
    Test suite for the attractor potential.
    """

    def setUp(self):
        """
        Set up the default potential toward (-2.5, -3.75).
        """
        self.potential = ForcingPotential(attractor_map([-2.5, -3.75]))

    def test_gradient_is_bounded(self):
        """
        Test |dpsi| <= k m_upper on a grid of positions.
        """
        bound = self.potential.k * self.potential.m_upper
        for x in np.linspace(-6.0, 6.0, 13):
            for y in np.linspace(-6.0, 6.0, 13):
                norm = np.linalg.norm(potential_force(self.potential, np.array([x, y])))
                self.assertLessEqual(norm, bound + 1e-12)

    def test_gradient_points_away_from_target(self):
        """
        Test that dpsi is aligned with q - q_d.
        """
        q = np.array([2.0, 3.0])
        grad = potential_force(self.potential, q)
        offset = q - np.array([-2.5, -3.75])
        self.assertGreater(float(grad @ offset), 0.0)
        cross = float(grad[0] * offset[1] - grad[1] * offset[0])
        self.assertAlmostEqual(cross, 0.0, places=12)

    def test_zero_at_target(self):
        """
        Test that the gradient vanishes at the target.
        """
        force = potential_force(self.potential, np.array([-2.5, -3.75]))
        np.testing.assert_allclose(force, np.zeros(2))

    def test_priority_bounds(self):
        """
        Test that the priority weight equals m_upper at the target and tends to m_lower.
        """
        self.assertAlmostEqual(self.potential.priority_weight(np.zeros(2)), 2.0)
        weight = self.potential.priority_weight(np.array([50.0, 0.0]))
        self.assertAlmostEqual(weight, 0.3)

    def test_invalid_priority(self):
        """
        Test that m_lower above m_upper is rejected.
        """
        with self.assertRaises(ParameterError):
            ForcingPotential(attractor_map([0.0, 0.0]), m_upper=0.3, m_lower=2.0)

    def test_non_numeric_gain(self):
        """
        Test that gains that are not numbers are rejected as parameter errors.
        """
        with self.assertRaises(ParameterError):
            ForcingPotential(attractor_map([0.0, 0.0]), k="abc")
        with self.assertRaises(ParameterError):
            SpeedController(alpha_eta="abc")


class SpeedControlTest(unittest.TestCase):
    """
    Test suite for the execution-energy speed controller.
    """

    def test_alpha_projection_euclidean(self):
        """
        Test alpha = -xd^T xdd_d / xd^T xd for the Euclidean energy.
        """
        energy = make_builtin_energy("euclidean", {"dim": 2})
        xd = np.array([1.0, 0.0])
        x = np.zeros(2)
        across = alpha_projection(energy, np.array([2.0, 5.0]), x, xd)
        normal = alpha_projection(energy, np.array([0.0, 3.0]), x, xd)
        self.assertAlmostEqual(across, -2.0)
        self.assertAlmostEqual(normal, 0.0)

    def test_eta_switch(self):
        """
        Test that eta is 1/2 at the desired energy and saturates on either side.
        """
        ctl = SpeedController()
        self.assertAlmostEqual(ctl.eta(ctl.target_energy), 0.5)
        self.assertGreater(ctl.eta(0.0), 0.999)
        self.assertLess(ctl.eta(10.0), 1e-6)
        self.assertEqual(SpeedController(eta_fixed=1.0).eta(10.0), 1.0)

    def test_damping_switch(self):
        """
        Test that the damping switch is 1/2 at the damping radius.
        """
        ctl = SpeedController()
        self.assertAlmostEqual(ctl.damping_switch(ctl.r_beta), 0.5)
        self.assertGreater(ctl.damping_switch(0.0), ctl.damping_switch(10.0))

    def test_invalid_controller(self):
        """
        Test that negative damping, non-positive speed and eta outside [0, 1] are
        rejected.
        """
        with self.assertRaises(ParameterError):
            SpeedController(damping=-1.0)
        with self.assertRaises(ParameterError):
            SpeedController(v_d=0.0)
        with self.assertRaises(ParameterError):
            SpeedController(eta_fixed=1.5)

    def test_system_energy_dissipation_rate(self):
        """
        Test that regulating the system energy with eta = 1 dissipates at
        -beta qd^T M qd.
        """
        fabric = WeightedFabric(
            [(identity_map(2), weighted("expansion", {}, "euclidean", {"lam": 1.5}))], 2
        )
        potential = ForcingPotential(attractor_map([-2.5, -3.75]))
        ctl = SpeedController(eta_fixed=1.0, use_system_energy=True)
        q, qd = np.array([2.0, 3.0]), np.array([-0.9, 1.2])
        qdd, diagnostics = speed_controlled_step(
            fabric.h2, fabric.energy, potential, ctl, q, qd
        )
        rate = total_energy_rate(fabric.energy, potential, q, qd, qdd)
        expected = -diagnostics.beta * 1.5 * float(qd @ qd)
        self.assertAlmostEqual(rate / expected, 1.0, places=9)
        self.assertGreaterEqual(diagnostics.beta, ctl.damping_min)


class ConvergenceMonitorTest(unittest.TestCase):
    """
    Test suite for the convergence monitor.
    """

    def test_hold_and_reset(self):
        """
        Test that the criterion must hold for the full hold time and resets on exit.
        """
        monitor = ConvergenceMonitor(attractor_map([1.0, 1.0]), hold=0.5)
        inside = (np.array([1.05, 1.0]), np.zeros(2))
        outside = (np.array([2.0, 1.0]), np.zeros(2))
        self.assertFalse(monitor.update(0.0, *inside))
        self.assertFalse(monitor.update(0.25, *inside))
        self.assertFalse(monitor.update(0.3, *outside))
        self.assertFalse(monitor.update(0.4, *inside))
        self.assertFalse(monitor.update(0.8, *inside))
        self.assertTrue(monitor.update(0.9, *inside))

    def test_moving_state_is_not_converged(self):
        """
        Test that a state at the target with speed above tolerance does not count.
        """
        monitor = ConvergenceMonitor(attractor_map([0.0, 0.0]), hold=0.0)
        self.assertFalse(monitor.update(0.0, np.zeros(2), np.array([0.01, 0.0])))


if __name__ == "__main__":
    unittest.main()
