"""
Module to test energization, the energy projector and commutation with pullbacks.
"""

import unittest

import numpy as np

from fabrics.energization import (
    energization_alpha,
    energize,
    commutation_check,
    projector_from_metric,
    projector_pe,
)
from fabrics.energy import hamiltonian_rate, make_builtin_energy, pull_energy
from fabrics.exceptions import ZeroVelocityError
from fabrics.geometry import make_builtin_geometry
from fabrics.kinematics import polar_map


class ProjectorTest(unittest.TestCase):
    """
    Test suite for the energy projector.
    """

    def test_euclidean_projector(self):
        """
        Test P_e = I - u u^T for the Euclidean metric.
        """
        projector = projector_from_metric(np.eye(2), np.array([1.0, 0.0]))
        np.testing.assert_allclose(projector, [[0.0, 0.0], [0.0, 1.0]])

    def test_projector_is_zero_work(self):
        """
        Test xd^T P_e r = 0 and P_e^2 = P_e for a non-trivial metric.
        """
        metric = np.array([[2.0, 0.3], [0.3, 1.0]])
        xd = np.array([0.4, -1.3])
        projector = projector_from_metric(metric, xd)
        projected = float(xd @ projector @ np.array([5.0, -2.0]))
        self.assertAlmostEqual(projected, 0.0, places=12)
        np.testing.assert_allclose(projector @ projector, projector, atol=1e-12)

    def test_zero_velocity(self):
        """
        Test that the projector is undefined at zero velocity.
        """
        energy = make_builtin_energy("euclidean", {"dim": 2})
        with self.assertRaises(ZeroVelocityError):
            projector_pe(energy, np.zeros(2), np.zeros(2))


class EnergizationTest(unittest.TestCase):
    """
    Test suite for energized systems.
    """

    def setUp(self):
        """
        Set up the Euclidean energy seen through the polar chart and an expanding
        geometry.
        """
        euclidean = make_builtin_energy("euclidean", {"dim": 2})
        self.energy = pull_energy(polar_map(), euclidean)
        self.h = make_builtin_geometry("expansion").h2
        self.q = np.array([1.5, 0.3])
        self.qd = np.array([0.6, -0.9])

    def test_alpha_cancels_velocity_aligned_term(self):
        """
        Test that h = c xd gives alpha = -c and a zero energized acceleration.
        """
        energy = make_builtin_energy("euclidean", {"dim": 2})
        xd = np.array([0.5, 2.0])
        system = energize(energy, lambda x, v: 3.0 * v)
        self.assertAlmostEqual(system.alpha(np.zeros(2), xd), -3.0)
        np.testing.assert_allclose(
            system.acceleration(np.zeros(2), xd), np.zeros(2), atol=1e-14
        )

    def test_alpha_zero_at_rest(self):
        """
        Test that alpha vanishes below the velocity floor.
        """
        alpha = energization_alpha(np.eye(2), np.zeros(2), np.ones(2), np.zeros(2))
        self.assertEqual(alpha, 0.0)

    def test_conserves_energy(self):
        """
        Test that the energized acceleration has zero Hamiltonian rate.
        """
        system = energize(self.energy, self.h)
        qdd = system.acceleration(self.q, self.qd)
        rate = hamiltonian_rate(self.energy, self.q, self.qd, qdd)
        self.assertAlmostEqual(rate, 0.0, places=10)

    def test_zero_work_form_matches_alpha_form(self):
        """
        Test that the zero-work spec solves to the alpha-form acceleration.
        """
        system = energize(self.energy, self.h)
        np.testing.assert_allclose(
            system.zero_work_acceleration(self.q, self.qd),
            system.acceleration(self.q, self.qd),
            atol=1e-10,
        )

    def test_terms_at_rest(self):
        """
        Test that the zero-work terms reduce to (M_e, M_e h) at rest.
        """
        system = energize(
            make_builtin_energy("euclidean", {"lam": 2.0}),
            lambda x, v: np.array([1.0, -1.0]),
        )
        metric, force = system.terms(np.zeros(2), np.zeros(2))
        np.testing.assert_allclose(metric, 2.0 * np.eye(2))
        np.testing.assert_allclose(force, [2.0, -2.0])

    def test_commutes_with_polar_pullback(self):
        """
        Test that energizing then pulling back equals pulling back then energizing.
        """
        states = [
            (np.array([1.5, 0.3]), np.array([0.6, -0.9])),
            (np.array([0.8, -2.0]), np.array([-0.2, 0.4])),
            (np.array([2.5, 1.1]), np.array([1.0, 0.1])),
        ]
        deviation = commutation_check(
            make_builtin_energy("euclidean", {"dim": 2}), self.h, polar_map(), states
        )
        self.assertLess(deviation, 1e-8)


if __name__ == "__main__":
    unittest.main()
