"""
Module to test the geometry catalogue and metric-weighted fabrics.
"""

import unittest

import numpy as np

from fabrics.exceptions import (
    BoundaryViolation,
    DimensionMismatchError,
    ParameterError,
    ZeroVelocityError,
)
from fabrics.geometry import (
    GEOMETRY_KINDS,
    WeightedFabric,
    combine_weighted,
    geometric_projection,
    make_builtin_geometry,
    weighted,
)
from fabrics.experiments import registry_config
from fabrics.kinematics import polar_map
from fabrics.spec_core import identity_map
from fabrics.system import FabricSystem

PARAMS = {
    "redundancy": {"q0": [0.5, -0.3]},
    "goal_attract": {"goal": [1.0, 0.5]},
}
STATE = np.array([1.4, 1.1])


def state_for(kind):
    return np.array([0.8]) if kind == "limit" else STATE


class GeometryCatalogueTest(unittest.TestCase):
    """
    Test suite for the built-in geometry generators.
    """

    def test_zero_at_rest(self):
        """
        Test that every built-in generator vanishes at zero velocity.
        """
        for kind in GEOMETRY_KINDS:
            with self.subTest(kind=kind):
                generator = make_builtin_geometry(kind, PARAMS.get(kind))
                x = state_for(kind)
                at_rest = generator.h2(x, np.zeros_like(x))
                np.testing.assert_allclose(at_rest, np.zeros(x.size))

    def test_homogeneous_of_degree_two(self):
        """
        Test h2(x, a xd) = a^2 h2(x, xd) for every built-in generator.
        """
        for kind in GEOMETRY_KINDS:
            generator = make_builtin_geometry(kind, PARAMS.get(kind))
            x = state_for(kind)
            xd = np.array([0.7, -0.4])[: x.size]
            base = generator.h2(x, xd)
            for alpha in (0.5, 2.0, 3.7):
                with self.subTest(kind=kind, alpha=alpha):
                    np.testing.assert_allclose(
                        generator.h2(x, alpha * xd),
                        alpha**2 * base,
                        rtol=1e-10,
                        atol=1e-14,
                    )

    def test_vortex_does_no_work(self):
        """
        Test that the vortex acceleration is orthogonal to the velocity.
        """
        generator = make_builtin_geometry("vortex", {"f": 4.0, "sign": -1.0})
        xd = np.array([0.3, 1.2])
        self.assertAlmostEqual(float(xd @ generator.h2(STATE, xd)), 0.0, places=12)

    def test_vortex_sign(self):
        """
        Test that the vortex sign must be +1 or -1.
        """
        with self.assertRaises(ParameterError):
            make_builtin_geometry("vortex", {"sign": 0.5})

    def test_redundancy_needs_rest_pose(self):
        """
        Test that the redundancy geometry requires q0.
        """
        with self.assertRaises(ParameterError):
            make_builtin_geometry("redundancy", {})

    def test_gains(self):
        """
        Test that the redundancy and floor-lift gains scale their generators.
        """
        q, qd = np.array([1.0, 0.2]), np.array([0.3, -0.4])
        base = make_builtin_geometry("redundancy", {"q0": [0.5, -0.3]})
        strong = make_builtin_geometry("redundancy", {"q0": [0.5, -0.3], "lam": 10.0})
        np.testing.assert_allclose(strong.h2(q, qd), 10.0 * base.h2(q, qd))
        np.testing.assert_allclose(base.h2(q, qd), 0.25 * np.array([0.5, 0.5]))
        lift = make_builtin_geometry("floor_lift", {"normal": [0.0, 2.0], "lam": 5.0})
        np.testing.assert_allclose(lift.h2(q, qd), [0.0, -5.0 * 0.25])

    def test_batched_generators_match_single_states(self):
        """
        Test that every generator evaluates a stack of states row by row.
        """
        rng = np.random.default_rng(5)
        for kind in GEOMETRY_KINDS:
            generator = make_builtin_geometry(kind, PARAMS.get(kind, {}))
            if not generator.batched:
                continue
            x = np.stack([state_for(kind), 1.5 * state_for(kind)])
            xd = rng.normal(size=x.shape)
            stacked = generator.h2(x, xd)
            for b in range(2):
                with self.subTest(kind=kind, row=b):
                    np.testing.assert_allclose(
                        np.broadcast_to(stacked, x.shape)[b],
                        generator.h2(x[b], xd[b]),
                        rtol=1e-12,
                        atol=1e-14,
                    )

    def test_limit_boundary(self):
        """
        Test that the limit generator raises at the limit.
        """
        generator = make_builtin_geometry("limit")
        with self.assertRaises(BoundaryViolation):
            generator.h2(np.array([0.0]), np.array([-1.0]))

    def test_attractor_far_field(self):
        """
        Test that the attracting generator is lam |xd|^2 k x/|x| far from the target.
        """
        params = {"lam": 7.0, "k": 1.0, "alpha_psi": 1.0}
        generator = make_builtin_geometry("attractor", params)
        x = np.array([30.0, 40.0])
        xd = np.array([1.0, 1.0])
        np.testing.assert_allclose(
            generator.h2(x, xd), 7.0 * 2.0 * x / 50.0, rtol=1e-10
        )

    def test_unknown_parameter(self):
        """
        Test that misspelled parameters are rejected.
        """
        with self.assertRaises(ParameterError):
            make_builtin_geometry("barrier_gradient", {"lamda": 0.7})

    def test_non_numeric_parameter(self):
        """
        Test that a value that is not a number is rejected as a parameter error.
        """
        with self.assertRaises(ParameterError):
            make_builtin_geometry("limit", {"a1": "abc"})

    def test_geometric_projection(self):
        """
        Test that the geometric projection removes the along-velocity component.
        """
        xd = np.array([2.0, 0.0])
        projected = geometric_projection(np.array([3.0, -1.0]), xd)
        np.testing.assert_allclose(projected, [0.0, -1.0])
        with self.assertRaises(ZeroVelocityError):
            geometric_projection(np.ones(2), np.zeros(2))


class WeightedFabricTest(unittest.TestCase):
    """
    Test suite for metric-weighted combination of leaf geometries.
    """

    def setUp(self):
        """
        Set up an attracting and an expanding geometry with Euclidean priorities.
        """
        self.attract = weighted(
            "goal_attract", {"goal": [0.0, 0.0]}, "euclidean", {"lam": 1.0}
        )
        self.expand = weighted("expansion", {}, "euclidean", {"lam": 3.0})
        self.q = np.array([1.0, -0.5])
        self.qd = np.array([0.4, 0.8])

    def test_single_identity_leaf(self):
        """
        Test that a single identity leaf reproduces its generator at the root.
        """
        fabric = WeightedFabric([(identity_map(2), self.attract)], 2)
        expected = self.attract.generator.h2(self.q, self.qd)
        np.testing.assert_allclose(fabric.h2(self.q, self.qd), expected)

    def test_metric_weighted_average(self):
        """
        Test that two identity leaves combine as a metric-weighted average.
        """
        fabric = WeightedFabric(
            [(identity_map(2), self.attract), (identity_map(2), self.expand)], 2
        )
        expected = (
            1.0 * self.attract.generator.h2(self.q, self.qd)
            + 3.0 * self.expand.generator.h2(self.q, self.qd)
        ) / 4.0
        np.testing.assert_allclose(fabric.h2(self.q, self.qd), expected)
        metric, _, f_energy = fabric.terms(self.q, self.qd)
        np.testing.assert_allclose(metric, 4.0 * np.eye(2))
        np.testing.assert_allclose(f_energy, np.zeros(2))

    def test_system_energy_of_polar_leaf(self):
        """
        Test that the system energy carries the pulled-back priority.
        """
        fabric = WeightedFabric([(polar_map(), self.expand)], 2)
        q = np.array([2.0, 0.1])
        metric, _, _ = fabric.terms(q, self.qd)
        np.testing.assert_allclose(metric, np.diag([3.0, 12.0]), atol=1e-12)
        expected = 1.5 * (0.4**2 + 4.0 * 0.8**2)
        self.assertAlmostEqual(fabric.energy.value(q, self.qd), expected)

    def test_batch_terms_match_single_states(self):
        """
        Test that the stacked root terms of the full layered fabric match the
        single-state terms and the system energy.
        """
        fabric = FabricSystem(registry_config("layered_E_fabric")).fabric
        self.assertTrue(fabric.batched)
        q = np.array([[2.0, 3.0], [-2.5, -3.0], [1.5, -1.0], [-3.2, 2.4]])
        qd = np.array([[1.0, -0.5], [-0.3, -0.4], [0.2, 1.1], [-1.0, 0.0]])
        metric, f_geometry, f_energy, energy = fabric.batch_terms(q, qd)
        for b in range(len(q)):
            single = fabric.terms(q[b], qd[b])
            for batched, expected in zip((metric, f_geometry, f_energy), single):
                np.testing.assert_allclose(batched[b], expected, rtol=1e-10, atol=1e-12)
            self.assertAlmostEqual(
                energy[b], fabric.energy.value(q[b], qd[b]), delta=1e-10
            )

    def test_empty_fabric(self):
        """
        Test that an empty fabric is rejected.
        """
        with self.assertRaises(ParameterError):
            WeightedFabric([], 2)

    def test_dimension_mismatch(self):
        """
        Test that a leaf off the root dimension is rejected.
        """
        with self.assertRaises(DimensionMismatchError):
            WeightedFabric([(identity_map(3), self.attract)], 3)

    def test_combine_weighted(self):
        """
        Test that the combined spec solves to the fabric's root generator.
        """
        spec, energy = combine_weighted([(identity_map(2), self.attract)], 2)
        metric, force = spec.evaluate(self.q, self.qd)
        expected = self.attract.generator.h2(self.q, self.qd)
        np.testing.assert_allclose(np.linalg.solve(metric, force), expected)
        self.assertEqual(energy.dim, 2)


if __name__ == "__main__":
    unittest.main()
