"""
Module to test the experiment registry, rollout planning and tree expansion.
"""

import unittest

import numpy as np

from fabrics.exceptions import ConfigError
from fabrics.experiments import (
    LAYERS,
    experiment_names,
    layered_document,
    registry_config,
    registry_document,
    rollout_plans,
    sample_goals,
)
from fabrics.system import FabricSystem, expand_tree, make_arm


class RegistryTest(unittest.TestCase):
    """
    Test suite for the experiment registry.
    """

    def test_layers_extend_previous_layers(self):
        """
        Test that each layer's tree starts with the previous layer's tree unchanged.
        """
        previous = []
        counts = []
        for layer in LAYERS:
            tree = layered_document(layer)["tree"]
            self.assertEqual(tree[: len(previous)], previous)
            counts.append(len(tree))
            previous = tree
        self.assertEqual(counts, [1, 5, 6, 7, 8])

    def test_fabric_documents_are_unforced(self):
        """
        Test that the bare-fabric documents carry no forcing or speed control.
        """
        document = registry_document("layered_C_fabric")
        self.assertEqual(document["experiment"]["variant"], "fabric")
        self.assertIsNone(document["forcing"])
        self.assertIsNone(document["speed_control"])

    def test_registry_returns_fresh_documents(self):
        """
        Test that editing a returned document does not leak into the registry.
        """
        registry_document("layered_A")["tree"].clear()
        self.assertEqual(len(registry_document("layered_A")["tree"]), 1)

    def test_fabric_barriers_are_steeper(self):
        """
        Test that the bare-fabric layers pair every barrier with a quartic energy
        while the forced layers keep the linear one.
        """
        for layer in "BCDE":
            fabric = registry_document(f"layered_{layer}_fabric")["tree"]
            forced = registry_document(f"layered_{layer}")["tree"]
            for plain, steep in zip(forced, fabric):
                if plain.get("energy", {}).get("kind") != "barrier_scaled":
                    self.assertEqual(plain, steep)
                    continue
                with self.subTest(layer=layer, component=plain["name"]):
                    self.assertEqual(steep["energy"]["power"], 4.0)
                    self.assertNotIn("power", plain["energy"])

    def test_commutation_leaf_is_polar(self):
        """
        Test that the commutation tree maps a Cartesian root onto a polar leaf.
        """
        system = FabricSystem(registry_config("commutation_polar"))
        leaf = system.leaves[0]
        self.assertEqual(leaf.task_map.name, "cartesian_to_polar")
        q = np.array([0.0, 2.0])
        np.testing.assert_allclose(leaf.task_map.map(q), [2.0, np.pi / 2])

    def test_arm_documents(self):
        """
        Test the redundancy weight and the floor barrier of the arm documents.
        """
        reaching = registry_document("arm_goal_reaching")["tree"]
        redundancy = [c for c in reaching if c["name"] == "redundancy"][0]
        self.assertEqual(redundancy["geometry"]["lam"], 10.0)
        self.assertEqual(redundancy["energy"]["lam"], 2.0)
        unresolved = registry_document("arm_goal_reaching_no_redundancy")["tree"]
        self.assertEqual(len(unresolved), len(reaching) - 1)

        shaping = registry_document("arm_behavior_shaping")
        names = [c["name"] for c in shaping["tree"]]
        self.assertIn("ee_floor", names)
        self.assertEqual(shaping["integration"]["initial_conditions"]["height"], 0.2)
        self.assertEqual(shaping["speed_control"]["alpha_beta"], 5.0)

    def test_unknown_names(self):
        """
        Test that unknown experiments and layers are rejected.
        """
        with self.assertRaises(ConfigError):
            registry_document("layered_F")
        with self.assertRaises(ConfigError):
            layered_document("F")

    def test_names(self):
        """
        Test the registered experiment names.
        """
        names = experiment_names()
        self.assertEqual(len(names), 15)
        self.assertIn("path_consistency", names)
        self.assertIn("arm_behavior_shaping", names)


class RolloutPlanTest(unittest.TestCase):
    """
    Test suite for rollout planning.
    """

    def test_radial_fan(self):
        """
        Test 14 particles from (2, 3) at speed 1.5 in distinct directions.
        """
        plans = rollout_plans(registry_config("layered_A"))
        self.assertEqual(len(plans), 14)
        for plan in plans:
            np.testing.assert_allclose(plan.q0, [2.0, 3.0])
            self.assertAlmostEqual(float(np.linalg.norm(plan.qd0)), 1.5)
            self.assertEqual(plan.horizon, 16.0)
        self.assertEqual(len({plan.label for plan in plans}), 14)

    def test_line_starts(self):
        """
        Test 3 generators x 6 starts x 2 speeds with horizons bounded by the arc length.
        """
        plans = rollout_plans(registry_config("path_consistency"))
        self.assertEqual(len(plans), 36)
        for plan in plans:
            speed = float(np.linalg.norm(plan.qd0))
            self.assertAlmostEqual(plan.horizon, min(20.0, 7.0 / speed))
            self.assertEqual(plan.meta["speed"], speed)

    def test_polar_fan(self):
        """
        Test 8 Cartesian starting states on a circle, each run in both orders.
        """
        plans = rollout_plans(registry_config("commutation_polar"))
        self.assertEqual(len(plans), 16)
        self.assertEqual(sorted({plan.order for plan in plans}), ["leaf", "root"])
        for plan in plans:
            self.assertAlmostEqual(float(np.linalg.norm(plan.q0)), 2.0)
            self.assertAlmostEqual(float(np.linalg.norm(plan.qd0)), 0.15)
        root = [plan for plan in plans if plan.order == "root"]
        leaf = [plan for plan in plans if plan.order == "leaf"]
        for a, b in zip(root, leaf):
            np.testing.assert_array_equal(a.q0, b.q0)
            np.testing.assert_array_equal(a.qd0, b.qd0)
        angles = [np.arctan2(plan.q0[1], plan.q0[0]) for plan in root]
        np.testing.assert_allclose([angles[0], angles[-1]], [-0.9, 0.9])

    def test_goal_sequences_are_not_planned(self):
        """
        Test that arm goal sequences are rejected by the planner.
        """
        with self.assertRaises(ConfigError):
            rollout_plans(registry_config("arm_goal_reaching"))

    def test_seeded_floor_goals(self):
        """
        Test that floor goals are seeded, alternate between the two bands and sit
        at the configured height.
        """
        config = registry_config("arm_behavior_shaping")
        arm = make_arm(config.arm)
        goals = sample_goals(config, arm)
        np.testing.assert_array_equal(goals, sample_goals(config, arm))
        self.assertEqual(goals.shape, (5, 2))
        for index, (x, y) in enumerate(goals):
            low, high = ((0.8, 1.3), (2.3, 2.7))[index % 2]
            self.assertTrue(low <= x <= high)
            self.assertAlmostEqual(y, 0.2)


class SystemAssemblyTest(unittest.TestCase):
    """
    Test suite for vortex expansion and system assembly.
    """

    def test_vortex_expansion(self):
        """
        Test that the vortex field expands into seeded vortex leaves.
        """
        config = registry_config("layered_D")
        rng = np.random.default_rng(config.seed)
        components, draws = expand_tree(config.tree, rng)
        again, _ = expand_tree(config.tree, np.random.default_rng(config.seed))
        self.assertEqual(components, again)
        self.assertEqual(len(draws), 8)
        self.assertEqual(len(components), 14)
        for draw in draws:
            self.assertTrue(2.0 <= draw["f"] <= 10.0)
            self.assertIn(draw["sign"], (-1.0, 1.0))

    def test_forced_system_registers_priority(self):
        """
        Test that the forcing priority joins the fabric as an extra leaf.
        """
        system = FabricSystem(registry_config("layered_A"))
        self.assertEqual(len(system.leaves), 1)
        self.assertEqual(len(system.fabric.leaves), 2)
        self.assertIsNotNone(system.convergence_monitor())

    def test_batched_systems(self):
        """
        Test which shipped systems evaluate particles as one batch.
        """
        for name in ("layered_A", "layered_E", "layered_E_fabric"):
            with self.subTest(experiment=name):
                self.assertTrue(FabricSystem(registry_config(name)).batched)
        goal = np.array([1.0, 0.2])
        config = registry_config("arm_behavior_shaping")
        self.assertTrue(FabricSystem(config, goal=goal).batched)
        self.assertFalse(FabricSystem(registry_config("commutation_polar")).batched)

    def test_arm_system_needs_goal(self):
        """
        Test that an arm system resolves its goal placeholders.
        """
        system = FabricSystem(
            registry_config("arm_goal_reaching"), goal=np.array([1.0, 1.5])
        )
        q0 = np.asarray(system.arm.q0)
        qdd = system.acceleration(q0, np.zeros(3))
        self.assertEqual(qdd.shape, (3,))
        self.assertTrue(np.all(np.isfinite(qdd)))


if __name__ == "__main__":
    unittest.main()
