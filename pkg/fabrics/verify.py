"""
Property suites run by ``fabrics verify``.

Each suite evaluates properties at seeded random states and returns a pandas table
with one row per property: the worst observed deviation, its tolerance and the
state where it occurred.
"""

import logging
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from .energization import (
    commutation_check,
    energize,
    projector_from_metric,
)
from .energy import (
    EnergyLagrangian,
    FinslerEnergy,
    MetricEnergy,
    el_terms_fd_oracle,
    hamiltonian_rate,
    make_builtin_energy,
)
from .exceptions import ParameterError
from .experiments import LAYERS, registry_config, registry_document
from .config_schema import ExperimentConfig, apply_overrides
from .forcing import potential_force, total_energy_rate
from .geometry import make_builtin_geometry
from .kinematics import PlanarArm, end_effector_map, polar_map
from .numdiff import central_gradient
from .sim import rk4_rollout
from .spec_core import (
    Spec,
    compose,
    identity_map,
    linear_map,
    pullback,
    spec_sum,
    to_canonical,
    tree_resolve,
    TransformTree,
)
from .system import FabricSystem

SUITES = ("algebra", "energies", "energization", "speed")
STATES = 100
SCALINGS = (0.5, 2.0, 3.7)
SEED = 20240101

Row = Dict[str, object]


def _row(
    name: str, deviations: Iterable[Tuple[float, object]], tolerance: float
) -> Row:
    worst, state = 0.0, None
    for deviation, where in deviations:
        deviation = float("inf") if np.isnan(deviation) else float(deviation)
        if state is None or deviation > worst:
            worst, state = deviation, where
    passed = bool(worst <= tolerance)
    if not passed:
        logging.warning(
            f"Property '{name}' failed: deviation {worst:.3e} > {tolerance:.1e}"
        )
    return {
        "property": name,
        "passed": passed,
        "max_deviation": float(worst),
        "tolerance": tolerance,
        "state": "" if state is None else repr(state),
    }


def _relative(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    gap = np.linalg.norm(np.asarray(a) - np.asarray(b))
    return float(gap / max(np.linalg.norm(b), floor))


def random_metric_energy(rng: np.random.Generator, dim: int = 2) -> MetricEnergy:
    """
    Random Finsler energy 1/2 xd^T G(x) xd with G = A(x)^T A(x) + I and A affine in x.
    """
    base = rng.normal(size=(dim, dim))
    slopes = 0.3 * rng.normal(size=(dim, dim, dim))

    def factor(x):
        return base + np.einsum("k,kij->ij", x, slopes)

    def metric(x):
        a = factor(x)
        return a.T @ a + np.eye(dim)

    def metric_grad(x):
        a = factor(x)
        return np.einsum("kji,jl->kil", slopes, a) + np.einsum("ji,kjl->kil", a, slopes)

    return MetricEnergy(dim, metric, metric_grad, name="random_metric")


def _spd(rng: np.random.Generator, dim: int) -> np.ndarray:
    a = rng.normal(size=(dim, dim))
    return a @ a.T + np.eye(dim)


def _point_states(
    rng: np.random.Generator, count: int = STATES, clearance: float = 1.3
):
    """Random interior states of the layered point-mass experiments."""
    states = []
    while len(states) < count:
        q = rng.uniform(-3.5, 3.5, size=2)
        if np.linalg.norm(q) < clearance:
            continue
        states.append((q, rng.normal(size=2)))
    return states


# algebra


def _random_spec(rng: np.random.Generator, dim: int) -> Spec:
    metric = _spd(rng, dim)
    weights = rng.normal(size=(dim, dim))
    return Spec(
        dim,
        lambda x, xd: metric + 0.1 * np.diag(np.tanh(x)) @ np.diag(np.tanh(x)),
        lambda x, xd: weights @ np.sin(x) + 0.5 * xd * (xd @ xd),
    )


def algebra_suite(rng: np.random.Generator) -> List[Row]:
    """Pullback linearity, composition, canonical form and tree resolution."""
    rows = []
    arm = PlanarArm()
    a, b = _random_spec(rng, 2), _random_spec(rng, 2)
    ee = end_effector_map(arm)
    states = [
        (rng.uniform(-1.5, 1.5, size=3), rng.normal(size=3)) for _ in range(STATES)
    ]

    def linearity():
        left = pullback(ee, spec_sum(a, b))
        right = spec_sum(pullback(ee, a), pullback(ee, b))
        for q, qd in states:
            (m1, f1), (m2, f2) = left.evaluate(q, qd), right.evaluate(q, qd)
            yield max(_relative(m1, m2), _relative(f1, f2)), (q, qd)

    rows.append(_row("pullback distributes over sums", linearity(), 1e-10))

    shift = linear_map(np.array([[2.0, 0.5], [0.0, 1.5]]), np.array([0.3, -0.2]))

    def composition():
        sequential = pullback(ee, pullback(shift, a))
        composed = pullback(compose(shift, ee), a)
        for q, qd in states:
            (m1, f1), (m2, f2) = sequential.evaluate(q, qd), composed.evaluate(q, qd)
            yield max(_relative(m1, m2), _relative(f1, f2)), (q, qd)

    rows.append(_row("pullback respects composition", composition(), 1e-10))

    def canonical():
        canon = to_canonical(a)
        for q, qd in states[:STATES]:
            x, xd = q[:2], qd[:2]
            metric, force = a.evaluate(x, xd)
            yield _relative(metric @ canon.acceleration(x, xd), -force), (x, xd)

    rows.append(_row("canonical form solves M xdd + f = 0", canonical(), 1e-10))

    def resolution():
        leaves = (
            (ee, a),
            (compose(shift, ee), b),
            (identity_map(3), _random_spec(rng, 3)),
        )
        tree = TransformTree(3, leaves)
        resolved = tree_resolve(tree)
        for q, qd in states:
            m1, f1 = resolved.evaluate(q, qd)
            m2, f2 = np.zeros((3, 3)), np.zeros(3)
            for task_map, leaf in tree.leaves:
                m, f = pullback(task_map, leaf).evaluate(q, qd)
                m2, f2 = m2 + m, f2 + f
            yield max(_relative(m1, m2), _relative(f1, f2)), (q, qd)

    rows.append(_row("tree resolution sums leaf pullbacks", resolution(), 1e-10))
    return rows


# energies


def _annulus(rng, low, high):
    radius = rng.uniform(low, high)
    angle = rng.uniform(-np.pi, np.pi)
    return radius * np.array([np.cos(angle), np.sin(angle)])


# samplers avoid singular regions and steep switch bands
ENERGY_STATES: Dict[str, Tuple[Dict, Callable]] = {
    "euclidean": ({"lam": 1.5, "dim": 2}, lambda rng: rng.uniform(-3, 3, size=2)),
    "barrier_scaled": ({"lam": 0.25}, lambda rng: rng.uniform(0.2, 3.0, size=1)),
    "chomp_like": ({"k": 0.5}, lambda rng: _annulus(rng, 1.3, 4.0)),
    "directional": ({}, lambda rng: _annulus(rng, 1.3, 4.0)),
    "radial_switch": ({}, lambda rng: _annulus(rng, 0.5, 4.0)),
    "vortex_zone": (
        {"center": [0.0, 0.0], "radius": 1.0},
        lambda rng: _annulus(rng, 0.2, 0.8),
    ),
    "priority_radial": ({}, lambda rng: rng.uniform(-3, 3, size=2)),
    "height_decay": ({}, lambda rng: rng.uniform(-0.5, 2.0, size=2)),
    "horizontal_gaussian": (
        {"goal": [1.0, 0.0]},
        lambda rng: rng.uniform(0.0, 2.0, size=2),
    ),
}


def _energy_state(kind: str, rng: np.random.Generator):
    x = ENERGY_STATES[kind][1](rng)
    xd = rng.normal(size=x.size)
    if kind == "barrier_scaled":
        xd = -np.abs(xd) - 0.1
    return x, xd


def energies_suite(rng: np.random.Generator) -> List[Row]:
    """Oracle equivalence, Finsler identities and generator homogeneity."""
    rows = []
    for kind, (params, _) in ENERGY_STATES.items():
        energy = make_builtin_energy(kind, params)

        def oracle(energy=energy, kind=kind):
            for _ in range(STATES):
                x, xd = _energy_state(kind, rng)
                metric, force = energy.el_terms(x, xd)
                fd_metric, fd_force = el_terms_fd_oracle(energy, x, xd)
                scale = max(np.abs(metric).max(), np.abs(force).max(), 1.0)
                gap = max(
                    np.abs(metric - fd_metric).max(), np.abs(force - fd_force).max()
                )
                # tolerance is max(1e-5 abs, 1e-4 rel); report the ratio to it
                yield gap / max(1e-5, 1e-4 * scale), (x, xd)

        rows.append(_row(f"oracle equivalence: {kind}", oracle(), 1.0))

        def momentum(energy=energy, kind=kind):
            for _ in range(STATES):
                x, xd = _energy_state(kind, rng)
                fd = central_gradient(lambda v: energy.value(x, v), xd)
                yield _relative(energy.momentum(x, xd), fd), (x, xd)

        rows.append(
            _row(f"momentum matches finite differences: {kind}", momentum(), 1e-6)
        )

        if isinstance(energy, FinslerEnergy):

            def legendre(energy=energy, kind=kind):
                for _ in range(STATES):
                    x, xd = _energy_state(kind, rng)
                    value = energy.value(x, xd)
                    # p^T xd - L from the momentum, not the Finsler shortcut
                    hamiltonian = EnergyLagrangian.hamiltonian(energy, x, xd)
                    yield abs(hamiltonian - value) / max(abs(value), 1.0), (x, xd)

            def degree_zero(energy=energy, kind=kind):
                for _ in range(STATES):
                    x, xd = _energy_state(kind, rng)
                    metric = energy.el_terms(x, xd)[0]
                    deviation = 0.0
                    for alpha in SCALINGS:
                        scaled = energy.el_terms(x, alpha * xd)[0]
                        deviation = max(deviation, _relative(scaled, metric))
                    yield deviation, (x, xd)

            rows.append(_row(f"Finsler H_e = L_e: {kind}", legendre(), 1e-9))
            rows.append(_row(f"Finsler M_e degree 0: {kind}", degree_zero(), 1e-9))

    rows.append(_row("root generators of layered A-E are HD2", _layered_hd2(rng), 1e-8))
    rows.append(_row("built-in generators are HD2", _builtin_hd2(rng), 1e-8))
    return rows


BUILTIN_GENERATOR_STATES = {
    "zero_baseline": ({}, 2),
    "barrier_gradient": ({}, 2),
    "chomp_derived": ({}, 2),
    "finsler_scaled": ({}, 2),
    "expansion": ({}, 2),
    "limit": ({}, 1),
    "vortex": ({"f": 4.0, "sign": -1.0}, 2),
    "attractor": ({}, 2),
    "redundancy": ({"q0": [0.5, -0.3, 0.2]}, 3),
    "floor_lift": ({}, 2),
    "goal_attract": ({"goal": [1.0, 0.0]}, 2),
}


def _hd2_deviation(h2: Callable, x: np.ndarray, xd: np.ndarray) -> float:
    base = np.asarray(h2(x, xd), dtype=float)
    worst = 0.0
    for alpha in SCALINGS:
        worst = max(worst, _relative(h2(x, alpha * xd), alpha**2 * base))
    return worst


def _builtin_hd2(rng: np.random.Generator):
    for kind, (params, dim) in BUILTIN_GENERATOR_STATES.items():
        generator = make_builtin_geometry(kind, params)
        for _ in range(STATES):
            if dim == 1:
                x = rng.uniform(0.2, 3.0, size=1)
            elif kind in ("barrier_gradient", "chomp_derived", "finsler_scaled"):
                x = _annulus(rng, 1.3, 4.0)
            else:
                x = rng.uniform(-2.0, 2.0, size=dim)
            xd = rng.normal(size=dim)
            yield _hd2_deviation(generator.h2, x, xd), (kind, x, xd)


def _layered_hd2(rng: np.random.Generator):
    for layer in LAYERS:
        system = FabricSystem(registry_config(f"layered_{layer}_fabric"))
        for q, qd in _point_states(rng):
            yield _hd2_deviation(system.fabric.h2, q, qd), (layer, q, qd)


# energization


def energization_suite(rng: np.random.Generator) -> List[Row]:
    """Projector algebra, commutation, conservation and HD2 preservation."""
    rows = []

    def projector():
        for _ in range(STATES):
            metric, xd, r = _spd(rng, 3), rng.normal(size=3), rng.normal(size=3)
            p = projector_from_metric(metric, xd)
            yield max(np.linalg.norm(p @ p - p), abs(xd @ p @ r)), (metric, xd, r)

    rows.append(_row("P_e is idempotent and orthogonal to xd", projector(), 1e-10))

    expansion = make_builtin_geometry("expansion", {"dim": 2})
    euclidean = make_builtin_energy("euclidean", {"lam": 1.0, "dim": 2})

    def commutation():
        for _ in range(STATES):
            q = np.array([rng.uniform(0.5, 3.0), rng.uniform(-np.pi, np.pi)])
            qd = rng.normal(size=2)
            deviation = commutation_check(
                euclidean, expansion.h2, polar_map(), [(q, qd)]
            )
            yield deviation, (q, qd)

    rows.append(
        _row("energize and pullback commute (polar chart)", commutation(), 1e-8)
    )

    energy = random_metric_energy(rng)
    attractor = make_builtin_geometry("attractor", {})
    system = energize(energy, attractor.h2)

    def conservation():
        for _ in range(STATES):
            x, xd = rng.uniform(-2, 2, size=2), rng.normal(size=2)
            rate = hamiltonian_rate(energy, x, xd, system.acceleration(x, xd))
            yield abs(rate) / (1.0 + abs(energy.hamiltonian(x, xd))), (x, xd)

    rows.append(_row("energized system conserves H_e", conservation(), 1e-10))

    def zero_work():
        for _ in range(STATES):
            x, xd = rng.uniform(-2, 2, size=2), rng.normal(size=2)
            zero_work = system.zero_work_acceleration(x, xd)
            yield _relative(zero_work, system.acceleration(x, xd)), (x, xd)

    rows.append(_row("zero-work spec matches the alpha form", zero_work(), 1e-8))

    def hd2():
        for _ in range(STATES):
            x, xd = rng.uniform(-2, 2, size=2), rng.normal(size=2)
            yield _hd2_deviation(system.acceleration, x, xd), (x, xd)

    rows.append(_row("energized geometry stays HD2", hd2(), 1e-8))
    return rows


# speed


def dissipation_config() -> ExperimentConfig:
    """Layered A with eta = 1 on the system energy and no registered priority."""
    document = apply_overrides(
        registry_document("layered_A"),
        [
            "speed_control.eta_fixed=1.0",
            "speed_control.use_system_energy=true",
            "forcing.register_priority_energy=false",
        ],
    )
    return ExperimentConfig.from_document(document)


def _rates(system: FabricSystem, horizon: float, q0, qd0):
    record = rk4_rollout(system.acceleration, q0, qd0, system.config.dt, horizon)
    for q, qd, beta in zip(record.positions, record.velocities, _betas(system, record)):
        qdd = system.acceleration(q, qd)
        rate = total_energy_rate(system.energy, system.potential, q, qd, qdd)
        yield rate, beta, q, qd


def _betas(system: FabricSystem, record):
    for q, qd in zip(record.positions, record.velocities):
        yield system.observe(q, qd)["beta"]


def speed_suite(rng: np.random.Generator, horizon: float = 4.0) -> List[Row]:
    """Total-energy dissipation along forced rollouts."""
    rows = []
    start = np.array([2.0, 3.0])

    system = FabricSystem(dissipation_config())

    def matches():
        angle = rng.uniform(-np.pi, np.pi)
        qd0 = 1.5 * np.array([np.cos(angle), np.sin(angle)])
        for rate, beta, q, qd in _rates(system, horizon, start, qd0):
            expected = -beta * float(qd @ qd)
            yield abs(rate - expected) / (abs(expected) + 1e-12), (q, qd)

    rows.append(_row("d/dt(H_e + psi) = -beta |qd|^2 with eta = 1", matches(), 1e-6))

    def dissipative():
        for layer in ("A", "C"):
            forced = FabricSystem(registry_config(f"layered_{layer}"))
            angle = rng.uniform(-np.pi, np.pi)
            qd0 = 1.5 * np.array([np.cos(angle), np.sin(angle)])
            for rate, _, q, qd in _rates(forced, horizon, start, qd0):
                pull = np.linalg.norm(potential_force(forced.potential, q))
                scale = 1.0 + float(qd @ qd) + pull
                yield max(rate, 0.0) / scale, (layer, q, qd)

    rows.append(_row("d/dt(H_e + psi) <= 0 along forced rollouts", dissipative(), 1e-9))
    return rows


SUITE_FUNCTIONS = {
    "algebra": algebra_suite,
    "energies": energies_suite,
    "energization": energization_suite,
    "speed": speed_suite,
}


def run_suite(name: str, seed: Optional[int] = None) -> pd.DataFrame:
    """
    Runs one property suite.

    :return: DataFrame with columns property, passed, max_deviation, tolerance, state.
    :raises ParameterError: For unknown suite names.
    """
    if name not in SUITE_FUNCTIONS:
        raise ParameterError(f"Unknown suite '{name}', expected one of {SUITES}")
    rng = np.random.default_rng(SEED if seed is None else seed)
    logging.info(f"Running the {name} suite")
    return pd.DataFrame(SUITE_FUNCTIONS[name](rng))
