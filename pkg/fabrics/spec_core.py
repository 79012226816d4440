"""
Specs, the spec algebra and star-shaped transform trees.

A spec is a pair (M, f) standing for the differential equation M xdd + f = 0. This
module provides the summation and pullback operations that combine specs, the
canonical form xdd = -M^-1 f, task maps with their Jacobians and curvature terms,
and the resolution of a star-shaped transform tree into one root spec.

All types are frozen dataclasses whose callables are pure, so a spec, map or tree
can be evaluated from several threads at once.
"""

from dataclasses import dataclass, field
import logging
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import linalg

from .exceptions import DimensionMismatchError, EvaluationError, ParameterError
from .numdiff import central_jacobian, step_size

DEFAULT_COND_CAP = 1e12
RIDGE_SCALE = 1e-10
ASYMMETRY_WARNING = 1e-8

Terms = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class Spec:
    """
    A spec (M, f) on a ``dim``-dimensional space.

    :param dim: Dimension of the space.
    :param metric: Callable (x, xd) -> M of shape (dim, dim).
    :param force: Callable (x, xd) -> f of shape (dim,).
    :param terms: Optional callable (x, xd) -> (M, f) evaluating both at once;
        when given it is used by :meth:`evaluate`.
    """

    dim: int
    metric: Callable
    force: Callable
    terms: Optional[Callable] = field(default=None, compare=False)

    @classmethod
    def from_terms(cls, dim: int, terms: Callable) -> "Spec":
        """Builds a spec from a joint (x, xd) -> (M, f) evaluator."""
        return cls(
            dim=dim,
            metric=lambda x, xd: terms(x, xd)[0],
            force=lambda x, xd: terms(x, xd)[1],
            terms=terms,
        )

    def evaluate(self, x: np.ndarray, xd: np.ndarray) -> Terms:
        """
        Evaluates metric and force at one state.

        :return: Tuple (M, f) as float arrays.
        :rtype: Tuple[np.ndarray, np.ndarray]
        """
        if self.terms is not None:
            metric, force = self.terms(x, xd)
        else:
            metric, force = self.metric(x, xd), self.force(x, xd)
        return np.asarray(metric, dtype=float), np.asarray(force, dtype=float)

    def symmetry_defect(self, x: np.ndarray, xd: np.ndarray) -> float:
        """Maximum absolute element asymmetry of the metric at (x, xd)."""
        return metric_asymmetry(self.metric(x, xd))


@dataclass(frozen=True)
class CanonicalSpec:
    """
    Canonical view (M, a) of a spec with a = -M^-1 f.

    :param dim: Dimension of the space.
    :param metric: Callable (x, xd) -> M.
    :param acceleration: Callable (x, xd) -> a.
    """

    dim: int
    metric: Callable
    acceleration: Callable

    def to_spec(self) -> Spec:
        """Back to force form (M, -M a)."""

        def terms(x, xd):
            metric = np.asarray(self.metric(x, xd), dtype=float)
            return metric, -metric @ np.asarray(self.acceleration(x, xd), dtype=float)

        return Spec.from_terms(self.dim, terms)


@dataclass(frozen=True)
class TaskMap:
    """
    Differentiable map x = phi(q) with Jacobian J(q) and curvature term Jdot(q, qd) qd.

    :param domain_dim: Dimension of q.
    :param codomain_dim: Dimension of x.
    :param map: Callable q -> x.
    :param jacobian: Callable q -> J of shape (codomain_dim, domain_dim).
    :param curvature: Callable (q, qd) -> Jdot qd of shape (codomain_dim,).
    :param name: Label used in diagnostics.
    :param batched: True when the callables broadcast over a leading batch axis.
    """

    domain_dim: int
    codomain_dim: int
    map: Callable
    jacobian: Callable
    curvature: Callable
    name: str = ""
    batched: bool = False

    def evaluate(self, q: np.ndarray, qd: np.ndarray):
        """
        Evaluates the map and its derivatives at one root state.

        :return: Tuple (x, J, xd, Jdot qd).
        """
        x = np.atleast_1d(np.asarray(self.map(q), dtype=float))
        jac = np.asarray(self.jacobian(q), dtype=float).reshape(
            self.codomain_dim, self.domain_dim
        )
        curv = np.atleast_1d(np.asarray(self.curvature(q, qd), dtype=float))
        return x, jac, jac @ qd, curv

    def evaluate_batch(self, q: np.ndarray, qd: np.ndarray):
        """
        Evaluates the map and its derivatives at a batch of root states.

        :param q: Root positions of shape (B, n).
        :param qd: Root velocities of shape (B, n).
        :return: Tuple (x, J, xd, Jdot qd) of shapes (B, m), (B, m, n), (B, m)
            and (B, m).
        :raises ParameterError: If the map has no batched form.
        """
        if not self.batched:
            raise ParameterError(f"Task map '{self.name}' has no batched form")
        count = q.shape[0]
        m, n = self.codomain_dim, self.domain_dim
        x = np.broadcast_to(np.asarray(self.map(q), dtype=float), (count, m))
        jac = np.broadcast_to(
            np.asarray(self.jacobian(q), dtype=float), (count, m, n)
        )
        curv = np.broadcast_to(
            np.asarray(self.curvature(q, qd), dtype=float), (count, m)
        )
        return x, jac, (jac @ qd[..., None])[..., 0], curv


@dataclass(frozen=True)
class TransformTree:
    """
    Star-shaped transform tree: leaf specs attached to the root through task maps.

    :param root_dim: Dimension of the root configuration space.
    :param leaves: List of (TaskMap from root, leaf Spec) pairs.
    """

    root_dim: int
    leaves: Tuple[Tuple[TaskMap, Spec], ...]

    def __post_init__(self):
        object.__setattr__(self, "leaves", tuple(self.leaves))
        for task_map, leaf in self.leaves:
            if task_map.domain_dim != self.root_dim:
                raise DimensionMismatchError(
                    f"Task map '{task_map.name}' has domain {task_map.domain_dim}, "
                    f"root has {self.root_dim}"
                )
            if task_map.codomain_dim != leaf.dim:
                raise DimensionMismatchError(
                    f"Task map '{task_map.name}' codomain {task_map.codomain_dim} "
                    f"does not match leaf spec dimension {leaf.dim}"
                )


def spec_sum(a: Spec, b: Spec) -> Spec:
    """
    Sums two specs: (M_a + M_b, f_a + f_b).

    :raises DimensionMismatchError: If the dimensions differ.
    """
    if a.dim != b.dim:
        raise DimensionMismatchError(f"Cannot sum specs of dims {a.dim} and {b.dim}")

    def terms(x, xd):
        metric_a, force_a = a.evaluate(x, xd)
        metric_b, force_b = b.evaluate(x, xd)
        return metric_a + metric_b, force_a + force_b

    return Spec.from_terms(a.dim, terms)


def pullback_terms(task_map: TaskMap, leaf: Spec, q: np.ndarray, qd: np.ndarray):
    """Pulled-back (J^T M J, J^T (f + M Jdot qd)) of one leaf at a root state."""
    x, jac, xd, curv = task_map.evaluate(q, qd)
    metric, force = leaf.evaluate(x, xd)
    return jac.T @ metric @ jac, jac.T @ (force + metric @ curv)


def pullback(task_map: TaskMap, s: Spec) -> Spec:
    """
    Pulls a spec back through a task map.

    The metric multiplies the curvature term: f~ = J^T (f + M Jdot qd).

    :raises DimensionMismatchError: If the spec does not live on the map's codomain.
    """
    if s.dim != task_map.codomain_dim:
        raise DimensionMismatchError(
            f"Spec dim {s.dim} does not match codomain {task_map.codomain_dim}"
        )
    return Spec.from_terms(
        task_map.domain_dim, lambda q, qd: pullback_terms(task_map, s, q, qd)
    )


def tree_resolve(tree: TransformTree) -> Spec:
    """
    Resolves a star-shaped tree into the root spec sum_i pullback(phi_i, spec_i).

    :raises ParameterError: If the tree has no leaves.
    """
    if not tree.leaves:
        raise ParameterError("Cannot resolve an empty transform tree")

    def terms(q, qd):
        metric = np.zeros((tree.root_dim, tree.root_dim))
        force = np.zeros(tree.root_dim)
        for task_map, leaf in tree.leaves:
            leaf_metric, leaf_force = pullback_terms(task_map, leaf, q, qd)
            metric += leaf_metric
            force += leaf_force
        return metric, force

    return Spec.from_terms(tree.root_dim, terms)


def metric_asymmetry(metric: np.ndarray) -> float:
    """Largest absolute element of M - M^T, zero for an empty metric."""
    metric = np.asarray(metric, dtype=float)
    return float(np.max(np.abs(metric - metric.T))) if metric.size else 0.0


def solve_metric(
    metric: np.ndarray,
    rhs: np.ndarray,
    cond_cap: float = DEFAULT_COND_CAP,
    state: Optional[dict] = None,
) -> np.ndarray:
    """
    Solves M a = rhs with a symmetric solver on (M + M^T)/2.

    When the condition number exceeds ``cond_cap`` a ridge eps = 1e-10 * trace(M)/dim
    is added to the diagonal.

    :raises EvaluationError: On non-finite inputs or outputs.
    """
    metric = np.asarray(metric, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if not (np.all(np.isfinite(metric)) and np.all(np.isfinite(rhs))):
        raise EvaluationError("Non-finite metric or force", state)
    asymmetry = metric_asymmetry(metric)
    if asymmetry > ASYMMETRY_WARNING:
        logging.warning(f"Metric asymmetry {asymmetry:.3e} above tolerance")
    sym = 0.5 * (metric + metric.T)
    cond = np.linalg.cond(sym)
    if not np.isfinite(cond) or cond > cond_cap:
        ridge = RIDGE_SCALE * max(np.trace(sym), 0.0) / sym.shape[0]
        if ridge <= 0.0:
            raise EvaluationError("Singular metric with non-positive trace", state)
        logging.debug(f"Regularized solve: cond={cond:.3e}, ridge={ridge:.3e}")
        sym = sym + ridge * np.eye(sym.shape[0])
    try:
        solution = linalg.solve(sym, rhs, assume_a="sym")
    except (linalg.LinAlgError, ValueError) as e:
        raise EvaluationError(f"Metric solve failed: {e}", state) from e
    if not np.all(np.isfinite(solution)):
        raise EvaluationError("Non-finite acceleration", state)
    return solution


def solve_metric_batch(
    metric: np.ndarray,
    rhs: np.ndarray,
    cond_cap: float = DEFAULT_COND_CAP,
    state: Optional[dict] = None,
):
    """
    Solves M_b a_b = rhs_b for a stack of metrics, one eigendecomposition each.

    Follows :func:`solve_metric` state by state: the symmetric part is solved, and
    a metric whose condition number exceeds ``cond_cap`` gets the ridge
    1e-10 * trace(M)/dim. All columns of ``rhs`` share one decomposition.

    :param metric: Metrics of shape (B, n, n).
    :param rhs: Right-hand sides of shape (B, n, k).
    :return: Tuple (solutions of shape (B, n, k), asymmetry of shape (B,)).
    :raises EvaluationError: If any state has non-finite values or a singular
        metric with non-positive trace.
    """
    metric = np.asarray(metric, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if not (np.all(np.isfinite(metric)) and np.all(np.isfinite(rhs))):
        raise EvaluationError("Non-finite metric or force", state)
    transposed = np.swapaxes(metric, -1, -2)
    asymmetry = np.max(np.abs(metric - transposed), axis=(-2, -1))
    if np.any(asymmetry > ASYMMETRY_WARNING):
        logging.warning(f"Metric asymmetry {asymmetry.max():.3e} above tolerance")
    sym = 0.5 * (metric + transposed)
    values, vectors = np.linalg.eigh(sym)
    magnitudes = np.abs(values)
    smallest, largest = magnitudes.min(axis=-1), magnitudes.max(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(smallest > 0.0, largest / smallest, np.inf)
    trace = np.trace(sym, axis1=-2, axis2=-1)
    capped = cond > cond_cap
    ridge = np.where(capped, RIDGE_SCALE * np.maximum(trace, 0.0) / sym.shape[-1], 0.0)
    if np.any(capped & (ridge <= 0.0)):
        raise EvaluationError("Singular metric with non-positive trace", state)
    if np.any(capped):
        logging.debug(f"Regularized {int(np.sum(capped))} solves in a batch")
    coefficients = (np.swapaxes(vectors, -1, -2) @ rhs) / (
        values + ridge[:, None]
    )[..., None]
    solution = vectors @ coefficients
    if not np.all(np.isfinite(solution)):
        raise EvaluationError("Non-finite acceleration", state)
    return solution, asymmetry


def to_canonical(
s: Spec, cond_cap: float = DEFAULT_COND_CAP) -> CanonicalSpec:
    """
    Canonical form: acceleration solves M a = -f.

    :param s: Spec in force form.
    :param cond_cap: Condition-number cap triggering the ridge-regularized solve.
    """

    def acceleration(x, xd):
        metric, force = s.evaluate(x, xd)
        return solve_metric(metric, -force, cond_cap, {"x": x, "xd": xd})

    return CanonicalSpec(dim=s.dim, metric=s.metric, acceleration=acceleration)


def identity_map(dim: int, name: str = "identity") -> TaskMap:
    """Identity task map on R^dim."""
    eye = np.eye(dim)
    return TaskMap(
        dim,
        dim,
        lambda q: np.array(q, dtype=float),
        lambda q: eye,
        lambda q, qd: np.zeros(dim),
        name,
        batched=True,
    )


def linear_map(
    matrix: np.ndarray, offset: Optional[np.ndarray] = None, name: str = "linear"
) -> TaskMap:
    """Affine task map x = A q + b (zero curvature)."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    rows, cols = matrix.shape
    offset = np.zeros(rows) if offset is None else np.asarray(offset, dtype=float)
    return TaskMap(
        cols,
        rows,
        lambda q: np.asarray(q, dtype=float) @ matrix.T + offset,
        lambda q: matrix,
        lambda q, qd: np.zeros(rows),
        name,
        batched=True,
    )


def finite_difference_task_map(
    domain_dim: int, codomain_dim: int, fn: Callable, name: str = "fd"
) -> TaskMap:
    """
    Adapter turning any smooth map into a TaskMap by central differences.

    The curvature is the derivative of J along qd, contracted with qd.
    """

    def jacobian(q):
        return np.asarray(central_jacobian(fn, q), dtype=float).reshape(
            codomain_dim, domain_dim
        )

    def curvature(q, qd):
        q = np.asarray(q, dtype=float)
        h = step_size(q)
        jdot = (jacobian(q + h * qd) - jacobian(q - h * qd)) / (2 * h)
        return jdot @ qd

    return TaskMap(domain_dim, codomain_dim, fn, jacobian, curvature, name)


def jacobian_at(task_map: TaskMap, q: np.ndarray) -> np.ndarray:
    """
    Jacobian of a map with the batch axes of ``q`` in front.

    A Jacobian that does not depend on q is broadcast over the batch.
    """
    shape = (task_map.codomain_dim, task_map.domain_dim)
    jac = np.asarray(task_map.jacobian(q), dtype=float)
    if jac.size == shape[0] * shape[1]:
        jac = jac.reshape(shape)
    return np.broadcast_to(jac, np.shape(q)[:-1] + shape)


def compose(outer: TaskMap, inner: TaskMap, name: str = "") -> TaskMap:
    """
    Star-shaped equivalent of the path root -inner-> y -outer-> x.

    The composition is batched when both maps are.

    :raises DimensionMismatchError: If inner's codomain is not outer's domain.
    """
    if inner.codomain_dim != outer.domain_dim:
        raise DimensionMismatchError(
            f"Cannot compose '{outer.name}' after '{inner.name}': "
            f"{inner.codomain_dim} != {outer.domain_dim}"
        )

    def jacobian(q):
        return jacobian_at(outer, inner.map(q)) @ jacobian_at(inner, q)

    def curvature(q, qd):
        q = np.asarray(q, dtype=float)
        y = np.asarray(inner.map(q), dtype=float)
        jac_in = jacobian_at(inner, q)
        yd = (jac_in @ np.asarray(qd, dtype=float)[..., None])[..., 0]
        curv_in = np.atleast_1d(np.asarray(inner.curvature(q, qd), dtype=float))
        carried = (jacobian_at(outer, y) @ curv_in[..., None])[..., 0]
        return carried + np.atleast_1d(outer.curvature(y, yd))

    return TaskMap(
        inner.domain_dim,
        outer.codomain_dim,
        lambda q: outer.map(inner.map(q)),
        jacobian,
        curvature,
        name or f"{outer.name}∘{inner.name}",
        batched=outer.batched and inner.batched,
    )
