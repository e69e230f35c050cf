#
# @copyright Copyright (c) 2026, The mongeampere-toolkit authors
#
# @license GNU AGPL version 3 or any later version
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU Affero General Public License as
# published by the Free Software Foundation, either version 3 of the
# License, or (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Affero General Public License for more details.
#
# You should have received a copy of the GNU Affero General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.
#

"""
Module for quadratic cost optimal transport between weighted point clouds.

Costs are ½|X - Y|² per unit mass; the Wasserstein metric uses the unhalved
squared distance, so W2 = √(2·cost).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse.csgraph import NegativeCycleError, csgraph_from_dense, maximum_bipartite_matching, shortest_path
from scipy.spatial.distance import cdist

from . import Metrics
from .Exceptions import (InfeasibleError, NoConvergenceError, NotCyclicallyMonotoneError, ParameterError,
                         SpecMismatchError)

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-12
FEASIBILITY_TOLERANCE = 1e-9
MAXIMUM_DIMENSION = 4
MAXIMUM_CYCLE = 6

@dataclass
class PointCloud:
    """
    Weighted points in dimension at most 4.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)

        if self.points.shape[0] != self.weights.size:
            raise SpecMismatchError(f"{self.points.shape[0]} points but {self.weights.size} weights")

        if not 1 <= self.points.shape[1] <= MAXIMUM_DIMENSION:
            raise ParameterError(f"Points must have dimension 1 to {MAXIMUM_DIMENSION}, got {self.points.shape[1]}")

        if not np.all(np.isfinite(self.points)):
            raise ParameterError("Point coordinates must be finite")

        if np.any(self.weights < 0):
            raise ParameterError("Weights must be nonnegative")

        if abs(self.weights.sum() - 1) > WEIGHT_TOLERANCE:
            raise ParameterError(f"Weights must sum to 1, got {self.weights.sum()!r}")

    @classmethod
    def uniform(cls, points):
        """
        Returns the cloud with equal weights on the given points.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))

        return cls(points, np.full(points.shape[0], 1 / points.shape[0]))

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def dimension(self):
        return self.points.shape[1]

    @property
    def isUniform(self):
        return bool(np.all(np.abs(self.weights - 1 / self.size) <= WEIGHT_TOLERANCE))

    def secondMoment(self):
        """
        Returns ½Σ w|X|².
        """
        return float(0.5 * np.sum(self.weights * np.sum(self.points ** 2, axis=1)))

@dataclass
class Assignment:
    """
    One to one map X_j -> Y_permutation[j] and its cost per unit mass.
    """

    x: PointCloud
    y: PointCloud
    permutation: np.ndarray
    totalCost: float

    @property
    def targets(self):
        """
        Returns the image point of every source point.
        """
        return self.y.points[self.permutation]

@dataclass
class TransportPlan:
    """
    Coupling of two clouds with its dual potentials.
    """

    x: PointCloud
    y: PointCloud
    matrix: np.ndarray
    cost: float
    rowPotential: np.ndarray
    columnPotential: np.ndarray
    slackness: float

    def marginalError(self):
        """
        Returns the largest deviation of the plan marginals from the weights.
        """
        return float(max(np.abs(self.matrix.sum(axis=1) - self.x.weights).max(),
                         np.abs(self.matrix.sum(axis=0) - self.y.weights).max()))

    def support(self, threshold=FEASIBILITY_TOLERANCE):
        return self.matrix > threshold

@dataclass
class DiscretePotential:
    """
    Values of a convex function at the source points with the target points as
    its gradients.
    """

    points: np.ndarray
    values: np.ndarray
    gradients: np.ndarray

    def constraintResidual(self):
        """
        Returns the largest violation of φ_j >= φ_i + <Y_i, X_j - X_i>.
        """
        increments = np.einsum('id,ijd->ij', self.gradients, self.points[np.newaxis, :, :] - self.points[:, np.newaxis, :])
        violation = self.values[:, np.newaxis] + increments - self.values[np.newaxis, :]

        return float(max(0.0, violation.max()))

@dataclass
class MonotonicityReport:
    holds: bool
    witness: Optional[Tuple[int, ...]] = None

@dataclass
class DualityReport:
    """
    Maximal correlation against minimal cost of the same marginals.
    """

    correlation: float
    cost: float
    secondMoments: float
    sameSupport: bool

    @property
    def gap(self):
        return abs(self.correlation + self.cost - self.secondMoments)

    @property
    def passed(self):
        return self.gap <= FEASIBILITY_TOLERANCE

def _halfSquaredDistances(x, y):
    return 0.5 * cdist(x.points, y.points, 'sqeuclidean')

def _checkDimensions(x, y):
    if x.dimension != y.dimension:
        raise SpecMismatchError(f"Clouds of dimension {x.dimension} and {y.dimension}")

def _smallestOptimalPermutation(costs, permutation):
    """
    Returns the lexicographically smallest permutation with the same cost.

    Row i may take column permutation[j] in some optimal assignment exactly
    when the exchange i → j closes a cycle of zero weight with the shortest
    path back from j, so the optimal assignments are the perfect matchings of
    those tight pairs.
    """
    size = permutation.size
    tolerance = 1e-12 * (1 + np.abs(costs).max())

    exchanges = costs[:, permutation] - costs[np.arange(size), permutation][:, np.newaxis]
    # The shift keeps rounding from turning cycles of zero weight negative.
    exchanges += tolerance / size
    np.fill_diagonal(exchanges, np.inf)

    distances = shortest_path(csgraph_from_dense(exchanges, null_value=np.inf), method='FW', directed=True)
    tight = exchanges + distances.T <= 2 * tolerance
    np.fill_diagonal(tight, True)

    if np.count_nonzero(tight) == size:
        return permutation

    allowed = np.zeros((size, size), dtype=bool)
    allowed[:, permutation] = tight

    smallest = np.empty(size, dtype=int)
    free = np.ones(size, dtype=bool)
    for row in range(size):
        candidates = np.flatnonzero(allowed[row] & free)
        for column in candidates:
            free[column] = False
            rest = allowed[row + 1:][:, free]
            if column == candidates[-1] or not rest.size or np.all(
                    maximum_bipartite_matching(sparse.csr_matrix(rest, dtype=np.int8), perm_type='column') >= 0):
                smallest[row] = column
                break
            free[column] = True

    return smallest

def solveAssignment(x, y):
    """
    Returns the optimal one to one assignment between two uniform clouds of
    the same size.

    Among equally optimal assignments, the lexicographically smallest
    permutation is returned.

    :raises SpecMismatchError: if the clouds have different sizes.
    :raises ParameterError: if the weights are not uniform; solvePlan handles
            general weights.
    """
    _checkDimensions(x, y)

    if x.size != y.size:
        raise SpecMismatchError(f"Assignments need clouds of equal size, got {x.size} and {y.size}")

    if not x.isUniform or not y.isUniform:
        raise ParameterError("Assignments need uniform weights, use solvePlan for general weights")

    costs = _halfSquaredDistances(x, y)
    _, permutation = linear_sum_assignment(costs)
    permutation = _smallestOptimalPermutation(costs, permutation)

    totalCost = float(costs[np.arange(x.size), permutation].sum() / x.size)
    logger.debug("Assignment of %d points with cost %e", x.size, totalCost)

    return Assignment(x, y, permutation, totalCost)

def solvePlan(x, y, costMatrix=None):
    """
    Returns the optimal transport plan between two clouds.

    The transportation polytope LP is solved with the dual simplex method, so
    the plan is a vertex; optimality is certified by complementary slackness
    with the dual potentials.

    :param costMatrix: the cost of every pair; ½|X - Y|² by default.
    :raises InfeasibleError: if the total masses differ.
    :raises NoConvergenceError: if the LP solver fails.
    """
    if costMatrix is None:
        _checkDimensions(x, y)
        costMatrix = _halfSquaredDistances(x, y)

    costMatrix = np.asarray(costMatrix, dtype=float)
    if costMatrix.shape != (x.size, y.size):
        raise SpecMismatchError(f"Cost matrix of shape {costMatrix.shape} for clouds of sizes {x.size} and {y.size}")

    if abs(x.weights.sum() - y.weights.sum()) > FEASIBILITY_TOLERANCE:
        raise InfeasibleError("Clouds carry different total masses")

    rowSums = sparse.kron(sparse.identity(x.size), np.ones((1, y.size)))
    columnSums = sparse.kron(np.ones((1, x.size)), sparse.identity(y.size))
    equalities = sparse.vstack((rowSums, columnSums)).tocsr()

    result = linprog(costMatrix.ravel(), A_eq=equalities, b_eq=np.concatenate((x.weights, y.weights)),
                     bounds=(0, None), method='highs-ds')

    if result.status != 0:
        raise NoConvergenceError(f"Transport LP failed: {result.message}", float('nan'))

    matrix = np.maximum(result.x.reshape(x.size, y.size), 0)
    marginals = result.eqlin.marginals
    rowPotential, columnPotential = marginals[:x.size], marginals[x.size:]

    reducedCosts = costMatrix - rowPotential[:, np.newaxis] - columnPotential[np.newaxis, :]
    slackness = float(max(np.abs(matrix * reducedCosts).max(), -min(0.0, reducedCosts.min())))
    if slackness > FEASIBILITY_TOLERANCE:
        logger.warning("Transport plan optimality certificate off by %e", slackness)

    Metrics.recordSolve('transport-plan', int(getattr(result, 'nit', 0)), slackness)

    return TransportPlan(x, y, matrix, float(np.sum(matrix * costMatrix)), rowPotential, columnPotential, slackness)

def wasserstein2(x, y):
    """
    Returns the Wasserstein-2 distance √(Σ ν|X - Y|²) of the optimal plan.
    """
    return float(np.sqrt(max(0.0, 2 * solvePlan(x, y).cost)))

def _simpleCycles(walk):
    # Splits a closed walk into simple cycles; self-loop steps carry no weight.
    cycles = []
    stack = []
    positions = {}
    for vertex in walk:
        if stack and stack[-1] == vertex:
            continue

        if vertex in positions:
            start = positions[vertex]
            cycles.append(stack[start:])
            for removed in stack[start + 1:]:
                del positions[removed]
            del stack[start + 1:]
            continue

        positions[vertex] = len(stack)
        stack.append(vertex)

    return cycles

def _cycleGain(gains, cycle):
    return float(sum(gains[vertex, following] for vertex, following in zip(cycle, cycle[1:] + cycle[:1])))

def checkCyclicalMonotonicity(assignment, maxCycle):
    """
    Checks that no cycle of reassignments of length up to maxCycle increases
    the correlation Σ <X, Y(X)>.

    Reassigning X_i to Y_j changes the correlation by <X_i, Y_j> - <X_i, Y_i>,
    so a violation is a negative cycle of at most maxCycle edges in the graph
    with those weights negated. D_l[s, v], the lightest walk from s to v with
    at most l edges, follows from D_(l+1)[s, v] = min_u D_l[s, u] + w[u, v].

    :return: a MonotonicityReport with the most negative simple cycle of the
             lightest violating walk as witness, from its smallest index.
    :raises ParameterError: if maxCycle is not between 2 and 6.
    """
    if not 2 <= maxCycle <= MAXIMUM_CYCLE:
        raise ParameterError(f"Cycle length must be between 2 and {MAXIMUM_CYCLE}, got {maxCycle}")

    size = assignment.x.size
    correlations = assignment.x.points @ assignment.targets.T
    tolerance = 1e-12 * (1 + np.abs(correlations).max())

    # Zero self-loops make D_l range over walks of at most l edges.
    gains = np.diag(correlations)[:, np.newaxis] - correlations
    np.fill_diagonal(gains, 0.0)

    lightest = gains.copy()
    predecessors = []
    for length in range(2, min(maxCycle, size) + 1):
        following = np.full((size, size), np.inf)
        predecessor = np.zeros((size, size), dtype=int)
        for vertex in range(size):
            candidates = lightest[:, vertex, np.newaxis] + gains[vertex, np.newaxis, :]
            better = candidates < following
            following[better] = candidates[better]
            predecessor[better] = vertex

        lightest = following
        predecessors.append(predecessor)

        closed = np.diag(lightest)
        if closed.min() < -tolerance:
            start = int(np.argmin(closed))

            walk = [start]
            for level in reversed(predecessors):
                walk.append(int(level[start, walk[-1]]))
            walk.append(start)
            walk.reverse()

            cycle = min(_simpleCycles(walk), key=lambda candidate: _cycleGain(gains, candidate))
            first = cycle.index(min(cycle))
            witness = tuple(cycle[first:] + cycle[:first])
            logger.debug("Cycle %s is not monotone, gain %e", witness, _cycleGain(gains, list(witness)))

            return MonotonicityReport(False, witness)

    return MonotonicityReport(True)

def recoverPotential(assignment):
    """
    Returns a convex potential whose subdifferential contains the assignment.

    φ_j is the longest chain Σ <Y_i, X_next - X_i> from the lexicographically
    smallest point, where φ is 0. This is the smallest potential with that
    normalization.

    :raises NotCyclicallyMonotoneError: if the assignment has a positive cycle.
    """
    sources = assignment.x.points
    targets = assignment.targets

    increments = np.einsum('id,ijd->ij', targets, sources[np.newaxis, :, :] - sources[:, np.newaxis, :])
    weights = -increments
    np.fill_diagonal(weights, np.inf)

    start = int(np.lexsort(sources.T[::-1])[0])

    try:
        distances = shortest_path(csgraph_from_dense(weights, null_value=np.inf), method='BF', directed=True,
                                  indices=start)
    except NegativeCycleError as negativeCycleError:
        # Cycles longer than MAXIMUM_CYCLE leave the witness empty.
        witness = checkCyclicalMonotonicity(assignment, min(MAXIMUM_CYCLE, assignment.x.size)).witness

        raise NotCyclicallyMonotoneError("Assignment is not cyclically monotone", witness) from negativeCycleError

    return DiscretePotential(sources, -distances, targets)

def correlationDualityCheck(x, y):
    """
    Solves the maximal correlation and minimal cost problems independently
    and compares them with the second moments.
    """
    _checkDimensions(x, y)

    costPlan = solvePlan(x, y)
    correlationPlan = solvePlan(x, y, -(x.points @ y.points.T))

    return DualityReport(-correlationPlan.cost, costPlan.cost, x.secondMoment() + y.secondMoment(),
                         bool(np.array_equal(costPlan.support(), correlationPlan.support())))
