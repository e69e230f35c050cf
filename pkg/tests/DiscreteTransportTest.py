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

# pylint: disable=missing-docstring

from itertools import permutations

import numpy as np
import pytest

from mongeampere.DiscreteTransport import (Assignment, PointCloud, checkCyclicalMonotonicity, correlationDualityCheck,
                                           recoverPotential, solveAssignment, solvePlan, wasserstein2)
from mongeampere.Exceptions import NotCyclicallyMonotoneError, ParameterError, SpecMismatchError

def randomCloud(rng, size, dimension=2):
    return PointCloud.uniform(rng.uniform(size=(size, dimension)))

def bruteForceCost(x, y):
    costs = 0.5 * ((x.points[:, np.newaxis, :] - y.points[np.newaxis, :, :]) ** 2).sum(axis=2)

    return min(costs[np.arange(x.size), list(permutation)].sum() for permutation in permutations(range(x.size))) / x.size

def smallestOptimalPermutation(x, y):
    costs = 0.5 * ((x.points[:, np.newaxis, :] - y.points[np.newaxis, :, :]) ** 2).sum(axis=2)
    totals = {permutation: costs[np.arange(x.size), list(permutation)].sum()
              for permutation in permutations(range(x.size))}
    best = min(totals.values())

    return min(permutation for permutation, total in totals.items() if total <= best + 1e-12)

def cycleGain(assignment, cycle):
    correlations = assignment.x.points @ assignment.targets.T

    return sum(correlations[i, i] - correlations[i, j] for i, j in zip(cycle, cycle[1:] + cycle[:1]))

def bruteForceMonotone(assignment, maxCycle):
    return all(cycleGain(assignment, list(cycle)) >= -1e-9
               for length in range(2, maxCycle + 1) for cycle in permutations(range(assignment.x.size), length))

class PointCloudTest:

    @pytest.mark.parametrize('points, weights', [
        ([[0, 0], [1, 1]], [0.5, 0.6]),
        ([[0, 0], [1, 1]], [1.5, -0.5]),
        ([[0, np.inf], [1, 1]], [0.5, 0.5]),
        ([[0, 0, 0, 0, 0]], [1]),
    ])
    def testInvalidCloud(self, points, weights):
        with pytest.raises(ParameterError):
            PointCloud(points, weights)

    def testWeightCountMismatch(self):
        with pytest.raises(SpecMismatchError):
            PointCloud([[0, 0], [1, 1]], [1])

class AssignmentTest:

    def testIdentity(self):
        x = randomCloud(np.random.default_rng(0), 5)

        assignment = solveAssignment(x, x)

        assert list(assignment.permutation) == list(range(5))
        assert assignment.totalCost == 0

    def testTranslation(self):
        x = randomCloud(np.random.default_rng(1), 5)
        y = PointCloud.uniform(x.points + [0.3, -0.4])

        assignment = solveAssignment(x, y)

        assert list(assignment.permutation) == list(range(5))
        assert assignment.totalCost == pytest.approx(0.125)

    def testBruteForce(self):
        rng = np.random.default_rng(0)

        for _ in range(50):
            size = rng.integers(2, 8)
            x, y = randomCloud(rng, size), randomCloud(rng, size)

            assert solveAssignment(x, y).totalCost == pytest.approx(bruteForceCost(x, y), abs=1e-12)

    def testOneDimensionalIsSorted(self):
        rng = np.random.default_rng(2)
        x, y = randomCloud(rng, 8, 1), randomCloud(rng, 8, 1)

        assignment = solveAssignment(x, y)

        order = np.argsort(x.points[:, 0])
        assert np.array_equal(assignment.targets[order, 0], np.sort(y.points[:, 0]))

    def testTiesAreLexicographic(self):
        x = PointCloud.uniform([[0, 0], [1, 1]])

        assert list(solveAssignment(x, PointCloud.uniform([[1, 0], [0, 1]])).permutation) == [0, 1]
        assert list(solveAssignment(x, PointCloud.uniform([[0, 1], [1, 0]])).permutation) == [0, 1]

    def testCoincidentSources(self):
        y = randomCloud(np.random.default_rng(5), 5)

        assignment = solveAssignment(PointCloud.uniform(np.zeros((5, 2))), y)

        assert list(assignment.permutation) == list(range(5))

    def testLatticeTies(self):
        rng = np.random.default_rng(6)

        for _ in range(20):
            x = PointCloud.uniform(rng.integers(0, 3, size=(6, 2)).astype(float))
            y = PointCloud.uniform(rng.integers(0, 3, size=(6, 2)).astype(float))

            assert tuple(solveAssignment(x, y).permutation) == smallestOptimalPermutation(x, y)

    def testUnequalSizes(self):
        rng = np.random.default_rng(0)

        with pytest.raises(SpecMismatchError):
            solveAssignment(randomCloud(rng, 3), randomCloud(rng, 4))

    def testNonUniformWeights(self):
        x = PointCloud([[0, 0], [1, 1]], [0.25, 0.75])

        with pytest.raises(ParameterError):
            solveAssignment(x, x)

class PlanTest:

    def testSinglePoints(self):
        plan = solvePlan(PointCloud([[0, 0]], [1]), PointCloud([[1, 2]], [1]))

        assert plan.matrix == pytest.approx(np.array([[1.0]]))
        assert plan.cost == pytest.approx(2.5)

    def testForcedMarginals(self):
        x = PointCloud([[0, 0], [1, 0]], [2 / 3, 1 / 3])

        plan = solvePlan(x, PointCloud([[0, 1]], [1]))

        assert plan.matrix[:, 0] == pytest.approx([2 / 3, 1 / 3])
        assert plan.marginalError() <= 1e-9

    def testPermutationPlan(self):
        rng = np.random.default_rng(4)
        x, y = randomCloud(rng, 4), randomCloud(rng, 4)

        plan = solvePlan(x, y)

        assert np.all((np.abs(plan.matrix) <= 1e-9) | (np.abs(plan.matrix - 0.25) <= 1e-9))
        assert plan.cost == pytest.approx(bruteForceCost(x, y), abs=1e-9)
        assert plan.slackness <= 1e-9

    def testAssignmentMatchesPlan(self):
        rng = np.random.default_rng(5)
        x, y = randomCloud(rng, 6), randomCloud(rng, 6)

        assert solveAssignment(x, y).totalCost == pytest.approx(solvePlan(x, y).cost, abs=1e-9)

class WassersteinTest:

    def testTwoPointsOnALine(self):
        x = PointCloud.uniform([[0], [1]])
        y = PointCloud.uniform([[0], [2]])

        assert wasserstein2(x, y) == pytest.approx(np.sqrt(0.5))

    def testTranslation(self):
        x = randomCloud(np.random.default_rng(6), 5)

        assert wasserstein2(x, x) == pytest.approx(0, abs=1e-7)
        assert wasserstein2(x, PointCloud.uniform(x.points + [0.3, 0.4])) == pytest.approx(0.5)

    def testMetricAxioms(self):
        rng = np.random.default_rng(7)

        for _ in range(5):
            x, y, z = (PointCloud(rng.uniform(size=(4, 2)), rng.dirichlet(np.ones(4))) for _ in range(3))

            assert wasserstein2(x, y) == pytest.approx(wasserstein2(y, x), abs=1e-9)
            assert wasserstein2(x, z) <= wasserstein2(x, y) + wasserstein2(y, z) + 1e-9

class CyclicalMonotonicityTest:

    def testIdentity(self):
        x = randomCloud(np.random.default_rng(8), 5)

        assert checkCyclicalMonotonicity(solveAssignment(x, x), 4).holds

    def testOptimalAssignments(self):
        rng = np.random.default_rng(9)

        for _ in range(10):
            assignment = solveAssignment(randomCloud(rng, 6), randomCloud(rng, 6))

            assert checkCyclicalMonotonicity(assignment, 4).holds

    def testSwappedPair(self):
        x = PointCloud.uniform([[0, 0], [1, 0.2]])
        y = PointCloud.uniform([[0, 0.1], [1, 0]])

        report = checkCyclicalMonotonicity(Assignment(x, y, np.array([1, 0]), 0.0), 2)

        assert not report.holds
        assert report.witness == (0, 1)

    def testMatchesBruteForce(self):
        rng = np.random.default_rng(12)

        for _ in range(40):
            size = int(rng.integers(2, 7))
            maxCycle = int(rng.integers(2, size + 1))
            x, y = randomCloud(rng, size), randomCloud(rng, size)
            assignment = Assignment(x, y, rng.permutation(size), 0.0)

            report = checkCyclicalMonotonicity(assignment, maxCycle)

            assert report.holds == bruteForceMonotone(assignment, maxCycle)
            if not report.holds:
                assert 2 <= len(report.witness) <= maxCycle
                assert len(set(report.witness)) == len(report.witness)
                assert report.witness[0] == min(report.witness)
                assert cycleGain(assignment, list(report.witness)) < 0

    def testLargeCloud(self):
        rng = np.random.default_rng(13)
        assignment = solveAssignment(randomCloud(rng, 60), randomCloud(rng, 60))

        assert checkCyclicalMonotonicity(assignment, 6).holds

        swapped = assignment.permutation.copy()
        swapped[[3, 40]] = swapped[[40, 3]]
        report = checkCyclicalMonotonicity(Assignment(assignment.x, assignment.y, swapped, 0.0), 6)

        assert not report.holds
        assert cycleGain(Assignment(assignment.x, assignment.y, swapped, 0.0), list(report.witness)) < 0

    def testCycleLength(self):
        x = randomCloud(np.random.default_rng(0), 3)

        with pytest.raises(ParameterError):
            checkCyclicalMonotonicity(solveAssignment(x, x), 7)

class PotentialTest:

    def testIdentity(self):
        x = randomCloud(np.random.default_rng(10), 6)

        potential = recoverPotential(solveAssignment(x, x))

        start = np.lexsort(x.points.T[::-1])[0]
        quadratic = 0.5 * np.sum(x.points ** 2, axis=1)
        assert potential.values[start] == 0
        assert potential.constraintResidual() <= 1e-9
        assert np.all(potential.values <= quadratic - quadratic[start] + 1e-12)

    def testOptimalAssignmentsAreFeasible(self):
        rng = np.random.default_rng(0)

        for _ in range(20):
            assignment = solveAssignment(randomCloud(rng, 6), randomCloud(rng, 6))

            assert recoverPotential(assignment).constraintResidual() <= 1e-9

    def testSuboptimalAssignment(self):
        x = PointCloud.uniform([[0, 0], [1, 0.2]])
        y = PointCloud.uniform([[0, 0.1], [1, 0]])

        with pytest.raises(NotCyclicallyMonotoneError) as excinfo:
            recoverPotential(Assignment(x, y, np.array([1, 0]), 0.0))

        assert excinfo.value.witness == (0, 1)

class DualityTest:

    def testSinglePointAtOrigin(self):
        x = PointCloud([[0, 0]], [1])

        report = correlationDualityCheck(x, x)

        assert report.correlation == pytest.approx(0)
        assert report.cost == pytest.approx(0)
        assert report.passed

    def testRandomClouds(self):
        rng = np.random.default_rng(11)

        for _ in range(20):
            report = correlationDualityCheck(randomCloud(rng, 5), randomCloud(rng, 5))

            assert report.passed
            assert report.sameSupport

    def testTranslatedCloud(self):
        x = randomCloud(np.random.default_rng(12), 5)

        report = correlationDualityCheck(x, PointCloud.uniform(x.points + [1, 2]))

        assert report.passed
        assert report.sameSupport
