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

import numpy as np
import pytest

from mongeampere import TOPOLOGY_TORUS
from mongeampere.Dirichlet import SolverOptions
from mongeampere.Exceptions import CompatibilityError, DegenerateFitError, NoConvergenceError, ParameterError
from mongeampere.Grid import GridFunction, GridSpec, hessianSpectral
from mongeampere.Homogenization import (QuadraticForm, compositeSolution, fitQuadratic, linearizedCorrector,
                                        liouvilleCheck, quadraticBlowdown, solveCorrector)

DELTA = 0.1

def torus(n):
    return GridSpec(n, n, topology=TOPOLOGY_TORUS)

def sineProduct(spec, offset=1.0):
    return spec.sample(lambda x, y: offset + DELTA * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y))

@pytest.fixture(scope='module')
def isotropicCorrector():
    f = sineProduct(torus(64))

    return f, solveCorrector(f, QuadraticForm(np.eye(2)))

@pytest.fixture(scope='module')
def anisotropicCorrector():
    f = sineProduct(torus(32))
    quadratic = QuadraticForm(np.diag([2, 0.5]))

    return quadratic, solveCorrector(f, quadratic)

class QuadraticFormTest:

    @pytest.mark.parametrize('matrix', [
        [[1, 0.5], [0, 1]],
        [[1, 0], [0, -1]],
        [[0, 0], [0, 1]],
    ])
    def testInvalidMatrix(self, matrix):
        with pytest.raises(ParameterError):
            QuadraticForm(matrix)

    def testValue(self):
        quadratic = QuadraticForm([[2, 1], [1, 3]])

        assert quadratic.det == pytest.approx(5)
        assert quadratic(1.0, 2.0) == pytest.approx(0.5 * (2 + 4 + 12))

class SolveCorrectorTest:

    def testConstant(self):
        spec = torus(16)

        corrector = solveCorrector(spec.sample(lambda x, y: np.ones_like(x)), QuadraticForm(np.eye(2)))

        assert corrector.newtonIters == 0
        assert np.all(corrector.w.values == 0)

    def testSineProduct(self, isotropicCorrector):
        _, corrector = isotropicCorrector

        assert corrector.residualSup <= 1e-8
        assert abs(corrector.w.mean()) <= 1e-12
        assert np.abs(corrector.w.values).max() == pytest.approx(DELTA / (8 * np.pi ** 2), rel=0.2)

    def testSatisfiesEquation(self, isotropicCorrector):
        f, corrector = isotropicCorrector

        hessian = hessianSpectral(corrector.w)
        determinant = (1 + hessian.uxx) * (1 + hessian.uyy) - hessian.uxy ** 2
        assert np.abs(determinant - f.values).max() <= 1e-8
        assert np.all(1 + hessian.lambda1 > 0)

    def testAnisotropic(self, anisotropicCorrector):
        _, corrector = anisotropicCorrector

        assert corrector.residualSup <= 1e-8

    def testIncompatibleAverage(self):
        f = sineProduct(torus(16), offset=1.05)

        with pytest.raises(CompatibilityError):
            solveCorrector(f, QuadraticForm(np.eye(2)))

    def testIncompatibleAverageStalls(self):
        f = sineProduct(torus(16), offset=1.05)

        with pytest.raises(NoConvergenceError) as excinfo:
            solveCorrector(f, QuadraticForm(np.eye(2)), SolverOptions(maxIters=20), checkCompatibility=False)

        assert excinfo.value.residual >= 0.04

    def testBoxGrid(self):
        with pytest.raises(ParameterError):
            solveCorrector(sineProduct(GridSpec(16, 16)), QuadraticForm(np.eye(2)))

    def testInitializationIndependence(self):
        f = sineProduct(torus(32))
        quadratic = QuadraticForm(np.eye(2))
        opts = SolverOptions(tol=1e-11)

        fromZero = solveCorrector(f, quadratic, opts)
        fromLinearized = solveCorrector(f, quadratic, opts, initial=linearizedCorrector(f, quadratic))

        assert np.abs(fromZero.w.values - fromLinearized.w.values).max() <= 1e-7

    def testShiftEquivariance(self):
        spec = torus(32)
        shift = 8 * spec.h
        f = sineProduct(spec)
        shifted = spec.sample(lambda x, y: 1 + DELTA * np.sin(2 * np.pi * (x + shift)) * np.sin(2 * np.pi * y))
        quadratic = QuadraticForm(np.eye(2))

        corrector = solveCorrector(f, quadratic)
        shiftedCorrector = solveCorrector(shifted, quadratic)

        assert np.abs(shiftedCorrector.w.values - np.roll(corrector.w.values, -8, axis=0)).max() <= 1e-7

class LinearizedCorrectorTest:

    def testPoisson(self):
        spec = torus(32)
        x, y = spec.coordinates()

        w = linearizedCorrector(sineProduct(spec), QuadraticForm(np.eye(2)))

        expected = -DELTA * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y) / (8 * np.pi ** 2)
        assert np.abs(w.values - expected).max() <= 1e-12

class BlowdownTest:

    def testQuadraticIsFixed(self):
        quadratic = QuadraticForm([[1.5, 0.25], [0.25, 1]])
        cell = torus(16)
        u = compositeSolution(quadratic, GridFunction(cell, np.zeros(cell.shape)), 4)

        for epsilon in (1, 0.5, 0.25):
            blowdown = quadraticBlowdown(u, epsilon)

            x, y = blowdown.spec.coordinates()
            assert np.abs(blowdown.values - quadratic(x, y)).max() <= 1e-12

    def testCorrectorScaling(self, isotropicCorrector):
        _, corrector = isotropicCorrector
        quadratic = QuadraticForm(np.eye(2))
        u = compositeSolution(quadratic, corrector.w, 8)
        supW = np.abs(corrector.w.values).max()

        deviations = []
        for epsilon in (0.5, 0.25, 0.125):
            blowdown = quadraticBlowdown(u, epsilon)
            x, y = blowdown.spec.coordinates()
            deviations.append(np.abs(blowdown.values - quadratic(x, y)).max())

            assert deviations[-1] == pytest.approx(epsilon ** 2 * supW, rel=1e-9)

        for coarse, fine in zip(deviations, deviations[1:]):
            assert 3.5 <= coarse / fine <= 4.5

    def testTiling(self):
        cell = torus(8)
        w = cell.sample(lambda x, y: np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y))

        quadratic = QuadraticForm(np.eye(2))

        u = compositeSolution(quadratic, w, 3)

        x, y = u.spec.coordinates()
        corrector = u.values - quadratic(x, y)
        assert u.spec.shape == (25, 25)
        assert np.abs(corrector[8:16, 16:24] - w.values).max() <= 1e-12
        assert np.abs(corrector[24, :] - corrector[0, :]).max() <= 1e-12

    @pytest.mark.parametrize('epsilon', [0.3, 0, -0.5, 2])
    def testInvalidEpsilon(self, epsilon):
        cell = torus(8)
        u = compositeSolution(QuadraticForm(np.eye(2)), GridFunction(cell, np.zeros(cell.shape)), 2)

        with pytest.raises(ParameterError):
            quadraticBlowdown(u, epsilon)

    def testDomainTooSmall(self):
        cell = torus(8)
        u = compositeSolution(QuadraticForm(np.eye(2)), GridFunction(cell, np.zeros(cell.shape)), 2)

        with pytest.raises(ParameterError):
            quadraticBlowdown(u, 0.25)

class LiouvilleTest:

    def testZeroCorrector(self):
        matrix = np.array([[1.5, 0.25], [0.25, 1]])
        cell = torus(8)
        w = GridFunction(cell, np.zeros(cell.shape))

        report = liouvilleCheck(compositeSolution(QuadraticForm(matrix), w, 4), [0.5, 0.25], w)

        assert report.fit.matrix == pytest.approx(matrix, abs=1e-10)
        assert report.fit.error <= 1e-10
        assert report.passed

    def testCorrector(self, isotropicCorrector):
        _, corrector = isotropicCorrector
        u = compositeSolution(QuadraticForm(np.eye(2)), corrector.w, 8)

        report = liouvilleCheck(u, [0.5, 0.25, 0.125], corrector.w)

        assert np.abs(report.fit.matrix - np.eye(2)).max() <= 1e-3
        assert report.passed
        assert all(3.5 <= ratio <= 4.5 for ratio in report.ratios)

    def testAnisotropic(self, anisotropicCorrector):
        quadratic, corrector = anisotropicCorrector
        u = compositeSolution(quadratic, corrector.w, 8)

        report = liouvilleCheck(u, [0.25, 0.125], corrector.w)

        assert np.abs(report.fit.matrix - quadratic.matrix).max() <= 1e-3
        assert report.passed

    def testDegenerateFit(self):
        t = np.linspace(0, 1, 20)

        with pytest.raises(DegenerateFitError):
            fitQuadratic(t, 2 * t, t ** 2)
