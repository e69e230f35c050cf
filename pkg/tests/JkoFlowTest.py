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

from mongeampere.DiscreteTransport import PointCloud, solvePlan
from mongeampere.Exceptions import ParameterError, SpecMismatchError
from mongeampere.JkoFlow import (FUNCTIONAL_POROUS, FUNCTIONAL_QUARTIC, MODE_CELLS, MODE_CENTERS, Density1D,
                                 FlowConfig, circleCostMatrix, decayRate, energy, equilibrium, jkoStep, runFlow,
                                 tauRefinement, w2OneD, w2SquaredWithGradient)

RATE = 4 * np.pi ** 2

def randomDensity(rng, n):
    return Density1D(rng.dirichlet(np.ones(n)))

def cosineDensity(n, amplitude=0.2):
    return Density1D.fromFunction(n, lambda x: 1 + amplitude * np.cos(2 * np.pi * x))

def firstMode(density):
    return abs(np.sum(density.masses * np.exp(-2j * np.pi * density.centers)))

@pytest.fixture(scope='module')
def entropyFlow():
    cfg = FlowConfig(1e-3, steps=50)

    return cfg, runFlow(cosineDensity(64), cfg)

class Density1DTest:

    @pytest.mark.parametrize('masses', [
        [0.5, 0.6],
        [1.5, -0.5],
        [1],
        [0.5, np.nan],
    ])
    def testInvalidMasses(self, masses):
        with pytest.raises(ParameterError):
            Density1D(masses)

    def testFromFunction(self):
        density = Density1D.fromFunction(4, lambda x: x)

        assert density.masses == pytest.approx(np.array([1, 3, 5, 7]) / 16)

class FlowConfigTest:

    @pytest.mark.parametrize('arguments', [
        {'tau': 0},
        {'tau': 1e-3, 'functional': 'lubrication'},
        {'tau': 1e-3, 'steps': 0},
        {'tau': 1e-3, 'm': 1},
    ])
    def testInvalid(self, arguments):
        with pytest.raises(ParameterError):
            FlowConfig(**arguments)

class W2OneDTest:

    @pytest.mark.parametrize('mode', [MODE_CENTERS, MODE_CELLS])
    def testSameDensity(self, mode):
        density = randomDensity(np.random.default_rng(0), 16)

        assert w2OneD(density, density, mode) == pytest.approx(0, abs=1e-9)

    @pytest.mark.parametrize('mode', [MODE_CENTERS, MODE_CELLS])
    @pytest.mark.parametrize('shift', [1, 3, 13])
    def testCircularShift(self, mode, shift):
        density = randomDensity(np.random.default_rng(1), 16)

        shifted = Density1D(np.roll(density.masses, shift))

        assert w2OneD(density, shifted, mode) <= shift / 16 + 1e-12
        assert w2OneD(density, shifted, mode) <= (16 - shift) / 16 + 1e-12

    def testShiftedPointMass(self):
        masses = np.zeros(8)
        masses[2] = 1

        assert w2OneD(Density1D(masses), Density1D(np.roll(masses, 3)), MODE_CENTERS) == pytest.approx(3 / 8)
        assert w2OneD(Density1D(masses), Density1D(np.roll(masses, 6)), MODE_CENTERS) == pytest.approx(2 / 8)

    def testLinearProgram(self):
        rng = np.random.default_rng(2)
        centers = (np.arange(8) + 0.5) / 8

        for _ in range(10):
            rho, mu = randomDensity(rng, 8), randomDensity(rng, 8)

            plan = solvePlan(PointCloud(centers[:, np.newaxis], rho.masses),
                             PointCloud(centers[:, np.newaxis], mu.masses), costMatrix=circleCostMatrix(8))

            assert w2OneD(rho, mu, MODE_CENTERS) == pytest.approx(np.sqrt(plan.cost), abs=1e-8)

    @pytest.mark.parametrize('mode', [MODE_CENTERS, MODE_CELLS])
    def testMetricAxioms(self, mode):
        rng = np.random.default_rng(3)

        for _ in range(10):
            x, y, z = (randomDensity(rng, 12) for _ in range(3))

            assert w2OneD(x, y, mode) == pytest.approx(w2OneD(y, x, mode), abs=1e-9)
            assert w2OneD(x, z, mode) <= w2OneD(x, y, mode) + w2OneD(y, z, mode) + 1e-9

    def testBinCountMismatch(self):
        with pytest.raises(SpecMismatchError):
            w2OneD(Density1D.uniform(8), Density1D.uniform(16))

    def testUnknownMode(self):
        with pytest.raises(ParameterError):
            w2OneD(Density1D.uniform(8), Density1D.uniform(8), 'edges')

class GradientTest:

    def testFiniteDifferences(self):
        rng = np.random.default_rng(4)
        masses, previous = rng.dirichlet(np.ones(16)), rng.dirichlet(np.ones(16))
        direction = rng.standard_normal(16)
        direction -= direction.mean()
        step = 1e-6

        _, gradient = w2SquaredWithGradient(masses, previous)
        forward, _ = w2SquaredWithGradient(masses + step * direction, previous)
        backward, _ = w2SquaredWithGradient(masses - step * direction, previous)

        assert (forward - backward) / (2 * step) == pytest.approx(gradient @ direction, rel=1e-5, abs=1e-9)

    def testEmptyBin(self):
        rng = np.random.default_rng(5)
        masses, previous = rng.dirichlet(np.ones(16)), rng.dirichlet(np.ones(16))
        masses[3] += masses[7]
        masses[7] = 0
        direction = np.zeros(16)
        direction[7], direction[3] = 1, -1
        step = 1e-7

        value, gradient = w2SquaredWithGradient(masses, previous)
        forward, _ = w2SquaredWithGradient(masses + step * direction, previous)

        assert (forward - value) / step == pytest.approx(gradient @ direction, abs=1e-4)

class EnergyTest:

    def testEntropyOfUniform(self):
        value, gradient = energy(Density1D.uniform(8).masses, FlowConfig(1e-3))

        assert value == pytest.approx(0, abs=1e-15)
        assert gradient == pytest.approx(np.ones(8))

    def testPorous(self):
        value, _ = energy(Density1D.uniform(8).masses, FlowConfig(1e-3, FUNCTIONAL_POROUS))

        assert value == pytest.approx(1)

    def testQuarticEquilibrium(self):
        cfg = FlowConfig(1e-3, FUNCTIONAL_QUARTIC, wellDepth=50)
        limit = equilibrium(cfg, 32)
        rng = np.random.default_rng(6)

        minimum, _ = energy(limit.masses, cfg)
        for _ in range(20):
            direction = rng.standard_normal(32)
            direction -= direction.mean()
            candidate = np.maximum(limit.masses + 1e-3 * direction / np.abs(direction).max(), 0)

            assert energy(candidate / candidate.sum(), cfg)[0] >= minimum

class JkoStepTest:

    def testUniformIsFixed(self):
        density = Density1D.uniform(32)

        step = jkoStep(density, FlowConfig(1e-3))

        assert np.abs(step.masses - density.masses).max() <= 1e-10

    def testQuarticEquilibriumIsFixed(self):
        cfg = FlowConfig(1e-2, FUNCTIONAL_QUARTIC, wellDepth=50)
        limit = equilibrium(cfg, 32)

        step = jkoStep(limit, cfg)

        assert np.abs(step.masses - limit.masses).max() <= 1e-8

    def testHeatEquationMode(self):
        density = cosineDensity(64)
        tau = 1e-3

        step = jkoStep(density, FlowConfig(tau))

        rate = -np.log(firstMode(step) / firstMode(density)) / tau
        assert rate == pytest.approx(RATE, rel=0.15)
        assert step.masses.sum() == pytest.approx(1, abs=1e-12)
        assert np.all(step.masses >= 0)

    def testEnergyInequality(self):
        cfg = FlowConfig(1e-2, steps=5)

        trajectory = runFlow(cosineDensity(32, 0.5), cfg)

        for k, distance in enumerate(trajectory.distances):
            assert trajectory.energies[k + 1] + distance ** 2 / (2 * cfg.tau) <= trajectory.energies[k] + 1e-9

    def testPorousSupportSpreads(self):
        n = 64
        centers = (np.arange(n) + 0.5) / n
        bump = np.maximum(1 - ((centers - 0.5) / 0.125) ** 2, 0)
        cfg = FlowConfig(1e-4, FUNCTIONAL_POROUS, steps=10)

        trajectory = runFlow(Density1D(bump / bump.sum()), cfg)

        widths = [np.count_nonzero(density.masses > 1e-9) for density in trajectory.densities]
        assert all(later >= earlier for earlier, later in zip(widths, widths[1:]))
        assert widths[-1] > widths[0]

class DecayRateTest:

    def testEntropyFlow(self, entropyFlow):
        cfg, trajectory = entropyFlow

        report = decayRate(trajectory, cfg.tau, equilibrium(cfg, 64))

        assert not report.converged
        assert report.rate == pytest.approx(RATE, rel=0.1)

    def testEnergyDecreases(self, entropyFlow):
        _, trajectory = entropyFlow

        assert all(later <= earlier for earlier, later in zip(trajectory.energies, trajectory.energies[1:]))

    def testConstantTrajectory(self):
        cfg = FlowConfig(1e-3, steps=10)

        trajectory = runFlow(Density1D.uniform(16), cfg)

        report = decayRate(trajectory, cfg.tau, equilibrium(cfg, 16))
        assert report.converged
        assert report.rate is None

    def testTooFewSteps(self):
        cfg = FlowConfig(1e-3, steps=3)

        with pytest.raises(ParameterError):
            decayRate(runFlow(Density1D.uniform(8), cfg), cfg.tau, equilibrium(cfg, 8))

class TauRefinementTest:

    def testFirstOrder(self):
        constant = tauRefinement(cosineDensity(16), FlowConfig(1e-2, steps=2))

        assert np.isfinite(constant)
        assert constant >= 0
