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
Module with the acceptance suite run by "verify all".

Every check is a deterministic function of the seed; the measured values are
written to "verify.csv" in the output directory together with the artifacts
of the checks, so two runs with the same seed produce identical files. The
elapsed time of each check is only logged.
"""

import filecmp
import logging
import os
import tempfile
from dataclasses import dataclass, field
from itertools import permutations
from time import monotonic
from typing import Dict, List

import numpy as np

from mongeampere import TOPOLOGY_TORUS
from . import FileFormats
from .Config import config
from .ContinuousTransport import CostGradientMap, DensityField, linearizationResidual, pushForwardCheck, solveBrenierTorus
from .Dirichlet import AffineMap, SolverOptions, checkAffineInvariance, checkQuadraticDilation, checkTranslation, solveDirichlet
from .DiscreteTransport import (PointCloud, checkCyclicalMonotonicity, correlationDualityCheck, recoverPotential,
                                solveAssignment, solvePlan)
from .Grid import GridSpec, Region, gradientImageVolume, hessianSpectral, integrate, maDet
from .Homogenization import QuadraticForm, compositeSolution, linearizedCorrector, liouvilleCheck, solveCorrector
from .JkoFlow import Density1D, FlowConfig, MODE_CENTERS, circleCostMatrix, decayRate, equilibrium, runFlow, w2OneD
from .Vorticity import VorticityState, runSimulation, solveStationary, streamFromVorticity

logger = logging.getLogger(__name__)

RESULTS_FILE = 'verify.csv'
RESULTS_COLUMNS = ('check', 'passed', 'measure', 'value')

HEAT_RATE = 4 * np.pi ** 2

SHEAR_AMPLITUDE = 0.2

@dataclass
class CheckResult:
    """
    Outcome of an acceptance check with the values it measured.
    """

    name: str
    passed: bool
    measures: Dict[str, float] = field(default_factory=dict)

def exponential(x, y):
    return np.exp((x * x + y * y) / 2)

def exponentialDeterminant(x, y):
    return (1 + x * x + y * y) * np.exp(x * x + y * y)

def inverseCumulative(values, amplitude):
    """
    Inverts G(s) = s + amplitude·sin(2πs)/(2π), the cumulative distribution
    of 1 + amplitude·cos(2πs), by Newton iterations.
    """
    s = np.array(values, dtype=float)
    for _ in range(50):
        s -= (s + amplitude * np.sin(2 * np.pi * s) / (2 * np.pi) - values) / (1 + amplitude * np.cos(2 * np.pi * s))

    return s

def _torus(n):
    return GridSpec(n, n, topology=TOPOLOGY_TORUS)

def _artifact(outputDirectory, name):
    if outputDirectory is None:
        return None

    return os.path.join(outputDirectory, name)

def checkManufacturedSolution(sizes, outputDirectory=None):
    """
    Solves det D²u = (1 + |x|²)e^|x|² with the boundary values of e^(|x|²/2)
    and fits the convergence order of the sup error.
    """
    errors = []
    for n in sizes:
        spec = GridSpec(n, n)
        solution = solveDirichlet(spec.sample(exponentialDeterminant), spec.sample(exponential))
        errors.append(float(np.abs(solution.u.values - spec.sample(exponential).values).max()))

    order = float(-np.polyfit(np.log(sizes), np.log(errors), 1)[0])

    fileName = _artifact(outputDirectory, 'manufactured.grid')
    if fileName:
        FileFormats.writeGrid(fileName, solution.u)

    return CheckResult('manufactured', order >= 1.8, {'order': order, 'error': errors[-1]})

def checkGradientImage(n):
    """
    Compares ∫ det D²u with the area of the gradient image on three convex
    fields.
    """
    spec = GridSpec(n, n)
    region = Region.interior(spec, 1)

    worst = 0.0
    for function in (lambda x, y: 0.5 * (x * x + y * y), lambda x, y: x * x + 0.5 * y * y, exponential):
        u = spec.sample(function)
        volume = gradientImageVolume(u, region)
        worst = max(worst, abs(integrate(maDet(u), region) - volume) / volume)

    return CheckResult('gradient-image', worst <= 0.05, {'relative-error': worst})

def checkInvariances(n, rng):
    """
    Checks the affine, translation and dilation invariances on the
    manufactured solution, with 5 random area preserving maps.
    """
    spec = GridSpec(n, n)
    f = spec.sample(exponentialDeterminant)
    solution = solveDirichlet(f, spec.sample(exponential))

    reports = []
    for _ in range(5):
        matrix = np.eye(2) + rng.uniform(-0.3, 0.3, size=(2, 2))
        matrix /= np.sqrt(np.linalg.det(matrix))
        reports.append(checkAffineInvariance(solution, f, AffineMap.aboutPoint(matrix, (0.5, 0.5))))

    reports.append(checkTranslation(solution, f, (0.1, -0.05)))
    reports.append(checkQuadraticDilation(solution, f, 2))

    worst = max(report.residual / report.tolerance for report in reports)

    return CheckResult('invariances', all(report.passed for report in reports), {'worst-ratio': worst})

def _bruteForceCost(x, y):
    costs = 0.5 * ((x.points[:, np.newaxis, :] - y.points[np.newaxis, :, :]) ** 2).sum(axis=2)
    indices = np.arange(x.size)

    return min(costs[indices, list(permutation)].sum() for permutation in permutations(range(x.size))) / x.size

def checkAssignments(rng, instances, outputDirectory=None):
    """
    Compares the assignments with brute force on small random clouds, and
    checks their cyclical monotonicity and their potentials.
    """
    mismatches = 0
    notMonotone = 0
    worstResidual = 0.0

    for _ in range(instances):
        size = int(rng.integers(2, 8))
        dimension = int(rng.integers(1, 4))
        x = PointCloud.uniform(rng.uniform(size=(size, dimension)))
        y = PointCloud.uniform(rng.uniform(size=(size, dimension)))

        assignment = solveAssignment(x, y)
        expected = _bruteForceCost(x, y)
        if abs(assignment.totalCost - expected) > 1e-12 * (1 + expected):
            mismatches += 1

        if not checkCyclicalMonotonicity(assignment, min(4, size)).holds:
            notMonotone += 1

        worstResidual = max(worstResidual, recoverPotential(assignment).constraintResidual())

    fileName = _artifact(outputDirectory, 'assignment.plan.csv')
    if fileName:
        FileFormats.writePlan(fileName, solvePlan(x, y))

    passed = mismatches == 0 and notMonotone == 0 and worstResidual <= 1e-9

    return CheckResult('assignments', passed, {'mismatches': mismatches, 'not-monotone': notMonotone,
                                               'potential-residual': worstResidual})

def checkDuality(rng, instances):
    """
    Checks max correlation + min cost = second moments on random weighted
    clouds.
    """
    def randomCloud():
        size = int(rng.integers(3, 7))

        return PointCloud(rng.uniform(size=(size, 2)), rng.dirichlet(np.ones(size)))

    worstGap = 0.0
    sameSupport = True
    for _ in range(instances):
        report = correlationDualityCheck(randomCloud(), randomCloud())

        worstGap = max(worstGap, report.gap)
        sameSupport = sameSupport and report.sameSupport

    return CheckResult('duality', worstGap <= 1e-9 and sameSupport, {'gap': worstGap, 'same-support': int(sameSupport)})

def checkBrenierMap(n, samples, seed, outputDirectory=None):
    """
    Compares the map from the uniform density to 1 + 0.2·cos(2πy) with the
    inverse of the cumulative distribution, and checks its push forward.
    """
    spec = _torus(n)
    f = DensityField.normalized(spec.sample(lambda x, y: np.ones_like(x)))
    g = DensityField.normalized(spec.sample(lambda x, y: 1 + 0.2 * np.cos(2 * np.pi * y)))

    potential = solveBrenierTorus(f, g)

    x, y = spec.coordinates()
    mappedX, mappedY = potential.transportMap()
    error = float(max(np.abs(mappedX - x).max(), np.abs(mappedY - inverseCumulative(y, 0.2)).max()))

    report = pushForwardCheck(potential, f, g, samples, seed)

    fileName = _artifact(outputDirectory, 'brenier.grid')
    if fileName:
        FileFormats.writeGrid(fileName, potential.v)

    return CheckResult('brenier-map', error <= 1e-3 and report.passed,
                       {'map-error': error, 'push-forward': report.distance, 'bound': report.bound})

def checkCorrector(n, delta=0.1):
    """
    Solves the cell problem with f = 1 + δ·sin(2πx)·sin(2πy) from two
    initializations and compares it with the linearized prediction.
    """
    spec = _torus(n)
    f = spec.sample(lambda x, y: 1 + delta * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y))
    quadratic = QuadraticForm(np.eye(2))
    opts = SolverOptions(tol=1e-11)

    corrector = solveCorrector(f, quadratic, opts)
    linearized = linearizedCorrector(f, quadratic)
    fromLinearized = solveCorrector(f, quadratic, opts, initial=linearized)

    supRatio = float(np.abs(corrector.w.values).max() / np.abs(linearized.values).max())
    agreement = float(np.abs(corrector.w.values - fromLinearized.w.values).max())
    mean = abs(corrector.w.mean())

    passed = corrector.residualSup <= 1e-8 and abs(supRatio - 1) <= 0.2 and agreement <= 1e-7 and mean <= 1e-12

    return CheckResult('corrector', passed, {'residual': corrector.residualSup, 'sup-ratio': supRatio,
                                             'initialization-gap': agreement}), corrector

def checkLiouville(corrector):
    """
    Blows down P + w for the isotropic corrector.
    """
    u = compositeSolution(QuadraticForm(np.eye(2)), corrector.w, 8)

    report = liouvilleCheck(u, [0.5, 0.25, 0.125], corrector.w)

    matrixError = float(np.abs(report.fit.matrix - np.eye(2)).max())
    ratiosInRange = all(3.5 <= ratio <= 4.5 for ratio in report.ratios)

    return CheckResult('liouville', report.passed and ratiosInRange and matrixError <= 1e-3,
                       {'matrix-error': matrixError, 'smallest-ratio': min(report.ratios),
                        'largest-ratio': max(report.ratios)})

def checkVorticity(n, T, outputDirectory=None):
    """
    Runs a stationary shear for time T and checks that it stays put, the
    conservation of mass and the average of det(I + D²ψ).

    F(ψ) = 1 - 4π²ψ keeps every shear ψ = c·cos(2πx) as a fixed point, so
    ρ = 1 + 4π²c·cos(2πx) is a nonconstant function of ψ.
    """
    spec = _torus(n)
    shear = spec.sample(lambda x, y: -SHEAR_AMPLITUDE / (4 * np.pi ** 2) * np.cos(2 * np.pi * x))
    stationary = solveStationary(lambda psi: 1 - 4 * np.pi ** 2 * psi, spec, initial=shear)

    initialValues = stationary.state.rho.values
    amplitude = float(initialValues.max() - initialValues.min())

    trajectory = runSimulation(stationary.state, T)

    drift = float(np.abs(trajectory.state.rho.values - initialValues).max())
    masses = [diagnostics.mass for diagnostics in trajectory.diagnostics]
    massDrift = float(np.abs(np.diff(masses)).max()) if len(masses) > 1 else 0.0

    state = VorticityState(spec.sample(lambda x, y: 1 + 0.2 * np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y)))
    hessian = hessianSpectral(streamFromVorticity(state).psi)
    average = float(np.mean((1 + hessian.uxx) * (1 + hessian.uyy) - hessian.uxy ** 2))

    fileName = _artifact(outputDirectory, 'vorticity.csv')
    if fileName:
        FileFormats.writeTrajectory(fileName, trajectory.diagnostics)

    passed = amplitude >= 0.39 and drift <= 1e-3 and massDrift <= 1e-12 and abs(average - 1) <= 1e-12

    return CheckResult('vorticity', passed, {'amplitude': amplitude, 'drift': drift, 'mass-drift': massDrift,
                                             'determinant-average': average})

def checkLinearization():
    """
    Fits the order of the linearization of det(I + εD²F(∇ψ)) for the costs
    p = 2 and p = 4.
    """
    epsilons = [1e-1, 1e-2, 1e-3, 1e-4]

    quadratic = linearizationResidual(GridSpec(16, 16).sample(lambda x, y: x * x + x * y + 2 * y * y),
                                      CostGradientMap(2), epsilons)
    identityError = max(abs(residual - 7 * epsilon ** 2) / (7 * epsilon ** 2)
                        for residual, epsilon in zip(quadratic.residuals, epsilons))

    sines = _torus(64).sample(lambda x, y: np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y))
    slopes = [linearizationResidual(sines, CostGradientMap(p), epsilons).slope for p in (2, 4)]

    passed = identityError <= 1e-6 and all(slope is not None and 1.9 <= slope <= 2.1 for slope in slopes)

    return CheckResult('linearization', passed, {'identity-error': identityError, 'slope-p2': slopes[0],
                                                 'slope-p4': slopes[1]})

def checkGradientFlow(rng, seed, outputDirectory=None):
    """
    Runs the entropy flow of a cosine perturbation and fits its decay rate,
    checks the energy inequality and compares the circle distance with the
    linear program.
    """
    n, tau = 64, 1e-3
    cfg = FlowConfig(tau, steps=50)
    initial = Density1D.fromFunction(n, lambda x: 1 + 0.2 * np.cos(2 * np.pi * x))

    trajectory = runFlow(initial, cfg, seed)
    report = decayRate(trajectory, tau, equilibrium(cfg, n))

    inequality = all(
        later + distance ** 2 / (2 * tau) <= earlier + 1e-12 * max(1, abs(earlier))
        for earlier, later, distance in zip(trajectory.energies, trajectory.energies[1:], trajectory.distances))

    centers = (np.arange(8) + 0.5) / 8
    oracleError = 0.0
    for _ in range(10):
        rho, mu = Density1D(rng.dirichlet(np.ones(8))), Density1D(rng.dirichlet(np.ones(8)))
        plan = solvePlan(PointCloud(centers[:, np.newaxis], rho.masses), PointCloud(centers[:, np.newaxis], mu.masses),
                         costMatrix=circleCostMatrix(8))
        oracleError = max(oracleError, abs(w2OneD(rho, mu, MODE_CENTERS) - np.sqrt(max(plan.cost, 0.0))))

    fileName = _artifact(outputDirectory, 'flow.csv')
    if fileName:
        FileFormats.writeFlow(fileName, trajectory, tau)

    rateError = abs(report.rate / HEAT_RATE - 1) if report.rate is not None else np.inf
    passed = rateError <= 0.1 and inequality and oracleError <= 1e-8

    return CheckResult('gradient-flow', passed, {'rate': report.rate if report.rate is not None else np.nan,
                                                 'energy-inequality': int(inequality), 'oracle-error': oracleError})

def _writeSampleArtifacts(outputDirectory, seed):
    rng = np.random.default_rng(seed)
    checkAssignments(rng, 5, outputDirectory)
    checkManufacturedSolution([8, 16], outputDirectory)

def checkDeterminism(seed):
    """
    Writes the artifacts of the cheap checks twice and compares the files.
    """
    with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
        _writeSampleArtifacts(first, seed)
        _writeSampleArtifacts(second, seed)

        names = sorted(os.listdir(first))
        _, mismatches, errors = filecmp.cmpfiles(first, second, names, shallow=False)

    differing = len(mismatches) + len(errors)

    return CheckResult('determinism', differing == 0 and len(names) > 0, {'files': len(names), 'differing': differing})

def resultsText(results):
    rows = [(result.name, int(result.passed), measure, value)
            for result in results for measure, value in result.measures.items()]

    return FileFormats.csvText(RESULTS_COLUMNS, rows)

def _timed(name, check, *args, **kwargs):
    startTime = monotonic()
    outcome = check(*args, **kwargs)
    result = outcome[0] if isinstance(outcome, tuple) else outcome

    logger.info("Check %s %s in %.1f s", name, "passed" if result.passed else "FAILED", monotonic() - startTime)

    return outcome

def verifyAll(outputDirectory=None, quick=False, seed=None) -> List[CheckResult]:
    """
    Runs the acceptance suite.

    :param outputDirectory: the directory for verify.csv and the artifacts;
           nothing is written if None.
    :param quick: whether to run the checks on smaller grids and shorter
           times.
    :param seed: the seed of the random instances; the configured one if None.
    :return: the list of CheckResult.
    """
    if seed is None:
        seed = config.getVerifySeed()

    if outputDirectory is not None:
        os.makedirs(outputDirectory, exist_ok=True)

    rng = np.random.default_rng(seed)
    results = [
        _timed('manufactured', checkManufacturedSolution, [16, 32] if quick else [16, 32, 64], outputDirectory),
        _timed('gradient-image', checkGradientImage, 64),
        _timed('invariances', checkInvariances, 32 if quick else 64, rng),
        _timed('assignments', checkAssignments, rng, 50, outputDirectory),
        _timed('duality', checkDuality, rng, 20),
        _timed('brenier-map', checkBrenierMap, 128 if quick else 256, 100000, seed, outputDirectory),
    ]

    correctorResult, corrector = _timed('corrector', checkCorrector, 32 if quick else 64)
    results += [
        correctorResult,
        _timed('liouville', checkLiouville, corrector),
        _timed('vorticity', checkVorticity, 64 if quick else 128, 0.25 if quick else 1.0, outputDirectory),
        _timed('linearization', checkLinearization),
        _timed('gradient-flow', checkGradientFlow, rng, seed, outputDirectory),
        _timed('determinism', checkDeterminism, seed),
    ]

    if outputDirectory is not None:
        FileFormats.writeAtomically(os.path.join(outputDirectory, RESULTS_FILE), resultsText(results))

    failed = [result.name for result in results if not result.passed]
    if failed:
        logger.error("Failed checks: %s", ", ".join(failed))
    else:
        logger.info("All %d checks passed", len(results))

    return results
