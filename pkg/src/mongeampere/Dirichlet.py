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
Module to solve det D²u = f on a box with Dirichlet data and to check the
invariances of the equation on the computed solutions.

Convex solutions are computed with a damped Newton method on the central
discretization. When an update would leave the convex cone twice in a row, or
when the line search fails, the solve falls back to the wide stencil monotone
scheme, solved by policy iteration.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage, sparse
from scipy.interpolate import RectBivariateSpline
from scipy.sparse.linalg import spsolve
from scipy.spatial import ConvexHull, QhullError

from mongeampere import SCHEME_CENTRAL, SCHEME_MONOTONE
from . import Metrics
from .Config import config
from .Exceptions import (DegenerateSectionError, DomainError, EllipticityError, NoConvergenceError, ParameterError,
                         SpecMismatchError)
from .Grid import (GridFunction, Region, convexityDefect, convexityTolerance, energyRatio, hessianCentral, monotoneTerms,
                   shifted)

logger = logging.getLogger(__name__)

MINIMUM_STEP = 2.0 ** -20

@dataclass
class SolverOptions:
    """
    Options of the Newton solvers.

    sigma, when given, asserts that 1/sigma <= f <= sigma.
    """

    tol: float = field(default_factory=config.getSolverTolerance)
    maxIters: int = field(default_factory=config.getSolverMaxIterations)
    damping: float = field(default_factory=config.getSolverDamping)
    sigma: Optional[float] = None
    stencilWidth: int = 2

    def __post_init__(self):
        if self.tol <= 0:
            raise ParameterError(f"Tolerance must be positive, got {self.tol}")

        if self.maxIters < 1:
            raise ParameterError(f"Maximum iterations must be positive, got {self.maxIters}")

        if not 0 < self.damping < 1:
            raise ParameterError(f"Damping must be in (0, 1), got {self.damping}")

        if self.sigma is not None and self.sigma < 1:
            raise ParameterError(f"Pinching constant must be at least 1, got {self.sigma}")

@dataclass
class ConvexSolution:
    """
    Discretely convex solution of the Dirichlet problem.
    """

    u: GridFunction
    residualSup: float
    newtonIters: int
    scheme: str
    tolerance: float

@dataclass
class AffineMap:
    """
    Affine map x -> A x + b.
    """

    matrix: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float).reshape(2, 2)
        self.translation = np.asarray(self.translation, dtype=float).reshape(2)

    @classmethod
    def aboutPoint(cls, matrix, point):
        """
        Returns the map with the given linear part that fixes the given point.
        """
        matrix = np.asarray(matrix, dtype=float)
        point = np.asarray(point, dtype=float)

        return cls(matrix, point - matrix @ point)

    @classmethod
    def rotation(cls, angle, point=(0.0, 0.0)):
        """
        Returns the rotation by the given angle about the given point.
        """
        cosine, sine = np.cos(angle), np.sin(angle)

        return cls.aboutPoint([[cosine, -sine], [sine, cosine]], point)

    @property
    def det(self):
        """
        Returns the determinant of the linear part.
        """
        return float(np.linalg.det(self.matrix))

    @property
    def dilation(self):
        """
        Returns the factor s such that the linear part is s times an area
        preserving matrix.
        """
        return float(np.sqrt(abs(self.det)))

    def apply(self, x, y):
        """
        Returns the image of the points with coordinate arrays x and y.
        """
        return (self.matrix[0, 0] * x + self.matrix[0, 1] * y + self.translation[0],
                self.matrix[1, 0] * x + self.matrix[1, 1] * y + self.translation[1])

@dataclass
class AffineFunction:
    """
    Affine function l(x, y) = constant + gx·x + gy·y.
    """

    constant: float
    gradient: Tuple[float, float] = (0.0, 0.0)

    def __call__(self, x, y):
        return self.constant + self.gradient[0] * x + self.gradient[1] * y

@dataclass
class SliceSection:
    """
    Section S = {u < l} of a solution cut by an affine function.
    """

    function: AffineFunction
    mask: np.ndarray
    compact: bool
    convex: bool
    spec: object

@dataclass
class InvarianceReport:
    """
    Residual of the equation after a transformation, and its tolerance.
    """

    residual: float
    tolerance: float
    nodes: int

    @property
    def passed(self):
        """
        Returns whether the residual is within the tolerance.
        """
        return self.residual <= self.tolerance

@dataclass
class GrowthReport:
    """
    Separation of a solution from its supporting plane inside a section.
    """

    section: SliceSection
    contactPoint: Optional[Tuple[float, float]] = None
    radii: list = field(default_factory=list)
    growth: list = field(default_factory=list)
    exponent: Optional[float] = None

    @property
    def polynomialSeparation(self):
        """
        Returns whether a finite growth exponent was fitted.
        """
        return self.exponent is not None and np.isfinite(self.exponent)

@dataclass
class RightHandSideClass:
    """
    Class of a right hand side: constant, close to constant or pinched between
    1/sigma and sigma.
    """

    name: str
    sigma: float

def _interiorIndex(spec):
    index = np.full(spec.shape, -1.0)
    interiorShape = (spec.shape[0] - 2, spec.shape[1] - 2)
    index[1:-1, 1:-1] = np.arange(interiorShape[0] * interiorShape[1]).reshape(interiorShape)

    return index

def _assemble(spec, stencil):
    """
    Returns the sparse matrix of a linear stencil acting on the interior
    unknowns, with homogeneous boundary values.

    :param stencil: list of (di, dj, coefficients) with coefficient arrays of
           the interior shape.
    """
    index = _interiorIndex(spec)
    rows = index[1:-1, 1:-1].ravel()
    unknowns = rows.size

    rowList, columnList, dataList = [], [], []
    for di, dj, coefficients in stencil:
        columns = shifted(index, di, dj, False)[1:-1, 1:-1].ravel()
        coefficients = np.broadcast_to(coefficients, (spec.shape[0] - 2, spec.shape[1] - 2)).ravel()
        valid = np.isfinite(columns) & (columns >= 0) & (coefficients != 0)

        rowList.append(rows[valid])
        columnList.append(columns[valid])
        dataList.append(coefficients[valid])

    return sparse.coo_matrix((np.concatenate(dataList), (np.concatenate(rowList), np.concatenate(columnList))),
                             shape=(unknowns, unknowns)).tocsr()

def _poissonStart(f, boundary):
    """
    Returns the solution of Δu = 2√f with the boundary values.

    By the AM-GM inequality det D²u <= (Δu/2)² in 2D, so this is the convex
    candidate closest to the equation among the harmonic shifts.
    """
    spec = f.spec
    h2 = spec.h ** 2
    laplacian = [(1, 0, 1 / h2), (-1, 0, 1 / h2), (0, 1, 1 / h2), (0, -1, 1 / h2), (0, 0, -4 / h2)]
    matrix = _assemble(spec, laplacian)

    boundaryValues = boundary.values.copy()
    boundaryValues[1:-1, 1:-1] = 0
    boundaryContribution = sum(coefficient * shifted(boundaryValues, di, dj, False)[1:-1, 1:-1]
                               for di, dj, coefficient in laplacian if (di, dj) != (0, 0))

    rightHandSide = 2 * np.sqrt(f.values[1:-1, 1:-1]) - boundaryContribution
    values = boundary.values.copy()
    values[1:-1, 1:-1] = spsolve(matrix, rightHandSide.ravel()).reshape(rightHandSide.shape)

    return boundary.withValues(values)

def _centralResidual(u, f):
    return hessianCentral(u).det[1:-1, 1:-1] - f.values[1:-1, 1:-1]

def _centralJacobian(u):
    hessian = hessianCentral(u)
    h2 = u.spec.h ** 2
    uxx, uxy, uyy = hessian.uxx[1:-1, 1:-1], hessian.uxy[1:-1, 1:-1], hessian.uyy[1:-1, 1:-1]

    # d(det D²u)[w] = cof(D²u) : D²w
    stencil = [
        (0, 0, -2 * (uxx + uyy) / h2),
        (1, 0, uyy / h2), (-1, 0, uyy / h2),
        (0, 1, uxx / h2), (0, -1, uxx / h2),
        (1, 1, -uxy / (2 * h2)), (-1, -1, -uxy / (2 * h2)),
        (1, -1, uxy / (2 * h2)), (-1, 1, uxy / (2 * h2)),
    ]

    return _assemble(u.spec, stencil)

def _monotoneResidual(u, f, stencilWidth, floor):
    values, _, _ = monotoneTerms(u, stencilWidth, floor)

    return values[1:-1, 1:-1] - f.values[1:-1, 1:-1]

def _monotoneJacobian(u, stencilWidth, floor):
    _, policy, terms = monotoneTerms(u, stencilWidth, floor)
    policy = policy[1:-1, 1:-1]
    h2 = u.spec.h ** 2

    # The derivative of each floored factor is taken as the derivative of the
    # second difference, so the rows stay positive combinations of second
    # difference stencils.
    stencil = []
    for pairIndex, (first, second, firstTerm, secondTerm) in enumerate(terms):
        selected = policy == pairIndex
        for direction, weight in ((first, secondTerm), (second, firstTerm)):
            coefficient = np.where(selected, np.nan_to_num(weight[1:-1, 1:-1]), 0.0) / ((direction[0] ** 2 + direction[1] ** 2) * h2)
            stencil.append((direction[0], direction[1], coefficient))
            stencil.append((-direction[0], -direction[1], coefficient))
            stencil.append((0, 0, -2 * coefficient))

    return _assemble(u.spec, stencil)

def _withInterior(u, interiorValues):
    values = u.values.copy()
    values[1:-1, 1:-1] = interiorValues

    return u.withValues(values)

def _isConvexIterate(u):
    return convexityDefect(u, Region.interior(u.spec, 1)) >= -convexityTolerance(u)

class _LineSearchFailure(Exception):
    def __init__(self, convexityRejected):
        super().__init__()

        self.convexityRejected = convexityRejected

def _dampedStep(u, step, residualFunction, previousSup, damping, requireConvexity):
    """
    Returns the accepted iterate, its residual sup norm and whether convexity
    caused a rejection.

    Steps are shrunk by the damping factor until the residual sup norm does not
    increase and, if required, the iterate stays discretely convex.
    """
    interior = u.values[1:-1, 1:-1]
    length = 1.0
    convexityRejected = False

    while length >= MINIMUM_STEP:
        candidate = _withInterior(u, interior + length * step)

        if requireConvexity and not _isConvexIterate(candidate):
            convexityRejected = True
            length *= damping
            continue

        candidateSup = float(np.abs(residualFunction(candidate)).max())
        if candidateSup <= previousSup:
            return candidate, candidateSup, convexityRejected

        length *= damping

    raise _LineSearchFailure(convexityRejected)

def _newton(u, residualFunction, jacobianFunction, opts, requireConvexity, label):
    """
    Runs the damped Newton iteration from u.

    :return: a tuple with the solution, its residual sup norm and the number of
             accepted iterations.
    :raises _LineSearchFailure: if no step can be accepted, or if convexity
            rejected steps in two consecutive iterations.
    :raises NoConvergenceError: if the tolerance is not reached after the
            maximum number of iterations.
    """
    residual = residualFunction(u)
    residualSup = float(np.abs(residual).max())
    iterations = 0
    consecutiveConvexityRejections = 0

    while residualSup > opts.tol:
        if iterations >= opts.maxIters:
            raise NoConvergenceError(f"{label} Newton did not converge after {iterations} iterations", residualSup, u)

        step = spsolve(jacobianFunction(u), -residual.ravel()).reshape(residual.shape)

        u, residualSup, convexityRejected = _dampedStep(u, step, residualFunction, residualSup, opts.damping, requireConvexity)
        residual = residualFunction(u)
        iterations += 1

        consecutiveConvexityRejections = consecutiveConvexityRejections + 1 if convexityRejected else 0
        if consecutiveConvexityRejections >= 2:
            raise _LineSearchFailure(True)

        logger.debug("%s Newton iteration %d: residual %e", label, iterations, residualSup)

    return u, residualSup, iterations

def _validateData(f, boundary, opts):
    if f.spec != boundary.spec:
        raise SpecMismatchError("Right hand side and boundary data are defined on different grids")

    if f.spec.isTorus:
        raise ParameterError("Dirichlet problems need a box grid")

    if np.any(f.values[1:-1, 1:-1] <= 0):
        raise EllipticityError("Right hand side must be positive for the equation to be elliptic")

    if opts.sigma is not None:
        interior = f.values[1:-1, 1:-1]
        if interior.min() < 1 / opts.sigma or interior.max() > opts.sigma:
            raise ParameterError(f"Right hand side is not pinched between 1/{opts.sigma} and {opts.sigma}")

def solveMonotone(f, boundary, opts=None, start=None):
    """
    Solves the wide stencil monotone discretization by policy iteration.

    :param f: the positive right hand side.
    :param boundary: a GridFunction whose boundary nodes hold the Dirichlet data.
    :param opts: the SolverOptions.
    :param start: the initial iterate; the Poisson start by default.
    :return: the ConvexSolution.
    """
    opts = opts or SolverOptions()
    _validateData(f, boundary, opts)

    floor = config.getDegeneracyFloor()
    if start is None:
        start = _poissonStart(f, boundary)

    try:
        u, residualSup, iterations = _newton(
            start,
            lambda candidate: _monotoneResidual(candidate, f, opts.stencilWidth, floor),
            lambda candidate: _monotoneJacobian(candidate, opts.stencilWidth, floor),
            opts, False, 'monotone')
    except _LineSearchFailure as lineSearchFailure:
        residualSup = float(np.abs(_monotoneResidual(start, f, opts.stencilWidth, floor)).max())
        raise NoConvergenceError("Monotone scheme line search failed", residualSup, start) from lineSearchFailure

    Metrics.recordSolve('dirichlet-monotone', iterations, residualSup)
    logger.info("Monotone scheme converged in %d iterations, residual %e", iterations, residualSup)

    return ConvexSolution(u, residualSup, iterations, SCHEME_MONOTONE, opts.tol)

def solveDirichlet(f, boundary, opts=None):
    """
    Solves det D²u = f on the box with u = boundary on its boundary nodes.

    The central discretization is tried first, from the solution of
    Δu = 2√f; if the iterates can not be kept convex the monotone scheme is
    solved instead.

    :param f: the right hand side; it must be positive at interior nodes.
    :param boundary: a GridFunction whose boundary nodes hold the Dirichlet data;
           its interior values are ignored.
    :param opts: the SolverOptions.
    :return: the ConvexSolution.
    :raises EllipticityError: if f is not positive.
    :raises NoConvergenceError: if Newton stagnates.
    """
    opts = opts or SolverOptions()
    _validateData(f, boundary, opts)

    start = _poissonStart(f, boundary)

    if _isConvexIterate(start):
        try:
            u, residualSup, iterations = _newton(
                start,
                lambda candidate: _centralResidual(candidate, f),
                _centralJacobian,
                opts, True, 'central')

            Metrics.recordSolve('dirichlet-central', iterations, residualSup)
            logger.info("Central scheme converged in %d iterations, residual %e", iterations, residualSup)

            return ConvexSolution(u, residualSup, iterations, SCHEME_CENTRAL, opts.tol)
        except _LineSearchFailure:
            logger.warning("Central Newton could not keep the iterates convex, falling back to the monotone scheme")
    else:
        logger.warning("Poisson start is not convex, using the monotone scheme")

    Metrics.recordFallback('dirichlet')

    return solveMonotone(f, boundary, opts, start)

def comparisonCheck(f, lowerBoundary, upperBoundary, opts=None):
    """
    Solves the monotone scheme for two ordered boundary data and returns
    max(u1 - u2), which the comparison principle bounds by the tolerance.
    """
    if np.any(lowerBoundary.values > upperBoundary.values):
        raise ParameterError("Boundary data are not ordered")

    lower = solveMonotone(f, lowerBoundary, opts)
    upper = solveMonotone(f, upperBoundary, opts)

    return float(np.max(lower.u.values - upper.u.values))

def classifyRightHandSide(f, epsilon=0.1):
    """
    Returns the class of the right hand side among the classes preserved by the
    invariances: constant, close to constant (|f - 1| <= epsilon) or pinched
    between 1/sigma and sigma.
    """
    values = f.values
    if np.any(values <= 0):
        raise EllipticityError("Right hand side must be positive")

    sigma = float(max(values.max(), 1 / values.min()))

    if values.max() - values.min() <= 1e-12 * values.max():
        return RightHandSideClass('constant', sigma)

    if np.abs(values - 1).max() <= epsilon:
        return RightHandSideClass('close', sigma)

    return RightHandSideClass('pinched', sigma)

def _transformedResidual(sol, f, affineMap, scale):
    """
    Returns the InvarianceReport of v(x) = scale·u(Ax + b) against
    scale²·det(A)²·f(Ax + b).
    """
    spec = sol.u.spec
    if f.spec != spec:
        raise SpecMismatchError("Right hand side and solution are defined on different grids")

    x, y = spec.coordinates()
    mappedX, mappedY = affineMap.apply(x, y)

    slack = 1e-12 * max(spec.lx, spec.ly)
    inside = ((mappedX >= spec.x0 - slack) & (mappedX <= spec.x0 + spec.lx + slack)
              & (mappedY >= spec.y0 - slack) & (mappedY <= spec.y0 + spec.ly + slack))

    region = ndimage.binary_erosion(inside, structure=np.ones((3, 3), dtype=bool), border_value=0)
    if not region.any():
        raise DomainError("The transformation leaves no region of the grid to check")

    xs = spec.x0 + spec.h * np.arange(spec.shape[0])
    ys = spec.y0 + spec.h * np.arange(spec.shape[1])
    solutionSpline = RectBivariateSpline(xs, ys, sol.u.values, kx=3, ky=3)
    rightHandSideSpline = RectBivariateSpline(xs, ys, f.values, kx=3, ky=3)

    clippedX = np.clip(mappedX, spec.x0, spec.x0 + spec.lx)
    clippedY = np.clip(mappedY, spec.y0, spec.y0 + spec.ly)

    transformed = GridFunction(spec, np.where(inside, scale * solutionSpline.ev(clippedX, clippedY), 0.0))
    expected = scale ** 2 * affineMap.det ** 2 * rightHandSideSpline.ev(clippedX, clippedY)

    residual = np.abs(hessianCentral(transformed).det - expected)[region]

    matrixNorm2 = float(np.sum(affineMap.matrix ** 2))
    tolerance = sol.tolerance + config.getInvarianceConstant() * spec.h ** 2 * matrixNorm2

    return InvarianceReport(float(residual.max()), tolerance, int(np.count_nonzero(region)))

def _domainCenter(spec):
    return (spec.x0 + spec.lx / 2, spec.y0 + spec.ly / 2)

def checkAffineInvariance(sol, f, affineMap):
    """
    Checks that u(Ax + b) solves det D²v = f(Ax + b) for det A = 1.

    Off-grid values are interpolated with bicubic splines, which reproduce
    quadratics exactly.

    :raises ParameterError: if det A is not 1.
    :raises DomainError: if no region of the grid maps inside the domain.
    """
    if abs(affineMap.det - 1) > 1e-12:
        raise ParameterError(f"Affine map must have determinant 1, got {affineMap.det}")

    return _transformedResidual(sol, f, affineMap, 1.0)

def checkRigidMotion(sol, f, angle):
    """
    Checks the invariance under the rotation by the given angle about the
    center of the domain.
    """
    return checkAffineInvariance(sol, f, AffineMap.rotation(angle, _domainCenter(sol.u.spec)))

def checkTranslation(sol, f, vector):
    """
    Checks the invariance under the translation x -> x + vector.
    """
    return checkAffineInvariance(sol, f, AffineMap(np.eye(2), vector))

def checkAnisotropicScaling(sol, f, epsilon):
    """
    Checks the invariance under (x, y) -> (εx, y/ε) about the center of the
    domain.
    """
    if epsilon <= 0:
        raise ParameterError(f"Scaling must be positive, got {epsilon}")

    return checkAffineInvariance(sol, f, AffineMap.aboutPoint(np.diag([epsilon, 1 / epsilon]), _domainCenter(sol.u.spec)))

def checkQuadraticDilation(sol, f, t):
    """
    Checks that t⁻²u(tx) solves det D²v = f(tx), with the dilation centered
    at the center of the domain.

    :raises ParameterError: if t is not positive.
    :raises DomainError: if the dilated domain does not overlap the domain.
    """
    if t <= 0:
        raise ParameterError(f"Dilation factor must be positive, got {t}")

    return _transformedResidual(sol, f, AffineMap.aboutPoint(t * np.eye(2), _domainCenter(sol.u.spec)), t ** -2)

def _isIntervalPerLine(mask):
    for line in list(mask) + list(mask.T):
        indices = np.flatnonzero(line)
        if indices.size and indices[-1] - indices[0] + 1 != indices.size:
            return False

    return True

def sliceSection(sol, function):
    """
    Returns the section {u < l} of the solution.
    """
    spec = sol.u.spec
    x, y = spec.coordinates()
    mask = sol.u.values < function(x, y)

    boundary = np.ones(spec.shape, dtype=bool)
    boundary[1:-1, 1:-1] = False

    compact = bool(mask.any()) and not bool((mask & boundary).any())

    return SliceSection(function, mask, compact, _isIntervalPerLine(mask), spec)

def strictConvexityReport(sol, function):
    """
    Measures how the solution separates from its supporting plane inside the
    section cut by the affine function.

    The supporting plane is taken at the contact point, the node of the
    section where u - l is smallest. The growth max_{|x - x0| <= r} (u - p) is
    measured for r = h, 2h, 4h... while the ball stays inside the section, and
    the exponent β of growth ≈ c·r^β is fitted in log-log scale.

    If the section is not compactly contained in the grid only the section is
    reported, without exponent.

    :raises DomainError: if the section is empty.
    """
    section = sliceSection(sol, function)
    report = GrowthReport(section)

    if not section.mask.any():
        raise DomainError("Section is empty, no contact point")

    if not section.compact:
        logger.info("Section touches the boundary, no growth exponent")
        return report

    spec = sol.u.spec
    x, y = spec.coordinates()
    values = sol.u.values

    gap = np.where(section.mask, values - function(x, y), np.inf)
    i, j = np.unravel_index(np.argmin(gap), gap.shape)
    x0, y0 = float(x[i, j]), float(y[i, j])
    report.contactPoint = (x0, y0)

    h = spec.h
    gradient = ((values[i + 1, j] - values[i - 1, j]) / (2 * h), (values[i, j + 1] - values[i, j - 1]) / (2 * h))
    growth = values - (values[i, j] + gradient[0] * (x - x0) + gradient[1] * (y - y0))

    distance = np.hypot(x - x0, y - y0)
    inradius = float(distance[~section.mask].min())

    radius = h
    while radius < inradius:
        ball = distance <= radius * (1 + 1e-12)
        report.radii.append(radius)
        report.growth.append(float(growth[ball].max()))
        radius *= 2

    radii = np.array(report.radii)
    growthValues = np.array(report.growth)
    positive = growthValues > 0
    if np.count_nonzero(positive) >= 2:
        report.exponent = float(np.polyfit(np.log(radii[positive]), np.log(growthValues[positive]), 1)[0])

    return report

def _minimumVolumeEllipse(points, tolerance=1e-9, maxIterations=10000):
    """
    Returns (Q, c) of the smallest ellipse {(x - c)ᵀQ(x - c) <= 1} containing
    the points, by Khachiyan's algorithm.
    """
    count, dimension = points.shape
    lifted = np.column_stack((points, np.ones(count))).T
    weights = np.full(count, 1 / count)

    for _ in range(maxIterations):
        scatter = (lifted * weights) @ lifted.T
        distances = np.einsum('ij,ji->i', lifted.T @ np.linalg.inv(scatter), lifted)
        farthest = int(np.argmax(distances))
        maximum = distances[farthest]

        step = (maximum - dimension - 1) / ((dimension + 1) * (maximum - 1))
        newWeights = (1 - step) * weights
        newWeights[farthest] += step

        converged = np.linalg.norm(newWeights - weights) < tolerance
        weights = newWeights
        if converged:
            break

    center = points.T @ weights
    shape = np.linalg.inv((points.T * weights) @ points - np.outer(center, center)) / dimension

    # The iteration stops slightly inside, so the ellipse is grown to contain
    # every point.
    offsets = points - center
    shape /= max(1.0, float(np.max(np.einsum('ij,jk,ik->i', offsets, shape, offsets))))

    return shape, center

def normalizeSection(section):
    """
    Returns the affine map that sends the section between the unit ball and
    the ball of radius 2.

    The smallest enclosing ellipse of the section is mapped to a disc, which is
    then scaled so that the inradius of the image about the origin is 1. The
    image of a convex set contains half of its enclosing ellipse, so it stays
    within the ball of radius 2.

    :raises DegenerateSectionError: if the section has zero area.
    """
    if not section.compact:
        raise DomainError("Only compactly contained sections can be normalized")

    x, y = section.spec.coordinates()
    points = np.column_stack((x[section.mask], y[section.mask]))

    try:
        hull = ConvexHull(points)
    except QhullError as qhullError:
        raise DegenerateSectionError("Section has zero area") from qhullError

    if hull.volume <= 0:
        raise DegenerateSectionError("Section has zero area")

    vertices = points[hull.vertices]
    shape, center = _minimumVolumeEllipse(vertices)

    eigenvalues, eigenvectors = np.linalg.eigh(shape)
    toDisc = eigenvectors @ np.diag(np.sqrt(eigenvalues)) @ eigenvectors.T

    image = (vertices - center) @ toDisc.T
    inradius = float(np.min(-ConvexHull(image).equations[:, -1]))

    matrix = toDisc / inradius

    return AffineMap(matrix, -matrix @ center)

def applyToSection(affineMap, section):
    """
    Returns the images of the section nodes as an array of points.
    """
    x, y = section.spec.coordinates()
    mappedX, mappedY = affineMap.apply(x[section.mask], y[section.mask])

    return np.column_stack((mappedX, mappedY))

def oscillationBound(sol):
    """
    Returns the empirical constant of the energy inequality for the solution
    on the interior nodes at distance at least a quarter of the side from the
    boundary.
    """
    margin = max(1, sol.u.spec.nx // 4)

    return energyRatio(sol.u, Region.interior(sol.u.spec, margin))

__all__ = [
    'AffineFunction', 'AffineMap', 'ConvexSolution', 'GrowthReport', 'InvarianceReport', 'RightHandSideClass',
    'SliceSection', 'SolverOptions', 'applyToSection', 'checkAffineInvariance', 'checkAnisotropicScaling',
    'checkQuadraticDilation', 'checkRigidMotion', 'checkTranslation', 'classifyRightHandSide', 'comparisonCheck',
    'normalizeSection', 'oscillationBound', 'sliceSection', 'solveDirichlet', 'solveMonotone', 'strictConvexityReport',
]
