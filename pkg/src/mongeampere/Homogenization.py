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
Module for the periodic corrector of det D²u = f and for the quadratic
blow-down of global solutions built from it.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from mongeampere import TOPOLOGY_BOX
from .Exceptions import CompatibilityError, DegenerateFitError, ParameterError
from .Grid import GridFunction, GridSpec, forwardTransform, inverseTransform, wavenumbers
from .PeriodicSolver import COMPATIBILITY_TOLERANCE, PeriodicSolver

logger = logging.getLogger(__name__)

@dataclass
class QuadraticForm:
    """
    Quadratic polynomial P(x) = ½xᵀMx with M symmetric positive definite.
    """

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float).reshape(2, 2)

        if not np.allclose(self.matrix, self.matrix.T, rtol=0, atol=1e-14):
            raise ParameterError("Quadratic form matrix must be symmetric")

        if np.any(np.linalg.eigvalsh(self.matrix) <= 0):
            raise ParameterError("Quadratic form matrix must be positive definite")

    @property
    def det(self):
        return float(np.linalg.det(self.matrix))

    def __call__(self, x, y):
        matrix = self.matrix

        return 0.5 * (matrix[0, 0] * x * x + 2 * matrix[0, 1] * x * y + matrix[1, 1] * y * y)

@dataclass
class CorrectorField:
    """
    Periodic mean zero w with det(M + D²w) = f.
    """

    w: GridFunction
    residualSup: float
    newtonIters: int = 0

@dataclass
class QuadraticFit:
    """
    Least squares quadratic c + b·x + ½xᵀMx.
    """

    matrix: np.ndarray
    linear: np.ndarray
    constant: float
    error: float

    def __call__(self, x, y):
        return (self.constant + self.linear[0] * x + self.linear[1] * y
                + 0.5 * (self.matrix[0, 0] * x * x + 2 * self.matrix[0, 1] * x * y + self.matrix[1, 1] * y * y))

@dataclass
class LiouvilleReport:
    epsilons: List[float]
    deviations: List[float]
    fit: QuadraticFit
    fitBound: Optional[float] = None
    ratios: List[float] = field(default_factory=list)

    @property
    def passed(self):
        """
        Returns whether the fit error is within its bound, when there is one.
        """
        return self.fitBound is None or self.fit.error <= self.fitBound

def _checkCorrectorData(f, quadratic, checkCompatibility):
    if not f.spec.isTorus:
        raise ParameterError("Correctors are computed on the torus")

    if checkCompatibility and abs(f.mean() - quadratic.det) > COMPATIBILITY_TOLERANCE:
        raise CompatibilityError(f"Average of f {f.mean()!r} differs from det M {quadratic.det!r}")

def solveCorrector(f, quadratic, opts=None, initial=None, checkCompatibility=True):
    """
    Returns the periodic w with mean zero such that det D²(P + w) = f.

    :param f: the positive periodic right hand side.
    :param quadratic: the QuadraticForm P.
    :param opts: the SolverOptions.
    :param initial: the initial iterate, zero by default.
    :param checkCompatibility: whether to require that the average of f is
           det M; without the check a mismatch makes Newton stall.
    :raises CompatibilityError: if the average of f is not det M.
    :raises NoConvergenceError: if Newton fails.
    """
    _checkCorrectorData(f, quadratic, checkCompatibility)

    solver = PeriodicSolver(f.spec, matrix=quadratic.matrix, options=opts, label='corrector')
    solution = solver.solve(f, initial, checkCompatibility=checkCompatibility)

    return CorrectorField(solution.w, solution.residualSup, solution.newtonIters)

def linearizedCorrector(f, quadratic):
    """
    Returns the mean zero solution of cof(M) : D²w = f - det M, the first
    order approximation of the corrector.
    """
    _checkCorrectorData(f, quadratic, True)

    kx, ky = wavenumbers(f.spec)
    matrix = quadratic.matrix
    symbol = -(matrix[1, 1] * kx * kx - 2 * matrix[0, 1] * kx * ky + matrix[0, 0] * ky * ky)

    inverseSymbol = np.zeros_like(symbol)
    np.divide(1, symbol, out=inverseSymbol, where=np.abs(symbol) > 1e-12)

    return f.withValues(inverseTransform(inverseSymbol * forwardTransform(f.values - quadratic.det)))

def compositeSolution(quadratic, w, m):
    """
    Returns P + w with w tiled periodically over [0, m·L]², sampled on a box
    grid with the spacing of w.
    """
    if m < 1 or int(m) != m:
        raise ParameterError(f"Tiling count must be a positive integer, got {m}")

    m = int(m)
    cell = w.spec
    if not cell.isTorus or cell.x0 != 0 or cell.y0 != 0:
        raise ParameterError("Correctors must be periodic over a cell starting at the origin")

    spec = GridSpec(cell.nx * m, cell.ny * m, cell.lx * m, cell.ly * m, TOPOLOGY_BOX)
    tiled = np.pad(w.values, ((0, cell.nx * (m - 1) + 1), (0, cell.ny * (m - 1) + 1)), mode='wrap')

    polynomial = spec.sample(quadratic)

    return polynomial.withValues(polynomial.values + tiled)

def _tilingCount(epsilon):
    count = round(1 / epsilon) if epsilon > 0 else 0
    if count < 1 or abs(count * epsilon - 1) > 1e-9:
        raise ParameterError(f"1/ε must be an integer, got ε = {epsilon}")

    return count

def quadraticBlowdown(u, epsilon):
    """
    Returns u_ε(x) = ε²u(x/ε) on [0, 1]².

    u must be sampled on a box grid starting at the origin that covers
    [0, 1/ε]² with an integer number of cells per unit length. Every node of u
    in [0, 1/ε]² becomes a node of u_ε, so the scaling is exact.

    :raises ParameterError: if 1/ε is not an integer or u does not cover the
            needed domain.
    """
    m = _tilingCount(epsilon)
    spec = u.spec

    if spec.isTorus or spec.x0 != 0 or spec.y0 != 0:
        raise ParameterError("Blow-downs need a box grid starting at the origin")

    cellsPerUnit = spec.nx / spec.lx
    if abs(cellsPerUnit - round(cellsPerUnit)) > 1e-9:
        raise ParameterError("Grid must have an integer number of cells per unit length")

    cells = int(round(cellsPerUnit)) * m
    if cells > spec.nx or cells > spec.ny:
        raise ParameterError(f"Grid does not cover [0, {m}]²")

    scaled = GridSpec(cells, cells, 1.0, 1.0, TOPOLOGY_BOX)

    return GridFunction(scaled, epsilon ** 2 * u.values[:cells + 1, :cells + 1])

def fitQuadratic(x, y, values):
    """
    Returns the least squares quadratic through the samples.

    :raises DegenerateFitError: if the samples do not determine a quadratic.
    """
    x, y, values = np.ravel(x), np.ravel(y), np.ravel(values)
    design = np.column_stack((np.ones_like(x), x, y, x * x, x * y, y * y))

    coefficients, _, rank, _ = np.linalg.lstsq(design, values, rcond=None)
    if rank < design.shape[1]:
        raise DegenerateFitError(f"Quadratic fit has rank {rank}")

    matrix = np.array([[2 * coefficients[3], coefficients[4]], [coefficients[4], 2 * coefficients[5]]])
    error = float(np.abs(design @ coefficients - values).max())

    return QuadraticFit(matrix, coefficients[1:3], float(coefficients[0]), error)

def liouvilleCheck(u, epsilons, w=None):
    """
    Blows u down for every ε and identifies the quadratic P from a least
    squares fit at the smallest ε.

    The deviations sup |u_ε - P| are reported for every ε, with the ratios
    between consecutive values of ε.

    :param u: P + w tiled, as built by compositeSolution.
    :param epsilons: the values of ε, each with integer 1/ε.
    :param w: the corrector, used for the bound ε²·sup|w| + h² of the fit
           error.
    :raises DegenerateFitError: if the fit is singular.
    """
    epsilons = sorted((float(epsilon) for epsilon in epsilons), reverse=True)
    blowdowns = [quadraticBlowdown(u, epsilon) for epsilon in epsilons]

    finest = blowdowns[-1]
    x, y = finest.spec.coordinates()
    fit = fitQuadratic(x, y, finest.values)

    deviations = []
    for blowdown in blowdowns:
        x, y = blowdown.spec.coordinates()
        deviations.append(float(np.abs(blowdown.values - fit(x, y)).max()))

    fitBound = None
    if w is not None:
        fitBound = epsilons[-1] ** 2 * float(np.abs(w.values).max()) + finest.spec.h ** 2

    ratios = [coarse / fine for coarse, fine in zip(deviations, deviations[1:]) if fine > 0]
    logger.info("Blow-down deviations %s", deviations)

    return LiouvilleReport(epsilons, deviations, fit, fitBound, ratios)

