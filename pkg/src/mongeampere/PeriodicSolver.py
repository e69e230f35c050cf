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
Module with the Newton solver of Monge-Ampère equations on the torus:

    g(x + ∇w) · det(M + D²w) = f

for a periodic w with mean zero. Without target density g the equation is
det(M + D²w) = f, which is the corrector and stream function equation; with
M = I and a target density it is the Brenier equation.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.sparse.linalg import LinearOperator, gmres

from . import Metrics
from .Dirichlet import SolverOptions
from .Exceptions import CompatibilityError, NoConvergenceError, ParameterError, PositivityError, SpecMismatchError
from .Grid import GridFunction, forwardTransform, inverseTransform, spectralGradient, wavenumbers

MINIMUM_STEP = 2.0 ** -20
COMPATIBILITY_TOLERANCE = 1e-10

@dataclass
class PeriodicSolution:
    """
    Mean zero periodic solution with its residual.
    """

    w: GridFunction
    residualSup: float
    newtonIters: int

class PeriodicSolver:
    """
    Damped Newton solver with a matrix free Jacobian.

    Newton steps are solved with GMRES, preconditioned by the inverse of the
    constant coefficient operator with the averaged cofactor matrix, which the
    FFT diagonalizes.
    """

    def __init__(self, spec, matrix=None, target=None, options=None, label='periodic'):
        """
        :param spec: the torus GridSpec.
        :param matrix: the symmetric positive definite matrix M; the identity by
               default.
        :param target: the target density g, or None.
        :param options: the SolverOptions.
        :param label: the name used in logs and metrics.
        """
        if not spec.isTorus:
            raise ParameterError("Periodic solves need a torus grid")

        self._spec = spec
        self._matrix = np.eye(2) if matrix is None else np.asarray(matrix, dtype=float)
        self._options = options or SolverOptions()
        self._label = label

        self._logger = logging.getLogger(f"{__name__}-{label}")

        if not np.allclose(self._matrix, self._matrix.T) or np.any(np.linalg.eigvalsh(self._matrix) <= 0):
            raise ParameterError("Matrix must be symmetric positive definite")

        self._kx, self._ky = wavenumbers(spec)

        self._target = None
        if target is not None:
            if target.spec != spec:
                raise SpecMismatchError("Target density is defined on another grid")

            gx, gy = spectralGradient(target)
            self._target = [ndimage.spline_filter(values, order=3, mode='grid-wrap')
                            for values in (target.values, gx, gy)]

    @property
    def detMatrix(self):
        return float(np.linalg.det(self._matrix))

    def _derivatives(self, values):
        coefficients = forwardTransform(values)
        kx, ky = self._kx, self._ky

        return (inverseTransform(1j * kx * coefficients), inverseTransform(1j * ky * coefficients),
                inverseTransform(-kx * kx * coefficients), inverseTransform(-kx * ky * coefficients),
                inverseTransform(-ky * ky * coefficients))

    def _interpolateTarget(self, wx, wy):
        """
        Returns g and ∇g at x + ∇w.
        """
        spec = self._spec
        x, y = spec.coordinates()
        coordinates = np.array([(x + wx - spec.x0) / spec.h, (y + wy - spec.y0) / spec.h])

        return [ndimage.map_coordinates(values, coordinates, order=3, mode='grid-wrap', prefilter=False)
                for values in self._target]

    def _state(self, values):
        """
        Returns the quantities of the residual and of its Jacobian at w.
        """
        wx, wy, wxx, wxy, wyy = self._derivatives(values)
        hxx, hxy, hyy = self._matrix[0, 0] + wxx, self._matrix[0, 1] + wxy, self._matrix[1, 1] + wyy
        determinant = hxx * hyy - hxy * hxy

        if self._target is None:
            return determinant, (hxx, hxy, hyy), np.ones_like(determinant), None

        density, densityX, densityY = self._interpolateTarget(wx, wy)

        return determinant, (hxx, hxy, hyy), density, (densityX, densityY)

    def residual(self, w, f):
        """
        Returns g(x + ∇w) det(M + D²w) - f at every node.
        """
        determinant, _, density, _ = self._state(w.values)

        return density * determinant - f.values

    def isAdmissible(self, w):
        """
        Returns whether M + D²w is positive definite at every node.
        """
        determinant, (hxx, _, hyy), _, _ = self._state(w.values)

        return bool(np.all(determinant > 0) and np.all(hxx + hyy > 0))

    def _jacobian(self, values):
        spec = self._spec
        determinant, (hxx, hxy, hyy), density, densityGradient = self._state(values)
        size = spec.shape[0] * spec.shape[1]

        def apply(vector):
            dx, dy, dxx, dxy, dyy = self._derivatives(vector.reshape(spec.shape))
            result = density * (hyy * dxx + hxx * dyy - 2 * hxy * dxy)
            if densityGradient is not None:
                result = result + determinant * (densityGradient[0] * dx + densityGradient[1] * dy)

            return result.ravel()

        axx, ayy, axy = np.mean(density * hyy), np.mean(density * hxx), -np.mean(density * hxy)
        symbol = -(axx * self._kx ** 2 + 2 * axy * self._kx * self._ky + ayy * self._ky ** 2)
        inverseSymbol = np.zeros_like(symbol)
        np.divide(1, symbol, out=inverseSymbol, where=np.abs(symbol) > 1e-12)

        def precondition(vector):
            return inverseTransform(inverseSymbol * forwardTransform(vector.reshape(spec.shape))).ravel()

        return (LinearOperator((size, size), matvec=apply, dtype=float),
                LinearOperator((size, size), matvec=precondition, dtype=float))

    def solve(self, f, initial=None, checkCompatibility=True):
        """
        Solves the equation for the right hand side f.

        :param f: the positive right hand side.
        :param initial: the initial iterate; zero by default.
        :param checkCompatibility: whether to require that the average of f is
               det M when there is no target density.
        :return: the PeriodicSolution.
        :raises PositivityError: if f is not positive.
        :raises CompatibilityError: if the average of f is not det M.
        :raises NoConvergenceError: if the line search fails or the maximum
                number of iterations is reached.
        """
        if f.spec != self._spec:
            raise SpecMismatchError("Right hand side is defined on another grid")

        if np.any(f.values <= 0):
            raise PositivityError("Right hand side must be positive")

        if checkCompatibility and self._target is None and abs(f.mean() - self.detMatrix) > COMPATIBILITY_TOLERANCE:
            raise CompatibilityError(f"Average of the right hand side {f.mean()!r} differs from det M {self.detMatrix!r}")

        values = np.zeros(self._spec.shape) if initial is None else initial.values - initial.values.mean()
        w = GridFunction(self._spec, values)
        if not self.isAdmissible(w):
            raise ParameterError("Initial iterate is not admissible")

        residual = self.residual(w, f)
        residualSup = float(np.abs(residual).max())
        iterations = 0

        while residualSup > self._options.tol:
            if iterations >= self._options.maxIters:
                raise NoConvergenceError(f"{self._label} Newton did not converge after {iterations} iterations",
                                         residualSup, w)

            jacobian, preconditioner = self._jacobian(w.values)
            step, info = gmres(jacobian, -residual.ravel(), rtol=1e-9, restart=60, maxiter=5, M=preconditioner)
            if info != 0:
                self._logger.debug("GMRES stopped with status %d", info)

            step = step.reshape(self._spec.shape)
            step -= step.mean()

            w, residual, residualSup = self._dampedStep(w, step, f, residualSup)
            iterations += 1

            self._logger.debug("Newton iteration %d: residual %e", iterations, residualSup)

        Metrics.recordSolve(self._label, iterations, residualSup)
        self._logger.info("Converged in %d iterations, residual %e", iterations, residualSup)

        return PeriodicSolution(w, residualSup, iterations)

    def _dampedStep(self, w, step, f, previousSup):
        length = 1.0

        while length >= MINIMUM_STEP:
            candidate = w.withValues(w.values + length * step)

            if self.isAdmissible(candidate):
                residual = self.residual(candidate, f)
                residualSup = float(np.abs(residual).max())
                if residualSup <= previousSup:
                    return candidate, residual, residualSup
            else:
                self._logger.debug("Step of length %e leaves the admissible set", length)

            length *= self._options.damping

        raise NoConvergenceError(f"{self._label} Newton line search failed", previousSup, w)
