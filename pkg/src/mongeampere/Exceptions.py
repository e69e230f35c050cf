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
Module with the errors raised by the toolkit.

Every error derives from MongeAmpereError. Errors caused by invalid input derive
from ValidationError, which the command line interface reports with exit code 1;
NoConvergenceError is reported with exit code 2.
"""

class MongeAmpereError(Exception):
    """
    Base class for all the errors of the toolkit.
    """

class ValidationError(MongeAmpereError):
    """
    The input of an operation does not satisfy its preconditions.
    """

class ParameterError(ValidationError):
    """
    A scalar parameter is out of its valid range.
    """

class SpecMismatchError(ValidationError):
    """
    Grid functions defined on different grids were combined.
    """

class EmptyRegionError(ValidationError):
    """
    A region has no nodes.
    """

class NotConvexError(ValidationError):
    """
    A grid function is not discretely convex.
    """

class EllipticityError(ValidationError):
    """
    The right hand side is not positive, so the equation is not elliptic.
    """

class PositivityError(ValidationError):
    """
    A density vanishes somewhere.
    """

class CompatibilityError(ValidationError):
    """
    The cell average of a periodic right hand side does not match the
    determinant of the quadratic part.
    """

class SolvabilityError(CompatibilityError):
    """
    A vorticity density does not have unit cell average.
    """

class StepSizeError(ValidationError):
    """
    A time step violates the CFL condition.
    """

class InfeasibleError(ValidationError):
    """
    Marginals with different total mass were given.
    """

class DomainError(ValidationError):
    """
    A transformation leaves no region of the grid where it can be checked.
    """

class DegenerateSectionError(ValidationError):
    """
    A section has zero area.
    """

class DegenerateFitError(ValidationError):
    """
    A least squares fit is rank deficient.
    """

class NotCyclicallyMonotoneError(ValidationError):
    """
    An assignment is not cyclically monotone.

    The violating cycle, as a list of indices, is stored in "witness".
    """

    def __init__(self, message, witness):
        super().__init__(message)

        self.witness = witness

class FormatError(ValidationError):
    """
    A file could not be parsed.

    The 1-based number of the offending line is stored in "lineNumber".
    """

    def __init__(self, message, lineNumber):
        super().__init__(f"line {lineNumber}: {message}")

        self.lineNumber = lineNumber

class NoConvergenceError(MongeAmpereError):
    """
    An iterative solver stopped before reaching its tolerance.

    The last residual is stored in "residual" and the best iterate found so far
    in "iterate".
    """

    def __init__(self, message, residual, iterate=None):
        super().__init__(f"{message} (residual {residual:e})")

        self.residual = residual
        self.iterate = iterate
