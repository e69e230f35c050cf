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
Module with the calculus on uniform two dimensional grids.

Grids are either boxes, whose nodes include both ends of each side, or tori,
whose nodes exclude the right and top ends (they coincide with the left and
bottom ones). Values are stored as arrays indexed [i, j] with x = x0 + i·h and
y = y0 + j·h.

On boxes the stencils can not be evaluated at the outermost nodes; those nodes
get a copy of the value of the nearest node where the stencil fits, so every
returned field is finite. Regions used for integrals should keep away from the
boundary accordingly.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import fft
from scipy.spatial import ConvexHull, QhullError

from mongeampere import TOPOLOGY_BOX, TOPOLOGY_TORUS
from .Config import config
from .Exceptions import EmptyRegionError, NotConvexError, ParameterError, SpecMismatchError

CONVEXITY_DIRECTIONS = ((1, 0), (0, 1), (1, 1), (1, -1))

# Orthogonal direction pairs of the wide stencils, grouped by stencil width.
MONOTONE_PAIRS = {
    1: (((1, 0), (0, 1)),),
    2: (((1, 1), (1, -1)),),
    3: (((2, 1), (-1, 2)), ((1, 2), (2, -1))),
}

@dataclass(frozen=True)
class GridSpec:
    """
    Uniform grid over a box or a torus.

    nx and ny are cell counts and lx and ly the side lengths; both directions
    must have the same spacing h.
    """

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0
    topology: str = TOPOLOGY_BOX
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ParameterError(f"Grids need at least 4 cells per side, got {self.nx}x{self.ny}")

        if self.lx <= 0 or self.ly <= 0:
            raise ParameterError(f"Grid side lengths must be positive, got {self.lx}x{self.ly}")

        if abs(self.lx / self.nx - self.ly / self.ny) > 1e-12 * (self.lx / self.nx):
            raise ParameterError("Grid spacing must be the same in both directions")

        if self.topology not in (TOPOLOGY_BOX, TOPOLOGY_TORUS):
            raise ParameterError(f"Unknown topology {self.topology}")

    @property
    def h(self):
        """
        Returns the grid spacing.
        """
        return self.lx / self.nx

    @property
    def isTorus(self):
        """
        Returns whether the operators wrap indices.
        """
        return self.topology == TOPOLOGY_TORUS

    @property
    def shape(self):
        """
        Returns the shape of the node arrays.
        """
        if self.isTorus:
            return (self.nx, self.ny)

        return (self.nx + 1, self.ny + 1)

    def coordinates(self):
        """
        Returns the x and y coordinates of the nodes as two arrays.
        """
        x = self.x0 + self.h * np.arange(self.shape[0])
        y = self.y0 + self.h * np.arange(self.shape[1])

        return np.meshgrid(x, y, indexing='ij')

    def sample(self, function):
        """
        Returns the GridFunction with the values of function(x, y) at the nodes.

        The function must accept coordinate arrays.
        """
        x, y = self.coordinates()

        return GridFunction(self, np.broadcast_to(np.asarray(function(x, y), dtype=float), self.shape).copy())

@dataclass
class GridFunction:
    """
    Scalar field with a value per node of its grid.
    """

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

        if self.values.shape != self.spec.shape:
            raise SpecMismatchError(f"Values of shape {self.values.shape} do not match grid shape {self.spec.shape}")

        if not np.all(np.isfinite(self.values)):
            raise ParameterError("Grid function values must be finite")

    def withValues(self, values):
        """
        Returns a GridFunction on the same grid with the given values.
        """
        return GridFunction(self.spec, values)

    def mean(self):
        """
        Returns the average of the node values.
        """
        return float(np.mean(self.values))

@dataclass
class HessianField:
    """
    Symmetric 2x2 matrix per node, with its sorted eigenvalues.
    """

    spec: GridSpec
    uxx: np.ndarray
    uxy: np.ndarray
    uyy: np.ndarray
    lambda1: np.ndarray = field(init=False)
    lambda2: np.ndarray = field(init=False)

    def __post_init__(self):
        halfTrace = 0.5 * (self.uxx + self.uyy)
        radius = np.hypot(0.5 * (self.uxx - self.uyy), self.uxy)

        self.lambda1 = halfTrace - radius
        self.lambda2 = halfTrace + radius

    @property
    def det(self):
        """
        Returns the determinant per node.
        """
        return self.uxx * self.uyy - self.uxy * self.uxy

    @property
    def frobenius(self):
        """
        Returns the Frobenius norm per node.
        """
        return np.sqrt(self.uxx * self.uxx + 2 * self.uxy * self.uxy + self.uyy * self.uyy)

@dataclass
class Region:
    """
    Nonempty set of nodes of a grid, given as a boolean mask.
    """

    spec: GridSpec
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)

        if self.mask.shape != self.spec.shape:
            raise SpecMismatchError(f"Region of shape {self.mask.shape} does not match grid shape {self.spec.shape}")

        if not self.mask.any():
            raise EmptyRegionError("Region has no nodes")

    @classmethod
    def full(cls, spec):
        """
        Returns the region with all the nodes of the grid.
        """
        return cls(spec, np.ones(spec.shape, dtype=bool))

    @classmethod
    def interior(cls, spec, margin=1):
        """
        Returns the nodes at least margin nodes away from the boundary.

        Tori have no boundary, so the full grid is returned for them.
        """
        if spec.isTorus:
            return cls.full(spec)

        mask = np.zeros(spec.shape, dtype=bool)
        mask[margin:spec.shape[0] - margin, margin:spec.shape[1] - margin] = True

        return cls(spec, mask)

    @classmethod
    def disc(cls, spec, center, radius):
        """
        Returns the nodes within the given distance of the center.
        """
        x, y = spec.coordinates()

        return cls(spec, np.hypot(x - center[0], y - center[1]) <= radius)

    @property
    def count(self):
        """
        Returns the number of nodes.
        """
        return int(np.count_nonzero(self.mask))

def shifted(values, di, dj, torus):
    """
    Returns the array whose value at [i, j] is values[i + di, j + dj].

    Indices wrap on tori; on boxes the nodes whose shifted index falls outside
    of the grid get NaN.
    """
    if torus:
        return np.roll(values, shift=(-di, -dj), axis=(0, 1))

    result = np.full(values.shape, np.nan)
    nx, ny = values.shape
    result[max(-di, 0):nx + min(-di, 0), max(-dj, 0):ny + min(-dj, 0)] = \
        values[max(di, 0):nx + min(di, 0), max(dj, 0):ny + min(dj, 0)]

    return result

def fillMargin(values, margin):
    """
    Replaces the outer margin nodes with the nearest inner value.
    """
    if margin == 0:
        return values

    inner = values[margin:-margin, margin:-margin]

    return np.pad(inner, margin, mode='edge')

def _checkSameSpec(u, r):
    if u.spec != r.spec:
        raise SpecMismatchError("Grid function and region are defined on different grids")

def secondDifference(u, direction, scaled=True):
    """
    Returns the centered second difference of u along the given integer
    direction.

    If scaled the difference is divided by |e|²h², so it approximates the second
    directional derivative; otherwise the raw difference is returned. Nodes
    where the stencil does not fit get NaN.
    """
    di, dj = direction
    torus = u.spec.isTorus
    difference = shifted(u.values, di, dj, torus) - 2 * u.values + shifted(u.values, -di, -dj, torus)

    if not scaled:
        return difference

    return difference / ((di * di + dj * dj) * u.spec.h ** 2)

def hessianCentral(u):
    """
    Returns the Hessian of u with second-order central differences.

    The three point stencil is used for the pure derivatives and the four point
    stencil for the mixed one, so the Hessian of quadratics is exact.
    """
    values = u.values
    torus = u.spec.isTorus
    h2 = u.spec.h ** 2

    uxx = secondDifference(u, (1, 0))
    uyy = secondDifference(u, (0, 1))
    uxy = (shifted(values, 1, 1, torus) - shifted(values, 1, -1, torus)
           - shifted(values, -1, 1, torus) + shifted(values, -1, -1, torus)) / (4 * h2)

    if not torus:
        uxx, uxy, uyy = fillMargin(uxx, 1), fillMargin(uxy, 1), fillMargin(uyy, 1)

    return HessianField(u.spec, uxx, uxy, uyy)

def maDet(u):
    """
    Returns det D²u from the central Hessian.
    """
    return u.withValues(hessianCentral(u).det)

def monotoneTerms(u, stencilWidth, floor=None):
    """
    Returns the terms of the wide stencil operator.

    :return: a tuple with the operator values (NaN where no pair fits), the
             index of the minimizing pair per node, and the list of pairs of
             floored directional second differences, one pair of arrays per
             direction pair.
    """
    if stencilWidth not in MONOTONE_PAIRS:
        raise ParameterError(f"Stencil width must be 1, 2 or 3, got {stencilWidth}")

    if floor is None:
        floor = config.getDegeneracyFloor()

    terms = []
    for width in range(1, stencilWidth + 1):
        for first, second in MONOTONE_PAIRS[width]:
            terms.append((first, second,
                          np.maximum(secondDifference(u, first), floor),
                          np.maximum(secondDifference(u, second), floor)))

    products = np.stack([firstTerm * secondTerm for _, _, firstTerm, secondTerm in terms])
    # Pairs whose stencil leaves the box are never selected.
    products = np.where(np.isnan(products), np.inf, products)

    policy = np.argmin(products, axis=0)
    values = np.take_along_axis(products, policy[np.newaxis], axis=0)[0]
    values[np.isinf(values)] = np.nan

    return values, policy, terms

def maMonotone(u, stencilWidth, floor=None):
    """
    Returns the wide stencil Monge-Ampère operator.

    At each node the minimum over orthogonal direction pairs (e1, e2) of the
    product of the floored directional second differences is taken. Width 1 uses
    the axes, width 2 adds the diagonals and width 3 adds the knight moves.

    :raises ParameterError: if the width is not 1, 2 or 3.
    """
    values, _, _ = monotoneTerms(u, stencilWidth, floor)

    if not u.spec.isTorus:
        values = fillMargin(values, 1)

    return u.withValues(values)

def oscillation(u, r):
    """
    Returns max - min of u over the region.
    """
    _checkSameSpec(u, r)

    regionValues = u.values[r.mask]

    return float(regionValues.max() - regionValues.min())

def integrate(u, r):
    """
    Returns the sum of u over the region weighted by the cell area h².
    """
    _checkSameSpec(u, r)

    return float(np.sum(u.values[r.mask]) * u.spec.h ** 2)

def convexityDefect(u, r):
    """
    Returns the most negative raw second difference of u along the axis and
    diagonal directions at the region nodes, or 0 if there is none.
    """
    _checkSameSpec(u, r)

    defect = 0.0
    for direction in CONVEXITY_DIRECTIONS:
        difference = secondDifference(u, direction, scaled=False)[r.mask]
        difference = difference[np.isfinite(difference)]
        if difference.size:
            defect = min(defect, float(difference.min()))

    return defect

def convexityTolerance(u):
    """
    Returns the tolerance of the discrete convexity test.
    """
    return 1e-8 * (1 + float(np.abs(u.values).max()))

def isDiscretelyConvex(u, r):
    """
    Returns whether all the second differences along the axis and diagonal
    directions are nonnegative up to the convexity tolerance.
    """
    return convexityDefect(u, r) >= -convexityTolerance(u)

def gradientImageVolume(u, r):
    """
    Returns the area of the convex hull of the discrete gradients of u at the
    region nodes.

    Both the forward and backward differences are taken in each direction, so
    every node contributes the corners of its discrete subdifferential.

    :raises NotConvexError: if u is not discretely convex on the region.
    """
    defect = convexityDefect(u, r)
    if defect < -convexityTolerance(u):
        raise NotConvexError(f"Second difference {defect:e} below convexity tolerance")

    values = u.values
    torus = u.spec.isTorus
    h = u.spec.h

    xDifferences = ((shifted(values, 1, 0, torus) - values) / h, (values - shifted(values, -1, 0, torus)) / h)
    yDifferences = ((shifted(values, 0, 1, torus) - values) / h, (values - shifted(values, 0, -1, torus)) / h)

    corners = []
    for gx in xDifferences:
        for gy in yDifferences:
            points = np.column_stack((gx[r.mask], gy[r.mask]))
            corners.append(points[np.all(np.isfinite(points), axis=1)])

    points = np.unique(np.vstack(corners), axis=0)
    if len(points) < 3:
        return 0.0

    try:
        return float(ConvexHull(points).volume)
    except QhullError:
        # All the gradients are collinear.
        return 0.0

def hessianLpNorm(u, p, r):
    """
    Returns (Σ |D²u|_F^p h²)^(1/p) over the region.

    :raises ParameterError: if p < 1.
    """
    if p < 1:
        raise ParameterError(f"p must be at least 1, got {p}")

    _checkSameSpec(u, r)

    norms = hessianCentral(u).frobenius[r.mask]

    return float(np.sum(norms ** p) * u.spec.h ** 2) ** (1 / p)

def energyRatio(u, r):
    """
    Returns ∫_r det D²u / (osc u)², the empirical constant of the energy
    inequality, with the oscillation taken over the whole grid.
    """
    if not isDiscretelyConvex(u, Region.full(u.spec)):
        raise NotConvexError("Energy inequality is only defined for convex functions")

    oscillationFull = oscillation(u, Region.full(u.spec))
    if oscillationFull == 0:
        return 0.0

    return integrate(maDet(u), r) / oscillationFull ** 2

def wavenumbers(spec):
    """
    Returns the angular wavenumbers of the torus grid as two broadcastable
    arrays, with the Nyquist modes set to zero.

    Dropping the Nyquist modes keeps every spectral derivative of a real field
    real, and makes the cell average of det(M + D²w) equal to det M for every
    periodic w.
    """
    if not spec.isTorus:
        raise ParameterError("Spectral operators need a torus grid")

    kx = 2 * np.pi * fft.fftfreq(spec.shape[0], d=spec.h)
    ky = 2 * np.pi * fft.fftfreq(spec.shape[1], d=spec.h)

    if spec.shape[0] % 2 == 0:
        kx[spec.shape[0] // 2] = 0
    if spec.shape[1] % 2 == 0:
        ky[spec.shape[1] // 2] = 0

    return kx[:, np.newaxis], ky[np.newaxis, :]

def forwardTransform(values):
    """
    Returns the 2D FFT of the values.
    """
    return fft.fft2(values, workers=config.getThreads())

def inverseTransform(coefficients):
    """
    Returns the real part of the inverse 2D FFT.
    """
    return fft.ifft2(coefficients, workers=config.getThreads()).real

def hessianSpectral(u):
    """
    Returns the Hessian of a periodic u with spectral differentiation.
    """
    kx, ky = wavenumbers(u.spec)
    coefficients = forwardTransform(u.values)

    uxx = inverseTransform(-kx * kx * coefficients)
    uxy = inverseTransform(-kx * ky * coefficients)
    uyy = inverseTransform(-ky * ky * coefficients)

    return HessianField(u.spec, uxx, uxy, uyy)

def spectralGradient(u):
    """
    Returns the gradient of a periodic u with spectral differentiation.
    """
    kx, ky = wavenumbers(u.spec)
    coefficients = forwardTransform(u.values)

    return inverseTransform(1j * kx * coefficients), inverseTransform(1j * ky * coefficients)

def spectralShift(u, sx, sy):
    """
    Returns the values of a periodic u at the nodes moved by (sx, sy), by
    trigonometric interpolation.
    """
    kx, ky = wavenumbers(u.spec)

    return inverseTransform(np.exp(1j * (kx * sx + ky * sy)) * forwardTransform(u.values))
