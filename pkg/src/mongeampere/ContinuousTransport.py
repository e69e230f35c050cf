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
Module for optimal transport maps between densities on the unit torus and for
the gradient maps of general strictly convex costs.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import ndimage

from .Config import config
from .Exceptions import CompatibilityError, ParameterError, PositivityError, SpecMismatchError
from .Grid import GridFunction, fillMargin, shifted, spectralGradient, spectralShift
from .PeriodicSolver import PeriodicSolver

logger = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-10
MINIMUM_SAMPLES = 10000
CRITICAL_GRADIENT = 1e-8

@dataclass
class DensityField:
    """
    Probability density sampled at the nodes of a grid.
    """

    field: GridFunction

    def __post_init__(self):
        if np.any(self.field.values < 0):
            raise PositivityError("Densities must be nonnegative")

        if abs(self.mass - 1) > MASS_TOLERANCE:
            raise ParameterError(f"Density must have unit mass, got {self.mass!r}")

    @classmethod
    def normalized(cls, u):
        """
        Returns the density proportional to u.
        """
        return cls(u.withValues(u.values / _mass(u)))

    @property
    def spec(self):
        return self.field.spec

    @property
    def values(self):
        return self.field.values

    @property
    def mass(self):
        return _mass(self.field)

    @property
    def rhoMin(self):
        return float(self.field.values.min())

    @property
    def positive(self):
        return self.rhoMin > 0

def _mass(u):
    if u.spec.isTorus:
        return float(np.sum(u.values) * u.spec.h ** 2)

    # Trapezoid rule on boxes.
    weights = np.ones(u.spec.shape)
    weights[0, :] *= 0.5
    weights[-1, :] *= 0.5
    weights[:, 0] *= 0.5
    weights[:, -1] *= 0.5

    return float(np.sum(weights * u.values) * u.spec.h ** 2)

@dataclass
class BrenierPotential:
    """
    Potential φ(x) = ½|x|² + v(x) of the transport map x + ∇v on the torus.
    """

    v: GridFunction
    residualSup: float = 0.0
    newtonIters: int = 0

    @property
    def spec(self):
        return self.v.spec

    def potential(self):
        """
        Returns φ at the nodes.
        """
        x, y = self.spec.coordinates()

        return 0.5 * (x * x + y * y) + self.v.values

    def displacement(self):
        """
        Returns ∇v at the nodes.
        """
        return spectralGradient(self.v)

    def transportMap(self):
        """
        Returns the image x + ∇v of every node, without wrapping.
        """
        x, y = self.spec.coordinates()
        vx, vy = self.displacement()

        return x + vx, y + vy

@dataclass
class CostGradientMap:
    """
    Gradient F(z) = |z|^(q-2) z of the conjugate of the cost |z|^p/p.
    """

    p: float

    def __post_init__(self):
        if not self.p > 1:
            raise ParameterError(f"Cost exponent must be greater than 1, got {self.p}")

    @property
    def q(self):
        return self.p / (self.p - 1)

    def costGradient(self, z):
        """
        Returns ∇C(z) = |z|^(p-2) z.
        """
        return _powerMap(np.asarray(z, dtype=float), self.p)

@dataclass
class PushForwardReport:
    distance: float
    bound: float
    samples: int

    @property
    def passed(self):
        return self.distance <= self.bound

@dataclass
class RegularityReport:
    """
    Largest increments of ∇φ and ∇v over dyadic distances.
    """

    radii: List[float] = field(default_factory=list)
    mapIncrements: List[float] = field(default_factory=list)
    displacementIncrements: List[float] = field(default_factory=list)
    mapExponent: Optional[float] = None
    displacementExponent: Optional[float] = None

@dataclass
class LinearizationReport:
    epsilons: List[float]
    residuals: List[float]
    slope: Optional[float]
    excludedNodes: int

    @property
    def exact(self):
        """
        Returns whether the residual vanished for every ε.
        """
        return all(residual == 0 for residual in self.residuals)

    @property
    def passed(self):
        return self.exact or (self.slope is not None and 1.9 <= self.slope <= 2.1)

def _powerMap(z, exponent):
    norms = np.linalg.norm(z, axis=-1, keepdims=True)
    scale = np.zeros_like(norms)
    np.power(norms, exponent - 2, out=scale, where=norms > 0)

    return scale * z

def costConjugateGradient(costMap, z):
    """
    Returns F(z) = |z|^(q-2) z, with F(0) = 0.

    The last axis of z holds the components.
    """
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ParameterError("Vectors must be finite")

    return _powerMap(z, costMap.q)

def _checkDensities(f, g):
    if f.spec != g.spec:
        raise SpecMismatchError("Densities are defined on different grids")

    if not f.spec.isTorus:
        raise ParameterError("Transport maps are computed on the torus")

    if not f.positive or not g.positive:
        raise PositivityError("Densities must never vanish")

    if abs(f.mass - g.mass) > MASS_TOLERANCE:
        raise CompatibilityError("Densities have different masses")

def solveBrenierTorus(f, g, opts=None, initial=None):
    """
    Returns the potential whose gradient map pushes f forward to g.

    :param f: the source DensityField on the unit torus.
    :param g: the target DensityField on the same grid.
    :param opts: the SolverOptions.
    :param initial: the initial v, zero by default.
    :raises PositivityError: if a density vanishes somewhere.
    :raises NoConvergenceError: if Newton fails.
    """
    _checkDensities(f, g)

    solution = PeriodicSolver(f.spec, target=g.field, options=opts, label='brenier').solve(f.field, initial)

    return BrenierPotential(solution.w, solution.residualSup, solution.newtonIters)

def _wrapToNodes(values, origin, h, count):
    return np.mod(np.rint((values - origin) / h).astype(int), count)

def pushForwardCheck(potential, f, g, samples, seed=None):
    """
    Compares the push forward of f under the map with g.

    Samples are drawn cell by cell from f with uniform jitter in the cell,
    mapped with the bilinear interpolation of ∇v and binned on the nodes of g.
    The L1 distance between the histogram and g passes when it is below the
    safety factor times √(bins/samples) + 2h.

    :raises ParameterError: if no seed is given or too few samples are asked.
    """
    if seed is None:
        raise ParameterError("Push forward checks need an explicit seed")

    if samples < MINIMUM_SAMPLES:
        raise ParameterError(f"At least {MINIMUM_SAMPLES} samples are needed, got {samples}")

    spec = potential.spec
    if f.spec != spec or g.spec != spec:
        raise SpecMismatchError("Potential and densities are defined on different grids")

    rng = np.random.default_rng(seed)
    h = spec.h
    probabilities = f.values.ravel() / f.values.sum()
    cells = rng.choice(probabilities.size, size=samples, p=probabilities)
    i, j = np.unravel_index(cells, spec.shape)

    x = spec.x0 + (i + rng.uniform(-0.5, 0.5, size=samples)) * h
    y = spec.y0 + (j + rng.uniform(-0.5, 0.5, size=samples)) * h

    coordinates = np.array([(x - spec.x0) / h, (y - spec.y0) / h])
    mappedX, mappedY = (position + ndimage.map_coordinates(component, coordinates, order=1, mode='grid-wrap')
                        for component, position in zip(potential.displacement(), (x, y)))

    binsX = _wrapToNodes(mappedX, spec.x0, h, spec.shape[0])
    binsY = _wrapToNodes(mappedY, spec.y0, h, spec.shape[1])
    histogram = np.bincount(binsX * spec.shape[1] + binsY, minlength=probabilities.size) / samples

    distance = float(np.abs(histogram - g.values.ravel() / g.values.sum()).sum())
    bound = config.getPushForwardSafetyFactor() * (np.sqrt(probabilities.size / samples) + 2 * h)

    logger.info("Push forward L1 distance %e, bound %e", distance, bound)

    return PushForwardReport(distance, float(bound), samples)

def _fitExponent(radii, increments):
    radii, increments = np.asarray(radii), np.asarray(increments)
    positive = increments > 0
    if np.count_nonzero(positive) < 2:
        return None

    return float(np.polyfit(np.log(radii[positive]), np.log(increments[positive]), 1)[0])

def regularityReport(potential):
    """
    Tabulates the largest increments of ∇φ and ∇v over distances r = h, 2h,
    4h... up to an eighth of the period, along the axes, and fits their
    exponents. The result is observational.
    """
    spec = potential.spec
    vx, vy = potential.displacement()
    report = RegularityReport()

    steps = 1
    while steps * spec.h <= min(spec.lx, spec.ly) / 8:
        radius = steps * spec.h
        mapIncrement = 0.0
        displacementIncrement = 0.0

        for axis, offset in ((0, (steps, 0)), (1, (0, steps))):
            dx = shifted(vx, offset[0], offset[1], True) - vx
            dy = shifted(vy, offset[0], offset[1], True) - vy
            displacementIncrement = max(displacementIncrement, float(np.hypot(dx, dy).max()))

            # The identity part of ∇φ moves by r along the axis.
            if axis == 0:
                dx = dx + radius
            else:
                dy = dy + radius
            mapIncrement = max(mapIncrement, float(np.hypot(dx, dy).max()))

        report.radii.append(radius)
        report.mapIncrements.append(mapIncrement)
        report.displacementIncrements.append(displacementIncrement)
        steps *= 2

    report.mapExponent = _fitExponent(report.radii, report.mapIncrements)
    report.displacementExponent = _fitExponent(report.radii, report.displacementIncrements)

    return report

def _centralDerivatives(values, spec):
    torus = spec.isTorus
    dx = (shifted(values, 1, 0, torus) - shifted(values, -1, 0, torus)) / (2 * spec.h)
    dy = (shifted(values, 0, 1, torus) - shifted(values, 0, -1, torus)) / (2 * spec.h)

    if not torus:
        dx, dy = fillMargin(dx, 1), fillMargin(dy, 1)

    return dx, dy

def linearizationResidual(psi, costMap, epsilons):
    """
    Measures R(ε) = sup |det(I + ε D(F(∇ψ))) - 1 - ε div F(∇ψ)| and fits the
    slope of log R against log ε.

    Derivatives are central differences. Where ∇ψ vanishes and q < 2, F is
    not differentiable, so those nodes are excluded.

    :param epsilons: at least 4 decreasing values.
    """
    epsilons = [float(epsilon) for epsilon in epsilons]
    if len(epsilons) < 4 or any(later >= earlier for earlier, later in zip(epsilons, epsilons[1:])):
        raise ParameterError("At least 4 decreasing values of ε are needed")

    spec = psi.spec
    gradient = np.stack(_centralDerivatives(psi.values, spec), axis=-1)
    mapped = costConjugateGradient(costMap, gradient)

    g1x, g1y = _centralDerivatives(mapped[..., 0], spec)
    g2x, g2y = _centralDerivatives(mapped[..., 1], spec)

    mask = np.ones(spec.shape, dtype=bool)
    if not spec.isTorus:
        # Two nested central differences need two nodes of margin.
        mask[:2, :] = mask[-2:, :] = mask[:, :2] = mask[:, -2:] = False

    if costMap.q < 2:
        critical = np.linalg.norm(gradient, axis=-1) < CRITICAL_GRADIENT
        mask &= ~critical
    excludedNodes = int(np.count_nonzero(~mask))

    residuals = []
    for epsilon in epsilons:
        determinant = (1 + epsilon * g1x) * (1 + epsilon * g2y) - epsilon * epsilon * g1y * g2x
        residual = np.abs(determinant - 1 - epsilon * (g1x + g2y))[mask]
        residuals.append(float(residual.max()) if residual.size else 0.0)

    slope = _fitExponent(epsilons, residuals) if any(residuals) else None

    return LinearizationReport(epsilons, residuals, slope, excludedNodes)

def _wrapped(values, period):
    return values - period * np.round(values / period)

def inverseConsistency(f, g, opts=None):
    """
    Solves the transport from f to g and from g to f and returns
    sup |S(T(x)) - x| on the torus.
    """
    forward = solveBrenierTorus(f, g, opts)
    backward = solveBrenierTorus(g, f, opts)

    spec = f.spec
    mappedX, mappedY = forward.transportMap()
    coordinates = np.array([(mappedX - spec.x0) / spec.h, (mappedY - spec.y0) / spec.h])
    backX, backY = (mapped + ndimage.map_coordinates(component, coordinates, order=3, mode='grid-wrap')
                    for component, mapped in zip(backward.displacement(), (mappedX, mappedY)))

    x, y = spec.coordinates()

    return float(np.hypot(_wrapped(backX - x, spec.lx), _wrapped(backY - y, spec.ly)).max())

def _translated(density, shift):
    values = spectralShift(density.field, -shift[0], -shift[1])

    return DensityField.normalized(density.field.withValues(np.maximum(values, 0)))

def translationCheck(f, g, shift, opts=None):
    """
    Solves the transport between f and g and between their translates by
    shift, and returns the largest deviation of the second displacement from
    the first one translated.

    Only joint translations keep the displacement periodic, so both densities
    are moved.
    """
    original = solveBrenierTorus(f, g, opts)
    translated = solveBrenierTorus(_translated(f, shift), _translated(g, shift), opts)

    originalX, originalY = (spectralShift(original.v.withValues(component), -shift[0], -shift[1])
                            for component in original.displacement())
    translatedX, translatedY = translated.displacement()

    return float(np.hypot(translatedX - originalX, translatedY - originalY).max())

def monotonicityCheck(potential, pairs, seed):
    """
    Returns the smallest <T(x) - T(y), x - y> / |x - y|² over random pairs of
    distinct nodes; it is positive for the gradient of a strictly convex φ.
    """
    rng = np.random.default_rng(seed)
    mappedX, mappedY = potential.transportMap()
    x, y = potential.spec.coordinates()
    size = x.size

    first = rng.integers(size, size=pairs)
    second = rng.integers(size, size=pairs)
    distinct = first != second
    first, second = first[distinct], second[distinct]

    deltaX = x.ravel()[first] - x.ravel()[second]
    deltaY = y.ravel()[first] - y.ravel()[second]
    products = ((mappedX.ravel()[first] - mappedX.ravel()[second]) * deltaX
                + (mappedY.ravel()[first] - mappedY.ravel()[second]) * deltaY)

    return float(np.min(products / (deltaX ** 2 + deltaY ** 2)))
