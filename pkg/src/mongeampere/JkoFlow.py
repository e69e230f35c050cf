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
Module for Wasserstein gradient flows of densities on the unit circle, stepped
with the minimizing movement

    ρ_{k+1} = argmin (1/2τ) W²(ρ, ρ_k) + E(ρ).

A density is a vector of n bin masses. The Wasserstein distance on the circle
is computed from the quantile functions, extended by Q(s + 1) = Q(s) + 1, as
the minimum over the offset θ of ∫₀¹ |Q_ρ(s) - Q_μ(s + θ)|² ds. Bins are read
either as point masses at their centres or as constant densities over the bin.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import Metrics
from .Exceptions import NoConvergenceError, ParameterError, SpecMismatchError

logger = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-12
EMPTY_BIN = 1e-13
ENTROPY_FLOOR = 1e-14
CERTIFICATE_PERTURBATIONS = 100
CERTIFICATE_SIZE = 1e-4

MODE_CENTERS = 'centers'
MODE_CELLS = 'cells'

FUNCTIONAL_ENTROPY = 'entropy'
FUNCTIONAL_POROUS = 'porous'
FUNCTIONAL_QUARTIC = 'quartic'
FUNCTIONALS = (FUNCTIONAL_ENTROPY, FUNCTIONAL_POROUS, FUNCTIONAL_QUARTIC)

@dataclass
class Density1D:
    """
    Nonnegative masses of n equal bins of the unit circle, summing to 1.
    """

    masses: np.ndarray

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float).reshape(-1)

        if self.masses.size < 2:
            raise ParameterError("Densities need at least 2 bins")

        if not np.all(np.isfinite(self.masses)) or np.any(self.masses < 0):
            raise ParameterError("Bin masses must be finite and nonnegative")

        if abs(self.masses.sum() - 1) > MASS_TOLERANCE:
            raise ParameterError(f"Bin masses must sum to 1, got {self.masses.sum()!r}")

    @classmethod
    def uniform(cls, n):
        return cls(np.full(n, 1 / n))

    @classmethod
    def fromFunction(cls, n, function):
        """
        Returns the density with bin masses proportional to the integrals of
        the function over the bins, computed with 8 point Gauss-Legendre
        quadrature.
        """
        nodes, weights = np.polynomial.legendre.leggauss(8)
        h = 1 / n
        left = h * np.arange(n)
        points = left[:, np.newaxis] + 0.5 * h * (nodes[np.newaxis, :] + 1)

        masses = 0.5 * h * np.sum(weights * np.asarray(function(points), dtype=float), axis=1)
        if np.any(masses < 0):
            raise ParameterError("Function must be nonnegative")

        return cls(masses / masses.sum())

    @property
    def n(self):
        return self.masses.size

    @property
    def h(self):
        return 1 / self.masses.size

    @property
    def centers(self):
        return self.h * (np.arange(self.n) + 0.5)

@dataclass
class FlowConfig:
    """
    Parameters of a gradient flow.

    m is the exponent of the porous medium energy Σ h(ρ/h)^m/(m - 1), and
    wellDepth the scale of the double well potential of the quartic energy.
    """

    tau: float
    functional: str = FUNCTIONAL_ENTROPY
    steps: int = 1
    m: float = 2.0
    wellDepth: float = 1.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ParameterError(f"Time step must be positive, got {self.tau}")

        if self.functional not in FUNCTIONALS:
            raise ParameterError(f"Unknown functional {self.functional}, expected one of {', '.join(FUNCTIONALS)}")

        if self.steps < 1:
            raise ParameterError(f"Number of steps must be positive, got {self.steps}")

        if self.m <= 1:
            raise ParameterError(f"Porous medium exponent must be larger than 1, got {self.m}")

@dataclass
class FlowTrajectory:
    densities: List[Density1D]
    energies: List[float]
    distances: List[float] = field(default_factory=list)

@dataclass
class DecayReport:
    rate: Optional[float]
    residual: float
    converged: bool

class _Quantile:
    """
    Extended quantile function of the nonempty bins of a mass vector.

    In bin i the quantile runs linearly from starts[i] to starts[i] + widths[i]
    while the cumulated mass runs over [cumulated[i], cumulated[i] + masses[i]].
    """

    def __init__(self, masses, mode):
        h = 1 / masses.size
        kept = np.flatnonzero(masses > EMPTY_BIN)
        if kept.size == 0:
            raise ParameterError("Density has no mass")

        self.bins = kept
        self.masses = masses[kept]
        self.cumulated = np.concatenate(([0.0], np.cumsum(masses)))[kept]
        self.total = float(masses.sum())

        if mode == MODE_CENTERS:
            self.starts = h * (kept + 0.5)
            self.widths = np.zeros(kept.size)
        else:
            self.starts = h * kept
            self.widths = np.full(kept.size, h)

    def pieces(self, s):
        """
        Returns the piece and period of the extended quantile at every s,
        taking right limits at the jumps.
        """
        period = np.floor(s)
        piece = np.searchsorted(self.cumulated, s - period, side='right') - 1

        return np.clip(piece, 0, self.bins.size - 1), period

    def evaluate(self, s, piece, period):
        offset = s - period - self.cumulated[piece]

        return period + self.starts[piece] + self.widths[piece] * offset / self.masses[piece]

def _modeOf(mode):
    if mode not in (MODE_CENTERS, MODE_CELLS):
        raise ParameterError(f"Unknown mode {mode}")

    return mode

def _coupling(rho, mu, theta):
    """
    Returns the sub-intervals of [0, total] on which both quantiles are linear,
    with the errors Q_ρ(s) - Q_μ(s + θ) at their ends.
    """
    breakpoints = [[0.0], rho.cumulated, [rho.total]]
    for period in (-2, -1, 0, 1, 2):
        breakpoints.append(mu.cumulated + period - theta)

    points = np.unique(np.concatenate(breakpoints))
    points = points[(points >= 0) & (points <= rho.total)]

    left, right = points[:-1], points[1:]
    keep = right > left
    left, right = left[keep], right[keep]
    middle = 0.5 * (left + right)

    rhoPiece = np.clip(np.searchsorted(rho.cumulated, middle, side='right') - 1, 0, rho.bins.size - 1)
    muPiece, muPeriod = mu.pieces(middle + theta)

    startError = rho.evaluate(left, rhoPiece, 0) - mu.evaluate(left + theta, muPiece, muPeriod)
    endError = rho.evaluate(right, rhoPiece, 0) - mu.evaluate(right + theta, muPiece, muPeriod)

    return left, right, rhoPiece, startError, endError

def _squaredDistanceAt(rho, mu, theta):
    left, right, _, startError, endError = _coupling(rho, mu, theta)

    return float(np.sum((right - left) * (startError ** 2 + startError * endError + endError ** 2)) / 3)

def _optimalOffset(rho, mu, mode):
    if mode == MODE_CENTERS:
        # Both quantiles are piecewise constant, so the cost is piecewise linear
        # in θ with kinks where two cumulated masses align.
        candidates = (rho.cumulated[:, np.newaxis] - mu.cumulated[np.newaxis, :]).ravel()
        candidates = np.concatenate([candidates + period for period in (-1, 0, 1)] + [[-1.0, 1.0]])
        candidates = np.unique(candidates[np.abs(candidates) <= 1])

        costs = [_squaredDistanceAt(rho, mu, theta) for theta in candidates]
        best = int(np.argmin(costs))

        return float(candidates[best]), float(costs[best])

    result = minimize_scalar(lambda theta: _squaredDistanceAt(rho, mu, theta), bounds=(-1, 1), method='bounded',
                             options={'xatol': 1e-12})

    return float(result.x), float(result.fun)

def _checkPair(rho, mu):
    if rho.n != mu.n:
        raise SpecMismatchError(f"Densities have {rho.n} and {mu.n} bins")

def w2OneD(rho, mu, mode=MODE_CELLS):
    """
    Returns the Wasserstein-2 distance between two densities on the circle.

    In the centers mode the bins are point masses and the minimum over the
    offset is searched exactly among the kinks of the cost. In the cells mode
    the bins are constant densities and the cost, convex in the offset, is
    minimized with a bounded scalar search.

    :raises SpecMismatchError: if the bin counts differ.
    """
    _checkPair(rho, mu)
    mode = _modeOf(mode)

    _, squared = _optimalOffset(_Quantile(rho.masses, mode), _Quantile(mu.masses, mode), mode)

    return float(np.sqrt(max(squared, 0.0)))

def circleCostMatrix(n):
    """
    Returns the squared circle distances between the bin centres.
    """
    centers = (np.arange(n) + 0.5) / n
    distances = np.abs(centers[:, np.newaxis] - centers[np.newaxis, :])

    return np.minimum(distances, 1 - distances) ** 2

def w2SquaredWithGradient(masses, previous):
    """
    Returns W² between the masses and the previous density, read as constant
    densities over the bins, with its gradient in the masses.

    The gradient holds the optimal offset fixed. With e(s) = Q_ρ(s) - G(s) and
    G(s) = Q_μ(s + θ), bin j contributes -2h·b_j and every later bin i
    contributes -2h·a_i, where

        a_i = (1/m_i) ∫ e ds,    b_j = (1/m_j²) ∫ e (s - M_j) ds

    over the bin, M_j being the mass before bin j. Empty bins use the limits
    of a and b as the mass vanishes.
    """
    n = masses.size
    h = 1 / n
    rho = _Quantile(masses, MODE_CELLS)
    mu = _Quantile(previous, MODE_CELLS)

    theta, squared = _optimalOffset(rho, mu, MODE_CELLS)

    left, right, rhoPiece, startError, endError = _coupling(rho, mu, theta)
    length = right - left
    bins = rho.bins[rhoPiece]
    before = np.concatenate(([0.0], np.cumsum(masses)))[:-1]
    startOffset, endOffset = left - before[bins], right - before[bins]

    firstMoment = np.bincount(bins, length * (startError + endError) / 2, minlength=n)
    secondMoment = np.bincount(bins, length * (2 * startError * startOffset + startError * endOffset
                                               + endError * startOffset + 2 * endError * endOffset) / 6,
                               minlength=n)

    a = np.empty(n)
    b = np.empty(n)
    full = masses > EMPTY_BIN
    a[full] = firstMoment[full] / masses[full]
    b[full] = secondMoment[full] / masses[full] ** 2

    empty = ~full
    if np.any(empty):
        piece, period = mu.pieces(before[empty] + theta)
        jump = h * np.flatnonzero(empty) - mu.evaluate(before[empty] + theta, piece, period)
        a[empty] = jump + h / 2
        b[empty] = jump / 2 + h / 3

    piece, period = mu.pieces(np.array([rho.total + theta]))
    boundary = float((1 - mu.evaluate(np.array([rho.total + theta]), piece, period)[0]) ** 2)

    later = np.cumsum(a[::-1])[::-1] - a
    gradient = boundary - 2 * h * later - 2 * h * b

    return squared, gradient

def _potential(n, wellDepth):
    centers = (np.arange(n) + 0.5) / n

    return wellDepth * ((centers - 0.5) ** 2 - 1 / 16) ** 2

def energy(masses, cfg):
    """
    Returns the energy of the bin masses and its gradient.

    The entropy is Σ m log(m/h), the porous medium energy Σ h(m/h)^m/(m - 1)
    and the quartic energy the entropy plus Σ V m, with the double well
    V(x) = wellDepth·((x - ½)² - 1/16)².
    """
    masses = np.asarray(masses, dtype=float)
    h = 1 / masses.size

    if cfg.functional == FUNCTIONAL_POROUS:
        density = np.maximum(masses, 0) / h

        return float(h * np.sum(density ** cfg.m) / (cfg.m - 1)), cfg.m / (cfg.m - 1) * density ** (cfg.m - 1)

    positive = masses > 0
    logarithm = np.zeros_like(masses)
    logarithm[positive] = np.log(masses[positive] / h)

    value = float(np.sum(masses[positive] * logarithm[positive]))
    gradient = np.where(positive, logarithm + 1, -np.inf)

    if cfg.functional == FUNCTIONAL_QUARTIC:
        potential = _potential(masses.size, cfg.wellDepth)
        value += float(np.sum(potential * masses))
        gradient = gradient + potential

    return value, gradient

def equilibrium(cfg, n):
    """
    Returns the minimizer of the energy over densities with n bins.
    """
    if cfg.functional == FUNCTIONAL_QUARTIC:
        weights = np.exp(-_potential(n, cfg.wellDepth))

        return Density1D(weights / weights.sum())

    return Density1D.uniform(n)

def _lowerBound(cfg):
    return 0.0 if cfg.functional == FUNCTIONAL_POROUS else ENTROPY_FLOOR

def _certify(objective, masses, lowerBound, seed):
    """
    Returns a feasible point improving on the masses among random perturbations,
    or None.
    """
    rng = np.random.default_rng(seed)
    value = objective(masses)
    tolerance = 1e-10 * max(1.0, abs(value))

    for _ in range(CERTIFICATE_PERTURBATIONS):
        direction = rng.standard_normal(masses.size)
        direction -= direction.mean()
        candidate = np.maximum(masses + CERTIFICATE_SIZE * direction / np.abs(direction).max(), lowerBound)
        candidate /= candidate.sum()

        if objective(candidate) < value - tolerance:
            return candidate

    return None

def jkoStep(previous, cfg, seed=0):
    """
    Returns the minimizer of (1/2τ) W²(ρ, previous) + E(ρ) over the densities
    with the bin count of previous.

    The minimization is done with SLSQP on the simplex, with the exact gradient
    of the distance term. The minimizer is then certified by 100 seeded random
    perturbations, none of which may improve the objective, and the energy
    inequality E(ρ) + (1/2τ) W²(ρ, previous) <= E(previous) is checked.

    :raises NoConvergenceError: if the optimizer or the certificate fails; the
            best point found is attached.
    """
    n = previous.n
    lowerBound = _lowerBound(cfg)
    previousMasses = previous.masses

    def objective(masses):
        return w2SquaredWithGradient(masses, previousMasses)[0] / (2 * cfg.tau) + energy(masses, cfg)[0]

    def objectiveWithGradient(masses):
        squared, squaredGradient = w2SquaredWithGradient(masses, previousMasses)
        value, gradient = energy(masses, cfg)

        return squared / (2 * cfg.tau) + value, squaredGradient / (2 * cfg.tau) + gradient

    start = np.maximum(previousMasses, lowerBound)
    start /= start.sum()

    result = minimize(objectiveWithGradient, start, jac=True, method='SLSQP',
                      bounds=[(lowerBound, 1.0)] * n,
                      constraints=[{'type': 'eq', 'fun': lambda masses: masses.sum() - 1,
                                    'jac': lambda masses: np.ones_like(masses)}],
                      options={'ftol': 1e-15, 'maxiter': 500})

    masses = np.maximum(result.x, lowerBound)
    masses /= masses.sum()

    # Status 8 is a line search stop at the attainable precision; the
    # certificate below decides whether the point is a minimizer.
    if not result.success and result.status != 8:
        raise NoConvergenceError(f"JKO step did not converge: {result.message}", float('nan'), Density1D(masses))

    improvement = _certify(objective, masses, lowerBound, seed)
    if improvement is not None:
        raise NoConvergenceError("JKO step minimizer was improved by a perturbation", float('nan'),
                                 Density1D(improvement))

    squared, _ = w2SquaredWithGradient(masses, previousMasses)
    newEnergy = energy(masses, cfg)[0]
    previousEnergy = energy(previousMasses, cfg)[0]
    if newEnergy + squared / (2 * cfg.tau) > previousEnergy + 1e-12 * max(1.0, abs(previousEnergy)):
        raise NoConvergenceError("JKO step violates the energy inequality",
                                 newEnergy + squared / (2 * cfg.tau) - previousEnergy, Density1D(masses))

    Metrics.recordSolve('jko', int(result.nit), float(np.sqrt(squared)))

    return Density1D(masses)

def runFlow(initial, cfg, seed=0):
    """
    Returns the trajectory of cfg.steps JKO steps from the initial density.
    """
    densities = [initial]
    energies = [energy(initial.masses, cfg)[0]]
    distances = []

    for step in range(cfg.steps):
        current = jkoStep(densities[-1], cfg, seed + step)

        distances.append(w2OneD(current, densities[-1]))
        densities.append(current)
        energies.append(energy(current.masses, cfg)[0])

        logger.debug("Step %d: energy %e, distance %e", step + 1, energies[-1], distances[-1])

    logger.info("Flow of %d steps finished with energy %e", cfg.steps, energies[-1])

    return FlowTrajectory(densities, energies, distances)

def decayRate(trajectory, tau, limit):
    """
    Fits log ‖ρ_k - ρ_∞‖₂ = c - rate·kτ by least squares.

    :param trajectory: the FlowTrajectory, with at least 10 steps.
    :param tau: the time step.
    :param limit: the equilibrium Density1D.
    :return: the DecayReport; the rate is None and converged is set if the
             trajectory starts at equilibrium.
    """
    densities = trajectory.densities
    if len(densities) < 11:
        raise ParameterError(f"Decay rates need at least 10 steps, got {len(densities) - 1}")

    deviations = np.array([np.linalg.norm(density.masses - limit.masses) for density in densities])
    if deviations[0] <= 1e-12:
        return DecayReport(None, 0.0, True)

    times = tau * np.arange(len(densities))
    usable = deviations > 1e-13
    coefficients, residuals, *_ = np.polyfit(times[usable], np.log(deviations[usable]), 1, full=True)
    residual = float(np.sqrt(residuals[0] / usable.sum())) if residuals.size else 0.0

    return DecayReport(float(-coefficients[0]), residual, False)

def tauRefinement(initial, cfg, seed=0):
    """
    Returns the constant C of ‖ρ_τ(T) - ρ_{τ/2}(T)‖₂ = C·τ, comparing the flow
    with the flow of half the time step and twice the steps.
    """
    coarse = runFlow(initial, cfg, seed)
    fine = runFlow(initial, FlowConfig(cfg.tau / 2, cfg.functional, 2 * cfg.steps, cfg.m, cfg.wellDepth), seed)

    difference = np.linalg.norm(coarse.densities[-1].masses - fine.densities[-1].masses)

    return float(difference / cfg.tau)
