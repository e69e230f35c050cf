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
Module for the transport of a vorticity density ρ on the unit torus by the
velocity of the stream function ψ solving det(I + D²ψ) = ρ.

Velocities are perpendicular gradients v = (-ψ_y, ψ_x) unless the literal
convention v = (-ψ_y, -ψ_x) is requested; the latter is not divergence free.

The advection is a finite volume scheme with cells centred at the nodes. The
normal velocity of each cell face is the difference of ψ between the two
corners of the face, so with the default convention the discrete divergence
of every cell vanishes and the total mass telescopes.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy import ndimage

from .Dirichlet import SolverOptions
from .Exceptions import NoConvergenceError, ParameterError, PositivityError, SolvabilityError, StepSizeError
from .Grid import GridFunction, forwardTransform, inverseTransform, spectralGradient, spectralShift, wavenumbers
from .PeriodicSolver import PeriodicSolver

logger = logging.getLogger(__name__)

AVERAGE_TOLERANCE = 1e-10
# Bound of dt·(max|faceU| + max|faceV|)/h. The limited update keeps ρ
# nonnegative up to 1/2.
MAXIMUM_CFL = 0.45
DEFAULT_CFL = 0.4
MAXIMUM_STEP_RETRIES = 5
MAXIMUM_TIME_STEP = 0.05

@dataclass
class VorticityState:
    """
    Positive vorticity density with cell average 1 at time t.
    """

    rho: GridFunction
    t: float = 0.0

    def __post_init__(self):
        if not self.rho.spec.isTorus:
            raise ParameterError("Vorticity densities live on the torus")

        if np.any(self.rho.values <= 0):
            raise PositivityError("Vorticity density must be positive")

        if abs(self.rho.mean() - 1) > AVERAGE_TOLERANCE:
            raise SolvabilityError(f"Vorticity density must have average 1, got {self.rho.mean()!r}")

    @property
    def spec(self):
        return self.rho.spec

    @property
    def mass(self):
        return float(np.sum(self.rho.values) * self.spec.h ** 2)

@dataclass
class StreamFunction:
    psi: GridFunction
    residualSup: float = 0.0
    newtonIters: int = 0

@dataclass
class VelocityField:
    """
    Velocity at the nodes, from spectral derivatives of ψ.
    """

    u: np.ndarray
    v: np.ndarray
    spec: object
    literalVelocity: bool = False

    def divergence(self):
        """
        Returns the spectral divergence at the nodes.
        """
        kx, ky = wavenumbers(self.spec)

        return inverseTransform(1j * kx * forwardTransform(self.u) + 1j * ky * forwardTransform(self.v))

@dataclass
class FaceVelocity:
    """
    Normal velocities at the cell faces.

    faceU[i, j] is the x velocity at (x_i + h/2, y_j) and faceV[i, j] the y
    velocity at (x_i, y_j + h/2).
    """

    spec: object
    faceU: np.ndarray
    faceV: np.ndarray

    @property
    def maxSpeed(self):
        return float(max(np.abs(self.faceU).max(), np.abs(self.faceV).max()))

    @property
    def courantSpeed(self):
        """
        Returns max|faceU| + max|faceV|, the speed of the CFL condition of the
        unsplit update.
        """
        return float(np.abs(self.faceU).max() + np.abs(self.faceV).max())

    def reversed(self):
        return FaceVelocity(self.spec, -self.faceU, -self.faceV)

@dataclass
class StepDiagnostics:
    step: int
    t: float
    mass: float
    rhoMin: float
    rhoMax: float
    residual: float
    levelSetArea: Optional[float] = None

@dataclass
class Trajectory:
    state: VorticityState
    stream: StreamFunction
    diagnostics: List[StepDiagnostics] = field(default_factory=list)

@dataclass
class StationaryState:
    stream: StreamFunction
    state: VorticityState
    iterations: int
    residual: float

def streamFromVorticity(state, opts=None, initial=None):
    """
    Solves det(I + D²ψ) = ρ for the periodic ψ with mean zero.

    :param state: the VorticityState.
    :param opts: the SolverOptions.
    :param initial: the initial ψ, used to warm start Newton.
    :raises NoConvergenceError: if Newton fails.
    """
    solver = PeriodicSolver(state.spec, options=opts, label='stream')
    solution = solver.solve(state.rho, initial)

    return StreamFunction(solution.w, solution.residualSup, solution.newtonIters)

def velocityFromStream(stream, literalVelocity=False):
    """
    Returns the node velocity (-ψ_y, ψ_x), or (-ψ_y, -ψ_x) when literalVelocity
    is set.
    """
    psiX, psiY = spectralGradient(stream.psi)
    sign = -1 if literalVelocity else 1

    return VelocityField(-psiY, sign * psiX, stream.psi.spec, literalVelocity)

def velocityFaces(stream, literalVelocity=False):
    """
    Returns the face velocities of ψ from its values at the cell corners.
    """
    spec = stream.psi.spec
    h = spec.h
    corners = spectralShift(stream.psi, h / 2, h / 2)

    faceU = -(corners - np.roll(corners, 1, axis=1)) / h
    faceV = (corners - np.roll(corners, 1, axis=0)) / h
    if literalVelocity:
        faceV = -faceV

    return FaceVelocity(spec, faceU, faceV)

def faceDivergence(faces):
    """
    Returns the discrete divergence of every cell.
    """
    h = faces.spec.h

    return (faces.faceU - np.roll(faces.faceU, 1, axis=0) + faces.faceV - np.roll(faces.faceV, 1, axis=1)) / h

def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)

def _fluxes(values, velocity, axis):
    """
    Returns the upwind fluxes through the faces after the cells along axis,
    with minmod limited linear reconstructions.
    """
    forward = np.roll(values, -1, axis=axis) - values
    slopes = _minmod(forward, values - np.roll(values, 1, axis=axis))

    left = values + 0.5 * slopes
    right = np.roll(values - 0.5 * slopes, -1, axis=axis)

    return np.maximum(velocity, 0) * left + np.minimum(velocity, 0) * right

def _eulerStep(values, faces, dt):
    h = faces.spec.h
    if dt * faces.courantSpeed > MAXIMUM_CFL * h * (1 + 1e-12):
        raise StepSizeError(f"Time step {dt} violates the CFL condition for speed {faces.courantSpeed}")

    fluxU = _fluxes(values, faces.faceU, 0)
    fluxV = _fluxes(values, faces.faceV, 1)

    return values - dt / h * (fluxU - np.roll(fluxU, 1, axis=0) + fluxV - np.roll(fluxV, 1, axis=1))

def advect(rho, faces, dt):
    """
    Advances ρ_t + div(vρ) = 0 by dt with frozen face velocities, using two
    stage Heun time stepping.

    :param rho: the GridFunction with the density.
    :param faces: the FaceVelocity.
    :param dt: the time step.
    :raises StepSizeError: if dt·(max|faceU| + max|faceV|) exceeds 0.45h.
    """
    if dt < 0:
        raise ParameterError(f"Time step must be nonnegative, got {dt}")

    if rho.spec != faces.spec:
        raise ParameterError("Density and velocity are defined on different grids")

    first = _eulerStep(rho.values, faces, dt)
    second = _eulerStep(first, faces, dt)

    return rho.withValues(0.5 * (rho.values + second))

def levelSetArea(rho, low, high):
    """
    Returns the area of the nodes where low <= ρ <= high.
    """
    inside = (rho.values >= low) & (rho.values <= high)

    return float(np.count_nonzero(inside) * rho.spec.h ** 2)

def smoothedPatch(spec, center=(0.5, 0.5), radius=0.2, mollification=2.0):
    """
    Returns 1 + χ_Ω for the disc Ω, mollified with a Gaussian of width
    mollification·h and renormalized to average 1.
    """
    if radius <= 0 or radius >= 0.5 * min(spec.lx, spec.ly):
        raise ParameterError(f"Patch radius must be in (0, half the period), got {radius}")

    x, y = spec.coordinates()
    dx = (x - center[0] + 0.5 * spec.lx) % spec.lx - 0.5 * spec.lx
    dy = (y - center[1] + 0.5 * spec.ly) % spec.ly - 0.5 * spec.ly

    values = 1 + (dx * dx + dy * dy <= radius * radius).astype(float)
    values = ndimage.gaussian_filter(values, sigma=mollification, mode='wrap')

    return VorticityState(GridFunction(spec, values / values.mean()))

def timeReversal(rho, faces, dt):
    """
    Returns sup |ρ - back(forth(ρ))| for one step with v and one with -v.
    """
    forth = advect(rho, faces, dt)
    back = advect(forth, faces.reversed(), dt)

    return float(np.abs(back.values - rho.values).max())

def _diagnostics(step, state, stream, levels):
    values = state.rho.values
    area = levelSetArea(state.rho, *levels) if levels is not None else None

    return StepDiagnostics(step, state.t, state.mass, float(values.min()), float(values.max()),
                           stream.residualSup, area)

def runSimulation(initial, T, dt=None, cfl=DEFAULT_CFL, literalVelocity=False, opts=None, levels=None,
                  maxStep=MAXIMUM_TIME_STEP):
    """
    Transports the vorticity density until time T.

    Each step is a two stage Heun step; the stream function is solved again at
    each stage, warm started from the previous one.

    :param initial: the initial VorticityState.
    :param T: the final time.
    :param dt: the fixed time step, or None to take cfl·h over the Courant
           speed of both stages, capped by maxStep.
    :param cfl: the Courant number of the adaptive steps.
    :param literalVelocity: whether to use the literal velocity convention.
    :param opts: the SolverOptions of the stream solves.
    :param levels: the (low, high) levels whose level set area is recorded.
    :return: the Trajectory.
    :raises StepSizeError: if a step violates the CFL condition.
    :raises NoConvergenceError: if a stream solve fails.
    """
    if T < 0:
        raise ParameterError(f"Final time must be nonnegative, got {T}")

    if dt is not None and dt <= 0:
        raise ParameterError(f"Time step must be positive, got {dt}")

    if not 0 < cfl <= MAXIMUM_CFL:
        raise ParameterError(f"Courant number must be in (0, {MAXIMUM_CFL}], got {cfl}")

    h = initial.spec.h
    state = initial
    stream = streamFromVorticity(state, opts)
    trajectory = Trajectory(state, stream, [_diagnostics(0, state, stream, levels)])

    step = 0
    while state.t < T - 1e-12:
        faces = velocityFaces(stream, literalVelocity)

        if dt is not None:
            stepSize = dt
        elif faces.courantSpeed > 0:
            stepSize = min(cfl * h / faces.courantSpeed, maxStep)
        else:
            stepSize = maxStep
        stepSize = min(stepSize, T - state.t)

        for attempt in range(MAXIMUM_STEP_RETRIES + 1):
            first = VorticityState(state.rho.withValues(_eulerStep(state.rho.values, faces, stepSize)), state.t)
            firstStream = streamFromVorticity(first, opts, initial=stream.psi)
            secondFaces = velocityFaces(firstStream, literalVelocity)

            # Fixed steps and the last attempt are checked by the second stage itself.
            if (dt is not None or attempt == MAXIMUM_STEP_RETRIES
                    or stepSize * secondFaces.courantSpeed <= cfl * h * (1 + 1e-12)):
                break

            stepSize = cfl * h / secondFaces.courantSpeed
            logger.debug("Step %d: second stage speed %f, retrying with step %f", step + 1,
                         secondFaces.courantSpeed, stepSize)

        second = _eulerStep(first.rho.values, secondFaces, stepSize)
        state = VorticityState(state.rho.withValues(0.5 * (state.rho.values + second)), state.t + stepSize)
        stream = streamFromVorticity(state, opts, initial=firstStream.psi)

        step += 1
        diagnostics = _diagnostics(step, state, stream, levels)
        trajectory.diagnostics.append(diagnostics)

        logger.debug("Step %d: t %f, min %f, max %f", step, state.t, diagnostics.rhoMin, diagnostics.rhoMax)

    trajectory.state = state
    trajectory.stream = stream

    logger.info("Simulation finished after %d steps at t %f", step, state.t)

    return trajectory

def solveStationary(F: Callable, spec, amplitudeBound=1.0, tol=1e-9, maxIters=50, initial=None):
    """
    Returns a stream function and vorticity with ρ = F(ψ)/average(F(ψ)) and
    det(I + D²ψ) = ρ, by fixed point iterations of the stream solve.

    ρ is then a function of ψ, so it is constant along the streamlines and the
    pair is stationary.

    :param F: the vectorized scalar function, with F(0) = 1.
    :param spec: the torus GridSpec.
    :param amplitudeBound: the bound of sup|ψ| above which the iteration is
           considered divergent.
    :param tol: the tolerance of the residual sup|det(I + D²ψ) - ρ(ψ)|.
    :param maxIters: the maximum number of fixed point iterations.
    :param initial: the initial ψ; zero by default.
    :raises NoConvergenceError: if the iteration diverges or does not converge.
    """
    if abs(float(np.atleast_1d(F(np.zeros(1)))[0]) - 1) > 1e-12:
        raise ParameterError("F must be normalized with F(0) = 1")

    opts = SolverOptions(tol=tol / 10)
    stream = StreamFunction(GridFunction(spec, np.zeros(spec.shape)) if initial is None else initial)

    def vorticityOf(psi):
        values = np.broadcast_to(np.asarray(F(psi.values), dtype=float), psi.values.shape)
        if np.any(values <= 0):
            raise NoConvergenceError("Fixed point iterate makes F nonpositive", np.inf, psi)

        return VorticityState(psi.withValues(values / values.mean()))

    solver = PeriodicSolver(spec, options=opts, label='stationary')

    for iterations in range(maxIters + 1):
        state = vorticityOf(stream.psi)
        residual = float(np.abs(solver.residual(stream.psi, state.rho)).max())
        if residual <= tol:
            logger.info("Stationary state found after %d iterations, residual %e", iterations, residual)

            return StationaryState(stream, state, iterations, residual)

        if iterations == maxIters:
            break

        stream = streamFromVorticity(state, opts, initial=stream.psi)
        if np.abs(stream.psi.values).max() > amplitudeBound:
            raise NoConvergenceError("Fixed point iteration left the amplitude bound", residual, stream.psi)

    raise NoConvergenceError(f"Fixed point iteration did not converge after {maxIters} iterations", residual,
                             stream.psi)
