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

# Disable message for the module but enable it again for the rest of the file.
# pylint: disable=invalid-name
# pylint: enable=invalid-name

"""
Module to provide the command line interface of the toolkit.

Commands have the form "mongeampere <group> <action> [flags]". Densities,
right hand sides and boundary data are given either as a grid file or as one
of the built-in generators:

- const[:c], the constant c (1 by default);
- quad, the quadratic ½|x|²;
- cosine[:a], 1 + a·cos(2πx)·cos(2πy) (a = 0.1 by default);
- patch, a smoothed vortex patch of average 1 (torus only);
- manufactured, (1 + |x|²)e^|x|² as a right hand side and e^(|x|²/2) as
  boundary data.

Every action also accepts "--run FILE" with "key = value" lines for its
flags; flags given in the command line take precedence.
"""

import argparse
import logging
import os
import sys

import numpy as np

import mongeampere
from mongeampere import EXIT_NO_CONVERGENCE, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, TOPOLOGY_TORUS
from . import FileFormats, Metrics
from .Config import RunConfig, config
from .ContinuousTransport import DensityField, pushForwardCheck, solveBrenierTorus
from .Dirichlet import (AffineMap, SolverOptions, checkAffineInvariance, checkQuadraticDilation, checkTranslation,
                        solveDirichlet, solveMonotone)
from .DiscreteTransport import solveAssignment, solvePlan
from .Exceptions import NoConvergenceError, ParameterError, SpecMismatchError, ValidationError
from .Grid import GridSpec
from .Homogenization import QuadraticForm, compositeSolution, liouvilleCheck, quadraticBlowdown, solveCorrector
from .JkoFlow import FUNCTIONALS, Density1D, FlowConfig, runFlow
from .Verify import verifyAll
from .Vorticity import DEFAULT_CFL, VorticityState, runSimulation, smoothedPatch

logger = logging.getLogger(__name__)

ROLE_DENSITY = 'density'
ROLE_BOUNDARY = 'boundary'

GLOBAL_KEYS = ('config', 'verbose', 'version', 'group', 'action', 'handler', 'required', 'run', 'metrics')

class ArgumentParser(argparse.ArgumentParser):
    """
    ArgumentParser that exits with the usage exit code on errors.

    The default exit code of argparse, 2, is the code of solver failures.
    """

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")

def _generator(text, spec, role=ROLE_DENSITY):
    """
    Returns the GridFunction described by a generator or read from a grid file.
    """
    name, _, parameter = text.partition(':')

    try:
        value = float(parameter) if parameter else None
    except ValueError as valueError:
        raise ParameterError(f"Invalid generator parameter in {text}") from valueError

    if name == 'const':
        constant = 1.0 if value is None else value
        return spec.sample(lambda x, y: np.full_like(x, constant))

    if name == 'quad':
        return spec.sample(lambda x, y: 0.5 * (x * x + y * y))

    if name == 'cosine':
        amplitude = 0.1 if value is None else value
        return spec.sample(lambda x, y: 1 + amplitude * np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y))

    if name == 'patch':
        if not spec.isTorus:
            raise ParameterError("Vortex patches are generated on the torus")

        return smoothedPatch(spec).rho

    if name == 'manufactured':
        if role == ROLE_BOUNDARY:
            return spec.sample(lambda x, y: np.exp((x * x + y * y) / 2))

        return spec.sample(lambda x, y: (1 + x * x + y * y) * np.exp(x * x + y * y))

    if not os.path.exists(text):
        raise ParameterError(f"Unknown generator or missing grid file: {text}")

    u = FileFormats.readGrid(text)
    if u.spec != spec:
        raise SpecMismatchError(f"Grid file {text} does not match the {spec.nx}x{spec.ny} {spec.topology} grid")

    return u

def _floats(text, count=None):
    try:
        values = [float(value) for value in text.split(',')]
    except ValueError as valueError:
        raise ParameterError(f"Invalid list of numbers: {text}") from valueError

    if count is not None and len(values) != count:
        raise ParameterError(f"Expected {count} numbers, got {len(values)}")

    return values

def _quadraticForm(text):
    a, b, c = _floats(text, 3)

    return QuadraticForm(np.array([[a, b], [b, c]]))

def _solverOptions(args):
    options = {}
    if args.tol is not None:
        options['tol'] = args.tol
    if args.max_iters is not None:
        options['maxIters'] = args.max_iters

    return SolverOptions(**options)

def _torus(n):
    return GridSpec(n, n, topology=TOPOLOGY_TORUS)

def _report(**values):
    for key, value in values.items():
        if isinstance(value, (list, tuple, np.ndarray)):
            value = ' '.join(FileFormats.formatNumber(item) if isinstance(item, float) else str(item)
                             for item in np.asarray(value).ravel().tolist())
        elif isinstance(value, float):
            value = FileFormats.formatNumber(value)

        print(f"{key} {value}")

def maSolve(args):
    spec = GridSpec(args.n, args.n)
    f = _generator(args.f, spec)
    boundary = _generator(args.boundary, spec, ROLE_BOUNDARY)

    solve = solveMonotone if args.scheme == 'monotone' else solveDirichlet
    solution = solve(f, boundary, _solverOptions(args))

    FileFormats.writeGrid(args.out, solution.u)
    _report(scheme=solution.scheme, iterations=solution.newtonIters, residual=solution.residualSup)

    return EXIT_OK

def maInvariance(args):
    spec = GridSpec(args.n, args.n)
    f = _generator(args.f, spec)
    solution = solveDirichlet(f, _generator(args.boundary, spec, ROLE_BOUNDARY), _solverOptions(args))

    rng = np.random.default_rng(args.seed)
    center = (spec.x0 + spec.lx / 2, spec.y0 + spec.ly / 2)

    reports = []
    for _ in range(args.maps):
        matrix = np.eye(2) + rng.uniform(-0.3, 0.3, size=(2, 2))
        matrix /= np.sqrt(np.linalg.det(matrix))
        reports.append(('affine', checkAffineInvariance(solution, f, AffineMap.aboutPoint(matrix, center))))

    reports.append(('translation', checkTranslation(solution, f, (0.1 * spec.lx, -0.05 * spec.ly))))
    reports.append(('dilation', checkQuadraticDilation(solution, f, 2)))

    for name, report in reports:
        print(f"{name} {FileFormats.formatNumber(report.residual)} {FileFormats.formatNumber(report.tolerance)} "
              f"{'passed' if report.passed else 'failed'}")

    return EXIT_OK if all(report.passed for _, report in reports) else EXIT_VALIDATION

def otAssign(args):
    assignment = solveAssignment(FileFormats.readCloud(args.x), FileFormats.readCloud(args.y))

    if args.out:
        FileFormats.writeAssignment(args.out, assignment)

    _report(cost=assignment.totalCost, permutation=assignment.permutation)

    return EXIT_OK

def otPlan(args):
    plan = solvePlan(FileFormats.readCloud(args.x), FileFormats.readCloud(args.y))

    if args.out:
        FileFormats.writePlan(args.out, plan)

    _report(cost=plan.cost, marginalerror=plan.marginalError(), slackness=plan.slackness)

    return EXIT_OK

def otMap(args):
    spec = _torus(args.n)
    f = DensityField.normalized(_generator(args.f, spec))
    g = DensityField.normalized(_generator(args.g, spec))

    potential = solveBrenierTorus(f, g, _solverOptions(args))

    if args.out:
        FileFormats.writeGrid(args.out, potential.v)

    _report(iterations=potential.newtonIters, residual=potential.residualSup)

    if args.samples:
        report = pushForwardCheck(potential, f, g, args.samples, args.seed)
        _report(pushforward=report.distance, bound=report.bound)

        if not report.passed:
            return EXIT_VALIDATION

    return EXIT_OK

def homogCorrector(args):
    quadratic = _quadraticForm(args.matrix)
    spec = _torus(args.n)
    f = _generator(args.f, spec)

    corrector = solveCorrector(f, quadratic, _solverOptions(args))

    FileFormats.writeGrid(args.out, corrector.w)
    _report(iterations=corrector.newtonIters, residual=corrector.residualSup,
            amplitude=float(np.abs(corrector.w.values).max()))

    return EXIT_OK

def homogBlowdown(args):
    quadratic = _quadraticForm(args.matrix)
    w = FileFormats.readGrid(args.corrector)
    epsilons = _floats(args.epsilons)

    u = compositeSolution(quadratic, w, args.tiles)
    report = liouvilleCheck(u, epsilons, w)

    if args.out:
        FileFormats.writeGrid(args.out, quadraticBlowdown(u, min(epsilons)))

    _report(deviations=report.deviations, ratios=report.ratios, matrix=report.fit.matrix, fiterror=report.fit.error)

    return EXIT_OK if report.passed else EXIT_VALIDATION

def vortRun(args):
    spec = _torus(args.n)
    initial = VorticityState(_generator(args.rho, spec))
    levels = tuple(_floats(args.levels, 2)) if args.levels else None

    trajectory = runSimulation(initial, args.T, args.dt, args.cfl, args.literal, _solverOptions(args), levels)

    FileFormats.writeTrajectory(args.out, trajectory.diagnostics)
    if args.final:
        FileFormats.writeGrid(args.final, trajectory.state.rho)

    last = trajectory.diagnostics[-1]
    _report(steps=last.step, t=last.t, mass=last.mass, min=last.rhoMin, max=last.rhoMax)

    return EXIT_OK

def _density1D(text, n):
    name, _, parameter = text.partition(':')

    if name == 'const':
        return Density1D.uniform(n)

    if name == 'cosine':
        amplitude = float(parameter) if parameter else 0.2
        return Density1D.fromFunction(n, lambda x: 1 + amplitude * np.cos(2 * np.pi * x))

    if name == 'bump':
        width = float(parameter) if parameter else 0.125
        return Density1D.fromFunction(n, lambda x: np.maximum(1 - ((x - 0.5) / width) ** 2, 0))

    raise ParameterError(f"Unknown density generator: {text}")

def jkoRun(args):
    cfg = FlowConfig(args.tau, args.functional, args.steps, args.m, args.well_depth)

    trajectory = runFlow(_density1D(args.rho, args.n), cfg, args.seed)

    FileFormats.writeFlow(args.out, trajectory, cfg.tau)
    _report(steps=cfg.steps, energy=trajectory.energies[-1])

    return EXIT_OK

def verifyRun(args):
    results = verifyAll(args.out, args.quick, args.seed)

    for result in results:
        print(f"{result.name} {'passed' if result.passed else 'failed'}")

    return EXIT_OK if all(result.passed for result in results) else EXIT_VALIDATION

def _addSolverArguments(parser):
    parser.add_argument("--tol", help="residual tolerance of Newton", type=float)
    parser.add_argument("--max-iters", help="maximum number of Newton iterations", type=int)

def _buildParser():
    common = ArgumentParser(add_help=False)
    common.add_argument("--run", help="key = value file with the flags of the action")
    common.add_argument("--metrics", help="write the solver metrics to this file")

    parser = ArgumentParser(prog='mongeampere', description="Monge-Ampère and optimal transport toolkit")
    parser.add_argument("-c", "--config", help="path to configuration file", default="mongeampere.conf")
    parser.add_argument("-v", "--verbose", help="verbose mode", action="store_true")
    parser.add_argument("--version", help="show version and quit", action="store_true")

    groups = parser.add_subparsers(dest='group', metavar='group')
    groupActions = {
        name: groups.add_parser(name, help=description).add_subparsers(dest='action', metavar='action')
        for name, description in (('ma', "Dirichlet problem"), ('ot', "optimal transport"),
                                  ('homog', "periodic homogenization"), ('vort', "vorticity transport"),
                                  ('jko', "gradient flows"), ('verify', "acceptance suite"))
    }
    actions = {}

    def addAction(group, name, description):
        actions[(group, name)] = groupActions[group].add_parser(name, parents=[common], help=description)

        return actions[(group, name)]

    solve = addAction('ma', 'solve', "solve det D²u = f with Dirichlet data")
    solve.add_argument("--f", help="right hand side", default='const:1')
    solve.add_argument("--boundary", help="boundary data", default='quad')
    solve.add_argument("--n", help="cells per side", type=int, default=32)
    solve.add_argument("--scheme", help="discretization", choices=['auto', 'monotone'], default='auto')
    solve.add_argument("--out", help="output grid file")
    _addSolverArguments(solve)
    solve.set_defaults(handler=maSolve, required=('out',))

    invariance = addAction('ma', 'invariance', "check the invariances of a solution")
    invariance.add_argument("--f", help="right hand side", default='manufactured')
    invariance.add_argument("--boundary", help="boundary data", default='manufactured')
    invariance.add_argument("--n", help="cells per side", type=int, default=64)
    invariance.add_argument("--maps", help="number of random area preserving maps", type=int, default=5)
    invariance.add_argument("--seed", help="seed of the random maps", type=int, default=0)
    _addSolverArguments(invariance)
    invariance.set_defaults(handler=maInvariance, required=())

    for name, handler, description in (('assign', otAssign, "optimal assignment of two uniform clouds"),
                                       ('plan', otPlan, "optimal plan of two weighted clouds")):
        action = addAction('ot', name, description)
        action.add_argument("--x", help="source cloud file")
        action.add_argument("--y", help="target cloud file")
        action.add_argument("--out", help="output plan CSV file")
        action.set_defaults(handler=handler, required=('x', 'y'))

    transportMap = addAction('ot', 'map', "transport map between densities on the torus")
    transportMap.add_argument("--f", help="source density", default='const:1')
    transportMap.add_argument("--g", help="target density", default='cosine')
    transportMap.add_argument("--n", help="cells per side", type=int, default=64)
    transportMap.add_argument("--samples", help="samples of the push forward check", type=int)
    transportMap.add_argument("--seed", help="seed of the push forward check", type=int, default=0)
    transportMap.add_argument("--out", help="output grid file of the potential")
    _addSolverArguments(transportMap)
    transportMap.set_defaults(handler=otMap, required=())

    corrector = addAction('homog', 'corrector', "solve the cell problem")
    corrector.add_argument("--f", help="periodic right hand side", default='cosine')
    corrector.add_argument("--matrix", help="M11,M12,M22 of the quadratic", default='1,0,1')
    corrector.add_argument("--n", help="cells per side", type=int, default=64)
    corrector.add_argument("--out", help="output grid file")
    _addSolverArguments(corrector)
    corrector.set_defaults(handler=homogCorrector, required=('out',))

    blowdown = addAction('homog', 'blowdown', "blow down P + w")
    blowdown.add_argument("--corrector", help="grid file of the corrector")
    blowdown.add_argument("--matrix", help="M11,M12,M22 of the quadratic", default='1,0,1')
    blowdown.add_argument("--tiles", help="number of periods per side", type=int, default=8)
    blowdown.add_argument("--epsilons", help="comma separated scales", default='0.5,0.25,0.125')
    blowdown.add_argument("--out", help="output grid file of the smallest scale")
    blowdown.set_defaults(handler=homogBlowdown, required=('corrector',))

    run = addAction('vort', 'run', "transport a vorticity density")
    run.add_argument("--rho", help="initial vorticity", default='patch')
    run.add_argument("--n", help="cells per side", type=int, default=64)
    run.add_argument("--T", help="final time", type=float, default=1.0)
    run.add_argument("--dt", help="fixed time step", type=float)
    run.add_argument("--cfl", help="Courant number of adaptive steps", type=float, default=DEFAULT_CFL)
    run.add_argument("--literal", help="use the literal velocity convention", action="store_true")
    run.add_argument("--levels", help="low,high levels of the tracked level set")
    run.add_argument("--out", help="output trajectory CSV file")
    run.add_argument("--final", help="output grid file of the final density")
    _addSolverArguments(run)
    run.set_defaults(handler=vortRun, required=('out',))

    flow = addAction('jko', 'run', "minimizing movements on the circle")
    flow.add_argument("--rho", help="initial density: const, cosine[:a] or bump[:width]", default='cosine')
    flow.add_argument("--n", help="number of bins", type=int, default=64)
    flow.add_argument("--tau", help="time step", type=float, default=1e-3)
    flow.add_argument("--steps", help="number of steps", type=int, default=50)
    flow.add_argument("--functional", help="energy", choices=FUNCTIONALS, default=FUNCTIONALS[0])
    flow.add_argument("--m", help="exponent of the porous medium energy", type=float, default=2.0)
    flow.add_argument("--well-depth", help="depth of the quartic wells", type=float, default=1.0)
    flow.add_argument("--seed", help="seed of the optimality certificates", type=int, default=0)
    flow.add_argument("--out", help="output flow CSV file")
    flow.set_defaults(handler=jkoRun, required=('out',))

    verifyAllParser = addAction('verify', 'all', "run the acceptance suite")
    verifyAllParser.add_argument("--quick", help="smaller grids and shorter times", action="store_true")
    verifyAllParser.add_argument("--seed", help="seed of the random instances", type=int)
    verifyAllParser.add_argument("--out", help="output directory", default='verify-output')
    verifyAllParser.set_defaults(handler=verifyRun, required=())

    return parser, actions

def _runKey(dest):
    # ConfigParser lowercases the keys.
    return dest.replace('_', '-').lower()

def _applyRunConfig(parser, actionParser, args, argv):
    """
    Uses the values of the run file as defaults of the action and parses the
    command line again.
    """
    keys = [key for key in vars(args) if key not in GLOBAL_KEYS]

    runConfig = RunConfig([_runKey(key) for key in keys])
    runConfig.load(args.run)

    defaults = {}
    for key in keys:
        if not runConfig.has(_runKey(key)):
            continue

        value = runConfig.getString(_runKey(key))
        if isinstance(getattr(args, key), bool):
            defaults[key] = value.strip().lower() in ('1', 'true', 'yes', 'on')
        else:
            defaults[key] = value

    actionParser.set_defaults(**defaults)

    return parser.parse_args(argv)

def cliDispatch(argv):
    """
    Runs the command given by the arguments and returns the exit code.
    """
    parser, actions = _buildParser()

    try:
        args = parser.parse_args(argv)
    except SystemExit as systemExit:
        return systemExit.code if isinstance(systemExit.code, int) else EXIT_USAGE

    if args.version:
        print(mongeampere.__version__)

        return EXIT_OK

    if args.group is None or getattr(args, 'action', None) is None:
        parser.print_usage(sys.stderr)

        return EXIT_USAGE

    config.load(args.config)

    logging.basicConfig(level=logging.DEBUG if args.verbose else config.getLogLevel())

    actionParser = actions[(args.group, args.action)]

    try:
        if args.run:
            args = _applyRunConfig(parser, actionParser, args, argv)

        missing = [name for name in args.required if getattr(args, name) is None]
        if missing:
            actionParser.error(
                f"the following arguments are required: {', '.join('--' + name.replace('_', '-') for name in missing)}")

        exitCode = args.handler(args)
    except SystemExit as systemExit:
        return systemExit.code if isinstance(systemExit.code, int) else EXIT_USAGE
    except ValidationError as validationError:
        logger.error("Invalid input: %s", validationError)
        exitCode = EXIT_VALIDATION
    except NoConvergenceError as noConvergenceError:
        logger.error("Solver did not converge: %s", noConvergenceError)
        exitCode = EXIT_NO_CONVERGENCE
    except OSError as osError:
        logger.error("Could not access a file: %s", osError)
        exitCode = EXIT_VALIDATION

    if args.metrics:
        Metrics.writeMetrics(args.metrics)

    return exitCode

def main():
    """
    Runs the toolkit with the arguments given in the command line.
    """
    sys.exit(cliDispatch(sys.argv[1:]))

if __name__ == '__main__':
    main()
