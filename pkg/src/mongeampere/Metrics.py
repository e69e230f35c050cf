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
Module with the solver metrics.

The metrics are registered in their own registry rather than in the default one,
as the default registry also collects process metrics that would make the
written files differ between otherwise identical runs.
"""

from prometheus_client import CollectorRegistry, Counter, Gauge, write_to_textfile

registry = CollectorRegistry()

# prometheus_client removes "_total" from the counter name.
metricsSolvesTotal = Counter('mongeampere_solves_total', 'The total number of solves', ['solver'], registry=registry)
metricsNewtonIterationsTotal = Counter('mongeampere_newton_iterations_total', 'The total number of accepted Newton iterations', ['solver'], registry=registry)
metricsFallbacksTotal = Counter('mongeampere_fallbacks_total', 'The total number of fallbacks to the monotone scheme', ['solver'], registry=registry)
metricsLastResidual = Gauge('mongeampere_last_residual', 'The residual of the last solve', ['solver'], registry=registry)

def recordSolve(solver, iterations, residual):
    """
    Records a finished solve.

    :param solver: the label of the solver.
    :param iterations: the number of accepted Newton iterations.
    :param residual: the final residual.
    """
    metricsSolvesTotal.labels(solver).inc()
    metricsNewtonIterationsTotal.labels(solver).inc(iterations)
    metricsLastResidual.labels(solver).set(residual)

def recordFallback(solver):
    """
    Records a fallback to the monotone scheme.
    """
    metricsFallbacksTotal.labels(solver).inc()

def writeMetrics(fileName):
    """
    Writes the metrics in the text exposition format.

    The file is written to a temporary file first and then renamed.
    """
    write_to_textfile(fileName, registry)
