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
Module for the plain text files read and written by the command line.

Grid files start with the header "MAGRID v1 nx ny lx ly topology", optionally
followed by the origin "x0 y0", and then hold one value per node and line,
with j running fastest. Cloud files start with "MACLOUD v1 k d" and hold one
point per line, its d coordinates followed by its weight. Trajectories and
plans are CSV files.

Numbers are written with 17 significant digits, so every double survives a
write and read unchanged. Files are written to a temporary file in the
destination directory and then renamed over the destination.
"""

import csv
import io
import logging
import os
import tempfile

import numpy as np

from mongeampere import TOPOLOGY_BOX, TOPOLOGY_TORUS
from .DiscreteTransport import PointCloud
from .Exceptions import FormatError, ValidationError
from .Grid import GridFunction, GridSpec

logger = logging.getLogger(__name__)

GRID_MAGIC = 'MAGRID'
CLOUD_MAGIC = 'MACLOUD'
VERSION = 'v1'

TRAJECTORY_COLUMNS = ('step', 't', 'mass', 'min', 'max', 'residual')
FLOW_COLUMNS = ('step', 't', 'energy', 'distance')
PLAN_COLUMNS = ('i', 'j', 'mass')

def formatNumber(value):
    return format(float(value), '.17g')

def writeAtomically(fileName, text):
    """
    Writes the text to a temporary file next to fileName and renames it.
    """
    directory = os.path.dirname(os.path.abspath(fileName))

    with tempfile.NamedTemporaryFile('w', dir=directory, prefix='.tmp-', delete=False, newline='',
                                     encoding='ascii') as temporaryFile:
        temporaryFile.write(text)
        temporaryName = temporaryFile.name

    try:
        os.replace(temporaryName, fileName)
    except OSError:
        os.unlink(temporaryName)
        raise

    logger.debug("Wrote %s", fileName)

def _readLines(fileName):
    with open(fileName, encoding='ascii') as inputFile:
        return inputFile.read().splitlines()

def _parseFloat(text, lineNumber):
    try:
        return float(text)
    except ValueError as valueError:
        raise FormatError(f"invalid number {text!r}", lineNumber) from valueError

def _parseInt(text, lineNumber):
    try:
        return int(text)
    except ValueError as valueError:
        raise FormatError(f"invalid integer {text!r}", lineNumber) from valueError

def _header(lines, magic, fieldCounts):
    if not lines:
        raise FormatError("missing header", 1)

    fields = lines[0].split()
    if len(fields) < 2 or fields[0] != magic or fields[1] != VERSION:
        raise FormatError(f"expected a {magic} {VERSION} header", 1)

    if len(fields) - 2 not in fieldCounts:
        raise FormatError(f"header has {len(fields) - 2} fields", 1)

    return fields[2:]

def _checkLineCount(lines, expected):
    """
    Checks that there are exactly expected lines after the header.
    """
    if len(lines) - 1 < expected:
        raise FormatError(f"missing line, expected {expected} lines after the header", len(lines) + 1)

    if len(lines) - 1 > expected:
        raise FormatError(f"unexpected line, expected {expected} lines after the header", expected + 2)

def gridText(u):
    spec = u.spec
    header = [GRID_MAGIC, VERSION, str(spec.nx), str(spec.ny), formatNumber(spec.lx), formatNumber(spec.ly),
              spec.topology]
    if spec.x0 != 0 or spec.y0 != 0:
        header += [formatNumber(spec.x0), formatNumber(spec.y0)]

    return '\n'.join([' '.join(header)] + [formatNumber(value) for value in u.values.ravel()]) + '\n'

def writeGrid(fileName, u):
    writeAtomically(fileName, gridText(u))

def readGrid(fileName):
    """
    Reads a grid file.

    :raises FormatError: if the file is malformed; the error names the line.
    """
    lines = _readLines(fileName)
    fields = _header(lines, GRID_MAGIC, (5, 7))

    nx, ny = _parseInt(fields[0], 1), _parseInt(fields[1], 1)
    lx, ly = _parseFloat(fields[2], 1), _parseFloat(fields[3], 1)
    topology = fields[4]
    if topology not in (TOPOLOGY_BOX, TOPOLOGY_TORUS):
        raise FormatError(f"unknown topology {topology}", 1)

    x0, y0 = (_parseFloat(fields[5], 1), _parseFloat(fields[6], 1)) if len(fields) == 7 else (0.0, 0.0)

    try:
        spec = GridSpec(nx, ny, lx, ly, topology, x0, y0)
    except ValidationError as validationError:
        raise FormatError(str(validationError), 1) from validationError

    count = spec.shape[0] * spec.shape[1]
    _checkLineCount(lines, count)

    values = np.array([_parseFloat(line, index + 2) for index, line in enumerate(lines[1:])])

    return GridFunction(spec, values.reshape(spec.shape))

def cloudText(cloud):
    header = ' '.join([CLOUD_MAGIC, VERSION, str(cloud.size), str(cloud.dimension)])
    rows = [' '.join(formatNumber(value) for value in (*point, weight))
            for point, weight in zip(cloud.points, cloud.weights)]

    return '\n'.join([header] + rows) + '\n'

def writeCloud(fileName, cloud):
    writeAtomically(fileName, cloudText(cloud))

def readCloud(fileName):
    """
    Reads a cloud file.

    :raises FormatError: if the file is malformed or the weights do not sum
            to 1.
    """
    lines = _readLines(fileName)
    fields = _header(lines, CLOUD_MAGIC, (2,))

    size, dimension = _parseInt(fields[0], 1), _parseInt(fields[1], 1)
    if size < 1 or dimension < 1:
        raise FormatError("cloud size and dimension must be positive", 1)

    _checkLineCount(lines, size)

    rows = []
    for index, line in enumerate(lines[1:]):
        values = line.split()
        if len(values) != dimension + 1:
            raise FormatError(f"expected {dimension + 1} numbers, got {len(values)}", index + 2)

        rows.append([_parseFloat(value, index + 2) for value in values])

    rows = np.array(rows)

    try:
        return PointCloud(rows[:, :dimension], rows[:, dimension])
    except ValidationError as validationError:
        raise FormatError(str(validationError), 2) from validationError

def csvText(columns, rows):
    output = io.StringIO()
    writer = csv.writer(output, lineterminator='\n')
    writer.writerow(columns)
    for row in rows:
        writer.writerow([value if isinstance(value, (str, int, np.integer)) else formatNumber(value) for value in row])

    return output.getvalue()

def trajectoryText(diagnostics):
    return csvText(TRAJECTORY_COLUMNS, [(item.step, item.t, item.mass, item.rhoMin, item.rhoMax, item.residual)
                                         for item in diagnostics])

def writeTrajectory(fileName, diagnostics):
    """
    Writes the step diagnostics of a vorticity simulation.
    """
    writeAtomically(fileName, trajectoryText(diagnostics))

def readTrajectory(fileName):
    """
    Returns the rows of a trajectory file as dicts.

    :raises FormatError: if the columns or a value are malformed.
    """
    lines = _readLines(fileName)
    if not lines or tuple(lines[0].split(',')) != TRAJECTORY_COLUMNS:
        raise FormatError(f"expected the columns {','.join(TRAJECTORY_COLUMNS)}", 1)

    rows = []
    for index, values in enumerate(csv.reader(lines[1:])):
        if len(values) != len(TRAJECTORY_COLUMNS):
            raise FormatError(f"expected {len(TRAJECTORY_COLUMNS)} values, got {len(values)}", index + 2)

        row = {'step': _parseInt(values[0], index + 2)}
        row.update({column: _parseFloat(value, index + 2) for column, value in zip(TRAJECTORY_COLUMNS[1:], values[1:])})
        rows.append(row)

    return rows

def writeFlow(fileName, trajectory, tau):
    """
    Writes the energies and step distances of a gradient flow.
    """
    distances = [0.0] + list(trajectory.distances)
    rows = [(step, step * tau, value, distance)
            for step, (value, distance) in enumerate(zip(trajectory.energies, distances))]

    writeAtomically(fileName, csvText(FLOW_COLUMNS, rows))

def writePlan(fileName, plan, threshold=1e-12):
    """
    Writes the support of a transport plan, one "i,j,mass" row per pair.
    """
    rows = [(int(i), int(j), plan.matrix[i, j]) for i, j in zip(*np.nonzero(plan.matrix > threshold))]

    writeAtomically(fileName, csvText(PLAN_COLUMNS, rows))

def writeAssignment(fileName, assignment):
    """
    Writes an assignment in the plan format, with mass 1/k per pair.
    """
    mass = 1 / assignment.x.size
    rows = [(i, int(j), mass) for i, j in enumerate(assignment.permutation)]

    writeAtomically(fileName, csvText(PLAN_COLUMNS, rows))
