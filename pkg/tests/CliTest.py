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

# pylint: disable=missing-docstring

import numpy as np
import pytest

import mongeampere
from mongeampere import EXIT_NO_CONVERGENCE, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION
from mongeampere.__main__ import cliDispatch
from mongeampere.DiscreteTransport import PointCloud
from mongeampere.FileFormats import readGrid, readTrajectory, writeCloud

def outputOf(capsys):
    return dict(line.split(' ', 1) for line in capsys.readouterr().out.splitlines())

@pytest.fixture
def cloudFile(tmp_path):
    fileName = tmp_path / 'a.cloud'
    writeCloud(fileName, PointCloud.uniform(np.random.default_rng(0).uniform(size=(5, 2))))

    return str(fileName)

class UsageTest:

    def testVersion(self, capsys):
        assert cliDispatch(['--version']) == EXIT_OK
        assert capsys.readouterr().out.strip() == str(mongeampere.__version__)

    @pytest.mark.parametrize('argv', [
        [],
        ['ma'],
        ['lubrication', 'run'],
        ['ma', 'integrate'],
        ['ma', 'solve', '--n', 'many'],
    ])
    def testUsage(self, argv):
        assert cliDispatch(argv) == EXIT_USAGE

    def testMissingRequiredFlag(self):
        assert cliDispatch(['ma', 'solve', '--n', '8']) == EXIT_USAGE

class MaTest:

    def testSolve(self, tmp_path, capsys):
        fileName = tmp_path / 'u.grid'

        exitCode = cliDispatch(['ma', 'solve', '--f', 'const:1', '--boundary', 'quad', '--n', '32',
                                '--out', str(fileName)])

        assert exitCode == EXIT_OK
        u = readGrid(fileName)
        x, y = u.spec.coordinates()
        assert np.abs(u.values - 0.5 * (x * x + y * y)).max() <= 1e-10
        assert outputOf(capsys)['scheme'] == 'central'

    def testSolveIsDeterministic(self, tmp_path):
        for name in ('first.grid', 'second.grid'):
            assert cliDispatch(['ma', 'solve', '--f', 'manufactured', '--boundary', 'manufactured', '--n', '16',
                                '--out', str(tmp_path / name)]) == EXIT_OK

        assert (tmp_path / 'first.grid').read_bytes() == (tmp_path / 'second.grid').read_bytes()

    def testNonPositiveRightHandSide(self, tmp_path):
        exitCode = cliDispatch(['ma', 'solve', '--f', 'const:-1', '--n', '8', '--out', str(tmp_path / 'u.grid')])

        assert exitCode == EXIT_VALIDATION
        assert not (tmp_path / 'u.grid').exists()

    def testNoConvergence(self, tmp_path):
        exitCode = cliDispatch(['ma', 'solve', '--f', 'manufactured', '--boundary', 'manufactured', '--n', '16',
                                '--max-iters', '1', '--out', str(tmp_path / 'u.grid')])

        assert exitCode == EXIT_NO_CONVERGENCE
        assert not (tmp_path / 'u.grid').exists()

    def testGridFileAsInput(self, tmp_path):
        assert cliDispatch(['ma', 'solve', '--n', '8', '--out', str(tmp_path / 'u.grid')]) == EXIT_OK

        exitCode = cliDispatch(['ma', 'solve', '--boundary', str(tmp_path / 'u.grid'), '--n', '8',
                                '--out', str(tmp_path / 'v.grid')])

        assert exitCode == EXIT_OK
        assert (tmp_path / 'u.grid').read_bytes() == (tmp_path / 'v.grid').read_bytes()

    def testGridFileOfOtherSize(self, tmp_path):
        assert cliDispatch(['ma', 'solve', '--n', '8', '--out', str(tmp_path / 'u.grid')]) == EXIT_OK

        exitCode = cliDispatch(['ma', 'solve', '--boundary', str(tmp_path / 'u.grid'), '--n', '16',
                                '--out', str(tmp_path / 'v.grid')])

        assert exitCode == EXIT_VALIDATION

    def testInvariance(self, capsys):
        exitCode = cliDispatch(['ma', 'invariance', '--n', '64', '--maps', '2'])

        assert exitCode == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert [line.split()[0] for line in lines] == ['affine', 'affine', 'translation', 'dilation']
        assert all(line.endswith('passed') for line in lines)

class OtTest:

    def testAssignSameCloud(self, cloudFile, capsys):
        exitCode = cliDispatch(['ot', 'assign', '--x', cloudFile, '--y', cloudFile])

        assert exitCode == EXIT_OK
        assert outputOf(capsys) == {'cost': '0', 'permutation': '0 1 2 3 4'}

    def testPlan(self, tmp_path, cloudFile, capsys):
        target = tmp_path / 'b.cloud'
        rng = np.random.default_rng(1)
        writeCloud(target, PointCloud(rng.uniform(size=(3, 2)), rng.dirichlet(np.ones(3))))

        exitCode = cliDispatch(['ot', 'plan', '--x', cloudFile, '--y', str(target), '--out', str(tmp_path / 'plan.csv')])

        assert exitCode == EXIT_OK
        rows = (tmp_path / 'plan.csv').read_text().splitlines()
        assert rows[0] == 'i,j,mass'
        assert sum(float(row.split(',')[2]) for row in rows[1:]) == pytest.approx(1, abs=1e-12)
        assert float(outputOf(capsys)['cost']) > 0

    def testMalformedCloud(self, tmp_path):
        fileName = tmp_path / 'bad.cloud'
        fileName.write_text('MACLOUD v1 2 1\n0 0.5\n')

        assert cliDispatch(['ot', 'assign', '--x', str(fileName), '--y', str(fileName)]) == EXIT_VALIDATION

    def testMissingFile(self, tmp_path):
        missing = str(tmp_path / 'missing.cloud')

        assert cliDispatch(['ot', 'plan', '--x', missing, '--y', missing]) == EXIT_VALIDATION

    def testMap(self, tmp_path, capsys):
        exitCode = cliDispatch(['ot', 'map', '--n', '32', '--samples', '20000', '--out', str(tmp_path / 'v.grid')])

        assert exitCode == EXIT_OK
        assert readGrid(tmp_path / 'v.grid').spec.isTorus
        output = outputOf(capsys)
        assert float(output['pushforward']) <= float(output['bound'])

    def testMapToPatch(self, capsys):
        assert cliDispatch(['ot', 'map', '--g', 'patch', '--n', '16']) == EXIT_OK
        assert 'iterations' in outputOf(capsys)

class HomogTest:

    def testCorrectorAndBlowdown(self, tmp_path, capsys):
        corrector = str(tmp_path / 'w.grid')

        assert cliDispatch(['homog', 'corrector', '--n', '64', '--out', corrector]) == EXIT_OK
        capsys.readouterr()

        exitCode = cliDispatch(['homog', 'blowdown', '--corrector', corrector, '--tiles', '8',
                                '--out', str(tmp_path / 'blowdown.grid')])

        assert exitCode == EXIT_OK
        ratios = [float(ratio) for ratio in outputOf(capsys)['ratios'].split()]
        assert all(3.5 <= ratio <= 4.5 for ratio in ratios)
        assert readGrid(tmp_path / 'blowdown.grid').spec.lx == 1

    def testIncompatibleRightHandSide(self, tmp_path):
        exitCode = cliDispatch(['homog', 'corrector', '--f', 'const:2', '--n', '16', '--out', str(tmp_path / 'w.grid')])

        assert exitCode == EXIT_VALIDATION

    def testInvalidMatrix(self, tmp_path):
        exitCode = cliDispatch(['homog', 'corrector', '--matrix', '1,2', '--n', '16', '--out', str(tmp_path / 'w.grid')])

        assert exitCode == EXIT_VALIDATION

class VortTest:

    def testRun(self, tmp_path):
        exitCode = cliDispatch(['vort', 'run', '--rho', 'cosine:0.2', '--n', '16', '--T', '0.1', '--dt', '0.05',
                                '--out', str(tmp_path / 'run.csv'), '--final', str(tmp_path / 'rho.grid')])

        assert exitCode == EXIT_OK
        rows = readTrajectory(tmp_path / 'run.csv')
        assert [row['step'] for row in rows] == [0, 1, 2]
        assert rows[-1]['mass'] == pytest.approx(rows[0]['mass'], abs=1e-12)
        assert readGrid(tmp_path / 'rho.grid').spec.nx == 16

    def testDefaultPatch(self, tmp_path):
        exitCode = cliDispatch(['vort', 'run', '--n', '16', '--T', '0.01', '--out', str(tmp_path / 'run.csv')])

        assert exitCode == EXIT_OK
        rows = readTrajectory(tmp_path / 'run.csv')
        assert rows[-1]['t'] == pytest.approx(0.01)
        assert all(row['min'] > 0 for row in rows)

    def testStepTooLarge(self, tmp_path):
        exitCode = cliDispatch(['vort', 'run', '--rho', 'patch', '--n', '32', '--T', '1', '--dt', '1',
                                '--out', str(tmp_path / 'run.csv')])

        assert exitCode == EXIT_VALIDATION

class JkoTest:

    def testRun(self, tmp_path, capsys):
        exitCode = cliDispatch(['jko', 'run', '--n', '16', '--tau', '1e-2', '--steps', '3',
                                '--out', str(tmp_path / 'flow.csv')])

        assert exitCode == EXIT_OK
        rows = (tmp_path / 'flow.csv').read_text().splitlines()
        assert rows[0] == 'step,t,energy,distance'
        assert len(rows) == 5
        energies = [float(row.split(',')[2]) for row in rows[1:]]
        assert all(later <= earlier for earlier, later in zip(energies, energies[1:]))
        assert outputOf(capsys)['steps'] == '3'

    def testUnknownFunctional(self, tmp_path):
        exitCode = cliDispatch(['jko', 'run', '--functional', 'lubrication', '--out', str(tmp_path / 'flow.csv')])

        assert exitCode == EXIT_USAGE

class RunFileTest:

    def testValuesFromFile(self, tmp_path):
        runFile = tmp_path / 'solve.run'
        runFile.write_text(f"# Constant right hand side\nf = const:1\nn = 8\nout = {tmp_path / 'u.grid'}\n")

        assert cliDispatch(['ma', 'solve', '--run', str(runFile)]) == EXIT_OK
        assert readGrid(tmp_path / 'u.grid').spec.nx == 8

    def testCommandLineTakesPrecedence(self, tmp_path):
        runFile = tmp_path / 'solve.run'
        runFile.write_text(f"n = 8\nout = {tmp_path / 'u.grid'}\n")

        assert cliDispatch(['ma', 'solve', '--run', str(runFile), '--n', '16']) == EXIT_OK
        assert readGrid(tmp_path / 'u.grid').spec.nx == 16

    def testUppercaseFlag(self, tmp_path):
        runFile = tmp_path / 'vort.run'
        runFile.write_text(f"rho = cosine:0.2\nn = 16\nT = 0.05\ndt = 0.05\nout = {tmp_path / 'run.csv'}\n")

        assert cliDispatch(['vort', 'run', '--run', str(runFile)]) == EXIT_OK
        assert readTrajectory(tmp_path / 'run.csv')[-1]['t'] == pytest.approx(0.05)

    def testUnknownKey(self, tmp_path):
        runFile = tmp_path / 'solve.run'
        runFile.write_text(f"n = 8\nresolution = 3\nout = {tmp_path / 'u.grid'}\n")

        assert cliDispatch(['ma', 'solve', '--run', str(runFile)]) == EXIT_VALIDATION

class MetricsTest:

    def testMetricsFile(self, tmp_path):
        metrics = tmp_path / 'metrics.prom'

        exitCode = cliDispatch(['ma', 'solve', '--n', '8', '--out', str(tmp_path / 'u.grid'),
                                '--metrics', str(metrics)])

        assert exitCode == EXIT_OK
        assert 'mongeampere_solves_total{solver="dirichlet-central"}' in metrics.read_text()
