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

from time import sleep

import pytest

from mongeampere.Benchmark import BUDGETS, ResourcesTracker, _checks, runBenchmark
from mongeampere.Verify import CheckResult

class ResourcesTrackerTest:

    def testAveragesWithoutSamples(self):
        resourcesTracker = ResourcesTracker()

        assert resourcesTracker.getAverageCpuPercents() is None
        assert resourcesTracker.getAverageMemoryInfos() is None
        assert resourcesTracker.getAverageMemoryPercents() is None

    def testRunBenchmark(self):
        def check():
            sleep(0.3)

            return CheckResult('sleep', True)

        result, elapsed, resourcesTracker = runBenchmark(check, interval=0.05)

        assert result.passed
        assert elapsed >= 0.3
        assert len(resourcesTracker.cpuPercents) >= 1
        assert resourcesTracker.getAverageMemoryInfos()['rss'] > 0
        assert resourcesTracker.getAverageMemoryPercents() > 0

    def testTrackerStopsOnFailure(self):
        def check():
            raise RuntimeError("failed check")

        with pytest.raises(RuntimeError):
            runBenchmark(check, interval=0.05)

class ChecksTest:

    def testBudgetsNameChecks(self):
        assert set(BUDGETS) <= set(_checks(0))
