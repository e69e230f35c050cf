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
Module to provide the command line interface for the benchmark.
"""

import argparse
import logging
import os
import sys
from threading import Event, Thread
from time import monotonic

import numpy as np
import psutil

from . import Verify
from .Config import config

# Runtime budgets in seconds of the checks that have one.
BUDGETS = {
    'manufactured': 60.0,
    'vorticity': 120.0,
}

def _checks(seed):
    return {
        'manufactured': lambda: Verify.checkManufacturedSolution([16, 32, 64]),
        'gradient-image': lambda: Verify.checkGradientImage(64),
        'invariances': lambda: Verify.checkInvariances(64, np.random.default_rng(seed)),
        'assignments': lambda: Verify.checkAssignments(np.random.default_rng(seed), 50),
        'duality': lambda: Verify.checkDuality(np.random.default_rng(seed), 20),
        'brenier-map': lambda: Verify.checkBrenierMap(256, 100000, seed),
        'corrector': lambda: Verify.checkCorrector(64)[0],
        'vorticity': lambda: Verify.checkVorticity(128, 1.0),
        'linearization': Verify.checkLinearization,
        'gradient-flow': lambda: Verify.checkGradientFlow(np.random.default_rng(seed), seed),
    }

class ResourcesTracker:
    """
    Class to track the resources used by a process.

    The ResourcesTracker runs in a different thread to the one that started it,
    as that thread is busy running the benchmarked check.
    """

    def __init__(self, interval=1.0):
        self.logger = logging.getLogger("stats")

        self.interval = interval

        self.cpuPercents = []
        self.memoryInfos = []
        self.memoryPercents = []

        self._thread = None

    def start(self, pid, stopResourcesTrackerThread):
        """
        Starts tracking the resources used by the given PID until the given
        stopResourcesTrackerThread event is set.
        """
        self._thread = Thread(target=self._track, args=[pid, stopResourcesTrackerThread], daemon=True)
        self._thread.start()

    def join(self):
        """
        Waits for the tracking thread to end.
        """
        if self._thread:
            self._thread.join()

    def _track(self, pid, stopResourcesTrackerThread):
        process = psutil.Process(pid)
        # Get first percent value before the real loop, as the first time it can
        # be 0.
        process.cpu_percent()

        count = 0
        while not stopResourcesTrackerThread.wait(self.interval):
            count += 1
            self.logger.debug(count)

            cpuPercent = process.cpu_percent()
            self.logger.debug("CPU percent: %f", cpuPercent)
            self.cpuPercents.append(cpuPercent)

            memoryInfo = process.memory_info()
            self.logger.debug("Memory info: %s", memoryInfo)
            self.memoryInfos.append(memoryInfo)

            memoryPercent = process.memory_percent()
            self.logger.debug("Memory percent: %f", memoryPercent)
            self.memoryPercents.append(memoryPercent)

    def getAverageCpuPercents(self):
        """
        Returns the average CPU percent, or None if no sample was taken.
        """
        if not self.cpuPercents:
            return None

        return sum(self.cpuPercents) / len(self.cpuPercents)

    def getAverageMemoryInfos(self):
        """
        Returns the average "rss" and "vms" memory values, or None if no sample
        was taken.
        """
        if not self.memoryInfos:
            return None

        return {
            'rss': sum(memoryInfo.rss for memoryInfo in self.memoryInfos) / len(self.memoryInfos),
            'vms': sum(memoryInfo.vms for memoryInfo in self.memoryInfos) / len(self.memoryInfos),
        }

    def getAverageMemoryPercents(self):
        """
        Returns the average memory percent, or None if no sample was taken.
        """
        if not self.memoryPercents:
            return None

        return sum(self.memoryPercents) / len(self.memoryPercents)

def runBenchmark(check, interval=1.0):
    """
    Runs the check while tracking the resources of this process.

    :return: a tuple with the CheckResult, the elapsed seconds and the
             ResourcesTracker.
    """
    resourcesTracker = ResourcesTracker(interval)
    stopResourcesTrackerThread = Event()

    resourcesTracker.start(os.getpid(), stopResourcesTrackerThread)

    startTime = monotonic()
    try:
        result = check()
    finally:
        elapsed = monotonic() - startTime
        stopResourcesTrackerThread.set()
        resourcesTracker.join()

    return result, elapsed, resourcesTracker

def main():
    """
    Runs the benchmark with the arguments given in the command line.
    """
    checks = _checks(config.getVerifySeed())

    parser = argparse.ArgumentParser()
    parser.add_argument("check", help="acceptance check to run", choices=sorted(checks))
    parser.add_argument("-i", "--interval", help="sampling interval (in seconds)", default=1.0, type=float)
    parser.add_argument("-v", "--verbose", help="verbose mode", action="store_true")
    parser.add_argument("--verbose-extra", help="extra verbose mode", action="store_true")
    args = parser.parse_args()

    if args.verbose:
        logging.basicConfig(level=logging.INFO)
    if args.verbose_extra:
        logging.basicConfig(level=logging.DEBUG)

    result, elapsed, resourcesTracker = runBenchmark(checks[args.check], args.interval)

    print(f"Check: {result.name} {'passed' if result.passed else 'failed'}")
    print(f"Elapsed seconds: {elapsed:.1f}")
    print(f"Average CPU percents: {resourcesTracker.getAverageCpuPercents()}")
    print(f"Average memory infos: {resourcesTracker.getAverageMemoryInfos()}")
    print(f"Average memory percents: {resourcesTracker.getAverageMemoryPercents()}")

    budget = BUDGETS.get(args.check)
    if budget is not None:
        print(f"Budget seconds: {budget:.0f} {'met' if elapsed <= budget else 'exceeded'}")

    if not result.passed or (budget is not None and elapsed > budget):
        sys.exit(1)

if __name__ == '__main__':
    main()
