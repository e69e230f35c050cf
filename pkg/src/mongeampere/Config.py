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
Module for getting the configuration.

Other modules are expected to import the shared "config" object, which will be
loaded with the configuration file at startup.
"""

import logging
import os

from configparser import ConfigParser, Error as ConfigParserError

import psutil

from .Exceptions import ParameterError, ValidationError

class Config:
    """
    Class for the configuration.

    The configuration values are loaded from a configuration file, but all the
    properties have a default value if the value is not explicitly set in the
    loaded configuration file.

    There is a getter method for each of the configuration values.
    """

    def __init__(self):
        self._logger = logging.getLogger(__name__)

        self._configParser = ConfigParser()

    def load(self, fileName):
        """
        Loads the configuration from the given file name.

        :param fileName: the absolute or relative (to the current working
               directory) path to the configuration file.
        """
        fileName = os.path.abspath(fileName)

        if not os.path.exists(fileName):
            self._logger.warning("Configuration file not found: %s", fileName)
        else:
            self._logger.info("Loading %s", fileName)

        self._configParser.read(fileName)

    def getLogLevel(self):
        """
        Returns the log level.

        Defaults to INFO (20).
        """
        return int(self._configParser.get('logs', 'level', fallback=logging.INFO))

    def getThreads(self):
        """
        Returns the number of workers used by the FFT based operators.

        The MA_THREADS environment variable takes precedence over the
        configuration file.

        Defaults to the number of logical CPUs.
        """
        threads = os.environ.get('MA_THREADS')
        if not threads:
            threads = self._configParser.get('threads', 'count', fallback=None)

        if not threads:
            return psutil.cpu_count() or 1

        threads = int(threads)
        if threads < 1:
            self._logger.error("Invalid number of threads %d, using 1", threads)
            return 1

        return threads

    def getSolverTolerance(self):
        """
        Returns the residual tolerance of the Newton solvers.

        Defaults to 1e-8.
        """
        return float(self._configParser.get('solver', 'tolerance', fallback=1e-8))

    def getSolverMaxIterations(self):
        """
        Returns the maximum number of Newton iterations.

        Defaults to 50.
        """
        return int(self._configParser.get('solver', 'maxiterations', fallback=50))

    def getSolverDamping(self):
        """
        Returns the factor the Newton step is shrunk by when it is rejected.

        Defaults to 0.5.
        """
        return float(self._configParser.get('solver', 'damping', fallback=0.5))

    def getDegeneracyFloor(self):
        """
        Returns the floor of the directional second differences in the
        monotone scheme.

        Defaults to 1e-10.
        """
        return float(self._configParser.get('solver', 'degeneracyfloor', fallback=1e-10))

    def getInvarianceConstant(self):
        """
        Returns the constant C of the interpolation error bound C·h²·|A|² used
        by the invariance checks.

        Defaults to 200.
        """
        return float(self._configParser.get('invariance', 'constant', fallback=200.0))

    def getPushForwardSafetyFactor(self):
        """
        Returns the factor applied to the statistical bound of the push forward
        check.

        Defaults to 3.
        """
        return float(self._configParser.get('transport', 'safetyfactor', fallback=3.0))

    def getVerifySeed(self):
        """
        Returns the seed used by "verify all" when none is given.

        Defaults to 0.
        """
        return int(self._configParser.get('verify', 'seed', fallback=0))

class RunConfig:
    """
    Class for the key = value run files given to the subcommands.

    The run files have no sections, one "key = value" pair per line and "#"
    comments. They are parsed with the same ConfigParser used for the
    configuration by prepending a section header.
    """

    SECTION = 'run'

    def __init__(self, allowedKeys, requiredKeys=()):
        self._allowedKeys = set(allowedKeys) | {'seed'}
        self._requiredKeys = set(requiredKeys)

        self._configParser = ConfigParser(comment_prefixes=('#',), inline_comment_prefixes=('#',))

    def loadString(self, text):
        """
        Loads the run configuration from the given text.

        :raises ValidationError: if the text is malformed, a key is unknown or a
                required key is missing.
        """
        try:
            self._configParser.read_string(f'[{self.SECTION}]\n' + text)
        except ConfigParserError as configParserError:
            raise ValidationError(f"Invalid run configuration: {configParserError}") from configParserError

        keys = set(self._configParser[self.SECTION].keys())

        unknownKeys = keys - self._allowedKeys
        if unknownKeys:
            raise ValidationError(f"Unknown keys in run configuration: {', '.join(sorted(unknownKeys))}")

        missingKeys = self._requiredKeys - keys
        if missingKeys:
            raise ValidationError(f"Missing keys in run configuration: {', '.join(sorted(missingKeys))}")

    def load(self, fileName):
        """
        Loads the run configuration from the given file name.
        """
        with open(fileName, encoding='ascii') as runFile:
            self.loadString(runFile.read())

    def has(self, key):
        """
        Returns whether the key was set.
        """
        return key in self._configParser[self.SECTION]

    def getString(self, key, default=None):
        """
        Returns the raw value of the key.
        """
        return self._configParser.get(self.SECTION, key, fallback=default)

    def getFloat(self, key, default=None):
        """
        Returns the value of the key as a float.
        """
        value = self.getString(key)
        if value is None:
            return default

        try:
            return float(value)
        except ValueError as valueError:
            raise ParameterError(f"Invalid number for {key}: {value}") from valueError

    def getInt(self, key, default=None):
        """
        Returns the value of the key as an int.
        """
        value = self.getString(key)
        if value is None:
            return default

        try:
            return int(value)
        except ValueError as valueError:
            raise ParameterError(f"Invalid integer for {key}: {value}") from valueError

    def getSeed(self, default=0):
        """
        Returns the seed, an unsigned 64-bit integer.
        """
        seed = self.getInt('seed', default)
        if seed < 0 or seed >= 2**64:
            raise ParameterError(f"Seed out of range: {seed}")

        return seed

config = Config()
