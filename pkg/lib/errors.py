"""
Exception hierarchy for ndt-atlas

Every error raised on purpose by the library derives from NdtAtlasError.
Input problems also derive from ValueError, numerical breakdowns from
RuntimeError, so plain ``except ValueError`` callers keep working.
"""
from typing import List, Optional


class NdtAtlasError(Exception):
    """Base class for all library errors"""


class ConfigError(NdtAtlasError, ValueError):
    """Run configuration failed validation (lists every offending key)"""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration: " + "; ".join(self.problems))


class FormatError(NdtAtlasError, ValueError):
    """Malformed scan, trajectory, scene or preset file"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class EmptyCloudError(NdtAtlasError, ValueError):
    """A cloud that must hold points is empty"""


class DegenerateMapError(NdtAtlasError, ValueError):
    """No map point has a defined local neighbourhood statistic"""


class OptimizationBreakdown(NdtAtlasError, RuntimeError):
    """
    Newton optimization could not make progress

    ``result`` holds the best-so-far RegistrationResult (converged=False).
    """

    def __init__(self, message: str, result=None):
        self.result = result
        super().__init__(f"optimization breakdown: {message}")
