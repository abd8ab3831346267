"""
Exception hierarchy for the stochastic NLS solver.

Every error raised on purpose by the package derives from StochNLSError so the
CLI can tell expected failures (bad input, unstable runs) from bugs.
"""

from typing import Optional


class StochNLSError(Exception):
    """Base class for all package errors"""


class ContractViolation(StochNLSError, ValueError):
    """A precondition of an operation was not met"""


class ConfigurationError(StochNLSError, ValueError):
    """Invalid configuration value, optionally tied to a config key"""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        self.message = message
        super().__init__(f"{key}: {message}" if key else message)


class InstabilityError(StochNLSError, RuntimeError):
    """A trajectory produced a non-finite value"""

    def __init__(self, step: int, scheme: str = ""):
        self.step = step
        self.scheme = scheme
        label = f" ({scheme})" if scheme else ""
        super().__init__(f"non-finite field at step {step}{label}")


class StudyAborted(StochNLSError, RuntimeError):
    """Too many samples of a Monte Carlo study failed"""
