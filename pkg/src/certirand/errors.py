"""Exception hierarchy. Protocol aborts are not exceptions; they are returned
as run records with ``aborted=True``."""


class CertirandError(Exception):
    """Base class for all package errors."""


class ConfigError(CertirandError):
    """Bad or infeasible configuration (CLI exit code 1)."""


class InputError(CertirandError, ValueError):
    """Malformed argument: wrong length, wrong dims, unknown label."""


class InvalidSeedLength(InputError):
    pass


class InvalidProbability(InputError):
    pass


class CapacityError(CertirandError):
    """A simulator resource limit was exceeded."""


class NonSignalingViolation(CertirandError):
    """A device touched a qubit it does not own. Always fatal."""


class ProtocolError(CertirandError):
    """Referee/device contract broken, e.g. a qubit measured twice."""
