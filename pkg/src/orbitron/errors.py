"""Exception types shared across the package."""


class OrbitronError(Exception):
    """Base class for all errors raised by this package."""


class PoleSingularity(OrbitronError):
    """Field evaluated at (or numerically on top of) one of the magnetic poles."""


class DegenerateField(OrbitronError):
    """The compensation gradient B' vanishes, so the dimensionless groups are undefined."""


class NoRealEquilibrium(OrbitronError):
    """The constraint quadratic for zeta^2 has a negative discriminant."""


class NoAdmissibleRoot(OrbitronError):
    """Both roots of the constraint quadratic are negative."""


class DegenerateAttitude(OrbitronError):
    """A component of the attitude that appears in a denominator is (numerically) zero."""


class BlockStructureViolation(OrbitronError):
    """The reduced second variation does not split into the expected two blocks."""


class NotACriticalPoint(UserWarning):
    """Second variation requested at a state that does not satisfy the equilibrium conditions."""


class StepFailure(OrbitronError):
    """The adaptive integrator could not make progress."""


class ConfigError(OrbitronError):
    """Malformed or inconsistent run configuration."""
