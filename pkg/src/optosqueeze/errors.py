"""Exception types raised across the package."""


class OptoSqueezeError(Exception):
    """Base class for all package errors."""


class CutoffError(OptoSqueezeError, ValueError):
    """A Fock cutoff is too small."""


class ShapeError(OptoSqueezeError, ValueError):
    """Operator or state dimensions do not match."""


class StepSizeError(OptoSqueezeError, ValueError):
    """The time grid is too coarse for the fastest timescale.

    ``required_steps`` holds the smallest acceptable ``n_steps``.
    """

    def __init__(self, message, required_steps):
        super().__init__(message)
        self.required_steps = required_steps


class IntegrationError(OptoSqueezeError, RuntimeError):
    """Trace drift or positivity loss beyond tolerance during propagation."""


class SteadyStateError(OptoSqueezeError, ValueError):
    """The drift matrix is not Hurwitz, so no steady state exists."""


class NotReachedError(OptoSqueezeError, RuntimeError):
    """A threshold was never crossed inside the protocol window."""


class SqueezeParameterError(OptoSqueezeError, ValueError):
    """``G+ >= G-``: the Bogoliubov squeeze parameter is undefined."""


class KrotovStepError(OptoSqueezeError, RuntimeError):
    """A Krotov update diverged; increase the step-size weights."""


class ConfigError(OptoSqueezeError, ValueError):
    """Invalid run configuration. ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
