"""Exception hierarchy shared by every qbatt module."""


class QbattError(Exception):
    """Base class for all errors raised by qbatt."""


class LayoutError(QbattError, ValueError):
    """Invalid Hilbert-space layout or mismatched operand layouts."""


class TruncationError(QbattError, ValueError):
    """A state does not fit in the requested Fock truncation."""


class ParameterError(QbattError, ValueError):
    """A physical parameter is outside its allowed range."""


class UnsupportedRegimeError(QbattError, ValueError):
    """An analytic formula was requested outside the regime it was derived for."""


class IntegrationError(QbattError, RuntimeError):
    """The adaptive ODE integrator gave up before reaching the final time."""

    def __init__(self, message: str, t_reached: float):
        super().__init__(f"{message} (reached t={t_reached:.6g})")
        self.t_reached = t_reached


class NormalizationError(QbattError, ValueError):
    """Outcome weights do not form a probability distribution."""


class SentinelError(QbattError, ValueError):
    """A divergent (+inf) SNR reached an aggregate that needs finite inputs."""


class ResourceError(QbattError, ValueError):
    """The requested simulation exceeds the dense-dimension guard."""


class ConfigError(QbattError, ValueError):
    """One or more configuration validation failures."""

    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(errors))
        self.errors = list(errors)
