"""Exception hierarchy shared by all engines."""


class CoopRelayError(Exception):
    """Base class for every error raised by this package."""


class DegenerateGeometry(CoopRelayError, ValueError):
    """Two nodes coincide, so a path gain would be infinite."""


class EtaSingular(CoopRelayError, ArithmeticError):
    """The MRC combining coefficient has a (near) zero denominator."""


class NonConvergence(CoopRelayError, ArithmeticError):
    """Adaptive quadrature ran out of subdivisions before meeting its tolerance."""


class TooManyRelays(CoopRelayError, ValueError):
    """Inclusion-exclusion would need more than 2**13 terms."""


class WindowTooSmall(CoopRelayError, ValueError):
    """The PPP sampling window is too small for the tail correction to be trusted."""


class ExpansionTooLarge(CoopRelayError, ValueError):
    """Multinomial expansion requested beyond its supported size."""


class ConfigError(CoopRelayError, ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
