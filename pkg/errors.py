"""
errors.py — Exception hierarchy for levymap
=============================================
Every error carries the process exit code the CLI reports for it:
  2  configuration / parameter problems
  3  domain violations and unsupported inputs
  4  numerical (quadrature) failures
"""


class LevymapError(Exception):
    exit_code = 1


class ConfigError(LevymapError):
    exit_code = 2

    def __init__(self, message: str, field_path: str = ""):
        self.field_path = field_path
        self.message = message
        super().__init__(f"{field_path}: {message}" if field_path else message)


class InvalidParameterError(LevymapError, ValueError):
    exit_code = 2


class DomainViolationError(LevymapError):
    exit_code = 3


class UnsupportedFamilyError(LevymapError):
    exit_code = 3


class UnsupportedTripleError(LevymapError):
    exit_code = 3


class SpectralDivergenceError(LevymapError):
    """The spectral measure fails ∫ min(x², 1) M(dx) < ∞."""
    exit_code = 3


class DivergentMassError(LevymapError):
    exit_code = 3


class InfiniteMassError(LevymapError):
    exit_code = 3


class ImageNotPositiveError(LevymapError):
    exit_code = 3


class UndecidableError(LevymapError):
    """Quadrature cannot certify convergence or divergence."""
    exit_code = 3


class QuadratureError(LevymapError):
    exit_code = 4
