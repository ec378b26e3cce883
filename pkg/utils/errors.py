"""
Exception hierarchy for the lattice flow toolkit.

RULES:
- Every error raised on purpose derives from LatticeFlowError
- exit_code is what app.py returns for it
- Gates (logic/gates.py) never raise, they report
"""

import config


class LatticeFlowError(Exception):
    exit_code = 1


class ValidationError(LatticeFlowError, ValueError):
    """Bad shapes, out-of-range sites, values outside an operation's domain."""

    exit_code = config.EXIT_CONFIG_ERROR


class ConfigError(LatticeFlowError):
    exit_code = config.EXIT_CONFIG_ERROR


# =====================================================
# NUMERIC FAILURES
# =====================================================
class NumericError(LatticeFlowError):
    exit_code = config.EXIT_NUMERIC_FAILURE


class EvaluationError(NumericError):
    pass


class IntegrationError(NumericError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class NonFiniteGradientError(NumericError):
    def __init__(self, message: str, primitive: str | None = None):
        super().__init__(message if primitive is None else f"{message} [{primitive}]")
        self.primitive = primitive


class TrainingError(NumericError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class EstimatorError(NumericError):
    pass


class SamplingError(NumericError):
    pass


class AcceptanceError(LatticeFlowError):
    exit_code = config.EXIT_ACCEPTANCE_FAILURE
