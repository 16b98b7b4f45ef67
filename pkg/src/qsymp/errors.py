"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the command line
front end can emit an error record without parsing messages.
"""


class QsympError(Exception):
    code = "error"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def record(self):
        return {"code": self.code, "message": str(self), **{k: _plain(v) for k, v in self.details.items()}}


class ConfigError(QsympError):
    """Invalid configuration or mismatched dimensions."""

    code = "config_invalid"


class NumericalError(QsympError):
    """A numerical routine failed to meet its contract."""

    code = "numerical_failure"


class TwistViolation(NumericalError):
    code = "twist_violation"


class DegenerateFieldError(NumericalError):
    code = "degenerate_field"


class ResonantModeError(ConfigError):
    code = "resonant_mode"


class UnsupportedCodimensionError(NumericalError):
    code = "unsupported_codimension"


class OpenComponentError(NumericalError):
    code = "open_component"


class OutsideAnnulusError(NumericalError):
    code = "outside_annulus"


class StepTooLargeError(NumericalError):
    code = "step_too_large"


class IncompleteCensusError(NumericalError):
    code = "incomplete_census"


class UnresolvedFieldWarning(UserWarning):
    """Seeding grid did not resolve the critical set (count changed on refinement)."""


def _plain(v):
    try:
        import numpy as np

        if isinstance(v, np.ndarray):
            return v.tolist()
        if isinstance(v, np.generic):
            return v.item()
    except ImportError:  # pragma: no cover
        pass
    return v
