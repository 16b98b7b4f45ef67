"""Quasiperiodic symplectic twist maps: construction, fixed points and their density."""

from importlib.resources import files

from .annulus import OmegaProfile, fixed_points_2d, twist_from_gen
from .critical import census, enumerate_critical, ergodic_density_curve, signed_sum
from .density import coarea_density, cross_validate, kac_rice_mc, kac_rice_schedule, trace_level_set
from .flow import FlowMap, TimeField, integrate_flow, periodic_orbit_census, regularity_report, time_one_map
from .torus import FourierMode, QuasiPeriodicScalar, ergodicity_check, spectral_h_minus1, translate
from .twist import GeneratingMap, forward_map, hat_map

__version__ = "0.1.0"


def fixture_path(name: str):
    """Path of a bundled experiment config, e.g. ``fixture_path("periodic_baseline.json")``."""
    return files(__package__).joinpath("fixtures", name)


__all__ = [
    "FlowMap", "FourierMode", "GeneratingMap", "OmegaProfile", "QuasiPeriodicScalar", "TimeField",
    "census", "coarea_density", "cross_validate", "enumerate_critical", "ergodic_density_curve",
    "ergodicity_check", "fixed_points_2d", "fixture_path", "forward_map", "hat_map", "integrate_flow",
    "kac_rice_mc", "kac_rice_schedule", "periodic_orbit_census", "regularity_report", "signed_sum",
    "spectral_h_minus1", "time_one_map", "trace_level_set", "translate", "twist_from_gen",
]
