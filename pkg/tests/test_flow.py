"""Time-one maps of quasiperiodic Hamiltonians via the reduced torus flow."""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsymp.errors import ConfigError, DegenerateFieldError, StepTooLargeError, UnresolvedFieldWarning
from qsymp.flow import (
    FlowMap,
    TimeField,
    exactness_residual,
    fd_exactness_residual,
    flow_equivariance_residual,
    full_space_map,
    integrate_flow,
    mean_displacement,
    periodic_orbit_census,
    reduced_field,
    regularity_report,
)
from qsymp.twist import fd_jacobian, symplectic_residual

TWO_PI = 2 * math.pi
EPS = 0.1


def _shear(k=0):
    return TimeField.from_terms(2, [((0, 1), k, EPS / TWO_PI, 0.0)])


def test_autonomous_shear_closed_form():
    w = np.random.default_rng(0).random((20, 2))
    r = integrate_flow(_shear(), np.eye(2), w)
    # [DERIVED] q' = -eps sin 2pi(w2 + p), p' = 0
    assert np.allclose(r.zeta[:, 0], -EPS * np.sin(TWO_PI * w[:, 1]), atol=1e-12)
    assert np.allclose(r.zeta[:, 1], 0.0, atol=1e-14)
    # [DERIVED] monodromy [[1, -2pi eps cos 2pi w2], [0, 1]]
    assert np.allclose(r.monodromy[:, 0, 1], -TWO_PI * EPS * np.cos(TWO_PI * w[:, 1]), atol=1e-10)


def test_time_periodic_shear_averages_out():
    r = integrate_flow(_shear(k=1), np.eye(2), np.random.default_rng(1).random((20, 2)))
    # [DERIVED] integral of sin 2pi(w2 + t) over one period vanishes
    assert np.max(np.abs(r.zeta)) <= 1e-12


def test_zero_hamiltonian_is_identity():
    r = integrate_flow(TimeField.zero(3), np.eye(3)[:, :2], [0.1, 0.2, 0.3])
    # [TRIVIAL]
    assert np.array_equal(r.zeta, np.zeros(2)) and np.allclose(r.monodromy, np.eye(2))


def test_step_must_divide_one():
    with pytest.raises(ConfigError):
        integrate_flow(_shear(), np.eye(2), [0.0, 0.0], step=0.3)


def test_step_halving_certificate():
    K = TimeField.from_terms(2, [((1, 1), 0, 0.3, 0.0), ((1, -1), 0, 0.0, 0.2)])
    with pytest.raises(StepTooLargeError):
        integrate_flow(K, np.eye(2), [0.1, 0.2], step=0.5)


def test_reduced_field_is_divergence_free(flow_cfg):
    K, A = flow_cfg.hamiltonian(), flow_cfg.matrix()
    rng = np.random.default_rng(2)
    for w, t in zip(rng.random((50, 3)), rng.random(50)):
        D = fd_jacobian(lambda z: reduced_field(K, A, z[None], t)[0], w, 1e-5)
        assert abs(np.trace(D)) <= 1e-8


def test_reduced_map_matches_full_space(flow_cfg):
    K, A = flow_cfg.hamiltonian(), flow_cfg.matrix()
    rng = np.random.default_rng(3)
    for _ in range(5):
        w, x = rng.random(3), rng.uniform(-3, 3, (1, 2))
        red = FlowMap(K, A, w)(x)
        assert np.max(np.abs(red - full_space_map(K, A, w, x))) <= 1e-8


@given(st.integers(0, 10_000))
def test_monodromy_is_symplectic(seed):
    rng = np.random.default_rng(seed)
    K = TimeField.from_terms(3, [((1, 0, 0), 0, 2e-3 * rng.standard_normal(), 0.0),
                                 ((0, 1, 1), 1, 0.0, 2e-3 * rng.standard_normal())])
    A = np.vstack([np.eye(2), rng.uniform(-1, 1, (1, 2))])
    r = integrate_flow(K, A, rng.random((8, 3)), step=1e-2)
    assert np.max(symplectic_residual(r.monodromy)) <= 1e-10
    assert np.max(np.abs(np.linalg.det(r.monodromy) - 1)) <= 1e-10


@given(st.tuples(st.floats(-20, 20), st.floats(-20, 20)))
def test_flow_equivariance(a):
    K = TimeField.from_terms(3, [((1, 0, 0), 0, 7e-4, 0), ((0, 1, -1), 0, 0, 5e-4), ((1, 1, 0), 1, 3e-4, 0)])
    A = np.array([[1.0, 0.0], [0.0, 1.0], [(1 + math.sqrt(5)) / 2, math.sqrt(2) - 1]])
    fm = FlowMap(K, A, [0.1, 0.2, 0.3], step=1e-2)
    probes = np.random.default_rng(0).uniform(-2, 2, (5, 2))
    assert flow_equivariance_residual(fm, np.array(a), probes) <= 1e-9


def test_batched_equivariance_matches_single_shift():
    K = TimeField.from_terms(3, [((1, 0, 0), 0, 7e-4, 0), ((1, 1, 0), 1, 3e-4, 0)])
    A = np.array([[1.0, 0.0], [0.0, 1.0], [(1 + math.sqrt(5)) / 2, math.sqrt(2) - 1]])
    fm = FlowMap(K, A, [0.1, 0.2, 0.3], step=1e-2)
    probes = np.random.default_rng(1).uniform(-2, 2, (3, 2))
    shifts = np.random.default_rng(2).uniform(-9, 9, (4, 2))
    batched = flow_equivariance_residual(fm, shifts, probes)
    single = max(flow_equivariance_residual(fm, a, probes) for a in shifts)
    assert batched <= 1e-12 and single <= 1e-12


def test_regularity_report(flow_cfg):
    rep = regularity_report(flow_cfg.hamiltonian(), flow_cfg.matrix(), flow_cfg.base_point(),
                            probes=128, map_probes=16)
    assert rep.ell <= rep.ell_bound <= 0.3
    assert rep.twist and rep.ok
    assert rep.displacement_max <= rep.ell_bound


def test_flow_maps_are_exact(flow_cfg):
    K, A, w = flow_cfg.hamiltonian(), flow_cfg.matrix(), flow_cfg.base_point()
    probes = np.random.default_rng(4).uniform(-2, 2, (10, 2))
    res = exactness_residual(K, A, w, probes)
    assert res <= 1e-6
    # independent finite-difference estimate of the same asymmetry
    assert fd_exactness_residual(K, A, w, probes[:2]) <= 1e-6


def test_orbit_census(flow_cfg):
    K, A, w = flow_cfg.hamiltonian(), flow_cfg.matrix(), flow_cfg.base_point()
    oc = periodic_orbit_census(K, A, w, 2.0)
    assert len(oc.x) > 0
    assert np.max(oc.residual) <= 1e-10
    kinds = set(oc.kinds())
    assert kinds <= {"elliptic", "hyperbolic"}
    c = oc.census()
    assert c.counts["elliptic"] + c.counts["hyperbolic"] == c.total
    # every reported point is fixed by the certified map
    img = FlowMap(K, A, w)(oc.x)
    assert np.max(np.abs(img - oc.x)) <= 1e-9


def test_orbit_census_zero_hamiltonian():
    with pytest.raises(DegenerateFieldError):
        periodic_orbit_census(TimeField.zero(2), np.eye(2), [0, 0], 1.0)


def test_orbit_census_flags_non_isolated_fixed_set():
    # the autonomous shear fixes whole lines p = const
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        oc = periodic_orbit_census(_shear(), np.eye(2), [0.3, 0.13], 1.0)
    assert np.all(oc.degenerate)
    assert any(issubclass(r.category, UnresolvedFieldWarning) for r in rec)


def test_mean_displacement_vanishes(flow_cfg):
    md = mean_displacement(flow_cfg.hamiltonian(), flow_cfg.matrix(), 20_000, seed=5)
    # [DERIVED] zeta_1 is a time-integrated divergence-free field: Haar mean zero
    assert md.within_band and md.samples == 20_000
    again = mean_displacement(flow_cfg.hamiltonian(), flow_cfg.matrix(), 20_000, seed=5)
    assert np.array_equal(md.mean, again.mean)
