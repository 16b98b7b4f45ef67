"""Torus fields, translations and the frequency-matrix checks."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsymp.errors import ConfigError, ResonantModeError
from qsymp.torus import (
    FourierMode,
    QuasiPeriodicScalar,
    ergodicity_check,
    frequency_matrix,
    named_constant,
    random_field,
    resolution_pitch,
    spectral_h_minus1,
    torus_delta,
    translate,
    wrap,
)
from qsymp.twist import fd_jacobian

coord = st.floats(-50, 50, allow_nan=False)


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=5))
def test_wrap_lands_in_unit_interval(v):
    w = wrap(v)
    assert np.all((w >= 0) & (w < 1))
    # same class mod 1
    assert np.allclose(torus_delta(w, v), 0.0, atol=1e-9)


@given(st.tuples(coord, coord), st.tuples(coord, coord))
def test_translate_is_a_group_action(x, y):
    A = np.array([[1.0, 0.0], [0.0, 1.0], [(1 + math.sqrt(5)) / 2, math.sqrt(2) - 1]])
    w = np.array([0.1, 0.2, 0.3])
    lhs = translate(translate(w, A, x), A, y)
    rhs = translate(w, A, np.add(x, y))
    assert np.allclose(torus_delta(lhs, rhs), 0.0, atol=1e-10)


def test_translate_rejects_dimension_mismatch(flagship_A):
    with pytest.raises(ConfigError):
        translate(np.zeros(2), flagship_A, np.zeros(2))


def test_canonical_mode_flips_sine():
    # [TRIVIAL] sin(-t) = -sin(t)
    md = FourierMode((-1, 2), 0.3, 0.5).canonical()
    assert md.m == (1, -2) and md.c == 0.3 and md.s == -0.5


def test_duplicate_modes_merge():
    f = QuasiPeriodicScalar.from_terms(2, [((1, 0), 0.1, 0.0), ((-1, 0), 0.2, 0.4)])
    assert len(f.modes) == 1
    # [TRIVIAL] 0.1 + 0.2 cosine, -0.4 sine after canonicalisation
    assert f.modes[0].c == pytest.approx(0.3) and f.modes[0].s == pytest.approx(-0.4)


@given(st.integers(0, 10_000))
def test_pullback_jet_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    f = random_field(rng, 3, n_modes=4, max_freq=2, amplitude=0.1)
    A = np.array([[1.0, 0.0], [0.0, 1.0], [(1 + math.sqrt(5)) / 2, math.sqrt(2) - 1]])
    w = rng.random(3)
    x = rng.uniform(-3, 3, 2)
    val, g, H = f.pullback_jet(A, w, x[None])
    val_fn = lambda z: f.pullback_jet(A, w, np.atleast_2d(z))[0]
    grad_fn = lambda z: f.pullback_jet(A, w, np.atleast_2d(z))[1]
    assert np.allclose(fd_jacobian(val_fn, x, 1e-6).ravel(), g[0], atol=1e-7)
    assert np.allclose(fd_jacobian(grad_fn, x, 1e-6), H[0], atol=1e-6)
    assert np.allclose(H[0], H[0].T)


@given(st.integers(0, 10_000))
def test_fourier_bounds_dominate_samples(seed):
    rng = np.random.default_rng(seed)
    f = random_field(rng, 3)
    A = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.25]])
    bv, bg, bh = f.fourier_bounds(A)
    pts = rng.random((500, 3))
    g, H = f.pulled_gradient(A, pts)
    assert np.max(np.abs(f.value(pts))) <= bv + 1e-12
    assert np.max(np.linalg.norm(g, axis=1)) <= bg + 1e-12
    assert np.max(np.linalg.norm(H, ord=2, axis=(1, 2))) <= bh + 1e-12


def test_random_field_is_mean_zero():
    f = random_field(np.random.default_rng(3), 4, n_modes=6)
    assert not f.has_mean
    assert f.scaled(0.0).is_zero


def test_spectral_norm_closed_form():
    # [DERIVED] two modes of amplitude 0.05 with |mA| = 1: 2 * 0.05^2 / 4
    f = QuasiPeriodicScalar.from_terms(2, [((1, 0), 0.05, 0.0), ((0, 1), 0.0, 0.05)])
    assert spectral_h_minus1(f, np.eye(2)) == pytest.approx(2 * 0.05**2 / 4, rel=1e-14)


def test_spectral_norm_flags_resonant_mode():
    f = QuasiPeriodicScalar.from_terms(2, [((1, -1), 0.05, 0.0)])
    with pytest.raises(ResonantModeError):
        spectral_h_minus1(f, np.array([[1.0], [1.0]]))


def test_ergodicity_check_finds_resonance():
    # [TRIVIAL] rows (1, 0), (0, 1), (1, 1): m = (1, 1, -1) annihilates A
    A = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    rep = ergodicity_check(A, 2)
    assert not rep.ergodic
    assert (1, 1, -1) in rep.zeros


def test_ergodicity_check_golden_row(flagship_A):
    rep = ergodicity_check(flagship_A, 10)
    assert rep.ergodic and rep.min_norm > 0


def test_frequency_matrix_rejects_tall_rank_deficiency():
    with pytest.raises(ConfigError):
        frequency_matrix(np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]))
    with pytest.raises(ConfigError):
        frequency_matrix(np.ones((1, 2)))


@pytest.mark.parametrize(
    "token, value",
    [("sqrt2", math.sqrt(2)), ("sqrt2-1", math.sqrt(2) - 1), ("golden", (1 + math.sqrt(5)) / 2),
     ("golden/2", (1 + math.sqrt(5)) / 4), (0.25, 0.25), ("1e-3", 1e-3)],
)
def test_named_constants(token, value):
    # [TRIVIAL] closed forms
    assert named_constant(token) == value


def test_named_constant_unknown():
    with pytest.raises(ConfigError):
        named_constant("tau")


def test_resolution_pitch(periodic_field):
    # [DERIVED] largest |mA| = 1, four seeds per period
    assert resolution_pitch(periodic_field, np.eye(2)) == 0.25
