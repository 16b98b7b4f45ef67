"""Critical-point enumeration, Morse classification and box censuses."""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsymp.critical import (
    census,
    classify,
    enumerate_critical,
    ergodic_density_curve,
    in_class,
    in_half_open_box,
    shifted_base_census,
    signed_sum,
)
from qsymp.errors import DegenerateFieldError, IncompleteCensusError, UnresolvedFieldWarning
from qsymp.torus import QuasiPeriodicScalar, random_field
from qsymp.twist import GeneratingMap


def test_classify():
    # [TRIVIAL] Morse index is the number of negative eigenvalues
    assert classify(np.diag([1.0, -2.0, -3.0])) == 2
    assert classify(np.diag([1.0, 0.0])) is None


def test_in_class_selectors():
    eigs = np.array([[-1.0, -0.5], [-1.0, 2.0], [1.0, 2.0], [0.0, 1.0]])
    assert list(in_class(eigs, "any")) == [True, True, True, False]
    assert list(in_class(eigs, "morse:1")) == [False, True, False, False]
    assert list(in_class(eigs, "det+")) == [True, False, True, False]
    assert list(in_class(eigs, "det-")) == [False, True, False, False]
    with pytest.raises(ValueError):
        in_class(eigs, "saddle")


def test_half_open_box_faces():
    x = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, 1.0 - 1e-12], [0.999, -0.999]])
    # [TRIVIAL] [-1, 1)^2 keeps the lower face only
    assert list(in_half_open_box(x, 1.0)) == [True, False, False, True]


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_periodic_counts_are_exact(periodic_field, ell):
    cs = enumerate_critical(periodic_field, np.eye(2), [0.1, 0.3], ell)
    c = census(cs)
    # [DERIVED] critical points sit on the lattice {0, 1/2}^2 shifted by the base: 4 per unit cell
    assert c.total == 4 * (2 * ell) ** 2
    assert c.densities["all"] == 4.0
    # [DERIVED] one max, one min and two saddles per cell
    assert c.counts["morse:0"] == c.counts["morse:2"] == (2 * ell) ** 2
    assert c.counts["morse:1"] == 2 * (2 * ell) ** 2
    assert np.max(cs.residual) <= 1e-10
    assert not cs.warnings


def test_faces_on_lattice(periodic_field):
    # base 0 puts critical points exactly on the faces of the box
    c = census(enumerate_critical(periodic_field, np.eye(2), [0.0, 0.0], 1.0))
    assert c.total == 16


@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
def test_periodic_density_for_any_base(w1, w2):
    f = QuasiPeriodicScalar.from_terms(2, [((1, 0), 0.05, 0.0), ((0, 1), 0.05, 0.0)])
    c = census(enumerate_critical(f, np.eye(2), [w1, w2], 2.0, check_refinement=False))
    assert c.total == 64


def test_signed_sum_vanishes(periodic_field):
    cs = enumerate_critical(periodic_field, np.eye(2), [0.1, 0.3], 2.0)
    # [DERIVED] Euler characteristic of the 2-torus
    for origin in ([0.0, 0.0], [-1.3, 0.4]):
        assert signed_sum(cs, origin) == 0


def test_signed_sum_needs_points(periodic_field):
    cs = enumerate_critical(periodic_field, np.eye(2), [0.1, 0.3], 1.0)
    with pytest.raises(IncompleteCensusError):
        signed_sum(cs, [5.0, 5.0])


def test_shifted_base_translates_points(flagship_A):
    f = QuasiPeriodicScalar.from_terms(3, [((1, 0, 0), 0.04, 0), ((0, 1, 0), 0.04, 0), ((1, 0, 1), 0.03, 0),
                                           ((0, 1, -1), 0, 0.03)])
    w = np.array([0.1, 0.2, 0.3])
    x0 = np.array([0.37, -0.21])
    big = enumerate_critical(f, flagship_A, w, 4.0, check_refinement=False)
    shifted = shifted_base_census(f, flagship_A, w, x0, 2.0, check_refinement=False)
    expected = big.x - x0
    expected = expected[in_half_open_box(expected, 2.0)]
    assert len(shifted) == len(expected)
    d = np.linalg.norm(shifted.x[:, None] - expected[None], axis=2).min(axis=1)
    assert np.max(d) <= 1e-9


def test_gradient_level_a(periodic_field):
    a = np.array([0.1, -0.05])
    cs = enumerate_critical(periodic_field, np.eye(2), [0.1, 0.3], 1.0, a=a)
    _, g, _ = periodic_field.pullback_jet(np.eye(2), [0.1, 0.3], cs.x)
    assert len(cs) > 0 and np.max(np.abs(g - a)) <= 1e-10
    # [TRIVIAL] |a| above the sup of the gradient: no solutions
    assert len(enumerate_critical(periodic_field, np.eye(2), [0.1, 0.3], 1.0, a=[5.0, 0.0])) == 0


def test_zero_field_rejected():
    with pytest.raises(DegenerateFieldError):
        enumerate_critical(QuasiPeriodicScalar.zero(2), np.eye(2), [0, 0], 1.0)


def test_non_isolated_critical_set_is_flagged():
    # w depends on x1 only: critical set is a union of lines
    f = QuasiPeriodicScalar.from_terms(2, [((1, 0), 0.05, 0.0)])
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        cs = enumerate_critical(f, np.eye(2), [0.0, 0.0], 1.0)
    assert np.any(cs.degenerate) or len(cs) == 0
    assert any(issubclass(r.category, UnresolvedFieldWarning) for r in rec)


def test_density_curve_nested(periodic_field):
    curve = ergodic_density_curve(periodic_field, np.eye(2), [0.1, 0.3], [1, 2, 4])
    # [DERIVED] exact at integer half-widths
    assert np.array_equal(curve.densities, [4.0, 4.0, 4.0])
    assert curve.max_relative_change == 0.0
    with pytest.raises(ValueError):
        ergodic_density_curve(periodic_field, np.eye(2), [0.1, 0.3], [2, 1])


@given(st.integers(0, 10_000))
def test_critical_points_are_fixed_points(seed):
    rng = np.random.default_rng(seed)
    A = np.array([[1.0, 0.0], [0.0, 1.0], [(1 + math.sqrt(5)) / 2, math.sqrt(2) - 1]])
    f = random_field(rng, 3, n_modes=3, max_freq=1, amplitude=0.001)
    w = rng.random(3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnresolvedFieldWarning)
        cs = enumerate_critical(f, A, w, 1.0, check_refinement=False)
    gm = GeneratingMap(f, A, w)
    ok = ~cs.degenerate
    if np.any(ok):
        x = cs.x[ok]
        assert np.max(np.linalg.norm(gm(x) - x, axis=1)) <= 1e-9
