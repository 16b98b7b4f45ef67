"""Kac-Rice Monte Carlo, level-set tracing and the coarea density."""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsymp.density import (
    ball_volume,
    coarea_density,
    cross_validate,
    curve_integral,
    kac_rice_mc,
    kac_rice_schedule,
    relative_spread,
    trace_level_set,
)
from qsymp.errors import DegenerateFieldError, UnsupportedCodimensionError
from qsymp.torus import QuasiPeriodicScalar, torus_distance

SQRT2 = math.sqrt(2)


@pytest.mark.parametrize("n, r, vol", [(1, 0.5, 1.0), (2, 1.0, math.pi), (3, 1.0, 4 * math.pi / 3)])
def test_ball_volume(n, r, vol):
    # [TRIVIAL] interval, disc and ball
    assert ball_volume(n, r) == pytest.approx(vol, rel=1e-14)


def test_kac_rice_periodic(periodic_field):
    est = kac_rice_mc(periodic_field, np.eye(2), 0.02, 200_000, seed=3)
    # [DERIVED] four critical points per unit cell
    assert abs(est.value - 4.0) <= 3 * est.stderr
    assert est.hits > 0 and est.samples == 200_000 and not est.diagnostic


def test_kac_rice_is_thread_independent(periodic_field):
    a = kac_rice_mc(periodic_field, np.eye(2), 0.05, 50_000, seed=9, shards=6, threads=1)
    b = kac_rice_mc(periodic_field, np.eye(2), 0.05, 50_000, seed=9, shards=6, threads=4)
    assert (a.value, a.stderr, a.hits) == (b.value, b.stderr, b.hits)
    c = kac_rice_mc(periodic_field, np.eye(2), 0.05, 50_000, seed=10, shards=6)
    assert c.value != a.value


def test_kac_rice_zero_hits_diagnostic(periodic_field):
    est = kac_rice_mc(periodic_field, np.eye(2), 1e-9, 1000, seed=0)
    assert est.hits == 0 and est.value == 0.0 and "epsilon too small" in est.diagnostic


def test_kac_rice_rejects_bad_eps(periodic_field):
    with pytest.raises(ValueError):
        kac_rice_mc(periodic_field, np.eye(2), 0.0, 10)


def test_kac_rice_class_split(periodic_field):
    any_ = kac_rice_mc(periodic_field, np.eye(2), 0.05, 100_000, seed=1)
    parts = [kac_rice_mc(periodic_field, np.eye(2), 0.05, 100_000, seed=1, selector=f"morse:{k}").value
             for k in range(3)]
    # same stream: the classes partition the nondegenerate samples
    assert sum(parts) == pytest.approx(any_.value, rel=1e-12)


def test_schedule_structure(periodic_field):
    sch = kac_rice_schedule(periodic_field, np.eye(2), (0.025, 0.1, 0.05), 100_000, seed=2)
    assert [e.epsilon for e in sch.estimates] == [0.1, 0.05, 0.025]
    assert 0 <= sch.chosen < 3
    assert sch.value == sch.estimates[sch.chosen].value
    assert sch.stable


def test_tracing_needs_codimension_one(periodic_field):
    with pytest.raises(UnsupportedCodimensionError):
        trace_level_set(periodic_field, np.eye(2))


def test_tracing_zero_field():
    with pytest.raises(DegenerateFieldError):
        trace_level_set(QuasiPeriodicScalar.zero(2), np.array([[1.0], [SQRT2]]))


def _separable():
    return QuasiPeriodicScalar.from_terms(2, [((1, 0), 0.5, 0.0), ((0, 1), 0.5, 0.0)])


def test_one_dimensional_coarea_matches_winding():
    f, A = _separable(), np.array([[1.0], [SQRT2]])
    curves = trace_level_set(f, A)
    assert all(c.closed and c.closure_gap < 1e-9 for c in curves)
    # [DERIVED] {sin a + sqrt2 sin b = 0} is two graphs b = h(a); the line (x, sqrt2 x)
    # crosses each sqrt2 times per unit length, maxima and minima alternating
    assert coarea_density(f, A, "morse:0", curves=curves) == pytest.approx(SQRT2, rel=1e-8)
    assert coarea_density(f, A, "morse:1", curves=curves) == pytest.approx(SQRT2, rel=1e-8)


def test_quadrature_rules_agree():
    f, A = _separable(), np.array([[1.0], [SQRT2]])
    curves = trace_level_set(f, A)
    g = sum(curve_integral(f, A, c, rule="gauss") for c in curves)
    t = sum(curve_integral(f, A, c, rule="trapezoid") for c in curves)
    assert g == pytest.approx(t, rel=1e-4)


def test_traced_vertices_lie_on_level_set(flagship_cfg):
    f, A = flagship_cfg.scalar_field(), flagship_cfg.matrix()
    curves = trace_level_set(f, A)
    for c in curves:
        g, _ = f.pulled_gradient(A, c.vertices)
        assert np.max(np.abs(g)) <= 1e-10
        assert c.closed
        # consecutive vertices are close on the torus
        assert np.max(torus_distance(c.vertices[1:], c.vertices[:-1])) <= 1.5 * c.step


def test_flagship_coarea_value(flagship_cfg):
    f, A = flagship_cfg.scalar_field(), flagship_cfg.matrix()
    total = coarea_density(f, A)
    # [DERIVED] frozen from the independent box census at half-width 50 (9.747)
    assert total == pytest.approx(9.747, rel=2e-3)
    split = [coarea_density(f, A, f"morse:{k}") for k in range(3)]
    assert sum(split) == pytest.approx(total, rel=1e-9)
    # [DERIVED] Poincare-Hopf on the torus: maxima + minima = saddles
    assert split[0] + split[2] == pytest.approx(split[1], rel=1e-6)


def test_finite_sum_branch(periodic_field):
    # [DERIVED] four nondegenerate critical points on the 2-torus, |det I| = 1
    assert coarea_density(periodic_field, np.eye(2)) == 4.0
    assert coarea_density(periodic_field, 2 * np.eye(2)) == 16.0
    assert coarea_density(periodic_field, np.eye(2), "morse:1") == 2.0


def test_finite_sum_branch_degenerate():
    f = QuasiPeriodicScalar.from_terms(2, [((1, 0), 0.05, 0.0)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(DegenerateFieldError):
            coarea_density(f, np.eye(2))


@given(st.lists(st.floats(0.1, 10), min_size=2, max_size=5))
def test_relative_spread_properties(vals):
    s = relative_spread(vals)
    assert s >= 0
    assert relative_spread([v * 3.0 for v in vals]) == pytest.approx(s, rel=1e-12)


def test_cross_validate_periodic(periodic_field):
    rep = cross_validate(periodic_field, np.eye(2), [0.1, 0.3], 2.0, eps_schedule=(0.05, 0.02),
                         samples=200_000, seed=4, spread_bound=0.1)
    assert rep.ergodic == 4.0 and rep.coarea == 4.0
    assert not rep.flagged
    assert set(rep.values()) == {"ergodic", "kacrice", "coarea"}
