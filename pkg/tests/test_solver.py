import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from d2dvideo.model import Catalog, QualityProfile, RadioParams
from d2dvideo.placement import (SolverError, caching_prob_given_nu, delivery_success_prob,
                                expected_quality_sum, multiplier_bracket, rate_coefficient,
                                solve_placement)

from conftest import TABLE_I, table_setup


def test_rate_coefficient_examples():
    assert rate_coefficient(0.1, 0.01, 1e6, 1e6) == pytest.approx(10 * math.pi)
    assert rate_coefficient(0.1, 0.1, 1e6, 1e6) == pytest.approx(math.pi)
    assert rate_coefficient(0.2, 0.1, 1e6, 1e6) == pytest.approx(2 * math.pi)


def test_rate_coefficient_accepts_a_threshold_table():
    rho = np.array([[1e6, 2e6]])
    c = rate_coefficient(0.1, 0.01, rho, 1e6)
    assert c.shape == (1, 2)
    assert c[0, 1] == pytest.approx(10 * math.pi / 3)


def test_delivery_success_examples():
    assert delivery_success_prob(0.0, 5.0) == 0.0
    assert delivery_success_prob(1.0, 31.4159) == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValueError):
        delivery_success_prob(1.2, 1.0)


def test_expected_quality_sum_examples():
    f, w = np.array([1.0]), np.array([34.0])
    assert expected_quality_sum(np.zeros((1, 1)), f, w, 31.4159) == 0.0
    assert expected_quality_sum(np.ones((1, 1)), f, w, 31.4159) == pytest.approx(34.0)
    with pytest.raises(ValueError):
        expected_quality_sum(np.ones((2, 1)), f, w, 1.0)


@given(st.integers(0, 4), st.integers(0, 2), st.floats(0.0, 1.0))
def test_expected_quality_sum_is_monotone(i, q, bump):
    f = np.array([0.4, 0.2, 0.2, 0.1, 0.1])
    w = np.array([34.0, 36.64, 39.11])
    p = np.full((5, 3), 0.3)
    base = expected_quality_sum(p, f, w, 2.0)
    p[i, q] = min(1.0, p[i, q] + bump)
    assert expected_quality_sum(p, f, w, 2.0) >= base - 1e-12


def _toy():
    f = np.array([0.5, 0.3, 0.2])
    w = np.array([34.0, 39.11])
    c = np.full((3, 2), 3.0)
    sizes = np.array([1.0, 4.0])
    return f, w, c, sizes


def test_multiplier_bracket_endpoints():
    f, w, c, sizes = _toy()
    lo, hi = multiplier_bracket(f, w, c, sizes)
    p_hi, _ = caching_prob_given_nu(hi, f, w, c, sizes)
    p_lo, _ = caching_prob_given_nu(lo, f, w, c, sizes)
    assert np.all(p_hi == 0.0)
    assert np.allclose(p_lo, 1.0)


def test_storage_nonincreasing_in_multiplier():
    f, w, c, sizes = _toy()
    lo, hi = multiplier_bracket(f, w, c, sizes)
    used = [float((caching_prob_given_nu(nu, f, w, c, sizes)[0] * sizes).sum())
            for nu in np.linspace(lo, hi, 100)]
    assert np.all(np.diff(used) <= 1e-12)


@pytest.mark.parametrize("top", [4.0, 3.0, 6.0])
def test_reference_table(top):
    start = time.perf_counter()
    sol = solve_placement(*table_setup(top), storage=6.0)
    assert time.perf_counter() - start < 1.0
    assert np.max(np.abs(sol.p - np.array(TABLE_I[top]))) <= 0.005


def test_capacity_binds():
    sol = solve_placement(*table_setup(), storage=6.0)
    assert sol.storage_used == pytest.approx(6.0, abs=1e-4)
    assert float((sol.p * sol.storage_size).sum()) == pytest.approx(6.0, abs=1e-4)


def test_kkt_conditions_hold():
    sol = solve_placement(*table_setup(), storage=6.0, tol=1e-9)
    res = sol.kkt_residuals()
    assert res["stationarity"] < 1e-8
    assert res["upper_slackness"] < 1e-8
    assert res["storage_violation"] < 1e-8


def test_low_snr_drops_unpopular_files():
    sol = solve_placement(*table_setup(snr_db=10.0), storage=6.0)
    assert np.all(sol.p[3:] < 1e-3)
    assert np.all(sol.p[0] > 0.1)


def test_more_storage_never_lowers_a_probability():
    ps = [solve_placement(*table_setup(), storage=m).p for m in (4.0, 6.0, 8.0)]
    assert np.all(ps[1] >= ps[0] - 1e-6)
    assert np.all(ps[2] >= ps[1] - 1e-6)


def test_ample_storage_caches_everything():
    sol = solve_placement(*table_setup(), storage=40.0)
    assert np.all(sol.p == 1.0)
    assert sol.nu == 0.0


def test_solver_failure_reports_bracket():
    with pytest.raises(SolverError) as err:
        solve_placement(*table_setup(), storage=6.0, max_iter=3)
    lo, hi = err.value.bracket
    assert lo < hi
    assert err.value.storage_gap != 0


def test_natural_formulation_is_optimal_against_random_feasible_points(rng):
    cat, prof, radio = table_setup()
    sol = solve_placement(cat, prof, radio, 6.0, tol=1e-9, quality_scale="db", log_base=math.e)
    best = sol.objective()
    for _ in range(2000):
        p = rng.uniform(0, 1, size=sol.p.shape)
        used = (p * sol.storage_size).sum()
        p = np.clip(p * 6.0 / used, 0, 1)
        assert sol.objective(p) <= best + 1e-9


@settings(max_examples=60, deadline=None)
@given(
    F=st.integers(1, 8),
    sizes=st.lists(st.integers(1, 6), min_size=1, max_size=4, unique=True),
    frac=st.floats(0.05, 0.95),
    snr=st.floats(5.0, 30.0),
    intensity=st.floats(0.01, 0.5),
    gamma=st.floats(0.0, 2.0),
)
def test_solution_invariants(F, sizes, frac, snr, intensity, gamma):
    sizes = sorted(sizes)
    Q = len(sizes)
    cat = Catalog(F, gamma)
    prof = QualityProfile(tuple(30.0 + 2 * q for q in range(Q)),
                          tuple(1e6 * (q + 1) for q in range(Q)), tuple(map(float, sizes)))
    radio = RadioParams(1e6, 10 ** (-snr / 10), intensity, 15.0, 5e-3)
    storage = frac * F * sum(sizes)
    sol = solve_placement(cat, prof, radio, storage, tol=1e-7)
    assert np.all(sol.p >= 0) and np.all(sol.p <= 1)
    assert sol.storage_used == pytest.approx(storage, abs=1e-6)
    assert np.all(sol.mu >= 0)
    assert np.max(np.abs(sol.mu * (sol.p - 1))) < 1e-9


def test_no_devices_fills_storage_evenly():
    cat, prof, _ = table_setup()
    radio = RadioParams(1e6, 0.01, 0.0, 15.0, 5e-3)
    sol = solve_placement(cat, prof, radio, 6.0)
    assert np.allclose(sol.p, 6.0 / 35.0)
    assert sol.storage_used == pytest.approx(6.0)
