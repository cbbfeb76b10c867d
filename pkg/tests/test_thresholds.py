import numpy as np
import pytest

from poisson_control import SolverError, fixed_point_map, grid_oracle, lambda_sweep, pair_residual, singular_thresholds
from poisson_control import solve_thresholds
from poisson_control.thresholds import (
    RESIDUAL_TOL,
    gbm_explicit_pair_residual,
    oracle_surface,
    singular_residual,
)

from conftest import REFERENCE_CASES, make_problem


@pytest.fixture(scope="module")
def reference_solutions():
    out = {}
    for key, ((sigma, lam), expected) in REFERENCE_CASES.items():
        p = make_problem(sigma=sigma, lam=lam)
        out[key] = (p, solve_thresholds(p), expected)
    return out


def test_reference_thresholds(reference_solutions):
    for p, th, (a, b) in reference_solutions.values():
        assert abs(th.a_star - a) <= 0.005
        assert abs(th.b_star - b) <= 0.005


def test_thresholds_invariants(reference_solutions):
    for p, th, _ in reference_solutions.values():
        cp = th.critical_points
        assert max(abs(v) for v in th.residuals) <= RESIDUAL_TOL
        assert 0 < th.a_star <= cp.x_tilde
        assert th.b_star >= cp.x_hat
        assert th.k_prime_at_fixed_point < 1
        assert th.sign_changes == 1
        if cp.existence_condition:
            assert th.a_star < cp.x_tilde <= cp.x_hat <= th.b_star


def test_pair_residual_forms_agree(reference_solutions):
    for p, th, _ in reference_solutions.values():
        for a, b in ((th.a_star, th.b_star), (0.5 * th.a_star, 2.0 * th.b_star)):
            quot = pair_residual(p, a, b, form="quotient")
            lk = pair_residual(p, a, b, form="lk")
            assert quot == pytest.approx(lk, abs=1e-9)


def test_explicit_gbm_pair(reference_solutions):
    for p, th, _ in reference_solutions.values():
        assert max(abs(v) for v in gbm_explicit_pair_residual(p, th.a_star, th.b_star)) <= 1e-8
        # and it is not trivially zero elsewhere
        assert max(abs(v) for v in gbm_explicit_pair_residual(p, 0.9 * th.a_star, th.b_star)) > 1e-6


def test_pair_residual_examples(p0):
    cp = p0.critical_points()
    res_psi, _ = pair_residual(p0, cp.x_tilde, cp.x_hat)
    assert res_psi <= 0
    mid = 0.5 * (cp.x_tilde + cp.x_hat)
    assert max(abs(v) for v in pair_residual(p0, mid, mid)) > 1e-6


def test_fixed_point_map_properties(p0, p0_thresholds):
    cp = p0_thresholds.critical_points
    xs = np.geomspace(1e-4 * cp.x_tilde, cp.x_tilde, 40)
    ks = np.array([fixed_point_map(p0, x, cp) for x in xs])
    assert np.all((ks > 0) & (ks <= cp.x_tilde))
    # K flattens towards 0 (H(psi, 0+) = 0), where increments drop below float resolution
    assert np.all(np.diff(ks) >= -1e-15 * ks[1:])
    upper = xs >= 0.05 * cp.x_tilde
    assert np.all(np.diff(ks[upper]) > 0)
    a = p0_thresholds.a_star
    assert abs(fixed_point_map(p0, a, cp) - a) <= 1e-9
    h = 1e-3 * a
    slope = (fixed_point_map(p0, a + h, cp) - fixed_point_map(p0, a - h, cp)) / (2 * h)
    assert slope < 1
    with pytest.raises(ValueError):
        fixed_point_map(p0, 2 * cp.x_tilde, cp)


def test_uniqueness_probe(battery):
    for _, p in battery:
        th = solve_thresholds(p)
        assert th.sign_changes == 1
        assert max(abs(v) for v in th.residuals) <= RESIDUAL_TOL


def test_grid_oracle_p0(p0, p0_thresholds):
    cp = p0_thresholds.critical_points
    a_range, b_range = (0.05, cp.x_tilde), (cp.x_hat, 3.0)
    n = 400
    a, b = grid_oracle(p0, a_range, b_range, n)
    da = (a_range[1] - a_range[0]) / (n - 1)
    db = (b_range[1] - b_range[0]) / (n - 1)
    assert abs(a - p0_thresholds.a_star) <= da
    assert abs(b - p0_thresholds.b_star) <= db
    # argmin beats the solved point on the oracle's own objective (up to grid resolution)
    obj_min, scales = oracle_surface(p0, a, b)
    obj_star, _ = oracle_surface(p0, p0_thresholds.a_star, p0_thresholds.b_star, scales=scales)
    assert obj_min.item() <= obj_star.item() + 1e-12 or abs(a - p0_thresholds.a_star) <= da


def test_grid_oracle_coarse(p0, p0_thresholds):
    cp = p0_thresholds.critical_points
    a_range, b_range = (0.05, cp.x_tilde), (cp.x_hat, 3.0)
    a, b = grid_oracle(p0, a_range, b_range, 20)
    assert abs(a - p0_thresholds.a_star) <= (a_range[1] - a_range[0]) / 19
    assert abs(b - p0_thresholds.b_star) <= (b_range[1] - b_range[0]) / 19


def test_singular_thresholds(p0, p0_thresholds):
    cp = p0_thresholds.critical_points
    s = singular_thresholds(p0)
    assert 0 < s.a_s <= cp.x_star_u and s.b_s >= cp.x_star_d
    assert max(abs(v) for v in s.residuals) <= RESIDUAL_TOL
    assert max(abs(v) for v in singular_residual(p0, s.a_s, s.b_s)) <= RESIDUAL_TOL
    # empirical for P0, not a general claim
    assert s.a_s < p0_thresholds.a_star and s.b_s > p0_thresholds.b_star


def test_lambda_sweep_converges(p0):
    entries = lambda_sweep(p0, [2.0, 20.0, 200.0, 2000.0])
    assert all(not e.error for e in entries)
    a_gaps = [e.a_gap for e in entries]
    b_gaps = [e.b_gap for e in entries]
    assert all(x > y for x, y in zip(a_gaps, a_gaps[1:]))
    assert all(x > y for x, y in zip(b_gaps, b_gaps[1:]))
    assert a_gaps[-1] <= 0.01 and b_gaps[-1] <= 0.01


def test_lambda_sweep_records_failures(p0):
    bad = make_problem(gamma_d=0.0, gamma_u=0.0)
    sing = singular_thresholds(p0)
    entries = lambda_sweep(bad, [2.0], singular=sing)
    assert entries[0].error and np.isnan(entries[0].a_star)


def test_solver_error_when_assumptions_fail():
    with pytest.raises(SolverError):
        solve_thresholds(make_problem(gamma_d=0.0, gamma_u=0.0))
