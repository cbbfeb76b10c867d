import numpy as np
import pytest

from poisson_control import (
    BracketingError,
    ControlProblem,
    DomainError,
    K_functional,
    L_functional,
    PowerSum,
    ProblemSpec,
    Side,
)
from poisson_control.functions import Smooth
from poisson_control.resolvent import resolve, resolvent_function

from conftest import independent_exponents, make_problem


def generic(f):
    return Smooth(lambda x: f(x), lambda x: f(x, 1), lambda x: f(x, 2))


def hand_x_hat(mu, sigma, r, lam, gd, delta):
    beta_l, _ = independent_exponents(mu, sigma, r + lam)
    return (gd * (r - mu) * (beta_l - delta) / (delta * (beta_l - 1))) ** (1 / (delta - 1))


def hand_x_tilde(mu, sigma, r, lam, gu, delta):
    _, alpha_l = independent_exponents(mu, sigma, r + lam)
    return (gu * (r - mu) * (delta - alpha_l) / (delta * (1 - alpha_l))) ** (1 / (delta - 1))


# --- theta, g, pi_gamma -----------------------------------------------------

def test_theta_examples(p0):
    assert p0.theta("d", 1.0) == pytest.approx(0.6, rel=1e-14)
    xs = np.geomspace(0.01, 100, 9)
    assert np.all(p0.theta(Side.d, xs) > p0.theta(Side.u, xs))
    x0 = (4.0 * 0.1) ** (1 / (0.3 - 1))
    assert x0 == pytest.approx(3.702, abs=1e-3)
    assert p0.theta("d", x0) == pytest.approx(0.0, abs=1e-12)


def test_g_examples(p0):
    assert p0.g("d", 1.0) == pytest.approx(4.0 - 7.18390804597701, rel=1e-12)
    q = ControlProblem(p0.model, ProblemSpec(0.15, 2.0, 4.0, 5.0, PowerSum()))
    assert q.g("u", 3.0) == pytest.approx(15.0)


def test_pi_gamma_examples(p0):
    assert p0.pi_gamma("u", 1.0) == pytest.approx(11.0)
    tiny = p0.with_lambda(1e-12)
    assert tiny.pi_gamma("d", 2.0) == pytest.approx(p0.payoff(2.0), rel=1e-10)


# --- resolvent identities for g and pi_gamma --------------------------------

GRID = np.geomspace(0.05, 20.0, 7)


@pytest.mark.parametrize("n", ["d", "u"])
def test_resolvent_identities(battery, n):
    for _, p in battery:
        m, r, rl, lam = p.model, p.r, p.rl, p.lam
        g = p.g_function(n)
        r_theta = resolve(m, generic(p.theta_function(n)), r, GRID, method="quad")
        np.testing.assert_allclose(g(GRID), -r_theta, rtol=1e-7, atol=1e-9)

        lhs = resolve(m, generic(p.pi_gamma_function(n)), rl, GRID, method="quad")
        rl_g = resolve(m, generic(g), rl, GRID, method="quad")
        rhs = lam * rl_g + p.r_pi(GRID)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-7)

        rl_theta = resolve(m, generic(p.theta_function(n)), rl, GRID, method="quad")
        np.testing.assert_allclose(lam * rl_g, rl_theta + g(GRID), rtol=1e-7, atol=1e-9 * np.max(np.abs(lam * rl_g)))


def test_resolvent_identities_closed_form(p0):
    for n in ("d", "u"):
        g = p0.g_function(n)
        r_theta = resolve(p0.model, p0.theta_function(n), p0.r, GRID)
        np.testing.assert_allclose(g(GRID), -r_theta, rtol=1e-8, atol=1e-12)


# --- L and K functionals ------------------------------------------------------

def test_functionals_of_zero(p0):
    zero = Smooth(lambda y: 0.0 * y)
    assert L_functional(p0.model, zero, 2.15, 1.0, method="quad") == 0.0
    assert K_functional(p0.model, zero, 2.15, 1.0, method="quad") == 0.0
    assert L_functional(p0.model, PowerSum(), 2.15, 1.0) == 0.0


@pytest.mark.parametrize("normalized", [False, True])
def test_closed_form_functionals_match_quadrature(battery, normalized):
    for _, p in battery:
        for kind, n in (("L", "d"), ("K", "u"), ("L", "u"), ("K", "d")):
            th = p.theta_function(n)
            fn = p.L if kind == "L" else p.K
            for s in (p.r, p.rl):
                closed = fn(th, s, GRID, normalized, method="closed")
                quad = fn(generic(th), s, GRID, normalized, method="quad")
                np.testing.assert_allclose(quad, closed, rtol=1e-8, atol=1e-10 * np.max(np.abs(closed)))


def test_derivative_representation(battery):
    for _, p in battery:
        m, rl = p.model, p.rl
        xs = np.geomspace(0.1, 5.0, 5)
        for kind, n in (("L", "d"), ("K", "u")):
            f = generic(p.theta_function(n))
            r1 = resolve(m, f, rl, xs, 1, method="quad")
            r2 = resolve(m, f, rl, xs, 2, method="quad")
            pre = m.sigma(xs) ** 2 / (2 * m.scale_density(xs))
            if kind == "L":
                rep = pre * (m.phi(rl, xs, 2) * r1 - m.phi(rl, xs, 1) * r2)
                direct = p.L(f, rl, xs, method="quad")
            else:
                rep = pre * (m.psi(rl, xs, 1) * r2 - m.psi(rl, xs, 2) * r1)
                direct = p.K(f, rl, xs, method="quad")
            np.testing.assert_allclose(rep, direct, rtol=1e-6, atol=1e-9 * np.max(np.abs(direct)))


# --- critical points and assumptions -----------------------------------------

def test_p0_critical_points(p0):
    cp = p0.critical_points()
    assert cp.x_star_d == pytest.approx((0.4 / 0.3) ** (1 / (0.3 - 1)), rel=1e-10)
    assert cp.x_star_u == pytest.approx((0.5 / 0.3) ** (1 / (0.3 - 1)), rel=1e-10)
    assert cp.x_star_d == pytest.approx(0.663, abs=1e-3)
    assert cp.x_star_u == pytest.approx(0.482, abs=1e-3)
    assert cp.x_zero_d == pytest.approx(0.4 ** (1 / (0.3 - 1)), rel=1e-10)
    assert cp.x_tilde == pytest.approx(hand_x_tilde(0.05, 0.2, 0.15, 2.0, 5.0, 0.3), rel=1e-10)
    assert cp.x_hat == pytest.approx(hand_x_hat(0.05, 0.2, 0.15, 2.0, 4.0, 0.3), rel=1e-10)
    assert cp.x_tilde == pytest.approx(0.5247, abs=1e-4)
    assert cp.x_hat == pytest.approx(0.5932, abs=1e-4)
    assert cp.x_star_u < cp.x_tilde < cp.x_hat < cp.x_star_d
    assert cp.existence_condition


def test_functionals_vanish_at_roots(battery):
    for _, p in battery:
        cp = p.critical_points()
        th_d, th_u = p.theta_function("d"), p.theta_function("u")
        scale_l = abs(p.L(th_d, p.rl, cp.x_star_d))
        scale_k = abs(p.K(th_u, p.rl, cp.x_star_u))
        assert abs(p.L(th_d, p.rl, cp.x_hat)) <= 1e-10 * scale_l
        assert abs(p.K(th_u, p.rl, cp.x_tilde)) <= 1e-10 * scale_k


def test_functional_sign_patterns(battery):
    for _, p in battery:
        cp = p.critical_points()
        th_d, th_u = p.theta_function("d"), p.theta_function("u")
        below = np.geomspace(cp.x_hat / 50, cp.x_hat, 60)[:-1]
        above = np.geomspace(cp.x_hat, cp.x_hat * 50, 60)[1:]
        assert np.all(p.L(th_d, p.rl, below) > 0) and np.all(p.L(th_d, p.rl, above) < 0)
        below = np.geomspace(cp.x_tilde / 50, cp.x_tilde, 60)[:-1]
        above = np.geomspace(cp.x_tilde, cp.x_tilde * 50, 60)[1:]
        assert np.all(p.K(th_u, p.rl, below) < 0) and np.all(p.K(th_u, p.rl, above) > 0)
        # J(x) = ((R_{r+lam} pi_gamma_d)'(x) - gamma_d) / phi'_{r+lam}(x) has its minimum at x_hat
        rpd = resolvent_function(p.model, p.pi_gamma_function("d"), p.rl)
        grid = np.geomspace(cp.x_hat / 5, cp.x_hat * 5, 201)
        j = (rpd(grid, 1) - p.spec.gamma_d) / p.model.phi(p.rl, grid, 1)
        k = int(np.argmin(j))
        assert grid[k - 1] <= cp.x_hat <= grid[k + 1]


def test_check_assumptions_p0(p0):
    rep = p0.check_assumptions()
    assert rep.passed and rep.core_passed
    assert set(rep.items) == {"i", "ii", "iii", "iv", "v", "vi", "existence"}
    d = rep.to_dict()
    assert d["passed"] and "critical_points" in d


def test_equal_prices_fail_item_i():
    rep = make_problem(gamma_d=4.0, gamma_u=4.0).check_assumptions()
    assert not rep.items["i"].passed
    assert "i" in rep.failed() and not rep.passed


def test_drift_above_discount_flags_iv_and_ii():
    rep = make_problem(mu=0.2).check_assumptions()
    assert not rep.items["iv"].passed
    assert rep.items["iv"].offending
    assert not rep.items["ii"].passed


def test_bracketing_failure_names_root():
    p = make_problem(gamma_d=0.0, gamma_u=0.0)
    with pytest.raises(BracketingError) as err:
        p.critical_points()
    assert err.value.name == "x_star_u"


# --- H and Q -----------------------------------------------------------------

def test_quotient_and_lk_forms_agree(battery):
    xs = np.geomspace(0.05, 20.0, 13)
    for _, p in battery:
        for fn in (p.Q, p.H):
            for flavor in ("psi", "phi"):
                a = fn(flavor, xs, form="quotient")
                b = fn(flavor, xs, form="lk")
                np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12 * np.max(np.abs(a)))


def test_hq_monotonicity(battery):
    for _, p in battery:
        cp = p.critical_points()
        xh, xt = cp.x_hat, cp.x_tilde
        left, right = np.geomspace(xh / 30, xh, 200), np.geomspace(xh, xh * 30, 200)
        assert np.all(np.diff(p.Q("psi", left)) > 0) and np.all(np.diff(p.Q("psi", right)) < 0)
        assert np.all(np.diff(p.Q("phi", left)) < 0) and np.all(np.diff(p.Q("phi", right)) > 0)
        left, right = np.geomspace(xt / 30, xt, 200), np.geomspace(xt, xt * 30, 200)
        assert np.all(np.diff(p.H("psi", left)) > 0) and np.all(np.diff(p.H("psi", right)) < 0)
        assert np.all(np.diff(p.H("phi", left)) < 0) and np.all(np.diff(p.H("phi", right)) > 0)


def test_limit_summary(battery):
    for _, p in battery:
        cp = p.critical_points()
        assert p.Q("psi", cp.x_hat) > 0
        far = 2 * max(cp.x_tilde, cp.x_zero_d)
        assert np.all(p.Q("psi", far * np.array([1.0, 10.0, 100.0])) < 0)
        assert p.H("phi", cp.x_tilde) < 0
        assert np.all(p.H("phi", cp.x_tilde * np.array([1e-2, 1e-3, 1e-4])) > 0)

        # H(psi, 0+) = 0
        small = cp.x_tilde * np.geomspace(1e-2, 1e-8, 7)
        h = np.abs(p.H("psi", small))
        assert np.all(np.diff(h) < 0)
        assert h[-1] <= 1e-6 * abs(p.H("psi", cp.x_tilde))

        # Q(phi, inf) = 0, decaying like x**(alpha_r + 2 mu / sigma^2)
        big = far * 10.0 * 2.0 ** np.arange(12)
        q = np.abs(p.Q("phi", big))
        assert np.all(np.diff(q) < 0)
        _, alpha = p.model.exponents(p.r)
        rate = alpha + p.model.c
        assert rate < 0
        slope = np.log(q[-1] / q[-2]) / np.log(2.0)
        assert slope == pytest.approx(rate, abs=0.05)
        x_tiny = big[-1] * (1e-6 / q[-1]) ** (1 / rate) * 2
        assert abs(p.Q("phi", x_tiny)) < 1e-6


def test_existence_inequalities(battery):
    for _, p in battery:
        cp = p.critical_points()
        assert cp.existence_condition
        assert p.H("psi", cp.x_tilde) <= p.Q("psi", cp.x_hat)
        assert p.H("phi", cp.x_tilde) <= p.Q("phi", cp.x_hat)


def test_functional_domain_error(p0):
    with pytest.raises(DomainError):
        p0.Q("psi", 0.0)
    with pytest.raises(DomainError):
        p0.theta("d", -1.0)
