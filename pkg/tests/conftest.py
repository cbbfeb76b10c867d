import numpy as np
import pytest

from poisson_control import ControlProblem, GbmModel, PowerSum, ProblemSpec, build, solve_thresholds

# Reference instances with expected (a*, b*): mu=0.05, r=0.15, gamma_u=5, gamma_d=4, delta=0.3
REFERENCE_CASES = {
    "sigma0.2_lam2": ((0.2, 2.0), (0.309, 0.745)),
    "sigma0.8_lam2": ((0.8, 2.0), (0.188, 0.938)),
    "sigma0.8_lam20": ((0.8, 20.0), (0.151, 1.246)),
}


def make_problem(mu=0.05, sigma=0.2, r=0.15, lam=2.0, gamma_d=4.0, gamma_u=5.0, delta=0.3):
    return ControlProblem(GbmModel(mu, sigma), ProblemSpec(r, lam, gamma_d, gamma_u, PowerSum.monomial(delta)))


def random_problems(seed: int, count: int = 2):
    """GBM/power-payoff instances that pass the full assumption check (rejection sampling)."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        mu = rng.uniform(-0.05, 0.08)
        r = mu + rng.uniform(0.04, 0.2)
        if r <= 0.01:
            continue
        gd = rng.uniform(1.0, 6.0)
        p = make_problem(
            mu=mu,
            sigma=rng.uniform(0.1, 0.6),
            r=r,
            lam=float(np.exp(rng.uniform(np.log(0.5), np.log(50.0)))),
            gamma_d=gd,
            gamma_u=gd * rng.uniform(1.05, 1.6),
            delta=rng.uniform(0.2, 0.8),
        )
        if p.check_assumptions().passed:
            out.append(p)
    return out


RANDOM_SEED = 2026


@pytest.fixture(scope="session")
def p0():
    return make_problem()


@pytest.fixture(scope="session")
def p0_thresholds(p0):
    return solve_thresholds(p0)


@pytest.fixture(scope="session")
def p0_value(p0, p0_thresholds):
    return build(p0, p0_thresholds)


@pytest.fixture(scope="session")
def battery():
    """P0 plus two randomized instances passing check_assumptions."""
    return [("P0", make_problem())] + [(f"random{i}", p) for i, p in enumerate(random_problems(RANDOM_SEED))]


def independent_exponents(mu, sigma, s):
    """Roots of sigma^2 k (k-1)/2 + mu k - s via numpy's polynomial solver."""
    roots = np.sort(np.roots([0.5 * sigma**2, mu - 0.5 * sigma**2, -s]).real)
    return roots[1], roots[0]
