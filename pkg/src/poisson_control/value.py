"""Piecewise value function built from a solved threshold pair.

Below ``a*`` the process is pushed up at the next signal, above ``b*`` it is
pushed down; in between it is left alone.  Each region has its own
``r``- or ``(r + lam)``-harmonic representation and the three pieces are glued
with C^2 pasting at both thresholds.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PastingError
from .functionals import ControlProblem, Side
from .functions import ScalarFunction
from .resolvent import resolvent_function
from .thresholds import RESIDUAL_TOL, Thresholds

CONTINUITY_TOL = 1e-9
SLOPE_TOL = 1e-8
CURVATURE_TOL = 1e-6


@dataclass(frozen=True)
class ValueFunction:
    problem: ControlProblem
    a_star: float
    b_star: float
    B1: float
    B2: float
    C: float
    D: float
    A_d: float
    A_u: float
    # numerators of C and D, used to evaluate C*phi and D*psi as scaled ratios
    c_num: float
    d_num: float
    r_pi: ScalarFunction = field(repr=False)
    rl_pi_d: ScalarFunction = field(repr=False)
    rl_pi_u: ScalarFunction = field(repr=False)

    def _middle(self, x, order):
        m, r = self.problem.model, self.problem.r
        return self.B1 * m.phi(r, x, order) + self.B2 * m.psi(r, x, order) + self.r_pi(x, order)

    def _above(self, x, order):
        m, b = self.problem.model, self.b_star
        out = self.c_num * m.fundamental_ratio("phi", self.problem.rl, x, order, b, 1) + self.rl_pi_d(x, order)
        return out + self.A_d if order == 0 else out

    def _below(self, x, order):
        m, a = self.problem.model, self.a_star
        out = self.d_num * m.fundamental_ratio("psi", self.problem.rl, x, order, a, 1) + self.rl_pi_u(x, order)
        return out + self.A_u if order == 0 else out

    def one_sided(self, region: str, x, order: int = 0):
        """Evaluate one region's formula regardless of where ``x`` lies."""
        return {"below": self._below, "middle": self._middle, "above": self._above}[region](x, order)

    def region(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x < self.a_star, "below", np.where(x > self.b_star, "above", "middle"))
        return out if out.ndim else str(out)

    def __call__(self, x, order: int = 0):
        return evaluate(self, x, order)


def evaluate(vf: ValueFunction, x, order: int = 0):
    """``V^(order)(x)``; the middle formula is used at the thresholds themselves."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    vf.problem.model.interval.check(x)
    xs = np.asarray(x, dtype=float)
    flat = np.atleast_1d(xs).ravel()
    out = np.empty_like(flat)
    for name, mask in (("below", flat < vf.a_star), ("above", flat > vf.b_star),
                       ("middle", (flat >= vf.a_star) & (flat <= vf.b_star))):
        if mask.any():
            out[mask] = vf.one_sided(name, flat[mask], order)
    return out.reshape(xs.shape) if xs.ndim else float(out[0])


def build(problem: ControlProblem, thresholds: Thresholds, check: bool = True) -> ValueFunction:
    """Assemble V from ``(a*, b*)`` and verify the pasting conditions."""
    if max(abs(v) for v in thresholds.residuals) > RESIDUAL_TOL:
        raise PastingError(f"threshold residuals {thresholds.residuals} exceed {RESIDUAL_TOL}")
    m, spec = problem.model, problem.spec
    r, lam, rl = spec.r, spec.lam, problem.rl
    a, b = thresholds.a_star, thresholds.b_star
    gd, gu = spec.gamma_d, spec.gamma_u
    qs = problem.numerics.quad
    r_pi = problem.r_pi
    rl_pi_d = resolvent_function(m, problem.pi_gamma_function(Side.d), rl, qs=qs)
    rl_pi_u = resolvent_function(m, problem.pi_gamma_function(Side.u), rl, qs=qs)

    dpsi_a, dpsi_b = m.psi(r, a, 1), m.psi(r, b, 1)
    dphi_a, dphi_b = m.phi(r, a, 1), m.phi(r, b, 1)
    drp_a, drp_b = r_pi(a, 1), r_pi(b, 1)
    den = dphi_b * dpsi_a - dphi_a * dpsi_b
    B1 = (gd * dpsi_a - gu * dpsi_b + dpsi_b * drp_a - dpsi_a * drp_b) / den
    B2 = (-gd * dphi_a + gu * dphi_b - dphi_b * drp_a + dphi_a * drp_b) / den

    c_num = gd - rl_pi_d(b, 1)
    d_num = gu - rl_pi_u(a, 1)
    with np.errstate(over="ignore", divide="ignore"):
        C = c_num / m.phi(rl, b, 1)
        D = d_num / m.psi(rl, a, 1)
    A_d = lam / r * (c_num * m.fundamental_ratio("phi", rl, b, 0, b, 1) + rl_pi_d(b) - gd * b)
    A_u = lam / r * (d_num * m.fundamental_ratio("psi", rl, a, 0, a, 1) + rl_pi_u(a) - gu * a)

    vf = ValueFunction(problem, a, b, float(B1), float(B2), float(C), float(D), float(A_d), float(A_u),
                       float(c_num), float(d_num), r_pi, rl_pi_d, rl_pi_u)
    if check:
        errors = pasting_errors(vf)
        bad = {k: v for k, v in errors.items() if v > _PASTING_TOLS[k]}
        if bad:
            raise PastingError(f"pasting conditions violated: {bad}")
    return vf


_PASTING_TOLS = {
    "continuity_a": CONTINUITY_TOL,
    "continuity_b": CONTINUITY_TOL,
    "slope_a": SLOPE_TOL,
    "slope_b": SLOPE_TOL,
    "curvature_a": CURVATURE_TOL,
    "curvature_b": CURVATURE_TOL,
}


def _rel(u: float, v: float) -> float:
    return abs(u - v) / max(abs(u), abs(v), 1e-300)


def pasting_errors(vf: ValueFunction) -> dict[str, float]:
    """Relative mismatches of value, slope and curvature at both thresholds."""
    a, b = vf.a_star, vf.b_star
    spec = vf.problem.spec
    return {
        "continuity_a": _rel(vf.one_sided("below", a), vf.one_sided("middle", a)),
        "continuity_b": _rel(vf.one_sided("above", b), vf.one_sided("middle", b)),
        "slope_a": max(abs(vf.one_sided(s, a, 1) - spec.gamma_u) for s in ("below", "middle")) / spec.gamma_u,
        "slope_b": max(abs(vf.one_sided(s, b, 1) - spec.gamma_d) for s in ("above", "middle")) / spec.gamma_d,
        "curvature_a": _rel(vf.one_sided("below", a, 2), vf.one_sided("middle", a, 2)),
        "curvature_b": _rel(vf.one_sided("above", b, 2), vf.one_sided("middle", b, 2)),
    }


def hjb_residuals(vf: ValueFunction, x) -> np.ndarray:
    """Relative residual of the region's ODE at each ``x``.

    Middle: ``(A - r)V + pi``; above: ``(A - (r+lam))V + pi + lam(gamma_d (x - b) + V(b))``;
    below: the mirrored identity with ``gamma_u`` and ``a``.
    """
    p = vf.problem
    m, spec = p.model, p.spec
    x = np.atleast_1d(np.asarray(x, dtype=float))
    v, v1, v2 = (evaluate(vf, x, k) for k in range(3))
    gen = 0.5 * m.sigma(x) ** 2 * v2 + m.mu(x) * v1
    pi = p.payoff(x)
    region = np.atleast_1d(vf.region(x))
    rate = np.where(region == "middle", spec.r, p.rl)
    jump = np.zeros_like(x)
    up = region == "above"
    lo = region == "below"
    jump[up] = spec.lam * (spec.gamma_d * (x[up] - vf.b_star) + evaluate(vf, vf.b_star))
    jump[lo] = spec.lam * (spec.gamma_u * (x[lo] - vf.a_star) + evaluate(vf, vf.a_star))
    res = gen - rate * v + pi + jump
    scale = np.abs(gen) + rate * np.abs(v) + np.abs(pi) + np.abs(jump)
    return np.abs(res) / scale


@dataclass
class Diagnostics:
    checks: dict[str, bool]
    values: dict[str, float]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def diagnostics(vf: ValueFunction, n_grid: int = 2048) -> Diagnostics:
    """Shape and bound checks on a log grid over ``[a*/10, 10 b*]``.

    Sup/inf terms of the growth bounds are grid maxima/minima.
    """
    p = vf.problem
    spec = p.spec
    a, b = vf.a_star, vf.b_star
    grid = np.geomspace(a / 10.0, 10.0 * b, n_grid)
    v, v1, v2 = (evaluate(vf, grid, k) for k in range(3))
    mid = (grid > a) & (grid < b)
    above, below = grid > b, grid < a
    checks, values = {}, {}

    values["max_curvature_middle"] = float(v2[mid].max())
    checks["concavity"] = values["max_curvature_middle"] <= 1e-10

    values["slope_band_excess"] = float(max((spec.gamma_d - v1[mid]).max(), (v1[mid] - spec.gamma_u).max()))
    checks["gradient_band"] = values["slope_band_excess"] <= 1e-9

    tilt_d = v - spec.gamma_d * grid
    tilt_u = v - spec.gamma_u * grid
    vb, va = evaluate(vf, b) - spec.gamma_d * b, evaluate(vf, a) - spec.gamma_u * a
    values["tilt_d_excess"] = float(tilt_d.max() - vb)
    values["tilt_u_excess"] = float(tilt_u.max() - va)
    tol = 1e-10 * (1 + abs(vb) + abs(va))
    checks["tilted_maximum_b"] = values["tilt_d_excess"] <= tol
    checks["tilted_maximum_a"] = values["tilt_u_excess"] <= tol
    checks["decreasing_tilt_above"] = bool(np.all(v1[above] - spec.gamma_d < 0))
    checks["increasing_tilt_below"] = bool(np.all(v1[below] - spec.gamma_u > 0))

    rl = p.rl
    m = p.model
    rl_theta_d = resolvent_function(m, p.theta_function(Side.d), rl, qs=p.numerics.quad)(grid)
    rl_theta_u = resolvent_function(m, p.theta_function(Side.u), rl, qs=p.numerics.quad)(grid)
    upper = vf.rl_pi_d(grid[above]) + spec.lam / spec.r * np.max(rl_theta_d)
    lower = vf.rl_pi_u(grid[below]) + spec.lam / spec.r * np.min(rl_theta_u)
    values["upper_bound_slack"] = float(np.min(upper - v[above])) if above.any() else 0.0
    values["lower_bound_slack"] = float(np.min(v[below] - lower)) if below.any() else 0.0
    checks["upper_growth_bound"] = values["upper_bound_slack"] >= -1e-9
    checks["lower_growth_bound"] = values["lower_bound_slack"] >= -1e-9
    return Diagnostics(checks, values)
