"""Optimal threshold pair (a*, b*) via the monotone fixed-point map.

The lower threshold ``a*`` is the fixed point of

    K = H_phi^{-1} o Q_phi o Q_psi^{-1} o H_psi

with H restricted to ``(0, x_tilde]`` and Q to ``[x_hat, inf)``; ``b*`` is read
off the inner inverse.  Inverses outside their range are clamped to the
domain ends, which keeps ``K`` monotone and continuous; a fixed point that
sits on a clamp is rejected by the residual check.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import ControlError, InversionError, SolverError
from .functionals import ControlProblem, CriticalPoints, Side

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8
_INNER_RTOL = 1e-14


@dataclass(frozen=True)
class Thresholds:
    a_star: float
    b_star: float
    residuals: tuple[float, float]
    iterations: int
    k_prime_at_fixed_point: float
    critical_points: CriticalPoints
    sign_changes: int = 1


@dataclass(frozen=True)
class SingularThresholds:
    a_s: float
    b_s: float
    residuals: tuple[float, float]


@dataclass(frozen=True)
class SweepEntry:
    lam: float
    a_star: float = math.nan
    b_star: float = math.nan
    a_gap: float = math.nan
    b_gap: float = math.nan
    error: str = ""


def _normalized(h: float, q: float) -> float:
    return (h - q) / (1.0 + abs(h) + abs(q))


def pair_residual(problem: ControlProblem, a: float, b: float, form: str = "auto") -> tuple[float, float]:
    """Normalized residuals ``(H_psi(a) - Q_psi(b), H_phi(a) - Q_phi(b))``."""
    return (
        _normalized(problem.H("psi", a, form), problem.Q("psi", b, form)),
        _normalized(problem.H("phi", a, form), problem.Q("phi", b, form)),
    )


def _brent(fn, lo, hi, rtol=_INNER_RTOL):
    return optimize.brentq(fn, lo, hi, xtol=1e-300, rtol=max(rtol, 4.5e-16), maxiter=500)


def _inverse_decreasing(fn, target, lo, hi=None, grow=2.0, max_hi=None, name=""):
    """Solve ``fn(x) = target`` for a decreasing ``fn``, clamping at the domain ends.

    With ``hi=None`` the upper end is found by geometric expansion from
    ``lo`` up to ``max_hi``.  Returns ``(x, clamped)``.
    """
    f_lo = fn(lo)
    if target >= f_lo:
        return lo, True
    if hi is None:
        hi = 4.0 * lo
        limit = max_hi if max_hi is not None else lo * 2.0**20
        while fn(hi) > target:
            hi *= grow
            if hi > limit:
                raise InversionError(f"could not bracket inverse of {name} for value {target:.6g}", name=name)
    elif target <= fn(hi):
        return hi, True
    return _brent(lambda x: fn(x) - target, lo, hi), False


class _KMap:
    """The composed fixed-point map for one problem instance."""

    def __init__(self, problem: ControlProblem, cp: CriticalPoints, eps_factor: float = 1e-6):
        self.p = problem
        self.cp = cp
        self.eps = eps_factor * cp.x_tilde
        self.calls = 0

    def upper(self, a: float) -> tuple[float, bool]:
        """``b = Q_psi^{-1}(H_psi(a))`` on ``[x_hat, inf)``."""
        return _inverse_decreasing(
            lambda y: self.p.Q("psi", y), self.p.H("psi", a), self.cp.x_hat,
            max_hi=self.cp.x_hat * 2.0**20, name="Q_psi",
        )

    def __call__(self, x: float) -> tuple[float, float]:
        self.calls += 1
        b, _ = self.upper(x)
        target = self.p.Q("phi", b)
        a, _ = _inverse_decreasing(lambda y: self.p.H("phi", y), target, self.eps, self.cp.x_tilde, name="H_phi")
        return a, b


def fixed_point_map(problem: ControlProblem, x: float, cp: CriticalPoints | None = None) -> float:
    """Evaluate ``K(x)`` for ``x`` in ``(0, x_tilde]``."""
    cp = cp or problem.critical_points()
    if not 0 < x <= cp.x_tilde * (1 + 1e-12):
        raise ValueError(f"x={x} outside (0, x_tilde={cp.x_tilde}]")
    return _KMap(problem, cp)(x)[0]


def _sign_changes(values) -> list[int]:
    s = np.sign(values)
    return [i for i in range(len(s) - 1) if s[i] > 0 and s[i + 1] <= 0 or s[i] < 0 and s[i + 1] >= 0]


def solve_thresholds(problem: ControlProblem, cp: CriticalPoints | None = None, probe_points: int = 48,
                     eps_factor: float = 1e-6) -> Thresholds:
    """Locate ``a*`` as the sign change of ``K(x) - x`` and recover ``b*``."""
    try:
        cp = cp or problem.critical_points()
        kmap = _KMap(problem, cp, eps_factor)
        lo, hi = kmap.eps, cp.x_tilde
        probe = np.geomspace(lo, hi, probe_points)
        trace = [(float(x), kmap(float(x))[0] - float(x)) for x in probe]
    except ControlError as exc:
        raise SolverError(f"fixed-point map unavailable: {exc}") from exc
    diffs = [d for _, d in trace]
    changes = _sign_changes(diffs)
    if not changes:
        raise SolverError("K(x) - x has no sign change on (eps, x_tilde]", trace=trace)
    i = changes[0]
    if diffs[i] == 0:
        a = probe[i]
    elif diffs[i + 1] == 0:
        a = probe[i + 1]
    else:
        a = _brent(lambda x: kmap(x)[0] - x, probe[i], probe[i + 1], rtol=1e-13)
    b, clamped = kmap.upper(a)
    res = pair_residual(problem, a, b)
    if clamped or max(abs(v) for v in res) > RESIDUAL_TOL:
        raise SolverError(
            f"no solution of the optimality pair: fixed point a={a:.6g}, b={b:.6g} has residuals {res}",
            trace=trace,
        )
    h = 1e-5 * a
    k_prime = (kmap(min(a + h, cp.x_tilde))[0] - kmap(a - h)[0]) / (min(a + h, cp.x_tilde) - (a - h))
    log.debug("solved a*=%.12g b*=%.12g in %d map calls", a, b, kmap.calls)
    return Thresholds(float(a), float(b), res, kmap.calls, float(k_prime), cp, len(changes))


def grid_oracle(problem: ControlProblem, a_range: tuple[float, float], b_range: tuple[float, float],
                n_per_axis: int = 400, scaling: str = "equation") -> tuple[float, float]:
    """Brute-force argmin of the squared pair residual on a uniform ``n x n`` grid.

    ``scaling="equation"`` divides each equation's residual by the largest
    magnitude its two sides take on the grid, so the psi and phi equations
    weigh in equally; ``scaling="unit"`` uses :func:`pair_residual` as is.
    """
    if n_per_axis < 2:
        raise ValueError("need at least two points per axis")
    a = np.linspace(*a_range, n_per_axis)
    b = np.linspace(*b_range, n_per_axis)
    obj, _ = oracle_surface(problem, a, b, scaling)
    i, j = np.unravel_index(np.argmin(obj), obj.shape)
    return float(a[i]), float(b[j])


def oracle_surface(problem: ControlProblem, a, b, scaling: str = "equation", scales=None):
    """Objective of :func:`grid_oracle` on the outer product of ``a`` and ``b``.

    Returns ``(objective, scales)``; pass ``scales`` back in to evaluate other
    points on the same footing.
    """
    a, b = np.atleast_1d(np.asarray(a, dtype=float)), np.atleast_1d(np.asarray(b, dtype=float))
    total, used = 0.0, []
    for k, flavor in enumerate(("psi", "phi")):
        h = np.asarray(problem.H(flavor, a), dtype=float)[:, None]
        q = np.asarray(problem.Q(flavor, b), dtype=float)[None, :]
        if scaling == "unit":
            res = (h - q) / (1 + np.abs(h) + np.abs(q))
            used.append(1.0)
        else:
            scale = scales[k] if scales is not None else max(np.abs(h).max(), np.abs(q).max())
            res = (h - q) / scale
            used.append(float(scale))
        total = total + res**2
    return total, tuple(used)


def singular_residual(problem: ControlProblem, a: float, b: float) -> tuple[float, float]:
    th_u, th_d, r = problem.theta_function(Side.u), problem.theta_function(Side.d), problem.r
    return (
        _normalized(problem.L(th_u, r, a), problem.L(th_d, r, b)),
        _normalized(problem.K(th_u, r, a), problem.K(th_d, r, b)),
    )


def singular_thresholds(problem: ControlProblem, cp: CriticalPoints | None = None,
                        probe_points: int = 48) -> SingularThresholds:
    """Thresholds of the unconstrained (lambda -> inf) singular control problem.

    Same construction as :func:`solve_thresholds` with the map
    ``k = L_u^{-1} o L_d o K_d^{-1} o K_u`` on ``(0, x_star_u]``.
    """
    cp = cp or problem.critical_points()
    th_u, th_d, r = problem.theta_function(Side.u), problem.theta_function(Side.d), problem.r
    k_u = lambda x: problem.K(th_u, r, x)
    k_d = lambda x: problem.K(th_d, r, x)
    l_u = lambda x: problem.L(th_u, r, x)
    l_d = lambda x: problem.L(th_d, r, x)
    eps = 1e-6 * cp.x_star_u

    def upper(a):
        # K_d increasing on [x_star_d, inf)
        return _inverse_decreasing(lambda y: -k_d(y), -k_u(a), cp.x_star_d,
                                   max_hi=cp.x_star_d * 2.0**40, name="K_theta_d")

    def kmap(a):
        b, _ = upper(a)
        # L_u decreasing on (0, x_star_u]
        return _inverse_decreasing(l_u, l_d(b), eps, cp.x_star_u, name="L_theta_u")[0]

    try:
        probe = np.geomspace(eps, cp.x_star_u, probe_points)
        diffs = [kmap(float(x)) - float(x) for x in probe]
    except ControlError as exc:
        raise SolverError(f"singular fixed-point map unavailable: {exc}") from exc
    changes = _sign_changes(diffs)
    if not changes:
        raise SolverError("k(x) - x has no sign change on (eps, x_star_u]", trace=list(zip(probe, diffs)))
    i = changes[0]
    a = probe[i] if diffs[i] == 0 else _brent(lambda x: kmap(x) - x, probe[i], probe[i + 1], rtol=1e-13)
    b, clamped = upper(a)
    res = singular_residual(problem, a, b)
    if clamped or max(abs(v) for v in res) > RESIDUAL_TOL:
        raise SolverError(f"singular pair not solved: a={a:.6g}, b={b:.6g}, residuals {res}")
    return SingularThresholds(float(a), float(b), res)


def _sweep_one(args) -> SweepEntry:
    problem, lam, sing = args
    try:
        th = solve_thresholds(problem.with_lambda(lam))
    except ControlError as exc:
        return SweepEntry(lam, error=str(exc))
    return SweepEntry(lam, th.a_star, th.b_star, abs(th.a_star - sing.a_s), abs(th.b_star - sing.b_s))


def lambda_sweep(problem: ControlProblem, lambdas, workers: int = 1,
                 singular: SingularThresholds | None = None) -> list[SweepEntry]:
    """Solve for each intensity in ``lambdas``; failures are recorded, not raised."""
    sing = singular or singular_thresholds(problem)
    jobs = [(problem, float(lam), sing) for lam in lambdas]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_one, jobs))
    return [_sweep_one(job) for job in jobs]


def gbm_explicit_pair_residual(problem: ControlProblem, a: float, b: float) -> tuple[float, float]:
    """Residuals of the explicit GBM/power-payoff form of the optimality pair.

    Only valid for a GBM model with payoff ``x**delta``.
    """
    m = problem.model
    delta = problem.payoff.powers[0]
    mu, r = m.drift, problem.r
    b0, a0 = m.exponents(r)
    bl, al = m.exponents(problem.rl)
    ku = problem.spec.gamma_u * (mu - r)
    kd = problem.spec.gamma_d * (mu - r)
    out = []
    for e in (a0, b0):
        lhs = (al / (e * (delta - al)) - 1 / (delta - e)) * a ** (delta - e) \
            + (ku * al / (e * (1 - al)) - ku / (1 - e)) * a ** (1 - e)
        rhs = (bl / (e * (delta - bl)) - 1 / (delta - e)) * b ** (delta - e) \
            + (kd * bl / (e * (1 - bl)) - kd / (1 - e)) * b ** (1 - e)
        out.append(_normalized(lhs, rhs))
    return tuple(out)
