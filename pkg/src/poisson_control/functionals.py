"""Auxiliary functions of the control problem, the L/K functionals and H/Q.

For a problem with discount ``r``, signal intensity ``lam``, unit price
``gamma_d`` and unit cost ``gamma_u`` this module provides the net
convenience yields ``theta_n``, the shifted payoffs ``pi_gamma_n``, the
``g_n`` functions, the integral functionals ``L^s_f``/``K^s_f`` and the four
H/Q combinations whose level sets define the optimal thresholds.
"""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
from scipy import optimize

from .diffusion import DiffusionModel, GbmModel
from .errors import BracketingError, ControlError, TailDivergenceError
from .functions import PowerSum, ScalarFunction, Smooth, absolute, linear_combination
from .resolvent import DEFAULT_QUAD, QuadratureSettings, resolve, resolvent_function, tail_integral


class Side(str, enum.Enum):
    d = "d"
    u = "u"


@dataclass(frozen=True)
class Numerics:
    quad: QuadratureSettings = DEFAULT_QUAD
    root_tol: float = 1e-12
    grid_points: int = 512
    grid_lo: float = 1e-4
    grid_hi: float = 1e4

    def grid(self, scale: float = 1.0) -> np.ndarray:
        return np.geomspace(self.grid_lo * scale, self.grid_hi * scale, self.grid_points)


@dataclass(frozen=True)
class ProblemSpec:
    r: float
    lam: float
    gamma_d: float
    gamma_u: float
    payoff: ScalarFunction

    def __post_init__(self):
        if not (self.r > 0 and self.lam > 0):
            raise ValueError("r and lambda must be positive")

    def with_lambda(self, lam: float) -> "ProblemSpec":
        return ProblemSpec(self.r, lam, self.gamma_d, self.gamma_u, self.payoff)


@dataclass(frozen=True)
class CriticalPoints:
    x_star_u: float
    x_star_d: float
    x_zero_u: float
    x_zero_d: float
    x_tilde: float
    x_hat: float

    @property
    def existence_condition(self) -> bool:
        return self.x_tilde < self.x_hat


@dataclass
class ItemResult:
    passed: bool
    detail: str = ""
    offending: list[float] = field(default_factory=list)


@dataclass
class AssumptionReport:
    items: dict[str, ItemResult]
    critical_points: CriticalPoints | None = None

    CORE = ("i", "ii", "iii", "iv", "v", "vi")

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items.values())

    @property
    def core_passed(self) -> bool:
        """Items (i)-(vi) only, without the sufficient existence condition."""
        return all(self.items[k].passed for k in self.CORE)

    def failed(self) -> list[str]:
        return [k for k, v in self.items.items() if not v.passed]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "passed": self.passed,
            "items": {k: asdict(v) for k, v in self.items.items()},
        }
        if self.critical_points is not None:
            out["critical_points"] = asdict(self.critical_points)
        return out


def _functional(model, f, s, x, normalized, method, qs, kind):
    closed_fn = model.closed_form_L if kind == "L" else model.closed_form_K
    if method in ("auto", "closed"):
        closed = closed_fn(f, s, normalized=normalized)
        if closed is not None:
            return closed(x)
        if method == "closed":
            raise ValueError(f"no closed-form {kind} functional for this function/backend")
    xs = np.asarray(x, dtype=float)
    if xs.ndim:
        return np.array([_functional(model, f, s, float(v), normalized, "quad", qs, kind) for v in xs.ravel()]).reshape(xs.shape)
    x = float(xs)
    model.interval.check(x)
    basis = model.phi if kind == "L" else model.psi
    direction = 1 if kind == "L" else -1
    kernel = "phi" if kind == "L" else "psi"
    integral = tail_integral(lambda y: f(y) * model.weighted_speed(kernel, s, y), x, direction, qs)
    edge = basis(s, x, 1) / model.scale_density(x) * f(x)
    value = s * integral + edge if kind == "L" else s * integral - edge
    return value / basis(s, x, 1) if normalized else value


def L_functional(model: DiffusionModel, f: ScalarFunction, s: float, x, normalized: bool = False,
                 method: str = "auto", qs: QuadratureSettings = DEFAULT_QUAD):
    """``L^s_f(x) = s int_x^inf f phi_s m' + phi_s'(x) f(x) / S'(x)``.

    With ``normalized=True`` the value is divided by ``phi_s'(x)``, which keeps
    it finite for large ``s``.
    """
    return _functional(model, f, s, x, normalized, method, qs, "L")


def K_functional(model: DiffusionModel, f: ScalarFunction, s: float, x, normalized: bool = False,
                 method: str = "auto", qs: QuadratureSettings = DEFAULT_QUAD):
    """``K^s_f(x) = s int_0^x f psi_s m' - psi_s'(x) f(x) / S'(x)`` (normalized: / psi_s'(x))."""
    return _functional(model, f, s, x, normalized, method, qs, "K")


def _bracket_root(fn, lo: float, hi: float, name: str, tol: float) -> float:
    flo, fhi = fn(lo), fn(hi)
    if not (np.isfinite(flo) and np.isfinite(fhi)) or flo * fhi > 0:
        raise BracketingError(f"could not bracket {name} in [{lo:.6g}, {hi:.6g}]", name=name)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    return optimize.brentq(fn, lo, hi, xtol=1e-300, rtol=max(tol, 4.5e-16), maxiter=500)


class ControlProblem:
    """A diffusion paired with the control objective (r, lambda, gamma_d, gamma_u, pi)."""

    def __init__(self, model: DiffusionModel, spec: ProblemSpec, numerics: Numerics | None = None):
        self.model = model
        self.spec = spec
        self.numerics = numerics or Numerics()

    def with_lambda(self, lam: float) -> "ControlProblem":
        return ControlProblem(self.model, self.spec.with_lambda(lam), self.numerics)

    # shorthand
    @property
    def r(self) -> float:
        return self.spec.r

    @property
    def lam(self) -> float:
        return self.spec.lam

    @property
    def rl(self) -> float:
        return self.spec.r + self.spec.lam

    def gamma(self, n: Side | str) -> float:
        return self.spec.gamma_d if Side(n) is Side.d else self.spec.gamma_u

    @property
    def payoff(self) -> ScalarFunction:
        return self.spec.payoff

    # --- auxiliary functions -------------------------------------------------

    @cached_property
    def identity(self) -> ScalarFunction:
        return PowerSum.monomial(1.0)

    def _drift_function(self) -> ScalarFunction:
        if isinstance(self.model, GbmModel):
            return PowerSum.monomial(1.0, self.model.drift)
        m = self.model
        return Smooth(lambda x: m.mu(x), lambda x: m.mu(x, 1), lambda x: m.mu(x, 2))

    def theta_function(self, n: Side | str) -> ScalarFunction:
        g = self.gamma(n)
        return linear_combination((1.0, self.payoff), (g, self._drift_function()), (-g * self.r, self.identity))

    def theta(self, n: Side | str, x, order: int = 0):
        """Net convenience yield ``pi(x) + gamma_n (mu(x) - r x)`` (or a derivative)."""
        self.model.interval.check(x)
        return self.theta_function(n)(x, order)

    @cached_property
    def r_pi(self) -> ScalarFunction:
        """``R_r pi`` as a function object."""
        return resolvent_function(self.model, self.payoff, self.r, qs=self.numerics.quad)

    def g_function(self, n: Side | str) -> ScalarFunction:
        return linear_combination((self.gamma(n), self.identity), (-1.0, self.r_pi))

    def g(self, n: Side | str, x, order: int = 0):
        """``gamma_n x - (R_r pi)(x)``."""
        self.model.interval.check(x)
        return self.g_function(n)(x, order)

    def pi_gamma_function(self, n: Side | str) -> ScalarFunction:
        return linear_combination((self.lam * self.gamma(n), self.identity), (1.0, self.payoff))

    def pi_gamma(self, n: Side | str, x, order: int = 0):
        """``lam gamma_n x + pi(x)``."""
        self.model.interval.check(x)
        return self.pi_gamma_function(n)(x, order)

    def basis(self, flavor: str, s: float | None = None) -> ScalarFunction:
        """psi_s or phi_s as a function object (PowerSum for GBM)."""
        s = self.r if s is None else s
        if isinstance(self.model, GbmModel):
            beta, alpha = self.model.exponents(s)
            return PowerSum.monomial(beta if flavor == "psi" else alpha)
        fn = self.model.psi if flavor == "psi" else self.model.phi
        return Smooth(*(lambda x, k=k: fn(s, x, k) for k in range(3)))

    # --- functionals ---------------------------------------------------------

    def L(self, f, s, x, normalized=False, method="auto"):
        return L_functional(self.model, f, s, x, normalized, method, self.numerics.quad)

    def K(self, f, s, x, normalized=False, method="auto"):
        return K_functional(self.model, f, s, x, normalized, method, self.numerics.quad)

    def _default_form(self) -> str:
        gd = self.g_function(Side.d)
        closed = self.model.closed_form_L(gd, self.rl) is not None
        return "quotient" if closed else "lk"

    def Q(self, flavor: str, x, form: str = "auto", method: str = "auto"):
        """``Q(g_d, psi_r; x)`` (flavor "psi") or ``Q(g_d, phi_r; x)`` (flavor "phi").

        ``form="quotient"`` evaluates the defining quotient over
        ``phi'_{r+lam}``; ``form="lk"`` uses the equivalent combination of
        ``L``/``K`` functionals of ``theta_d`` (no nested resolvents).
        """
        form = self._default_form() if form == "auto" else form
        m, rl = self.model, self.rl
        x = np.asarray(x, dtype=float) if np.ndim(x) else float(x)
        m.interval.check(x)
        h = self.basis(flavor)
        if form == "quotient":
            gd = self.g_function(Side.d)
            out = gd(x, 1) * self.L(h, rl, x, True, method) - h(x, 1) * self.L(gd, rl, x, True, method)
        else:
            th = self.theta_function(Side.d)
            first = -h(x, 1) * self.L(th, rl, x, True, method)
            second = -self.K(th, self.r, x, method=method) if flavor == "psi" else self.L(th, self.r, x, method=method)
            out = (first + second) / self.lam
        return out

    def H(self, flavor: str, x, form: str = "auto", method: str = "auto"):
        """``H(psi_r, g_u; x)`` (flavor "psi") or ``H(phi_r, g_u; x)`` (flavor "phi")."""
        form = self._default_form() if form == "auto" else form
        m, rl = self.model, self.rl
        x = np.asarray(x, dtype=float) if np.ndim(x) else float(x)
        m.interval.check(x)
        h = self.basis(flavor)
        if form == "quotient":
            gu = self.g_function(Side.u)
            out = h(x, 1) * self.K(gu, rl, x, True, method) - gu(x, 1) * self.K(h, rl, x, True, method)
        else:
            th = self.theta_function(Side.u)
            first = h(x, 1) * self.K(th, rl, x, True, method)
            second = -self.K(th, self.r, x, method=method) if flavor == "psi" else self.L(th, self.r, x, method=method)
            out = (first + second) / self.lam
        return out

    # --- critical points and assumptions -------------------------------------

    def _x_star(self, n: Side) -> float:
        th = self.theta_function(n)
        grid = self.numerics.grid()
        d1 = np.asarray(th(grid, 1))
        idx = np.nonzero((d1[:-1] > 0) & (d1[1:] <= 0))[0]
        if len(idx) == 0:
            raise BracketingError(f"theta_{n.value}' has no +/- sign change on the grid", name=f"x_star_{n.value}")
        i = idx[0]
        return _bracket_root(lambda x: th(x, 1), grid[i], grid[i + 1], f"x_star_{n.value}", self.numerics.root_tol)

    def _expand_up(self, fn, start: float, name: str, want_positive: bool) -> float:
        hi = 2.0 * start
        for _ in range(200):
            v = fn(hi)
            if np.isfinite(v) and (v > 0) == want_positive and v != 0:
                return hi
            hi *= 2.0
        raise BracketingError(f"could not bracket {name} above {start:.6g}", name=name)

    def _expand_down(self, fn, start: float, name: str, want_positive: bool) -> float:
        lo = 0.5 * start
        for _ in range(200):
            v = fn(lo)
            if np.isfinite(v) and (v > 0) == want_positive and v != 0:
                return lo
            lo *= 0.5
        raise BracketingError(f"could not bracket {name} below {start:.6g}", name=name)

    def critical_points(self) -> CriticalPoints:
        tol = self.numerics.root_tol
        xs_u, xs_d = self._x_star(Side.u), self._x_star(Side.d)
        zeros = {}
        for n, xs in ((Side.u, xs_u), (Side.d, xs_d)):
            th = self.theta_function(n)
            if not th(xs) > 0:
                raise BracketingError(f"theta_{n.value} is not positive at its maximum", name=f"x_zero_{n.value}")
            hi = self._expand_up(th, xs, f"x_zero_{n.value}", want_positive=False)
            zeros[n] = _bracket_root(th, xs, hi, f"x_zero_{n.value}", tol)
        th_d, th_u = self.theta_function(Side.d), self.theta_function(Side.u)
        # sign(L) = -sign(L / phi'), sign(K) = sign(K / psi')
        l_sign = lambda x: -self.L(th_d, self.rl, x, normalized=True)
        k_sign = lambda x: self.K(th_u, self.rl, x, normalized=True)
        if not l_sign(xs_d) < 0:
            raise BracketingError("L^{r+lam}_{theta_d} is not negative at x_star_d", name="x_hat")
        lo = self._expand_down(l_sign, xs_d, "x_hat", want_positive=True)
        x_hat = _bracket_root(l_sign, lo, xs_d, "x_hat", tol)
        if not k_sign(xs_u) < 0:
            raise BracketingError("K^{r+lam}_{theta_u} is not negative at x_star_u", name="x_tilde")
        hi = self._expand_up(k_sign, xs_u, "x_tilde", want_positive=True)
        x_tilde = _bracket_root(k_sign, xs_u, hi, "x_tilde", tol)
        cp = CriticalPoints(xs_u, xs_d, zeros[Side.u], zeros[Side.d], x_tilde, x_hat)
        if not (cp.x_star_u < cp.x_star_d and cp.x_hat < cp.x_star_d and cp.x_tilde > cp.x_star_u):
            raise BracketingError(f"critical point ordering violated: {cp}", name="ordering")
        return cp

    def _integrable(self, f: ScalarFunction) -> tuple[bool, str]:
        if self.model.closed_form_resolvent(f, self.r) is not None:
            return True, "closed-form resolvent exists"
        try:
            resolve(self.model, absolute(f), self.r, self.model.reference_point, method="quad", qs=self.numerics.quad)
        except TailDivergenceError as exc:
            return False, str(exc)
        except ControlError as exc:
            return False, f"quadrature failed: {exc}"
        return True, "tail diagnostic settled"

    def check_assumptions(self) -> AssumptionReport:
        """Evaluate the standing assumptions plus the existence condition x_tilde < x_hat.

        Items (iii)-(vi) are checked on the numerics grid only.
        """
        spec, grid = self.spec, self.numerics.grid()
        items: dict[str, ItemResult] = {}
        items["i"] = ItemResult(spec.gamma_d < spec.gamma_u, f"gamma_d={spec.gamma_d}, gamma_u={spec.gamma_u}")

        details, ok = [], True
        for name, f in (("theta_d", self.theta_function(Side.d)), ("theta_u", self.theta_function(Side.u)), ("id", self.identity)):
            good, why = self._integrable(f)
            ok &= good
            details.append(f"{name}: {why}")
        items["ii"] = ItemResult(ok, "; ".join(details))

        pi = np.asarray(self.payoff(grid), dtype=float)
        bad = grid[(pi < 0) | ~np.isfinite(pi)]
        dec = grid[1:][np.diff(pi) < -1e-12 * (1 + np.abs(pi[1:]))]
        items["iii"] = ItemResult(
            len(bad) == 0 and len(dec) == 0,
            "pi >= 0 and non-decreasing on the grid",
            [float(v) for v in np.concatenate([bad, dec])[:10]],
        )

        mu1 = np.asarray(self.model.mu(grid, 1), dtype=float) + 0 * grid
        bad = grid[mu1 >= spec.r]
        items["iv"] = ItemResult(len(bad) == 0, "mu'(x) < r on the grid", [float(v) for v in bad[:10]])

        for key, check in (("v", self._check_unimodal), ("vi", self._check_limits)):
            results = [check(n, grid) for n in (Side.d, Side.u)]
            items[key] = ItemResult(
                all(r.passed for r in results),
                "; ".join(r.detail for r in results),
                [v for r in results for v in r.offending],
            )

        cp = None
        if all(items[k].passed for k in ("iii", "iv", "v", "vi")):
            try:
                cp = self.critical_points()
                items["existence"] = ItemResult(
                    cp.existence_condition, f"x_tilde={cp.x_tilde:.10g}, x_hat={cp.x_hat:.10g}"
                )
            except ControlError as exc:
                items["existence"] = ItemResult(False, f"critical points unavailable: {exc}")
        else:
            items["existence"] = ItemResult(False, "not evaluated: items (iii)-(vi) must pass first")
        return AssumptionReport(items, cp)

    def _check_unimodal(self, n: Side, grid) -> ItemResult:
        d1 = np.asarray(self.theta_function(n)(grid, 1), dtype=float)
        sign = np.sign(d1)
        nz = sign[sign != 0]
        changes = np.nonzero(np.diff(nz))[0]
        ok = len(nz) > 0 and nz[0] > 0 and nz[-1] < 0 and len(changes) == 1
        where = [float(grid[sign != 0][i + 1]) for i in changes]
        return ItemResult(ok, f"theta_{n.value}' sign changes: {len(changes)}", [] if ok else where)

    def _check_limits(self, n: Side, grid) -> ItemResult:
        th = self.theta_function(n)
        lo, hi, mid = float(th(grid[0])), float(th(grid[-1])), float(th(grid[-1] / 10.0))
        ok = lo > 0 and hi < 0 and hi < mid
        return ItemResult(ok, f"theta_{n.value}({grid[0]:.3g})={lo:.4g}, theta_{n.value}({grid[-1]:.3g})={hi:.4g}",
                          [] if ok else [float(grid[0]), float(grid[-1])])
