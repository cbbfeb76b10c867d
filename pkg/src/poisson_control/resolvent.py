"""Resolvent ``(R_s f)(x) = E_x int_0^inf e^{-st} f(X_t) dt`` via the Green kernel.

The improper integrals over (0, x] and [x, inf) are computed after the change of
variable ``y = e^t`` and the infinite side is truncated once consecutive
segments stop contributing.  QUADPACK (``scipy.integrate.quad``) does the
adaptive work on each finite segment.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .diffusion import DiffusionModel
from .errors import QuadratureError, TailDivergenceError
from .functions import PowerSum, ScalarFunction, Smooth

# exp() overflows a little above 709
_T_LIMIT = 700.0


@dataclass(frozen=True)
class QuadratureSettings:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-9
    tail_rel: float = 1e-12
    tail_patience: int = 3
    first_width: float = 1.0
    max_segments: int = 64
    limit: int = 200


DEFAULT_QUAD = QuadratureSettings()


def _segment(h, t0: float, t1: float, qs: QuadratureSettings) -> float:
    def g(t):
        y = math.exp(t)
        return h(y) * y

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(
            g, t0, t1, epsabs=qs.abs_tol * 1e-3, epsrel=qs.rel_tol, limit=qs.limit, full_output=1
        )
    val, err = out[0], out[1]
    if math.isinf(val):
        return val
    if len(out) > 3 or not math.isfinite(val):
        if not math.isfinite(val) or err > max(qs.abs_tol, qs.rel_tol * abs(val)):
            lo, hi = sorted((math.exp(max(min(t0, _T_LIMIT), -_T_LIMIT)), math.exp(min(max(t1, -_T_LIMIT), _T_LIMIT))))
            raise QuadratureError(
                f"quadrature failed on [{lo:.6g}, {hi:.6g}] (estimate {val:.3g}, error {err:.3g})",
                interval=(lo, hi),
            )
    return val


def tail_integral(h, x: float, direction: int, qs: QuadratureSettings = DEFAULT_QUAD) -> float:
    """Integrate ``h`` over ``[x, inf)`` (direction=+1) or ``(0, x]`` (direction=-1).

    Segments in log-space double in width; stops after ``tail_patience``
    consecutive segments each contribute less than ``tail_rel`` of the total.
    """
    t = math.log(x)
    width = qs.first_width
    total = 0.0
    quiet = 0
    for _ in range(qs.max_segments):
        t_next = t + direction * width
        if abs(t_next) > _T_LIMIT:
            t_next = direction * _T_LIMIT
        lo, hi = (t, t_next) if direction > 0 else (t_next, t)
        try:
            seg = _segment(h, lo, hi, qs) if hi > lo else 0.0
        except OverflowError:
            seg = math.inf
        if math.isinf(seg):
            break
        total += seg
        if abs(seg) <= qs.tail_rel * abs(total) or (seg == 0.0 and total == 0.0):
            quiet += 1
            if quiet >= qs.tail_patience:
                return total
        else:
            quiet = 0
        if abs(t_next) >= _T_LIMIT:
            break
        t = t_next
        width *= 2.0
    side = "upper" if direction > 0 else "lower"
    raise TailDivergenceError(
        f"{side} tail integral from x={x:.6g} did not settle (integrand not in L^1?)"
    )


def green_integrals(model: DiffusionModel, f: ScalarFunction, s: float, x: float,
                    qs: QuadratureSettings = DEFAULT_QUAD) -> tuple[float, float]:
    """Return ``(int_0^x psi_s f m', int_x^inf phi_s f m')``."""
    _require_half_line(model)
    left = tail_integral(lambda y: model.weighted_speed("psi", s, y) * f(y), x, -1, qs)
    right = tail_integral(lambda y: model.weighted_speed("phi", s, y) * f(y), x, +1, qs)
    return left, right


def _require_half_line(model: DiffusionModel):
    iv = model.interval
    if iv.lower != 0.0 or iv.upper != math.inf:
        raise NotImplementedError("quadrature route supports the state space (0, inf) only")


def _resolve_quad(model, f, s, x, order, qs):
    model.interval.check(x)
    left, right = green_integrals(model, f, s, x, qs)
    b = model.wronskian(s)
    out = (model.phi(s, x, order) * left + model.psi(s, x, order) * right) / b
    if order == 2:
        # the kernel's kink contributes -2 f / sigma^2
        out -= 2.0 * f(x) / model.sigma(x) ** 2
    return float(out)


def resolve(model: DiffusionModel, f: ScalarFunction, s: float, x, order: int = 0,
            method: str = "auto", qs: QuadratureSettings = DEFAULT_QUAD):
    """``order``-th derivative of ``R_s f`` at ``x`` (scalar or array).

    ``method`` is "auto" (closed form when the backend has one), "closed" or
    "quad".
    """
    if not s > 0:
        raise ValueError("resolvent rate must be positive")
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    model.interval.check(x)
    if method in ("auto", "closed"):
        closed = model.closed_form_resolvent(f, s)
        if closed is not None:
            return closed(x, order)
        if method == "closed":
            raise ValueError("no closed-form resolvent for this function/backend")
    xs = np.asarray(x, dtype=float)
    if xs.ndim == 0:
        return _resolve_quad(model, f, s, float(xs), order, qs)
    return np.array([_resolve_quad(model, f, s, float(v), order, qs) for v in xs.ravel()]).reshape(xs.shape)


def resolvent_function(model: DiffusionModel, f: ScalarFunction, s: float,
                       method: str = "auto", qs: QuadratureSettings = DEFAULT_QUAD) -> ScalarFunction:
    """``R_s f`` as a function object (a PowerSum whenever a closed form exists)."""
    if method != "quad":
        closed = model.closed_form_resolvent(f, s)
        if closed is not None:
            return closed
    return Smooth(*(lambda x, k=k: resolve(model, f, s, x, k, method="quad", qs=qs) for k in range(3)))


def check_resolvent_equation(model: DiffusionModel, f: ScalarFunction, q: float, s: float, x: float,
                             method: str = "auto", qs: QuadratureSettings = DEFAULT_QUAD) -> float:
    """Normalized residual of ``R_q R_s f = (R_s f - R_q f) / (q - s)`` at ``x``."""
    if not q > s > 0:
        raise ValueError("resolvent equation needs q > s > 0")
    rs_f = resolvent_function(model, f, s, method=method, qs=qs)
    lhs = resolve(model, rs_f, q, x, method=method, qs=qs)
    rs = resolve(model, f, s, x, method=method, qs=qs)
    rq = resolve(model, f, q, x, method=method, qs=qs)
    return abs(lhs - (rs - rq) / (q - s)) / (abs(rs) + 1.0)


__all__ = [
    "PowerSum",
    "QuadratureSettings",
    "DEFAULT_QUAD",
    "check_resolvent_equation",
    "green_integrals",
    "resolve",
    "resolvent_function",
    "tail_integral",
]
