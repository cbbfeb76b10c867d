"""Scalar functions with analytic derivatives.

Everything the solver integrates or differentiates is a callable ``f(x, order=0)``
returning the ``order``-th derivative.  :class:`PowerSum` is the closed-form
workhorse (GBM backends know how to resolve it exactly); :class:`Smooth` wraps
arbitrary user callables.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np


class ScalarFunction(Protocol):
    def __call__(self, x, order: int = 0): ...


def _falling(p: float, order: int) -> float:
    out = 1.0
    for k in range(order):
        out *= p - k
    return out


@dataclass(frozen=True)
class PowerSum:
    """Finite sum ``sum_k c_k * x**p_k`` on the positive half-line."""

    terms: tuple[tuple[float, float], ...] = ()

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, float]]) -> "PowerSum":
        merged: dict[float, float] = {}
        for coef, power in pairs:
            merged[float(power)] = merged.get(float(power), 0.0) + float(coef)
        return cls(tuple((c, p) for p, c in sorted(merged.items()) if c != 0.0))

    @classmethod
    def monomial(cls, power: float, coef: float = 1.0) -> "PowerSum":
        return cls.from_pairs([(coef, power)])

    @classmethod
    def constant(cls, c: float) -> "PowerSum":
        return cls.from_pairs([(c, 0.0)])

    @property
    def powers(self) -> tuple[float, ...]:
        return tuple(p for _, p in self.terms)

    def __call__(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for coef, p in self.terms:
            k = _falling(p, order)
            if k != 0.0:
                out = out + coef * k * x ** (p - order)
        return out if out.ndim else float(out)

    def __add__(self, other: "PowerSum") -> "PowerSum":
        if not isinstance(other, PowerSum):
            return NotImplemented
        return PowerSum.from_pairs(self.terms + other.terms)

    def __neg__(self) -> "PowerSum":
        return self.scale(-1.0)

    def __sub__(self, other: "PowerSum") -> "PowerSum":
        if not isinstance(other, PowerSum):
            return NotImplemented
        return self + (-other)

    def scale(self, c: float) -> "PowerSum":
        return PowerSum.from_pairs([(c * coef, p) for coef, p in self.terms])

    __rmul__ = scale

    def __mul__(self, c: float) -> "PowerSum":
        return self.scale(c)

    def map_terms(self, fn: Callable[[float, float], tuple[float, float]]) -> "PowerSum":
        """Apply ``fn(coef, power) -> (coef', power')`` term by term."""
        return PowerSum.from_pairs([fn(c, p) for c, p in self.terms])


class Smooth:
    """Generic function with up to two supplied derivatives."""

    def __init__(self, f: Callable, df: Callable | None = None, d2f: Callable | None = None):
        self._derivs = (f, df, d2f)

    def __call__(self, x, order: int = 0):
        fn = self._derivs[order] if 0 <= order < 3 else None
        if fn is None:
            raise ValueError(f"derivative of order {order} not supplied")
        return fn(x)


def linear_combination(*pairs: tuple[float, ScalarFunction]) -> ScalarFunction:
    """Return ``sum c_i f_i``, staying a PowerSum when every f_i is one."""
    if all(isinstance(f, PowerSum) for _, f in pairs):
        out = PowerSum()
        for c, f in pairs:
            out = out + f.scale(c)
        return out

    def at(order):
        return lambda x: sum(c * f(x, order) for c, f in pairs)

    return Smooth(at(0), at(1), at(2))


def absolute(f: ScalarFunction) -> ScalarFunction:
    """|f| for integrability diagnostics (order 0 only)."""
    return Smooth(lambda x: np.abs(f(x)))
