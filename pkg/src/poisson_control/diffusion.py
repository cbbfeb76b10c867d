"""Uncontrolled one-dimensional diffusions and their analytic toolbox.

A model exposes drift and volatility, the scale and speed densities and the
minimal ``s``-excessive pair ``psi_s`` (increasing) / ``phi_s`` (decreasing),
all with analytic derivatives.  Backends may additionally declare closed forms
for resolvents and the ``L``/``K`` functionals of the functions they
understand; callers fall back to quadrature when a backend returns ``None``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DomainError, UnsupportedOrderError
from .functions import PowerSum, _falling

BoundaryKind = Literal["natural"]


@dataclass(frozen=True)
class StateInterval:
    lower: float = 0.0
    upper: float = math.inf
    lower_kind: BoundaryKind = "natural"
    upper_kind: BoundaryKind = "natural"

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("state interval needs lower < upper")
        if self.lower_kind != "natural" or self.upper_kind != "natural":
            raise ValueError("only natural boundaries are supported")

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all((x > self.lower) & (x < self.upper)))

    def check(self, x):
        if not self.contains(x):
            raise DomainError(f"state {x!r} is not inside ({self.lower}, {self.upper})")


class DiffusionModel:
    """Base class for diffusion backends.

    Subclasses implement ``mu``, ``sigma``, ``psi``, ``phi`` and
    ``scale_density``.  Objects are immutable after construction.
    """

    interval: StateInterval = StateInterval()
    #: point used for Wronskian evaluation and other "somewhere interior" needs
    reference_point: float = 1.0
    max_order = 2

    def mu(self, x, order: int = 0):
        raise NotImplementedError

    def sigma(self, x):
        raise NotImplementedError

    def psi(self, s: float, x, order: int = 0):
        raise NotImplementedError

    def phi(self, s: float, x, order: int = 0):
        raise NotImplementedError

    def scale_density(self, x):
        raise NotImplementedError

    def speed_density(self, x):
        return 2.0 / (self.sigma(x) ** 2 * self.scale_density(x))

    def densities(self, x) -> tuple:
        self.interval.check(x)
        return self.scale_density(x), self.speed_density(x)

    def wronskian(self, s: float, x: float | None = None) -> float:
        x = self.reference_point if x is None else x
        self.interval.check(x)
        sp = self.scale_density(x)
        return float(
            (self.psi(s, x, 1) * self.phi(s, x) - self.phi(s, x, 1) * self.psi(s, x)) / sp
        )

    def generator(self, f, x):
        """(A f)(x) for a function ``f(x, order)``."""
        return 0.5 * self.sigma(x) ** 2 * f(x, 2) + self.mu(x) * f(x, 1)

    def weighted_speed(self, kind: str, s: float, y):
        """``psi_s(y) m'(y)`` or ``phi_s(y) m'(y)``, the Green-kernel integrand factor.

        Backends override this when the factors under/overflow separately.
        """
        fn = self.psi if kind == "psi" else self.phi
        return fn(s, y) * self.speed_density(y)

    def fundamental_ratio(self, kind: str, s: float, x, order: int, y: float, order_y: int):
        """``kind_s^(order)(x) / kind_s^(order_y)(y)`` with ``kind`` in {"psi", "phi"}.

        Backends override this when the plain quotient under/overflows.
        """
        fn = self.psi if kind == "psi" else self.phi
        return fn(s, x, order) / fn(s, y, order_y)

    # closed-form hooks; ``None`` means "use quadrature"
    def closed_form_resolvent(self, f, s: float):
        return None

    def closed_form_L(self, f, s: float, normalized: bool = False):
        return None

    def closed_form_K(self, f, s: float, normalized: bool = False):
        return None

    def _check(self, x, order: int):
        if order not in (0, 1, 2) or order > self.max_order:
            raise UnsupportedOrderError(f"derivative order {order} not supported")
        self.interval.check(x)


class GbmModel(DiffusionModel):
    """Geometric Brownian motion ``dX = mu X dt + sigma X dW`` on (0, inf).

    ``psi_s(x) = x**beta(s)``, ``phi_s(x) = x**alpha(s)`` where beta/alpha are
    the roots of ``sigma^2 k (k - 1) / 2 + mu k - s = 0``.
    """

    backend = "gbm"

    def __init__(self, mu: float, sigma: float):
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        self._mu = float(mu)
        self._sigma = float(sigma)
        self.interval = StateInterval(0.0, math.inf)
        # 2 mu / sigma^2; S'(x) = x**(-c)
        self.c = 2.0 * self._mu / self._sigma**2

    def __repr__(self):
        return f"GbmModel(mu={self._mu!r}, sigma={self._sigma!r})"

    @property
    def drift(self) -> float:
        return self._mu

    @property
    def volatility(self) -> float:
        return self._sigma

    def exponents(self, s: float) -> tuple[float, float]:
        """Return ``(beta(s), alpha(s))``."""
        if not s > 0:
            raise ValueError("rate s must be positive")
        half = 0.5 - self._mu / self._sigma**2
        root = math.sqrt(half * half + 2.0 * s / self._sigma**2)
        return half + root, half - root

    def mu(self, x, order: int = 0):
        if order == 0:
            return self._mu * np.asarray(x, dtype=float)
        if order == 1:
            return self._mu + 0.0 * np.asarray(x, dtype=float)
        return 0.0 * np.asarray(x, dtype=float)

    def sigma(self, x):
        return self._sigma * np.asarray(x, dtype=float)

    def scale_density(self, x):
        return np.asarray(x, dtype=float) ** (-self.c)

    def speed_density(self, x):
        return (2.0 / self._sigma**2) * np.asarray(x, dtype=float) ** (self.c - 2.0)

    def _power(self, p: float, x, order: int):
        self._check(x, order)
        val = _falling(p, order) * np.asarray(x, dtype=float) ** (p - order)
        return val if np.ndim(val) else float(val)

    def psi(self, s: float, x, order: int = 0):
        return self._power(self.exponents(s)[0], x, order)

    def phi(self, s: float, x, order: int = 0):
        return self._power(self.exponents(s)[1], x, order)

    def wronskian(self, s: float, x: float | None = None) -> float:
        if x is not None:
            return super().wronskian(s, x)
        beta, alpha = self.exponents(s)
        return beta - alpha

    def weighted_speed(self, kind, s, y):
        beta, alpha = self.exponents(s)
        p = (beta if kind == "psi" else alpha) + self.c - 2.0
        out = (2.0 / self._sigma**2) * np.exp(p * np.log(np.asarray(y, dtype=float)))
        return out if out.ndim else float(out)

    def fundamental_ratio(self, kind, s, x, order, y, order_y):
        beta, alpha = self.exponents(s)
        p = beta if kind == "psi" else alpha
        x = np.asarray(x, dtype=float)
        k = _falling(p, order) / _falling(p, order_y)
        log = (p - order) * np.log(x) - (p - order_y) * math.log(y)
        out = k * np.exp(log)
        return out if out.ndim else float(out)

    def resolvent_denominator(self, p: float, s: float) -> float:
        return s - p * self._mu - 0.5 * self._sigma**2 * p * (p - 1.0)

    def closed_form_resolvent(self, f, s):
        if not isinstance(f, PowerSum):
            return None
        beta, alpha = self.exponents(s)
        if any(not alpha < p < beta for p in f.powers):
            return None
        return f.map_terms(lambda c, p: (c / self.resolvent_denominator(p, s), p))

    def closed_form_L(self, f, s, normalized=False):
        # L^s_{x^p} = -alpha p/(beta-p) x^(p-beta);  L/phi_s' = -p/(beta-p) x^(p+c)
        if not isinstance(f, PowerSum):
            return None
        beta, alpha = self.exponents(s)
        if any(not p < beta for p in f.powers):
            return None
        if normalized:
            return f.map_terms(lambda c, p: (-c * p / (beta - p), p + self.c))
        return f.map_terms(lambda c, p: (-c * alpha * p / (beta - p), p - beta))

    def closed_form_K(self, f, s, normalized=False):
        # K^s_{x^p} = -beta p/(p-alpha) x^(p-alpha);  K/psi_s' = -p/(p-alpha) x^(p+c)
        if not isinstance(f, PowerSum):
            return None
        beta, alpha = self.exponents(s)
        if any(not p > alpha for p in f.powers):
            return None
        if normalized:
            return f.map_terms(lambda c, p: (-c * p / (p - alpha), p + self.c))
        return f.map_terms(lambda c, p: (-c * beta * p / (p - alpha), p - alpha))
