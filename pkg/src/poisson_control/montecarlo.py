"""Monte Carlo estimate of the objective under a two-threshold policy.

Paths of the GBM are stepped with their exact lognormal transition on a
substep grid; each Poisson arrival is inserted as an extra step at its exact
time, and at an arrival the state is moved to the nearest edge of ``[a, b]``
when it lies outside.  Discounting stops at a finite horizon ``T`` with
``exp(-r T) <= tail_tol``.

Reproducibility: paths are grouped into fixed-size blocks and block ``i``
draws from ``SeedSequence(seed, spawn_key=(i,))``.  Blocks are the unit of
parallel work and results are concatenated in block order, so the output does
not depend on the number of workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .diffusion import GbmModel
from .errors import ConfigError, SimulationError
from .functionals import ControlProblem
from .functions import ScalarFunction

BLOCK_SIZE = 1024


@dataclass(frozen=True)
class PolicySpec:
    a: float
    b: float

    def __post_init__(self):
        if not 0 < self.a < self.b:
            raise ConfigError(f"policy needs 0 < a < b, got a={self.a}, b={self.b}")

    def scaled(self, fa: float, fb: float) -> "PolicySpec":
        return PolicySpec(self.a * fa, self.b * fb)


@dataclass(frozen=True)
class SimConfig:
    x0: float
    n_paths: int = 4096
    seed: int = 0
    dt: float = 1e-2
    tail_tol: float = 1e-4
    # None: ln(1/tail_tol)/r
    horizon: float | None = None
    workers: int = 1

    def __post_init__(self):
        if not self.x0 > 0:
            raise ConfigError("x0 must be positive")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be at least 1")
        if not 0 < self.tail_tol < 1:
            raise ConfigError("tail_tol must lie in (0, 1)")
        if self.horizon is not None and not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def resolved_horizon(self, r: float) -> float:
        if self.horizon is None:
            return math.log(1.0 / self.tail_tol) / r
        if math.exp(-r * self.horizon) > self.tail_tol * (1 + 1e-12):
            raise ConfigError(
                f"horizon {self.horizon} leaves discount tail exp(-rT)={math.exp(-r * self.horizon):.3g} "
                f"above tail_tol={self.tail_tol}"
            )
        return self.horizon


@dataclass(frozen=True)
class SimResult:
    estimate: float
    stderr: float
    components: dict[str, float]
    n_paths: int
    horizon: float
    truncation_bound: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class _Dynamics:
    mu: float
    sigma: float
    r: float
    lam: float
    gamma_d: float
    gamma_u: float
    payoff: ScalarFunction = field(repr=False)


def _dynamics(problem: ControlProblem) -> _Dynamics:
    m = problem.model
    if not isinstance(m, GbmModel):
        raise NotImplementedError("exact path simulation is available for the GBM backend only")
    s = problem.spec
    return _Dynamics(m.drift, m.volatility, s.r, s.lam, s.gamma_d, s.gamma_u, s.payoff)


def _run_block(dyn: _Dynamics, policy: PolicySpec, x0: float, horizon: float, dt: float,
               n: int, seed: int, block: int, coarse: bool = False) -> np.ndarray:
    """Simulate ``n`` paths; returns an ``(3, n)`` array of payoff, income, cost.

    With ``coarse`` a fourth row holds the payoff trapezoid on the grid of step
    ``2 dt`` (every other node plus arrivals) along the same paths, which is
    an exact coarse-grid simulation because the state transition is exact.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
    drift = dyn.mu - 0.5 * dyn.sigma**2
    x = np.full(n, float(x0))
    t = np.zeros(n)
    step = np.ones(n)
    next_arrival = rng.exponential(1.0 / dyn.lam, n)
    f_prev = dyn.payoff(x)
    running = np.zeros(n)
    income = np.zeros(n)
    cost = np.zeros(n)
    active = np.ones(n, dtype=bool)
    coarse_running = np.zeros(n)
    t_c, f_c = t.copy(), f_prev.copy()

    while active.any():
        grid_t = np.minimum(step * dt, horizon)
        t_new = np.where(active, np.minimum(grid_t, next_arrival), t)
        h = t_new - t
        z = rng.standard_normal(n)
        x_new = x * np.exp(drift * h + dyn.sigma * np.sqrt(h) * z)
        disc = np.exp(-dyn.r * t_new)
        f_new = disc * dyn.payoff(x_new)
        running += 0.5 * h * (f_prev + f_new)

        hit = active & (next_arrival <= grid_t)
        f_pre = f_new.copy() if coarse else f_new
        if hit.any():
            above = hit & (x_new > policy.b)
            below = hit & (x_new < policy.a)
            income[above] += disc[above] * dyn.gamma_d * (x_new[above] - policy.b)
            cost[below] += disc[below] * dyn.gamma_u * (policy.a - x_new[below])
            x_new[above] = policy.b
            x_new[below] = policy.a
            moved = above | below
            f_new[moved] = disc[moved] * dyn.payoff(x_new[moved])
            next_arrival[hit] += rng.exponential(1.0 / dyn.lam, int(hit.sum()))

        if not np.all(np.isfinite(x_new[active])) or not np.all(np.isfinite(running[active])):
            bad = np.flatnonzero(active & ~(np.isfinite(x_new) & np.isfinite(running)))
            raise SimulationError(
                f"nonfinite path state in block {block}: paths {bad[:5].tolist()} at t={t_new[bad[:5]].tolist()}"
            )
        on_grid = active & (grid_t <= next_arrival)
        if coarse:
            node = hit | (on_grid & ((step % 2 == 0) | (grid_t >= horizon)))
            coarse_running[node] += 0.5 * (t_new - t_c)[node] * (f_c + f_pre)[node]
            t_c[node], f_c[node] = t_new[node], f_new[node]
        step[on_grid] += 1.0
        x, t, f_prev = x_new, t_new, f_new
        active = active & (t < horizon)
    rows = [running, income, cost] + ([coarse_running] if coarse else [])
    return np.vstack(rows)


def _run_block_args(args) -> np.ndarray:
    return _run_block(*args)


def _collect(problem: ControlProblem, policy: PolicySpec, cfg: SimConfig, coarse: bool = False):
    dyn = _dynamics(problem)
    horizon = cfg.resolved_horizon(dyn.r)
    sizes = [BLOCK_SIZE] * (cfg.n_paths // BLOCK_SIZE)
    if cfg.n_paths % BLOCK_SIZE:
        sizes.append(cfg.n_paths % BLOCK_SIZE)
    jobs = [(dyn, policy, cfg.x0, horizon, cfg.dt, n, cfg.seed, i, coarse) for i, n in enumerate(sizes)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(jobs))) as pool:
            parts = list(pool.map(_run_block_args, jobs))
    else:
        parts = [_run_block_args(j) for j in jobs]
    return dyn, horizon, np.concatenate(parts, axis=1)


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(np.mean(v)), se


def simulate(problem: ControlProblem, policy: PolicySpec, cfg: SimConfig,
             value_bound: float | None = None) -> SimResult:
    """Estimate ``J(x0)`` for the threshold policy.

    ``value_bound`` is a bound on ``sup |V|`` used for the reported truncation
    error ``exp(-rT) * value_bound``; without it ``|estimate|`` stands in
    (a heuristic, not a bound).
    """
    dyn, horizon, comps = _collect(problem, policy, cfg)
    estimate, stderr = _mean_se(comps[0] + comps[1] - comps[2])
    bound = abs(estimate) if value_bound is None else abs(value_bound)
    return SimResult(
        estimate=estimate,
        stderr=stderr,
        components={
            "running_payoff": float(np.mean(comps[0])),
            "down_income": float(np.mean(comps[1])),
            "up_cost": float(np.mean(comps[2])),
        },
        n_paths=int(comps.shape[1]),
        horizon=horizon,
        truncation_bound=math.exp(-dyn.r * horizon) * bound,
    )


@dataclass(frozen=True)
class Refinement:
    estimate_fine: float
    estimate_coarse: float
    stderr: float

    @property
    def shift(self) -> float:
        return abs(self.estimate_fine - self.estimate_coarse)


def dt_refinement(problem: ControlProblem, policy: PolicySpec, cfg: SimConfig) -> Refinement:
    """Estimates at ``cfg.dt`` and ``cfg.dt / 2`` on shared paths.

    Paths run on the fine grid; the coarse estimate integrates the payoff on
    every other node, which only changes the trapezoid term.
    """
    fine_cfg = SimConfig(**{**asdict(cfg), "dt": cfg.dt / 2.0})
    _, _, comps = _collect(problem, policy, fine_cfg, coarse=True)
    fine, se = _mean_se(comps[0] + comps[1] - comps[2])
    coarse, _ = _mean_se(comps[3] + comps[1] - comps[2])
    return Refinement(fine, coarse, se)


@dataclass
class PointCheck:
    x0: float
    value: float
    optimal: SimResult
    perturbed: dict[str, SimResult]
    within_band: bool
    suboptimal: dict[str, bool]
    dominance: dict[str, bool]

    @property
    def passed(self) -> bool:
        return self.within_band and all(self.suboptimal.values())


@dataclass
class ValidationReport:
    points: list[PointCheck]

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.points)


PERTURBATIONS = {"inner": (1.1, 0.9), "outer": (0.9, 1.1)}


def validate(vf, points, cfg: SimConfig, n_sigma: float = 3.0) -> ValidationReport:
    """Compare simulated objectives with ``V`` at each starting point.

    The optimal policy must land within ``n_sigma`` standard errors of ``V``;
    the two +-10% perturbed policies must not beat ``V`` by more than that.
    All three policies share the seed, so their estimates are coupled.
    """
    from .value import evaluate

    problem = vf.problem
    grid = np.geomspace(vf.a_star / 10.0, 10.0 * vf.b_star, 2048)
    v_sup = float(np.max(np.abs(evaluate(vf, grid))))
    best = PolicySpec(vf.a_star, vf.b_star)
    out = []
    for x0 in points:
        run_cfg = SimConfig(**{**asdict(cfg), "x0": float(x0)})
        value = float(evaluate(vf, float(x0)))
        opt = simulate(problem, best, run_cfg, value_bound=v_sup)
        pert, sub, dom = {}, {}, {}
        for name, (fa, fb) in PERTURBATIONS.items():
            res = simulate(problem, best.scaled(fa, fb), run_cfg, value_bound=v_sup)
            pert[name] = res
            sub[name] = res.estimate <= value + n_sigma * res.stderr
            dom[name] = opt.estimate >= res.estimate - 2.0 * math.hypot(opt.stderr, res.stderr)
        out.append(PointCheck(
            x0=float(x0), value=value, optimal=opt, perturbed=pert,
            within_band=abs(opt.estimate - value) <= n_sigma * opt.stderr,
            suboptimal=sub, dominance=dom,
        ))
    return ValidationReport(out)
