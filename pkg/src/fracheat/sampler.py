"""Exact-increment simulation of the isotropic stable process and exit statistics.

Increments are drawn as ``sqrt(2 S) Z`` with ``Z`` standard normal and ``S``
a positive (alpha/2)-stable variable (Kanter's representation), which is the
Gaussian subordination identity behind the transition density.

Reproducibility: paths are grouped in fixed-size blocks and every block owns a
Philox substream keyed by ``(seed, *key, block)``.  Aggregation runs in block
order, so results do not depend on how many worker threads were used.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidParameterError
from .geometry import Domain, HalfSpace
from .kernels import StableParams, p1_at_zero, transition_density

__all__ = [
    "PathConfig",
    "ExitRecord",
    "ExitBatch",
    "McEstimate",
    "Moments",
    "ExitRegion",
    "substream",
    "sample_stable_increment",
    "sample_positive_stable",
    "simulate_exits",
    "simulate_until_exit",
    "estimate_rD",
    "remainder_samples",
    "exit_law_probability",
    "resolve_threads",
    "run_blocks",
]

BLOCK_SIZE = 1024
EXIT_LAW_BLOCK = 8192


@dataclass(frozen=True)
class PathConfig:
    dt: float = 1e-3
    t_max: float = 1.0
    seed: int = 0
    n_paths: int = 10_000
    refinement_levels: int = 0
    threads: int | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidParameterError("dt must be positive")
        if self.t_max < self.dt:
            raise InvalidParameterError("t_max must be at least dt")
        if self.n_paths < 1:
            raise InvalidParameterError("n_paths must be >= 1")
        if self.refinement_levels < 0:
            raise InvalidParameterError("refinement_levels must be >= 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))


@dataclass
class ExitRecord:
    exited: bool
    exit_time: float
    exit_position: np.ndarray


@dataclass
class ExitBatch:
    """Vectorised exit outcomes; ``exit_time`` is ``inf`` for survivors."""

    exited: np.ndarray
    exit_time: np.ndarray
    exit_position: np.ndarray

    def record(self, i: int) -> ExitRecord:
        return ExitRecord(bool(self.exited[i]), float(self.exit_time[i]), self.exit_position[i].copy())


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n: int
    flagged: int = 0
    residual: float = 0.0

    def __str__(self):
        return f"{self.mean:.6g} +/- {self.std_error:.2g} (n={self.n})"


@dataclass
class Moments:
    """Running count, sum and sum of squares; merging is associative."""

    n: int = 0
    s1: np.ndarray | float = 0.0
    s2: np.ndarray | float = 0.0
    flagged: int = 0

    @classmethod
    def of(cls, values, flagged=0):
        values = np.asarray(values, dtype=float)
        return cls(values.shape[0], values.sum(axis=0), (values * values).sum(axis=0), int(flagged))

    def merge(self, other: "Moments") -> "Moments":
        return Moments(self.n + other.n, self.s1 + other.s1, self.s2 + other.s2, self.flagged + other.flagged)

    @property
    def mean(self):
        return self.s1 / self.n

    @property
    def std_error(self):
        if self.n < 2:
            return np.full_like(np.asarray(self.mean, dtype=float), np.inf)
        var = (self.s2 - self.s1 * self.s1 / self.n) / (self.n - 1)
        return np.sqrt(np.maximum(var, 0.0) / self.n)

    def estimate(self, residual=0.0) -> McEstimate:
        return McEstimate(float(self.mean), float(self.std_error), int(self.n), self.flagged, residual)


# ---------------------------------------------------------------------------
# random streams


def substream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the substream labelled by ``key``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("FRACHEAT_THREADS", "1"))
    return max(1, int(threads))


def run_blocks(fn, n_items: int, threads: int | None = None, block: int = BLOCK_SIZE):
    """Apply ``fn(block_index, start, stop)`` over fixed blocks, results in block order."""
    spans = [(b, s, min(s + block, n_items)) for b, s in enumerate(range(0, n_items, block))]
    workers = resolve_threads(threads)
    if workers == 1 or len(spans) == 1:
        return [fn(*span) for span in spans]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda span: fn(*span), spans))


# ---------------------------------------------------------------------------
# increments


def sample_positive_stable(beta: float, size, rng: np.random.Generator) -> np.ndarray:
    """Positive beta-stable draws with Laplace transform exp(-lambda^beta), 0 < beta < 1.

    Kanter: S = (A(U) / E)^((1-beta)/beta), U ~ Unif(0, pi), E ~ Exp(1).
    """
    u = np.pi * rng.random(size)
    e = rng.standard_exponential(size)
    log_a = (
        beta / (1.0 - beta) * np.log(np.sin(beta * u))
        + np.log(np.sin((1.0 - beta) * u))
        - np.log(np.sin(u)) / (1.0 - beta)
    )
    return np.exp((1.0 - beta) / beta * (log_a - np.log(e)))


def sample_stable_increment(params: StableParams, h, rng: np.random.Generator, size=None) -> np.ndarray:
    """Exact draw(s) of X_h for the isotropic alpha-stable process.

    ``h`` may be a scalar or an array broadcastable to ``size``.  Returns shape
    ``(d,)`` when ``size`` is None, else ``(size, d)``.
    """
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0):
        raise InvalidParameterError("time step must be positive")
    n = 1 if size is None else int(size)
    s = sample_positive_stable(params.alpha / 2.0, n, rng) * h ** (2.0 / params.alpha)
    z = rng.standard_normal((n, params.d))
    x = np.sqrt(2.0 * s)[:, None] * z
    return x[0] if size is None else x


# ---------------------------------------------------------------------------
# exits on a time grid


def simulate_exits(params: StableParams, dom: Domain, x0, cfg: PathConfig, rng: np.random.Generator) -> ExitBatch:
    """Walk every start point on the grid k*dt until it leaves ``dom`` or t_max passes.

    A path counts as exited at the first grid time whose state lies outside
    the domain; the state at that time is reported as the exit position.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    n = len(x0)
    if not np.all(dom.contains(x0)):
        raise DomainError("all starting points must lie in the domain")
    pos = x0.copy()
    exit_time = np.full(n, np.inf)
    exit_pos = np.full((n, params.d), np.nan)
    alive = np.arange(n)
    for k in range(1, cfg.n_steps + 1):
        if alive.size == 0:
            break
        pos[alive] += sample_stable_increment(params, cfg.dt, rng, size=alive.size)
        out = ~dom.contains(pos[alive])
        if np.any(out):
            idx = alive[out]
            exit_time[idx] = k * cfg.dt
            exit_pos[idx] = pos[idx]
            alive = alive[~out]
    return ExitBatch(np.isfinite(exit_time), exit_time, exit_pos)


def simulate_until_exit(params: StableParams, dom: Domain, x0, cfg: PathConfig, rng: np.random.Generator) -> ExitRecord:
    x0 = np.asarray(x0, dtype=float)
    if not dom.contains(x0):
        raise DomainError("starting point must lie in the domain")
    return simulate_exits(params, dom, x0[None, :], cfg, rng).record(0)


def remainder_samples(params: StableParams, dom: Domain, t: float, x, cfg: PathConfig, rng: np.random.Generator):
    """Per-path samples of 1{tau < t} p(t - tau, X_tau, x) for start points ``x``.

    Returns ``(values, n_clipped)``.  Kernel times below dt/2 are raised to dt/2.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    batch = simulate_exits(params, dom, x, cfg, rng)
    # grid times within half a step of t count as "at t" (floating point)
    hit = batch.exit_time < t - cfg.dt / 2
    values = np.zeros(len(x))
    lag = t - batch.exit_time[hit]
    clipped = int(np.sum(lag < cfg.dt / 2))
    lag = np.maximum(lag, cfg.dt / 2)
    dist = np.linalg.norm(batch.exit_position[hit] - x[hit], axis=1)
    values[hit] = transition_density(params, lag, dist)
    return values, clipped


def estimate_rD(
    params: StableParams, dom: Domain, t: float, x, cfg: PathConfig, key: tuple = ()
) -> McEstimate:
    """Monte Carlo estimate of the remainder r_D(t, x, x)."""
    x = np.asarray(x, dtype=float)
    if not t > 0:
        raise InvalidParameterError("time must be positive")
    if t > cfg.t_max + 1e-12:
        raise InvalidParameterError("t must not exceed the path horizon t_max")
    if not dom.contains(x):
        raise DomainError("x must lie in the domain")
    run_cfg = PathConfig(cfg.dt, min(cfg.t_max, t), cfg.seed, cfg.n_paths, cfg.refinement_levels, cfg.threads)

    def work(b, start, stop):
        rng = substream(cfg.seed, *key, b)
        vals, clipped = remainder_samples(params, dom, t, np.repeat(x[None, :], stop - start, axis=0), run_cfg, rng)
        return Moments.of(vals, clipped)

    total = Moments()
    for m in run_blocks(work, cfg.n_paths, cfg.threads):
        total = total.merge(m)
    return total.estimate()


# ---------------------------------------------------------------------------
# exit law of the half-space


@dataclass(frozen=True)
class ExitRegion:
    """Axis-aligned box ``lo < z < hi`` (infinite bounds allowed) in the complement of H."""

    lo: tuple
    hi: tuple

    def contains(self, z):
        z = np.atleast_2d(z)
        return np.all((z > np.asarray(self.lo)) & (z < np.asarray(self.hi)), axis=-1)

    def gap(self) -> float:
        """Distance from the region to the hyperplane x_1 = 0."""
        return -float(self.hi[0])

    def mirrored(self, axis: int = 1) -> "ExitRegion":
        lo, hi = list(self.lo), list(self.hi)
        lo[axis], hi[axis] = -hi[axis], -lo[axis]
        return ExitRegion(tuple(lo), tuple(hi))


def _halfspace_exit_positions(params, x, n, step_scale, t_start, residual_target, t_cap, rng):
    # step h = eps * delta^alpha: the chance of an exit-and-return inside one
    # step is of order h delta^(-alpha) = eps whatever alpha is
    pos = np.repeat(np.asarray(x, dtype=float)[None, :], n, axis=0)
    clock = np.zeros(n)
    exit_pos = np.full((n, params.d), np.nan)
    alive = np.arange(n)
    horizon = t_start
    while True:
        while alive.size:
            running = alive[clock[alive] < horizon]
            if running.size == 0:
                break
            h = step_scale * pos[running, 0] ** params.alpha
            pos[running] += sample_stable_increment(params, h, rng, size=running.size)
            clock[running] += h
            out = pos[running, 0] <= 0
            if np.any(out):
                exit_pos[running[out]] = pos[running[out]]
                alive = alive[np.isnan(exit_pos[alive, 0])]
        if alive.size <= residual_target * n or horizon >= t_cap:
            return exit_pos, alive.size, horizon
        horizon *= 2.0


def exit_law_probability(
    params: StableParams,
    x,
    region: ExitRegion,
    cfg: PathConfig,
    step_scale: float = 0.005,
    residual_target: float = 1e-3,
    t_cap: float = 1e12,
    key: tuple = (),
) -> McEstimate:
    """Estimate P^x(X(tau_H) in region) for H = {x_1 > 0}.

    Steps h = step_scale * x_1^alpha adapt to the distance from the boundary; the horizon starts at
    ``cfg.t_max`` and doubles until fewer than ``residual_target`` of the paths
    remain inside.  The surviving fraction is returned as ``residual``.
    """
    x = np.asarray(x, dtype=float)
    if not HalfSpace(params.d).contains(x):
        raise DomainError("start point must lie in H = {x_1 > 0}")
    if not region.gap() > 0:
        raise DomainError("region must keep a positive distance from the boundary of H")

    def work(b, start, stop):
        rng = substream(cfg.seed, *key, b)
        exit_pos, survivors, _ = _halfspace_exit_positions(
            params, x, stop - start, step_scale, cfg.t_max, residual_target, t_cap, rng
        )
        hit = np.zeros(stop - start)
        done = ~np.isnan(exit_pos[:, 0])
        hit[done] = region.contains(exit_pos[done])
        return Moments.of(hit), survivors

    total = Moments()
    survivors = 0
    for m, s in run_blocks(work, cfg.n_paths, cfg.threads, block=EXIT_LAW_BLOCK):
        total = total.merge(m)
        survivors += s
    return total.estimate(residual=survivors / cfg.n_paths)


def remainder_upper_bound(params: StableParams, t: float) -> float:
    """r_D(t, x, x) never exceeds the free diagonal t^(-d/alpha) p_1(0)."""
    return t ** (-params.d / params.alpha) * p1_at_zero(params)
