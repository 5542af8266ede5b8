"""Heat trace Z_D(t) of the killed stable process and its two-term expansion.

Z_D(t) = C1 t^(-d/alpha) |D| - int_D r_D(t, x, x) dx, and the remainder
integral is estimated by Monte Carlo stratified on the distance to the
boundary in units of s0 = t^(1/alpha); r_D decays fast away from the boundary,
so the shells near it get most of the paths.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

from .errors import DomainError, InvalidParameterError
from .geometry import Domain
from .kernels import StableParams, p1_at_zero
from .sampler import McEstimate, Moments, PathConfig, remainder_samples, run_blocks, substream

__all__ = [
    "STRATA",
    "StratumResult",
    "TraceEstimate",
    "TraceCurve",
    "SecondTerm",
    "UnstableFitWarning",
    "trace_remainder",
    "estimate_trace",
    "trace_curve",
    "default_t_grid",
    "extract_second_term",
    "extrapolate_first_term",
    "weyl_prefactor",
]

# stratum edges for the boundary distance, in units of t^(1/alpha)
STRATA = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, math.inf)
TRACE_BLOCK = 256
MIN_STRATUM_PATHS = 256


class UnstableFitWarning(UserWarning):
    """Slope changes across fit windows by more than its statistical error."""

    def __init__(self, message, stat_error, spread):
        super().__init__(message)
        self.stat_error = stat_error
        self.spread = spread


@dataclass
class StratumResult:
    lo: float
    hi: float
    volume: float
    n_paths: int
    mean: McEstimate


@dataclass
class TraceEstimate:
    t: float
    trace: McEstimate
    remainder: McEstimate
    strata: list
    clipped: int
    dt: float


def _allocation(params, volumes, n_total):
    # envelope t / delta^(d+alpha) capped at t^(-d/alpha), read at the outer
    # edge of each finite stratum (the inner edge for the last one)
    reach = [hi if math.isfinite(hi) else lo for lo, hi in zip(STRATA[:-1], STRATA[1:])]
    weights = np.array([v * min(1.0, e ** -(params.d + params.alpha)) for v, e in zip(volumes, reach)])
    live = weights > 0
    n = np.zeros(len(weights), dtype=int)
    n[live] = np.maximum(MIN_STRATUM_PATHS, np.floor(n_total * weights[live] / weights[live].sum())).astype(int)
    return n


def trace_remainder(params: StableParams, dom: Domain, t: float, cfg: PathConfig, key: tuple = ()) -> TraceEstimate:
    """Stratified estimate of int_D r_D(t, x, x) dx and of Z_D(t).

    ``cfg.n_paths`` is the total budget; ``cfg.dt`` is rounded so that t is a
    whole number of steps.
    """
    if not dom.bounded:
        raise DomainError("the heat trace needs a bounded domain")
    if not t > 0:
        raise InvalidParameterError("t must be positive")
    n_steps = max(1, int(round(t / cfg.dt)))
    run_cfg = dataclasses.replace(cfg, dt=t / n_steps, t_max=t)
    s0 = t ** (1.0 / params.alpha)
    edges = [e * s0 for e in STRATA]
    vol = dom.volume
    cum = [0.0] + [vol if math.isinf(e) else min(dom.shell_volume(e), vol) for e in edges[1:]]
    volumes = [max(b - a, 0.0) for a, b in zip(cum[:-1], cum[1:])]
    alloc = _allocation(params, volumes, cfg.n_paths)

    strata = []
    clipped = 0
    total = 0.0
    var = 0.0
    for k, (lo, hi, v, n_k) in enumerate(zip(edges[:-1], edges[1:], volumes, alloc)):
        if n_k == 0:
            continue

        def work(b, start, stop, lo=lo, hi=hi, k=k):
            rng = substream(cfg.seed, *key, k, b)
            x = dom.sample_shell(lo, hi, stop - start, rng)
            vals, n_clip = remainder_samples(params, dom, t, x, run_cfg, rng)
            return Moments.of(vals), n_clip

        mom = Moments()
        for m, c in run_blocks(work, int(n_k), cfg.threads, block=TRACE_BLOCK):
            mom = mom.merge(m)
            clipped += c
        est = mom.estimate()
        strata.append(StratumResult(lo, hi, v, int(n_k), est))
        total += v * est.mean
        var += (v * est.std_error) ** 2
    n_used = int(alloc.sum())
    rem = McEstimate(total, math.sqrt(var), n_used)
    lead = p1_at_zero(params) * t ** (-params.d / params.alpha) * vol
    trace = McEstimate(lead - total, math.sqrt(var), n_used)
    return TraceEstimate(t, trace, rem, strata, clipped, run_cfg.dt)


def estimate_trace(params: StableParams, dom: Domain, t: float, cfg: PathConfig, key: tuple = ()) -> McEstimate:
    """Monte Carlo estimate of Z_D(t) = int_D p_D(t, x, x) dx."""
    return trace_remainder(params, dom, t, cfg, key).trace


def weyl_prefactor(params: StableParams, volume: float) -> float:
    """C1 |D| / Gamma(d/alpha + 1), the constant of the eigenvalue counting law."""
    if not volume > 0:
        raise InvalidParameterError("volume must be positive")
    return p1_at_zero(params) * volume / gamma(params.d / params.alpha + 1.0)


# ---------------------------------------------------------------------------
# curves and fits


@dataclass
class TraceCurve:
    params: StableParams
    volume: float
    boundary_measure: float
    t: np.ndarray
    z_mean: np.ndarray
    z_stderr: np.ndarray
    n_paths: np.ndarray
    details: list = field(default_factory=list)

    @property
    def c1_volume(self) -> float:
        return p1_at_zero(self.params) * self.volume

    @property
    def scale(self) -> np.ndarray:
        return self.t ** (1.0 / self.params.alpha)

    @property
    def rescaled(self) -> np.ndarray:
        return self.t ** (self.params.d / self.params.alpha) * self.z_mean

    @property
    def rescaled_stderr(self) -> np.ndarray:
        return self.t ** (self.params.d / self.params.alpha) * self.z_stderr

    @property
    def gap(self) -> np.ndarray:
        """C1|D| - t^(d/alpha) Z(t)."""
        return self.c1_volume - self.rescaled

    @property
    def c2hat(self) -> np.ndarray:
        return self.gap / self.scale

    @property
    def c2hat_err(self) -> np.ndarray:
        return self.rescaled_stderr / self.scale

    def rows(self):
        return [
            {
                "t": float(t),
                "Z_mean": float(z),
                "Z_stderr": float(e),
                "rescaled": float(r),
                "c2hat": float(c),
                "c2hat_err": float(ce),
            }
            for t, z, e, r, c, ce in zip(
                self.t, self.z_mean, self.z_stderr, self.rescaled, self.c2hat, self.c2hat_err
            )
        ]


def default_t_grid(params: StableParams, dom: Domain, n: int = 6) -> np.ndarray:
    """Decreasing t with boundary shells of width t^(1/alpha) covering 10% down to 0.5% of |D|."""
    ratio = dom.volume / dom.boundary_measure
    widths = np.geomspace(0.1 * ratio, 0.005 * ratio, n)
    return widths**params.alpha


def trace_curve(
    params: StableParams,
    dom: Domain,
    ts,
    cfg: PathConfig,
    n_steps: int = 200,
    key: tuple = (),
) -> TraceCurve:
    """Z_D on a grid of times, each simulated with step t / n_steps and ``cfg.n_paths`` paths.

    Using the same number of steps at every t keeps the time-discretisation
    bias scale-free, matching a half-space profile computed with dt = 1/n_steps.
    """
    ts = np.sort(np.asarray(ts, dtype=float))[::-1]
    if ts.size == 0 or np.any(ts <= 0):
        raise InvalidParameterError("times must be positive")
    if n_steps < 2:
        raise InvalidParameterError("need at least two steps per time")
    details = []
    for i, t in enumerate(ts):
        run = dataclasses.replace(cfg, dt=t / n_steps, t_max=t)
        details.append(trace_remainder(params, dom, float(t), run, key=(*key, i)))
    return TraceCurve(
        params,
        dom.volume,
        dom.boundary_measure,
        ts,
        np.array([e.trace.mean for e in details]),
        np.array([e.trace.std_error for e in details]),
        np.array([e.trace.n for e in details]),
        details,
    )


@dataclass
class SecondTerm:
    value: float
    error: float
    stat_error: float
    spread: float


def _slope_through_origin(x, y, sig):
    w = 1.0 / sig**2
    sxx = float(np.sum(w * x * x))
    b = float(np.sum(w * x * y)) / sxx
    se = 1.0 / math.sqrt(sxx)
    chi2 = float(np.sum(w * (y - b * x) ** 2))
    return b, se, chi2


def _linear_fit(x, y, sig):
    w = 1.0 / sig**2
    X = np.stack([np.ones_like(x), x], axis=1)
    cov = np.linalg.inv(X.T @ (w[:, None] * X))
    beta = cov @ (X.T @ (w * y))
    return beta, cov


def extract_second_term(curve: TraceCurve, min_points: int = 5):
    """Slope of C1|D| - t^(d/alpha) Z(t) against t^(1/alpha), fitted through the origin.

    The statistical error is inflated by sqrt(chi2/dof) when the residuals
    exceed their error bars.  Refits that drop the smallest or the largest
    time give the window spread, combined in quadrature into ``error``.
    Returns ``(SecondTerm, diagnostics)``.
    """
    x = curve.scale
    y = curve.gap
    sig = np.maximum(curve.rescaled_stderr, 1e-300)
    if len(x) < min_points:
        raise InvalidParameterError(f"need at least {min_points} times, got {len(x)}")
    if x.max() / x.min() < 10.0 ** (1.0 / curve.params.alpha) * (1 - 1e-9):
        raise InvalidParameterError("times must span at least one decade")
    b, se, chi2 = _slope_through_origin(x, y, sig)
    dof = len(x) - 1
    inflate = max(1.0, math.sqrt(chi2 / dof))
    stat = se * inflate
    order = np.argsort(x)
    windows = {"drop_smallest": order[1:], "drop_largest": order[:-1]}
    if len(x) - 2 >= 3:
        windows["drop_both"] = order[1:-1]
    slopes = {name: _slope_through_origin(x[idx], y[idx], sig[idx])[0] for name, idx in windows.items()}
    spread = max(abs(s - b) for s in slopes.values())
    error = math.hypot(stat, spread)
    beta, cov = _linear_fit(x, y, sig)
    diagnostics = {
        "chi2": chi2,
        "dof": dof,
        "window_slopes": slopes,
        "free_intercept": float(beta[0]),
        "free_intercept_error": float(math.sqrt(cov[0, 0])),
        "free_slope": float(beta[1]),
        "free_slope_error": float(math.sqrt(cov[1, 1])),
        "c2_per_boundary": b / curve.boundary_measure,
        "c2_per_boundary_error": error / curve.boundary_measure,
    }
    if spread > stat:
        warnings.warn(
            UnstableFitWarning(
                f"window spread {spread:.3g} exceeds statistical error {stat:.3g}", stat_error=stat, spread=spread
            ),
            stacklevel=2,
        )
    return SecondTerm(b, error, stat, spread), diagnostics


def extrapolate_first_term(curve: TraceCurve) -> McEstimate:
    """Limit of t^(d/alpha) Z(t) as t -> 0 from a weighted straight-line fit in t^(1/alpha)."""
    beta, cov = _linear_fit(curve.scale, curve.rescaled, np.maximum(curve.rescaled_stderr, 1e-300))
    return McEstimate(float(beta[0]), float(math.sqrt(cov[0, 0])), int(np.sum(curve.n_paths)))
