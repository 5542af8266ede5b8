"""Diagonal remainder profile of the half-space and the boundary constant C2.

With H = {x_1 > 0} and x = (q, 0, ..., 0), the path started at x leaves H at
the first time its first coordinate falls below -q relative to the start.  A
single path W (started at 0) therefore resolves the exit of *every* q at once:
tau_q is the first grid time at which the running maximum M of -W_1 reaches q,
and the remainder sample is p(1 - tau_q, W_tau).  All q values share paths,
so the profile, its quadrature and the C2 error bars are all built from
per-path linear functionals.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceededError, InvalidParameterError
from .kernels import StableParams, p1_at_zero, transition_density
from .sampler import McEstimate, Moments, PathConfig, run_blocks, sample_stable_increment, substream

__all__ = [
    "ProfileCurve",
    "C2Result",
    "default_q_grid",
    "f_profile",
    "estimate_C2",
    "fit_envelope",
    "decay_exponent",
    "tail_bound",
    "trapezoid_weights",
]

HALFSPACE_BLOCK = 512


def default_q_grid(q_min: float = 1e-3, q_max: float = 20.0, n: int = 60) -> np.ndarray:
    return np.geomspace(q_min, q_max, n)


def trapezoid_weights(q: np.ndarray) -> np.ndarray:
    w = np.zeros_like(q)
    dq = np.diff(q)
    w[:-1] += dq / 2
    w[1:] += dq / 2
    return w


@dataclass
class ProfileCurve:
    q: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    dt: float
    n_paths: int
    params: StableParams | None = None
    # per-path functionals collected alongside the profile
    extras: dict = field(default_factory=dict)

    def estimates(self):
        return [McEstimate(float(m), float(s), self.n_paths) for m, s in zip(self.mean, self.stderr)]

    def upper(self, k: float = 3.0):
        return self.mean + k * self.stderr


@dataclass
class C2Result:
    value: float
    total_error: float
    head: float
    head_error: float
    quadrature_error: float
    tail_bound: float
    small_q: float
    small_q_error: float
    q_min: float
    q_cut: float
    envelope_constant: float
    path_integral: McEstimate | None = None
    refinement: list = field(default_factory=list)
    n_paths: int = 0
    dt: float = 0.0


def _path_block(params: StableParams, n: int, n_steps: int, dt: float, rng):
    """Displacements W_k (k = 1..n_steps) and the running maximum of -W_1."""
    inc = sample_stable_increment(params, dt, rng, size=n * n_steps).reshape(n, n_steps, params.d)
    w = np.cumsum(inc, axis=1)
    m = np.maximum.accumulate(np.maximum(-w[:, :, 0], 0.0), axis=1)
    return w, m


def _profile_values(params, w, m, q, dt, t, stride=1):
    """Remainder samples at each q from paths observed every ``stride`` steps."""
    n = w.shape[0]
    w = w[:, stride - 1 :: stride]
    m = m[:, stride - 1 :: stride]
    step = dt * stride
    times = step * np.arange(1, m.shape[1] + 1)
    usable = times < t - 1e-12
    w, m, times = w[:, usable], m[:, usable], times[usable]
    norms = np.linalg.norm(w, axis=2)
    out = np.zeros((n, len(q)))
    rows = np.arange(n)
    final = m[:, -1] if m.shape[1] else np.zeros(n)
    for j, qj in enumerate(q):
        hit = final >= qj
        if not np.any(hit):
            continue
        k = np.argmax(m[hit] >= qj, axis=1)
        lag = t - times[k]
        out[rows[hit], j] = transition_density(params, lag, norms[rows[hit], k])
    return out


def _path_integral_values(params, w, m, dt, t, stride=1):
    """Per path: int_0^inf 1{tau_q < t} p(t - tau_q, W_tau) dq, summed over record steps."""
    w = w[:, stride - 1 :: stride]
    m = m[:, stride - 1 :: stride]
    step = dt * stride
    times = step * np.arange(1, m.shape[1] + 1)
    usable = times < t - 1e-12
    w, m, times = w[:, usable], m[:, usable], times[usable]
    gain = np.diff(m, axis=1, prepend=0.0)
    rec = gain > 0
    vals = np.zeros_like(gain)
    lag = np.broadcast_to(t - times, gain.shape)[rec]
    vals[rec] = gain[rec] * transition_density(params, lag, np.linalg.norm(w[rec], axis=-1))
    return vals.sum(axis=1)


def f_profile(params: StableParams, q_grid, cfg: PathConfig, t: float = 1.0, key: tuple = ()) -> ProfileCurve:
    """Monte Carlo profile q -> r_H(t, (q,0,...), (q,0,...)) on ``q_grid``.

    ``cfg.dt`` is the time step; ``cfg.refinement_levels`` adds coupled
    estimates on grids coarsened by factors 2, 4, ... from the same paths.
    The per-path trapezoid sum over the grid and the exact per-path
    q-integral are accumulated in ``extras``.
    """
    q = np.asarray(q_grid, dtype=float)
    if q.ndim != 1 or np.any(q <= 0) or np.any(np.diff(q) <= 0):
        raise InvalidParameterError("q grid must be positive and increasing")
    if not t > 0:
        raise InvalidParameterError("time must be positive")
    n_steps = int(round(t / cfg.dt))
    if n_steps < 2:
        raise InvalidParameterError("need at least two time steps before t")
    strides = [2**j for j in range(cfg.refinement_levels + 1)]

    def work(b, start, stop):
        rng = substream(cfg.seed, *key, b)
        w, m = _path_block(params, stop - start, n_steps, cfg.dt, rng)
        out = {}
        for s in strides:
            vals = _profile_values(params, w, m, q, cfg.dt, t, s)
            out[s] = (
                Moments.of(vals),
                Moments.of(_cumulative_trapezoid(q, vals)),
                Moments.of(_path_integral_values(params, w, m, cfg.dt, t, s)),
            )
        return out

    acc = {s: [Moments(), Moments(), Moments()] for s in strides}
    for res in run_blocks(work, cfg.n_paths, cfg.threads, block=HALFSPACE_BLOCK):
        for s in strides:
            acc[s] = [a.merge(r) for a, r in zip(acc[s], res[s])]
    prof, head, integral = acc[1]
    extras = {
        "cumulative_mean": head.mean,
        "cumulative_stderr": head.std_error,
        "path_integral": integral.estimate(),
        "refinement": [
            {
                "dt": cfg.dt * s,
                "mean": acc[s][0].mean.tolist(),
                "stderr": acc[s][0].std_error.tolist(),
                "cumulative_mean": acc[s][1].mean.tolist(),
                "path_integral": acc[s][2].estimate(),
            }
            for s in strides
        ],
    }
    return ProfileCurve(q, prof.mean, prof.std_error, cfg.dt, cfg.n_paths, params, extras)


# ---------------------------------------------------------------------------
# envelope and tail


def decay_exponent(curve: ProfileCurve, q_lo: float = 5.0, q_hi: float = 20.0):
    """Least-squares slope of log f against log q over [q_lo, q_hi], with its standard error."""
    sel = (curve.q >= q_lo) & (curve.q <= q_hi) & (curve.mean > 0)
    if sel.sum() < 3:
        raise InvalidParameterError("need at least three positive profile points in the decay window")
    x = np.log(curve.q[sel])
    y = np.log(curve.mean[sel])
    sig = curve.stderr[sel] / curve.mean[sel]
    w = 1.0 / np.maximum(sig, 1e-12) ** 2
    X = np.stack([np.ones_like(x), x], axis=1)
    cov = np.linalg.inv(X.T @ (w[:, None] * X))
    beta = cov @ (X.T @ (w * y))
    return float(beta[1]), float(math.sqrt(cov[1, 1]))


def fit_envelope(curve: ProfileCurve, q_lo: float = 1.0, k: float = 3.0) -> float:
    """Envelope constant C with f(q) <= min(C q^(-d-alpha), p_1(0)).

    Fitted by least squares on log f + (d+alpha) log q over q >= q_lo, then
    raised so that the envelope covers the upper confidence band everywhere
    on the grid, including the bend between the plateau and the tail.
    """
    params = curve.params
    expo = params.d + params.alpha
    sel = (curve.q >= q_lo) & (curve.mean > 0)
    if not np.any(sel):
        raise InvalidParameterError("no positive profile values in the envelope window")
    logc = np.log(curve.mean[sel]) + expo * np.log(curve.q[sel])
    c_ls = float(np.exp(logc.mean()))
    upper = curve.upper(k)
    above = upper > p1_at_zero(params)
    c_cover = float(np.max(np.where(above, 0.0, upper * curve.q**expo)))
    return max(c_ls, c_cover)


def tail_bound(params: StableParams, envelope_constant: float, q_cut: float) -> float:
    """int_{q_cut}^inf C q^(-d-alpha) dq."""
    expo = params.d + params.alpha
    return envelope_constant * q_cut ** (1.0 - expo) / (expo - 1.0)


def _cumulative_trapezoid(q, vals):
    """Per-row trapezoid integrals over [q_0, q_j] for every j."""
    out = np.zeros_like(vals)
    out[:, 1:] = np.cumsum(0.5 * (vals[:, 1:] + vals[:, :-1]) * np.diff(q), axis=1)
    return out


def _head_quadrature(q, mean, cut_index):
    qq = q[: cut_index + 1]
    w = trapezoid_weights(qq)
    fine = float(mean[: cut_index + 1] @ w)
    # every-other-node trapezoid as the discretisation error estimate
    coarse_idx = np.arange(0, cut_index + 1, 2)
    if coarse_idx[-1] != cut_index:
        coarse_idx = np.append(coarse_idx, cut_index)
    wc = trapezoid_weights(q[coarse_idx])
    coarse = float(mean[coarse_idx] @ wc)
    return fine, abs(fine - coarse) / 3.0


def estimate_C2(
    params: StableParams,
    tolerance: float,
    cfg: PathConfig,
    q_grid=None,
    key: tuple = (),
    profile: ProfileCurve | None = None,
) -> C2Result:
    """Estimate C2 = int_0^inf f_H(1, q) dq with an explicit error budget.

    head       trapezoid over [q_min, Q] on the profile grid (MC error from the
               per-path quadrature sums, plus a coarse/fine discretisation term)
    small_q    q_min * p_1(0) on (0, q_min), error bounded by the same amount
    tail       envelope bound C Q^(1-d-alpha) / (d+alpha-1) with Q the last
               grid node; the budget fails unless it is below tolerance/3

    Raises :class:`BudgetExceededError` (carrying the result) when the total
    error exceeds ``tolerance``.
    """
    if not tolerance > 0:
        raise InvalidParameterError("tolerance must be positive")
    q = default_q_grid() if q_grid is None else np.asarray(q_grid, dtype=float)
    if profile is None:
        profile = f_profile(params, q, cfg, key=key)
    q = profile.q
    c_env = fit_envelope(profile)
    bounds = np.array([tail_bound(params, c_env, x) for x in q])
    # the head is integrated over the whole grid; stopping at the first node
    # where the bound is small enough would discard up to tolerance/3 of mass
    cut = len(q) - 1
    head, quad_err = _head_quadrature(q, profile.mean, cut)
    head_mc = float(profile.extras["cumulative_stderr"][cut])
    p0 = p1_at_zero(params)
    q_min = float(q[0])
    small = q_min * p0
    small_err = q_min * p0
    tail = float(bounds[cut])
    total = math.sqrt(head_mc**2 + quad_err**2) + small_err + tail
    refinement = []
    for lvl in profile.extras.get("refinement", []):
        m = np.asarray(lvl["mean"])
        h, _ = _head_quadrature(q, m, cut)
        refinement.append({"dt": lvl["dt"], "C2": h + small, "path_integral": lvl["path_integral"]})
    result = C2Result(
        value=head + small,
        total_error=total,
        head=head,
        head_error=head_mc,
        quadrature_error=quad_err,
        tail_bound=tail,
        small_q=small,
        small_q_error=small_err,
        q_min=q_min,
        q_cut=float(q[cut]),
        envelope_constant=c_env,
        path_integral=profile.extras.get("path_integral"),
        refinement=refinement,
        n_paths=profile.n_paths,
        dt=profile.dt,
    )
    if total > tolerance or tail >= tolerance / 3.0:
        raise BudgetExceededError(
            f"C2 error {total:.3g} exceeds tolerance {tolerance:.3g} with {profile.n_paths} paths", partial=result
        )
    return result
