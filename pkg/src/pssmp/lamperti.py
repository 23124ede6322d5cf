"""Lamperti transform between Lévy paths and positive self-similar paths.

    X_t = x exp(xi_{tau(t x^-alpha)}),   tau_t = inf{s : int_0^s exp(alpha xi_u) du >= t}

On a grid the time change is exact bookkeeping: grid point s_i of the Lévy
path maps to time x^alpha I_{s_i} of the pssMp path, where I is the
left-endpoint cumulative integral.  The inverse map divides the pssMp
time increments by X^alpha.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import expfun, levy
from .levy import LevyPath, LevyTriplet
from .rng import SeedLike, child_rng, master_int
from .stats import KSResult, ks_two_sample, mean_and_se


@dataclass(eq=False)
class PssMpPath:
    """Grid path of a pssMp; ``lifetime`` is the absorption time (inf if none)."""

    times: np.ndarray
    values: np.ndarray
    start_x: float
    alpha: float = 1.0
    lifetime: float = math.inf
    jump_marks: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.jump_marks = np.asarray(self.jump_marks, dtype=np.int64)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def value_at(self, t):
        """Right-continuous step evaluation; vectorised over ``t``."""
        i = np.searchsorted(self.times, t, side="right") - 1
        if np.any(i < 0):
            raise ValueError("time before path start")
        return self.values[i]

    def to_csv(self, fh) -> None:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for t, v in zip(self.times, self.values):
            w.writerow([repr(float(t)), repr(float(v))])


def to_pssmp(levy_path: LevyPath, x: float, alpha: float = 1.0, *,
             absorb: bool = False) -> PssMpPath:
    """Lamperti image of a Lévy grid path started at ``x``.

    With ``absorb=True`` the final grid point is read as the absorption time:
    its value is set to 0 and ``lifetime`` equals the last grid time.
    """
    if not (x > 0 and alpha > 0):
        raise ValueError("x and alpha must be > 0")
    cum = expfun.cumulative_exp_integral(levy_path, alpha)
    times = x ** alpha * cum
    values = x * np.exp(levy_path.values)
    lifetime = math.inf
    if absorb:
        values = values.copy()
        values[-1] = 0.0
        lifetime = float(times[-1])
    return PssMpPath(times, values, x, alpha, lifetime, levy_path.jump_marks.copy())


def from_pssmp(p: PssMpPath) -> LevyPath:
    """Inverse Lamperti map on the grid."""
    if not p.start_x > 0:
        raise ValueError("start_x must be > 0")
    times, values = p.times, p.values
    if math.isfinite(p.lifetime) and values[-1] == 0:
        times, values = times[:-1], values[:-1]
    if np.any(values <= 0):
        raise ValueError("path touches 0 before its end")
    xi = np.log(values / p.start_x)
    ds = np.diff(times) * values[:-1] ** (-p.alpha)
    s = np.concatenate([[0.0], np.cumsum(ds)])
    marks = p.jump_marks[p.jump_marks < s.size]
    return LevyPath(s, xi, marks, float(np.median(ds)) if ds.size else 1.0)


# ---------------------------------------------------------------------------
# Streaming construction (no full-path storage)
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class _PBlock:
    times: np.ndarray
    values: np.ndarray
    levy_values: np.ndarray
    is_jump: np.ndarray


def pssmp_blocks(triplet: LevyTriplet, x: float, alpha: float, step: float,
                 seed: SeedLike) -> Iterator[_PBlock]:
    """Blocks of the Lamperti image, with times in the pssMp clock."""
    scale = x ** alpha
    total = 0.0
    prev_t = prev_v = None
    for b in levy.path_blocks(triplet, step, seed):
        t, v = b.times, b.values
        if prev_t is None:
            cum = np.concatenate([[0.0], np.cumsum(np.exp(alpha * v[:-1]) * np.diff(t))])
        else:
            lefts = np.concatenate([[prev_v], v[:-1]])
            cum = np.cumsum(np.exp(alpha * lefts) * np.diff(t, prepend=prev_t))
        cum += total
        total = float(cum[-1])
        prev_t, prev_v = float(t[-1]), float(v[-1])
        yield _PBlock(scale * cum, x * np.exp(v), v, b.is_jump)


def marginal_at(triplet: LevyTriplet, x: float, alpha: float, t: float, step: float,
                seed: SeedLike, max_blocks: int = 100_000) -> float:
    """X_t for one path started at ``x`` (step-function reading of the grid)."""
    last_val = x
    for nb, b in enumerate(pssmp_blocks(triplet, x, alpha, step, seed)):
        if nb >= max_blocks:
            raise RuntimeError("block budget exceeded before reaching the probe time")
        if b.times[-1] > t:
            i = int(np.searchsorted(b.times, t, side="right")) - 1
            return float(b.values[i]) if i >= 0 else last_val
        last_val = float(b.values[-1])


def marginal_samples(triplet: LevyTriplet, x: float, alpha: float, t: float, n: int,
                     step: float, seed: int, *, salt: int = 0) -> np.ndarray:
    master = master_int(seed)
    return np.array([marginal_at(triplet, x, alpha, t, step, child_rng(master, i, salt=salt))
                     for i in range(n)])


def _collect(triplet, x, alpha, step, seed, stop, max_blocks=100_000) -> PssMpPath:
    """Concatenate blocks until ``stop(times, values)`` returns a cut index (or None)."""
    ts, vs, js = [], [], []
    offset = 0
    for nb, b in enumerate(pssmp_blocks(triplet, x, alpha, step, seed)):
        if nb >= max_blocks:
            raise RuntimeError("block budget exceeded")
        cut = stop(b.times, b.values)
        end = b.times.size if cut is None else cut
        ts.append(b.times[:end])
        vs.append(b.values[:end])
        js.append(np.flatnonzero(b.is_jump[:end]) + offset)
        offset += end
        if cut is not None:
            break
    return PssMpPath(np.concatenate(ts), np.concatenate(vs), x, alpha,
                     jump_marks=np.concatenate(js))


def simulate_pssmp(triplet: LevyTriplet, x: float, horizon: float, step: float,
                   seed: SeedLike, alpha: float = 1.0) -> PssMpPath:
    """Lamperti path from ``x`` on the pssMp time interval [0, horizon]."""
    def stop(t, v):
        return int(np.searchsorted(t, horizon, side="right")) if t[-1] >= horizon else None
    return _collect(triplet, x, alpha, step, seed, stop)


def simulate_from_zero(triplet: LevyTriplet, x_small: float, horizon: float, step: float,
                       seed: SeedLike, alpha: float = 1.0) -> PssMpPath:
    """Proxy for X^(0): the path started at a small ``x_small`` under (H)."""
    levy.require_H(triplet)
    if not x_small > 0:
        raise ValueError("x_small must be > 0")
    p = simulate_pssmp(triplet, x_small, horizon, step, seed, alpha)
    p.meta["x_small"] = x_small
    return p


def simulate_from_zero_until(triplet: LevyTriplet, x_small: float, level: float,
                             step: float, seed: SeedLike, *, alpha: float = 1.0,
                             min_horizon: float = 0.0, extend: float = 1.5) -> PssMpPath:
    """X^(0)-proxy run past ``extend`` times its first exceedance of ``level``.

    The path stops at the first point beyond that time that is again above
    ``level``, leaving a terminal stretch for last-passage certification.
    """
    levy.require_H(triplet)
    target = [None]

    def stop(t, v):
        if target[0] is None:
            hit = np.flatnonzero(v >= level)
            if hit.size:
                target[0] = max(min_horizon, extend * float(t[hit[0]]))
        if target[0] is not None:
            ok = np.flatnonzero((t >= target[0]) & (v >= level))
            if ok.size:
                return int(ok[0]) + 1
        return None

    p = _collect(triplet, x_small, alpha, step, seed, stop)
    p.meta["x_small"] = x_small
    return p


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------


def rescale_check(triplet: LevyTriplet, x: float, k: float, alpha: float, n_paths: int,
                  seed: int, *, t0: float = 1.0, step: float = 1e-3) -> KSResult:
    """KS of k X^(x)_{k^-alpha t0} against X^(kx)_{t0}, independent streams."""
    if not (x > 0 and k > 0):
        raise ValueError("x and k must be > 0")
    a = k * marginal_samples(triplet, x, alpha, k ** (-alpha) * t0, n_paths, step, seed, salt=1)
    b = marginal_samples(triplet, k * x, alpha, t0, n_paths, step, seed, salt=2)
    return ks_two_sample(a, b)


@dataclass(eq=False)
class EntranceSample:
    values: np.ndarray
    weights: np.ndarray
    raw_weights: np.ndarray
    m: float
    t: float

    def weight_mean(self) -> tuple[float, float]:
        """Mean and standard error of 1/(m I); the entrance law needs it to be 1."""
        return mean_and_se(self.raw_weights)

    def resample(self, seed: SeedLike) -> np.ndarray:
        """Unweighted draws by rejection against the largest weight."""
        rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
        keep = rng.uniform(size=self.values.size) * self.raw_weights.max() < self.raw_weights
        return self.values[keep]

    def to_csv(self, fh) -> None:
        w = csv.writer(fh)
        w.writerow(["value", "weight"])
        for v, wt in zip(self.values, self.weights):
            w.writerow([repr(float(v)), repr(float(wt))])


def entrance_sampler(triplet: LevyTriplet, t: float, n: int, seed: int, *,
                     tol: float = 1e-4, step: float = 1e-3) -> EntranceSample:
    """Weighted sample of X^(0)_t: values t/I, weights proportional to 1/I.

    I is the exponential functional of -xi.
    """
    m = levy.require_H(triplet)
    if not t > 0:
        raise ValueError("t must be > 0")
    draws = expfun.sample_I_many(levy.negate(triplet), n, tol, step, seed)
    inv = 1.0 / draws
    return EntranceSample(t * inv, inv / inv.sum(), inv / m, m, t)


@dataclass
class ZeroHitReport:
    absorption_time: float
    x_times_integral: float
    exact: bool
    truncation_bound: float
    pre_absorption_value: float
    terminal_level: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def zero_hit_time_check(triplet: LevyTriplet, x: float, step: float, seed: SeedLike, *,
                        tol: float = 1e-4) -> ZeroHitReport:
    """Absorption time of the dual pssMp versus x times the exponential functional.

    The dual is driven by -xi.  Both sides are read off the same cumulative
    integral, so equality is exact; the streamed sampler value agrees with
    it up to summation order.  ``terminal_level`` is x exp(-q) at the
    truncation point and bounds how close to 0 the path got.
    """
    levy.require_H(triplet)
    sample, path = expfun.sample_I_with_path(levy.negate(triplet), tol, step, seed)
    dual = to_pssmp(path, x, 1.0, absorb=True)
    cum = expfun.cumulative_exp_integral(path)
    absorbed = dual.lifetime
    exact = absorbed == x * cum[-1]
    pre = float(dual.values[-2]) if dual.values.size > 1 else x
    return ZeroHitReport(absorbed, x * float(cum[-1]), bool(exact),
                         x * sample.truncation_bound, pre, x * math.exp(-sample.q_used))


@dataclass
class OccupationReport:
    estimate: float
    standard_error: float
    target: float
    n_paths: int
    passed: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def occupation_identity_check(triplet: LevyTriplet, intervals: Sequence[tuple[float, float]],
                              n_paths: int, horizon: float | None, seed: int, *,
                              x_small: float = 1e-4, step: float = 1e-3,
                              weights: Sequence[float] | None = None) -> OccupationReport:
    """E int f(X^(0)_t) dt against (1/m) int f for f a sum of interval indicators.

    With ``horizon=None`` each path runs until it exceeds ten times the top
    of the support; with an explicit horizon a path ending below that
    margin raises, since it could still re-enter the support.
    """
    m = levy.require_H(triplet)
    intervals = [(float(a), float(b)) for a, b in intervals]
    w = np.ones(len(intervals)) if weights is None else np.asarray(weights, dtype=float)
    target = float(sum(wi * (b - a) for wi, (a, b) in zip(w, intervals)) / m)
    if not intervals:
        return OccupationReport(0.0, 0.0, 0.0, n_paths, True)
    top = max(b for _, b in intervals)
    margin = 10.0 * top
    master = master_int(seed)
    occ = np.empty(n_paths)
    for i in range(n_paths):
        rng = child_rng(master, i)
        if horizon is None:
            p = simulate_from_zero_until(triplet, x_small, margin, step, rng, extend=1.0)
        else:
            p = simulate_from_zero(triplet, x_small, horizon, step, rng)
            if p.values[-1] < margin:
                raise ValueError("horizon too short: terminal value below 10x the support top")
        dt = np.diff(p.times)
        vals = p.values[:-1]
        f = np.zeros(vals.size)
        for wi, (a, b) in zip(w, intervals):
            f += wi * ((vals >= a) & (vals < b))
        occ[i] = float(np.sum(f * dt))
    est, se = mean_and_se(occ)
    return OccupationReport(est, se, target, n_paths, abs(est - target) <= 3 * se)
