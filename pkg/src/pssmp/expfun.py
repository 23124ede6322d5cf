"""Exponential functionals of a Lévy process drifting to -infinity.

For ``xi_hat`` drifting to -infinity this module samples

    I   = int_0^inf exp(xi_hat_s) ds
    I_q = int_0^{T_{-q}} exp(xi_hat_s) ds,   T_{-q} = inf{t : xi_hat_t <= -q}

from discretised paths, estimates their tails, and checks the tail
inequalities that relate the two.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from . import levy
from .levy import LevyPath, LevyTriplet
from .rng import SeedLike, child_rng, master_int
from .stats import wilson_ci_array

MAX_BLOCKS = 20_000
BOOTSTRAP_DEPTH = 3.0
BOOTSTRAP_FACTOR = 3.0


def cumulative_exp_integral(path: LevyPath, alpha: float = 1.0) -> np.ndarray:
    """Left-endpoint sums I_{t_i} = sum_{j<i} exp(alpha xi_{t_j}) (t_{j+1} - t_j)."""
    out = np.empty(path.times.size)
    out[0] = 0.0
    np.cumsum(np.exp(alpha * path.values[:-1]) * np.diff(path.times), out=out[1:])
    return out


@dataclass(frozen=True)
class ExpFunSample:
    value: float
    truncation_bound: float
    q_used: float


def a_priori_mean(triplet_hat: LevyTriplet) -> float | None:
    """E(I) = -1/kappa(1) when kappa(1) = log E exp(xi_hat_1) is negative."""
    k = levy.laplace_exponent(triplet_hat, 1.0)
    if math.isfinite(k) and k < 0:
        return -1.0 / k
    return None


def _require_drift_down(triplet_hat: LevyTriplet) -> None:
    h = levy.check_condition_H(levy.negate(triplet_hat))
    if not h.holds:
        raise ValueError("dual process must satisfy (H): " + "; ".join(h.reasons))


@dataclass
class _Scan:
    """Result of scanning one path: full-I sample and requested I_q values."""

    sample: ExpFunSample | None
    iq: np.ndarray
    times: list = field(default_factory=list)
    values: list = field(default_factory=list)
    is_jump: list = field(default_factory=list)


def _scan(triplet_hat: LevyTriplet, step: float, seed: SeedLike, *,
          tol: float | None = None, qs: Sequence[float] = (),
          keep_path: bool = False, max_blocks: int = MAX_BLOCKS) -> _Scan:
    """Walk one path block by block until every requested functional is known."""
    qs = np.asarray(qs, dtype=float)
    iq = np.full(qs.size, np.nan)
    want_full = tol is not None
    ibar = a_priori_mean(triplet_hat) if want_full else None
    total = 0.0
    run_min = math.inf
    prev_t = prev_v = None
    out = _Scan(None, iq)
    for nb, block in enumerate(levy.path_blocks(triplet_hat, step, seed)):
        if nb >= max_blocks:
            raise RuntimeError("block budget exceeded before the passage was reached")
        t, v = block.times, block.values
        if prev_t is None:
            cum = np.concatenate([[0.0], np.cumsum(np.exp(v[:-1]) * np.diff(t))])
        else:
            lefts = np.concatenate([[prev_v], v[:-1]])
            cum = np.cumsum(np.exp(lefts) * np.diff(t, prepend=prev_t))
        cum += total
        last = -1
        for k in np.flatnonzero(np.isnan(iq)):
            hit = np.flatnonzero(v <= -qs[k])
            if hit.size:
                iq[k] = cum[hit[0]]
                last = max(last, int(hit[0]))
        if want_full and out.sample is None:
            prior_min = np.minimum.accumulate(np.concatenate([[run_min], v[:-1]]))
            ok = v < prior_min
            if ibar is None:
                below = np.flatnonzero(v <= -BOOTSTRAP_DEPTH)
                if below.size:
                    ibar = BOOTSTRAP_FACTOR * cum[below[0]]
                    ok &= np.arange(v.size) >= below[0]
            if ibar is None:
                ok[:] = False
            else:
                ok &= np.exp(v) * ibar <= tol * cum
            hit = np.flatnonzero(ok)
            if hit.size:
                i = int(hit[0])
                out.sample = ExpFunSample(float(cum[i]), float(math.exp(v[i]) * ibar),
                                          float(-v[i]))
                last = max(last, i)
        done = (out.sample is not None or not want_full) and not np.isnan(iq).any()
        if keep_path:
            stop = last + 1 if done else t.size
            out.times.append(t[:stop])
            out.values.append(v[:stop])
            out.is_jump.append(block.is_jump[:stop])
        if done:
            return out
        total = float(cum[-1])
        run_min = min(run_min, float(v.min()))
        prev_t, prev_v = float(t[-1]), float(v[-1])
    raise AssertionError("unreachable")


def sample_I(triplet_hat: LevyTriplet, tol: float, step: float, seed: SeedLike,
             max_blocks: int = MAX_BLOCKS) -> ExpFunSample:
    """One draw of I, truncated at the first new low -q* with exp(-q*) E(I) <= tol * I.

    E(I) is taken from the Laplace exponent when finite, otherwise
    bootstrapped as three times the integral accumulated up to the first
    passage below -3.  ``truncation_bound`` is the conditional expected
    size of the omitted remainder.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    _require_drift_down(triplet_hat)
    return _scan(triplet_hat, step, seed, tol=tol, max_blocks=max_blocks).sample


def sample_I_q(triplet_hat: LevyTriplet, q: float, step: float, seed: SeedLike,
               max_blocks: int = MAX_BLOCKS) -> ExpFunSample:
    if not q > 0:
        raise ValueError("q must be > 0")
    _require_drift_down(triplet_hat)
    r = _scan(triplet_hat, step, seed, qs=[q], max_blocks=max_blocks)
    return ExpFunSample(float(r.iq[0]), 0.0, float(q))


def sample_I_with_path(triplet_hat: LevyTriplet, tol: float, step: float,
                       seed: SeedLike) -> tuple[ExpFunSample, LevyPath]:
    """Draw of I together with the path prefix it was computed from."""
    _require_drift_down(triplet_hat)
    r = _scan(triplet_hat, step, seed, tol=tol, keep_path=True)
    return r.sample, levy.join_blocks(r.times, r.values, r.is_jump, step)


def sample_I_many(triplet_hat: LevyTriplet, n: int, tol: float, step: float,
                  seed: int, *, salt: int = 0) -> np.ndarray:
    """``n`` independent draws of I; draw ``i`` uses stream (seed, i)."""
    _require_drift_down(triplet_hat)
    master = master_int(seed)
    return np.array([
        _scan(triplet_hat, step, child_rng(master, i, salt=salt), tol=tol).sample.value
        for i in range(n)])


def sample_I_q_many(triplet_hat: LevyTriplet, n: int, q: float, step: float,
                    seed: int, *, salt: int = 0) -> np.ndarray:
    _require_drift_down(triplet_hat)
    master = master_int(seed)
    return np.array([
        _scan(triplet_hat, step, child_rng(master, i, salt=salt), qs=[q]).iq[0]
        for i in range(n)])


def sample_I_and_Iq_many(triplet_hat: LevyTriplet, n: int, qs: Sequence[float],
                         tol: float, step: float, seed: int, *,
                         salt: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Coupled draws: I and I_q for every q in ``qs`` from the same paths.

    Returns ``(I, Iq)`` with ``Iq`` of shape (len(qs), n).
    """
    _require_drift_down(triplet_hat)
    master = master_int(seed)
    full = np.empty(n)
    trunc = np.empty((len(qs), n))
    for i in range(n):
        r = _scan(triplet_hat, step, child_rng(master, i, salt=salt), tol=tol, qs=qs)
        full[i] = r.sample.value
        trunc[:, i] = r.iq
    return full, trunc


# ---------------------------------------------------------------------------
# Tails
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class TailEstimate:
    """Empirical survival function on a threshold grid with Wilson bands.

    ``n_samples == 0`` marks an exact (analytic) tail with zero-width band.
    """

    thresholds: np.ndarray
    survival: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_samples: int
    counts: np.ndarray | None = None

    @classmethod
    def from_counts(cls, thresholds, counts, n: int, level: float = 0.95) -> "TailEstimate":
        thresholds = np.asarray(thresholds, dtype=float)
        counts = np.asarray(counts, dtype=np.int64)
        low, high = wilson_ci_array(counts, n, level)
        return cls(thresholds, counts / n, low, high, n, counts)

    @classmethod
    def exact(cls, thresholds, survival) -> "TailEstimate":
        s = np.asarray(survival, dtype=float)
        return cls(np.asarray(thresholds, dtype=float), s, s.copy(), s.copy(), 0)

    def merge(self, other: "TailEstimate") -> "TailEstimate":
        """Pool two estimates on the same grid (order-independent)."""
        if self.counts is None or other.counts is None:
            raise ValueError("only count-backed estimates can be merged")
        if not np.array_equal(self.thresholds, other.thresholds):
            raise ValueError("threshold grids differ")
        return TailEstimate.from_counts(self.thresholds, self.counts + other.counts,
                                        self.n_samples + other.n_samples)

    @property
    def half_width(self) -> np.ndarray:
        return (self.ci_high - self.ci_low) / 2.0

    def to_csv(self, fh) -> None:
        w = csv.writer(fh)
        w.writerow(["threshold", "survival", "ci_low", "ci_high"])
        for row in zip(self.thresholds, self.survival, self.ci_low, self.ci_high):
            w.writerow([repr(float(x)) for x in row])


def estimate_tail(samples, thresholds, level: float = 0.95) -> TailEstimate:
    """Empirical P(sample > t) for each threshold, with Wilson intervals."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("empty sample")
    if x.size < 100:
        raise ValueError(f"tail estimation needs n >= 100, got {x.size}")
    thresholds = np.asarray(thresholds, dtype=float)
    if np.any(np.diff(thresholds) <= 0):
        raise ValueError("thresholds must be increasing")
    counts = x.size - np.searchsorted(x, thresholds, side="right")
    return TailEstimate.from_counts(thresholds, counts, x.size, level)


def write_samples_csv(fh, samples, triplet: LevyTriplet, seed: int) -> None:
    fh.write(f"# triplet={triplet.fingerprint()} seed={seed}\n")
    fh.write("value\n")
    for s in np.asarray(samples, dtype=float):
        fh.write(repr(float(s)) + "\n")


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------


def moments(samples, n_max: int) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    return np.array([np.mean(x ** k) for k in range(1, n_max + 1)])


def oracle_moments(phi: Callable[[float], float], n_max: int) -> np.ndarray:
    """E(I^n) = n! / prod_{k<=n} phi(k) for I = int exp(-sigma_s) ds."""
    out = []
    acc = 1.0
    for k in range(1, n_max + 1):
        pk = phi(k)
        if pk == 0:
            raise ValueError(f"phi({k}) = 0: moment of order {k} is infinite")
        acc *= k / pk
        out.append(acc)
    return np.array(out)


def bernstein_exponent(triplet_hat: LevyTriplet) -> Callable[[float], float]:
    """phi with E exp(-lam sigma_1) = exp(-phi(lam)) for xi_hat = -sigma."""
    return lambda lam: -levy.laplace_exponent(triplet_hat, lam)


def tempered_stable_phi(beta: float, theta: float = 1.0, scale: float = 1.0,
                        drift: float = 0.0) -> Callable[[float], float]:
    return lambda lam: drift * lam + scale * ((lam + theta) ** beta - theta ** beta)


def power_phi(beta: float, scale: float = 1.0) -> Callable[[float], float]:
    return lambda lam: scale * lam ** beta


# ---------------------------------------------------------------------------
# Cramer root
# ---------------------------------------------------------------------------


def cramer_gamma(triplet: LevyTriplet, rtol: float = 1e-12) -> float:
    """gamma > 0 with E exp(-gamma xi_1) = 1."""
    def f(g):
        return levy.laplace_exponent(triplet, -g)

    grid = np.logspace(-8, 6, 281)
    lo = hi = None
    for g in grid:
        val = f(g)
        if lo is None:
            if val < 0:
                lo = g
        elif not val < 0:
            hi = g
            break
    if lo is None or hi is None:
        raise ValueError("no Cramér root: no sign change of log E exp(-gamma xi_1)")
    # past a finite blow-up point the exponent is +inf; treat it as "positive"
    root = brentq(lambda g: f(g) if math.isfinite(f(g)) else 1.0, lo, hi, xtol=1e-300, rtol=rtol)
    if abs(f(root)) > 1e-6:
        raise ValueError("no Cramér root: exponential moment blows up before reaching 1")
    return root


# ---------------------------------------------------------------------------
# Tail bounds
# ---------------------------------------------------------------------------


@dataclass
class BoundReport:
    passed: bool
    rows: list
    violations: list
    informational: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"passed": self.passed, "rows": self.rows,
                "violations": self.violations, "informational": self.informational}


def _top_decile(n: int) -> np.ndarray:
    k = max(1, int(math.ceil(0.1 * n)))
    return np.arange(n - k, n)


def check_Fq_sandwich(tailF: TailEstimate, tailFq: TailEstimate, gamma: float,
                      q: float) -> BoundReport:
    """(1 - exp(-gamma q)) F(t) <= F_q(t) <= F(t) on the top decile of the grid.

    Each side passes when it holds after widening by the combined CI
    half-widths.  Lower thresholds are reported but never fail.
    """
    if not np.array_equal(tailF.thresholds, tailFq.thresholds):
        raise ValueError("F and F_q must share a threshold grid")
    factor = 1.0 - math.exp(-gamma * q)
    slack = tailF.half_width + tailFq.half_width
    top = set(_top_decile(tailF.thresholds.size).tolist())
    rows, bad, info = [], [], []
    for i, t in enumerate(tailF.thresholds):
        lower_ok = tailFq.ci_high[i] >= factor * tailF.ci_low[i] - slack[i]
        upper_ok = tailFq.ci_low[i] <= tailF.ci_high[i] + slack[i]
        row = {"t": float(t), "F": float(tailF.survival[i]), "F_q": float(tailFq.survival[i]),
               "lower_bound": float(factor * tailF.survival[i]),
               "lower_ok": bool(lower_ok), "upper_ok": bool(upper_ok)}
        (rows if i in top else info).append(row)
        if i in top and not (lower_ok and upper_ok):
            bad.append(row)
    return BoundReport(not bad, rows, bad, info)


def check_ratio_bound(samplesI, samplesIq, gamma_ratio: float, delta: float, q: float,
                      thresholds) -> BoundReport:
    """1 - F(g t)/F(t) <= F_q((1 - delta) t)/F(t), checked with CI slack.

    The left side is taken at its smallest and the right side at its
    largest value consistent with the Wilson bands.
    """
    if not gamma_ratio > 1:
        raise ValueError("gamma_ratio must exceed 1")
    if not delta > gamma_ratio * math.exp(-q):
        raise ValueError("need delta > gamma_ratio * exp(-q)")
    if not delta <= 1:
        raise ValueError("delta must be <= 1")
    thresholds = np.asarray(thresholds, dtype=float)
    fi = np.sort(np.asarray(samplesI, dtype=float))
    fq = np.sort(np.asarray(samplesIq, dtype=float))

    def tail(x, pts):
        pts = np.atleast_1d(pts)
        c = x.size - np.searchsorted(x, pts, side="right")
        low, high = wilson_ci_array(c, x.size)
        return c / x.size, low, high

    f_t, f_t_lo, _ = tail(fi, thresholds)
    f_g, _, f_g_hi = tail(fi, gamma_ratio * thresholds)
    fq_d, _, fq_d_hi = tail(fq, (1.0 - delta) * thresholds)
    rows, bad = [], []
    for i, t in enumerate(thresholds):
        if f_t_lo[i] <= 0:
            rows.append({"t": float(t), "status": "inconclusive"})
            continue
        lhs_low = 1.0 - f_g_hi[i] / f_t_lo[i]
        rhs_high = fq_d_hi[i] / f_t_lo[i]
        ok = lhs_low <= rhs_high
        row = {"t": float(t), "lhs": float(1 - f_g[i] / f_t[i]) if f_t[i] > 0 else math.nan,
               "rhs": float(fq_d[i] / f_t[i]) if f_t[i] > 0 else math.nan,
               "lhs_low": float(lhs_low), "rhs_high": float(rhs_high), "ok": bool(ok)}
        rows.append(row)
        if not ok:
            bad.append(row)
    return BoundReport(not bad, rows, bad)


# ---------------------------------------------------------------------------
# Log-regular tails of subordinator functionals
# ---------------------------------------------------------------------------


def phi_inverse(phi: Callable[[float], float], t: float, rtol: float = 1e-13) -> float:
    """inf{s > 0 : s / phi(s) > t}, a root of the increasing map s / phi(s) - t."""
    def g(s):
        return s / phi(s)

    hi = 1.0
    while not g(hi) > t:
        hi *= 2.0
        if hi > 1e300:
            raise ValueError("phi_inverse: bracket exhausted")
    lo = hi / 2.0
    while g(lo) > t:
        lo /= 2.0
        if lo < 1e-300:
            return 0.0
    return brentq(lambda s: g(s) - t, lo, hi, xtol=1e-300, rtol=rtol)


def log_tail_model(phi: Callable[[float], float], t: float, beta: float) -> float:
    """Asymptotic -log P(I > t) = (1 - beta) * phi_inverse(t) for index-beta phi."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    return (1.0 - beta) * phi_inverse(phi, t)
