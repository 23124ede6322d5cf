"""Statistical utilities shared by the checks: two-sample KS and Wilson intervals."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import kolmogorov
from scipy.stats import binomtest

MIN_KS_SAMPLE = 30


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float
    n_a: int
    n_b: int

    def passed(self, alpha: float = 0.01) -> bool:
        return self.p_value > alpha

    def as_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value,
                "n_a": self.n_a, "n_b": self.n_b}


def _ecdf_gap(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """F_a - F_b evaluated at every pooled data point."""
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return fa - fb


def _prepare(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size < MIN_KS_SAMPLE or b.size < MIN_KS_SAMPLE:
        raise ValueError(
            f"KS test needs at least {MIN_KS_SAMPLE} points per sample, "
            f"got {a.size} and {b.size}")
    return a, b


def ks_two_sample(a, b) -> KSResult:
    """Two-sided two-sample Kolmogorov-Smirnov test.

    The statistic is exact; the p-value is the asymptotic Kolmogorov tail
    with Stephens' small-sample correction of the argument.
    """
    a, b = _prepare(a, b)
    d = float(np.max(np.abs(_ecdf_gap(a, b))))
    en = math.sqrt(a.size * b.size / (a.size + b.size))
    p = float(kolmogorov((en + 0.12 + 0.11 / en) * d))
    return KSResult(d, p, a.size, b.size)


def ks_one_sided(a, b) -> KSResult:
    """One-sided test of H0: ``a`` is stochastically no larger than ``b``.

    The statistic is sup(F_b - F_a) >= 0, large when ``a`` puts mass above
    ``b``; the p-value is Smirnov's asymptotic exp(-2 n_e D^2).
    """
    a, b = _prepare(a, b)
    d = max(0.0, float(np.max(-_ecdf_gap(a, b))))
    ne = a.size * b.size / (a.size + b.size)
    return KSResult(d, min(1.0, math.exp(-2.0 * ne * d * d)), a.size, b.size)


def wilson_ci(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1 or not 0 <= successes <= n:
        raise ValueError(f"need 0 <= successes <= n and n >= 1, got {successes}/{n}")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    ci = binomtest(successes, n).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def wilson_ci_array(successes, n: int, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    successes = np.asarray(successes)
    out = [wilson_ci(int(k), n, level) for k in successes.ravel()]
    low = np.array([o[0] for o in out]).reshape(successes.shape)
    high = np.array([o[1] for o in out]).reshape(successes.shape)
    return low, high


def mean_and_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))
