"""Integral tests, the psi normalisation and empirical liminf measurement.

Everything is evaluated in the variable u = |log t|, which serves both
sides at once: dt/t = du, and the log-power test functions only involve
u, log u and the sign of log t.  Tails are consumed through ``log_sf`` so
that survival values far below double precision remain usable.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammainc, logsumexp, roots_legendre

from .expfun import TailEstimate
from .lamperti import PssMpPath

Side = Literal["zero", "infinity"]

E_E = math.exp(math.e)
_GL_NODES, _GL_WEIGHTS = roots_legendre(16)


def _check_side(side: str) -> None:
    if side not in ("zero", "infinity"):
        raise ValueError(f"side must be 'zero' or 'infinity', got {side!r}")


# ---------------------------------------------------------------------------
# Test functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """f(t) = c t^a |log t|^b (log |log t|)^d on one side (t -> 0 or t -> inf).

    The domain window is |log t| >= e^e so that every factor is positive
    and smooth.
    """

    __test__ = False  # not a pytest class

    c: float
    a: float
    b: float = 0.0
    d: float = 0.0
    side: Side = "zero"

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be > 0")
        _check_side(self.side)

    @property
    def sign(self) -> float:
        """log t = sign * u."""
        return -1.0 if self.side == "zero" else 1.0

    def log_f_u(self, u, lu=None, llu=None):
        """log f in terms of u = |log t| (log u and log log u may be passed in)."""
        u = np.asarray(u, dtype=float)
        lu = np.log(u) if lu is None else lu
        llu = np.log(lu) if llu is None else llu
        out = math.log(self.c) + self.b * lu + self.d * llu
        if self.a != 0:
            out = out + self.a * self.sign * u
        return out

    def log_ratio_u(self, u, lu=None, llu=None):
        """log(t / f(t)) in terms of u."""
        u = np.asarray(u, dtype=float)
        lu = np.log(u) if lu is None else lu
        llu = np.log(lu) if llu is None else llu
        out = -math.log(self.c) - self.b * lu - self.d * llu
        if self.a != 1:
            with np.errstate(invalid="ignore"):
                out = out + (1.0 - self.a) * self.sign * u
        return out

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(self.log_f_u(np.abs(np.log(t))))

    def _u_grid(self, n: int = 4000) -> np.ndarray:
        return np.exp(np.linspace(math.e, math.log(1e12), n))

    def is_increasing(self, n: int = 4000) -> bool:
        """Numerical monotonicity of f in t over the window."""
        u = self._u_grid(n)
        lf = self.log_f_u(u)
        # t increases as u decreases at 0 and as u increases at infinity
        step = np.diff(lf) * self.sign
        return bool(np.all(step > 0))

    def side_condition(self) -> str:
        """Which alternative of the side condition on f(t)/t holds.

        Returns "ratio_to_zero" when f(t)/t -> 0 on the side,
        "ratio_liminf_positive" when liminf f(t)/t > 0; decided
        lexicographically on (a, b, d).
        """
        # log(f/t) = log c + (a-1) log t + b log u + d log log u
        lead = next((k for k in ((self.a - 1.0) * self.sign, self.b, self.d) if k != 0), 0.0)
        return "ratio_to_zero" if lead < 0 else "ratio_liminf_positive"

    def ratio_monotone(self, n: int = 4000) -> str:
        """"increasing", "decreasing" or "neither" for f(t)/t in t on the window."""
        u = self._u_grid(n)
        r = -self.log_ratio_u(u)
        step = np.diff(r) * self.sign
        if np.all(step > 0):
            return "increasing"
        if np.all(step < 0):
            return "decreasing"
        return "neither"

    def squared(self) -> "TestFunction":
        return TestFunction(self.c ** 2, 2 * self.a, 2 * self.b, 2 * self.d, self.side)


# ---------------------------------------------------------------------------
# Tail models
# ---------------------------------------------------------------------------


def _slow_log(log_s, b: float, d: float):
    """log L(s) for L(s) = (log s)^b (log log s)^d, frozen below s = e^e."""
    if b == 0 and d == 0:
        return np.zeros_like(log_s)
    ls = np.maximum(log_s, math.e)
    return b * np.log(ls) + d * np.log(np.log(ls))


@dataclass(frozen=True)
class RegularVariation:
    """F(s) = min(1, lam s^-gamma L(s))."""

    gamma: float
    lam: float = 1.0
    b: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        if not (self.gamma > 0 and self.lam > 0):
            raise ValueError("gamma and lam must be > 0")

    def log_sf(self, log_s):
        log_s = np.asarray(log_s, dtype=float)
        with np.errstate(invalid="ignore", over="ignore"):
            raw = math.log(self.lam) - self.gamma * log_s + _slow_log(log_s, self.b, self.d)
        raw = np.where(np.isposinf(log_s), -np.inf, raw)
        return np.minimum(0.0, np.where(np.isneginf(log_s), 0.0, raw))

    def sf(self, s):
        return np.exp(self.log_sf(np.log(s)))


@dataclass(frozen=True)
class LogRegular:
    """F(s) = exp(-lam s^beta L(s))."""

    lam: float
    beta: float
    b: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        if not (self.lam > 0 and self.beta > 0):
            raise ValueError("lam and beta must be > 0")

    @property
    def trivial_L(self) -> bool:
        return self.b == 0 and self.d == 0

    def log_sf(self, log_s):
        log_s = np.asarray(log_s, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            expo = math.log(self.lam) + self.beta * log_s + _slow_log(log_s, self.b, self.d)
            out = -np.exp(expo)
        out = np.where(np.isposinf(log_s), -np.inf, out)
        return np.where(np.isneginf(log_s), 0.0, out)

    def sf(self, s):
        return np.exp(self.log_sf(np.log(s)))


@dataclass(frozen=True)
class ExactTail:
    """Tail given by a closed-form log-survival function of log s."""

    log_sf_fn: Callable
    name: str = "exact"

    def log_sf(self, log_s):
        return np.asarray(self.log_sf_fn(np.asarray(log_s, dtype=float)), dtype=float)

    def sf(self, s):
        return np.exp(self.log_sf(np.log(s)))


def inverse_gamma_tail(shape: float, scale: float = 0.5) -> ExactTail:
    """Tail of scale / Gamma(shape): P(I > s) = P(Gamma(shape) < scale / s)."""
    def fn(log_s):
        with np.errstate(over="ignore"):
            x = scale * np.exp(-log_s)
        return np.log(np.clip(gammainc(shape, x), 0.0, 1.0))

    return ExactTail(fn, f"inverse-gamma({shape}, {scale})")


class OutOfGrid(ValueError):
    pass


@dataclass(frozen=True)
class EmpiricalTail:
    """Step-function tail from a TailEstimate, optionally with a parametric wing."""

    estimate: TailEstimate
    wing: RegularVariation | LogRegular | None = None

    def log_sf(self, log_s):
        log_s = np.atleast_1d(np.asarray(log_s, dtype=float))
        th = np.log(self.estimate.thresholds)
        if np.any(log_s < th[0]):
            raise OutOfGrid("empirical tail queried below its smallest threshold")
        beyond = log_s > th[-1]
        if np.any(beyond) and self.wing is None:
            raise OutOfGrid("empirical tail queried beyond its grid without a wing")
        idx = np.clip(np.searchsorted(th, log_s, side="right") - 1, 0, th.size - 1)
        with np.errstate(divide="ignore"):
            out = np.log(self.estimate.survival[idx])
        if np.any(beyond):
            out = np.where(beyond, self.wing.log_sf(log_s), out)
        return out

    def sf(self, s):
        return np.exp(self.log_sf(np.log(s)))


TailModel = RegularVariation | LogRegular | ExactTail | EmpiricalTail

WING_R2 = 0.99


def fit_wing(estimate: TailEstimate, kind: Literal["regular", "logregular"] = "regular"
             ) -> tuple[RegularVariation | LogRegular, float]:
    """Least-squares wing on the top decile of thresholds with positive survival.

    Regular variation is fitted on log F against log s; log-regular on
    log(-log F) against log s.  Returns the model and R^2.
    """
    th = np.asarray(estimate.thresholds, dtype=float)
    sv = np.asarray(estimate.survival, dtype=float)
    k = max(3, int(math.ceil(0.1 * th.size)))
    th, sv = th[-k:], sv[-k:]
    ok = (sv > 0) & (sv < 1)
    if ok.sum() < 3:
        raise ValueError("not enough positive survival values in the top decile")
    x = np.log(th[ok])
    y = np.log(sv[ok]) if kind == "regular" else np.log(-np.log(sv[ok]))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 0.0
    if not (slope < 0 if kind == "regular" else slope > 0):
        raise ValueError("wing fit rejected: fitted tail is not decreasing")
    if kind == "regular":
        model = RegularVariation(gamma=-slope, lam=math.exp(intercept))
    elif kind == "logregular":
        model = LogRegular(lam=math.exp(intercept), beta=slope)
    else:
        raise ValueError(f"unknown wing kind {kind!r}")
    return model, r2


def with_wing(estimate: TailEstimate, kind: Literal["regular", "logregular"] = "regular"
              ) -> EmpiricalTail:
    """Empirical tail extended by a fitted wing; refuses a poor fit."""
    model, r2 = fit_wing(estimate, kind)
    if not r2 > WING_R2:
        raise ValueError(f"wing fit rejected: R^2 = {r2:.4f} <= {WING_R2}")
    return EmpiricalTail(estimate, model)


# ---------------------------------------------------------------------------
# Integral tests
# ---------------------------------------------------------------------------


def integrand_at(tail, f: TestFunction, t: float) -> float:
    """F(t / f(t)) / t."""
    if not t > 0:
        raise ValueError("t must be > 0")
    u = abs(math.log(t))
    return float(np.exp(tail.log_sf(f.log_ratio_u(u)) - math.log(t)))


@dataclass
class Verdict:
    outcome: Literal["converges", "diverges", "inconclusive"]
    level: int
    slope_diagnostics: list = field(default_factory=list)
    side_condition: str = ""
    f_increasing: bool = True

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2)


CONVERGE_RATIO = 0.95
DIVERGE_RATIO = 0.999
PERSIST = 10
MAX_LEVEL = 2
# beyond this |log u| the Jacobian and log F cancel to below double precision
LOG_U_LIMIT = 1e12


def _level_log_integrand(tail, f: TestFunction, level: int, z):
    """log of the integrand in the level-``level`` variable z (u, log u or log log u)."""
    with np.errstate(over="ignore", invalid="ignore"):
        if level == 0:
            u, lu = z, np.log(z)
            llu, jac = np.log(lu), 0.0
        elif level == 1:
            lu, llu = z, np.log(z)
            u, jac = np.exp(z), z
        else:
            llu = z
            lu = np.exp(z)
            u, jac = np.exp(lu), lu + z
        return tail.log_sf(f.log_ratio_u(u, lu, llu)) + jac


_LEVEL_START = (E_E, math.e, 1.0)


def _level_windows(level: int, k_max: int) -> int:
    if level < 2:
        return k_max
    return min(k_max, int((math.log(LOG_U_LIMIT) - _LEVEL_START[2]) / math.log(2.0)))


def window_log_integrals(tail, f: TestFunction, level: int, k_max: int = 60) -> np.ndarray:
    """log of the integral over each of ``k_max`` consecutive windows of width ln 2."""
    z0 = _LEVEL_START[level]
    k_max = _level_windows(level, k_max)
    half = math.log(2.0) / 2.0
    centres = z0 + half * (2 * np.arange(k_max) + 1)
    nodes = centres[:, None] + half * _GL_NODES[None, :]
    vals = _level_log_integrand(tail, f, level, nodes)
    vals = np.where(np.isnan(vals), -np.inf, vals)
    return logsumexp(vals + np.log(_GL_WEIGHTS)[None, :], axis=1) + math.log(half)


def _classify(tail, f: TestFunction, k_max: int) -> Verdict:
    diags = []
    for level in range(MAX_LEVEL + 1):
        lw = window_log_integrals(tail, f, level, k_max)
        k = lw.size
        last = lw[-(PERSIST + 1):]
        if np.all(np.isneginf(last)):
            return Verdict("converges", level, diags)
        with np.errstate(invalid="ignore"):
            log_r = np.diff(last)
        expo = (log_r / math.log(2.0)).tolist()
        diags.append({"level": level,
                      "windows": list(range(k - PERSIST, k)),
                      "growth_exponent": [None if not math.isfinite(x) else x for x in expo]})
        if np.any(np.isnan(log_r)):
            continue
        if np.all(log_r < math.log(CONVERGE_RATIO)):
            return Verdict("converges", level, diags)
        if np.all(log_r > math.log(DIVERGE_RATIO)):
            return Verdict("diverges", level, diags)
    return Verdict("inconclusive", MAX_LEVEL, diags)


def classify(tail, f: TestFunction, k_max: int = 60) -> Verdict:
    """Convergence of int F(t/f(t)) dt/t at f's side.

    Window contributions are computed over dyadic windows in t; if their
    ratios do not settle into the decision bands, the windows are widened
    to dyadic windows in |log t| and then in log|log t|.
    """
    v = _classify(tail, f, k_max)
    v.side_condition = f.side_condition()
    v.f_increasing = f.is_increasing()
    return v


def classify_at_zero(tail, f: TestFunction, k_max: int = 60) -> Verdict:
    if f.side != "zero":
        raise ValueError("test function is declared at infinity")
    return classify(tail, f, k_max)


def classify_at_infinity(tail, g: TestFunction, k_max: int = 60) -> Verdict:
    if g.side != "infinity":
        raise ValueError("test function is declared at zero")
    return classify(tail, g, k_max)


def bessel_de_integrand(delta: float, f: TestFunction, t: float) -> float:
    """(f(t) / sqrt t)^(delta - 2) / t for a Bessel process test function f.

    Equals the integrand F(t / f(t)^2) / t for F(s) = s^-((delta - 2)/2).
    """
    if not delta > 2:
        raise ValueError("delta must be > 2")
    if not t > 0:
        raise ValueError("t must be > 0")
    u = abs(math.log(t))
    log_f = float(f.log_f_u(u))
    return math.exp((delta - 2.0) * (log_f - 0.5 * math.log(t)) - math.log(t))


# ---------------------------------------------------------------------------
# psi and the log-regular LIL
# ---------------------------------------------------------------------------


def _inner_log(tail, target: float) -> float:
    """log inf{s : log F(s) < target}, bracketed on log s and refined by brentq."""
    if isinstance(tail, LogRegular) and tail.trivial_L:
        return (math.log(-target) - math.log(tail.lam)) / tail.beta
    if isinstance(tail, EmpiricalTail):
        lo = math.log(tail.estimate.thresholds[0])
        if float(tail.log_sf(lo)[0]) < target:
            raise OutOfGrid("|log t| below 1/F at the smallest grid point")
    else:
        lo = -1.0
        while float(np.ravel(tail.log_sf(lo))[0]) < target:
            lo -= 2.0 * abs(lo)
            if lo < -1e4:
                raise ValueError("tail never reaches the target level")
    hi = max(lo + 1.0, 1.0)
    while float(np.ravel(tail.log_sf(hi))[0]) >= target:
        hi *= 2.0
        if hi > 1e300:
            raise ValueError("tail does not decrease below the target level")
    def gap(x):
        v = float(np.ravel(tail.log_sf(x))[0])
        return (v if math.isfinite(v) else -1e300) - target

    return brentq(gap, lo, hi, xtol=1e-14 * max(1.0, abs(hi)), rtol=4 * np.finfo(float).eps)


def log_psi(tail, log_t: float) -> float:
    """log psi(t) with psi(t) = t / inf{s : 1/F(s) > |log t|}; |log t| > 1."""
    if not abs(log_t) > 1:
        raise ValueError("psi is defined here only for |log t| > 1")
    return log_t - _inner_log(tail, -math.log(abs(log_t)))


def psi(tail, t: float) -> float:
    if not t > 0:
        raise ValueError("t must be > 0")
    return math.exp(log_psi(tail, math.log(t)))


def log_rivero_scaling(phi: Callable[[float], float], log_t: float) -> float:
    """log of t phi(l)/l with l = log|log t|."""
    if not abs(log_t) > 1:
        raise ValueError("need t > e or t < 1/e")
    ell = math.log(abs(log_t))
    return log_t + math.log(phi(ell)) - math.log(ell)


def rivero_scaling(phi: Callable[[float], float], t: float) -> float:
    if not t > 0:
        raise ValueError("t must be > 0")
    return math.exp(log_rivero_scaling(phi, math.log(t)))


def log_regular_from_power(beta: float) -> LogRegular:
    """Idealised tail -log F(s) = (1 - beta) s^(1/(1-beta)) for phi(l) = l^beta."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    return LogRegular(lam=1.0 - beta, beta=1.0 / (1.0 - beta))


def lil_constant(beta: float, alpha: float = 1.0) -> float:
    """alpha^(beta/alpha) (1 - beta)^((1 - beta)/alpha)."""
    if not (0 < beta < 1 and alpha > 0):
        raise ValueError("need 0 < beta < 1 and alpha > 0")
    return alpha ** (beta / alpha) * (1.0 - beta) ** ((1.0 - beta) / alpha)


# ---------------------------------------------------------------------------
# Empirical liminf
# ---------------------------------------------------------------------------


@dataclass
class LiminfStats:
    minima: np.ndarray
    median: float
    quantiles: dict

    def as_dict(self) -> dict:
        return {"median": self.median, "quantiles": self.quantiles,
                "n_paths": int(self.minima.size)}


def geometric_grid(lo: float, hi: float, ratio: float) -> np.ndarray:
    if not (0 < lo < hi and ratio > 1):
        raise ValueError("need 0 < lo < hi and ratio > 1")
    k = int(math.floor(math.log(hi / lo) / math.log(ratio)))
    return lo * ratio ** np.arange(k + 1)


def empirical_liminf(paths: Sequence[PssMpPath], scale, side: Side, grid_ratio: float,
                     window: tuple[float, float]) -> LiminfStats:
    """Per-path minimum of X_t / scale(t) over a geometric grid inside ``window``.

    ``scale`` is a vectorised callable of t, or one callable per path.  The
    grid runs from the window edge nearest to the probed side.
    """
    _check_side(side)
    lo, hi = window
    grid = geometric_grid(lo, hi, grid_ratio)
    if side == "zero":
        grid = hi / grid_ratio ** np.arange(grid.size)
    per_path = isinstance(scale, (list, tuple))
    shared = None if per_path else np.asarray(scale(grid), dtype=float)
    minima = np.empty(len(paths))
    for i, p in enumerate(paths):
        keep = (grid >= p.times[0]) & (grid <= p.horizon)
        if not keep.any():
            raise ValueError(f"path {i}: empty certified window")
        ts = grid[keep]
        sc = np.asarray(scale[i](ts), dtype=float) if per_path else shared[keep]
        minima[i] = float(np.min(p.value_at(ts) / sc))
    qs = {str(q): float(np.quantile(minima, q)) for q in (0.1, 0.25, 0.5, 0.75, 0.9)}
    return LiminfStats(minima, float(np.median(minima)), qs)
