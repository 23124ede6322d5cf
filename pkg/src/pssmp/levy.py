"""Parametric Lévy processes: characteristics, simulation and first passage.

A :class:`LevyTriplet` is drift + Brownian part + one jump component from a
small menu (compound Poisson with a parametric law, or a one-sided
tempered-stable component).  Paths are generated in fixed-length time
blocks from a single generator, so two calls with the same triplet, step
and seed see the same path regardless of where they stop reading it.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Union

import numpy as np

from .rng import SeedLike, make_rng

BLOCK_STEPS = 2048
MAX_STABLE_TRIALS = 10**6


# ---------------------------------------------------------------------------
# Jump laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Exponential:
    """Positive jumps with density rate * exp(-rate * x)."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"Exponential rate must be > 0, got {self.rate}")

    def mean(self) -> float:
        return 1.0 / self.rate

    def log_mgf(self, u: float) -> float:
        return math.log(self.rate / (self.rate - u)) if u < self.rate else math.inf

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.exponential(1.0 / self.rate, n)

    def mirrored(self) -> "NegExponential":
        return NegExponential(self.rate)


@dataclass(frozen=True)
class NegExponential:
    """Negative jumps -E with E exponential of the given rate."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"NegExponential rate must be > 0, got {self.rate}")

    def mean(self) -> float:
        return -1.0 / self.rate

    def log_mgf(self, u: float) -> float:
        return math.log(self.rate / (self.rate + u)) if u > -self.rate else math.inf

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return -rng.exponential(1.0 / self.rate, n)

    def mirrored(self) -> Exponential:
        return Exponential(self.rate)


@dataclass(frozen=True)
class PointMass:
    atom: float

    def __post_init__(self):
        if self.atom == 0:
            raise ValueError("PointMass atom must be non-zero")

    def mean(self) -> float:
        return self.atom

    def log_mgf(self, u: float) -> float:
        return u * self.atom

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.full(n, float(self.atom))

    def mirrored(self) -> "PointMass":
        return PointMass(-self.atom)


@dataclass(frozen=True)
class TwoSidedExponential:
    """Up-jump Exp(up_rate) with probability p_up, else down-jump -Exp(down_rate).

    ``p_down`` defaults to 1 - p_up; it is stored so that mirroring swaps the
    two probabilities exactly.
    """

    up_rate: float
    down_rate: float
    p_up: float
    p_down: float | None = None

    def __post_init__(self):
        if not (self.up_rate > 0 and self.down_rate > 0):
            raise ValueError("TwoSidedExponential rates must be > 0")
        if not 0.0 < self.p_up < 1.0:
            raise ValueError(f"p_up must lie in (0, 1), got {self.p_up}")
        if self.p_down is None:
            object.__setattr__(self, "p_down", 1.0 - self.p_up)
        elif abs(self.p_up + self.p_down - 1.0) > 1e-12:
            raise ValueError("p_up and p_down must sum to 1")

    def mean(self) -> float:
        return self.p_up / self.up_rate - self.p_down / self.down_rate

    def log_mgf(self, u: float) -> float:
        if not -self.down_rate < u < self.up_rate:
            return math.inf
        m = (self.p_up * self.up_rate / (self.up_rate - u)
             + self.p_down * self.down_rate / (self.down_rate + u))
        return math.log(m)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        up = rng.uniform(size=n) < self.p_up
        e = rng.exponential(size=n)
        return np.where(up, e / self.up_rate, -e / self.down_rate)

    def mirrored(self) -> "TwoSidedExponential":
        return TwoSidedExponential(self.down_rate, self.up_rate, self.p_down, self.p_up)


JumpLaw = Union[Exponential, NegExponential, PointMass, TwoSidedExponential]


# ---------------------------------------------------------------------------
# Jump components
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompoundPoisson:
    rate: float
    law: JumpLaw

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"compound Poisson rate must be > 0, got {self.rate}")

    def mean(self) -> float:
        return self.rate * self.law.mean()

    def log_mgf(self, u: float) -> float:
        lm = self.law.log_mgf(u)
        return math.inf if math.isinf(lm) else self.rate * math.expm1(lm)

    def mirrored(self) -> "CompoundPoisson":
        return CompoundPoisson(self.rate, self.law.mirrored())


@dataclass(frozen=True)
class TemperedStable:
    """Subordinator with Laplace exponent scale * ((lam + theta)^beta - theta^beta).

    ``theta = 0`` is the untempered stable subordinator; it can be
    simulated but has no finite mean.
    """

    beta: float
    theta: float
    scale: float

    sign = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.theta < 0 or not self.scale > 0:
            raise ValueError("need theta >= 0 and scale > 0")

    def laplace_exponent(self, lam: float) -> float:
        """phi(lam) = -log E exp(-lam S_1) of the positive component S."""
        if lam < -self.theta:
            return -math.inf
        return self.scale * ((lam + self.theta) ** self.beta - self.theta ** self.beta)

    def mean(self) -> float:
        if self.theta == 0:
            raise ValueError("mean undefined: untempered stable component has infinite mean")
        return self.sign * self.scale * self.beta * self.theta ** (self.beta - 1.0)

    def log_mgf(self, u: float) -> float:
        # E exp(u * sign * S) = exp(-phi(-sign * u))
        phi = self.laplace_exponent(-self.sign * u)
        return math.inf if phi == -math.inf else -phi

    def mirrored(self) -> "NegatedTemperedStable":
        return NegatedTemperedStable(self.beta, self.theta, self.scale)


@dataclass(frozen=True)
class NegatedTemperedStable(TemperedStable):
    """Negative of a tempered-stable subordinator (all jumps negative)."""

    sign = -1.0

    def mirrored(self) -> TemperedStable:
        return TemperedStable(self.beta, self.theta, self.scale)


JumpSpec = Union[None, CompoundPoisson, TemperedStable, NegatedTemperedStable]


# ---------------------------------------------------------------------------
# Triplet and path types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevyTriplet:
    drift: float = 0.0
    gaussian_var: float = 0.0
    jumps: JumpSpec = None
    kill_rate: float = 0.0

    def __post_init__(self):
        if self.gaussian_var < 0:
            raise ValueError(f"gaussian_var must be >= 0, got {self.gaussian_var}")
        if self.kill_rate < 0:
            raise ValueError(f"kill_rate must be >= 0, got {self.kill_rate}")

    def fingerprint(self) -> str:
        return hashlib.sha256(repr(self).encode()).hexdigest()[:16]


def brownian(drift: float, gaussian_var: float) -> LevyTriplet:
    return LevyTriplet(drift=drift, gaussian_var=gaussian_var)


def bessel_squared_triplet(delta: float) -> LevyTriplet:
    """Lamperti exponent of the squared Bessel process of dimension ``delta`` (index 1)."""
    return LevyTriplet(drift=delta - 2.0, gaussian_var=4.0)


@dataclass(eq=False)
class LevyPath:
    """Grid path of a Lévy process, read as a right-continuous step function."""

    times: np.ndarray
    values: np.ndarray
    jump_marks: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    step_nominal: float = 1.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.jump_marks = np.asarray(self.jump_marks, dtype=np.int64)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if self.times.size == 0 or self.times[0] != 0.0:
            raise ValueError("a path starts at time 0")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def value_at(self, t: float) -> float:
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        if i < 0:
            raise ValueError("t before path start")
        return float(self.values[i])

    def to_csv(self, fh) -> None:
        marks = np.zeros(self.times.size, dtype=bool)
        marks[self.jump_marks] = True
        w = csv.writer(fh)
        w.writerow(["t", "value", "is_jump"])
        for t, v, j in zip(self.times, self.values, marks):
            w.writerow([repr(float(t)), repr(float(v)), int(j)])


# ---------------------------------------------------------------------------
# Analytic characteristics
# ---------------------------------------------------------------------------


def mean_at_unit_time(triplet: LevyTriplet) -> float:
    """m = E(xi_1), exact from the parametric description."""
    if triplet.kill_rate > 0:
        raise ValueError("killed process: E(xi_1) is not defined")
    jumps = triplet.jumps
    return triplet.drift + (0.0 if jumps is None else jumps.mean())


def laplace_exponent(triplet: LevyTriplet, u: float) -> float:
    """kappa(u) = log E exp(u xi_1); +inf where the moment diverges."""
    k = triplet.drift * u + 0.5 * triplet.gaussian_var * u * u - triplet.kill_rate
    if triplet.jumps is not None:
        k += triplet.jumps.log_mgf(u)
    return k


def mgf_at(triplet: LevyTriplet, theta: float) -> float:
    """E exp(-theta xi_1); ``math.inf`` when the exponential moment diverges."""
    if theta == 0:
        return math.exp(-triplet.kill_rate)
    k = laplace_exponent(triplet, -theta)
    return math.inf if math.isinf(k) else math.exp(k)


@dataclass(frozen=True)
class ConditionH:
    holds: bool
    m: float
    reasons: tuple[str, ...]

    def __bool__(self) -> bool:
        return self.holds


def check_condition_H(triplet: LevyTriplet) -> ConditionH:
    """Non-lattice, finite first absolute moment and positive mean."""
    reasons: list[str] = []
    m = math.nan
    if triplet.kill_rate > 0:
        reasons.append("killed process (kill_rate > 0)")
    else:
        try:
            m = mean_at_unit_time(triplet)
        except ValueError as exc:
            reasons.append(str(exc))
        else:
            if not m > 0:
                reasons.append(f"mean E(xi_1) = {m} is not positive")
    j = triplet.jumps
    if (isinstance(j, CompoundPoisson) and isinstance(j.law, PointMass)
            and triplet.drift == 0 and triplet.gaussian_var == 0):
        reasons.append("lattice law: point-mass jumps without drift or Gaussian part")
    return ConditionH(not reasons, m, tuple(reasons))


def require_H(triplet: LevyTriplet) -> float:
    h = check_condition_H(triplet)
    if not h.holds:
        raise ValueError("condition (H) fails: " + "; ".join(h.reasons))
    return h.m


def negate(triplet: LevyTriplet) -> LevyTriplet:
    """Triplet of -xi."""
    jumps = None if triplet.jumps is None else triplet.jumps.mirrored()
    return replace(triplet, drift=-triplet.drift, jumps=jumps)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def positive_stable(beta: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Kanter's representation of S with E exp(-lam S) = exp(-lam^beta).

    For beta = 1/2 the law is Levy's, S = 1 / (2 Z^2), which is much cheaper.
    """
    if beta == 0.5:
        z = rng.standard_normal(n)
        return 0.5 / (z * z)
    u = rng.uniform(0.0, math.pi, n)
    e = rng.exponential(size=n)
    a = (np.sin(beta * u) ** (beta / (1.0 - beta)) * np.sin((1.0 - beta) * u)
         / np.sin(u) ** (1.0 / (1.0 - beta)))
    return (a / e) ** ((1.0 - beta) / beta)


def tempered_stable_increments(comp: TemperedStable, dt: np.ndarray,
                               rng: np.random.Generator) -> np.ndarray:
    """Exact increments of the tempered-stable subordinator over intervals ``dt``.

    Stable increments are accepted with probability exp(-theta * x).
    """
    dt = np.asarray(dt, dtype=float)
    scale = (comp.scale * dt) ** (1.0 / comp.beta)
    out = np.empty_like(dt)
    pending = np.arange(dt.size)
    trials = 0
    while pending.size:
        trials += 1
        if trials > MAX_STABLE_TRIALS:
            raise RuntimeError("tempered-stable rejection exceeded the trial cap")
        x = scale[pending] * positive_stable(comp.beta, pending.size, rng)
        if comp.theta > 0:
            ok = rng.uniform(size=pending.size) < np.exp(-comp.theta * x)
        else:
            ok = np.ones(pending.size, dtype=bool)
        out[pending[ok]] = x[ok]
        pending = pending[~ok]
    return out


@dataclass(eq=False)
class Block:
    times: np.ndarray
    values: np.ndarray
    is_jump: np.ndarray


def path_blocks(triplet: LevyTriplet, step: float, seed: SeedLike,
                block_steps: int = BLOCK_STEPS) -> Iterator[Block]:
    """Endless stream of path blocks.

    The first block starts with the point (0, 0); each block covers
    ``block_steps`` nominal steps, refined at compound-Poisson jump epochs.
    """
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step}")
    if triplet.kill_rate > 0:
        raise ValueError("killed processes are not simulated")
    rng = make_rng(seed)
    jumps = triplet.jumps
    sd = math.sqrt(triplet.gaussian_var)
    level = 0.0
    k = 0
    offsets = np.arange(1, block_steps + 1)
    first = True
    while True:
        t_start = k * block_steps * step
        grid = (k * block_steps + offsets) * step
        t_end = grid[-1]
        if isinstance(jumps, CompoundPoisson):
            n_j = rng.poisson(jumps.rate * (t_end - t_start))
            epochs = np.sort(rng.uniform(t_start, t_end, n_j))
            sizes = jumps.law.sample(rng, n_j)
            times = np.concatenate([grid, epochs])
            order = np.argsort(times, kind="stable")
            times = times[order]
            is_jump = order >= block_steps
            jump_inc = np.zeros(times.size)
            jump_inc[is_jump] = sizes[order[is_jump] - block_steps]
        else:
            times = grid
            is_jump = np.zeros(block_steps, dtype=bool)
            jump_inc = None
        dt = np.diff(times, prepend=t_start)
        inc = np.zeros(times.size)
        if sd > 0:
            inc += sd * np.sqrt(dt) * rng.standard_normal(times.size)
        if isinstance(jumps, TemperedStable):
            inc += jumps.sign * tempered_stable_increments(jumps, dt, rng)
        if jump_inc is not None:
            inc += jump_inc
        stoch = level + np.cumsum(inc)
        level = float(stoch[-1])
        values = triplet.drift * times + stoch
        if first:
            times = np.concatenate([[0.0], times])
            values = np.concatenate([[0.0], values])
            is_jump = np.concatenate([[False], is_jump])
            first = False
        yield Block(times, values, is_jump)
        k += 1


def simulate_path(triplet: LevyTriplet, horizon: float, step: float,
                  seed: SeedLike) -> LevyPath:
    """Path on [0, horizon] with nominal spacing ``step``."""
    if not horizon > 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    ts, vs, js = [], [], []
    cut = horizon + 1e-9 * step
    for b in path_blocks(triplet, step, seed):
        keep = b.times <= cut
        ts.append(b.times[keep])
        vs.append(b.values[keep])
        js.append(b.is_jump[keep])
        if b.times[-1] >= cut:
            break
    return join_blocks(ts, vs, js, step)


def join_blocks(ts, vs, js, step) -> LevyPath:
    times = np.concatenate(ts)
    is_jump = np.concatenate(js)
    return LevyPath(times, np.concatenate(vs), np.flatnonzero(is_jump), step)


@dataclass(frozen=True)
class Passage:
    time: float
    overshoot: float
    index: int


def first_passage_below(path: LevyPath, level: float) -> Passage | None:
    """First grid/jump point with value <= level; None if not reached."""
    if not level < 0:
        raise ValueError(f"level must be < 0, got {level}")
    hit = np.flatnonzero(path.values <= level)
    if hit.size == 0:
        return None
    i = int(hit[0])
    return Passage(float(path.times[i]), float(path.values[i] - level), i)
