"""Last passages, time reversal and the overshoot decomposition of U.

Notation: xi drives X^(0) and satisfies (H); the reversed process is the
Lamperti image of xi_hat = -xi started at a random level Gamma <= x_1.
Passages of xi_hat below a level happen either by a jump or by creeping;
creeping passages have zero overshoot, which on a grid has to be decided
from the path structure rather than read off the discretised value.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import lambertw

from . import expfun, levy
from .lamperti import PssMpPath, simulate_from_zero_until
from .levy import LevyPath, LevyTriplet, NegatedTemperedStable
from .rng import SeedLike, child_rng, make_rng, master_int
from .stats import KSResult, ks_one_sided, ks_two_sample

MAX_BLOCKS = 20_000
UNRESOLVED_LIMIT = 0.01


# ---------------------------------------------------------------------------
# Last passage and reversal
# ---------------------------------------------------------------------------


def is_certified(path: PssMpPath, y: float) -> bool:
    """Terminal value >= 10 y and the last 10% of the clock spent above 2 y."""
    if path.values[-1] < 10.0 * y:
        return False
    t0, t1 = path.times[0], path.times[-1]
    tail = path.times >= t0 + 0.9 * (t1 - t0)
    return bool(np.all(path.values[tail] > 2.0 * y))


def bridge_cross_prob(a, b, var_dt):
    """P(a Brownian bridge from a > 0 to b > 0 with variance var_dt dips below 0)."""
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        p = np.exp(-2.0 * a * b / var_dt)
    return np.where((a > 0) & (b > 0), p, 1.0)


def last_passage(path: PssMpPath, y: float, *, gaussian_var: float = 0.0,
                 rng: np.random.Generator | None = None) -> float | None:
    """U(y) = sup{t : X_t <= y} on the grid, or None when not certified.

    The supremum of a step path is the right end of the last grid interval
    with value <= y.  A path that never visits (0, y] gives 0.  When the
    driving process has a Gaussian part (``gaussian_var`` > 0, with ``rng``)
    later intervals are also tested for a bridge excursion below y, which
    removes the O(sqrt(step)) bias of grid monitoring.
    """
    if not y > 0:
        raise ValueError(f"y must be > 0, got {y}")
    below = np.flatnonzero(path.values <= y)
    if below.size == 0:
        return 0.0
    if not is_certified(path, y):
        return None
    last = int(below[-1])
    if gaussian_var > 0 and rng is not None:
        v = path.values[last + 1:]
        a = np.log(v[:-1] / y)
        b = np.log(v[1:] / y)
        ds = np.diff(path.times[last + 1:]) * v[:-1] ** (-path.alpha)
        p = bridge_cross_prob(a, b, gaussian_var * ds)
        hit = np.flatnonzero(rng.uniform(size=p.size) < p)
        if hit.size:
            last = last + 1 + int(hit[-1])
    return float(path.times[last + 1])


def reverse_path(path: PssMpPath, at: float) -> PssMpPath:
    """Path t -> X_{(at - t)-} on [0, at], ending at the original start value."""
    if not 0 < at <= path.horizon:
        raise ValueError(f"need 0 < at <= horizon, got {at}")
    idx = int(np.searchsorted(path.times, at, side="left"))
    t = path.times[:idx]
    v = path.values[:idx]
    times = np.concatenate([[0.0], at - t[:0:-1], [at - t[0]]])
    values = np.concatenate([[v[-1]], v[-2::-1], [v[0]]]) if idx > 1 else np.array([v[0], v[0]])
    marks = path.jump_marks[(path.jump_marks >= 1) & (path.jump_marks < idx)]
    return PssMpPath(times, values, float(values[0]), path.alpha, math.inf,
                     np.sort(idx - marks))


# ---------------------------------------------------------------------------
# Passages of xi_hat with creep-aware overshoot
# ---------------------------------------------------------------------------


def _grid_overshoot_is_real(triplet_hat: LevyTriplet) -> bool:
    """True when downward jumps are too dense to mark: every step may jump across."""
    return isinstance(triplet_hat.jumps, NegatedTemperedStable)


@dataclass(eq=False)
class _Crossing:
    path: LevyPath
    overshoot: float
    by_jump: bool


def run_to_passage(triplet_hat: LevyTriplet, level: float, step: float, seed: SeedLike,
                   max_blocks: int = MAX_BLOCKS) -> _Crossing:
    """Path of xi_hat up to and including its first passage at or below ``level``.

    The overshoot is the grid value minus the level for jump crossings and 0
    for creeping ones (a crossing at an unmarked grid point of a process
    without dense downward jumps).  With a Gaussian part, each interval is
    also tested for a bridge crossing; the path is then cut at the interval's
    right end and the crossing counts as creeping.
    """
    if not level < 0:
        raise ValueError(f"level must be < 0, got {level}")
    rng = make_rng(seed)
    dense = _grid_overshoot_is_real(triplet_hat)
    bridge = triplet_hat.gaussian_var > 0 and not dense
    ts, vs, js = [], [], []
    prev_t = prev_v = None
    for nb, b in enumerate(levy.path_blocks(triplet_hat, step, rng)):
        if nb >= max_blocks:
            raise RuntimeError("passage not reached within the block budget")
        t, v = b.times, b.values
        hit = np.flatnonzero(v <= level)
        grid_i = int(hit[0]) if hit.size else None
        bridge_i = None
        if bridge:
            lt = t if prev_t is None else np.concatenate([[prev_t], t])
            lv = v if prev_v is None else np.concatenate([[prev_v], v])
            p = bridge_cross_prob(lv[:-1] - level, lv[1:] - level,
                                  triplet_hat.gaussian_var * np.diff(lt))
            cross = np.flatnonzero(rng.uniform(size=p.size) < p)
            if cross.size:
                # interval k ends at block index k (k+1 when the block has its own start point)
                bridge_i = int(cross[0]) + (1 if prev_t is None else 0)
        if grid_i is None and bridge_i is None:
            ts.append(t), vs.append(v), js.append(b.is_jump)
            prev_t, prev_v = float(t[-1]), float(v[-1])
            continue
        if bridge_i is not None and (grid_i is None or bridge_i < grid_i):
            i, creep = bridge_i, True
        else:
            i, creep = grid_i, False
        ts.append(t[:i + 1]), vs.append(v[:i + 1]), js.append(b.is_jump[:i + 1])
        before = float(v[i - 1]) if i > 0 else prev_v
        marked = bool(b.is_jump[i]) and before > level
        if not creep and (marked or dense):
            over, by_jump = float(v[i] - level), True
        else:
            over, by_jump = 0.0, False
        return _Crossing(levy.join_blocks(ts, vs, js, step), over, by_jump)


# ---------------------------------------------------------------------------
# The law of Gamma
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaSample:
    ratio: float
    depth_used: float

    def __post_init__(self):
        if not 0 < self.ratio <= 1:
            raise ValueError(f"ratio must lie in (0, 1], got {self.ratio}")


def default_depth(triplet: LevyTriplet) -> float:
    """20 / |E xi_hat_1|, deep enough for the overshoot to be stationary."""
    return 20.0 / levy.require_H(triplet)


def sample_gamma(triplet: LevyTriplet, depth: float, seed: SeedLike,
                 step: float = 1e-3) -> GammaSample:
    """Gamma / x_1 as exp of the overshoot of xi_hat below -depth."""
    levy.require_H(triplet)
    if not depth > 0:
        raise ValueError("depth must be > 0")
    c = run_to_passage(levy.negate(triplet), -depth, step, seed)
    return GammaSample(math.exp(c.overshoot), depth)


def sample_gamma_many(triplet: LevyTriplet, depth: float, n: int, seed: int,
                      step: float = 1e-3, *, salt: int = 0) -> np.ndarray:
    master = master_int(seed)
    return np.array([sample_gamma(triplet, depth, child_rng(master, i, salt=salt), step).ratio
                     for i in range(n)])


def gamma_oracle_exponential(mu: float, n: int, seed: SeedLike) -> np.ndarray:
    """exp(-U Z) with U uniform and Z size-biased Exponential(mu), Z by inversion.

    P(Z > u) = (1 + mu u) e^{-mu u}; solving for u uses the lower real branch
    of the Lambert W function.
    """
    if not mu > 0:
        raise ValueError(f"mu must be > 0, got {mu}")
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    v = rng.uniform(size=n)
    u = rng.uniform(size=n)
    w = -lambertw(-v / math.e, k=-1).real
    z = (w - 1.0) / mu
    return np.exp(-u * z)


# ---------------------------------------------------------------------------
# Decomposition of U along decreasing levels
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Decomposition:
    levels: np.ndarray
    gamma_seq: np.ndarray
    segment_durations: np.ndarray
    tail_duration: float
    u_values: np.ndarray
    segments: list = field(default_factory=list)

    def tail_sums(self) -> np.ndarray:
        """U(x_n) recomputed from the pieces in the order used at construction."""
        u = np.empty(self.levels.size)
        acc = self.tail_duration
        u[-1] = acc
        for n in range(self.levels.size - 2, -1, -1):
            acc = acc + self.segment_durations[n]
            u[n] = acc
        return u

    def to_csv(self, fh) -> None:
        w = csv.writer(fh)
        w.writerow(["n", "x_n", "gamma_n", "H_n", "U_n"])
        h = list(self.segment_durations) + [self.tail_duration]
        for n in range(self.levels.size):
            w.writerow([n + 1, repr(float(self.levels[n])), repr(float(self.gamma_seq[n])),
                        repr(float(h[n])), repr(float(self.u_values[n]))])


def build_decomposition(triplet: LevyTriplet, levels: Sequence[float], gamma0: GammaSample,
                        seed: SeedLike, *, step: float = 1e-3,
                        tol: float = 1e-4) -> Decomposition:
    """Run Gamma_{n+1} = Gamma_n exp(xi_hat^(n) at its passage below log(x_{n+1}/Gamma_n)).

    Segment n uses its own child stream; the last level contributes
    Gamma_N I(xi_hat^(N)) as the tail duration.
    """
    levy.require_H(triplet)
    x = np.asarray(levels, dtype=float)
    if x.ndim != 1 or x.size < 1 or np.any(x <= 0) or np.any(np.diff(x) >= 0):
        raise ValueError("levels must be strictly decreasing and positive")
    hat = levy.negate(triplet)
    seq = np.random.SeedSequence(master_int(seed)) if not isinstance(seed, np.random.SeedSequence) else seed
    streams = seq.spawn(x.size)
    gam = np.empty(x.size)
    gam[0] = x[0] * gamma0.ratio
    dur = np.zeros(x.size - 1)
    segs: list[LevyPath | None] = []
    for n in range(x.size - 1):
        lvl = math.log(x[n + 1] / gam[n])
        if lvl >= 0:
            segs.append(None)
            gam[n + 1] = gam[n]
            continue
        c = run_to_passage(hat, lvl, step, np.random.default_rng(streams[n]))
        cum = expfun.cumulative_exp_integral(c.path)
        dur[n] = gam[n] * cum[-1]
        end = lvl + c.overshoot
        gam[n + 1] = x[n + 1] if c.overshoot == 0.0 else gam[n] * math.exp(end)
        segs.append(c.path)
    tail = gam[-1] * expfun.sample_I(hat, tol, step, np.random.default_rng(streams[-1])).value
    d = Decomposition(x, gam, dur, float(tail), np.empty(0), segs)
    d.u_values = d.tail_sums()
    return d


def build_decompositions(triplet: LevyTriplet, levels: Sequence[float], n_rep: int,
                         seed: int, *, depth: float | None = None, step: float = 1e-3,
                         tol: float = 1e-4) -> list[Decomposition]:
    """Independent replicates, each with its own Gamma drawn by ``sample_gamma``."""
    depth = default_depth(triplet) if depth is None else depth
    master = master_int(seed)
    out = []
    for r in range(n_rep):
        g = sample_gamma(triplet, depth, child_rng(master, r, salt=1), step)
        ss = np.random.SeedSequence(master, spawn_key=(2, r))
        out.append(build_decomposition(triplet, levels, g, ss, step=step, tol=tol))
    return out


@dataclass
class BoundsReport:
    lower_checked: int
    lower_violations: list
    vacuous: list
    upper: list
    passed: bool

    def as_dict(self) -> dict:
        return {"lower_checked": self.lower_checked,
                "lower_violations": self.lower_violations,
                "vacuous": self.vacuous,
                "upper": self.upper,
                "passed": self.passed}


def _lower_bound(d: Decomposition, n: int, z: float) -> float:
    if d.gamma_seq[n] < z:
        return 0.0
    seg = d.segments[n]
    if seg is None:
        return 0.0
    lvl = math.log(d.levels[n + 1] / z)
    hit = np.flatnonzero(seg.values <= lvl)
    i = int(hit[0]) if hit.size else seg.values.size - 1
    return z * float(expfun.cumulative_exp_integral(seg)[i])


def check_bounds(decomps: Decomposition | Sequence[Decomposition], z_choices: Sequence[float],
                 *, increasing: bool = False, i_samples=None,
                 alpha: float = 0.01) -> BoundsReport:
    """Pathwise lower bound and distributional upper bound on U(x_n).

    ``z_choices`` has one entry per level, indexed along the levels in the
    stated order (ascending when ``increasing``).  Entries outside the
    window between the level and its lower neighbour are reported as
    vacuous.  The upper bound is tested only when ``i_samples`` (draws of
    I(xi_hat)) is given: U(x_n) against x_n I by one-sided KS.
    """
    if isinstance(decomps, Decomposition):
        decomps = [decomps]
    nlev = decomps[0].levels.size
    z = np.asarray(z_choices, dtype=float)
    if z.size != nlev:
        raise ValueError("need one z per level")
    if increasing:
        z = z[::-1]
    x = decomps[0].levels
    vacuous, active = [], []
    for n in range(nlev):
        if n == nlev - 1 or not (x[n + 1] < z[n] < x[n]):
            vacuous.append(nlev - 1 - n if increasing else n)
        else:
            active.append(n)
    violations = []
    checked = 0
    for r, d in enumerate(decomps):
        for n in active:
            lb = _lower_bound(d, n, z[n])
            checked += 1
            if lb > d.u_values[n] * (1 + 1e-12):
                violations.append({"replicate": r, "level": n, "lower": lb,
                                   "U": float(d.u_values[n])})
    upper = []
    ok = not violations
    if i_samples is not None:
        for n in range(nlev):
            u = np.array([d.u_values[n] for d in decomps])
            one = ks_one_sided(u, x[n] * np.asarray(i_samples))
            two = ks_two_sample(u, x[n] * np.asarray(i_samples))
            upper.append({"level": float(x[n]), "one_sided_p": one.p_value,
                          "two_sided_p": two.p_value})
            ok &= one.passed(alpha)
    return BoundsReport(checked, violations, sorted(vacuous), upper, bool(ok))


# ---------------------------------------------------------------------------
# The identity U(x) = (x/x1) Gamma I
# ---------------------------------------------------------------------------


@dataclass
class LastPassageSamples:
    values: np.ndarray
    n_unresolved: int
    n_zero: int


def last_passage_samples(triplet: LevyTriplet, y: float, n: int, seed: int, *,
                         x_small: float = 1e-3, step: float = 1e-3,
                         salt: int = 0) -> LastPassageSamples:
    """U(y) read from X^(0)-proxies, each run well past 10 y."""
    levy.require_H(triplet)
    master = master_int(seed)
    vals, unresolved = [], 0
    for i in range(n):
        p = simulate_from_zero_until(triplet, x_small, 20.0 * y, step,
                                     child_rng(master, i, salt=salt), extend=1.5)
        u = last_passage(p, y, gaussian_var=triplet.gaussian_var,
                         rng=child_rng(master, i, salt=salt + 1000))
        if u is None:
            unresolved += 1
        else:
            vals.append(u)
    vals = np.array(vals)
    return LastPassageSamples(vals, unresolved, int(np.sum(vals == 0.0)))


@dataclass
class IdentityReport:
    ks: KSResult
    n_used: int
    n_unresolved: int
    passed: bool

    def as_dict(self) -> dict:
        return {**self.ks.as_dict(), "n_used": self.n_used,
                "n_unresolved": self.n_unresolved, "passed": self.passed}


def identity_right_side(triplet: LevyTriplet, x: float, x1: float, n: int, seed: int, *,
                        depth: float | None = None, step: float = 1e-3,
                        tol: float = 1e-4) -> np.ndarray:
    """Draws of (x/x1) Gamma I with Gamma and I independent."""
    depth = default_depth(triplet) if depth is None else depth
    ratio = sample_gamma_many(triplet, depth, n, seed, step, salt=11)
    i = expfun.sample_I_many(levy.negate(triplet), n, tol, step, seed, salt=12)
    return (x / x1) * (x1 * ratio) * i


def last_passage_identity_check(triplet: LevyTriplet, x: float, x1: float, n: int,
                                seed: int, *, x_small: float = 1e-3, step: float = 1e-3,
                                tol: float = 1e-4, depth: float | None = None,
                                alpha: float = 0.01) -> IdentityReport:
    if not 0 < x <= x1:
        raise ValueError("need 0 < x <= x1")
    left = last_passage_samples(triplet, x, n, seed, x_small=x_small, step=step, salt=10)
    right = identity_right_side(triplet, x, x1, n, seed, depth=depth, step=step, tol=tol)
    ks = ks_two_sample(left.values, right)
    ok = ks.passed(alpha) and left.n_unresolved <= UNRESOLVED_LIMIT * n
    return IdentityReport(ks, left.values.size, left.n_unresolved, bool(ok))
