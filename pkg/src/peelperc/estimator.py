"""Monte Carlo harness: survival curves, threshold localization, growth exponents
and goodness-of-fit of the event sampler.

Every chain index ``c`` draws from ``chain_rng(seed, c)`` whatever the value
of q, the policy or the horizon. Runs at different q therefore share their
random numbers, so survival is monotone in q chain by chain. Pessimistic
and optimistic runs stay coupled until the first policy-resolved branch.

Survival at a horizon N means: not absorbed by step N and no policy-resolved
branch in ``(quiet_after, N]`` (see :meth:`ExplorationOutcome.alive_at`).
For the pessimistic policy this is plain survival.
"""

from __future__ import annotations

import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.stats import binom, binomtest

from .errors import BudgetExhausted, DomainError
from .peeling import chain_rng, event_from_code, event_pmf, sample_event_codes, simulate_peeling
from .percolation import Kind, Policy, _as_kind, _as_policy, run_exploration

log = logging.getLogger(__name__)

DEFAULT_HORIZON = 20_000
# bond-quad chains need q < 1; this stands in for q = 1 in level baselines
Q_MAX_QUAD = 0.999


# ---------------------------------------------------------------------------
# helpers


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise DomainError("trials must be at least 1")
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


def horizon_schedule(max_steps: int) -> tuple:
    """Horizons ``(N/20, N/10, N/2, N)`` used by the threshold estimator."""
    if max_steps < 20:
        raise DomainError("max_steps must be at least 20")
    n = int(max_steps)
    return (n // 20, n // 10, n // 2, n)


def default_workers() -> int:
    env = os.environ.get("PEEL_WORKERS")
    if env:
        return max(1, int(env))
    return 1


def _survivors_chunk(args) -> np.ndarray:
    kind, q, policy, horizons, seed, start, stop, quiet_after = args
    out = np.zeros(len(horizons), dtype=np.int64)
    top = horizons[-1]
    for c in range(start, stop):
        o = run_exploration(kind, q, top, policy=policy, rng=chain_rng(seed, c), quiet_after=quiet_after)
        for i, h in enumerate(horizons):
            out[i] += o.alive_at(h)
    return out


def survivor_counts(kind, q: float, horizons, chains: int, policy=Policy.pessimistic, seed: int = 0,
                    quiet_after: int | None = None, workers: int | None = None) -> np.ndarray:
    """Number of chains alive at each horizon, from one run per chain.

    Chains are split into contiguous blocks and the block counts are summed,
    so the result does not depend on ``workers``.
    """
    kind, policy = _as_kind(kind), _as_policy(policy)
    horizons = tuple(sorted(int(h) for h in horizons))
    if chains < 1:
        raise DomainError("chains must be at least 1")
    if quiet_after is None:
        quiet_after = horizons[0] // 2
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1:
        return _survivors_chunk((kind, q, policy, horizons, seed, 0, chains, quiet_after))
    bounds = np.linspace(0, chains, workers + 1).astype(int)
    jobs = [(kind, q, policy, horizons, seed, int(a), int(b), quiet_after)
            for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return sum(pool.map(_survivors_chunk, jobs))


# ---------------------------------------------------------------------------
# survival curves


@dataclass(frozen=True)
class SurvivalPoint:
    q: float
    chains: int
    survivors: int
    fraction: float
    ci_low: float
    ci_high: float
    smoothed: float


@dataclass
class SurvivalReport:
    """Survival fractions over a grid of q at a fixed horizon.

    ``grid`` holds raw fractions, Wilson intervals and the isotonic
    (non-decreasing in q) fit. ``horizon_counts[i, h]`` is the survivor count
    at ``q_grid[i]`` and ``horizons[h]``; the last horizon is ``horizon``.
    """

    kind: Kind
    policy: Policy
    horizon: int
    seed: int
    grid: list
    horizons: tuple = ()
    horizon_counts: np.ndarray = field(default=None, repr=False)
    quiet_after: int = 0

    @property
    def q_values(self) -> np.ndarray:
        return np.array([pt.q for pt in self.grid])

    @property
    def fractions(self) -> np.ndarray:
        return np.array([pt.fraction for pt in self.grid])

    def rows(self) -> list:
        """Plot-ready rows ``(q, chains, survivors, fraction, ci_lo, ci_hi, smoothed)``."""
        return [(pt.q, pt.chains, pt.survivors, pt.fraction, pt.ci_low, pt.ci_high, pt.smoothed)
                for pt in self.grid]


def _check_grid(kind, q_grid):
    qs = [float(q) for q in q_grid]
    if not qs:
        raise DomainError("q grid must be nonempty")
    for q in qs:
        if not 0.0 <= q <= 1.0:
            raise DomainError(f"q={q} outside [0, 1]")
        if kind is Kind.bond_quad and q >= 1.0:
            raise DomainError("bond-quad needs q < 1")
    return qs


def survival_curve(kind, q_grid, max_steps: int = DEFAULT_HORIZON, chains: int = 1000,
                   policy=Policy.pessimistic, seed: int = 0, horizons=None,
                   quiet_after: int | None = None, workers: int | None = None,
                   time_budget: float | None = None) -> SurvivalReport:
    """Survival fraction at ``max_steps`` for each q in ``q_grid``.

    ``horizons`` adds intermediate horizons to ``horizon_counts`` without
    extra runs. Exceeding ``time_budget`` seconds raises
    :class:`BudgetExhausted` carrying the points finished so far.
    """
    kind, policy = _as_kind(kind), _as_policy(policy)
    qs = _check_grid(kind, q_grid)
    if chains < 1:
        raise DomainError("chains must be at least 1")
    if max_steps < 1:
        raise DomainError("max_steps must be at least 1")
    hz = tuple(sorted({int(h) for h in (horizons or ())} | {int(max_steps)}))
    if hz[0] < 1 or hz[-1] != int(max_steps):
        raise DomainError("horizons must lie in [1, max_steps]")
    if quiet_after is None:
        quiet_after = hz[0] // 2 if len(hz) > 1 else 0
    t0 = time.monotonic()
    counts = []
    for q in qs:
        counts.append(survivor_counts(kind, q, hz, chains, policy, seed, quiet_after, workers))
        if time_budget is not None and time.monotonic() - t0 > time_budget:
            partial = _survival_report(kind, policy, max_steps, seed, qs[:len(counts)], chains,
                                       counts, hz, quiet_after)
            raise BudgetExhausted(f"time budget of {time_budget}s exhausted after {len(counts)} q points",
                                  partial)
    return _survival_report(kind, policy, max_steps, seed, qs, chains, counts, hz, quiet_after)


def _survival_report(kind, policy, max_steps, seed, qs, chains, counts, hz, quiet_after):
    counts = np.array(counts, dtype=np.int64).reshape(len(qs), len(hz))
    final = counts[:, -1]
    raw = final / chains
    order = np.argsort(qs, kind="stable")
    smooth = np.empty(len(qs))
    smooth[order] = isotonic_regression(raw[order], weights=np.full(len(qs), float(chains))).x
    grid = []
    for q, s, f, m in zip(qs, final, raw, smooth):
        lo, hi = wilson_interval(int(s), chains)
        grid.append(SurvivalPoint(q, chains, int(s), float(f), lo, hi, float(m)))
    return SurvivalReport(kind, policy, int(max_steps), int(seed), grid, hz, counts, int(quiet_after))


# ---------------------------------------------------------------------------
# threshold localization


def scaling_statistic(counts) -> float:
    """Change of the log survival ratio between early and late horizon pairs.

    With survivor counts ``S1..S4`` at ``N/20, N/10, N/2, N`` this is
    ``ln(S4/S3) - ln(S2/S1)``. Both pairs span the same log-ratio of time,
    so a power-law decay gives 0; subcritical decay (which eventually turns
    exponential) gives a negative value and supercritical survival (which
    levels off) a positive one. Returns ``-inf`` when ``S3`` or ``S1`` is 0.
    """
    s1, s2, s3, s4 = (float(c) for c in counts)
    if s1 <= 0 or s3 <= 0:
        return -math.inf
    if s4 <= 0:
        return -math.inf
    return math.log(s4 / s3) - math.log(s2 / s1)


@dataclass(frozen=True)
class Evaluation:
    policy: Policy
    q: float
    counts: tuple
    statistic: float
    supercritical: bool


@dataclass
class PolicyEstimate:
    policy: Policy
    estimate: float
    low: float
    high: float
    converged: bool
    level_crossings: dict = field(default_factory=dict)


@dataclass
class ThresholdEstimate:
    """Threshold location with a bracket covering every policy run.

    ``policy_gap`` is the spread of the per-policy point estimates (0 for
    site). ``level_crossings`` maps ``policy -> {horizon: q}`` where the
    survival fraction crosses ``level`` times the ``q = 1`` baseline; it is
    reported for horizon sensitivity whatever ``method`` was used.
    """

    kind: Kind
    estimate: float
    bracket: tuple
    horizons: tuple
    policy_gap: float
    method: str
    per_policy: dict
    warning: bool = False
    evaluations: list = field(default_factory=list, repr=False)
    chains: int = 0
    seed: int = 0
    tol: float = 0.0


def _level_crossing(qs, fracs, target):
    """Smallest q where the isotonic fit of ``fracs`` reaches ``target`` (linear interpolation)."""
    order = np.argsort(qs)
    q = np.asarray(qs, dtype=float)[order]
    f = isotonic_regression(np.asarray(fracs, dtype=float)[order]).x
    idx = np.nonzero(f >= target)[0]
    if len(idx) == 0:
        return math.nan
    i = idx[0]
    if i == 0:
        return float(q[0])
    f0, f1 = f[i - 1], f[i]
    return float(q[i - 1] + (q[i] - q[i - 1]) * (target - f0) / (f1 - f0))


def _estimate_one_policy(kind, policy, tol, hz, chains, seed, method, level, grid_step, max_evals,
                         quiet_after, workers, deadline, evals):
    q_top = Q_MAX_QUAD if kind is Kind.bond_quad else 1.0
    cache = {}

    def counts_at(q):
        q = round(float(q), 12)
        if q not in cache:
            if deadline is not None and time.monotonic() > deadline:
                raise TimeoutError
            cache[q] = survivor_counts(kind, q, hz, chains, policy, seed, quiet_after, workers)
        return cache[q]

    baseline = counts_at(q_top)

    def classify(q):
        c = counts_at(q)
        if method == "level":
            stat = c[-1] / chains - level * baseline[-1] / chains
            sup = stat >= 0
        else:
            stat = scaling_statistic(c)
            floor = max(5, 0.005 * chains)
            sup = c[2] >= floor and stat >= 0
        evals.append(Evaluation(policy, float(q), tuple(int(x) for x in c), float(stat), bool(sup)))
        return sup

    grid = np.round(np.arange(grid_step, q_top, grid_step), 12)
    lo, hi = 0.0, q_top
    found = False
    # the whole coarse grid is run so that level crossings are well resolved
    for q in grid:
        sup = classify(q)
        if not found:
            if sup:
                hi, found = float(q), True
            else:
                lo = float(q)
    converged = found
    n_eval = len(evals)
    while found and hi - lo > tol:
        if len(evals) - n_eval >= max_evals:
            converged = False
            break
        mid = 0.5 * (lo + hi)
        if classify(mid):
            hi = mid
        else:
            lo = mid
    # horizon sensitivity from the fixed-level crossing on the evaluated points
    qs = sorted(cache)
    crossings = {}
    for i, h in enumerate(hz):
        fr = [cache[q][i] / chains for q in qs]
        crossings[h] = _level_crossing(qs, fr, level * baseline[i] / chains)
    return PolicyEstimate(policy, 0.5 * (lo + hi), lo, hi, converged, crossings)


def estimate_threshold(kind, tol: float = 0.01, max_steps: int = DEFAULT_HORIZON, chains: int = 1000,
                       seed: int = 0, method: str = "scaling", level: float = 0.5, policies=None,
                       grid_step: float = 0.05, max_evals: int = 40, quiet_after: int | None = None,
                       workers: int | None = None, time_budget: float | None = None) -> ThresholdEstimate:
    """Locate the percolation threshold of one exploration kind.

    A coarse scan over ``grid_step`` finds the first q classed as
    supercritical, then bisection narrows the bracket to ``tol``.

    ``method="scaling"`` classes q as supercritical when
    :func:`scaling_statistic` is nonnegative at the horizons
    :func:`horizon_schedule` derives from ``max_steps``; this looks for the q
    at which the decay of survival is scale-free. ``method="level"`` uses
    the survival fraction at ``max_steps`` crossing ``level`` times the q = 1
    baseline.

    Bond kinds run both policies unless ``policies`` says otherwise; the
    bracket covers every policy bracket. Running out of ``max_evals`` or
    ``time_budget`` returns the current bracket with ``warning`` set.
    """
    kind = _as_kind(kind)
    if tol < 0.005:
        raise DomainError("tol must be at least 0.005")
    if method not in ("scaling", "level"):
        raise DomainError(f"unknown method {method!r}")
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie in (0, 1)")
    if chains < 1:
        raise DomainError("chains must be at least 1")
    hz = horizon_schedule(max_steps)
    if quiet_after is None:
        quiet_after = hz[0] // 2
    if policies is None:
        policies = [Policy.pessimistic] if kind is Kind.site else [Policy.pessimistic, Policy.optimistic]
    policies = [_as_policy(p) for p in policies]
    deadline = None if time_budget is None else time.monotonic() + time_budget
    per, evals, warn = {}, [], False
    for pol in policies:
        try:
            est = _estimate_one_policy(kind, pol, tol, hz, chains, seed, method, level, grid_step,
                                       max_evals, quiet_after, workers, deadline, evals)
        except TimeoutError:
            warn = True
            log.warning("time budget exhausted while estimating the %s threshold", kind.value)
            break
        per[pol] = est
        warn = warn or not est.converged
    if not per:
        return ThresholdEstimate(kind, math.nan, (0.0, 1.0), hz, math.nan, method, per, True, evals,
                                 chains, seed, tol)
    points = [e.estimate for e in per.values()]
    low = min(e.low for e in per.values())
    high = max(e.high for e in per.values())
    if warn:
        warnings.warn(f"{kind.value} threshold search did not converge", RuntimeWarning, stacklevel=2)
    return ThresholdEstimate(kind, float(np.mean(points)), (low, high), hz, float(max(points) - min(points)),
                             method, per, warn, evals, chains, seed, tol)


# ---------------------------------------------------------------------------
# growth exponents


@dataclass(frozen=True)
class GrowthEstimate:
    """Mean per-chain log-log slope with its standard error; unpacks as ``(slope, stderr)``."""

    slope: float
    stderr: float
    observable: str
    chains: int
    steps: int
    n_low: int
    n_high: int
    slopes: tuple = field(default=(), repr=False)

    def __iter__(self):
        return iter((self.slope, self.stderr))


def _growth_chunk(args):
    observable, steps, seed, start, stop, n = args
    out = []
    for c in range(start, stop):
        tr = simulate_peeling(1, steps, observable == "volume", chain_rng(seed, c))
        y = tr.p[n] if observable == "perimeter" else tr.v[n]
        out.append(np.polyfit(np.log(n), np.log(np.maximum(y, 1)), 1)[0])
    return out


def growth_exponent(chains: int = 100, steps: int = 100_000, seed: int = 0, observable: str = "perimeter",
                    points: int = 60, workers: int | None = None) -> GrowthEstimate:
    """Growth exponent of the half-perimeter or the inner-face count.

    Each chain starts from p = 1; its least-squares slope of ``ln y_n`` on
    ``ln n`` over ``points`` log-spaced n in ``[steps/100, steps]`` is
    taken and the slopes are averaged.
    """
    if observable not in ("perimeter", "volume"):
        raise DomainError(f"unknown observable {observable!r}")
    if steps < 10_000:
        raise DomainError("steps must be at least 10^4")
    if chains < 2:
        raise DomainError("chains must be at least 2")
    n_low = steps // 100
    n = np.unique(np.round(np.logspace(math.log10(n_low), math.log10(steps), points)).astype(np.int64))
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1:
        slopes = _growth_chunk((observable, steps, seed, 0, chains, n))
    else:
        bounds = np.linspace(0, chains, workers + 1).astype(int)
        jobs = [(observable, steps, seed, int(a), int(b), n) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            slopes = [s for part in pool.map(_growth_chunk, jobs) for s in part]
    slopes = np.asarray(slopes)
    return GrowthEstimate(float(slopes.mean()), float(slopes.std(ddof=1) / math.sqrt(len(slopes))), observable,
                          int(chains), int(steps), int(n[0]), int(n[-1]), tuple(float(s) for s in slopes))


# ---------------------------------------------------------------------------
# sampler goodness-of-fit


@dataclass
class GofReport:
    """Empirical event frequencies against the exact event law at one p."""

    p: int
    n_samples: int
    seed: int
    events: list
    probabilities: np.ndarray
    counts: np.ndarray
    z_scores: np.ndarray
    max_gap: float
    max_abs_z: float
    unexpected: int = 0

    def passed(self, z_bound: float = 4.0) -> bool:
        return self.unexpected == 0 and self.max_abs_z < z_bound

    @property
    def min_expected(self) -> float:
        """Smallest expected count ``n P`` over the events."""
        return float(self.n_samples * self.probabilities.min())

    def pass_probability(self, z_bound: float = 4.0) -> float:
        """Chance that an exact sampler passes :meth:`passed` (events taken as independent).

        Rare events with expected count well below 1 fail the z-bound as soon
        as they are observed once, so this drops far below 1 for large p.
        """
        n, P = self.n_samples, self.probabilities
        sd = np.sqrt(n * P * (1.0 - P))
        hi = np.ceil(n * P + z_bound * sd) - 1
        lo = np.floor(n * P - z_bound * sd) + 1
        inside = binom.cdf(hi, n, P) - binom.cdf(lo - 1, n, P)
        return float(np.exp(np.sum(np.log(np.clip(inside, 1e-300, 1.0)))))

    def exact_pvalue(self) -> float:
        """Bonferroni-corrected two-sided exact binomial p-value over all events."""
        n, P, k = self.n_samples, self.probabilities, self.counts
        tails = np.minimum(binom.cdf(k, n, P), binom.sf(k - 1, n, P))
        return float(min(1.0, len(P) * float(np.min(np.minimum(1.0, 2.0 * tails)))))


def sampler_gof(p: int, n_samples: int = 1_000_000, seed: int = 0) -> GofReport:
    """Compare the compiled event sampler with the exact event law at ``p``.

    z-scores use the binomial standard error ``sqrt(P(1-P)/n)`` of each
    event; ``max_gap`` is the largest absolute frequency error.
    """
    pmf = event_pmf(p)
    if n_samples < 1:
        raise DomainError("n_samples must be at least 1")
    codes = sample_event_codes(p, int(n_samples), chain_rng(seed, int(p)))
    index = {ev.code(p): i for i, (ev, _) in enumerate(pmf.rows)}
    probs = np.array([float(pr) for _, pr in pmf.rows])
    keys, freq = np.unique(codes, axis=0, return_counts=True)
    counts = np.zeros(len(probs), dtype=np.int64)
    unexpected = 0
    for key, f in zip(map(tuple, keys.tolist()), freq):
        i = index.get(key)
        if i is None:
            unexpected += int(f)
        else:
            counts[i] += f
    emp = counts / n_samples
    se = np.sqrt(probs * (1.0 - probs) / n_samples)
    z = np.where(se > 0, (emp - probs) / np.where(se > 0, se, 1.0), 0.0)
    events = [event_from_code(p, *ev.code(p)) for ev, _ in pmf.rows]
    return GofReport(int(p), int(n_samples), int(seed), events, probs, counts, z,
                     float(np.max(np.abs(emp - probs))), float(np.max(np.abs(z))), unexpected)
