"""The peeling process on the UIPQ.

At each step the face incident to a boundary edge of the explored region
is revealed. With the boundary of half-perimeter ``p`` labelled
``x_1, ..., x_{2p}`` and the revealed face ``(x_{2p}, x_1, y_0, y_1)``, the
eight event classes are

=====================================  =========================  ==============
class                                   indices                    new p
=====================================  =========================  ==============
NewVertex                               none                       p + 1
SwallowWithNewVertex{Right,Left}Inf     ``y_1 = x_{2i+1}``, 0<=i<p   i+1 / p-i
SwallowNoNewVertex{Right,Left}Inf       ``y_0 = x_{2i}``, 1<=i<=p    i / p+1-i
ThreeSplit{Right,Middle,Left}Inf        ``y_0=x_{2i}, y_1=x_{2j+1}``  i / j-i+1 / p-j
=====================================  =========================  ==============

Exact probabilities come from :mod:`peelperc.combinatorics`. Sampling
uses a two-stage scheme that needs only O(p) work per table: the limit law
of the increment ``X`` is drawn by inverse CDF, a jump of size ``k`` is
kept with probability ``rho_p(k) = (9/2)^k C_{p-k}/C_p`` (else the step
becomes a new vertex), and the sub-case is then drawn from its exact
conditional law, which does not depend on ``p``.
"""

from __future__ import annotations

import enum
import logging
import threading
from dataclasses import dataclass
from functools import lru_cache

import gmpy2
import numpy as np

from . import _kernels as K
from .combinatorics import (
    ExactRational,
    LIMIT_P_PLUS,
    LIMIT_P_ZERO,
    c_ratio,
    z_convolution_range,
    z_scaled_terms,
    z_value,
)
from .errors import DomainError

log = logging.getLogger(__name__)

#: Exact event tables (and their alias samplers) are cached up to this p.
ALIAS_P_MAX = 64
#: Initial length of the float limit-law table; doubled on demand.
INITIAL_TABLE_K = 4096
#: Default cutoff for each free-size draw (raised to 64 h^2 for large h).
SIZE_CUTOFF = 100_000


class PeelCase(str, enum.Enum):
    NewVertex = "NewVertex"
    SwallowWithNewVertexLeftInf = "SwallowWithNewVertexLeftInf"
    SwallowWithNewVertexRightInf = "SwallowWithNewVertexRightInf"
    SwallowNoNewVertexLeftInf = "SwallowNoNewVertexLeftInf"
    SwallowNoNewVertexRightInf = "SwallowNoNewVertexRightInf"
    ThreeSplitRightInf = "ThreeSplitRightInf"
    ThreeSplitMiddleInf = "ThreeSplitMiddleInf"
    ThreeSplitLeftInf = "ThreeSplitLeftInf"


_CASE_OF_CLASS = {
    K.NEW_VERTEX: PeelCase.NewVertex,
    K.S2_LEFT: PeelCase.SwallowWithNewVertexLeftInf,
    K.S2_RIGHT: PeelCase.SwallowWithNewVertexRightInf,
    K.S3_LEFT: PeelCase.SwallowNoNewVertexLeftInf,
    K.S3_RIGHT: PeelCase.SwallowNoNewVertexRightInf,
    K.T_RIGHT: PeelCase.ThreeSplitRightInf,
    K.T_MIDDLE: PeelCase.ThreeSplitMiddleInf,
    K.T_LEFT: PeelCase.ThreeSplitLeftInf,
}
_CLASS_OF_CASE = {v: k for k, v in _CASE_OF_CLASS.items()}


@dataclass(frozen=True)
class PeelEvent:
    """One revealed face.

    ``i`` and ``j`` follow the boundary labelling in the module docstring;
    ``j`` is set for three-way splits only.
    """

    case: PeelCase
    i: int | None
    j: int | None
    delta_halfperimeter: int
    finite_part_perimeters: tuple

    @property
    def k(self) -> int:
        """Half-perimeter units lost (0 for a new vertex)."""
        return max(-self.delta_halfperimeter, 0)

    def code(self, p: int) -> tuple:
        """Kernel encoding ``(cls, k, u)`` of this event at half-perimeter p."""
        cls = _CLASS_OF_CASE[self.case]
        if cls == K.NEW_VERTEX:
            return cls, 0, 0
        u = 0
        if cls == K.T_RIGHT:
            u = self.j - self.i + 1
        elif cls in (K.T_MIDDLE, K.T_LEFT):
            u = self.i
        return cls, self.k, u


def event_from_code(p: int, cls: int, k: int, u: int) -> PeelEvent:
    """Inverse of :meth:`PeelEvent.code`."""
    case = _CASE_OF_CLASS[int(cls)]
    if cls == K.NEW_VERTEX:
        return PeelEvent(case, None, None, 1, ())
    if cls == K.S2_RIGHT:
        i, j = p - 1 - k, None
    elif cls == K.S2_LEFT:
        i, j = k, None
    elif cls == K.S3_RIGHT:
        i, j = p - k, None
    elif cls == K.S3_LEFT:
        i, j = k + 1, None
    elif cls == K.T_RIGHT:
        i = p - k
        j = i + u - 1
    elif cls == K.T_MIDDLE:
        i = u
        j = u + p - k - 1
    else:
        i, j = u, k
    if j is None:
        parts = (k + 1,)
    else:
        parts = (u, k + 1 - u)
    return PeelEvent(case, int(i), None if j is None else int(j), -int(k), parts)


# ---------------------------------------------------------------------------
# exact tables


class AliasTable:
    """Walker/Vose alias table over a finite float distribution."""

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=np.float64)
        n = len(probs)
        scaled = probs * n / probs.sum()
        self.prob = np.zeros(n)
        self.alias = np.zeros(n, dtype=np.int64)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = g
            scaled[g] = scaled[g] + scaled[s] - 1.0
            (small if scaled[g] < 1.0 else large).append(g)
        for i in large + small:
            self.prob[i] = 1.0

    def __len__(self):
        return len(self.prob)

    def sample(self, rng: np.random.Generator, size=None):
        n = len(self.prob)
        idx = rng.integers(0, n, size=size)
        keep = rng.random(size) < self.prob[idx]
        return np.where(keep, idx, self.alias[idx])


@dataclass
class EventPmf:
    """Exact event table at one half-perimeter."""

    half_perimeter: int
    rows: list
    float_rows: list
    sampler_table: AliasTable
    float_discrepancy: float = 0.0

    def total(self) -> ExactRational:
        return sum((pr for _, pr in self.rows), gmpy2.mpq(0))


def _check_p(p):
    if int(p) != p or p < 1:
        raise DomainError(f"half-perimeter must be a positive integer, got {p!r}")


def _c_descending(p: int) -> list:
    """Exact ``c(p-k, p) = C_{p-k}/C_p`` for ``k = 0..p-1``."""
    out = [gmpy2.mpq(1)]
    cur = gmpy2.mpq(1)
    for m in range(p, 1, -1):
        cur = cur * gmpy2.mpq((m - 1) * (2 * m - 1), (3 * m - 2) * (3 * m - 1))
        out.append(cur)
    return out


def _event_rows(p: int) -> list:
    rows = []
    twelve = gmpy2.mpz(12)
    rows.append((event_from_code(p, K.NEW_VERTEX, 0, 0), c_ratio(p + 1, p) / twelve))
    for i in range(p):
        k = p - 1 - i
        rows.append((event_from_code(p, K.S2_RIGHT, k, 0), z_value(p - i) * c_ratio(i + 1, p) / twelve))
        rows.append((event_from_code(p, K.S2_LEFT, i, 0), c_ratio(p - i, p) * z_value(i + 1) / twelve))
    for i in range(1, p + 1):
        rows.append((event_from_code(p, K.S3_RIGHT, p - i, 0), z_value(p + 1 - i) * c_ratio(i, p) / twelve))
        rows.append((event_from_code(p, K.S3_LEFT, i - 1, 0), c_ratio(p + 1 - i, p) * z_value(i) / twelve))
    for i in range(1, p):
        for j in range(i, p):
            zr, zm, zl = z_value(i), z_value(j - i + 1), z_value(p - j)
            rows.append((PeelEvent(PeelCase.ThreeSplitRightInf, i, j, i - p, (j - i + 1, p - j)),
                         zl * zm * c_ratio(i, p) / twelve))
            rows.append((PeelEvent(PeelCase.ThreeSplitMiddleInf, i, j, j - i + 1 - p, (i, p - j)),
                         zl * c_ratio(j - i + 1, p) * zr / twelve))
            rows.append((PeelEvent(PeelCase.ThreeSplitLeftInf, i, j, -j, (i, j - i + 1)),
                         c_ratio(p - j, p) * zm * zr / twelve))
    return rows


@lru_cache(maxsize=ALIAS_P_MAX)
def _event_pmf_cached(p: int) -> EventPmf:
    rows = _event_rows(p)
    floats = np.array([float(pr) for _, pr in rows])
    total = floats.sum()
    disc = abs(total - 1.0)
    if disc > 0:
        log.debug("event_pmf(%d): float total off by %.3g, renormalised", p, disc)
    floats = floats / total
    float_rows = [(ev, float(f)) for (ev, _), f in zip(rows, floats)]
    return EventPmf(p, rows, float_rows, AliasTable(floats), float(disc))


def event_pmf(p: int) -> EventPmf:
    """Every peeling event at half-perimeter ``p`` with its exact probability.

    The table has ``1 + 4p + 3p(p-1)/2`` rows; tables up to
    :data:`ALIAS_P_MAX` are cached.
    """
    _check_p(p)
    p = int(p)
    if p <= ALIAS_P_MAX:
        return _event_pmf_cached(p)
    return _event_pmf_cached.__wrapped__(p)


def increment_pmf(p: int) -> dict:
    """Exact law of ``X`` at half-perimeter ``p`` as ``{delta: probability}``.

    Evaluated directly: ``P(X=1) = C_{p+1}/(12 C_p)`` and
    ``P(X=-k) = C_{p-k}(4 Z_{k+1} + 3 S_k)/(12 C_p)`` with
    ``S_k = sum_{i=1}^k Z_i Z_{k+1-i}``.
    """
    _check_p(p)
    p = int(p)
    c = _c_descending(p)
    s = z_convolution_range(p - 1)
    out = {1: c_ratio(p + 1, p) / 12}
    for k in range(p):
        out[-k] = c[k] * (4 * z_value(k + 1) + 3 * s[k]) / 12
    return out


def marginal_increment_pmf(pmf: EventPmf) -> dict:
    """Sum an event table over events with the same increment."""
    out = {}
    for ev, pr in pmf.rows:
        out[ev.delta_halfperimeter] = out.get(ev.delta_halfperimeter, gmpy2.mpq(0)) + pr
    return out


def expected_increment(p: int) -> ExactRational:
    """Exact ``E[X | half-perimeter p]``."""
    return sum((d * pr for d, pr in increment_pmf(p).items()), gmpy2.mpq(0))


def expected_increment_float(p: int) -> float:
    """``E[X | p]`` from the float tables (fast, for large p)."""
    t = limit_tables(max(p, 2))
    k = np.arange(1, p)
    rho = np.array([K.falling_ratio(p, int(kk)) for kk in k])
    qk = 1.5 * t.zeta[2:p + 1] + 1.125 * t.sigma[1:p]
    down = rho * qk
    return float(1.0 - float(LIMIT_P_ZERO) - down.sum() - (k * down).sum())


# ---------------------------------------------------------------------------
# sampling tables for the compiled kernels


class LimitTables:
    """Float tables of the limit law of ``X`` used by the compiled sampler.

    ``zeta[k] = Z_k (2/9)^k``, ``sigma[k] = sum_i zeta_i zeta_{k+1-i}`` and
    ``cdf`` is the cumulative law over ``(+1, 0, -1, ..., -kmax)``. Extending
    the tables leaves every existing entry unchanged, so trajectories do not
    depend on when an extension happened.
    """

    def __init__(self, kmax: int):
        self.kmax = 0
        self._build(kmax)

    def _build(self, kmax: int):
        zeta = z_scaled_terms(kmax + 1)
        sigma = K.convolve_scaled(zeta, kmax)
        qk = 1.5 * zeta[2:kmax + 2] + 1.125 * sigma[1:kmax + 1]
        probs = np.concatenate(([float(LIMIT_P_PLUS), float(LIMIT_P_ZERO)], qk))
        self.zeta, self.sigma, self.cdf = zeta, sigma, np.cumsum(probs)
        self.kmax = kmax

    def ensure(self, p: int):
        if p - 1 > self.kmax:
            new = self.kmax
            while new < p - 1:
                new *= 2
            self._build(new)


_TABLES = None
_TABLE_LOCK = threading.Lock()


def limit_tables(p_needed: int = 1) -> LimitTables:
    """Shared float tables, extended to cover half-perimeter ``p_needed``."""
    global _TABLES
    with _TABLE_LOCK:
        if _TABLES is None:
            _TABLES = LimitTables(INITIAL_TABLE_K)
        _TABLES.ensure(p_needed)
        return _TABLES


def chain_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, key...)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(x) for x in key))
    return np.random.Generator(np.random.PCG64(ss))


def sample_event(p: int, rng: np.random.Generator, method: str = "kernel") -> PeelEvent:
    """Draw one event at half-perimeter ``p``.

    ``method="kernel"`` uses the two-stage sampler that all chains use;
    ``method="alias"`` draws from the cached exact table (``p <= 64``).
    """
    _check_p(p)
    p = int(p)
    if method == "alias":
        pmf = event_pmf(p)
        return pmf.float_rows[int(pmf.sampler_table.sample(rng))][0]
    t = limit_tables(p)
    cls, k, u = K.sample_event(p, rng, t.cdf, t.zeta, t.sigma)
    return event_from_code(p, cls, k, u)


def sample_event_codes(p: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` kernel draws at fixed ``p`` as an ``(count, 3)`` array of (cls, k, u)."""
    _check_p(p)
    t = limit_tables(p)
    out = np.zeros((count, 3), dtype=np.int64)
    K.sample_events_batch(int(p), int(count), rng, t.cdf, t.zeta, t.sigma, out)
    return out


@dataclass
class PeelingTrajectory:
    """Half-perimeters ``p[n]`` and (optionally) inner-face counts ``v[n]``."""

    p: np.ndarray
    v: np.ndarray | None = None
    tail_draws: int = 0
    size_draws: int = 0
    overflow: bool = False

    @property
    def tail_fraction(self) -> float:
        return self.tail_draws / self.size_draws if self.size_draws else 0.0


def simulate_peeling(p0: int, steps: int, track_volume: bool = False,
                     rng: np.random.Generator | None = None,
                     size_cutoff: int = SIZE_CUTOFF) -> PeelingTrajectory:
    """Run the boundary chain for ``steps`` steps from half-perimeter ``p0``.

    With ``track_volume`` every swallowed finite part gets a size drawn from
    its free distribution and ``v[n]`` counts the inner faces of the explored
    region (``v[0] = 0``).
    """
    _check_p(p0)
    if steps < 0:
        raise DomainError("steps must be nonnegative")
    rng = rng if rng is not None else np.random.default_rng()
    out_p = np.zeros(steps + 1, dtype=np.int64)
    out_p[0] = p0
    out_v = np.zeros(steps + 1 if track_volume else 1, dtype=np.int64)
    counts = np.zeros(3, dtype=np.int64)
    n, p, v = 0, int(p0), 0
    while n < steps:
        t = limit_tables(p)
        status, n, p, v = K.run_peeling(p, steps, n, track_volume, size_cutoff, rng, t.cdf, t.zeta,
                                        t.sigma, out_p, out_v, v, counts)
        if status == K.NEED_TABLE:
            limit_tables(2 * p)
    return PeelingTrajectory(out_p, out_v if track_volume else None, int(counts[0]), int(counts[1]),
                             bool(counts[2]))
