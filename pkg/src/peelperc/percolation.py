"""Percolation exploration chains driven by the peeling process.

Three chains follow the percolation interface along the peeling boundary:

* site percolation on the UIPM, tracking the number ``B`` of black circle
  vertices on the boundary (``W = p - B`` white ones);
* bond percolation on the UIPM, tracking the number ``A`` of boundary
  circle vertices in the explored cluster;
* bond percolation on the UIPQ, tracking the number ``A`` of boundary
  vertices of the cluster and ``U = 2p - A`` undetermined edges.

Boundary circle vertices are counted in half-perimeter units, so a 2p-gon
carries ``p`` of them. The cluster (or black arc) always occupies the
highest boundary indices, next to the peeled edge.

The primed chains drop all clamping and are what the drift computations
are about; :func:`prime_drift` evaluates their exact one-step drift.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache

import gmpy2
import numpy as np

from . import _kernels as K
from .combinatorics import ExactRational, c_ratio, z_convolution_range, z_value
from .errors import DomainError
from .peeling import PeelEvent, _c_descending, limit_tables

DEFAULT_P_CAP = 1_000_000


class Status(str, enum.Enum):
    running = "running"
    died = "died"
    survived_cap = "survived-cap"


class Policy(str, enum.Enum):
    pessimistic = "pessimistic"
    optimistic = "optimistic"


class Kind(str, enum.Enum):
    site = "site"
    bond_map = "bond-map"
    bond_quad = "bond-quad"


class PrimedKind(str, enum.Enum):
    B = "B'"
    W = "W'"
    A_map = "A'-map"
    A_quad = "A'-quad"
    U_quad = "U'-quad"


_KIND_CODE = {Kind.site: K.SITE, Kind.bond_map: K.BOND_MAP, Kind.bond_quad: K.BOND_QUAD}
_POLICY_CODE = {Policy.pessimistic: K.PESSIMISTIC, Policy.optimistic: K.OPTIMISTIC}


def _as_kind(kind) -> Kind:
    try:
        return Kind(kind)
    except ValueError:
        raise DomainError(f"unknown chain kind {kind!r}") from None


def _as_policy(policy) -> Policy:
    try:
        return Policy(policy)
    except ValueError:
        raise DomainError(f"unknown policy {policy!r}") from None


def _as_primed(kind) -> PrimedKind:
    aliases = {"B": "B'", "W": "W'", "A-map": "A'-map", "A-quad": "A'-quad", "U-quad": "U'-quad",
               "site": "B'", "bond-map": "A'-map", "bond-quad": "A'-quad"}
    try:
        return PrimedKind(aliases.get(kind, kind))
    except ValueError:
        raise DomainError(f"unknown primed chain {kind!r}") from None


def _check_q(q, strict=False):
    if not (0.0 <= float(q) <= 1.0) or (strict and float(q) >= 1.0):
        raise DomainError(f"q must lie in [0, 1{')' if strict else ']'}, got {q!r}")


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True)
class SiteState:
    p: int
    B: int
    q: float
    status: Status = Status.running

    @property
    def W(self) -> int:
        return self.p - self.B


@dataclass(frozen=True)
class BondMapState:
    p: int
    A: int
    q: float
    status: Status = Status.running
    policy: Policy = Policy.pessimistic


@dataclass(frozen=True)
class BondQuadState:
    p: int
    A: int
    q: float
    status: Status = Status.running
    policy: Policy = Policy.pessimistic

    @property
    def U(self) -> int:
        return 2 * self.p - self.A


@dataclass(frozen=True)
class PrimedState:
    kind: PrimedKind
    value: int
    p: int
    q: float = 0.5


def bootstrap_state(kind, q: float, policy=Policy.pessimistic, quad_a0: int = 2):
    """Initial state: root edge explored, ``p = 1``.

    Site: the root vertex is black (``B = 1``). Bond on the map: the root
    edge is open (``A = 1``). Bond on the quadrangulation: ``A = 2`` by
    default, ``A = 1`` via ``quad_a0``.
    """
    kind = _as_kind(kind)
    if kind is Kind.site:
        return SiteState(1, 1, q)
    if kind is Kind.bond_map:
        return BondMapState(1, 1, q, policy=_as_policy(policy))
    if quad_a0 not in (1, 2):
        raise DomainError("bond-quad bootstrap A0 must be 1 or 2")
    return BondQuadState(1, quad_a0, q, policy=_as_policy(policy))


# ---------------------------------------------------------------------------
# one-step transitions


def _require_running(state, value):
    if state.status is not Status.running or value < 1:
        raise DomainError("transition called on an absorbed or finished state")


def site_step(state: SiteState, event: PeelEvent, rng: np.random.Generator) -> SiteState:
    """Apply one peeling event to the site chain; a new vertex is black w.p. q."""
    _require_running(state, state.B)
    cls, k, u = event.code(state.p)
    black = 1 if rng.random() < state.q else 0
    b = int(K.site_transition(state.p, state.B, cls, k, u, black))
    p = int(K.new_half_perimeter(state.p, cls, k))
    return replace(state, p=p, B=b, status=Status.died if b == 0 else Status.running)


def bond_map_step(state: BondMapState, event: PeelEvent, rng: np.random.Generator) -> BondMapState:
    """Apply one peeling event to the bond chain on the map; the new edge is open w.p. q."""
    _require_running(state, state.A)
    cls, k, u = event.code(state.p)
    opened = 1 if rng.random() < state.q else 0
    a, _, _ = K.bond_map_transition(state.p, state.A, cls, k, u, opened, _POLICY_CODE[state.policy])
    p = int(K.new_half_perimeter(state.p, cls, k))
    return replace(state, p=p, A=int(a), status=Status.died if a == 0 else Status.running)


def geometric(q: float, rng: np.random.Generator) -> int:
    """Untruncated geometric variable with ``P(k) = q^k (1 - q)``."""
    _check_q(q, strict=True)
    return int(K.geometric_draw(rng.random(), float(q)))


def truncated_geometric(q: float, N: int, rng: np.random.Generator) -> int:
    """``G_q(N)``: ``P(k) = q^k (1-q)`` for ``k < N`` and ``P(N) = q^N``."""
    _check_q(q, strict=True)
    if N < 0:
        raise DomainError("N must be nonnegative")
    return min(geometric(q, rng), int(N))


def bond_quad_step(state: BondQuadState, event: PeelEvent, rng: np.random.Generator) -> BondQuadState:
    """Apply one peeling event to the bond chain on the quadrangulation."""
    _check_q(state.q, strict=True)
    _require_running(state, state.A)
    cls, k, u = event.code(state.p)
    g = geometric(state.q, rng)
    a, _ = K.bond_quad_transition(state.p, state.A, cls, k, u, g, _POLICY_CODE[state.policy])
    p = int(K.new_half_perimeter(state.p, cls, k))
    return replace(state, p=p, A=int(a), status=Status.died if a == 0 else Status.running)


# ---------------------------------------------------------------------------
# transition tables written in the complementary variables, used as
# independent cross-checks of the kernels


def table_site_w_update(p: int, w: int, cls: int, k: int, u: int, black: int) -> int:
    """White-count update read off the W-table (middle branch indexed by the right part)."""
    if cls == K.NEW_VERTEX:
        return w + 1 - black
    if cls in (K.S2_LEFT, K.S3_LEFT, K.T_LEFT):
        return max(w - k, 0)
    if cls in (K.S3_RIGHT, K.T_RIGHT):
        return min(w, p - k)
    if cls == K.S2_RIGHT:
        return min(w, p - k - 1) + 1 - black
    return max(w - (u - 1), 0)


def table_site_b_update(p: int, b: int, cls: int, k: int, u: int, black: int) -> int:
    """Black-count update exactly as tabulated, i.e. without the p - k clamp in the middle case."""
    if cls == K.NEW_VERTEX:
        return b + black
    if cls in (K.S2_LEFT, K.S3_LEFT, K.T_LEFT):
        return min(b, p - k)
    if cls in (K.S3_RIGHT, K.T_RIGHT):
        return max(b - k, 0)
    if cls == K.S2_RIGHT:
        return max(b - k - 1, 0) + black
    return max(b - (k + 1 - u), 0)


def table_quad_u_update(p: int, U: int, cls: int, k: int, u: int, g: int, policy: int) -> int:
    """Undetermined-edge update read off the U-table, with ``G_q(N) = min(g, N)``."""
    G = K.trunc_geom
    pk2 = 2 * (p - k)
    if cls == K.NEW_VERTEX:
        return U + 2 - G(g, U + 2)
    if cls in (K.S2_LEFT, K.T_LEFT):
        return U - 2 * k - G(g, U - 2 * k) if 2 * k < U else 0
    if cls == K.S3_LEFT:
        return U - 2 * k - G(g, U - 2 * k) if 2 * k + 1 < U else 1 - G(g, 1)
    if cls == K.S2_RIGHT:
        if pk2 >= U + 2:
            return U + 1 - G(g, U + 1)
    elif cls in (K.S3_RIGHT, K.T_RIGHT):
        if pk2 - 1 >= U:
            return U - G(g, U)
    else:
        if 2 * u > U:
            return 0
        if U <= 2 * (p - k + u) - 2:
            return U - 2 * u + 1 - G(g, U - 2 * u + 1)
    if policy == K.PESSIMISTIC:
        return pk2
    return pk2 - 1 - G(g, pk2 - 1)


# ---------------------------------------------------------------------------
# primed chains


def prime_increment(kind, p: int, cls: int, k: int, u: int, bit: int = 0, g: int = 0,
                    coupled_u: int | None = None) -> int:
    """Increment of a primed chain for one event.

    ``bit`` is the colour / edge state (site and bond on the map), ``g`` the
    untruncated geometric draw (quadrangulation). For the U' chain the
    truncation level uses the coupled ``U`` when given, otherwise ``g`` is
    used untruncated.
    """
    kind = _as_primed(kind)
    if kind is PrimedKind.B:
        if cls == K.NEW_VERTEX:
            return bit
        if cls in (K.S2_LEFT, K.S3_LEFT, K.T_LEFT):
            return 0
        if cls == K.S2_RIGHT:
            return -k if bit else -k - 1
        if cls in (K.S3_RIGHT, K.T_RIGHT):
            return -k
        return -(k + 1 - u)
    if kind is PrimedKind.W:
        if cls == K.NEW_VERTEX or cls == K.S2_RIGHT:
            return 1 - bit
        if cls in (K.S3_RIGHT, K.T_RIGHT):
            return 0
        if cls in (K.S2_LEFT, K.S3_LEFT, K.T_LEFT):
            return -k
        return -(u - 1)
    if kind is PrimedKind.A_map:
        if cls == K.NEW_VERTEX or cls == K.S3_LEFT:
            return bit
        if cls in (K.S2_LEFT, K.T_LEFT):
            return 0
        if cls == K.S2_RIGHT:
            return -k if bit else -k - 1
        if cls in (K.S3_RIGHT, K.T_RIGHT):
            return -k
        return -k + u if bit else -k + u - 1
    if kind is PrimedKind.A_quad:
        if cls in (K.NEW_VERTEX, K.S2_LEFT, K.S3_LEFT, K.T_LEFT):
            base = 0
        elif cls == K.S2_RIGHT:
            base = -(2 * k + 1)
        elif cls in (K.S3_RIGHT, K.T_RIGHT):
            base = -2 * k
        else:
            base = -2 * (k - u) - 1
        return base + g
    # U'
    if cls == K.NEW_VERTEX:
        base = 2
    elif cls in (K.S2_LEFT, K.S3_LEFT, K.T_LEFT):
        base = -2 * k
    elif cls == K.S2_RIGHT:
        base = 1
    elif cls in (K.S3_RIGHT, K.T_RIGHT):
        base = 0
    else:
        base = -2 * u + 1
    if coupled_u is None:
        return base - g
    level = max(coupled_u + base, 0)
    return base - min(g, level)


def prime_step(state: PrimedState, event: PeelEvent, rng: np.random.Generator,
               coupled_u: int | None = None) -> PrimedState:
    """Advance a primed chain by one event (value unbounded below)."""
    cls, k, u = event.code(state.p)
    kind = _as_primed(state.kind)
    bit = g = 0
    if kind in (PrimedKind.A_quad, PrimedKind.U_quad):
        g = geometric(state.q, rng)
    else:
        bit = 1 if rng.random() < state.q else 0
    inc = prime_increment(kind, state.p, cls, k, u, bit, g, coupled_u)
    return replace(state, value=state.value + inc, p=int(K.new_half_perimeter(state.p, cls, k)))


@lru_cache(maxsize=64)
def drift_sums(p: int) -> dict:
    """Exact sums entering every drift at half-perimeter ``p``.

    ``alpha = P(X=1)``, ``A0 = sum_k a_k``, ``A1 = sum_k k a_k``,
    ``M0 = sum_k m_k``, ``M1 = sum_k k m_k`` and ``EX = E[X]``, where
    ``a_k = C_{p-k} Z_{k+1}/(12 C_p)`` is the weight of each two-part
    class and ``m_k = C_{p-k} S_k/(12 C_p)`` the total weight of each
    three-part class.
    """
    if int(p) != p or p < 1:
        raise DomainError("p must be a positive integer")
    p = int(p)
    c = _c_descending(p)
    s = z_convolution_range(p - 1)
    zero = gmpy2.mpq(0)
    a0 = a1 = m0 = m1 = zero
    for k in range(p):
        a = c[k] * z_value(k + 1)
        a0 += a
        a1 += k * a
        if k:
            m = c[k] * s[k]
            m0 += m
            m1 += k * m
    a0, a1, m0, m1 = a0 / 12, a1 / 12, m0 / 12, m1 / 12
    alpha = c_ratio(p + 1, p) / 12
    ex = alpha - 4 * a1 - 3 * m1
    return {"alpha": alpha, "A0": a0, "A1": a1, "M0": m0, "M1": m1, "EX": ex}


def _exact_q(q) -> ExactRational:
    if isinstance(q, str):
        return gmpy2.mpq(Fraction(q))
    if isinstance(q, float):
        return gmpy2.mpq(Fraction(q))
    return gmpy2.mpq(q)


def prime_drift(kind, p: int, q) -> ExactRational:
    """Exact drift ``E[value increment | half-perimeter p]`` of a primed chain.

    ``q`` may be a float (converted exactly), an integer or a rational. For
    the U' chain the geometric variables are taken untruncated.
    """
    kind = _as_primed(kind)
    quad = kind in (PrimedKind.A_quad, PrimedKind.U_quad)
    _check_q(q, strict=quad)
    s = drift_sums(p)
    q = _exact_q(q)
    al, a0, a1, m0, m1, ex = s["alpha"], s["A0"], s["A1"], s["M0"], s["M1"], s["EX"]
    if kind is PrimedKind.B:
        return q * al - 2 * a1 - (1 - q) * a0 - m1 - (m1 + m0) / 2
    if kind is PrimedKind.W:
        return (1 - q) * (al + a0) - 2 * a1 - m1 - (m1 - m0) / 2
    if kind is PrimedKind.A_map:
        return q * (al + a0) - (1 - q) * (a0 + m0) - 2 * a1 - gmpy2.mpq(3, 2) * m1 + m0 / 2
    mean_g = q / (1 - q)
    if kind is PrimedKind.A_quad:
        return mean_g - (al - ex) - a0
    return al + ex + a0 - mean_g


def prime_drift_limit(kind, q) -> ExactRational:
    """Large-p limit of :func:`prime_drift`."""
    kind = _as_primed(kind)
    q = _exact_q(q)
    if kind is PrimedKind.B:
        return q / 2 - gmpy2.mpq(1, 3)
    if kind is PrimedKind.W:
        return gmpy2.mpq(1, 3) - q / 2
    if kind is PrimedKind.A_map:
        return gmpy2.mpq(2, 3) * (q - gmpy2.mpq(1, 2))
    if kind is PrimedKind.A_quad:
        return q / (1 - q) - gmpy2.mpq(1, 2)
    return gmpy2.mpq(1, 2) - q / (1 - q)


# ---------------------------------------------------------------------------
# full explorations


@dataclass
class ExplorationOutcome:
    """Result of one exploration chain."""

    kind: Kind
    q: float
    policy: Policy
    status: Status
    steps: int
    final_p: int
    final_value: int
    policy_resolved: int = 0
    revivals: int = 0
    clamps: int = 0
    capped: bool = False
    record_steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    record_p: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    record_value: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    last_policy_step: int = 0
    quiet_after: int = 0
    first_policy_after: int = 0

    @property
    def survived(self) -> bool:
        return self.status is Status.survived_cap

    def alive_at(self, horizon: int) -> bool:
        """Whether the chain counts as surviving to ``horizon`` steps.

        A chain is alive if it was not absorbed by ``horizon`` and no
        policy-resolved branch fired in ``(quiet_after, horizon]``. Under the
        pessimistic policy this is plain survival. Under the optimistic one,
        where the bond-quadrangulation chain can never be absorbed, it
        separates a cluster that keeps being swallowed from one that escapes,
        and it stays non-increasing in ``horizon``.
        """
        if self.status is Status.died:
            if self.steps <= horizon:
                return False
        elif horizon > self.steps and not self.capped:
            raise DomainError("horizon exceeds the length of the run")
        return self.first_policy_after == 0 or self.first_policy_after > horizon


def run_exploration(kind, q: float, max_steps: int, p_cap: int = DEFAULT_P_CAP,
                    policy=Policy.pessimistic, rng: np.random.Generator | None = None,
                    record_at=None, quad_a0: int = 2, quiet_after: int = 0) -> ExplorationOutcome:
    """Run one exploration chain from its bootstrap state.

    The chain stops when the tracked count hits 0 (``died``), after
    ``max_steps`` steps, or once the half-perimeter exceeds ``p_cap`` (the
    last two count as ``survived-cap``). ``record_at`` lists step indices at
    which ``(p, value)`` snapshots are stored; entries after death read 0.
    The first policy-resolved branch after step ``quiet_after`` is stored
    for :meth:`ExplorationOutcome.alive_at`.
    """
    kind = _as_kind(kind)
    policy = _as_policy(policy)
    _check_q(q, strict=kind is Kind.bond_quad)
    if max_steps < 1:
        raise DomainError("max_steps must be at least 1")
    rng = rng if rng is not None else np.random.default_rng()
    state = bootstrap_state(kind, q, policy, quad_a0)
    p = state.p
    a = state.B if kind is Kind.site else state.A
    rec = np.asarray(sorted(record_at) if record_at is not None else [], dtype=np.int64)
    rec_p = np.zeros(len(rec), dtype=np.int64)
    rec_a = np.zeros(len(rec), dtype=np.int64)
    counts = np.zeros(5, dtype=np.int64)
    n = 0
    while True:
        t = limit_tables(p)
        status, n, p, a = K.run_exploration(_KIND_CODE[kind], float(q), _POLICY_CODE[policy], p, a, n,
                                            int(max_steps), int(p_cap), rng, t.cdf, t.zeta, t.sigma,
                                            rec, rec_p, rec_a, counts, int(quiet_after))
        if status != K.NEED_TABLE:
            break
        limit_tables(2 * p)
    st = Status.died if status == K.DIED else Status.survived_cap
    return ExplorationOutcome(kind, float(q), policy, st, int(n), int(p), int(a), int(counts[0]),
                              int(counts[1]), int(counts[2]), status == K.CAPPED, rec, rec_p, rec_a,
                              last_policy_step=int(counts[3]), quiet_after=int(quiet_after),
                              first_policy_after=int(counts[4]))


def _bond_map_clamped(p: int, a: int, cls: int, k: int, u: int, opened: int) -> bool:
    """Whether a bond-map step hit the clamp at 0 or at the new half-perimeter."""
    if cls in (K.S2_LEFT, K.T_LEFT):
        return a > p - k
    if cls == K.S3_LEFT:
        return a + opened > p - k
    if cls == K.S2_RIGHT:
        return a - k - 1 < 0
    if cls == K.T_MIDDLE:
        return a > p - u or a - k + u - 1 < 0
    return False


@dataclass
class CoupledTrace:
    """Per-step record of a chain run together with its primed chain."""

    p: np.ndarray
    value: np.ndarray
    primed: np.ndarray
    events: np.ndarray
    exceptional: np.ndarray


def run_coupled(kind, q: float, steps: int, rng: np.random.Generator,
                policy=Policy.pessimistic) -> CoupledTrace:
    """Step an exploration chain and its primed chain on shared randomness.

    ``kind`` is a chain kind or ``"W"`` (site chain observed through
    ``W = p - B`` together with W'). ``exceptional[n]`` flags steps on
    which the unprimed chain used a clamp, a revival or a policy branch
    (for the quadrangulation chain only policy branches: its saturation
    branches never exceed the primed increment).
    Runs in pure Python; meant for tests and small diagnostics.
    """
    watch_w = kind in ("W", "W'")
    ckind = Kind.site if watch_w else _as_kind(kind)
    pkind = {Kind.site: PrimedKind.W if watch_w else PrimedKind.B,
             Kind.bond_map: PrimedKind.A_map, Kind.bond_quad: PrimedKind.A_quad}[ckind]
    pol = _POLICY_CODE[_as_policy(policy)]
    state = bootstrap_state(ckind, q, policy)
    p = state.p
    a = state.B if ckind is Kind.site else state.A
    primed = p - a if watch_w else a
    ps, vals, prs, evs, exc = [p], [p - a if watch_w else a], [primed], [], []
    for _ in range(steps):
        if a <= 0:
            break
        t = limit_tables(p)
        cls, k, u = K.sample_event(p, rng, t.cdf, t.zeta, t.sigma)
        v = rng.random()
        bit = 1 if v < q else 0
        g = int(K.geometric_draw(v, q)) if ckind is Kind.bond_quad else 0
        flag = 0
        if ckind is Kind.site:
            clamp, rev = K.site_flags(p, a, cls, k, u, bit)
            flag = clamp or rev
            a_new = int(K.site_transition(p, a, cls, k, u, bit))
        elif ckind is Kind.bond_map:
            a_new, used, rev = K.bond_map_transition(p, a, cls, k, u, bit, pol)
            flag = used or rev or _bond_map_clamped(p, a, cls, k, u, bit)
        else:
            a_new, used = K.bond_quad_transition(p, a, cls, k, u, g, pol)
            flag = used
        primed += prime_increment(pkind, p, cls, k, u, bit, g)
        p_new = int(K.new_half_perimeter(p, cls, k))
        p, a = p_new, int(a_new)
        ps.append(p)
        vals.append(p - a if watch_w else a)
        prs.append(primed)
        evs.append((cls, k, u))
        exc.append(flag)
    return CoupledTrace(np.array(ps), np.array(vals), np.array(prs),
                        np.array(evs, dtype=np.int64).reshape(-1, 3), np.array(exc, dtype=bool))
