"""Exploration chains, primed chains and exact drifts."""

from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from peelperc.errors import DomainError
from peelperc.peeling import PeelCase, PeelEvent, chain_rng, event_pmf, sample_event
from peelperc.percolation import (
    BondMapState,
    BondQuadState,
    Kind,
    Policy,
    PrimedKind,
    PrimedState,
    SiteState,
    Status,
    bond_map_step,
    bond_quad_step,
    bootstrap_state,
    table_quad_u_update,
    table_site_w_update,
    prime_drift,
    prime_drift_limit,
    prime_step,
    run_coupled,
    run_exploration,
    site_step,
    truncated_geometric,
)

Q = Fraction(1, 3)
G_MAX = 12  # larger than every truncation level reachable from p = 2


class ScriptRng:
    """Stand-in generator returning prescribed uniforms."""

    def __init__(self, values):
        self.values = list(values)

    def random(self, size=None):
        assert size is None
        return self.values.pop(0)


def bit_uniform(bit):
    return 0.0 if bit else 0.999999


def geom_uniform(g, q):
    # geometric draw floor(log(1-v)/log q) equals g
    return 1.0 - float(q) ** (g + 0.5)


def geom_weights(q):
    w = [(g, q ** g * (1 - q)) for g in range(G_MAX)]
    w.append((G_MAX, q ** G_MAX))
    return w


# ---------------------------------------------------------------------------
# independent one-step oracles


def site_oracle(p, B, ev, black):
    """Black count after the step, from explicit boundary geometry.

    Circle vertices of the boundary are x_2, ..., x_{2p} (index m for x_{2m});
    the black arc occupies the top B of them, next to the peeled edge.
    """
    i, j = ev.i, ev.j
    case = ev.case
    new_vertex = 0
    if case is PeelCase.NewVertex:
        keep, new_vertex = range(1, p + 1), black
    elif case is PeelCase.SwallowWithNewVertexRightInf:
        keep, new_vertex = range(1, i + 1), black
    elif case is PeelCase.SwallowWithNewVertexLeftInf:
        keep = range(i + 1, p + 1)
    elif case is PeelCase.SwallowNoNewVertexRightInf:
        keep = range(1, i + 1)
    elif case is PeelCase.SwallowNoNewVertexLeftInf:
        keep = range(i, p + 1)
    elif case is PeelCase.ThreeSplitRightInf:
        keep = range(1, i + 1)
    elif case is PeelCase.ThreeSplitMiddleInf:
        keep = range(i, j + 1)
    else:
        keep = range(j + 1, p + 1)
    return sum(1 for m in keep if m > p - B) + new_vertex


def bond_map_oracle(p, A, ev, opened, optimistic):
    """Cluster count after the step, read off the bond tables on the map.

    Where the table leaves "0 or 1 with positive probability", an open new
    edge joins y_0 to the cluster (1); otherwise the policy decides.
    """
    k = -ev.delta_halfperimeter if ev.delta_halfperimeter <= 0 else 0
    case = ev.case
    undecided = 1 if (opened or optimistic) else 0
    if case is PeelCase.NewVertex:
        return A + opened
    if case in (PeelCase.SwallowWithNewVertexLeftInf, PeelCase.ThreeSplitLeftInf):
        return min(A, p - k)
    if case is PeelCase.SwallowNoNewVertexLeftInf:
        return min(A + opened, p - k)
    if case is PeelCase.SwallowWithNewVertexRightInf:
        return max(A - k - 1, 0) + opened
    if case in (PeelCase.SwallowNoNewVertexRightInf, PeelCase.ThreeSplitRightInf):
        return A - k if A - k > 0 else undecided
    i = ev.i
    if A > p - i:
        return p - k
    return max(A - k + i - 1, 0) + opened


def bond_quad_oracle(p, A, ev, g, optimistic):
    """Cluster-boundary count after the step, read off the quadrangulation tables."""
    def G(N):
        return min(g, N)

    k = -ev.delta_halfperimeter if ev.delta_halfperimeter <= 0 else 0
    case = ev.case
    fallback = 1 + G(2 * (p - k) - 1) if optimistic else 0
    if case is PeelCase.NewVertex:
        return A + G(2 * p - A + 2)
    if case in (PeelCase.SwallowWithNewVertexLeftInf, PeelCase.ThreeSplitLeftInf):
        return A + G(2 * (p - k) - A) if A < 2 * (p - k) else 2 * (p - k)
    if case is PeelCase.SwallowNoNewVertexLeftInf:
        return A + G(2 * (p - k) - A) if A < 2 * (p - k) - 1 else 2 * (p - k) - 1 + G(1)
    if case is PeelCase.SwallowWithNewVertexRightInf:
        return A - (2 * k + 1) + G(2 * p - A + 1) if A >= 2 * k + 2 else fallback
    if case in (PeelCase.SwallowNoNewVertexRightInf, PeelCase.ThreeSplitRightInf):
        return A - 2 * k + G(2 * p - A) if A >= 2 * k + 1 else fallback
    i = ev.i
    if A > 2 * (p - i):
        return 2 * (p - k)
    if A >= 2 * (k - i) + 2:
        return A - 2 * (k - i) - 1 + G(2 * (p - i) + 1 - A)
    return fallback


def one_step_law(p, state, step, outcomes, oracle):
    """Exact law of the new value from the oracle and from the implementation."""
    want, got = Counter(), Counter()
    for ev, pr in event_pmf(p).rows:
        for draw, w in outcomes:
            want[oracle(ev, draw)] += pr * w
            new = step(state, ev, draw)
            got[new] += pr * w
    return want, got


# ---------------------------------------------------------------------------
# one-step distributions


def test_site_one_step_from_2_1():
    state = SiteState(2, 1, float(Q))
    outcomes = [(1, Q), (0, 1 - Q)]
    want, got = one_step_law(
        2, state,
        lambda s, ev, b: site_step(s, ev, ScriptRng([bit_uniform(b)])).B,
        outcomes, lambda ev, b: site_oracle(2, 1, ev, b))
    assert want == got
    assert sum(want.values()) == 1


@pytest.mark.parametrize("p,B", [(3, 1), (3, 2), (4, 4), (5, 2)])
def test_site_one_step_other_states(p, B):
    state = SiteState(p, B, float(Q))
    outcomes = [(1, Q), (0, 1 - Q)]
    want, got = one_step_law(
        p, state,
        lambda s, ev, b: site_step(s, ev, ScriptRng([bit_uniform(b)])).B,
        outcomes, lambda ev, b: site_oracle(p, B, ev, b))
    assert want == got


def test_site_new_vertex_example():
    ev = PeelEvent(PeelCase.NewVertex, None, None, 1, ())
    s = SiteState(1, 1, 0.4)
    assert site_step(s, ev, ScriptRng([0.1])) == SiteState(2, 2, 0.4)
    assert site_step(s, ev, ScriptRng([0.9])) == SiteState(2, 1, 0.4)


def test_absorbed_states_reject_steps():
    ev = PeelEvent(PeelCase.NewVertex, None, None, 1, ())
    with pytest.raises(DomainError):
        site_step(SiteState(3, 0, 0.5, Status.died), ev, ScriptRng([0.1]))
    with pytest.raises(DomainError):
        bond_map_step(BondMapState(3, 0, 0.5), ev, ScriptRng([0.1]))
    with pytest.raises(DomainError):
        bond_quad_step(BondQuadState(2, 1, 0.5, Status.survived_cap), ev, ScriptRng([0.1]))


@pytest.mark.parametrize("policy", ["pessimistic", "optimistic"])
@pytest.mark.parametrize("p,A", [(2, 2), (2, 1), (3, 1), (4, 2)])
def test_bond_map_one_step(policy, p, A):
    state = BondMapState(p, A, float(Q), policy=Policy(policy))
    opt = policy == "optimistic"
    outcomes = [(1, Q), (0, 1 - Q)]
    want, got = one_step_law(
        p, state,
        lambda s, ev, b: bond_map_step(s, ev, ScriptRng([bit_uniform(b)])).A,
        outcomes, lambda ev, b: bond_map_oracle(p, A, ev, b, opt))
    assert want == got


def test_bond_map_examples():
    nv = PeelEvent(PeelCase.NewVertex, None, None, 1, ())
    s = BondMapState(3, 2, 0.5)
    assert bond_map_step(s, nv, ScriptRng([0.2])).A == 3
    assert bond_map_step(s, nv, ScriptRng([0.7])).A == 2
    # left-infinite swallow with inactive clamp keeps A
    ev = PeelEvent(PeelCase.SwallowWithNewVertexLeftInf, 1, None, -1, (2,))
    assert bond_map_step(BondMapState(4, 2, 0.5), ev, ScriptRng([0.7])).A == 2


@pytest.mark.parametrize("policy", ["pessimistic", "optimistic"])
@pytest.mark.parametrize("p,A", [(2, 2), (2, 1), (2, 4), (3, 3)])
def test_bond_quad_one_step(policy, p, A):
    state = BondQuadState(p, A, float(Q), policy=Policy(policy))
    opt = policy == "optimistic"
    want, got = one_step_law(
        p, state,
        lambda s, ev, g: bond_quad_step(s, ev, ScriptRng([geom_uniform(g, Q)])).A,
        geom_weights(Q), lambda ev, g: bond_quad_oracle(p, A, ev, g, opt))
    assert want == got


def test_bond_quad_new_vertex_example():
    ev = PeelEvent(PeelCase.NewVertex, None, None, 1, ())
    s = BondQuadState(1, 2, 0.5)
    # A -> 2 + G_q(2)
    for g, expect in [(0, 2), (1, 3), (2, 4), (7, 4)]:
        assert bond_quad_step(s, ev, ScriptRng([geom_uniform(g, 0.5)])).A == expect


def test_bootstrap_states():
    assert bootstrap_state("site", 0.5) == SiteState(1, 1, 0.5)
    assert bootstrap_state("bond-map", 0.5) == BondMapState(1, 1, 0.5)
    assert bootstrap_state("bond-quad", 0.5).A == 2
    assert bootstrap_state("bond-quad", 0.5, quad_a0=1).A == 1
    with pytest.raises(DomainError):
        bootstrap_state("bond-quad", 0.5, quad_a0=3)
    with pytest.raises(DomainError):
        bootstrap_state("triangles", 0.5)


# ---------------------------------------------------------------------------
# complementary tables


def test_site_white_table_consistency():
    rng = np.random.default_rng(12)
    capped = 0
    for _ in range(100_000):
        p = int(rng.integers(1, 60))
        B = int(rng.integers(1, p + 1))
        ev = sample_event(p, rng)
        black = int(rng.random() < 0.5)
        new = site_step(SiteState(p, B, 0.5), ev, ScriptRng([bit_uniform(black)]))
        cls, k, u = ev.code(p)
        tabulated = table_site_w_update(p, p - B, cls, k, u, black)
        if ev.case is PeelCase.ThreeSplitMiddleInf and tabulated > new.p:
            # the tabulated middle branch omits the cap at the new half-perimeter
            capped += 1
            assert new.p - new.B == new.p
        else:
            assert new.p - new.B == tabulated
    assert 0 < capped < 1000


def test_quad_undetermined_table_consistency():
    rng = np.random.default_rng(13)
    for policy in (Policy.pessimistic, Policy.optimistic):
        pol = 0 if policy is Policy.pessimistic else 1
        for _ in range(30_000):
            p = int(rng.integers(1, 40))
            A = int(rng.integers(1, 2 * p + 1))
            ev = sample_event(p, rng)
            g = int(rng.geometric(0.6)) - 1
            new = bond_quad_step(BondQuadState(p, A, 0.4, policy=policy), ev, ScriptRng([geom_uniform(g, 0.4)]))
            cls, k, u = ev.code(p)
            assert 0 <= new.A <= 2 * new.p
            assert new.U == table_quad_u_update(p, 2 * p - A, cls, k, u, g, pol)
            # 2 X = dA + dU
            assert 2 * (new.p - p) == (new.A - A) + (new.U - (2 * p - A))


# ---------------------------------------------------------------------------
# truncated geometric


def test_truncated_geometric_trivial_cases():
    rng = chain_rng(1)
    assert all(truncated_geometric(0.7, 0, rng) == 0 for _ in range(100))
    assert all(truncated_geometric(0.0, 10, rng) == 0 for _ in range(100))
    with pytest.raises(DomainError):
        truncated_geometric(1.0, 3, rng)
    with pytest.raises(DomainError):
        truncated_geometric(0.5, -1, rng)


def test_truncated_geometric_mean():
    rng = chain_rng(2)
    q, N, n = 0.5, 10, 1_000_000
    draws = np.array([truncated_geometric(q, N, rng) for _ in range(n)])
    mean = q / (1 - q) * (1 - q ** N)
    probs = np.array([q ** k * (1 - q) for k in range(N)] + [q ** N])
    var = float(np.sum(probs * (np.arange(N + 1) - mean) ** 2))
    assert abs(draws.mean() - mean) < 4 * np.sqrt(var / n)
    assert draws.max() == N


# ---------------------------------------------------------------------------
# primed chains and drifts


def test_prime_step_examples():
    nv = PeelEvent(PeelCase.NewVertex, None, None, 1, ())
    s = PrimedState(PrimedKind.B, 0, 5, 0.3)
    assert prime_step(s, nv, ScriptRng([0.1])).value == 1
    assert prime_step(s, nv, ScriptRng([0.9])).value == 0
    k = 3
    q = 0.4
    s3 = PeelEvent(PeelCase.SwallowNoNewVertexRightInf, 8 - k, None, -k, (k + 1,))
    s2 = PeelEvent(PeelCase.SwallowWithNewVertexRightInf, 8 - 1 - k, None, -k, (k + 1,))
    a = PrimedState(PrimedKind.A_quad, 0, 8, q)
    for g in (0, 2, 5):
        assert prime_step(a, s3, ScriptRng([geom_uniform(g, q)])).value == -2 * k + g
        assert prime_step(a, s2, ScriptRng([geom_uniform(g, q)])).value == -(2 * k + 1) + g
    # primed values may go negative
    assert prime_step(PrimedState(PrimedKind.B, 0, 8, 0.5), s3, ScriptRng([0.1])).value == -k


def primed_oracle_mean(kind, ev, q):
    """Expected primed increment for one event, from the primed tables."""
    k = -ev.delta_halfperimeter if ev.delta_halfperimeter <= 0 else 0
    c = ev.case
    left = c in (PeelCase.SwallowWithNewVertexLeftInf, PeelCase.SwallowNoNewVertexLeftInf,
                 PeelCase.ThreeSplitLeftInf)
    right_plain = c in (PeelCase.SwallowNoNewVertexRightInf, PeelCase.ThreeSplitRightInf)
    if kind == "B'":
        if c is PeelCase.NewVertex:
            return q
        if left:
            return Fraction(0)
        if c is PeelCase.SwallowWithNewVertexRightInf:
            return q * (-k) + (1 - q) * (-k - 1)
        if right_plain:
            return Fraction(-k)
        return Fraction(-ev.finite_part_perimeters[1])
    if kind == "W'":
        if c in (PeelCase.NewVertex, PeelCase.SwallowWithNewVertexRightInf):
            return 1 - q
        if right_plain:
            return Fraction(0)
        if left:
            return Fraction(-k)
        return Fraction(-(ev.finite_part_perimeters[0] - 1))
    if kind == "A'-map":
        if c in (PeelCase.NewVertex, PeelCase.SwallowNoNewVertexLeftInf):
            return q
        if left:
            return Fraction(0)
        if c is PeelCase.SwallowWithNewVertexRightInf:
            return q * (-k) + (1 - q) * (-k - 1)
        if right_plain:
            return Fraction(-k)
        return q * (-k + ev.i) + (1 - q) * (-k + ev.i - 1)
    mg = q / (1 - q)
    if c is PeelCase.NewVertex or left:
        return mg
    if c is PeelCase.SwallowWithNewVertexRightInf:
        return -(2 * k + 1) + mg
    if right_plain:
        return -2 * k + mg
    return -2 * (k - ev.i) - 1 + mg


@pytest.mark.parametrize("kind", ["B'", "W'", "A'-map", "A'-quad"])
def test_prime_drift_matches_table_sum(kind):
    for q in (Fraction(1, 4), Fraction(1, 3), Fraction(3, 5)):
        for p in range(1, 11):
            expect = sum(pr * primed_oracle_mean(kind, ev, q) for ev, pr in event_pmf(p).rows)
            assert prime_drift(kind, p, q) == expect


def test_prime_drift_site_monotone_in_q():
    qs = [Fraction(i, 20) for i in range(21)]
    for p in (1, 7, 40):
        vals = [prime_drift("B'", p, q) for q in qs]
        assert all(a < b for a, b in zip(vals, vals[1:]))


def test_prime_drift_limits():
    assert prime_drift_limit("B'", Fraction(2, 3)) == 0
    assert prime_drift_limit("A'-map", Fraction(1, 2)) == 0
    assert prime_drift_limit("A'-quad", Fraction(1, 3)) == 0
    assert prime_drift_limit("W'", Fraction(2, 3)) == 0


@pytest.mark.slow
def test_prime_drift_site_at_large_p():
    assert abs(float(prime_drift("B'", 2000, Fraction(2, 3)))) <= 0.01


@pytest.mark.slow
def test_prime_drift_map_at_large_p():
    for q in (Fraction(2, 5), Fraction(1, 2), Fraction(3, 5)):
        assert abs(float(prime_drift("A'-map", 2000, q) - Fraction(2, 3) * (q - Fraction(1, 2)))) <= 0.01


@pytest.mark.slow
def test_prime_drift_quad_at_large_p():
    assert abs(float(prime_drift("A'-quad", 2000, Fraction(1, 3)))) <= 0.01


def test_prime_drift_domain():
    with pytest.raises(DomainError):
        prime_drift("A'-quad", 5, 1)
    with pytest.raises(DomainError):
        prime_drift("B'", 5, 1.5)
    with pytest.raises(DomainError):
        prime_drift("B'", 0, 0.5)


@pytest.mark.parametrize("kind,q", [("site", 0.6), ("W", 0.75), ("bond-map", 0.45), ("bond-quad", 0.3)])
def test_coupling_increments_dominated(kind, q):
    for c in range(20):
        tr = run_coupled(kind, q, 3000, chain_rng(44, c))
        d_val = np.diff(tr.value)
        d_pr = np.diff(tr.primed)
        ok = ~tr.exceptional
        assert np.all(d_val[ok] <= d_pr[ok])


# ---------------------------------------------------------------------------
# full explorations


def test_site_q0_dies_quickly():
    out = [run_exploration("site", 0.0, 1000, rng=chain_rng(0, c)) for c in range(1000)]
    assert sum(o.survived for o in out) / 1000 < 0.01
    assert np.median([o.steps for o in out]) < 20


def test_site_q1_survives():
    for c in range(20):
        o = run_exploration("site", 1.0, 2000, rng=chain_rng(1, c))
        assert o.survived and o.steps == 2000
        assert o.final_value == o.final_p


def test_bond_map_supercritical_survival():
    out = [run_exploration("bond-map", 0.95, 10_000, rng=chain_rng(2, c)) for c in range(1000)]
    assert sum(o.survived for o in out) / 1000 > 0.5


def test_support_bounds_and_absorption():
    rec = list(range(0, 2001, 10))
    for kind, bound in (("site", 1), ("bond-map", 1), ("bond-quad", 2)):
        for c in range(50):
            o = run_exploration(kind, 0.5, 2000, rng=chain_rng(3, c), record_at=rec)
            assert np.all(o.record_value >= 0)
            alive = np.array(rec) <= o.steps
            assert np.all(o.record_value[alive] <= bound * o.record_p[alive])
            if o.status is Status.died:
                assert o.final_value == 0 and o.steps <= 2000
                assert np.all(o.record_value[np.array(rec) > o.steps] == 0)


def test_exploration_reproducible():
    a = run_exploration("bond-quad", 0.4, 5000, rng=chain_rng(9, 1), policy="optimistic")
    b = run_exploration("bond-quad", 0.4, 5000, rng=chain_rng(9, 1), policy="optimistic")
    assert (a.status, a.steps, a.final_p, a.final_value, a.policy_resolved) == \
        (b.status, b.steps, b.final_p, b.final_value, b.policy_resolved)


@pytest.mark.parametrize("kind,q", [("bond-map", 0.5), ("bond-quad", 0.34)])
def test_pessimistic_below_optimistic_pathwise(kind, q):
    for c in range(300):
        pes = run_exploration(kind, q, 5000, rng=chain_rng(5, c), policy="pessimistic", quiet_after=500)
        opt = run_exploration(kind, q, 5000, rng=chain_rng(5, c), policy="optimistic", quiet_after=500)
        for h in (1000, 5000):
            assert pes.alive_at(h) <= opt.alive_at(h)


def test_alive_at_semantics():
    o = run_exploration("site", 0.0, 100, rng=chain_rng(6))
    assert o.status is Status.died
    assert not o.alive_at(o.steps)
    o = run_exploration("site", 1.0, 100, rng=chain_rng(6))
    assert o.alive_at(100)
    with pytest.raises(DomainError):
        o.alive_at(101)


@pytest.mark.parametrize("kind,q", [("bond-map", 0.6), ("bond-quad", 0.45)])
def test_policy_branch_count_bounded_in_horizon(kind, q):
    short = [run_exploration(kind, q, 1000, rng=chain_rng(7, c), policy="optimistic").policy_resolved
             for c in range(400)]
    long = [run_exploration(kind, q, 10_000, rng=chain_rng(7, c), policy="optimistic").policy_resolved
            for c in range(400)]
    assert np.median(short) == np.median(long)


def test_exploration_domain():
    with pytest.raises(DomainError):
        run_exploration("bond-quad", 1.0, 10)
    with pytest.raises(DomainError):
        run_exploration("site", 0.5, 0)
    with pytest.raises(DomainError):
        run_exploration("site", 1.2, 10)
    with pytest.raises(DomainError):
        run_exploration("site", 0.5, 10, policy="lucky")
    assert Kind("bond-quad") is Kind.bond_quad
