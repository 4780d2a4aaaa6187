"""Compiled inner loops shared by the peeling and percolation layers.

Events are encoded as ``(cls, k, u)``: ``cls`` is one of the class codes
below, ``k`` the number of half-perimeter units lost (``X = -k``; unused for
a new vertex) and ``u`` the half-perimeter of the right-hand finite part for
three-way splits. The transition functions here are the single source of
truth: the Python-level ``*_step`` functions call them too.
"""

import math

import numpy as np
from numba import njit

NEW_VERTEX = 0
S2_LEFT = 1    # y0 new, y1 on boundary, left part infinite
S2_RIGHT = 2
S3_LEFT = 3    # y0 on boundary, y1 new
S3_RIGHT = 4
T_RIGHT = 5    # both on boundary, three parts
T_MIDDLE = 6
T_LEFT = 7

SITE = 0
BOND_MAP = 1
BOND_QUAD = 2

PESSIMISTIC = 0
OPTIMISTIC = 1

# chain status codes
NEED_TABLE = -1
RUNNING = 0
DIED = 1
SURVIVED = 2
CAPPED = 3

# free sizes of larger holes come from the scaling limit n / h^2 -> InvGamma(3/2, 9/4)
FREE_EXACT_MAX = 64

_TWO_SPLITS = np.array([S2_LEFT, S2_RIGHT, S3_LEFT, S3_RIGHT], dtype=np.int64)


@njit(cache=True)
def falling_ratio(p, k):
    """rho_p(k) = C_{p-k} (9/2)^k / C_p, zero for k >= p."""
    if k >= p:
        return 0.0
    if k <= 32:
        r = 1.0
        for m in range(k):
            r *= (p - 0.5 - m) * (p - 1.0 - m) / ((p - 1.0 / 3.0 - m) * (p - 2.0 / 3.0 - m))
        return r
    lr = (math.lgamma(p + 0.5) - math.lgamma(p + 0.5 - k)
          + math.lgamma(p) - math.lgamma(p - k)
          - math.lgamma(p + 2.0 / 3.0) + math.lgamma(p + 2.0 / 3.0 - k)
          - math.lgamma(p + 1.0 / 3.0) + math.lgamma(p + 1.0 / 3.0 - k))
    return math.exp(lr)


@njit(cache=True)
def convolve_scaled(zeta, kmax):
    """sigma[k] = sum_{i=1}^k zeta[i] zeta[k+1-i] for k = 0..kmax."""
    sigma = np.zeros(kmax + 1)
    for k in range(1, kmax + 1):
        acc = 0.0
        for i in range(1, (k + 1) // 2 + 1):
            j = k + 1 - i
            if i < j:
                acc += 2.0 * zeta[i] * zeta[j]
            elif i == j:
                acc += zeta[i] * zeta[i]
        sigma[k] = acc
    return sigma


@njit(cache=True)
def new_half_perimeter(p, cls, k):
    if cls == NEW_VERTEX:
        return p + 1
    return p - k


@njit(cache=True)
def sample_event(p, rng, cdf, zeta, sigma):
    """Draw (cls, k, u) from the exact peeling law at half-perimeter p.

    The limit law of X is drawn by inverse CDF, a jump of size k >= 1 is
    kept with probability rho_p(k) and otherwise turned into a new vertex,
    then the sub-case is drawn with weights 4 zeta_{k+1} : 3 sigma_k.
    Requires len(cdf) - 2 >= p - 1 (checked by the caller).
    """
    u = rng.random()
    if u < cdf[0]:
        return NEW_VERTEX, 0, 0
    if u < cdf[1]:
        k = 0
    else:
        lo = 1
        hi = cdf.shape[0] - 1
        if u >= cdf[hi]:
            return NEW_VERTEX, 0, 0
        while lo < hi:
            mid = (lo + hi) // 2
            if u < cdf[mid]:
                hi = mid
            else:
                lo = mid + 1
        k = lo - 1
        if k >= p:
            return NEW_VERTEX, 0, 0
        if rng.random() >= falling_ratio(p, k):
            return NEW_VERTEX, 0, 0
    two = 4.0 * zeta[k + 1]
    three = 3.0 * sigma[k]
    w = rng.random() * (two + three)
    if w < two:
        c = int(w / zeta[k + 1])
        if c > 3:
            c = 3
        return _TWO_SPLITS[c], k, 0
    c = int((w - two) / sigma[k])
    if c > 2:
        c = 2
    target = rng.random() * sigma[k]
    acc = 0.0
    uu = k
    for i in range(1, k + 1):
        acc += zeta[i] * zeta[k + 1 - i]
        if acc > target:
            uu = i
            break
    return T_RIGHT + c, k, uu


# ---------------------------------------------------------------------------
# transitions


@njit(cache=True)
def site_transition(p, b, cls, k, u, black):
    """New black count; black is the colour of a newly revealed vertex."""
    if cls == NEW_VERTEX:
        return b + black
    if cls == S2_LEFT or cls == S3_LEFT or cls == T_LEFT:
        return min(b, p - k)
    if cls == S2_RIGHT:
        return max(b - k - 1, 0) + black
    if cls == S3_RIGHT or cls == T_RIGHT:
        return max(b - k, 0)
    # middle part infinite: the left finite part takes p - j = k + 1 - u vertices
    return min(max(b - (k + 1 - u), 0), p - k)


@njit(cache=True)
def site_flags(p, b, cls, k, u, black):
    """(clamp, revival) indicators for the site branch taken."""
    clamp = 0
    revival = 0
    if cls == S2_LEFT or cls == S3_LEFT or cls == T_LEFT:
        clamp = 1 if b > p - k else 0
    elif cls == S2_RIGHT:
        if b - k - 1 < 0:
            clamp = 1
            revival = black
    elif cls == S3_RIGHT or cls == T_RIGHT:
        clamp = 1 if b - k < 0 else 0
    elif cls == T_MIDDLE:
        l = k + 1 - u
        clamp = 1 if (b - l < 0 or b - l > p - k) else 0
    return clamp, revival


@njit(cache=True)
def bond_map_transition(p, a, cls, k, u, opened, policy):
    """New cluster count on the map; returns (value, policy_used, revival).

    revival marks the branches where the count restarts at 1 through the
    new edge after every cluster vertex of the boundary was swallowed.
    """
    if cls == NEW_VERTEX:
        return a + opened, 0, 0
    if cls == S2_LEFT or cls == T_LEFT:
        return min(a, p - k), 0, 0
    if cls == S3_LEFT:
        return min(a + opened, p - k), 0, 0
    if cls == S2_RIGHT:
        base = a - k - 1
        if base >= 0:
            return base + opened, 0, 0
        return opened, 0, opened
    if cls == S3_RIGHT or cls == T_RIGHT:
        if a - k > 0:
            return a - k, 0, 0
        if opened:
            # the open new edge reconnects y_0 after the arc was swallowed
            return 1, 0, 1
        return policy, 1, 0
    # middle part infinite, right finite part of half-perimeter u
    if a > p - u:
        return p - k, 0, 0
    base = a - k + u - 1
    if base >= 0:
        return base + opened, 0, 0
    return opened, 0, opened


@njit(cache=True)
def trunc_geom(g, n):
    return g if g < n else n


@njit(cache=True)
def bond_quad_transition(p, a, cls, k, u, g, policy):
    """New cluster-boundary count on the quadrangulation.

    g is an untruncated geometric draw; each truncated variable G_q(N) of the
    transition table is realised as min(g, N). Returns (value, policy_used).
    """
    if cls == NEW_VERTEX:
        return a + trunc_geom(g, 2 * p - a + 2), 0
    pk2 = 2 * (p - k)
    if cls == S2_LEFT or cls == T_LEFT:
        if a < pk2:
            return a + trunc_geom(g, pk2 - a), 0
        return pk2, 0
    if cls == S3_LEFT:
        if a < pk2 - 1:
            return a + trunc_geom(g, pk2 - a), 0
        return pk2 - 1 + trunc_geom(g, 1), 0
    if cls == S2_RIGHT:
        if a >= 2 * k + 2:
            return a - 2 * k - 1 + trunc_geom(g, 2 * p - a + 1), 0
    elif cls == S3_RIGHT or cls == T_RIGHT:
        if a >= 2 * k + 1:
            return a - 2 * k + trunc_geom(g, 2 * p - a), 0
    else:
        if a > 2 * (p - u):
            return pk2, 0
        if a >= 2 * (k - u) + 2:
            return a - 2 * (k - u) - 1 + trunc_geom(g, 2 * (p - u) + 1 - a), 0
    if policy == PESSIMISTIC:
        return 0, 1
    return 1 + trunc_geom(g, pk2 - 1), 1


@njit(cache=True)
def geometric_draw(v, q):
    """Untruncated geometric variable, P(g >= m) = q^m, from a uniform v in [0,1)."""
    if q <= 0.0:
        return 0
    x = math.log1p(-v) / math.log(q)
    if x > 4.0e18:
        return 4000000000000000000
    return int(x)


# ---------------------------------------------------------------------------
# free-size sampling


@njit(cache=True)
def _log_pmf_first(h):
    # ln pmf(h - 1) = ln(6h / 8^h), the first nonzero term of the free law
    return math.log(6.0 * h) - h * math.log(8.0)


@njit(cache=True)
def size_cutoff(h, base_cutoff):
    c = 64 * h * h
    return c if c > base_cutoff else base_cutoff


@njit(cache=True)
def sample_free_size(h, rng, base_cutoff):
    """Inner-face count of a free quadrangulation of the 2h-gon.

    For h <= FREE_EXACT_MAX: sequential inversion up to an h-dependent cutoff,
    then a discrete power-law tail with exponent 5/2. Beyond that, h^2 times
    an inverse-gamma(3/2, 9/4) variable. Returns (size, used_approximation).
    """
    if h > FREE_EXACT_MAX:
        g = rng.standard_exponential() + 0.5 * rng.standard_normal() ** 2
        x = 2.25 * h * h / g
        if x > 1.0e15:
            x = 1.0e15
        n = int(x)
        return (n if n > h - 1 else h - 1), 1
    cutoff = size_cutoff(h, base_cutoff)
    u = rng.random()
    logt = _log_pmf_first(h)
    n = h - 1
    while logt < -700.0 and n < cutoff:
        logt += math.log((2.0 * n + h + 1.0) * (2.0 * n + h) / (4.0 * (n - h + 2.0) * (n + 2.0 * h + 1.0)))
        n += 1
    term = math.exp(logt)
    cum = 0.0
    while n < cutoff:
        cum += term
        if u < cum:
            return n, 0
        term *= (2.0 * n + h + 1.0) * (2.0 * n + h) / (4.0 * (n - h + 2.0) * (n + 2.0 * h + 1.0))
        n += 1
    v = 1.0 - rng.random()
    x = (cutoff + 1.0) * v ** (-2.0 / 3.0)
    if x > 1.0e15:
        x = 1.0e15
    return int(x), 1


# ---------------------------------------------------------------------------
# chain runners


@njit(cache=True)
def run_peeling(p, steps, start, track_volume, base_cutoff, rng, cdf, zeta, sigma,
                out_p, out_v, v, counts):
    """Advance the boundary chain, writing p_n (and v_n) into the outputs.

    Resumes at step ``start`` with current values ``p`` and ``v``; returns
    (status, step, p, v). counts = [tail draws, total draws, overflow flag].
    """
    kmax = cdf.shape[0] - 2
    n = start
    while n < steps:
        if p - 1 > kmax:
            return NEED_TABLE, n, p, v
        cls, k, u = sample_event(p, rng, cdf, zeta, sigma)
        if track_volume:
            added = 1
            if cls != NEW_VERTEX:
                if cls == T_RIGHT or cls == T_MIDDLE or cls == T_LEFT:
                    s1, t1 = sample_free_size(u, rng, base_cutoff)
                    s2, t2 = sample_free_size(k + 1 - u, rng, base_cutoff)
                    added += s1 + s2
                    counts[0] += t1 + t2
                    counts[1] += 2
                else:
                    s1, t1 = sample_free_size(k + 1, rng, base_cutoff)
                    added += s1
                    counts[0] += t1
                    counts[1] += 1
            if v > 9000000000000000000 - added:
                counts[2] = 1
                v = 9000000000000000000
            else:
                v += added
        p = new_half_perimeter(p, cls, k)
        n += 1
        out_p[n] = p
        if track_volume:
            out_v[n] = v
    return SURVIVED, n, p, v


@njit(cache=True)
def run_exploration(kind, q, policy, p, a, start, max_steps, p_cap, rng, cdf, zeta, sigma,
                    rec_steps, rec_p, rec_a, counts, quiet_after):
    """Advance one percolation exploration chain.

    ``a`` is B (site) or A (bond). Snapshots (p, a) are written at the step
    indices listed in ``rec_steps``. counts = [policy-resolved branches,
    revivals, clamps, step of the last policy-resolved branch, step of the
    first policy-resolved branch after ``quiet_after``]. Returns
    (status, step, p, a).
    """
    kmax = cdf.shape[0] - 2
    n = start
    r = 0
    while r < rec_steps.shape[0] and rec_steps[r] < n:
        r += 1
    while r < rec_steps.shape[0] and rec_steps[r] == n:
        rec_p[r] = p
        rec_a[r] = a
        r += 1
    while n < max_steps:
        if p > p_cap:
            return CAPPED, n, p, a
        if p - 1 > kmax:
            return NEED_TABLE, n, p, a
        cls, k, u = sample_event(p, rng, cdf, zeta, sigma)
        v = rng.random()
        if kind == SITE:
            bit = 1 if v < q else 0
            clamp, rev = site_flags(p, a, cls, k, u, bit)
            counts[1] += rev
            counts[2] += clamp
            a = site_transition(p, a, cls, k, u, bit)
        elif kind == BOND_MAP:
            bit = 1 if v < q else 0
            a, pol, rev = bond_map_transition(p, a, cls, k, u, bit, policy)
            counts[0] += pol
            counts[1] += rev
            if pol:
                counts[3] = n + 1
                if counts[4] == 0 and n + 1 > quiet_after:
                    counts[4] = n + 1
        else:
            g = geometric_draw(v, q)
            a, pol = bond_quad_transition(p, a, cls, k, u, g, policy)
            counts[0] += pol
            if pol:
                counts[3] = n + 1
                if counts[4] == 0 and n + 1 > quiet_after:
                    counts[4] = n + 1
        p = new_half_perimeter(p, cls, k)
        n += 1
        while r < rec_steps.shape[0] and rec_steps[r] == n:
            rec_p[r] = p
            rec_a[r] = a
            r += 1
        if a <= 0:
            return DIED, n, p, 0
    return SURVIVED, n, p, a


@njit(cache=True)
def sample_events_batch(p, count, rng, cdf, zeta, sigma, out):
    for t in range(count):
        cls, k, u = sample_event(p, rng, cdf, zeta, sigma)
        out[t, 0] = cls
        out[t, 1] = k
        out[t, 2] = u
