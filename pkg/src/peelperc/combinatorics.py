"""Exact enumeration quantities for quadrangulations with a boundary.

Every probability that the peeling and percolation layers need is built
from three families of numbers:

* ``a_{n,p}``, the number of rooted quadrangulations of a 2p-gon with n
  inner faces (boundary not required to be simple);
* the rational parts ``R_p`` of the asymptotic constants ``C_p``, whose
  irrational prefactor ``1/(2 sqrt(pi))`` cancels in every ratio;
* the partition functions ``Z_p = sum_n b_{n,p} 12^{-n}``, where ``b_{n,p}``
  counts the same objects with a simple boundary (:func:`simple_quad_count`).

Exact values are returned as ``gmpy2.mpq`` (aliased ``ExactRational``);
they compare and hash equal to ``fractions.Fraction``. Float helpers work
in log space so that they stay finite far beyond the exact range.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import gmpy2
import numpy as np
from scipy import special

from .errors import DomainError

ExactRational = gmpy2.mpq

#: Largest factorial argument served from the exact memo table by default.
EXACT_FACTORIAL_BOUND = 10_000

#: Limit law of the half-perimeter increment: P(X = +1) and P(X = 0).
LIMIT_P_PLUS = gmpy2.mpq(3, 8)
LIMIT_P_ZERO = gmpy2.mpq(4, 9)

#: Radius of convergence of Z(x) = sum_k Z_k x^k.
Z_RADIUS = 2.0 / 9.0

_TWO_THIRDS = gmpy2.mpq(2, 3)
_LOG_TWO_THIRDS = math.log(2.0 / 3.0)
_LOG_SQRT_PI_2 = math.log(2.0 * math.sqrt(math.pi))


def _check_positive(name, value):
    if int(value) != value or value < 1:
        raise DomainError(f"{name} must be a positive integer, got {value!r}")


def _check_nonneg(name, value):
    if int(value) != value or value < 0:
        raise DomainError(f"{name} must be a nonnegative integer, got {value!r}")


@lru_cache(maxsize=4096)
def _fact(n: int):
    return gmpy2.fac(n)


def _log_fact(n: int) -> float:
    return math.lgamma(n + 1.0)


# ---------------------------------------------------------------------------
# counting


def quad_count(n: int, p: int) -> int:
    """Number ``a_{n,p}`` of rooted quadrangulations of the 2p-gon.

    Parameters
    ----------
    n : int
        Number of inner faces, ``n >= 0``.
    p : int
        Half-perimeter of the boundary, ``p >= 1``.

    Returns
    -------
    int
        ``3^n (2p)!/(p!(p-1)!) * (2n+p-1)!/(n!(n+p+1)!)``.
    """
    _check_nonneg("n", n)
    _check_positive("p", p)
    n, p = int(n), int(p)
    num = gmpy2.mpz(3) ** n * _fact(2 * p) * _fact(2 * n + p - 1)
    den = _fact(p) * _fact(p - 1) * _fact(n) * _fact(n + p + 1)
    q, r = gmpy2.t_divmod(num, den)
    assert r == 0
    return int(q)


def catalan(p: int) -> int:
    """Catalan number ``(2p)!/(p!(p+1)!)``; equals ``quad_count(0, p)``."""
    _check_nonneg("p", p)
    return int(gmpy2.comb(2 * p, p) // (p + 1))


def quad_count_log(n: int, p: int, exact_bound: int = EXACT_FACTORIAL_BOUND) -> float:
    """Natural log of ``a_{n,p}``.

    Below ``exact_bound`` the exact integer is formed and its log taken, which
    is correctly rounded. Beyond it the log-factorials are summed with
    ``lgamma``.
    """
    _check_nonneg("n", n)
    _check_positive("p", p)
    if 2 * n + 2 * p <= exact_bound:
        return math.log(quad_count(n, p))
    return (
        n * math.log(3.0)
        + _log_fact(2 * p) - _log_fact(p) - _log_fact(p - 1)
        + _log_fact(2 * n + p - 1) - _log_fact(n) - _log_fact(n + p + 1)
    )


def simple_quad_count(n: int, p: int) -> int:
    """Number of rooted quadrangulations of the 2p-gon with a simple boundary.

    ``3^{n-p} (3p)!/(p!(2p-1)!) * (2n+p-1)!/((n-p+1)!(n+2p)!)`` for
    ``n >= p - 1`` and 0 below. These are the counts whose generating
    function at 1/12 is :func:`z_value` and whose asymptotic constant is
    ``C_p``; the general-boundary counts of :func:`quad_count` sum to a
    different value.
    """
    _check_nonneg("n", n)
    _check_positive("p", p)
    n, p = int(n), int(p)
    if n < p - 1:
        return 0
    val = (gmpy2.mpq(3) ** (n - p) * _fact(3 * p) * _fact(2 * n + p - 1)
           / (_fact(p) * _fact(2 * p - 1) * _fact(n - p + 1) * _fact(n + 2 * p)))
    assert val.denominator == 1
    return int(val.numerator)


def simple_quad_count_log(n: int, p: int) -> float:
    """Natural log of :func:`simple_quad_count`; ``-inf`` when it vanishes."""
    _check_nonneg("n", n)
    _check_positive("p", p)
    if n < p - 1:
        return -math.inf
    if 2 * n + 3 * p <= EXACT_FACTORIAL_BOUND:
        return math.log(simple_quad_count(n, p))
    return (
        (n - p) * math.log(3.0)
        + _log_fact(3 * p) - _log_fact(p) - _log_fact(2 * p - 1)
        + _log_fact(2 * n + p - 1) - _log_fact(n - p + 1) - _log_fact(n + 2 * p)
    )


# ---------------------------------------------------------------------------
# C_p ratios and partition functions


@lru_cache(maxsize=None)
def _r_value(p: int):
    # rational part of C_p:  C_p = R_p / (2 sqrt(pi))
    return _TWO_THIRDS ** p * gmpy2.mpq(_fact(3 * p), _fact(p) * _fact(2 * p - 1))


def log_r_value(p: int) -> float:
    """``ln R_p`` where ``C_p = R_p / (2 sqrt(pi))``."""
    return p * _LOG_TWO_THIRDS + math.lgamma(3 * p + 1.0) - math.lgamma(p + 1.0) - math.lgamma(2.0 * p)


def c_value_float(p: int) -> float:
    """The asymptotic constant ``C_p`` as a float (includes ``1/(2 sqrt(pi))``)."""
    _check_positive("p", p)
    return math.exp(log_r_value(p) - _LOG_SQRT_PI_2)


def c_ratio(p1: int, p2: int) -> ExactRational:
    """Exact ratio ``C_{p1} / C_{p2}``.

    Examples
    --------
    >>> c_ratio(2, 1)
    mpq(20,3)
    """
    _check_positive("p1", p1)
    _check_positive("p2", p2)
    return _r_value(int(p1)) / _r_value(int(p2))


def log_c_ratio(p1: int, p2: int) -> float:
    """``ln(C_{p1}/C_{p2})`` in floating point."""
    return log_r_value(p1) - log_r_value(p2)


@lru_cache(maxsize=None)
def z_value(p: int) -> ExactRational:
    """Partition function ``Z_p = 2 (2/3)^p (3p-3)! / (p! (2p-1)!)``."""
    _check_positive("p", p)
    p = int(p)
    return 2 * _TWO_THIRDS ** p * gmpy2.mpq(_fact(3 * p - 3), _fact(p) * _fact(2 * p - 1))


def log_z_value(p: int) -> float:
    """``ln Z_p`` in floating point."""
    _check_positive("p", p)
    return (math.log(2.0) + p * _LOG_TWO_THIRDS + math.lgamma(3.0 * p - 2.0)
            - math.lgamma(p + 1.0) - math.lgamma(2.0 * p))


class _ConvolutionCache:
    """Exact ``S_k = sum_{i=1}^k Z_i Z_{k+1-i}`` for all k up to a bound.

    With ``Z_i = 2^{i+1} 3^{-i} b_i`` and ``b_i = binom(3i-3, i-1)/(i(2i-1))``
    one has ``S_k = 2^{k+3} 3^{-(k+1)} sum_i b_i b_{k+1-i}``. The ``b_i`` are
    scaled to integers by a common denominator ``D`` so the convolution runs
    on plain big integers, which is much faster than rational arithmetic.
    """

    def __init__(self):
        self.kmax = 0
        self.den = gmpy2.mpz(1)
        self.b = [gmpy2.mpz(0)]      # b[i] = b_i * den, index 0 unused
        self.t = [gmpy2.mpz(0)]      # t[k] = den^2 * sum_i b_i b_{k+1-i}
        self.s = {}

    def extend(self, kmax: int):
        if kmax <= self.kmax:
            return
        old = self.kmax
        den = self.den
        for i in range(old + 1, kmax + 1):
            den = gmpy2.lcm(den, i * (2 * i - 1))
        scale = den // self.den
        if scale != 1:
            self.b = [x * scale for x in self.b]
            sq = scale * scale
            self.t = [x * sq for x in self.t]
            self.s = {}
        for i in range(old + 1, kmax + 1):
            self.b.append(gmpy2.comb(3 * i - 3, i - 1) * (den // (i * (2 * i - 1))))
        b = self.b
        for k in range(old + 1, kmax + 1):
            half = k // 2
            acc = gmpy2.mpz(0)
            for i in range(1, half + 1):
                acc += b[i] * b[k + 1 - i]
            acc *= 2
            if k % 2 == 1:
                m = (k + 1) // 2
                acc += b[m] * b[m]
            self.t.append(acc)
        self.den = den
        self.kmax = kmax

    def get(self, k: int):
        if k > self.kmax:
            self.extend(max(k, 2 * self.kmax, 64))
        val = self.s.get(k)
        if val is None:
            val = gmpy2.mpq(gmpy2.mpz(2) ** (k + 3) * self.t[k], gmpy2.mpz(3) ** (k + 1) * self.den ** 2)
            self.s[k] = val
        return val


_CONV = _ConvolutionCache()


def z_convolution(k: int) -> ExactRational:
    """Exact ``S_k = sum_{i=1}^{k} Z_i Z_{k+1-i}`` (``S_0 = 0``)."""
    _check_nonneg("k", k)
    if k == 0:
        return gmpy2.mpq(0)
    return _CONV.get(int(k))


def z_convolution_range(kmax: int) -> list:
    """List ``[S_0, S_1, ..., S_kmax]``; cheaper than repeated calls."""
    _check_nonneg("kmax", kmax)
    if kmax > _CONV.kmax:
        _CONV.extend(kmax)
    return [gmpy2.mpq(0)] + [_CONV.get(k) for k in range(1, kmax + 1)]


def q_tail(k: int) -> ExactRational:
    """Limit probability ``q_k = lim_p P(X = -k | p)``.

    ``q_k = (2/9)^k (Z_{k+1}/3 + S_k/4)`` for ``k >= 1``. For ``k = 0`` the
    p-independent value 4/9 is returned. The atom at ``+1`` is
    :data:`LIMIT_P_PLUS`.
    """
    _check_nonneg("k", k)
    if k == 0:
        return LIMIT_P_ZERO
    k = int(k)
    return gmpy2.mpq(2, 9) ** k * (z_value(k + 1) / 3 + z_convolution(k) / 4)


# ---------------------------------------------------------------------------
# generating series Z(x)


def z_series_eval(x: float, derivative_order: int = 0) -> float:
    """Closed-form value of ``Z(x)`` or ``Z'(x)`` for ``0 <= x <= 2/9``.

    ``Z(x) = -2/3 + (2/3) 2F1(-2/3, -1/3; 1/2; 9x/2)`` and
    ``Z'(x) = 4 sqrt(2/(9x)) sin(arcsin(sqrt(9x/2)) / 3)``.
    """
    x = float(x)
    if not (0.0 <= x <= Z_RADIUS * (1 + 1e-15)):
        raise DomainError(f"x must lie in [0, 2/9], got {x}")
    x = min(x, Z_RADIUS)
    if derivative_order == 0:
        if x == 0.0:
            return 0.0
        return -2.0 / 3.0 + 2.0 / 3.0 * float(special.hyp2f1(-2.0 / 3.0, -1.0 / 3.0, 0.5, 4.5 * x))
    if derivative_order == 1:
        if x == 0.0:
            return 4.0 / 3.0
        s = math.sqrt(min(4.5 * x, 1.0))
        return 4.0 / s * math.sin(math.asin(s) / 3.0)
    raise DomainError("derivative_order must be 0 or 1")


def z_scaled_terms(kmax: int) -> np.ndarray:
    """Float array ``zeta[k] = Z_k (2/9)^k`` for ``k = 0..kmax`` (``zeta[0] = 0``).

    Built by the exact term ratio ``Z_{k+1}/Z_k = (3k-1)(3k-2)/((k+1)(2k+1))``
    so it never overflows.
    """
    zeta = np.zeros(kmax + 1)
    if kmax >= 1:
        zeta[1] = 8.0 / 27.0
    for k in range(1, kmax):
        zeta[k + 1] = zeta[k] * (2.0 / 9.0) * (3 * k - 1) * (3 * k - 2) / ((k + 1) * (2 * k + 1))
    return zeta


def z_series_partial(x: float, derivative_order: int = 0, terms: int = 100_000,
                     tail_correction: bool = False) -> float:
    """Truncated series ``sum_{k<=terms} Z_k x^k`` (or its derivative).

    With ``tail_correction`` the omitted terms are added from the power law
    ``Z_k (2/9)^k ~ A k^{-5/2}``, with ``A`` fitted on the last term and the
    power sums evaluated by the Hurwitz zeta function. This matters at
    ``x = 2/9`` for the derivative, whose tail decays only like
    ``terms^{-1/2}``.
    """
    x = float(x)
    if not (0.0 <= x <= Z_RADIUS * (1 + 1e-15)):
        raise DomainError(f"x must lie in [0, 2/9], got {x}")
    k = np.arange(terms + 1, dtype=float)
    ratio = x / Z_RADIUS
    zeta = z_scaled_terms(terms)
    with np.errstate(divide="ignore"):
        powers = np.where(k > 0, ratio ** k, 0.0)
    if derivative_order not in (0, 1):
        raise DomainError("derivative_order must be 0 or 1")
    if derivative_order == 0:
        total = float(np.sum(zeta * powers))
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(k > 0, k * ratio ** np.maximum(k - 1, 0), 0.0)
        total = float(np.sum(zeta * w) / Z_RADIUS)
    if tail_correction and terms >= 1 and ratio == 1.0:
        amp = zeta[terms] * terms ** 2.5
        if derivative_order == 0:
            total += amp * float(special.zeta(2.5, terms + 1))
        else:
            total += amp * float(special.zeta(1.5, terms + 1)) / Z_RADIUS
    return total


# ---------------------------------------------------------------------------
# free (Boltzmann) size distribution


@dataclass
class SizeDistribution:
    """Law of the inner-face count of a free quadrangulation of the 2p-gon.

    Attributes
    ----------
    half_perimeter : int
    pmf : numpy.ndarray
        ``pmf[n] = a_{n,p} 12^{-n} / Z_p`` for ``n = 0..cutoff``.
    tail_mass : float
        ``1 - sum(pmf)``, the mass beyond the cutoff.
    tail_exponent : float
        Exponent of the pmf tail, 5/2.
    tail_constant : float
        ``tail_mass * cutoff^{3/2}``, the reported K in ``tail_mass <= K cutoff^{-3/2}``.
    asymptotic_tail_constant : float
        ``(2/3) C_p / Z_p``, the limit of the above as the cutoff grows.
    warning : bool
        Set when the cutoff leaves more than half the mass in the tail.
    """

    half_perimeter: int
    pmf: np.ndarray
    tail_mass: float
    tail_exponent: float = 2.5
    tail_constant: float = 0.0
    asymptotic_tail_constant: float = 0.0
    warning: bool = False
    _cdf: np.ndarray = field(default=None, repr=False)

    @property
    def cutoff(self) -> int:
        return len(self.pmf) - 1

    def sample(self, rng: np.random.Generator, size=None):
        """Draw sizes by inverse CDF, with a power-law tail beyond the cutoff."""
        if self._cdf is None:
            self._cdf = np.cumsum(self.pmf)
        u = rng.random(size)
        n = np.searchsorted(self._cdf, u, side="right")
        over = n > self.cutoff
        if np.any(over):
            v = rng.random(np.shape(u))
            tail = np.floor((self.cutoff + 1) * v ** (-2.0 / 3.0))
            n = np.where(over, tail, n)
        if size is None:
            return int(n)
        return n.astype(np.int64)


def free_size_distribution(p: int, cutoff: int = 100_000) -> SizeDistribution:
    """Boltzmann law ``simple_quad_count(n, p) 12^{-n} / Z_p`` truncated at ``cutoff``.

    The support starts at ``n = p - 1`` where ``pmf = 6p / 8^p``. Later terms
    follow from the ratio
    ``pmf(n+1)/pmf(n) = (2n+p+1)(2n+p) / (4(n-p+2)(n+2p+1))``
    accumulated in log space with extended precision.
    """
    _check_positive("p", p)
    _check_positive("cutoff", cutoff)
    p, cutoff = int(p), int(cutoff)
    pmf_ld = np.zeros(cutoff + 1, dtype=np.longdouble)
    n0 = p - 1
    if n0 <= cutoff:
        log_first = math.log(6.0 * p) - p * math.log(8.0)
        m = np.arange(n0, cutoff, dtype=np.int64)
        num = (2 * m + p + 1) * (2 * m + p)
        den = 4 * (m - p + 2) * (m + 2 * p + 1)
        log_ratio = np.log1p((num - den).astype(np.float64) / den.astype(np.float64))
        log_pmf = np.empty(cutoff + 1 - n0, dtype=np.longdouble)
        log_pmf[0] = log_first
        log_pmf[1:] = np.longdouble(log_first) + np.cumsum(log_ratio.astype(np.longdouble))
        pmf_ld[n0:] = np.exp(log_pmf)
    tail = float(max(np.longdouble(1) - pmf_ld.sum(), np.longdouble(0)))
    pmf = pmf_ld.astype(np.float64)
    asym = 2.0 / 3.0 * math.exp(log_r_value(p) - _LOG_SQRT_PI_2 - log_z_value(p))
    warn = tail > 0.5
    if warn:
        warnings.warn(f"cutoff {cutoff} leaves tail mass {tail:.3f} at p={p}", RuntimeWarning, stacklevel=2)
    return SizeDistribution(
        half_perimeter=p,
        pmf=pmf,
        tail_mass=tail,
        tail_constant=tail * cutoff ** 1.5,
        asymptotic_tail_constant=asym,
        warning=warn,
    )


# ---------------------------------------------------------------------------
# spatial Markov probabilities


def _check_perimeters(n, perimeters: Sequence[int]):
    _check_nonneg("n", n)
    if len(perimeters) == 0:
        raise DomainError("perimeter list must be nonempty")
    for p in perimeters:
        _check_positive("half-perimeter", p)


def infinite_face_probability(n: int, perimeters: Sequence[int], j: int) -> ExactRational:
    """Probability that a quadrangulation with holes sits in the UIPQ with hole j infinite.

    ``12^{-n} (C_{p_j}/C_1) prod_{i != j} Z_{p_i}``.
    """
    _check_perimeters(n, perimeters)
    if not (0 <= j < len(perimeters)):
        raise DomainError(f"hole index {j} out of range for {len(perimeters)} holes")
    val = c_ratio(perimeters[j], 1)
    for i, p in enumerate(perimeters):
        if i != j:
            val *= z_value(p)
    return val / gmpy2.mpz(12) ** int(n)


def occupation_probability(n: int, perimeters: Sequence[int]) -> ExactRational:
    """Probability that a rooted quadrangulation with holes is contained in the UIPQ.

    ``12^{-n} sum_i (C_{p_i}/C_1) prod_{j != i} Z_{p_j}`` with ``n`` inner faces
    and hole half-perimeters ``perimeters``.
    """
    _check_perimeters(n, perimeters)
    zs = [z_value(p) for p in perimeters]
    total = gmpy2.mpq(0)
    for i, p in enumerate(perimeters):
        term = c_ratio(p, 1)
        for j, zj in enumerate(zs):
            if j != i:
                term *= zj
        total += term
    return total / gmpy2.mpz(12) ** int(n)
