"""Truncated coefficient arithmetic for integer-valued probability laws.

A law on {0, 1, 2, ...} is held as a fixed-length vector of PMF
coefficients; mass beyond the truncation bound is tracked as an explicit
deficiency and never renormalized away (renormalizing would silently bias
total-variation distances). The same vector doubles as the truncated
coefficient list of the probability generating function, so convolution,
compounding and series exponentiation are ordinary power-series
operations on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotADistributionError, NumericError

# Negative values above this magnitude are genuine errors, below it they
# are roundoff and get clamped to zero.
NEGATIVE_CLAMP = 1e-12

# Mass overshoot tolerated before the coefficients are rejected outright.
_MASS_SLACK = 1e-9

_COUNT_TAIL_EXIT = 1e-15


def _clean_coeffs(raw) -> np.ndarray:
    c = np.atleast_1d(np.asarray(raw, dtype=float))
    if c.ndim != 1 or c.size == 0:
        raise ValueError("coefficients must form a non-empty 1-D vector")
    if not np.all(np.isfinite(c)):
        raise NotADistributionError("coefficients must be finite")
    worst = float(c.min())
    if worst < -NEGATIVE_CLAMP:
        raise NotADistributionError(
            f"negative coefficient {worst:.3e} exceeds the roundoff clamp"
        )
    if worst < 0.0:
        c = np.where(c < 0.0, 0.0, c)
    return c


@dataclass(frozen=True)
class Pmf:
    """Truncated PMF with its lost tail mass tracked as ``deficiency``.

    ``coeffs[k]`` is P(X = k); ``deficiency = 1 - sum(coeffs)`` is the mass
    pushed beyond the truncation bound by earlier operations.
    """

    coeffs: np.ndarray
    deficiency: float = field(init=False)

    def __post_init__(self):
        c = _clean_coeffs(self.coeffs)
        total = float(c.sum())
        if total > 1.0 + _MASS_SLACK:
            raise NotADistributionError(f"total mass {total!r} exceeds 1")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "deficiency", max(0.0, 1.0 - total))

    def __len__(self) -> int:
        return self.coeffs.shape[0]

    @property
    def truncation_len(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def delta(cls, k: int, length: int | None = None) -> "Pmf":
        """Point mass at ``k``."""
        if k < 0:
            raise ValueError("support point must be nonnegative")
        n = (k + 1) if length is None else length
        c = np.zeros(max(n, k + 1))
        c[k] = 1.0
        return cls(c[:n] if length is not None else c)


@dataclass(frozen=True)
class CenteredSeries:
    """Power series in the (x-1) basis; ``coeffs[l]`` multiplies (x-1)^l."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("series must be a non-empty 1-D vector")
        if not np.all(np.isfinite(c)):
            raise NumericError("series coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __len__(self) -> int:
        return self.coeffs.shape[0]

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    def value_at(self, x: float) -> float:
        """Evaluate the series at ``x`` (Horner in the shifted variable)."""
        return float(np.polyval(self.coeffs[::-1], x - 1.0))


def convolve(a: Pmf, b: Pmf, k_trunc: int) -> Pmf:
    """Law of the sum of independent draws from ``a`` and ``b``.

    Coefficient k of the result is sum_{i+j=k} a_i b_j for k < k_trunc;
    everything beyond goes into the deficiency. The result always has
    exactly ``k_trunc`` coefficients.
    """
    if k_trunc <= 0:
        raise ValueError("truncation length must be positive")
    full = np.convolve(a.coeffs, b.coeffs)[:k_trunc]
    out = np.zeros(k_trunc)
    out[: full.shape[0]] = full
    return Pmf(out)


def compound(count: Pmf, jump: Pmf, k_trunc: int) -> Pmf:
    """Law of a ``count``-indexed sum of i.i.d. ``jump`` draws.

    Coefficient view of composing the count PGF with the jump PGF:
    sum_k count_k * (jump pgf)^k, truncated at ``k_trunc``. Jump powers are
    accumulated iteratively with an early exit once the remaining count
    tail is below 1e-15.
    """
    if k_trunc <= 0:
        raise ValueError("truncation length must be positive")
    cw = count.coeffs
    out = np.zeros(k_trunc)
    out[0] = cw[0]
    # tail[k] = mass of `count` still unapplied after index k
    tail = count.deficiency + np.concatenate(
        [np.cumsum(cw[::-1])[-2::-1], [0.0]]
    )
    power = np.zeros(k_trunc)
    power[0] = 1.0
    for k in range(1, cw.shape[0]):
        if tail[k - 1] < _COUNT_TAIL_EXIT:
            break
        power = np.convolve(power, jump.coeffs)[:k_trunc]
        if cw[k] != 0.0:
            out += cw[k] * power
    return Pmf(out)


def evaluate(p: Pmf, x: float) -> float:
    """PGF value sum_k coeffs[k] x^k, Horner order from the highest index."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("PGF argument must lie in [0, 1]")
    return float(np.polyval(p.coeffs[::-1], x))


def factorial_moment(p: Pmf, k: int) -> float:
    """k-th factorial moment sum_j j(j-1)...(j-k+1) coeffs[j]."""
    if k < 1:
        raise ValueError("moment order must be >= 1")
    j = np.arange(p.coeffs.shape[0], dtype=float)
    ff = np.ones_like(j)
    for i in range(k):
        ff *= j - i
    return float(np.sum(ff * p.coeffs))


def _comb_column(lo: int, hi: int, k: int) -> np.ndarray:
    """C(l, k) for l = lo..hi as floats, falling back to logs on overflow."""
    try:
        return np.array([float(math.comb(l, k)) for l in range(lo, hi + 1)])
    except OverflowError:
        ls = np.arange(lo, hi + 1, dtype=float)
        logs = (
            np.vectorize(math.lgamma)(ls + 1.0)
            - math.lgamma(k + 1.0)
            - np.vectorize(math.lgamma)(ls - k + 1.0)
        )
        return np.exp(logs)


def to_centered(p: Pmf) -> CenteredSeries:
    """Rewrite sum p_k x^k as sum c_l (x-1)^l; c_l = sum_{k>=l} p_k C(k,l)."""
    n = p.coeffs.shape[0]
    c = np.empty(n)
    for l in range(n):
        c[l] = np.sum(_comb_column(l, n - 1, l) * p.coeffs[l:])
    return CenteredSeries(c)


def from_centered(c: CenteredSeries, k_trunc: int | None = None) -> Pmf:
    """Inverse of :func:`to_centered`: p_k = sum_{l>=k} c_l C(l,k) (-1)^(l-k).

    The alternating sums are accumulated with numpy's pairwise summation to
    limit cancellation.
    """
    n = c.coeffs.shape[0]
    k_out = n if k_trunc is None else k_trunc
    p = np.zeros(k_out)
    for k in range(min(k_out, n)):
        signs = np.where((np.arange(k, n) - k) % 2 == 0, 1.0, -1.0)
        p[k] = np.sum(_comb_column(k, n - 1, k) * c.coeffs[k:] * signs)
    return Pmf(p)


def exp_series(a: np.ndarray, k_trunc: int) -> Pmf:
    """Coefficients of exp of a power series given in the x basis.

    Standard recurrence b_0 = e^{a_0}, n b_n = sum_{k=1..n} k a_k b_{n-k}.
    Raises :class:`NotADistributionError` if the result has a negative
    coefficient beyond the roundoff clamp.
    """
    if k_trunc <= 0:
        raise ValueError("truncation length must be positive")
    a = np.asarray(a, dtype=float)
    b = np.zeros(k_trunc)
    b[0] = math.exp(a[0])
    ka = np.arange(a.shape[0]) * a
    for n in range(1, k_trunc):
        m = min(n, a.shape[0] - 1)
        b[n] = np.dot(ka[1 : m + 1], b[n - 1 :: -1][:m]) / n
    if not np.all(np.isfinite(b)):
        raise NumericError("series exponentiation overflowed")
    return Pmf(b)


def exp_centered(c: CenteredSeries, k_trunc: int) -> Pmf:
    """PMF whose PGF is exp of the centered series ``c``.

    Requires c_0 = 0 so the PGF equals 1 at x = 1. Only the ``k_trunc``
    x-basis columns that feed the output are transformed. A negative output
    coefficient beyond the clamp signals that the series does not define a
    distribution.
    """
    if abs(float(c.coeffs[0])) > 1e-12:
        raise ValueError("centered series must vanish at x = 1 (c_0 = 0)")
    n = c.coeffs.shape[0]
    a = np.zeros(min(k_trunc, n))
    for k in range(a.shape[0]):
        signs = np.where((np.arange(k, n) - k) % 2 == 0, 1.0, -1.0)
        a[k] = np.sum(_comb_column(k, n - 1, k) * c.coeffs[k:] * signs)
    return exp_series(a, k_trunc)


def poisson_coeffs(lam: float, k_trunc: int) -> np.ndarray:
    """Poisson(lam) coefficients by the stable recurrence p_{k+1} = p_k lam/(k+1)."""
    if lam < 0:
        raise ValueError("Poisson mean must be nonnegative")
    if k_trunc <= 0:
        raise ValueError("truncation length must be positive")
    out = np.empty(k_trunc)
    out[0] = math.exp(-lam)
    for k in range(k_trunc - 1):
        out[k + 1] = out[k] * lam / (k + 1)
    return out
