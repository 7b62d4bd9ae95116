"""Closed-form linear-fractional PGF calculus.

The two-parameter family f(s) = 1 - a/(1-b) + a s/(1-b s) is closed under
composition and is pinned down by its first two derivatives at 1, which
makes exact evaluation of composed offspring maps possible. This module
holds that calculus plus the derivative recursions of composed maps at 1
(chain products for order 1, weighted sums for order 2, and the full
composite-derivative accumulation for higher orders).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

from .errors import NumericError, UnsupportedFamilyError

if TYPE_CHECKING:  # pragma: no cover
    from .families import ScenarioSpec


@dataclass(frozen=True)
class LinearFractional:
    """Parameters (alpha, beta) of f(s) = 1 - a/(1-b) + a s/(1-b s).

    beta = 0 degenerates to Bernoulli(alpha); a proper PGF needs
    alpha in (0, 1], beta in [0, 1) and alpha + beta <= 1.
    """

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must lie in (0, 1]")
        if not (0.0 <= self.beta < 1.0):
            raise ValueError("beta must lie in [0, 1)")
        if self.alpha + self.beta > 1.0 + 1e-12:
            raise ValueError("alpha + beta must not exceed 1")

    def value_at(self, x: float) -> float:
        return 1.0 - self.alpha / (1.0 - self.beta) + self.alpha * x / (
            1.0 - self.beta * x
        )

    def deriv_at_1(self, s: int) -> float:
        """s-th derivative at 1: s! alpha beta^(s-1) / (1-beta)^(s+1)."""
        if s < 1:
            raise ValueError("derivative order must be >= 1")
        if s == 1:
            return self.alpha / (1.0 - self.beta) ** 2
        return (
            math.factorial(s)
            * self.alpha
            * self.beta ** (s - 1)
            / (1.0 - self.beta) ** (s + 1)
        )

    def pmf_coeffs(self, k_trunc: int) -> np.ndarray:
        """p_0 = 1 - alpha/(1-beta), p_k = alpha beta^(k-1) for k >= 1."""
        out = np.zeros(k_trunc)
        out[0] = 1.0 - self.alpha / (1.0 - self.beta)
        if k_trunc > 1:
            out[1:] = self.alpha * self.beta ** np.arange(k_trunc - 1)
        return out


IDENTITY = LinearFractional(1.0, 0.0)


def lf_from_derivatives(d1: float, d2: float) -> LinearFractional:
    """Invert (f'(1), f''(1)) = (d1, d2) to the (alpha, beta) parameters.

    alpha = 4 d1^3 / (2 d1 + d2)^2, beta = d2 / (2 d1 + d2).
    """
    if d1 <= 0.0:
        raise ValueError("first derivative must be positive")
    if d2 < 0.0:
        raise ValueError("second derivative must be nonnegative")
    denom = 2.0 * d1 + d2
    return LinearFractional(4.0 * d1**3 / denom**2, d2 / denom)


def lf_compose(outer: LinearFractional, inner: LinearFractional) -> LinearFractional:
    """Parameters of outer(inner(.)), via chain-rule derivatives at 1."""
    d1o, d2o = outer.deriv_at_1(1), outer.deriv_at_1(2)
    d1i, d2i = inner.deriv_at_1(1), inner.deriv_at_1(2)
    return lf_from_derivatives(d1o * d1i, d2o * d1i**2 + d1o * d2i)


# ---------------------------------------------------------------------------
# composed offspring maps of a scenario


def _require_lf(spec: "ScenarioSpec") -> None:
    if spec.offspring.kind not in ("linear_fractional", "bernoulli"):
        raise UnsupportedFamilyError(
            "closed-form composed maps need linear-fractional or Bernoulli offspring"
        )


def chain_logs(spec: "ScenarioSpec", n: int) -> np.ndarray:
    """S[l] = sum_{m=2..l} log rho_m for l = 0..n (S[0] = S[1] = 0).

    Composed maps G_{j+1} o ... o G_n with j >= 1 never involve rho_1, so
    the accumulation starts at l = 2; rho_1 = 0 (a legal Bernoulli edge)
    then cannot poison the chain products. Products that do include rho_1
    multiply it back in explicitly.
    """
    s = np.zeros(n + 1)
    if n >= 2:
        delta = spec.offspring.one_minus_rho(np.arange(2, n + 1))
        s[2:] = np.cumsum(np.log1p(-delta))
    return s


def chain_product(spec: "ScenarioSpec", j: int, n: int) -> float:
    """rho_[j,n] = rho_{j+1} ... rho_n, computed in log space."""
    if j > n:
        raise ValueError("need j <= n")
    s = chain_logs(spec, n)
    val = float(np.exp(s[n] - s[j]))
    if j == 0 and n >= 1:
        val *= float(spec.offspring.mean(1))
    return val


def composed_params_all(spec: "ScenarioSpec", n: int):
    """(alpha_j, beta_j) arrays of the maps G_{j+1} o ... o G_n, j = 0..n.

    First derivative at 1 is the product rho_{j+1}...rho_n (computed in log
    space); second derivative is the weighted sum over interior factors.
    """
    _require_lf(spec)
    if n == 0:
        return np.ones(1), np.zeros(1)
    s = chain_logs(spec, n)
    rho1 = float(spec.offspring.mean(1))
    d1 = np.exp(s[n] - s)  # d1[j] = rho_[j,n] for j >= 1
    d1[0] *= rho1
    g2 = spec.offspring.second_deriv(np.arange(1, n + 1))
    # w_i = G_i''(1) * exp(S_{i-1}) * rho_[i,n]^2 for i = 1..n
    w = g2 * np.exp(s[:-1]) * np.exp(2.0 * (s[n] - s[1:]))
    suffix = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
    d2 = np.exp(-s) * suffix
    d2[0] = w[0] + rho1 * suffix[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        denom = 2.0 * d1 + d2
        alpha = 4.0 * d1**3 / denom**2
        beta = d2 / denom
    return alpha, beta


def composed_map(spec: "ScenarioSpec", j: int, n: int) -> LinearFractional:
    """Exact parameters of the composed map G_{j+1} o ... o G_n."""
    if j > n:
        raise ValueError("need j <= n")
    if j == n:
        return IDENTITY
    alpha, beta = composed_params_all(spec, n)
    return LinearFractional(float(alpha[j]), float(beta[j]))


def _bernoulli_rates(spec: "ScenarioSpec", n: int) -> np.ndarray:
    if spec.immigration.kind != "bernoulli":
        raise UnsupportedFamilyError(
            "the exact product form needs Bernoulli immigration"
        )
    # same clamp as the engine's PMF path, so the two routes stay oracles
    # for each other even on rate rules that overshoot 1 early
    return np.minimum(spec.immigration.mean(np.arange(1, n + 1)), 1.0)


def generation_pgf(spec: "ScenarioSpec", n: int, x: float) -> float:
    """F_n(x) as the exact product prod_j [1 + m_j (Gbar_{j+1,n}(x) - 1)]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("PGF argument must lie in [0, 1]")
    if n == 0:
        return 1.0
    m = _bernoulli_rates(spec, n)
    alpha, beta = composed_params_all(spec, n)
    a, b = alpha[1 : n + 1], beta[1 : n + 1]
    gbar = 1.0 - a / (1.0 - b) + a * x / (1.0 - b * x)
    return float(np.prod(1.0 + m * (gbar - 1.0)))


def accompanying_pgf(spec: "ScenarioSpec", n: int, x: float) -> float:
    """Exponential companion exp{sum_j m_j (Gbar_{j+1,n}(x) - 1)}."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("PGF argument must lie in [0, 1]")
    if n == 0:
        return 1.0
    m = _bernoulli_rates(spec, n)
    alpha, beta = composed_params_all(spec, n)
    a, b = alpha[1 : n + 1], beta[1 : n + 1]
    gbar = 1.0 - a / (1.0 - b) + a * x / (1.0 - b * x)
    return float(math.exp(np.sum(m * (gbar - 1.0))))


# ---------------------------------------------------------------------------
# derivatives of composed maps at 1


def faa_weight(k: int, i: int) -> float:
    """Pair weight in the f''(g) coefficient: C(k,i), halved at the midpoint."""
    if i == k - i:
        return 0.5 * math.comb(k, i)
    return float(math.comb(k, i))


def faa_f2_coefficient(g_derivs, k: int) -> float:
    """Coefficient of f''(g) in d^k/dx^k f(g(x)).

    ``g_derivs[i-1]`` must supply g^(i) for i = 1..k-1. The value is
    sum_{i=1..k/2} w_{k,i} g^(i) g^(k-i) with w the halved-midpoint
    binomial weights.
    """
    if k < 2:
        raise ValueError("order must be >= 2")
    g = list(g_derivs)
    if len(g) < k - 1:
        raise ValueError(f"need g^(i) for i = 1..{k - 1}")
    total = 0.0
    for i in range(1, k // 2 + 1):
        total += faa_weight(k, i) * g[i - 1] * g[k - i - 1]
    return total


@lru_cache(maxsize=None)
def _partitions(k: int):
    """Partitions of k as (s, multiplier, parts) with parts ((m, mult), ...).

    ``multiplier`` is k! / prod(mult_m! (m!)^mult_m), the count of ways the
    partition arises when differentiating a composition k times; ``s`` is
    the number of parts, i.e. the order of the outer derivative it feeds.
    """
    result = []

    def recurse(remaining, max_part, acc):
        if remaining == 0:
            s = sum(mult for _, mult in acc)
            denom = 1
            for m, mult in acc:
                denom *= math.factorial(mult) * math.factorial(m) ** mult
            result.append((s, math.factorial(k) // denom, tuple(acc)))
            return
        for m in range(min(remaining, max_part), 0, -1):
            top = remaining // m
            for mult in range(top, 0, -1):
                recurse(remaining - m * mult, m - 1, acc + [(m, mult)])

    recurse(k, k, [])
    return tuple(result)


def _compose_derivs(outer_derivs: np.ndarray, inner_derivs: np.ndarray) -> np.ndarray:
    """Derivatives at 1 of f(g(.)) from those of f and g (g(1) = 1).

    Index i-1 holds order i; both inputs must cover the requested k_max.
    """
    k_max = inner_derivs.shape[0]
    out = np.empty(k_max)
    for k in range(1, k_max + 1):
        total = 0.0
        for s, mult, parts in _partitions(k):
            f_s = outer_derivs[s - 1]
            if f_s == 0.0:
                continue
            term = float(mult) * f_s
            for m, count in parts:
                term *= inner_derivs[m - 1] ** count
            total += term
        out[k - 1] = total
    return out


def composed_deriv_profile(spec: "ScenarioSpec", n: int, k_max: int) -> np.ndarray:
    """Array of shape (n+1, k_max): row j holds Gbar_{j+1,n}^(k)(1), k = 1..k_max.

    Single backward sweep l = n..1; row n is the identity map. Families with
    vanishing higher derivatives (Bernoulli, quadratic) shortcut naturally
    because zero outer derivatives drop their partition terms.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    out = np.zeros((n + 1, k_max))
    state = np.zeros(k_max)
    state[0] = 1.0
    out[n] = state
    for l in range(n, 0, -1):
        outer = np.array(
            [spec.offspring.deriv_at_1(l, s) for s in range(1, k_max + 1)]
        )
        state = _compose_derivs(outer, state)
        out[l - 1] = state
    return out


def composed_deriv(spec: "ScenarioSpec", j: int, n: int, k: int) -> float:
    """Gbar_{j+1,n}^(k)(1); for k = 1 this is the product rho_{j+1}...rho_n."""
    if j > n:
        raise ValueError("need j <= n")
    if k == 1:
        return chain_product(spec, j, n)
    state = np.zeros(k)
    state[0] = 1.0
    for l in range(n, j, -1):
        outer = np.array([spec.offspring.deriv_at_1(l, s) for s in range(1, k + 1)])
        state = _compose_derivs(outer, state)
    return float(state[k - 1])


def deriv_sum_limit(lam: float, nu: float, k: int) -> float:
    """Limit of sum_j m_{j,1} Gbar_{j+1,n}^(k)(1): (k-1)! lam (nu/2)^(k-1)."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if nu <= 0:
        raise ValueError("nu must be positive")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return lam
    if lam == 0.0:
        return 0.0
    log_val = math.lgamma(k) + math.log(lam) + (k - 1) * math.log(nu / 2.0)
    if log_val > 700.0:
        raise NumericError(f"limit value overflows at k = {k}")
    return math.exp(log_val)
