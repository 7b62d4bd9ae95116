"""Exact propagation of the generation law and Monte Carlo simulation.

One step of the process compounds the previous law with the offspring law
and convolves in the immigration law; iterating from a point mass at zero
yields the exact (truncated) distribution of any generation. The same
quantities can be evaluated scalar-wise through the composed offspring
maps, giving an independent second route for cross-checks, and a seeded
vectorized simulator gives a third.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import pgf
from .errors import NumericError
from .families import (
    NegativeBinomialLimit,
    PoissonLimit,
    ScenarioSpec,
    classify,
)

DEFICIENCY_FLAG = 1e-6

_SIM_CHUNK = 1 << 17


@dataclass(frozen=True)
class GenerationState:
    """Law of one generation plus the truncation mass lost getting there."""

    n: int
    pmf: pgf.Pmf
    cumulative_deficiency: float
    truncated: bool = False


def step(prev: pgf.Pmf, offspring_pmf: pgf.Pmf, immigration_pmf: pgf.Pmf,
         k_trunc: int) -> pgf.Pmf:
    """One generation: compound with offspring, convolve in immigration."""
    return pgf.convolve(
        pgf.compound(prev, offspring_pmf, k_trunc), immigration_pmf, k_trunc
    )


def propagate_sequence(spec: ScenarioSpec, ns, k_trunc: int | None = None,
                       initial: pgf.Pmf | None = None) -> list[GenerationState]:
    """States at every requested generation, sharing one forward sweep."""
    targets = sorted(set(int(n) for n in ns))
    if targets and targets[0] < 0:
        raise ValueError("generation index must be >= 0")
    k = spec.k_trunc if k_trunc is None else k_trunc
    law = pgf.Pmf.delta(0) if initial is None else initial
    wanted = set(targets)
    out = {}
    if 0 in wanted:
        out[0] = law
    top = targets[-1] if targets else 0
    for n in range(1, top + 1):
        law = step(law, spec.offspring.pmf(n, k), spec.immigration.pmf(n, k), k)
        if n in wanted:
            out[n] = law
    states = []
    for n in targets:
        deficiency = out[n].deficiency
        flagged = deficiency > DEFICIENCY_FLAG
        if flagged:
            warnings.warn(
                f"truncation K={k} loses {deficiency:.3e} mass by n={n}; "
                "increase K"
            )
        states.append(GenerationState(n, out[n], deficiency, flagged))
    return states


def propagate(spec: ScenarioSpec, n: int, k_trunc: int | None = None,
              initial: pgf.Pmf | None = None) -> GenerationState:
    """Exact law of generation ``n`` (X_0 = 0 unless ``initial`` is given)."""
    return propagate_sequence(spec, [n], k_trunc, initial)[0]


def composed_eval(spec: ScenarioSpec, j: int, n: int, x: float) -> float:
    """Scalar value of the composed map G_{j+1} o ... o G_n at ``x``."""
    if j > n:
        raise ValueError("need j <= n")
    if not 0.0 <= x <= 1.0:
        raise ValueError("PGF argument must lie in [0, 1]")
    y = x
    for l in range(n, j, -1):
        y = spec.offspring.pgf_at(l, y)
    return y


def composed_eval_all(spec: ScenarioSpec, n: int, x: float) -> np.ndarray:
    """vals[j] = (G_{j+1} o ... o G_n)(x) for j = 0..n, one backward pass."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("PGF argument must lie in [0, 1]")
    vals = np.empty(n + 1)
    vals[n] = x
    y = x
    for l in range(n, 0, -1):
        y = spec.offspring.pgf_at(l, y)
        vals[l - 1] = y
    return vals


def pgf_via_product(spec: ScenarioSpec, n: int, x: float) -> float:
    """F_n(x) as the product of immigration factors over composed maps.

    Independent of :func:`propagate`'s coefficient route; the two agree up
    to the accumulated truncation deficiency.
    """
    vals = composed_eval_all(spec, n, x)
    out = 1.0
    for j in range(1, n + 1):
        out *= spec.immigration.pgf_at(j, float(vals[j]))
    return out


def accompanying_eval(spec: ScenarioSpec, n: int, x: float) -> float:
    """Exponential companion exp{sum_j (H_j(Gbar_{j+1,n}(x)) - 1)}."""
    vals = composed_eval_all(spec, n, x)
    total = 0.0
    for j in range(1, n + 1):
        total += spec.immigration.pgf_at(j, float(vals[j])) - 1.0
    return math.exp(total)


# ---------------------------------------------------------------------------
# Monte Carlo


def _offspring_totals(spec: ScenarioSpec, n: int, counts: np.ndarray,
                      rng: np.random.Generator) -> np.ndarray:
    """Total offspring of ``counts`` parents in generation ``n``, exactly."""
    fam = spec.offspring
    if fam.kind == "bernoulli":
        return rng.binomial(counts, float(fam.rho_rule.rho(n)))
    if fam.kind == "quadratic":
        p0, p1, p2 = fam.quadratic_coeffs(n)
        two = rng.binomial(counts, p2)
        rest = counts - two
        one = rng.binomial(rest, p1 / (p1 + p0)) if p1 + p0 > 0 else 0
        return 2 * two + one
    if fam.kind == "linear_fractional":
        par = fam.lf_params(n)
        nonzero = rng.binomial(counts, par.alpha / (1.0 - par.beta))
        extra = np.zeros_like(nonzero)
        pos = nonzero > 0
        if par.beta > 0.0 and np.any(pos):
            extra[pos] = rng.negative_binomial(nonzero[pos], 1.0 - par.beta)
        return nonzero + extra
    # custom table: one categorical draw per individual
    table = np.asarray(fam.table(n), dtype=float)
    probs = _sampling_probs(table)
    total = int(counts.sum())
    if total == 0:
        return np.zeros_like(counts)
    draws = rng.choice(table.shape[0], size=total, p=probs)
    owner = np.repeat(np.arange(counts.shape[0]), counts)
    return np.bincount(owner, weights=draws, minlength=counts.shape[0]).astype(
        np.int64
    )


def _immigration_draws(spec: ScenarioSpec, n: int, size: int,
                       rng: np.random.Generator) -> np.ndarray:
    fam = spec.immigration
    if fam.table is not None:
        table = np.asarray(fam.table(n), dtype=float)
        return rng.choice(table.shape[0], size=size, p=_sampling_probs(table))
    if fam.kind == "bernoulli":
        return (rng.random(size) < fam.bernoulli_rate(n)).astype(np.int64)
    if fam.kind == "poisson":
        return rng.poisson(float(fam.m1.at(n)), size)
    # base-law mixture: draw from the base with the mixing probability
    w = fam.mix_weight(n)
    out = np.zeros(size, dtype=np.int64)
    chosen = rng.random(size) < w
    hits = int(chosen.sum())
    if hits:
        base = np.asarray(fam.base, dtype=float)
        out[chosen] = rng.choice(base.shape[0], size=hits, p=_sampling_probs(base))
    return out


def _sampling_probs(table: np.ndarray) -> np.ndarray:
    total = float(table.sum())
    if total < 1.0 - 1e-9:
        raise NumericError(
            f"cannot sample a law missing {1.0 - total:.3e} mass; "
            "raise the table support"
        )
    return table / total


def simulate(spec: ScenarioSpec, n: int, reps: int, seed: int) -> pgf.Pmf:
    """Empirical law of generation ``n`` from ``reps`` seeded trajectories.

    Trajectories run vectorized in fixed-size chunks; chunk i draws from
    numpy's PCG64 seeded with SeedSequence([seed, i]), so results are
    reproducible and independent of chunk execution order.
    """
    if reps < 1:
        raise ValueError("need at least one trajectory")
    counts = np.zeros(1)
    done = 0
    chunk_idx = 0
    while done < reps:
        size = min(_SIM_CHUNK, reps - done)
        rng = np.random.default_rng([seed, chunk_idx])
        x = np.zeros(size, dtype=np.int64)
        for gen in range(1, n + 1):
            x = _offspring_totals(spec, gen, x, rng) + _immigration_draws(
                spec, gen, size, rng
            )
        chunk_counts = np.bincount(x).astype(float)
        if chunk_counts.shape[0] > counts.shape[0]:
            chunk_counts[: counts.shape[0]] += counts
            counts = chunk_counts
        else:
            counts[: chunk_counts.shape[0]] += chunk_counts
        done += size
        chunk_idx += 1
    return pgf.Pmf(counts / reps)


def default_truncation(spec: ScenarioSpec) -> int:
    """Smallest K with the classified target's tail below 1e-10, doubled."""
    law = classify(spec)
    if isinstance(law, PoissonLimit):
        return 2 * _tail_index(pgf.poisson_coeffs(law.lam, 4096))
    if isinstance(law, NegativeBinomialLimit):
        out = np.empty(4096)
        out[0] = math.exp(law.r * math.log1p(-law.p))
        for k in range(out.shape[0] - 1):
            out[k + 1] = out[k] * law.p * (k + law.r) / (k + 1)
        return 2 * _tail_index(out)
    return max(2 * spec.k_trunc, 64)


def _tail_index(coeffs: np.ndarray) -> int:
    tail = 1.0 - np.cumsum(coeffs)
    hits = np.nonzero(tail < 1e-10)[0]
    if hits.shape[0] == 0:
        raise NumericError("target tail does not drop below 1e-10 in range")
    return int(hits[0]) + 1
