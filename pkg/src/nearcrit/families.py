"""Generation-indexed offspring and immigration families.

Families are immutable value objects built from closed-form parameter
rules: the offspring mean follows rho_n = 1 - c (n + n0)^(-gamma) and
immigration means are finite sums of power terms coef (n + shift)^(-power).
Each family exposes PGF values, derivatives at 1 and extracted PMFs per
generation, and the scenario wrapper dispatches the limit-law hypotheses
over the declared constants.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import pgf
from .errors import ScenarioValidationError
from .linfrac import LinearFractional, lf_from_derivatives

_TERM_RE = re.compile(
    r"""^\s*
    (?:(?P<coef>[0-9][0-9.eE+-]*)\s*\*\s*)?      # optional leading coefficient
    (?: \(\s*n\s*(?:\+\s*(?P<shift>[0-9.]+))?\s*\) | n )
    \s*\^\s*(?P<power>-?[0-9.]+)\s*$""",
    re.VERBOSE,
)
_CONST_RE = re.compile(r"^\s*(?P<coef>[0-9][0-9.eE+-]*)\s*$")


@dataclass(frozen=True)
class PowerTerm:
    """One term coef * (n + shift)^(-power)."""

    coef: float
    shift: float
    power: float

    def at(self, n):
        return self.coef * (np.asarray(n, dtype=float) + self.shift) ** -self.power

    def __str__(self) -> str:
        if self.power == 0:
            return f"{self.coef:.17g}"
        base = f"(n+{self.shift:.17g})" if self.shift != 0 else "n"
        return f"{self.coef:.17g}*{base}^-{self.power:.17g}"


@dataclass(frozen=True)
class PowerSum:
    """Finite sum of decaying power terms, the closed-form rate rules."""

    terms: tuple[PowerTerm, ...]

    @classmethod
    def parse(cls, text: str) -> "PowerSum":
        # split on '+' but rejoin pieces cut inside a "(n+shift)" group
        pieces, buf = [], ""
        for chunk in text.split("+"):
            buf = f"{buf}+{chunk}" if buf else chunk
            if buf.count("(") == buf.count(")"):
                pieces.append(buf)
                buf = ""
        if buf:
            raise ScenarioValidationError(f"unbalanced parentheses in rule {text!r}")
        parsed = []
        for piece in pieces:
            m = _TERM_RE.match(piece)
            if m:
                coef = float(m.group("coef")) if m.group("coef") else 1.0
                shift = float(m.group("shift")) if m.group("shift") else 0.0
                power = -float(m.group("power"))
                if power < 0:
                    raise ScenarioValidationError(
                        f"rule term {piece!r} grows with n; exponent must be <= 0"
                    )
                parsed.append(PowerTerm(coef, shift, power))
                continue
            m = _CONST_RE.match(piece)
            if m:
                parsed.append(PowerTerm(float(m.group("coef")), 0.0, 0.0))
                continue
            raise ScenarioValidationError(f"cannot parse rule term {piece!r}")
        if not parsed:
            raise ScenarioValidationError(f"empty rate rule {text!r}")
        if any(t.coef < 0 for t in parsed):
            raise ScenarioValidationError("rate rules must have nonnegative terms")
        return cls(tuple(parsed))

    def at(self, n):
        vals = self.terms[0].at(n)
        for t in self.terms[1:]:
            vals = vals + t.at(n)
        return vals

    def leading(self) -> tuple[float, float]:
        """(power, coef) of the slowest-decaying part, coef summed over ties."""
        p = min(t.power for t in self.terms)
        return p, sum(t.coef for t in self.terms if t.power == p)

    def summable(self) -> bool:
        return all(t.power > 1 for t in self.terms)

    def tail_bound(self, j: int) -> float:
        """Upper bound on sum_{n > j} of the rule (integral comparison)."""
        if not self.summable():
            raise ScenarioValidationError("tail bound needs all exponents > 1")
        return sum(
            t.coef * (j + t.shift) ** (1.0 - t.power) / (t.power - 1.0)
            for t in self.terms
        )

    def __str__(self) -> str:
        return " + ".join(str(t) for t in self.terms)


@dataclass(frozen=True)
class RhoRule:
    """Offspring-mean rule rho_n = 1 - c (n + n0)^(-gamma)."""

    c: float
    gamma: float
    n0: float = 0.0

    def __post_init__(self):
        if self.c <= 0 or self.gamma <= 0 or self.n0 < 0:
            raise ScenarioValidationError("rho rule needs c > 0, gamma > 0, n0 >= 0")
        if self.c * (1.0 + self.n0) ** -self.gamma > 1.0:
            raise ScenarioValidationError("rho rule gives rho_1 < 0")

    def one_minus_rho(self, n):
        return self.c * (np.asarray(n, dtype=float) + self.n0) ** -self.gamma

    def rho(self, n):
        return 1.0 - self.one_minus_rho(n)

    def divergent_sum(self) -> bool:
        """Whether sum (1 - rho_n) diverges; decided from the rule, gamma <= 1."""
        return self.gamma <= 1.0


# ---------------------------------------------------------------------------
# offspring


def _table_moment(table, n, k: int):
    """Factorial moment of a per-generation PMF table; maps over arrays."""
    if np.ndim(n):
        return np.array(
            [
                pgf.factorial_moment(pgf.Pmf(table(int(v))), k)
                for v in np.asarray(n).ravel()
            ]
        )
    return pgf.factorial_moment(pgf.Pmf(table(int(n))), k)


@dataclass(frozen=True)
class OffspringFamily:
    """Offspring law per generation; kind selects the closed form.

    * bernoulli: G_n(x) = 1 - rho_n + rho_n x
    * quadratic: degree-2 polynomial with G_n''(1) = nu (1 - rho_n)
    * linear_fractional: LF map with the same first two derivatives
    * custom: user PMF table per n
    """

    kind: str
    rho_rule: RhoRule | None = None
    nu: float = 0.0
    table: Callable[[int], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in ("bernoulli", "quadratic", "linear_fractional", "custom"):
            raise ScenarioValidationError(f"unknown offspring family {self.kind!r}")
        if self.kind == "custom":
            if self.table is None:
                raise ScenarioValidationError("custom offspring needs a PMF table")
            return
        if self.rho_rule is None:
            raise ScenarioValidationError(f"{self.kind} offspring needs a rho rule")
        if self.nu < 0:
            raise ScenarioValidationError("nu must be nonnegative")
        if self.kind == "bernoulli" and self.nu != 0.0:
            raise ScenarioValidationError("Bernoulli offspring forces nu = 0")

    # -- mean sequence ------------------------------------------------------

    def mean(self, n):
        if self.kind == "custom":
            return _table_moment(self.table, n, 1)
        return self.rho_rule.rho(n)

    def one_minus_rho(self, n):
        if self.kind == "custom":
            return 1.0 - self.mean(n)
        return self.rho_rule.one_minus_rho(n)

    def nu_eff(self, n):
        """Per-generation curvature target, clamped to the admissible window.

        The quadratic family needs nu <= rho_n/(1-rho_n); early generations
        are adjusted down to the window edge so finite-n laws stay defined.
        """
        if self.kind != "quadratic":
            return np.broadcast_to(np.float64(self.nu), np.shape(n)) if np.ndim(n) else self.nu
        delta = self.rho_rule.one_minus_rho(n)
        return np.minimum(self.nu, (1.0 - delta) / delta)

    def start_offset(self, horizon: int = 10**6) -> int:
        """First generation whose parameters are not window-clamped."""
        if self.kind != "quadratic" or self.nu == 0.0:
            return 1
        for n in range(1, horizon + 1):
            delta = float(self.rho_rule.one_minus_rho(n))
            if self.nu <= (1.0 - delta) / delta:
                return n
        raise ScenarioValidationError("quadratic family never becomes admissible")

    def second_deriv(self, n):
        """G_n''(1); equals nu_eff (1 - rho_n) for the constructed families."""
        if self.kind == "bernoulli":
            return np.zeros(np.shape(n)) if np.ndim(n) else 0.0
        if self.kind == "custom":
            return _table_moment(self.table, n, 2)
        return self.nu_eff(n) * self.one_minus_rho(n)

    def deriv_at_1(self, n: int, s: int) -> float:
        """s-th derivative of G_n at 1."""
        if s < 1:
            raise ValueError("derivative order must be >= 1")
        if s == 1:
            return float(self.mean(n))
        if self.kind == "bernoulli":
            return 0.0
        if self.kind == "quadratic":
            return float(self.second_deriv(n)) if s == 2 else 0.0
        if self.kind == "linear_fractional":
            return self.lf_params(n).deriv_at_1(s)
        return pgf.factorial_moment(pgf.Pmf(self.table(n)), s)

    def lf_params(self, n: int) -> LinearFractional:
        if self.kind == "linear_fractional":
            rho = float(self.rho_rule.rho(n))
            return lf_from_derivatives(rho, self.nu * (1.0 - rho))
        if self.kind == "bernoulli":
            rho = float(self.rho_rule.rho(n))
            return lf_from_derivatives(rho, 0.0)
        raise ScenarioValidationError(f"{self.kind} offspring has no LF parameters")

    def quadratic_coeffs(self, n: int) -> np.ndarray:
        rho = float(self.rho_rule.rho(n))
        p2 = float(self.nu_eff(n)) * (1.0 - rho) / 2.0
        p1 = rho - 2.0 * p2
        return np.array([1.0 - p1 - p2, p1, p2])

    def pgf_at(self, n: int, x: float) -> float:
        """G_n(x); convex, nondecreasing, G_n(1) = 1."""
        if not 0.0 <= x <= 1.0:
            raise ValueError("PGF argument must lie in [0, 1]")
        if self.kind == "bernoulli":
            rho = float(self.rho_rule.rho(n))
            return 1.0 - rho + rho * x
        if self.kind == "quadratic":
            return float(np.polyval(self.quadratic_coeffs(n)[::-1], x))
        if self.kind == "linear_fractional":
            return self.lf_params(n).value_at(x)
        return float(np.polyval(np.asarray(self.table(n))[::-1], x))

    def pmf(self, n: int, k_trunc: int) -> pgf.Pmf:
        if self.kind == "bernoulli":
            rho = float(self.rho_rule.rho(n))
            coeffs = np.array([1.0 - rho, rho])
        elif self.kind == "quadratic":
            coeffs = self.quadratic_coeffs(n)
        elif self.kind == "linear_fractional":
            coeffs = self.lf_params(n).pmf_coeffs(k_trunc)
        else:
            coeffs = np.asarray(self.table(n), dtype=float)
        return pgf.Pmf(coeffs[:k_trunc])


# ---------------------------------------------------------------------------
# immigration


def log_two_base(support: int) -> np.ndarray:
    """Coefficients of the law with PGF 1 - log(2 - x), truncated.

    p_0 = 1 - log 2 and p_k = 1/(k 2^k); unit mean, all factorial moments
    (k-1)!. Unbounded support, so a truncation bound must be declared.
    """
    k = np.arange(1, support)
    out = np.empty(support)
    out[0] = 1.0 - math.log(2.0)
    out[1:] = 1.0 / (k * 2.0**k)
    return out


BASE_LAWS: dict[str, Callable[[int], np.ndarray]] = {
    "log_two": log_two_base,
    "delta2": lambda support: np.array([0.0, 0.0, 1.0])[:support],
}


@dataclass(frozen=True)
class ImmigrationFamily:
    """Immigration law per generation.

    * bernoulli: H_n(x) = 1 + m_{n,1}(x - 1)
    * poisson:   H_n(x) = exp{m_{n,1}(x - 1)}
    * custom:    mixture toward a fixed base law B: H_n = 1 + w_n (B - 1),
      with w_n scaled so the mean matches the m1 rule; or a per-n PMF table.
    """

    kind: str
    m1: PowerSum | None = None
    base: tuple[float, ...] | None = None
    base_name: str | None = None
    table: Callable[[int], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in ("bernoulli", "poisson", "custom"):
            raise ScenarioValidationError(f"unknown immigration family {self.kind!r}")
        if self.m1 is None and self.table is None:
            raise ScenarioValidationError(
                "immigration needs an m1 rule unless backed by a PMF table"
            )
        if self.kind == "custom":
            if self.base is None and self.table is None:
                raise ScenarioValidationError(
                    "custom immigration needs a base law or a PMF table"
                )
            if self.base is not None:
                object.__setattr__(
                    self, "base", tuple(float(v) for v in self.base)
                )

    def mean(self, n):
        """Declared m_{n,1} straight from the rule (never clamped)."""
        if self.table is not None:
            return _table_moment(self.table, n, 1)
        return self.m1.at(n)

    def _base_pmf(self) -> pgf.Pmf:
        return pgf.Pmf(np.asarray(self.base))

    def mix_weight(self, n) -> float:
        base_mean = pgf.factorial_moment(self._base_pmf(), 1)
        return self.m1.at(n) / base_mean

    def bernoulli_rate(self, n: int) -> float:
        """Bernoulli parameter for sampling/PMF use, clamped into [0, 1]."""
        m = float(self.m1.at(n))
        if m > 1.0:
            warnings.warn(
                "Bernoulli immigration mean exceeds 1 for early generations; "
                "rate clamped (early-generation adjustment)",
                stacklevel=2,
            )
            return 1.0
        return m

    def factorial_moment_at(self, n: int, k: int) -> float:
        """m_{n,k} = H_n^(k)(1)."""
        if self.table is not None:
            return pgf.factorial_moment(pgf.Pmf(self.table(n)), k)
        if self.kind == "bernoulli":
            return float(self.m1.at(n)) if k == 1 else 0.0
        if self.kind == "poisson":
            return float(self.m1.at(n)) ** k
        return self.mix_weight(n) * pgf.factorial_moment(self._base_pmf(), k)

    def m2_ratio_vanishes(self, rho_rule: RhoRule) -> bool:
        """Whether m_{n,2}/(1 - rho_n) -> 0, decided from the rules."""
        if self.kind == "bernoulli":
            return True
        p1, _ = self.m1.leading()
        if self.kind == "poisson":
            return 2.0 * p1 > rho_rule.gamma
        if self.table is not None:
            return False  # undecidable from a bare table
        if pgf.factorial_moment(self._base_pmf(), 2) == 0.0:
            return True
        return p1 > rho_rule.gamma

    def pgf_at(self, n: int, x: float) -> float:
        if not 0.0 <= x <= 1.0:
            raise ValueError("PGF argument must lie in [0, 1]")
        if self.table is not None:
            return float(np.polyval(np.asarray(self.table(n))[::-1], x))
        if self.kind == "bernoulli":
            return 1.0 + self.bernoulli_rate(n) * (x - 1.0)
        if self.kind == "poisson":
            return math.exp(float(self.m1.at(n)) * (x - 1.0))
        w = self.mix_weight(n)
        base = np.asarray(self.base)
        return 1.0 + w * (float(np.polyval(base[::-1], x)) - 1.0)

    def pmf(self, n: int, k_trunc: int) -> pgf.Pmf:
        if self.table is not None:
            return pgf.Pmf(np.asarray(self.table(n), dtype=float)[:k_trunc])
        if self.kind == "bernoulli":
            m = self.bernoulli_rate(n)
            return pgf.Pmf(np.array([1.0 - m, m])[:k_trunc])
        if self.kind == "poisson":
            return pgf.Pmf(pgf.poisson_coeffs(float(self.m1.at(n)), k_trunc))
        w = self.mix_weight(n)
        if not 0.0 <= w <= 1.0:
            raise ScenarioValidationError(
                f"mixture weight {w:.4g} at n={n} is not a probability"
            )
        out = w * np.asarray(self.base)
        out[0] += 1.0 - w
        return pgf.Pmf(out[:k_trunc])


# ---------------------------------------------------------------------------
# scenario and limit-law dispatch


@dataclass(frozen=True)
class PoissonLimit:
    lam: float

    def describe(self) -> str:
        return f"Poisson lambda={self.lam:.17g}"


@dataclass(frozen=True)
class CompoundPoissonLimit:
    lambdas: tuple[float, ...]

    def describe(self) -> str:
        inner = ",".join(f"{v:.17g}" for v in self.lambdas)
        return f"CompoundPoisson lambda_seq=[{inner}]"


@dataclass(frozen=True)
class NegativeBinomialLimit:
    r: float
    p: float

    def describe(self) -> str:
        return f"NegativeBinomial r={self.r:.17g} p={self.p:.17g}"


@dataclass(frozen=True)
class GeneralExpLimit:
    """Exponential of a centered series with moment-ratio limits lambda_l."""

    rule: str
    lam: float
    nu: float

    def describe(self) -> str:
        return f"GeneralExp rule={self.rule} lambda={self.lam:.17g}"


@dataclass(frozen=True)
class ProductLimit:
    def describe(self) -> str:
        return "ProductLaw (infinite product of immigration factors)"


@dataclass(frozen=True)
class OutsideScope:
    reason: str

    def describe(self) -> str:
        return f"OutsideScope: {self.reason}"


LimitLaw = Union[
    PoissonLimit,
    CompoundPoissonLimit,
    NegativeBinomialLimit,
    GeneralExpLimit,
    ProductLimit,
    OutsideScope,
]


def _log_series_lambda(l: int) -> float:
    return math.factorial(l - 1) / l


LAMBDA_RULES = {"log_series": _log_series_lambda}


@dataclass(frozen=True)
class ScenarioSpec:
    """Full description of one inhomogeneous process plus declared limits."""

    offspring: OffspringFamily
    immigration: ImmigrationFamily
    lam: float
    nu: float
    divergent: bool
    horizon: int = 1000
    k_trunc: int = 64
    lambda_seq: tuple[float, ...] | None = None
    lambda_rule: str | None = None
    name: str = "scenario"

    def __post_init__(self):
        if self.horizon < 0 or self.k_trunc < 1:
            raise ScenarioValidationError("horizon must be >= 0 and K >= 1")
        if self.lambda_rule is not None and self.lambda_rule not in LAMBDA_RULES:
            raise ScenarioValidationError(
                f"unknown lambda rule {self.lambda_rule!r}"
            )

    # -- declared moment-ratio limits ---------------------------------------

    def lambda_l(self, l: int) -> float:
        """Declared limit of m_{n,l} / (l (1 - rho_n))."""
        if l < 1:
            raise ValueError("index must be >= 1")
        if self.lambda_seq is not None:
            return self.lambda_seq[l - 1] if l <= len(self.lambda_seq) else 0.0
        if self.lambda_rule is not None:
            return LAMBDA_RULES[self.lambda_rule](l)
        return self.lam if l == 1 else 0.0

    def lambda_over_factorial(self, l: int) -> float:
        """lambda_l / l!, computed stably for the named rules."""
        if self.lambda_rule == "log_series":
            return 1.0 / l**2
        return self.lambda_l(l) / math.factorial(l)

    def validate(self) -> list[str]:
        """Hard checks raise; soft mismatches come back as warnings."""
        notes = []
        rho_rule = self.offspring.rho_rule
        if rho_rule is not None and rho_rule.divergent_sum() != self.divergent:
            raise ScenarioValidationError(
                "declared divergence flag contradicts the rho rule "
                f"(gamma={rho_rule.gamma:g})"
            )
        n = max(self.horizon, 1)
        delta = float(self.offspring.one_minus_rho(n))
        m1 = float(self.immigration.mean(n))
        if delta > 0:
            lam_at_n = m1 / delta
            if self.lam > 0 and abs(lam_at_n - self.lam) > 0.1 * self.lam:
                notes.append(
                    f"declared lambda={self.lam:g} vs rule value {lam_at_n:.4g} "
                    f"at n={n} (>10% off)"
                )
            g2 = float(self.offspring.second_deriv(n))
            nu_at_n = g2 / delta
            if self.nu > 0 and abs(nu_at_n - self.nu) > 0.1 * self.nu:
                notes.append(
                    f"declared nu={self.nu:g} vs rule value {nu_at_n:.4g} "
                    f"at n={n} (>10% off)"
                )
            if self.nu == 0 and nu_at_n > 0.1:
                notes.append(f"declared nu=0 but rule gives {nu_at_n:.4g} at n={n}")
        if self.immigration.kind == "bernoulli":
            m_first = float(self.immigration.mean(1))
            if m_first > 1.0:
                notes.append(
                    f"Bernoulli immigration mean {m_first:.4g} at n=1 exceeds 1; "
                    "PMF/sampling paths clamp it"
                )
        if self.offspring.kind == "quadratic":
            start = self.offspring.start_offset()
            if start > 1:
                notes.append(
                    f"quadratic window clamps generations below n={start}"
                )
        return notes


def classify(spec: ScenarioSpec) -> LimitLaw:
    """Dispatch the scenario onto its limit law from the declared rules.

    The divergence of sum(1 - rho_n) is a declared, rule-validated flag;
    moment-ratio conditions are decided by comparing rule exponents, never
    estimated from finitely many terms.
    """
    if not spec.divergent:
        if spec.immigration.table is not None:
            return OutsideScope("custom immigration tables cannot be rule-checked")
        if spec.immigration.m1.summable():
            return ProductLimit()
        return OutsideScope(
            "sum(1-rho_n) < inf needs summable immigration means"
        )
    if spec.nu == 0.0:
        if spec.lambda_seq is not None:
            return CompoundPoissonLimit(tuple(spec.lambda_seq))
        if spec.lambda_rule is not None:
            return GeneralExpLimit(spec.lambda_rule, spec.lam, spec.nu)
        if spec.immigration.kind == "bernoulli" or spec.immigration.m2_ratio_vanishes(
            spec.offspring.rho_rule
        ):
            return PoissonLimit(spec.lam)
        return OutsideScope(
            "second immigration moments do not vanish relative to 1-rho"
        )
    if spec.immigration.m2_ratio_vanishes(spec.offspring.rho_rule):
        return NegativeBinomialLimit(2.0 * spec.lam / spec.nu, spec.nu / (2.0 + spec.nu))
    return OutsideScope("nu > 0 requires second immigration moments o(1-rho)")


@dataclass(frozen=True)
class ConditionRatios:
    """Hypothesis diagnostics at one generation."""

    m1_ratio: float
    m2_ratio: float
    g2_ratio: float
    g3_ratio: float
    partial_sum: float


def condition_ratios(spec: ScenarioSpec, n: int) -> ConditionRatios:
    """Per-n values of the moment ratios the limit-law hypotheses constrain."""
    if n < 1:
        raise ValueError("generation index must be >= 1")
    delta = float(spec.offspring.one_minus_rho(n))
    partial = float(np.sum(spec.offspring.one_minus_rho(np.arange(1, n + 1))))
    return ConditionRatios(
        m1_ratio=spec.immigration.factorial_moment_at(n, 1) / delta,
        m2_ratio=spec.immigration.factorial_moment_at(n, 2) / delta,
        g2_ratio=float(spec.offspring.second_deriv(n)) / delta,
        g3_ratio=spec.offspring.deriv_at_1(n, 3) / delta,
        partial_sum=partial,
    )
