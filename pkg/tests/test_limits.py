import math

import numpy as np
import pytest
from scipy import stats

from conftest import make_spec
from nearcrit import engine, limits, pgf
from nearcrit.diagnostics import tv_distance
from nearcrit.errors import (
    NotADistributionError,
    SeriesDivergenceError,
    WrongRegimeError,
)
from nearcrit.linfrac import chain_product
from nearcrit.scenarios import load_fixture


def test_poisson_pmf_degenerate_and_values():
    assert limits.poisson_pmf(0.0, 4).coeffs[0] == 1.0
    p = limits.poisson_pmf(1.0, 30)
    assert p.coeffs[0] == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert np.max(np.abs(p.coeffs - stats.poisson.pmf(np.arange(30), 1.0))) < 1e-13


def test_poisson_pmf_mean():
    p = limits.poisson_pmf(2.0, 80)
    assert pgf.factorial_moment(p, 1) == pytest.approx(2.0, abs=1e-12)


def test_nb_params_formula_and_guards():
    par = limits.nb_params(1.0, 1.0)
    assert (par.r, par.p) == (2.0, pytest.approx(1.0 / 3.0))
    with pytest.raises(ValueError):
        limits.nb_params(1.0, 0.0)
    with pytest.raises(ValueError):
        limits.nb_params(0.0, 1.0)


def test_nb_pmf_against_scipy():
    p = limits.nb_pmf(2.0, 1.0 / 3.0, 60)
    want = stats.nbinom.pmf(np.arange(60), 2.0, 2.0 / 3.0)
    assert np.max(np.abs(p.coeffs - want)) < 1e-14
    assert p.coeffs[0] == pytest.approx(4.0 / 9.0, abs=1e-15)


def test_nb_pmf_mean_matches_poisson_regime_mean():
    for lam, nu in ((1.0, 1.0), (2.5, 0.4)):
        par = limits.nb_params(lam, nu)
        p = limits.nb_pmf(par.r, par.p, 400)
        assert pgf.factorial_moment(p, 1) == pytest.approx(lam, abs=1e-10)


def test_nb_to_poisson_continuity():
    par = limits.nb_params(1.0, 1e-6)
    nb = limits.nb_pmf(par.r, par.p, 80)
    poi = limits.poisson_pmf(1.0, 80)
    assert tv_distance(nb, poi) <= 1e-5


def test_cp_intensity_finite_worked_example():
    measure = limits.cp_intensity_finite((2.0, 1.0, 0.0))
    assert measure.atoms[0] == pytest.approx(1.0, abs=1e-15)
    assert measure.atoms[1] == pytest.approx(0.5, abs=1e-15)


def test_cp_intensity_finite_poisson_consistency():
    measure = limits.cp_intensity_finite((1.5, 0.0, 0.0))
    assert measure.atoms[0] == pytest.approx(1.5, abs=1e-15)
    assert measure.atoms[1] == 0.0
    short = limits.cp_intensity_finite((1.5, 0.0))
    assert short.atoms[0] == pytest.approx(1.5, abs=1e-15)


def test_cp_intensity_finite_guards():
    with pytest.raises(ValueError):
        limits.cp_intensity_finite((2.0, 1.0))  # last entry nonzero
    with pytest.raises(ValueError):
        limits.cp_intensity_finite((2.0, 0.0, 1.0, 0.0))  # cascade violated
    with pytest.raises(NotADistributionError):
        limits.cp_intensity_finite((1.0, 2.0, 0.0))  # negative atom


def test_cp_intensity_series_single_atom():
    measure = limits.cp_intensity_series(
        lambda l: 1.7 if l == 1 else 0.0, tol=1e-12, j_max=4
    )
    assert measure.atoms[0] == pytest.approx(1.7, abs=1e-14)
    assert np.all(measure.atoms[1:] == 0.0)


def test_cp_intensity_series_geometric_closed_form():
    c = 0.6
    measure = limits.cp_intensity_series(lambda l: c**l, tol=1e-13, j_max=12)
    jj = np.arange(1, 13)
    want = c**jj * math.exp(-c) / np.vectorize(math.factorial)(jj)
    assert np.max(np.abs(measure.atoms - want)) < 1e-12


def test_cp_intensity_series_divergence_signal():
    with pytest.raises(SeriesDivergenceError):
        limits.cp_intensity_series(
            lambda l: math.factorial(l - 1) / l, tol=1e-8, j_max=4
        )


def test_log_series_intensity_values():
    assert limits.log_series_intensity(1) == pytest.approx(math.log(2.0), abs=1e-15)
    assert limits.log_series_intensity(2) == pytest.approx(
        (math.log(2.0) - 0.5) / 2.0, abs=1e-15
    )
    vals = [limits.log_series_intensity(j) for j in range(1, 30)]
    assert all(v > 0 for v in vals)
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_log_series_paths_agree_on_grid():
    # compound Poisson atoms versus direct centered-series evaluation
    measure = limits.log_series_measure(64)
    spec = load_fixture("thm4_log2").spec
    for x in np.arange(0.0, 1.0, 0.1):
        a = measure.pgf_at(float(x))
        b = limits.general_limit_pgf(spec.lambda_over_factorial, float(x), tol=1e-10)
        assert a == pytest.approx(b, abs=1e-8)


def test_cp_consistency_for_convergent_series():
    # exp{sum mu_j (x^j - 1)} == exp{sum lambda_l (x-1)^l / l!} when the
    # intensity series converges (geometric lambda)
    c = 0.6
    measure = limits.cp_intensity_series(lambda l: c**l, tol=1e-13, j_max=40)

    def c_rule(l):
        return c**l / math.factorial(l)

    for x in np.arange(0.0, 1.01, 0.25):
        assert measure.pgf_at(float(x)) == pytest.approx(
            limits.general_limit_pgf(c_rule, float(x), tol=1e-12), abs=1e-8
        )


def test_general_limit_pmf_poisson_special_case():
    out = limits.general_limit_pmf(
        lambda l: 1.3 if l == 1 else 0.0, 40, tol=1e-12
    )
    assert tv_distance(out, limits.poisson_pmf(1.3, 40)) < 1e-12


def test_general_limit_pmf_matches_nb():
    for lam, nu in ((1.0, 1.0), (2.0, 0.5)):
        par = limits.nb_params(lam, nu)

        def c_rule(l, lam=lam, nu=nu):
            return lam * (nu / 2.0) ** (l - 1) / l

        got = limits.general_limit_pmf(c_rule, 200, tol=1e-10)
        want = limits.nb_pmf(par.r, par.p, 200)
        assert tv_distance(got, want) <= 1e-9


def test_general_limit_pmf_value_at_zero_for_divergent_cp():
    got = limits.general_limit_pmf(lambda l: 1.0 / l**2, 1, tol=1e-4)
    assert got.coeffs[0] == pytest.approx(math.exp(-math.pi**2 / 12.0), abs=1e-5)


def test_general_limit_pmf_signals_non_truncatable():
    with pytest.raises(SeriesDivergenceError):
        limits.general_limit_pmf(lambda l: 1.0 / l**2, 8, tol=1e-6, l_cap=3000)


def test_cp_pmf_composes_with_poisson():
    measure = limits.cp_intensity_finite((1.5, 0.0))
    out = limits.cp_pmf(measure, 40)
    assert tv_distance(out, limits.poisson_pmf(1.5, 40)) < 1e-12


def test_product_law_requires_convergent_regime():
    spec = make_spec(m1="2*(n+1)^-1", lam=2.0)  # divergent
    with pytest.raises(WrongRegimeError):
        limits.product_law_eval(spec, 0.5)


def test_product_law_at_one():
    spec = load_fixture("thm6_example1").spec
    assert limits.product_law_eval(spec, 1.0) == 1.0


def test_product_law_example1_closed_form():
    spec = load_fixture("thm6_example1").spec
    for x in (0.0, 0.25, 0.5, 0.75, 0.95):
        got = limits.product_law_eval(spec, x, tol=1e-7)
        want = limits.inverse_square_product_pgf(x)
        assert got == pytest.approx(want, abs=1e-6)


def test_product_law_example2_poisson_mean():
    spec = load_fixture("thm6_example2").spec
    mean = limits.product_law_mean(spec, tol=1e-7)
    assert mean == pytest.approx(math.pi**2 / 6.0, abs=1e-6)


def test_product_law_generic_path_matches_affine_fast_path():
    # quadratic offspring in the convergent regime exercises the horizon-
    # doubling route; with nu tiny it must approach the Bernoulli value.
    # The generic route walks the composition chain scalar-wise, so keep
    # the tolerance modest.
    spec_q = make_spec(
        "quadratic", gamma=2.0, n0=1.0, nu=1e-9, m1="1*n^-2", lam=1.0,
        divergent=False,
    )
    spec_b = make_spec(
        gamma=2.0, n0=1.0, m1="1*n^-2", lam=1.0, divergent=False
    )
    for x in (0.2, 0.6):
        a = limits.product_law_eval(spec_q, x, tol=1e-4)
        b = limits.product_law_eval(spec_b, x, tol=1e-4)
        assert a == pytest.approx(b, abs=1e-3)


def test_composed_eval_monotone_in_horizon():
    # Gbar_{j+1,N}(x) is nondecreasing in N (the product-law existence fact)
    spec = make_spec(
        "quadratic", gamma=2.0, n0=1.0, nu=0.5, m1="1*n^-2", lam=1.0,
        divergent=False,
    )
    x = 0.3
    prev = [engine.composed_eval(spec, j, 20, x) for j in range(0, 11)]
    for horizon in (40, 80, 160):
        cur = [engine.composed_eval(spec, j, horizon, x) for j in range(0, 11)]
        assert all(c >= p - 1e-15 for c, p in zip(cur, prev))
        prev = cur


def test_inverse_square_product_closed_form_values():
    assert limits.inverse_square_product_pgf(1.0) == 1.0
    assert limits.inverse_square_product_pgf(0.0) == pytest.approx(0.0, abs=1e-15)
    assert limits.inverse_square_product_pgf(0.75) == pytest.approx(
        2.0 / math.pi, abs=1e-14
    )


def test_example1_chain_product_closed_form():
    spec = load_fixture("thm6_example1").spec
    for n in (2, 10, 100, 1000):
        assert chain_product(spec, 1, n) == pytest.approx(
            (n + 1) / (2.0 * n), rel=1e-12
        )
