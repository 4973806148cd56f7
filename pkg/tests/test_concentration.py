import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import binom

from salemlab.concentration import (BOUND_KINDS, MartingaleSpec, bound_exponent, branch_continuity,
                                    concentration_bound, factorial_ineq_check, log_bound, mgf_twopoint_check,
                                    minimal_factorial_n, monte_carlo_tail, small_summation, small_summation_grid,
                                    wilson_interval)
from salemlab.errors import DomainError


# closed-form bounds

def test_small_t_at_zero():
    assert concentration_bound("hoeffding_small_t", A=1, t=0) == 2.0


def test_large_t_value():
    pre, ex = bound_exponent("hoeffding_large_t", A=1, delta=1, t=2)
    assert (pre, ex) == (2, Fraction(-3, 2))
    assert concentration_bound("hoeffding_large_t", A=1, delta=1, t=2) == pytest.approx(0.44626, abs=1e-5)


def test_bernstein_value():
    # 4 exp(-2.25)
    assert concentration_bound("bernstein", m=100, t=Fraction(3, 10)) == pytest.approx(0.421597, abs=1e-6)


def test_branch_mismatch_rejected():
    with pytest.raises(DomainError):
        bound_exponent("hoeffding_small_t", A=1, delta=1, t=2)
    with pytest.raises(DomainError):
        bound_exponent("hoeffding_large_t", A=1, delta=1, t=Fraction(1, 2))
    with pytest.raises(DomainError):
        bound_exponent("hoeffding_large_t", A=1, t=2)
    with pytest.raises(DomainError):
        bound_exponent("chernoff", A=1, t=1)


def test_spec_accumulates_squares():
    spec = MartingaleSpec((Fraction(1, 2), 1, 2))
    assert spec.A == Fraction(21, 4)
    assert bound_exponent("azuma", spec=spec, t=3) == (2, Fraction(-6, 7))
    with pytest.raises(DomainError):
        MartingaleSpec((1, 0))


@given(st.fractions(Fraction(1, 100), 50), st.fractions(Fraction(1, 100), 10))
def test_branches_agree_exactly_at_switch(A, delta):
    out = branch_continuity(A, delta)
    assert out["equal"]
    assert out["small"][1] == -A * delta * delta / 2


@given(st.sampled_from(["azuma", "bernstein"]), st.fractions(0, 5), st.fractions(0, 5))
def test_bounds_decrease_in_t(kind, t1, t2):
    lo, hi = min(t1, t2), max(t1, t2)
    kw = {"m": 10} if kind == "bernstein" else {"A": 2}
    assert concentration_bound(kind, t=hi, **kw) <= concentration_bound(kind, t=lo, **kw)


@given(st.sampled_from(BOUND_KINDS), st.fractions(Fraction(1, 10), 4))
def test_log_bound_matches_bound(kind, t):
    kw = {"A": 1, "delta": 1, "m": 20}
    if kind == "hoeffding_small_t":
        t = min(t, Fraction(1))
    if kind == "hoeffding_large_t":
        t = max(t, Fraction(1))
    assert math.exp(log_bound(kind, t=t, **kw)) == pytest.approx(concentration_bound(kind, t=t, **kw), rel=1e-12)


# binomial tail sums

def test_small_summation_example():
    out = small_summation(4, Fraction(1, 10), 2)
    assert out["tail"] == Fraction(641, 10000)
    assert out["bound"] == Fraction(4, 25)
    assert out["pass"]


def test_small_summation_single_term():
    m, p = 10, Fraction(1, 20)
    out = small_summation(m, p, m)
    assert out["tail"] == p ** m
    assert out["bound"] == 2 * (m * p) ** m / math.factorial(m)


def test_small_summation_domain():
    with pytest.raises(DomainError):
        small_summation(4, Fraction(1, 2), 2)
    with pytest.raises(DomainError):
        small_summation(1, Fraction(1, 10), 1)
    with pytest.raises(DomainError):
        small_summation(4, 1, 4)


def test_small_summation_grid_exhaustive():
    out = small_summation_grid(30)
    assert out["pass"] and out["checked"] > 1000


@pytest.mark.parametrize("m,p,M", [(10, "0.1", 2), (40, "0.05", 7), (50, "0.3", 31)])
def test_exact_and_high_precision_agree(m, p, M):
    ex = small_summation(m, Fraction(p), M)
    mp = small_summation(m, Fraction(p), M, method="mpmath")
    assert ex["pass"] == mp["pass"]
    assert float(mp["tail"]) == pytest.approx(float(ex["tail"]), rel=1e-30)


# factorial inequality

def test_factorial_small_case():
    out = factorial_ineq_check(1, 8)
    assert out["applicable"] and out["pass"]
    assert math.exp(out["log_lhs"]) == pytest.approx(2.48e-5, rel=1e-2)
    assert math.exp(out["log_rhs"]) == pytest.approx(3.35e-4, rel=1e-2)


def test_factorial_not_applicable():
    out = factorial_ineq_check(10, 20)
    assert not out["applicable"] and out["pass"] is None


def test_factorial_threshold():
    assert minimal_factorial_n(1) == 8
    assert minimal_factorial_n(10) == 74


def test_factorial_sweep():
    for T in range(1, 101):
        n0 = minimal_factorial_n(T)
        for n in range(n0, n0 + 10):
            assert factorial_ineq_check(T, n)["pass"]


# moment generating functions

def test_rademacher_mgf():
    out = mgf_twopoint_check(1, np.linspace(-10, 10, 2001))
    assert out["pass"] and out["min_log_gap"] >= 0


def test_mgf_equality_at_zero():
    out = mgf_twopoint_check(1, [0.0])
    assert out["min_residual"] == 0.0


def test_asymmetric_two_point():
    dist = [(Fraction(1, 2), Fraction(2, 3)), (-1, Fraction(1, 3))]
    assert mgf_twopoint_check(1, np.linspace(-5, 5, 1001), dist)["pass"]


def test_mgf_rejects_biased_distribution():
    with pytest.raises(DomainError):
        mgf_twopoint_check(1, [1.0], [(1, Fraction(1, 2)), (0, Fraction(1, 2))])


# Monte Carlo

def test_wilson_interval_formula():
    hits, n, z = 37, 1000, 2.5758293035489
    p = hits / n
    c = (p + z * z / (2 * n)) / (1 + z * z / n)
    h = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    lo, hi = wilson_interval(hits, n)
    assert lo == pytest.approx(c - h, rel=1e-9) and hi == pytest.approx(c + h, rel=1e-9)
    assert wilson_interval(0, n)[0] == 0.0


def test_rademacher_tail_against_binomial():
    rep = monte_carlo_tail("rademacher", [0.0, 0.3], 100_000, 100, seed=5)
    zero, row = rep.rows
    assert zero.empirical == 1.0 and zero.passed
    # |2B - 100| >= 30 with B binomial(100, 1/2)
    exact = 2 * binom.sf(64, 100, 0.5)
    assert row.ci_low <= exact <= row.ci_high
    assert row.bound == pytest.approx(0.421597, abs=1e-6)
    assert rep.passed


def test_character_extra_event():
    rep = monte_carlo_tail("character", [0.5], 2000, 31, seed=1, N=1009)
    assert rep.extra["pass"]
    assert rep.extra["largest_peak"] <= rep.extra["threshold"]


def test_monte_carlo_guards():
    with pytest.raises(DomainError):
        monte_carlo_tail("rademacher", [0.1], 10, 5)
    with pytest.raises(DomainError):
        monte_carlo_tail("gaussian", [0.1], 1000, 5)
    with pytest.raises(DomainError):
        monte_carlo_tail("character", [0.1], 1000, 5, N=11, u=22)


def test_monte_carlo_independent_of_workers():
    a = monte_carlo_tail("rademacher", [0.2], 20_000, 50, seed=3, chunk=3000, workers=1)
    b = monte_carlo_tail("rademacher", [0.2], 20_000, 50, seed=3, chunk=3000, workers=4)
    assert a.rows == b.rows
