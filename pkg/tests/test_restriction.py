import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from salemlab.errors import ConfigurationError, DomainError
from salemlab.grid import AtomicMeasure, TorusGrid
from salemlab.restriction import (AnnulusSpec, RestrictionInstance, ad_regularity_diagnostic, annulus_multiplier_check,
                                  ap_upper_bound, build_m_lambda, comb_measure, endpoint_integral_flag,
                                  estimate_Ap, kernel_thresholds, multiplier_sweep, refine_measure,
                                  restriction_check, smooth_cutoff)
from salemlab.rng import uniform_integers
from salemlab.transference import lattice_comb


def _random(N, m, seed, d=1):
    return AtomicMeasure.from_points(TorusGrid(d, N), uniform_integers(seed, m * d, N).reshape(-1, d))


def _direct_lhs(w, g, n):
    N = len(w)
    x = np.arange(N)
    coeff = np.exp(-2j * np.pi * np.outer(x, x) / N) @ (g * w)
    return float(np.sum(np.abs(coeff) ** (2 * n)))


# restriction inequality

def test_point_mass_saturates():
    N = 16
    lhs, rhs, ratio = restriction_check(RestrictionInstance(AtomicMeasure.delta(TorusGrid(1, N)), np.ones(N), 1))
    assert lhs == pytest.approx(N) and ratio == pytest.approx(1.0)


def test_uniform_saturates():
    N = 16
    lhs, rhs, ratio = restriction_check(RestrictionInstance(lattice_comb(N), np.ones(N), 1))
    assert lhs == pytest.approx(1.0) and rhs == pytest.approx(1.0)


@pytest.mark.parametrize("n", [2, 3])
def test_two_atom_against_direct_sum(n):
    N = 64
    mu = AtomicMeasure.from_points(TorusGrid(1, N), [[3], [40]])
    gen = np.random.default_rng(n)
    g = gen.standard_normal(N) + 1j * gen.standard_normal(N)
    lhs, rhs, ratio = restriction_check(RestrictionInstance(mu, g, n))
    assert ratio <= 1 + 1e-12
    assert lhs == pytest.approx(_direct_lhs(mu.values() / 2, g, n), rel=1e-9)
    # two atoms in general position: the largest n-fold mass is the central binomial weight
    assert rhs == pytest.approx(N * math.comb(n, n // 2) / 2 ** n * np.mean(np.abs(g[[3, 40]]) ** 2) ** n, rel=1e-12)


@given(st.integers(0, 10 ** 6), st.integers(1, 4), st.sampled_from([8, 16, 27]))
def test_restriction_ratio_at_most_one(seed, n, N):
    gen = np.random.default_rng(seed)
    arr = np.zeros(N)
    arr[gen.integers(0, N, 4)] += gen.random(4) + 0.05
    mu = AtomicMeasure(TorusGrid(1, N), arr)
    g = gen.standard_normal(N) + 1j * gen.standard_normal(N)
    assert restriction_check(RestrictionInstance(mu, g, n))[2] <= 1 + 1e-9


def test_instance_guards():
    mu = AtomicMeasure.delta(TorusGrid(1, 8))
    with pytest.raises(ConfigurationError):
        RestrictionInstance(mu, np.ones(7), 2)
    with pytest.raises(DomainError):
        RestrictionInstance(mu, np.ones(8), 0)
    with pytest.raises(DomainError):
        RestrictionInstance(mu, np.ones(8), 2, p=1.8, q=1.2)


# restriction constant

def test_A2_is_heaviest_atom():
    N = 32
    mu = AtomicMeasure(TorusGrid(1, N), np.bincount([1, 1, 5, 9, 9, 9], minlength=N))
    est = estimate_Ap(mu, 2.0)
    w = mu.values() / 6
    # exhaustive search over normalized characters and point masses
    x = np.arange(N)
    best = 0.0
    for v in range(N):
        f = np.exp(2j * np.pi * v * x / N) / math.sqrt(N)
        best = max(best, float(np.sum(w * np.abs(np.fft.fft(f)) ** 2)))
        e = np.zeros(N)
        e[v] = 1
        best = max(best, float(np.sum(w * np.abs(np.fft.fft(e)) ** 2)))
    assert est.lower ** 2 == pytest.approx(N * w.max())
    assert est.lower ** 2 == pytest.approx(best)
    assert est.upper >= est.lower * (1 - 1e-12)


@pytest.mark.parametrize("p", [1.2, 4 / 3, 1.5, 1.8])
def test_point_mass_closed_form(p):
    N = 32
    est = estimate_Ap(AtomicMeasure.delta(TorusGrid(1, N)), p)
    closed = N ** (1 - 1 / p)
    assert est.lower == pytest.approx(closed, rel=1e-9)
    assert est.upper == pytest.approx(closed, rel=1e-9)


def test_upper_bound_endpoint_values():
    mu = _random(64, 8, 1)
    val, source = ap_upper_bound(mu, 1.0)
    assert val == 1.0
    val, _ = ap_upper_bound(mu, 4 / 3)
    from salemlab.grid import conv_power

    expect = (64 * int(conv_power(mu, 2).mass.max()) / 64) ** 0.25
    assert val <= expect * (1 + 1e-12)


@given(st.integers(0, 10 ** 6), st.floats(1.05, 1.95))
def test_ascent_below_duality_bound(seed, p):
    mu = _random(16, 3, seed)
    est = estimate_Ap(mu, p, restarts=2, seed=seed)
    assert est.lower <= est.upper * (1 + 1e-9)


# multiplier

def test_smooth_cutoff_shape():
    z = np.linspace(-1.5, 1.5, 3001)
    chi = smooth_cutoff(z)
    assert smooth_cutoff(0.0) == pytest.approx(1.0)
    assert np.all(chi[np.abs(z) >= 1] == 0)
    assert np.all(chi >= 0)
    # nonnegative transform: an autocorrelation
    spec = np.fft.fft(np.fft.ifftshift(smooth_cutoff(np.linspace(-4, 4, 8192, endpoint=False))))
    assert spec.real.min() > -1e-9 * spec.real.max()


def test_point_mass_multiplier_is_power_profile():
    W, L, lam, alpha = 512, 2.0, 0.3, 0.5
    res = build_m_lambda(AtomicMeasure.delta(TorusGrid(1, 16)), lam, alpha, chi="one", W=W, half_width=L)
    spacing = 2 * L / W
    # the single atom sits at box index W/2 - N*step/2
    step = int(round(1 / (16 * spacing)))
    center = W // 2 - 16 * step // 2
    j = np.arange(W)
    lag = np.minimum(np.abs(j - center), W - np.abs(j - center)) * spacing
    expect = np.where(lag > 0, lag, 1.0) ** (lam - alpha)
    expect[center] = (spacing / 2) ** (lam - alpha) / (lam - alpha + 1)
    assert np.allclose(res.m_values, expect, rtol=1e-10, atol=1e-12)


def test_exponent_cancellation_preserves_mass():
    W, L = 1024, 2.0
    mu = _random(32, 5, 2)
    res = build_m_lambda(mu, 0.5, 0.5, W=W, half_width=L)
    chi_mass = quad(lambda s: float(smooth_cutoff(s)), -1, 1, epsabs=1e-13)[0]
    assert res.m_values.sum() * (2 * L / W) == pytest.approx(chi_mass, rel=1e-6)


def test_thresholds():
    t = kernel_thresholds(0.3, 0.5, 1)
    assert t["atomic"] == pytest.approx(1.25)
    assert t["salem"] == pytest.approx(1 / 1.05)


def test_kernel_norms_grow_below_and_settle_above_threshold():
    mu = _random(32, 6, 3)
    rows = multiplier_sweep(mu, 0.3, 0.5)
    by_q = {}
    for W, q, v in rows:
        by_q.setdefault(q, []).append(v)
    q1, q2 = by_q[1.0], by_q[2.0]
    assert all(b > a * 1.05 for a, b in zip(q1, q1[1:]))
    assert max(q2) / min(q2) < 1.01


def test_multiplier_grid_guard():
    with pytest.raises(ConfigurationError):
        build_m_lambda(AtomicMeasure.delta(TorusGrid(1, 7)), 0.3, 0.5, W=512)
    with pytest.raises(DomainError):
        build_m_lambda(AtomicMeasure.delta(TorusGrid(1, 16)), -0.6, 0.5)


# annulus

def test_annulus_constant_normalizes_derivatives():
    spec = AnnulusSpec()
    assert spec.constant() == pytest.approx(192.42, abs=0.01)
    for r in (1 / 8, 1 / 16):
        assert max(spec.derivative_check(r, 8192)) <= 1.0


def test_refine_measure_positions():
    mu = AtomicMeasure.from_points(TorusGrid(1, 8), [[3], [3], [5]])
    fine = refine_measure(mu, 32)
    assert fine.mass_at(12) == 2 and fine.mass_at(20) == 1


def test_annulus_disjoint_frequencies_give_zero():
    N, W = 64, 512
    mu = AtomicMeasure.delta(TorusGrid(1, N))
    f = np.exp(2j * np.pi * 256 * np.arange(W) / W)  # frequency 1/2, outside the annulus at r = 1/8
    rep = annulus_multiplier_check(mu, 1 / 8, 4 / 3, 2.0, f[None, :], W=W)
    assert rep.max_ratio < 1e-12


def test_annulus_ratios_stable_across_radii():
    N = 512
    mu = _random(N, 22, 5)
    gen = np.random.default_rng(0)
    fs = gen.standard_normal((50, 8 * N)) + 1j * gen.standard_normal((50, 8 * N))
    tops = []
    for j in range(3, 8):
        rep = annulus_multiplier_check(mu, 2.0 ** -j, 4 / 3, 2.0, fs, decomposition=True)
        assert rep.derivative_residual <= 1e-6
        assert rep.decomposition_error <= 1e-9
        tops.append(rep.max_ratio)
    assert max(tops) / min(tops) <= 2.0


def test_annulus_point_mass_bounded():
    N = 256
    gen = np.random.default_rng(1)
    fs = gen.standard_normal((10, 8 * N))
    tops = [annulus_multiplier_check(AtomicMeasure.delta(TorusGrid(1, N)), 2.0 ** -j, 4 / 3, 2.0, fs).max_ratio
            for j in range(3, 8)]
    assert max(tops) / min(tops) <= 2.0


@given(st.floats(1e-3, 1e3), st.integers(0, 1000))
def test_annulus_ratio_homogeneous(s, seed):
    N = 64
    mu = _random(N, 6, seed)
    f = np.random.default_rng(seed).standard_normal((1, 8 * N))
    a = annulus_multiplier_check(mu, 1 / 8, 4 / 3, 2.0, f, A_p=1.0).max_ratio
    b = annulus_multiplier_check(mu, 1 / 8, 4 / 3, 2.0, s * f, A_p=1.0).max_ratio
    assert b == pytest.approx(a, rel=1e-12)


def test_annulus_guards():
    mu2 = AtomicMeasure.delta(TorusGrid(2, 8))
    with pytest.raises(ConfigurationError):
        annulus_multiplier_check(mu2, 0.25, 4 / 3, 2, np.ones((1, 64)))
    mu = AtomicMeasure.delta(TorusGrid(1, 8))
    with pytest.raises(DomainError):
        annulus_multiplier_check(mu, 0.25, 1.9, 1.5, np.ones((1, 64)))


def test_endpoint_flag():
    rows = [(2.0 ** -j, 2.0 ** (-j)) for j in range(1, 20)]
    partial, converging = endpoint_integral_flag(rows, 0.5)
    assert converging and partial == sorted(partial)
    rows = [(2.0 ** -j, 2.0 ** (-j / 2)) for j in range(1, 12)]
    assert not endpoint_integral_flag(rows, 0.5)[1]


# AD-regularity diagnostic

def test_comb_layout():
    c = comb_measure(12, 4)
    assert c.support()[:, 0].tolist() == [0, 3, 6, 9]
    assert c.total_mass == 1


def test_uniform_measure_is_band_limited():
    rep = ad_regularity_diagnostic(lattice_comb(256), 0.9)
    assert rep["band_limited"] and rep["verdict"] == "degenerate"
    assert rep["lower_constant"] > 0


def test_point_mass_recurs():
    rep = ad_regularity_diagnostic(AtomicMeasure.delta(TorusGrid(1, 1024)), 0.5)
    assert rep["verdict"] == "recurring"
    assert rep["lower_constant"] >= 1.0
