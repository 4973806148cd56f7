import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from salemlab.errors import ConfigurationError, DomainError
from salemlab.grid import AtomicMeasure, GridFunction, TorusGrid, conv_power, convolve, cube_mass_table, dft
from salemlab.regularity import ModulusPsi, holder_norm
from salemlab.transference import (FmConstruction, MollifierSpec, approximation_step, box_convolve_measure,
                                   box_kernel, box_transform, build_F_m, fourier_component, lattice_comb,
                                   mollify_build_f, periodize, support_cover, trig_polynomial,
                                   verify_Fm_properties)


def _measure(N, pts, d=1):
    return AtomicMeasure.from_points(TorusGrid(d, N), np.asarray(pts).reshape(-1, d))


# box and comb

def test_box_mean_is_one():
    for d in (1, 2):
        assert box_kernel(8, 32, d).mean == pytest.approx(1.0, abs=1e-15)


def test_box_needs_whole_cells():
    with pytest.raises(ConfigurationError):
        box_kernel(8, 24)


def test_comb_spectrum_indicator():
    N = 6
    c = dft(lattice_comb(N, 2)).coeffs
    expect = np.zeros((N, N))
    expect[0, 0] = 1
    assert np.abs(c - expect).max() < 1e-15


def test_box_square_against_comb():
    out = convolve(conv_power(box_kernel(4, 32), 2), lattice_comb(4))
    assert np.abs(out.values - 1).max() < 1e-13


# mollification

def test_point_mass_gives_single_bump():
    N, R = 16, 512
    f, g = mollify_build_f(AtomicMeasure.delta(TorusGrid(1, N)), None, R)
    assert f.mean == pytest.approx(1.0, abs=1e-12)
    pts = f.support_points()[:, 0]
    dist = np.minimum(pts, 1 - pts)
    assert dist.max() <= 1 / N + 1e-12


def test_box_measure_sup_is_scaled_max_mass():
    N = 9
    mu = _measure(N, [1, 1, 4, 7]).normalized()
    g = box_convolve_measure(mu, 2 * N * 5)
    assert g.sup() == pytest.approx(N * float(mu.max_mass()))


def test_box_measure_transform_matches_direct_sum():
    N, R = 11, 2 * 11 * 8
    atoms = [2, 5, 5, 9]
    mu = _measure(N, atoms).normalized()
    g = box_convolve_measure(mu, R)
    spec = dft(g, continuum=True)
    gen = np.random.default_rng(0)
    for r in gen.integers(-R // 2 + 1, R // 2, 20):
        direct = sum(np.exp(-2j * np.pi * r * a / N) for a in atoms) / len(atoms)
        assert spec.at(r) == pytest.approx(box_transform(r, N) * direct, abs=1e-12)


def test_mollifier_transform_matches_quadrature():
    spec = MollifierSpec(10)
    for x in (0.0, 0.3, 2.7, 11.0, 40.5):
        ref = quad(lambda s: spec.profile(s) * math.cos(2 * math.pi * x * s), -0.5, 0.5, epsabs=1e-14, limit=200)[0]
        assert spec.transform(np.array([x]))[0] == pytest.approx(ref, abs=1e-10)


def test_mollifier_decay_constant_bounds_transform():
    spec = MollifierSpec(10)
    xi = np.linspace(0.5, 2000, 200_001)
    assert (np.abs(spec.transform(xi)) * xi ** 5).max() <= spec.decay_constant()


def test_mollifier_kernel_mean():
    assert MollifierSpec(8, 2).kernel(64).mean == pytest.approx(1.0, abs=1e-14)


# periodization

def test_periodize_constant():
    f = GridFunction.constant(1.0, 30)
    assert np.array_equal(periodize(f, 3).values, np.ones(90))


def test_periodize_exponential_moves_frequency():
    R = 64
    c = periodize(GridFunction.sample(lambda x: np.cos(2 * np.pi * x), R), 2)
    s = periodize(GridFunction.sample(lambda x: np.sin(2 * np.pi * x), R), 2)
    coeff = dft(c).coeffs + 1j * dft(s).coeffs
    expect = np.zeros(2 * R)
    expect[2] = 1
    assert np.abs(coeff - expect).max() < 1e-14


@given(st.integers(1, 5), st.integers(0, 1000))
def test_periodize_spectrum_property(p, seed):
    f = GridFunction(np.random.default_rng(seed).random(12))
    c = dft(periodize(f, p)).coeffs
    assert np.allclose(c[::p], dft(f).coeffs, atol=1e-14)
    rest = np.delete(c, np.arange(0, len(c), p))
    assert np.abs(rest).max(initial=0) < 1e-14


@given(st.integers(0, 10 ** 6))
def test_product_identity_window(seed):
    gen = np.random.default_rng(seed)
    p, R = 5, 60
    G1, G2 = periodize(GridFunction(gen.random(12)), p), periodize(GridFunction(gen.random(12)), p)
    P1 = trig_polynomial({(0,): gen.random(), (1,): complex(*gen.random(2)), (2,): complex(*gen.random(2))}, R)
    P2 = trig_polynomial({(0,): gen.random(), (2,): complex(*gen.random(2))}, R)
    lhs = convolve(G1 * P1, G2 * P2)
    rhs = convolve(G1, G2) * convolve(P1, P2)
    assert np.abs(lhs.values - rhs.values).max() < 1e-10


# F_m

def _small_Fm(R_factor=1):
    m, k = 3, 2
    N, p = m ** k, 2 * m + 1
    mu = _measure(N, [0, 4, 4, 7])
    return build_F_m(mu, m, k, 2 * N * p * R_factor)


def test_Fm_is_periodic_with_unit_mean():
    Fc = _small_Fm()
    assert Fc.R == 126
    assert np.array_equal(np.roll(Fc.F.values, Fc.R // 7), Fc.F.values)
    assert Fc.F.mean == pytest.approx(1.0, abs=1e-12)


def test_Fm_spectrum_on_sublattice():
    Fc = _small_Fm(R_factor=2)
    cF, cf = dft(Fc.F).coeffs, dft(Fc.f).coeffs
    for j in range(-5, 6):
        assert cF[(7 * j) % Fc.R] == pytest.approx(cf[j % Fc.f.R], abs=1e-14)
    off = np.ones(Fc.R, bool)
    off[::7] = False
    assert np.abs(cF[off]).max() < 1e-13


def test_Fm_continuum_coefficients_converge():
    m, k = 3, 3
    N, p = 27, 7
    mu = _measure(N, [1, 5, 5, 20])
    ks = np.arange(1, 7)
    errs = []
    for factor in (2, 4):
        Fc = build_F_m(mu, m, k, 2 * N * p * factor)
        got = np.abs(dft(Fc.F).coeffs[p * ks])
        expect = Fc.continuum_coefficients(ks)
        errs.append(float(np.max(np.abs(got - expect) / expect)))
    assert errs[0] < 1e-2 and errs[1] < errs[0]


def test_Fm_resolution_and_gcd_guards():
    mu = _measure(9, [0, 1])
    with pytest.raises(ConfigurationError):
        build_F_m(mu, 3, 2, 100)
    with pytest.raises(DomainError):
        build_F_m(_measure(25, [0]), 5, 2, 2 * 25 * 11, n_max=5)


def test_support_cover_small():
    m, k = 3, 2
    atoms = np.array([[0], [4], [4], [7]])
    Fc = build_F_m(_measure(9, atoms), m, k, 2 * 9 * 7 * 4)
    cover = support_cover(Fc, atoms)
    assert cover["family_size"] == 7 * 4
    assert cover["distinct_cubes"] == 7 * 3
    assert cover["covered"] and cover["all_occupied"]


def test_degenerate_holder_exponent_is_sup_norm():
    Fc = _small_Fm(R_factor=2)
    diff = conv_power(Fc.F, 2) - 1.0
    est = holder_norm(diff, 0.0, ModulusPsi())
    assert est.value == pytest.approx(diff.sup(), rel=1e-15)


def test_fundamental_cells_have_exact_mass():
    Fc = _small_Fm(R_factor=2)
    p, R = Fc.p, Fc.R
    for n in (1, 2, 3):
        vals = conv_power(Fc.F, n).values
        for cells in (1, 2, 5):
            table = cube_mass_table(vals, cells * R // p) / R
            assert np.abs(table - cells / p).max() < 1e-12


def test_property_report_shape_and_warning():
    m, k, N = 5, 3, 125
    atoms = np.random.default_rng(1).integers(0, N, 18)
    Fc = build_F_m(_measure(N, atoms), m, k, 2 * N * 11, alpha=0.5, beta=0.6, n_max=3)
    assert Fc.warnings
    rep = verify_Fm_properties(Fc, 0.5, 0.6, ModulusPsi(), 0.5)
    assert set(rep) >= {"fourier_decay", "small_cubes", "holder", "rectangles", "passed"}
    assert rep["rectangles"]["passed"]
    assert set(rep["holder"]) == {2, 3}
    assert rep["small_cubes"]["orders"] == [1]


# approximation step

def test_identity_multiplier_components():
    base = _small_Fm(R_factor=2)
    R = base.R
    one = FmConstruction(GridFunction.constant(1.0, R), base.f, base.g, base.mu, 3, 2, base.spec)
    g = trig_polynomial({(0,): 1.0, (1,): 0.15}, R)
    comps = approximation_step(g, one, ModulusPsi(), 0.5, 3, degree=1)
    assert comps.zero_coefficient < 1e-14
    assert comps.fourier_window < 1e-14
    assert all(v < 1e-10 for v in comps.holder.values())
    assert comps.hausdorff >= 0


def test_constant_g_zero_term_vanishes():
    m, k = 5, 3
    N = 125
    Fc = build_F_m(_measure(N, np.random.default_rng(2).integers(0, N, N)), m, k, 2 * N * 11)
    zero, _, _ = fourier_component(GridFunction.constant(1.0, Fc.R), Fc, 0.5, ModulusPsi(), degree=0)
    assert zero < 1e-12


def test_approximation_components_finite_and_ordered():
    m, k = 5, 3
    N = 125
    Fc = build_F_m(_measure(N, np.random.default_rng(3).integers(0, N, N)), m, k, 2 * N * 11 * 2)
    g = trig_polynomial({(0,): 1.0, (1,): 0.15}, Fc.R)
    c = approximation_step(g, Fc, ModulusPsi(), 0.5, 3, degree=1)
    d = c.to_dict()
    assert all(math.isfinite(v) and v >= 0 for v in (d["hausdorff"], d["fourier"], d["total"]))
    assert c.fourier == max(c.fourier_window, c.fourier_tail)
    assert d["holder"].keys() == {"2", "3"}


def test_approximation_rejects_negative_g():
    Fc = _small_Fm()
    with pytest.raises(DomainError):
        approximation_step(GridFunction.constant(-1.0, Fc.R), Fc, ModulusPsi(), 0.5, 3)
