import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from afcmem.constants import C, NU0_TMYAG
from afcmem.dispersion import (
    ExtinctionSpectrum,
    IndexSpectrum,
    alpha_to_k,
    dispersive_index,
    extinction_from_alpha,
    kk_delta_n,
    kk_real_index,
    lorentz_cauchy,
    lorentzian_kk_offset,
    round_trip_phase,
)
from afcmem.errors import InvalidArgumentError, ResolutionError, TailTruncationError
from afcmem.spectra import FrequencyGrid, InhomogeneousProfile, make_grid

GAMMA = 17e9
K0 = 1.0733e-5


def lorentz_grid(samples_per_fwhm=32, half=200e9, center=NU0_TMYAG, width=GAMMA):
    h = width / samples_per_fwhm
    n = 2 * int(half / h) + 1
    grid = FrequencyGrid(center - (n - 1) // 2 * h, h, n)
    nu = grid.frequencies
    k = K0 * (width / 2) ** 2 / ((nu - center) ** 2 + (width / 2) ** 2)
    return grid, k


def test_extinction_value():
    g = FrequencyGrid(NU0_TMYAG, 1e6, 2)
    k = extinction_from_alpha(np.array([170.0, 170.0]), g).values[0]
    assert k == pytest.approx(170.0 * C / (4 * np.pi * NU0_TMYAG), rel=1e-15)
    # 170 1/m at 377.868 THz gives k ~ 1.0733e-5
    assert k == pytest.approx(1.0733e-5, rel=1e-4)


def test_extinction_zero_and_linear():
    g = make_grid(NU0_TMYAG, 1e9, 11)
    a = np.linspace(0, 100, 11)
    assert extinction_from_alpha(np.zeros(11), g).values.max() == 0
    np.testing.assert_allclose(extinction_from_alpha(2 * a, g).values, 2 * extinction_from_alpha(a, g).values, rtol=1e-15)


def test_extinction_rejects_nonpositive_frequency():
    g = FrequencyGrid(-1e6, 1e6, 3)
    with pytest.raises(InvalidArgumentError):
        extinction_from_alpha(np.ones(3), g)


def test_extinction_must_be_nonnegative():
    g = make_grid(NU0_TMYAG, 1e9, 3)
    with pytest.raises(InvalidArgumentError):
        ExtinctionSpectrum(g, np.array([0.0, -1e-9, 0.0]))


@pytest.mark.parametrize("method", ["pv", "hilbert", "pv-quadrature", "fft-hilbert"])
def test_zero_absorption_gives_host(method):
    g = make_grid(NU0_TMYAG, 10e9, 101)
    n = kk_real_index(ExtinctionSpectrum(g, np.zeros(101)), 1.8, method)
    assert np.all(n.values == 1.8)


def test_unknown_method():
    g = make_grid(NU0_TMYAG, 10e9, 101)
    with pytest.raises(InvalidArgumentError):
        kk_real_index(ExtinctionSpectrum(g, np.zeros(101)), 1.8, "simpson")


def test_cauchy_closed_form_against_quadrature():
    # oracle for the oracle: compare the analytic PV integral with a
    # singularity-subtracted adaptive quadrature
    from scipy.integrate import quad

    x0, g, nu = 0.0, 1.0, 0.37
    f = lambda x: g**2 / ((x - x0) ** 2 + g**2)
    val = quad(f, -50, 50, weight="cauchy", wvar=nu, limit=400)[0]
    assert lorentz_cauchy(nu, x0, g, -50.0, 50.0) == pytest.approx(val, rel=1e-9)
    # infinite limits: exact -pi b g / (b^2 + g^2)
    assert lorentz_cauchy(nu, x0, g, -np.inf, np.inf) == pytest.approx(-np.pi * nu * g / (nu**2 + g**2), rel=1e-12)


def test_pv_matches_lorentzian_oracle():
    grid, k = lorentz_grid(32)
    nu = grid.frequencies
    exact = lorentzian_kk_offset(nu, K0, NU0_TMYAG, GAMMA / 2)
    dn = kk_delta_n(k, grid, "pv")
    assert np.max(np.abs(dn - exact)) < 1e-6 * np.max(np.abs(exact))


def test_hilbert_matches_narrowband_oracle():
    grid, k = lorentz_grid(32)
    exact = lorentzian_kk_offset(grid.frequencies, K0, NU0_TMYAG, GAMMA / 2, narrowband=True)
    dn = kk_delta_n(k, grid, "hilbert")
    assert np.max(np.abs(dn - exact)) < 1e-4 * np.max(np.abs(exact))


@pytest.mark.parametrize("spf", [16, 32])
def test_methods_agree(spf):
    grid, k = lorentz_grid(spf)
    pv = kk_delta_n(k, grid, "pv")
    hb = kk_delta_n(k, grid, "hilbert")
    assert np.max(np.abs(pv - hb)) < 1e-4 * np.max(np.abs(pv))


def test_pv_refinement_converges():
    g1, k1 = lorentz_grid(32)
    g2, k2 = lorentz_grid(64)
    a = kk_delta_n(k1, g1, "pv")
    b = kk_delta_n(k2, g2, "pv")[::2]
    assert b.size == a.size
    assert np.max(np.abs(a - b)) < 1e-5 * np.max(np.abs(a))


def test_pv_error_shrinks_with_resolution():
    errs = []
    for spf in (8, 16, 32):
        grid, k = lorentz_grid(spf)
        exact = lorentzian_kk_offset(grid.frequencies, K0, NU0_TMYAG, GAMMA / 2)
        errs.append(np.max(np.abs(kk_delta_n(k, grid, "pv", check=False) - exact)))
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.parametrize("method", ["pv", "hilbert"])
def test_zero_crossing_and_antisymmetry(method):
    grid, k = lorentz_grid(32)
    dn = kk_delta_n(k, grid, method)
    mid = grid.count // 2
    peak = np.max(np.abs(dn))
    assert abs(dn[mid]) < 1e-4 * peak
    for j in (5, 40, 120):
        assert dn[mid + j] == pytest.approx(-dn[mid - j], rel=1e-3)
    # anomalous dispersion: index rises below the line, falls above it
    assert dn[mid - 16] > 0 > dn[mid + 16]


@pytest.mark.parametrize("method", ["pv", "hilbert"])
def test_linearity(method):
    grid, k1 = lorentz_grid(32)
    nu = grid.frequencies
    k2 = 0.3 * K0 * np.exp(-0.5 * ((nu - NU0_TMYAG - 20e9) / 3e9) ** 2)
    n1 = kk_real_index(ExtinctionSpectrum(grid, k1), 1.8, method).values
    n2 = kk_real_index(ExtinctionSpectrum(grid, k2), 1.8, method).values
    n12 = kk_real_index(ExtinctionSpectrum(grid, k1 + k2), 1.8, method).values
    np.testing.assert_allclose(n12, n1 + n2 - 1.8, rtol=0, atol=1e-12)


def test_tail_truncation_error():
    grid, k = lorentz_grid(32, half=50e9)
    with pytest.raises(TailTruncationError):
        kk_delta_n(k, grid, "pv", tail=None)


def test_tail_model_recovers_truncated_line():
    # a narrow +-50 GHz window still reproduces the full-line index
    grid, k = lorentz_grid(32, half=50e9)
    exact = lorentzian_kk_offset(grid.frequencies, K0, NU0_TMYAG, GAMMA / 2)
    dn = kk_delta_n(k, grid, "pv")
    assert np.max(np.abs(dn - exact)) < 1e-4 * np.max(np.abs(exact))


def test_resolution_error():
    grid, k = lorentz_grid(4)
    with pytest.raises(ResolutionError, match="8"):
        kk_delta_n(k, grid, "pv")


def test_round_trip_phase_examples():
    g = FrequencyGrid(NU0_TMYAG, 1e6, 2)
    n = IndexSpectrum(g, np.full(2, 1.799972))
    phi = round_trip_phase(n, 0.004350)[0]
    assert phi == pytest.approx(4 * np.pi * 1.799972 * NU0_TMYAG * 0.004350 / C, rel=1e-15)
    assert phi == pytest.approx(1.2403e5, rel=2e-4)
    assert np.all(round_trip_phase(n, 0.0) == 0)
    np.testing.assert_allclose(round_trip_phase(n, 0.0087), 2 * round_trip_phase(n, 0.00435), rtol=1e-15)


def test_dispersive_index_no_dispersion(profile, comb_b):
    g = make_grid(comb_b.center, 600e6, 6001)
    n = dispersive_index(profile, 0.00435, g, 1.8, comb_b, dispersion=False)
    assert np.all(n.values == 1.8)


def test_dispersive_index_methods_agree_on_comb(profile, comb_b):
    g = make_grid(comb_b.center, 600e6, 12001)
    pv = dispersive_index(profile, 0.00435, g, 1.8, comb_b, method="pv").values - 1.8
    hb = dispersive_index(profile, 0.00435, g, 1.8, comb_b, method="hilbert").values - 1.8
    # linear cross-fade kinks limit agreement on the comb residual
    assert np.max(np.abs(pv - hb)) < 1e-3 * np.max(np.abs(pv))


def test_comb_index_oscillates(profile, comb_b):
    # teeth give rise to a periodic index modulation about the line background
    g = make_grid(comb_b.center, 600e6, 12001)
    n = dispersive_index(profile, 0.00435, g, 1.8, comb_b).values
    bare = dispersive_index(profile, 0.00435, g, 1.8).values
    nu = g.frequencies
    inner = np.abs(nu - comb_b.center) < 3 * comb_b.delta
    d = (n - bare)[inner]
    assert d.max() > 0 > d.min()
    sign_changes = np.count_nonzero(np.diff(np.sign(d)))
    assert sign_changes >= 8


@settings(max_examples=40, deadline=None)
@given(width=st.floats(5e9, 30e9), offset=st.floats(-5e9, 5e9))
def test_pv_oracle_random_lines(width, offset):
    grid, k = lorentz_grid(32, half=8 * width, center=NU0_TMYAG + offset, width=width)
    exact = lorentzian_kk_offset(grid.frequencies, K0, NU0_TMYAG + offset, width / 2)
    dn = kk_delta_n(k, grid, "pv")
    assert np.max(np.abs(dn - exact)) < 1e-5 * np.max(np.abs(exact))


def test_alpha_to_k_matches_spectrum(profile):
    g = make_grid(profile.nu0, 10e9, 11)
    a = profile.alpha(g.frequencies)
    np.testing.assert_array_equal(alpha_to_k(a, g.frequencies), extinction_from_alpha(a, g).values)


def test_bare_line_index_closed_form(profile):
    g = make_grid(profile.nu0, 400e9, 12801)
    n = dispersive_index(profile, 0.00435, g, 1.8).values
    k = alpha_to_k(profile.alpha(g.frequencies), g.frequencies)
    num = kk_real_index(ExtinctionSpectrum(g, k), 1.8, "pv").values
    peak = np.max(np.abs(num - 1.8))
    # closed form neglects the 1/nu variation of k across the line (~1e-4)
    assert np.max(np.abs(n - num)) < 2e-4 * peak
    assert InhomogeneousProfile(profile.nu0, profile.gamma_in, 0.0).peak_alpha == 0
