import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from afcmem.cavity import (
    CavityParams,
    ComplexSpectrum,
    cavity_response,
    find_impedance_match,
    free_spectral_range,
    line_reflectivity,
    pin_length,
    reflected_power,
    reflection_amplitude,
    reflection_coefficient,
)
from afcmem.constants import C, NU0_TMYAG
from afcmem.errors import InvalidArgumentError, NoMinimumError
from afcmem.spectra import InhomogeneousProfile, OpticalDepthSpectrum, make_grid


def test_params_validation():
    with pytest.raises(InvalidArgumentError):
        CavityParams(0.9, 0.8, 1.8, 0.004)
    with pytest.raises(InvalidArgumentError):
        CavityParams(0.5, 1.1, 1.8, 0.004)
    with pytest.raises(InvalidArgumentError):
        CavityParams(0.5, 0.9, 1.8, 0.004, s=0.0)
    c = CavityParams(0.6927, 0.9999, 1.799972, 0.00435)
    assert c.R1 == pytest.approx(0.6927**2)
    assert c.s == 2.0


def test_impedance_matched_sample_is_dark():
    r2, d = 0.95, 0.3
    r1 = r2 * np.exp(-d)
    r = reflection_coefficient(r1, r2, d, 2 * np.pi * 7)
    assert abs(r) < 1e-14


def test_opaque_crystal_reflects_front_mirror():
    r = reflection_coefficient(0.6, 0.99, 800.0, 1.234)
    assert r == pytest.approx(-0.6, abs=1e-15)


def test_reflected_power_normalisation():
    g = make_grid(NU0_TMYAG, 1e9, 3)
    amp = ComplexSpectrum(g, np.exp(1j * np.array([0.1, 1.0, 2.0])))
    np.testing.assert_allclose(reflected_power(amp, 2.0), 0.5, rtol=1e-15)
    with pytest.raises(InvalidArgumentError):
        reflected_power(amp, 0.0)


def test_grid_mismatch():
    g = make_grid(NU0_TMYAG, 1e9, 3)
    cav = CavityParams(0.5, 0.9, 1.8, 0.004)
    with pytest.raises(InvalidArgumentError):
        reflection_amplitude(cav, OpticalDepthSpectrum(g, np.zeros(3)), np.zeros(4))


def test_fsr(printed_cavity):
    fsr = free_spectral_range(printed_cavity)
    assert fsr == pytest.approx(C / (2 * 1.799972 * 0.004350), rel=1e-15)
    assert round(fsr / 1e9, 2) == 19.14
    assert 18.5e9 <= fsr <= 20.5e9
    assert free_spectral_range(printed_cavity.replace(L=2 * printed_cavity.L)) == pytest.approx(fsr / 2, rel=1e-15)


def test_lossless_resonance_floor():
    cav = CavityParams(0.6, 0.95, 1.8, 0.00435)
    profile = InhomogeneousProfile(NU0_TMYAG, 17e9, 0.0)
    fsr = free_spectral_range(cav)
    nu_m = find_impedance_match(cav, profile, (NU0_TMYAG - 0.6 * fsr, NU0_TMYAG + 0.6 * fsr))
    floor = ((0.6 - 0.95) / (1 - 0.6 * 0.95)) ** 2
    assert line_reflectivity(cav, profile, nu_m) == pytest.approx(floor, rel=1e-9)
    # resonance: round-trip phase a multiple of 2 pi
    phase = 4 * np.pi * 1.8 * nu_m * 0.00435 / C
    assert abs(np.angle(np.exp(1j * phase))) < 1e-4


def test_pinned_cavity_matches_near_target(cavity, profile, printed_cavity):
    nu_m = find_impedance_match(cavity, profile, (NU0_TMYAG - 10e9, NU0_TMYAG + 10e9))
    assert (nu_m - NU0_TMYAG) == pytest.approx(-3.19e9, abs=1e4)
    # the pinning moves L by far less than its last printed digit
    assert abs(cavity.L - printed_cavity.L) < 0.5e-6
    absorption = 1 - line_reflectivity(cavity, profile, nu_m)
    assert absorption > 0.9
    # experimental value -3.4 +- 0.5 GHz contains the model minimum
    assert abs((nu_m - NU0_TMYAG) + 3.4e9) <= 0.5e9


def test_plateau_slightly_above_half(cavity, profile):
    g = make_grid(NU0_TMYAG, 50e9, 5001)
    power = reflected_power(cavity_response(cavity, profile, g), cavity.s)
    assert 0.5 < power.max() < 0.6


def test_three_modes_in_50ghz(cavity, profile):
    g = make_grid(NU0_TMYAG, 50e9, 50001)
    power = reflected_power(cavity_response(cavity, profile, g), cavity.s)
    from scipy.signal import find_peaks

    dips, _ = find_peaks(-power, prominence=0.1)
    assert dips.size == 3
    # line pulling shifts the modes near the line center by ~1 GHz
    np.testing.assert_allclose(np.diff(g.frequencies[dips]), free_spectral_range(cavity), rtol=0.1)


def test_periodicity_with_constant_depth():
    cav = CavityParams(0.6, 0.99, 1.8, 0.00435)
    fsr = free_spectral_range(cav)
    nu = NU0_TMYAG + np.linspace(-5e9, 5e9, 101)
    phase = lambda x: 4 * np.pi * cav.n_host * x * cav.L / C
    a = np.abs(reflection_coefficient(cav.r1, cav.r2, 0.2, phase(nu))) ** 2
    b = np.abs(reflection_coefficient(cav.r1, cav.r2, 0.2, phase(nu + fsr))) ** 2
    np.testing.assert_allclose(a, b, rtol=1e-8)


def test_no_interior_minimum(cavity, profile):
    with pytest.raises(NoMinimumError):
        find_impedance_match(cavity, profile, (NU0_TMYAG - 3.0e9, NU0_TMYAG - 2.0e9))


def test_pin_length_rejects_large_shift(printed_cavity, profile):
    with pytest.raises(InvalidArgumentError):
        pin_length(printed_cavity, profile, target=NU0_TMYAG - 3.19e9, max_shift=1e-12)


def test_fd_sensitivity_matches_analytic():
    """d|r|^2/d r1 and d|r|^2/d d against closed-form partial derivatives."""
    r1, r2, d, phi = 0.62, 0.985, 0.41, 0.37

    def power(r1, d):
        return abs(reflection_coefficient(r1, r2, d, phi)) ** 2

    z = r2 * np.exp(-d - 1j * phi)
    num = -r1 + z
    den = 1 - r1 * z
    r = num / den
    dr_dr1 = (-den + num * z) / den**2
    dz_dd = -z
    dr_dz = (den + num * r1) / den**2
    dr_dd = dr_dz * dz_dd
    grad_r1 = 2 * np.real(np.conj(r) * dr_dr1)
    grad_d = 2 * np.real(np.conj(r) * dr_dd)
    h = 1e-7
    fd_r1 = (power(r1 + h, d) - power(r1 - h, d)) / (2 * h)
    fd_d = (power(r1, d + h) - power(r1, d - h)) / (2 * h)
    assert fd_r1 == pytest.approx(grad_r1, rel=1e-6)
    assert fd_d == pytest.approx(grad_d, rel=1e-6)


@settings(max_examples=300, deadline=None)
@given(
    r2=st.floats(0.05, 1.0),
    frac=st.floats(0.0, 0.999),
    d=st.floats(1e-3, 20.0),
    m=st.integers(-10**5, 10**5),
    phi=st.floats(-1e5, 1e5),
)
def test_matched_iff_condition(r2, frac, d, m, phi):
    # matched construction gives exactly zero (to rounding)
    rm = r2 * np.exp(-d)
    # phase rounding (~eps * |2 pi m|) is amplified by the cavity finesse
    tol = 4e-16 * max(1.0, abs(2 * np.pi * m)) / (1 - rm * r2) + 1e-15
    assert abs(reflection_coefficient(rm, r2, d, 2 * np.pi * m)) < tol
    # conversely a dark sample forces both conditions: |num| <= 2 |r|
    r1 = frac * r2
    r = abs(reflection_coefficient(r1, r2, d, phi))
    z = r2 * np.exp(-d)
    assert abs(r1 - z) <= 2 * r + 1e-12
    assert z * abs(np.sin(phi)) <= 2 * r + 1e-12


def test_dispersion_shifts_match(profile, cavity, cavity_no_dispersion):
    on = find_impedance_match(cavity, profile, (NU0_TMYAG - 10e9, NU0_TMYAG + 10e9), dispersion=True)
    off = find_impedance_match(cavity, profile, (NU0_TMYAG - 10e9, NU0_TMYAG + 10e9), dispersion=False)
    # atomic dispersion pulls the resonance
    assert abs(on - off) > 0.1e9
    off_pinned = find_impedance_match(
        cavity_no_dispersion, profile, (NU0_TMYAG - 10e9, NU0_TMYAG + 10e9), dispersion=False
    )
    assert off_pinned - NU0_TMYAG == pytest.approx(-3.19e9, abs=1e4)
