"""Asymmetric crystal cavity: reflection response and impedance matching."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .constants import C, IMPEDANCE_MATCH_OFFSET, TMYAG_CAVITY, NU0_TMYAG, GAMMA_IN_TMYAG
from .dispersion import IndexSpectrum, dispersive_index, lorentzian_kk_offset, round_trip_phase
from .errors import InvalidArgumentError, NoMinimumError
from .spectra import (
    CombParams,
    FrequencyGrid,
    InhomogeneousProfile,
    OpticalDepthSpectrum,
    embed_comb,
    make_grid,
)

GOLDEN_TOL = 1e3


@dataclass(frozen=True)
class CavityParams:
    """Crystal cavity with front/back amplitude reflectivities ``r1 < r2``.

    ``s`` divides the reflected power to account for the detection beam
    splitter (2 for an ideal 50/50 splitter).
    """

    r1: float
    r2: float
    n_host: float
    L: float
    s: float = 2.0

    def __post_init__(self):
        if not (0 <= self.r1 < self.r2 <= 1):
            raise InvalidArgumentError(f"need 0 <= r1 < r2 <= 1, got r1={self.r1}, r2={self.r2}")
        if not self.s > 0:
            raise InvalidArgumentError(f"s must be > 0, got {self.s}")
        if not self.L >= 0:
            raise InvalidArgumentError(f"L must be >= 0, got {self.L}")
        if not self.n_host > 0:
            raise InvalidArgumentError(f"n_host must be > 0, got {self.n_host}")

    @property
    def R1(self):
        return self.r1**2

    @property
    def R2(self):
        return self.r2**2

    def replace(self, **changes) -> "CavityParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class ComplexSpectrum:
    grid: FrequencyGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.grid.count,):
            raise InvalidArgumentError("values length does not match grid count")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def reference_cavity() -> CavityParams:
    return CavityParams(TMYAG_CAVITY["r1"], TMYAG_CAVITY["r2"], TMYAG_CAVITY["n_host"], TMYAG_CAVITY["L"], TMYAG_CAVITY["s"])


def tmyag_profile(peak_alpha: float = TMYAG_CAVITY["peak_alpha"]) -> InhomogeneousProfile:
    return InhomogeneousProfile(NU0_TMYAG, GAMMA_IN_TMYAG, peak_alpha)


def reflection_coefficient(r1, r2, depth, phase):
    """``(-r1 + r2 e^{-d} e^{-i Phi}) / (1 - r1 r2 e^{-d} e^{-i Phi})``."""
    round_trip = np.exp(-np.asarray(depth, dtype=float) - 1j * np.asarray(phase, dtype=float))
    return (-r1 + r2 * round_trip) / (1.0 - r1 * r2 * round_trip)


def reflection_amplitude(cavity: CavityParams, depth: OpticalDepthSpectrum, phase) -> ComplexSpectrum:
    """Complex reflected amplitude ``E_out / E_in`` summed over all round trips."""
    phase = np.asarray(phase, dtype=float)
    if phase.shape != (depth.grid.count,):
        raise InvalidArgumentError("depth and phase must share one grid")
    return ComplexSpectrum(depth.grid, reflection_coefficient(cavity.r1, cavity.r2, depth.values, phase))


def reflected_power(amp: ComplexSpectrum, s: float) -> np.ndarray:
    """Detected reflectivity ``|r|^2 / s``."""
    if not s > 0:
        raise InvalidArgumentError(f"s must be > 0, got {s}")
    return np.abs(amp.values) ** 2 / s


def free_spectral_range(cavity: CavityParams) -> float:
    if not cavity.L > 0 or cavity.n_host < 1:
        raise InvalidArgumentError("free spectral range needs L > 0 and n_host >= 1")
    return C / (2.0 * cavity.n_host * cavity.L)


def cavity_response(
    cavity: CavityParams,
    profile: InhomogeneousProfile,
    grid: FrequencyGrid,
    comb: CombParams | None = None,
    dispersion: bool = True,
    method: str = "hilbert",
    window_halfwidth: float | None = None,
    crossfade: float | None = None,
) -> ComplexSpectrum:
    """Full forward model: absorption, KK index, round-trip phase, reflection."""
    if comb is None:
        depth = OpticalDepthSpectrum(grid, profile.alpha(grid.frequencies) * cavity.L)
    else:
        depth = embed_comb(profile, comb, cavity.L, grid, window_halfwidth, crossfade)
    n_spec = dispersive_index(
        profile, cavity.L, grid, cavity.n_host, comb, window_halfwidth, crossfade, method, dispersion
    )
    return reflection_amplitude(cavity, depth, round_trip_phase(n_spec, cavity.L))


def line_reflectivity(cavity: CavityParams, profile: InhomogeneousProfile, nu, dispersion: bool = True):
    """``|r|^2`` of the comb-free cavity at arbitrary frequencies (not divided by s)."""
    nu = np.asarray(nu, dtype=float)
    depth = profile.alpha(nu) * cavity.L
    n = np.full(nu.shape, float(cavity.n_host))
    if dispersion and profile.peak_alpha > 0:
        k0 = profile.peak_alpha * C / (4.0 * np.pi * profile.nu0)
        n = n + lorentzian_kk_offset(nu, k0, profile.nu0, 0.5 * profile.gamma_in)
    phase = 4.0 * np.pi * n * nu * cavity.L / C
    return np.abs(reflection_coefficient(cavity.r1, cavity.r2, depth, phase)) ** 2


def _golden_min(f, a, b, tol):
    inv = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def find_impedance_match(
    cavity: CavityParams,
    profile: InhomogeneousProfile,
    search_window: tuple[float, float],
    dispersion: bool = True,
    scan_step: float = 10e6,
    tol: float = GOLDEN_TOL,
) -> float:
    """Absolute frequency of minimum reflectivity of the comb-free cavity.

    The window is scanned at ``scan_step`` and the best interior sample is
    refined by golden-section search to ``tol`` Hz.
    """
    lo, hi = map(float, search_window)
    if not hi > lo:
        raise InvalidArgumentError("search window must have hi > lo")
    count = max(3, int(np.ceil((hi - lo) / scan_step)) + 1)
    nu = np.linspace(lo, hi, count)
    refl = line_reflectivity(cavity, profile, nu, dispersion)
    i = int(np.argmin(refl))
    if i == 0 or i == count - 1:
        raise NoMinimumError(
            f"reflectivity minimum lies on the search window edge ({nu[i]:.6g} Hz); widen the window"
        )

    def f(x):
        return float(line_reflectivity(cavity, profile, np.array([x]), dispersion)[0])

    return _golden_min(f, nu[i - 1], nu[i + 1], tol)


def pin_length(
    cavity: CavityParams,
    profile: InhomogeneousProfile,
    target: float = NU0_TMYAG + IMPEDANCE_MATCH_OFFSET,
    dispersion: bool = True,
    max_shift: float = 0.5e-6,
    search_halfwidth: float = 8e9,
) -> CavityParams:
    """Shift ``L`` by the smallest amount that puts the reflectivity minimum at ``target``.

    A 4-digit length only fixes the round-trip phase to within several
    radians, so the resonance position it implies is arbitrary. The shift
    is restricted to ``max_shift`` (half of the last printed digit of
    0.4350 cm by default), which keeps the cavity consistent with the
    rounded value.
    """
    window = (target - search_halfwidth, target + search_halfwidth)
    fringe = C / (2.0 * cavity.n_host * target)

    def offset(L):
        return find_impedance_match(cavity.replace(L=L), profile, window, dispersion) - target

    # bare resonances move as nu_m ~ 1/L; pick the nearest fringe first
    L0 = cavity.L
    f0 = offset(L0)
    dl = L0 * f0 / target
    dl -= fringe * np.round(dl / fringe)
    L1 = L0 + dl
    f1 = offset(L1)
    # then refine by secant steps, since line pulling changes the slope
    for _ in range(20):
        if abs(f1) < GOLDEN_TOL or f1 == f0:
            break
        L0, f0, L1 = L1, f1, L1 - f1 * (L1 - L0) / (f1 - f0)
        f1 = offset(L1)
    current = cavity.replace(L=L1)
    if abs(current.L - cavity.L) > max_shift:
        raise InvalidArgumentError(
            f"pinning needs a length shift of {current.L - cavity.L:.3g} m (> {max_shift:g} m)"
        )
    return current


def pinned_reference_cavity(dispersion: bool = True) -> CavityParams:
    """Reference cavity with ``L`` pinned so the match sits at -3.19 GHz."""
    return pin_length(reference_cavity(), tmyag_profile(), dispersion=dispersion)


def reflectivity_grid(center: float = NU0_TMYAG, span: float = 50e9, count: int = 5001) -> FrequencyGrid:
    return make_grid(center, span, count)


__all__ = [
    "CavityParams",
    "ComplexSpectrum",
    "IndexSpectrum",
    "cavity_response",
    "find_impedance_match",
    "free_spectral_range",
    "line_reflectivity",
    "pinned_reference_cavity",
    "pin_length",
    "reflected_power",
    "reflection_amplitude",
    "reference_cavity",
    "tmyag_profile",
]
