"""Frequency grids, inhomogeneous absorption profiles and comb optical depths.

Frequencies are absolute and in Hz throughout; absorption coefficients are
in 1/m and optical depths are dimensionless (``d = alpha * L``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import FWHM_PER_SIGMA
from .errors import InvalidArgumentError, ResolutionError


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniformly sampled absolute frequency axis: ``start + i * spacing``."""

    start: float
    spacing: float
    count: int

    def __post_init__(self):
        if not self.spacing > 0:
            raise InvalidArgumentError(f"grid spacing must be > 0, got {self.spacing}")
        if int(self.count) != self.count or self.count < 2:
            raise InvalidArgumentError(f"grid count must be an integer >= 2, got {self.count}")
        object.__setattr__(self, "count", int(self.count))

    @property
    def frequencies(self) -> np.ndarray:
        return self.start + np.arange(self.count) * self.spacing

    @property
    def stop(self) -> float:
        return self.start + (self.count - 1) * self.spacing

    @property
    def center(self) -> float:
        return self.start + 0.5 * (self.count - 1) * self.spacing

    @property
    def span(self) -> float:
        return (self.count - 1) * self.spacing

    def __len__(self):
        return self.count

    def same_as(self, other: "FrequencyGrid") -> bool:
        return (
            self.count == other.count
            and np.isclose(self.start, other.start, rtol=0, atol=1e-6 * self.spacing)
            and np.isclose(self.spacing, other.spacing, rtol=1e-12, atol=0)
        )


@dataclass(frozen=True)
class InhomogeneousProfile:
    """Lorentzian inhomogeneous absorption line.

    Args:
        nu0: line center (Hz).
        gamma_in: FWHM (Hz).
        peak_alpha: absorption coefficient at ``nu0`` (1/m).
    """

    nu0: float
    gamma_in: float
    peak_alpha: float

    def __post_init__(self):
        if not self.gamma_in > 0:
            raise InvalidArgumentError(f"gamma_in must be > 0, got {self.gamma_in}")
        if not self.peak_alpha >= 0:
            raise InvalidArgumentError(f"peak_alpha must be >= 0, got {self.peak_alpha}")

    def alpha(self, nu) -> np.ndarray:
        hw2 = (0.5 * self.gamma_in) ** 2
        nu = np.asarray(nu, dtype=float)
        return self.peak_alpha * hw2 / ((nu - self.nu0) ** 2 + hw2)


@dataclass(frozen=True)
class CombParams:
    """Gaussian-tooth atomic frequency comb.

    ``gamma_tilde`` is the Gaussian width parameter; the tooth FWHM is
    ``gamma = sqrt(8 ln 2) * gamma_tilde``. The comb is symmetric about
    ``center`` (middle tooth at ``center`` for odd ``n_teeth``).
    """

    d_c: float
    delta: float
    gamma_tilde: float
    d0: float
    center: float
    n_teeth: int = 9

    def __post_init__(self):
        if not self.d_c >= 0:
            raise InvalidArgumentError(f"d_c must be >= 0, got {self.d_c}")
        if not self.d0 >= 0:
            raise InvalidArgumentError(f"d0 must be >= 0, got {self.d0}")
        if not self.delta > 0:
            raise InvalidArgumentError(f"delta must be > 0, got {self.delta}")
        if not self.gamma_tilde > 0:
            raise InvalidArgumentError(f"gamma_tilde must be > 0, got {self.gamma_tilde}")
        if int(self.n_teeth) != self.n_teeth or self.n_teeth < 1:
            raise InvalidArgumentError(f"n_teeth must be a positive integer, got {self.n_teeth}")
        object.__setattr__(self, "n_teeth", int(self.n_teeth))

    @property
    def gamma(self) -> float:
        """Tooth FWHM."""
        return fwhm_from_width(self.gamma_tilde)

    @property
    def finesse(self) -> float:
        return self.delta / self.gamma

    @property
    def storage_time(self) -> float:
        return 1.0 / self.delta

    @property
    def tooth_centers(self) -> np.ndarray:
        k = np.arange(1, self.n_teeth + 1)
        return self.center + (k - 0.5 * (self.n_teeth + 1)) * self.delta

    @property
    def span(self) -> float:
        return self.n_teeth * self.delta

    def default_window(self) -> float:
        """Half-width of the embedding window: 1.5x the comb span, halved."""
        return 0.75 * self.span

    def min_window(self) -> float:
        return 0.5 * self.n_teeth * self.delta + 4.0 * self.gamma_tilde

    def replace(self, **changes) -> "CombParams":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class OpticalDepthSpectrum:
    grid: FrequencyGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.count,):
            raise InvalidArgumentError(
                f"values length {values.shape} does not match grid count {self.grid.count}"
            )
        if np.any(values < 0):
            raise InvalidArgumentError("optical depth must be non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def fwhm_from_width(gamma_tilde):
    return FWHM_PER_SIGMA * gamma_tilde


def width_from_fwhm(gamma):
    return gamma / FWHM_PER_SIGMA


def make_grid(center: float, span: float, count: int) -> FrequencyGrid:
    """Uniform grid of ``count`` samples covering ``center -/+ span/2``."""
    if not span > 0:
        raise InvalidArgumentError(f"span must be > 0, got {span}")
    if int(count) != count or count < 2:
        raise InvalidArgumentError(f"count must be an integer >= 2, got {count}")
    return FrequencyGrid(start=center - 0.5 * span, spacing=span / (count - 1), count=int(count))


def lorentzian_alpha(profile: InhomogeneousProfile, grid: FrequencyGrid) -> np.ndarray:
    """Absorption coefficient (1/m) of the inhomogeneous line on ``grid``."""
    return profile.alpha(grid.frequencies)


def check_comb_resolution(comb: CombParams, grid: FrequencyGrid):
    required = comb.gamma_tilde / 4.0
    if grid.spacing > required * (1 + 1e-12):
        raise ResolutionError(
            f"grid spacing {grid.spacing:.6g} Hz under-resolves comb teeth; "
            f"need spacing <= {required:.6g} Hz (gamma_tilde / 4)"
        )


def comb_depth_at(comb: CombParams, nu) -> np.ndarray:
    """Pointwise comb optical depth, no grid or resolution checks."""
    nu = np.asarray(nu, dtype=float)
    out = np.full(nu.shape, float(comb.d0))
    if comb.d_c == 0:
        return out
    inv = 1.0 / (2.0 * comb.gamma_tilde**2)
    for b in comb.tooth_centers:
        out += comb.d_c * np.exp(-((nu - b) ** 2) * inv)
    return out


def comb_depth(comb: CombParams, grid: FrequencyGrid) -> OpticalDepthSpectrum:
    """Optical depth of the comb (Gaussian teeth plus constant background)."""
    check_comb_resolution(comb, grid)
    return OpticalDepthSpectrum(grid, comb_depth_at(comb, grid.frequencies))


def embed_comb(
    profile: InhomogeneousProfile,
    comb: CombParams,
    L: float,
    grid: FrequencyGrid,
    window_halfwidth: float | None = None,
    crossfade: float | None = None,
) -> OpticalDepthSpectrum:
    """Optical depth of a comb carved into the inhomogeneous line.

    Inside ``center -/+ window_halfwidth`` the depth is the comb depth; outside
    it is ``alpha(nu) * L``. The two are blended linearly over ``crossfade``
    (default: one tooth spacing) just inside each window edge.
    """
    if window_halfwidth is None:
        window_halfwidth = comb.default_window()
    if crossfade is None:
        crossfade = comb.delta
    if window_halfwidth < comb.min_window() * (1 - 1e-12):
        raise InvalidArgumentError(
            f"window half-width {window_halfwidth:.6g} Hz smaller than the comb "
            f"requires ({comb.min_window():.6g} Hz)"
        )
    if crossfade < 0 or crossfade > window_halfwidth:
        raise InvalidArgumentError(f"crossfade {crossfade} outside [0, window_halfwidth]")
    if comb.center - window_halfwidth < grid.start or comb.center + window_halfwidth > grid.stop:
        raise InvalidArgumentError("comb window extends beyond the frequency grid")
    check_comb_resolution(comb, grid)

    nu = grid.frequencies
    lor = profile.alpha(nu) * L
    weight = embedding_weight(nu, comb.center, window_halfwidth, crossfade)
    values = lor.copy()
    inside = weight > 0
    values[inside] = weight[inside] * comb_depth_at(comb, nu[inside]) + (1 - weight[inside]) * lor[inside]
    return OpticalDepthSpectrum(grid, values)


def embedding_weight(nu, center, window_halfwidth, crossfade) -> np.ndarray:
    dist = np.abs(np.asarray(nu, dtype=float) - center)
    if crossfade == 0:
        return (dist <= window_halfwidth).astype(float)
    return np.clip((window_halfwidth - dist) / crossfade, 0.0, 1.0)
