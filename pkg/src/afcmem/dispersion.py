"""Extinction coefficient and Kramers-Kronig refractive index.

The real index follows from the extinction coefficient through

    n(nu) = n_host + (2/pi) PV int_0^inf nu' k(nu') / (nu'^2 - nu^2) dnu'

which is evaluated either by direct principal-value quadrature on the grid
(``method="pv"``) or, in the narrowband limit where the kernel reduces to
``1 / (pi (nu' - nu))``, by an FFT Hilbert transform (``method="hilbert"``).
Both add closed-form contributions for the absorption beyond the grid
edges, modelled as Lorentzian tails fitted to the outermost samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks, peak_widths

from .constants import C
from .errors import InvalidArgumentError, ResolutionError, TailTruncationError
from .spectra import FrequencyGrid, InhomogeneousProfile, CombParams, embed_comb

METHODS = ("pv", "hilbert")
_METHOD_ALIASES = {"pv": "pv", "pv-quadrature": "pv", "hilbert": "hilbert", "fft-hilbert": "hilbert"}

TAIL_FRACTION = 0.05
TAIL_THRESHOLD = 1e-3
MIN_SAMPLES_PER_FEATURE = 8
HILBERT_PAD = 32


@dataclass(frozen=True)
class ExtinctionSpectrum:
    grid: FrequencyGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.count,):
            raise InvalidArgumentError("values length does not match grid count")
        if np.any(values < 0):
            raise InvalidArgumentError("extinction coefficient must be non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class IndexSpectrum:
    grid: FrequencyGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.count,):
            raise InvalidArgumentError("values length does not match grid count")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def normalize_method(method: str) -> str:
    try:
        return _METHOD_ALIASES[method]
    except KeyError:
        raise InvalidArgumentError(f"unknown KK method {method!r}; use 'pv' or 'hilbert'") from None


def extinction_from_alpha(alpha, grid: FrequencyGrid) -> ExtinctionSpectrum:
    """``k = alpha c / (4 pi nu)`` per grid sample."""
    nu = grid.frequencies
    if np.any(nu <= 0):
        raise InvalidArgumentError("extinction requires strictly positive frequencies")
    alpha = np.asarray(alpha, dtype=float)
    return ExtinctionSpectrum(grid, alpha * C / (4.0 * np.pi * nu))


def alpha_to_k(alpha, nu):
    return np.asarray(alpha, dtype=float) * C / (4.0 * np.pi * np.asarray(nu, dtype=float))


# -- closed-form Lorentzian integrals ---------------------------------------


def lorentz_cauchy(nu, x0, g, lo, hi):
    """``int_lo^hi g^2 / ((x - x0)^2 + g^2) / (x - nu) dx`` in closed form.

    Principal value when ``nu`` lies inside ``(lo, hi)``. ``lo`` may be
    ``-inf`` and ``hi`` may be ``inf``.
    """
    nu = np.asarray(nu, dtype=float)
    b = nu - x0
    pref = g * g / (b * b + g * g)

    def antideriv(u):
        if np.isinf(u):
            return -(b / g) * np.copysign(0.5 * np.pi, u)
        return 0.5 * np.log((u - b) ** 2 / (u * u + g * g)) - (b / g) * np.arctan(u / g)

    return pref * (antideriv(hi - x0) - antideriv(lo - x0))


def lorentzian_kk_offset(nu, k_peak, x0, hwhm, lo=0.0, hi=np.inf, narrowband=False):
    """Index change from a Lorentzian extinction line restricted to ``[lo, hi]``.

    ``k(x) = k_peak hwhm^2 / ((x - x0)^2 + hwhm^2)``. With ``narrowband`` only
    the resonant ``1/(x - nu)`` part of the kernel is kept.
    """
    nu = np.asarray(nu, dtype=float)
    out = lorentz_cauchy(nu, x0, hwhm, lo, hi)
    if not narrowband:
        out = out + lorentz_cauchy(-nu, x0, hwhm, lo, hi)
    return k_peak * out / np.pi


def lorentzian_index(profile: InhomogeneousProfile, grid: FrequencyGrid, n_host: float) -> IndexSpectrum:
    """Exact refractive index of a bare Lorentzian line over ``[0, inf)``.

    The extinction of the line is approximated as a Lorentzian in ``k`` with
    peak ``alpha0 c / (4 pi nu0)``; the ``1/nu`` factor varies by ~1e-4 over
    the line and is neglected.
    """
    k0 = profile.peak_alpha * C / (4.0 * np.pi * profile.nu0)
    dn = lorentzian_kk_offset(grid.frequencies, k0, profile.nu0, 0.5 * profile.gamma_in)
    return IndexSpectrum(grid, n_host + dn)


# -- tail models -------------------------------------------------------------


@dataclass(frozen=True)
class _Tail:
    amp: float  # k = amp * g^2 / ((x - x0)^2 + g^2)
    x0: float
    g: float

    def __call__(self, x):
        return self.amp * self.g**2 / ((np.asarray(x) - self.x0) ** 2 + self.g**2)


def _fit_tail(x, k, x_edge, x_ref):
    """Fit a Lorentzian to tail samples via a quadratic fit of ``1/k``."""
    if np.all(np.abs(k) == 0):
        return None
    if np.all(k > 0):
        xm = x.mean()
        scale = x.max() - x.min()
        u = (x - xm) / scale
        a, b, c = np.polyfit(u, 1.0 / k, 2)
        if a > 0:
            g2 = scale**2 * (c / a - b * b / (4 * a * a))
            if g2 > 0:
                x0 = xm - b * scale / (2 * a)
                # the model must decay away from the grid
                if (x_edge - x0) * (x_edge - x_ref) > 0:
                    return _Tail(amp=scale**2 / (a * g2), x0=x0, g=float(np.sqrt(g2)))
    # fallback: 1/x^2 power law anchored at the edge sample
    k_edge = float(k[np.argmin(np.abs(x - x_edge))])
    dist = abs(x_edge - x_ref)
    g = 1e-3 * dist
    return _Tail(amp=k_edge * dist**2 / g**2, x0=x_ref, g=g)


def _tails(values, grid):
    x = grid.frequencies
    n_tail = max(8, int(np.ceil(TAIL_FRACTION * grid.count)))
    n_tail = min(n_tail, grid.count // 2)
    w = np.abs(values)
    if not np.any(w > 0):
        return None, None
    x_ref = float(np.sum(x * w) / np.sum(w))
    peak = w.max()
    left = right = None
    if np.any(np.abs(values[:n_tail]) > 1e-14 * peak):
        left = _fit_tail(x[:n_tail], values[:n_tail], x[0], x_ref)
    if np.any(np.abs(values[-n_tail:]) > 1e-14 * peak):
        right = _fit_tail(x[-n_tail:], values[-n_tail:], x[-1], x_ref)
    return left, right


def _tail_contribution(tail, nu, lo, hi, narrowband):
    if tail is None:
        return 0.0
    return lorentzian_kk_offset(nu, tail.amp, tail.x0, tail.g, lo, hi, narrowband=narrowband)


# -- checks ------------------------------------------------------------------


def check_tail_condition(values):
    peak = np.max(np.abs(values))
    if peak == 0:
        return
    edge = max(abs(values[0]), abs(values[-1]))
    if edge >= TAIL_THRESHOLD * peak:
        raise TailTruncationError(
            f"extinction at the grid edge is {edge / peak:.3g} of its peak "
            f"(limit {TAIL_THRESHOLD:g}); widen the grid or enable the Lorentzian tail model"
        )


def check_kk_resolution(values):
    """Raise if the narrowest peak of ``|values|`` spans fewer than 8 samples."""
    w = np.abs(np.asarray(values, dtype=float))
    peak = w.max() if w.size else 0.0
    if peak == 0:
        return
    idx, _ = find_peaks(w, prominence=1e-2 * peak)
    if idx.size == 0:
        return
    widths = peak_widths(w, idx, rel_height=0.5)[0]
    narrowest = float(widths.min())
    if narrowest < MIN_SAMPLES_PER_FEATURE:
        raise ResolutionError(
            f"narrowest absorption feature spans {narrowest:.2f} samples; "
            f"need at least {MIN_SAMPLES_PER_FEATURE} (refine the grid)"
        )


# -- transforms --------------------------------------------------------------


def _derivative(k, h):
    """First derivative: 7-point central stencil inside, 2nd order at the ends."""
    dk = np.gradient(k, h, edge_order=2)
    if k.size >= 7:
        dk[3:-3] = (
            45.0 * (k[4:-2] - k[2:-4]) - 9.0 * (k[5:-1] - k[1:-5]) + (k[6:] - k[:-6])
        ) / (60.0 * h)
    return dk


def _pv_sum(values, grid, chunk=2048):
    """Singularity-subtracted PV quadrature of the exact KK kernel on the grid.

    Each sample stands for a cell of width ``h``. For output sample ``i``::

        PV int k/(x - nu_i) = int (k - k_i)/(x - nu_i) + k_i ln((b - nu_i)/(nu_i - a))

    where the regular part is summed over all samples ``j != i`` and the
    singular cell contributes its limit ``h k'(nu_i)``. The non-resonant
    ``k/(x + nu)`` part is a plain midpoint sum.
    """
    h = grid.spacing
    x = grid.frequencies
    n = grid.count
    a = grid.start - 0.5 * h
    b = grid.stop + 0.5 * h
    k = np.asarray(values, dtype=float)
    dk = _derivative(k, h)
    out = np.empty(n)
    j = np.arange(n)
    for i0 in range(0, n, chunk):
        i = np.arange(i0, min(i0 + chunk, n))
        diff = (j[None, :] - i[:, None]).astype(float)
        ki = k[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            reg = (k[None, :] - ki[:, None]) / diff
        reg[np.arange(i.size), i] = 0.0
        resonant = reg.sum(axis=1) + h * dk[i] + ki * np.log((b - x[i]) / (x[i] - a))
        counter = h * (k[None, :] / (x[None, :] + x[i][:, None])).sum(axis=1)
        out[i] = resonant + counter
    return out / np.pi, a, b


def _hilbert_sum(values, grid, left, right, pad_factor=None):
    """Narrowband KK via FFT Hilbert transform on a tail-extended buffer.

    The periodic kernel differs from ``1/x`` by a term falling as
    ``1/pad_factor**2``. The padding depends on the grid alone so that the
    transform stays exactly linear in ``values``.
    """
    if pad_factor is None:
        pad_factor = HILBERT_PAD
    n = grid.count
    h = grid.spacing
    m = 1 << int(np.ceil(np.log2(pad_factor * n)))
    n_pad = m - n
    n_right = n_pad // 2
    n_left = n_pad - n_right
    x_right = grid.stop + h * np.arange(1, n_right + 1)
    x_left = grid.start - h * np.arange(n_left, 0, -1)
    buf = np.empty(m)
    buf[:n] = values
    buf[n : n + n_right] = right(x_right) if right is not None else 0.0
    buf[n + n_right :] = left(x_left) if left is not None else 0.0

    spec = np.fft.fft(buf)
    freqs = np.fft.fftfreq(m)
    # H[f] with kernel 1/(pi (x - y)): multiply by -i sign(f)
    hil = np.fft.ifft(spec * (-1j * np.sign(freqs))).real
    a = x_left[0] - 0.5 * h if n_left else grid.start - 0.5 * h
    b = x_right[-1] + 0.5 * h if n_right else grid.stop + 0.5 * h
    # dn = (1/pi) PV int k/(x - nu) = -H[k]
    return -hil[:n], a, b


def kk_delta_n(values, grid: FrequencyGrid, method: str = "hilbert", tail: str | None = "lorentzian", check=True):
    """Index change ``n(nu) - n_host`` from a (possibly signed) extinction array.

    Args:
        values: extinction coefficient samples on ``grid``; signed inputs are
            allowed so that differences of spectra can be transformed.
        method: ``"pv"`` (direct quadrature, exact kernel) or ``"hilbert"``
            (FFT, narrowband kernel).
        tail: ``"lorentzian"`` to extend the absorption past the grid edges
            with fitted Lorentzian tails, or ``None`` to require that it has
            already decayed (``TailTruncationError`` otherwise).
        check: run the resolution check.
    """
    method = normalize_method(method)
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.count,):
        raise InvalidArgumentError("values length does not match grid count")
    if grid.start <= 0:
        raise InvalidArgumentError("KK transform requires strictly positive frequencies")
    if check:
        check_kk_resolution(values)
    if tail is None:
        check_tail_condition(values)
        left = right = None
    elif tail == "lorentzian":
        left, right = _tails(values, grid)
    else:
        raise InvalidArgumentError(f"unknown tail model {tail!r}")

    nu = grid.frequencies
    narrowband = method == "hilbert"
    if method == "pv":
        dn, a, b = _pv_sum(values, grid)
    else:
        dn, a, b = _hilbert_sum(values, grid, left, right)
    dn = dn + _tail_contribution(left, nu, 0.0, a, narrowband)
    dn = dn + _tail_contribution(right, nu, b, np.inf, narrowband)
    return dn


def kk_real_index(
    k: ExtinctionSpectrum, n_host: float, method: str = "hilbert", tail: str | None = "lorentzian"
) -> IndexSpectrum:
    """Real refractive index from the extinction spectrum by Kramers-Kronig."""
    return IndexSpectrum(k.grid, n_host + kk_delta_n(k.values, k.grid, method, tail))


def round_trip_phase(n_spec: IndexSpectrum, L: float) -> np.ndarray:
    """``Phi = 4 pi n(nu) nu L / c`` (unwrapped, radians)."""
    return 4.0 * np.pi * np.asarray(n_spec.values) * n_spec.grid.frequencies * L / C


def dispersive_index(
    profile: InhomogeneousProfile,
    L: float,
    grid: FrequencyGrid,
    n_host: float,
    comb: CombParams | None = None,
    window_halfwidth: float | None = None,
    crossfade: float | None = None,
    method: str = "hilbert",
    dispersion: bool = True,
) -> IndexSpectrum:
    """Index of the crystal with its (optionally comb-shaped) absorption line.

    The transform is linear, so the index is split into the bare Lorentzian
    line, which has a closed form over ``[0, inf)``, plus the numerical
    transform of the comb-minus-line extinction, which vanishes outside the
    comb window. With ``dispersion=False`` the index is ``n_host`` everywhere.
    """
    if not dispersion or profile.peak_alpha == 0 and comb is None:
        return IndexSpectrum(grid, np.full(grid.count, float(n_host)))
    n = lorentzian_index(profile, grid, n_host).values
    if comb is not None:
        depth = embed_comb(profile, comb, L, grid, window_halfwidth, crossfade).values
        nu = grid.frequencies
        residual = alpha_to_k(depth / L - profile.alpha(nu), nu)
        n = n + kk_delta_n(residual, grid, method)
    return IndexSpectrum(grid, n)
