"""FFT propagation of pulse envelopes through a cavity response, echo analysis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cavity import CavityParams, ComplexSpectrum, cavity_response
from .errors import CoverageError, InvalidArgumentError, ResolutionError
from .spectra import CombParams, FrequencyGrid, InhomogeneousProfile, make_grid

COVERAGE_MIN = 0.999
WRAP_TAIL_FRACTION = 0.05
WRAP_LIMIT = 1e-6
PAD_FACTOR = 8
ECHO_SUM_EPS = 1e-9


@dataclass(frozen=True)
class Pulse:
    """Complex field envelope sampled at ``t_start + i dt``.

    The envelope is referenced to the absolute frequency ``carrier``: a
    spectral component at baseband frequency ``f`` sits at ``carrier + f``.
    """

    t_start: float
    dt: float
    samples: np.ndarray = field(repr=False)
    carrier: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        if not self.dt > 0:
            raise InvalidArgumentError(f"dt must be > 0, got {self.dt}")
        if samples.ndim != 1 or samples.size < 2:
            raise InvalidArgumentError("a pulse needs at least 2 samples")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.samples.size)

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    @property
    def energy(self) -> float:
        return float(np.sum(self.intensity) * self.dt)

    @property
    def center_time(self) -> float:
        w = self.intensity
        return float(np.sum(self.times * w) / np.sum(w))


@dataclass(frozen=True)
class Echo:
    order: int
    center_time: float
    energy: float
    window: tuple[float, float]


@dataclass(frozen=True)
class EchoTrain:
    """Output energy in consecutive windows of width ``1/delta``.

    ``pulses[0]`` is the prompt reflection, ``pulses[m]`` the m-th echo.
    Energies are fractions of the input energy; ``center_time`` is the
    intensity centroid inside each window.
    """

    pulses: tuple[Echo, ...]
    input_center: float
    delta: float

    def __post_init__(self):
        windows = [p.window for p in self.pulses]
        for (a0, a1), (b0, b1) in zip(windows, windows[1:]):
            if not (a0 < a1 <= b0 < b1):
                raise InvalidArgumentError("echo windows must be disjoint and time-ordered")
        if any(p.energy < 0 for p in self.pulses):
            raise InvalidArgumentError("echo energies must be non-negative")

    @property
    def energies(self) -> np.ndarray:
        return np.array([p.energy for p in self.pulses])

    @property
    def total(self) -> float:
        return float(self.energies.sum())

    def storage_time(self) -> float:
        """Measured delay between the prompt reflection and the first echo."""
        return self.pulses[1].center_time - self.pulses[0].center_time

    def to_dict(self) -> dict:
        return {
            "delta_hz": self.delta,
            "input_center_s": self.input_center,
            "pulses": [
                {"order": p.order, "center_time_s": p.center_time, "energy": p.energy, "window_s": list(p.window)}
                for p in self.pulses
            ],
        }


def gaussian_input(
    center_freq: float,
    fwhm_duration: float,
    time_span: float,
    dt: float,
    carrier: float | None = None,
    lead: float | None = None,
) -> Pulse:
    """Unit-energy Gaussian pulse centred at ``t = 0``.

    The grid starts ``lead`` before the pulse centre (default a quarter of
    ``time_span``) so that acausal pre-echoes remain visible.
    """
    if not fwhm_duration > 0:
        raise InvalidArgumentError(f"fwhm_duration must be > 0, got {fwhm_duration}")
    if not dt > 0 or not time_span > 0:
        raise InvalidArgumentError("dt and time_span must be > 0")
    if dt > fwhm_duration / 10:
        raise ResolutionError(f"dt {dt:.3g} s exceeds fwhm/10 = {fwhm_duration / 10:.3g} s")
    if carrier is None:
        carrier = center_freq
    if lead is None:
        lead = 0.25 * time_span
    count = int(round(time_span / dt)) + 1
    t = -lead + dt * np.arange(count)
    env = np.exp(-2.0 * np.log(2.0) * (t / fwhm_duration) ** 2)
    samples = env * np.exp(2j * np.pi * (center_freq - carrier) * t)
    samples = samples / np.sqrt(np.sum(np.abs(samples) ** 2) * dt)
    return Pulse(t_start=float(t[0]), dt=dt, samples=samples, carrier=carrier)


def fft_length(n: int) -> int:
    return 1 << int(np.ceil(np.log2(PAD_FACTOR * n)))


def baseband_frequencies(pulse: Pulse, n_fft: int | None = None) -> np.ndarray:
    n_fft = fft_length(pulse.samples.size) if n_fft is None else n_fft
    return np.fft.fftfreq(n_fft, pulse.dt)


def response_grid_for(pulse: Pulse, n_fft: int | None = None) -> FrequencyGrid:
    """Absolute frequency grid that coincides with the pulse's FFT bins."""
    n_fft = fft_length(pulse.samples.size) if n_fft is None else n_fft
    df = 1.0 / (n_fft * pulse.dt)
    lo = -(n_fft // 2) * df
    return FrequencyGrid(start=pulse.carrier + lo, spacing=df, count=n_fft)


@dataclass(frozen=True)
class Propagation:
    """Full padded buffers of a propagation, kept for energy diagnostics."""

    output: Pulse
    padded_output: np.ndarray = field(repr=False)
    padded_spectrum: np.ndarray = field(repr=False)
    df: float = 0.0
    wrap_fraction: float = 0.0


def propagate_full(pulse: Pulse, response: ComplexSpectrum) -> Propagation:
    n = pulse.samples.size
    n_fft = fft_length(n)
    buf = np.zeros(n_fft, dtype=complex)
    buf[:n] = pulse.samples
    spec = np.fft.fft(buf)
    f = np.fft.fftfreq(n_fft, pulse.dt)
    nu = pulse.carrier + f

    grid = response.grid
    power = np.abs(spec) ** 2
    total = power.sum()
    inside = (nu >= grid.start) & (nu <= grid.stop)
    fraction = float(power[inside].sum() / total) if total > 0 else 1.0
    if fraction < COVERAGE_MIN:
        raise CoverageError(
            f"response grid holds only {fraction:.6f} of the input spectral energy (need {COVERAGE_MIN})",
            fraction,
        )
    x = grid.frequencies
    vals = response.values
    r = np.interp(nu, x, vals.real) + 1j * np.interp(nu, x, vals.imag)
    out_spec = spec * r
    out = np.fft.ifft(out_spec)
    energy = np.sum(np.abs(out) ** 2)
    tail = int(np.ceil(WRAP_TAIL_FRACTION * n_fft))
    wrap = float(np.sum(np.abs(out[-tail:]) ** 2) / energy) if energy > 0 else 0.0
    output = Pulse(pulse.t_start, pulse.dt, out[:n], pulse.carrier)
    return Propagation(output, out, out_spec, 1.0 / (n_fft * pulse.dt), wrap)


def propagate(pulse: Pulse, response: ComplexSpectrum) -> Pulse:
    """``ifft(fft(pulse) * r)`` on a zero-padded buffer, cut to the input grid.

    ``r`` is interpolated linearly (real and imaginary parts) from the
    response grid onto the FFT bins at ``pulse.carrier + f``.
    """
    prop = propagate_full(pulse, response)
    if prop.wrap_fraction > WRAP_LIMIT:
        raise InvalidArgumentError(
            f"{prop.wrap_fraction:.3g} of the output energy reaches the end of the FFT window; "
            "the response rings longer than the padded buffer"
        )
    return prop.output


def extract_echoes(output: Pulse, input_ref: Pulse, delta: float) -> EchoTrain:
    """Energy in windows of width ``1/delta`` centred at ``t_in + m / delta``."""
    if not delta > 0:
        raise InvalidArgumentError(f"delta must be > 0, got {delta}")
    period = 1.0 / delta
    t_in = input_ref.center_time
    t = output.times
    t_end = t[-1] + 0.5 * output.dt
    if t_end - t_in < 3.0 * period:
        raise InvalidArgumentError(
            f"output extends {t_end - t_in:.3g} s past the input centre; need >= 3/delta = {3 * period:.3g} s"
        )
    e_in = input_ref.energy
    inten = output.intensity
    pulses = []
    m = 0
    while t_in + (m + 0.5) * period <= t_end:
        lo = t_in + (m - 0.5) * period
        hi = t_in + (m + 0.5) * period
        sel = (t >= lo) & (t < hi)
        w = inten[sel]
        energy = float(w.sum() * output.dt / e_in)
        center = float(np.sum(t[sel] * w) / w.sum()) if w.sum() > 0 else t_in + m * period
        pulses.append(Echo(m, center, energy, (lo, hi)))
        m += 1
    return EchoTrain(tuple(pulses), t_in, delta)


def efficiency(output: Pulse, input_ref: Pulse, delta: float) -> float:
    """Energy of the first echo as a fraction of the input energy."""
    return extract_echoes(output, input_ref, delta).pulses[1].energy


@dataclass(frozen=True)
class Causality:
    fraction: float
    zero_output: bool = False


def causality_metric(output: Pulse, input_ref: Pulse, fwhm_duration: float | None = None) -> Causality:
    """Fraction of output energy before ``t_in - 3 * FWHM`` of the input."""
    if output.samples.size != input_ref.samples.size or not np.isclose(output.dt, input_ref.dt):
        raise InvalidArgumentError("output and input must share one time grid")
    if fwhm_duration is None:
        fwhm_duration = intensity_fwhm(input_ref)
    total = float(np.sum(output.intensity))
    if total == 0:
        return Causality(0.0, zero_output=True)
    cutoff = input_ref.center_time - 3.0 * fwhm_duration
    early = output.times < cutoff
    return Causality(float(np.sum(output.intensity[early]) / total))


def intensity_fwhm(pulse: Pulse) -> float:
    w = pulse.intensity
    above = np.nonzero(w >= 0.5 * w.max())[0]
    return float((above[-1] - above[0] + 1) * pulse.dt)


@dataclass(frozen=True)
class EchoSimulation:
    input: Pulse
    output: Pulse
    response: ComplexSpectrum
    echoes: EchoTrain
    causality: Causality
    wrap_fraction: float

    @property
    def efficiency(self) -> float:
        return self.echoes.pulses[1].energy


def simulate_echo(
    cavity: CavityParams,
    profile: InhomogeneousProfile,
    comb: CombParams | None,
    *,
    delta: float | None = None,
    fwhm_duration: float = 12e-9,
    time_span: float = 512e-9,
    dt: float = 0.5e-9,
    dispersion: bool = True,
    method: str = "hilbert",
    center_freq: float | None = None,
    window_halfwidth: float | None = None,
) -> EchoSimulation:
    """Send a Gaussian pulse at the comb centre and analyse the reflected output."""
    if center_freq is None:
        if comb is None:
            raise InvalidArgumentError("center_freq is required without a comb")
        center_freq = comb.center
    if delta is None:
        if comb is None:
            raise InvalidArgumentError("delta is required without a comb")
        delta = comb.delta
    pulse = gaussian_input(center_freq, fwhm_duration, time_span, dt)
    grid = response_grid_for(pulse)
    response = cavity_response(cavity, profile, grid, comb, dispersion, method, window_halfwidth)
    prop = propagate_full(pulse, response)
    echoes = extract_echoes(prop.output, pulse, delta)
    causal = causality_metric(prop.output, pulse, fwhm_duration)
    return EchoSimulation(pulse, prop.output, response, echoes, causal, prop.wrap_fraction)


def pulse_grid(center: float, span: float, count: int) -> FrequencyGrid:
    return make_grid(center, span, count)
