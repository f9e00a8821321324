"""Two-stage reflectivity fitting: cavity parameters, then comb parameters.

Stage 1 fits the comb-free cavity (peak absorption, mirror reflectivities,
host index, length, detector scale). Stage 2 freezes those and fits the
comb (tooth depth, spacing, width, background) to a trace taken with a
comb carved into the line.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import find_peaks

from .cavity import CavityParams, find_impedance_match, free_spectral_range, reflection_coefficient
from .constants import C, NU0_TMYAG, GAMMA_IN_TMYAG, TMYAG_CAVITY
from .dispersion import alpha_to_k, dispersive_index, kk_delta_n, lorentzian_index, normalize_method
from .errors import InvalidArgumentError, NoMinimumError
from .lm import FitResult, least_squares
from .spectra import (
    CombParams,
    FrequencyGrid,
    InhomogeneousProfile,
    check_comb_resolution,
    comb_depth_at,
    embedding_weight,
)

CAVITY_PARAMS = ("peak_alpha", "r1", "r2", "n_host", "L", "s")
COMB_PARAMS = ("d_c", "delta", "gamma_tilde", "d0")
MIN_POINTS_PER_FEATURE = 50

#: Stage-1 priors: coating specs R1 ~ 40 %, R2 ~ 99 %, YAG index, ideal splitter.
CAVITY_PRIOR = {
    "peak_alpha": 200.0,
    "r1": float(np.sqrt(0.40)),
    "r2": float(np.sqrt(0.99)),
    "n_host": 1.8,
    "L": TMYAG_CAVITY["L"],
    "s": 2.0,
}


@dataclass(frozen=True)
class ReflectivityTrace:
    """Normalised reflected power against absolute frequency."""

    frequencies: np.ndarray = field(repr=False)
    power: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        p = np.asarray(self.power, dtype=float)
        if f.ndim != 1 or f.shape != p.shape:
            raise InvalidArgumentError("frequencies and power must be 1-D arrays of equal length")
        if f.size < 2:
            raise InvalidArgumentError("a trace needs at least 2 points")
        if np.any(np.diff(f) <= 0):
            raise InvalidArgumentError("trace frequencies must be strictly increasing")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise InvalidArgumentError("trace powers must be finite and non-negative")
        f.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "power", p)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.frequencies.tolist(), self.power.tolist()))

    @property
    def span(self) -> float:
        return float(self.frequencies[-1] - self.frequencies[0])

    def uniform_spacing(self) -> float | None:
        d = np.diff(self.frequencies)
        h = (self.frequencies[-1] - self.frequencies[0]) / (self.frequencies.size - 1)
        return float(h) if np.allclose(d, h, rtol=1e-9, atol=0) else None


# -- stage 1 model -------------------------------------------------------------


@functools.lru_cache(maxsize=16)
def _unit_line_index(nu0: float, gamma_in: float, lo: float, hi: float, method: str):
    """KK index change of a line with peak absorption 1/m, as a spline in nu.

    The transform is linear in the peak absorption, so one evaluation per
    line shape and method serves the whole fit.
    """
    h = gamma_in / 32.0
    half = max(40.0 * gamma_in, nu0 - lo + 4 * h, hi - nu0 + 4 * h)
    count = 2 * int(np.ceil(half / h)) + 1
    grid = FrequencyGrid(nu0 - 0.5 * (count - 1) * h, h, count)
    nu = grid.frequencies
    alpha = 0.25 * gamma_in**2 / ((nu - nu0) ** 2 + 0.25 * gamma_in**2)
    dn = kk_delta_n(alpha_to_k(alpha, nu), grid, method)
    return CubicSpline(nu, dn)


class _LineModel:
    """Reflectivity of the comb-free cavity on fixed trace frequencies."""

    def __init__(self, freqs, profile: InhomogeneousProfile, dispersion: bool, method: str):
        self.nu = np.asarray(freqs, dtype=float)
        self.nu0 = profile.nu0
        hw2 = 0.25 * profile.gamma_in**2
        self.shape = hw2 / ((self.nu - profile.nu0) ** 2 + hw2)
        if dispersion:
            spline = _unit_line_index(
                float(profile.nu0), float(profile.gamma_in), float(self.nu[0]), float(self.nu[-1]), method
            )
            self.unit_dn = spline(self.nu)
        else:
            self.unit_dn = np.zeros_like(self.nu)

    def power(self, pac, r1, r2, n_host, L, s, phi0=None):
        depth = pac * L * self.shape
        if phi0 is None:
            phase = 4.0 * np.pi * self.nu * L * (n_host + pac * self.unit_dn) / C
        else:
            phase = phi0 + 4.0 * np.pi * L * (n_host * (self.nu - self.nu0) + self.nu * pac * self.unit_dn) / C
        return np.abs(reflection_coefficient(r1, r2, depth, phase)) ** 2 / s


def _cavity_values(cavity: CavityParams, peak_alpha: float) -> dict:
    return {
        "peak_alpha": peak_alpha,
        "r1": cavity.r1,
        "r2": cavity.r2,
        "n_host": cavity.n_host,
        "L": cavity.L,
        "s": cavity.s,
    }


def default_cavity_bounds(init: dict) -> dict:
    return {
        "peak_alpha": (0.0, 2000.0),
        "r1": (0.05, 0.99),
        "r2": (0.99, 1.0),
        "n_host": (1.0, 4.0),
        "L": (0.8 * init["L"], 1.2 * init["L"]),
        "s": (0.2, 10.0),
    }


def _clip_into(values: dict, bounds: dict) -> dict:
    out = dict(values)
    for k, (lo, hi) in bounds.items():
        if k in out:
            out[k] = float(np.clip(out[k], lo, hi))
    return out


def fit_cavity(
    trace: ReflectivityTrace,
    init: CavityParams | None = None,
    peak_alpha: float | None = None,
    bounds: dict | None = None,
    *,
    profile_center: float = NU0_TMYAG,
    profile_width: float = GAMMA_IN_TMYAG,
    fixed: tuple[str, ...] = ("n_host",),
    dispersion: bool = True,
    method: str = "hilbert",
    scan_points: int = 24,
    max_iter: int = 500,
) -> FitResult:
    """Fit the cavity parameters to a comb-free reflectivity trace.

    The host index and length enter the model only through ``n * L`` and,
    with the absorption, ``peak_alpha * L``; the three cannot be fitted
    together, so ``n_host`` is held at its initial value by default.
    Freeing it is allowed and shows up as ``rank_deficient`` in the
    diagnostics.

    The round-trip phase is ~1e5 rad, so the reflectivity is periodic in
    ``L`` with period ``lambda / 2n``. The fit first treats the phase at the
    line center as an independent parameter (found by a grid scan, then
    refined together with everything else), snaps ``L`` to the fringe that
    reproduces that phase, and polishes the physical model from there.
    """
    method = normalize_method(method)
    values = dict(CAVITY_PRIOR)
    if init is not None:
        values.update(_cavity_values(init, values["peak_alpha"]))
    if peak_alpha is not None:
        values["peak_alpha"] = float(peak_alpha)
    unknown = set(fixed) - set(CAVITY_PARAMS)
    if unknown:
        raise InvalidArgumentError(f"unknown fixed parameters {sorted(unknown)}")
    bnds = default_cavity_bounds(values)
    if bounds:
        bnds.update(bounds)
    values = _clip_into(values, bnds)

    fsr = C / (2.0 * values["n_host"] * values["L"])
    if trace.span < 2.0 * fsr:
        raise InvalidArgumentError(
            f"trace spans {trace.span / 1e9:.3g} GHz; fitting the cavity needs >= 2 FSR ({2 * fsr / 1e9:.3g} GHz)"
        )
    points_per_fsr = trace.frequencies.size * fsr / trace.span
    if points_per_fsr < MIN_POINTS_PER_FEATURE:
        raise InvalidArgumentError(
            f"{points_per_fsr:.1f} points per free spectral range; need >= {MIN_POINTS_PER_FEATURE}"
        )

    profile = InhomogeneousProfile(profile_center, profile_width, 1.0)
    model = _LineModel(trace.frequencies, profile, dispersion, method)
    data = trace.power
    free = [k for k in CAVITY_PARAMS if k not in fixed]

    def full(p, names):
        v = dict(values)
        v.update(zip(names, p))
        return v

    # relaxed model: phase at the line center decoupled from L
    relaxed = free + ["phi0"]
    k_phase = 4.0 * np.pi * profile_center / C

    def relaxed_residual(p):
        v = full(p[:-1], free)
        return model.power(v["peak_alpha"], v["r1"], v["r2"], v["n_host"], v["L"], v["s"], phi0=p[-1]) - data

    start = dict(values)
    phis = np.linspace(0.0, 2.0 * np.pi, scan_points, endpoint=False)
    if "L" in free:
        lo_l, hi_l = bnds["L"]
        lengths = values["L"] * np.arange(0.8, 1.2001, 0.005)
        lengths = lengths[(lengths >= lo_l) & (lengths <= hi_l)]
        if lengths.size == 0:
            lengths = np.array([values["L"]])
    else:
        lengths = np.array([values["L"]])
    best = (np.inf, values["L"], 0.0)
    for L in lengths:
        for phi in phis:
            r = model.power(values["peak_alpha"], values["r1"], values["r2"], values["n_host"], L, values["s"], phi) - data
            c = float(r @ r)
            if c < best[0]:
                best = (c, L, phi)
    start["L"] = best[1]
    p0 = [start[k] for k in free] + [best[2]]
    rb = {k: bnds[k] for k in free}
    stage_a = least_squares(
        relaxed_residual, dict(zip(relaxed, p0)), rb, x_scale=_scales(relaxed, p0), max_iter=max_iter
    )

    # snap L onto the fringe consistent with the fitted phase
    v = full([stage_a.params[k] for k in free], free)
    phi0 = stage_a.params["phi0"]
    if "L" in free:
        slope = k_phase * v["n_host"]
        mismatch = np.angle(np.exp(1j * (phi0 - slope * v["L"])))
        v["L"] = float(np.clip(v["L"] + mismatch / slope, *bnds["L"]))

    def residual(p):
        w = full(p, free)
        return model.power(w["peak_alpha"], w["r1"], w["r2"], w["n_host"], w["L"], w["s"]) - data

    p1 = [v[k] for k in free]
    result = least_squares(residual, dict(zip(free, p1)), rb, x_scale=_scales(free, p1), max_iter=max_iter)

    params = full([result.params[k] for k in free], free)
    unc = {k: result.param_uncertainties.get(k, 0.0) for k in CAVITY_PARAMS}
    result.params = {k: params[k] for k in CAVITY_PARAMS}
    result.param_uncertainties = unc
    result.diagnostics.update(
        {
            "fixed": list(fixed),
            "dispersion": dispersion,
            "method": method,
            "relaxed_stage_residual_norm": stage_a.residual_norm,
            "peak_alpha_per_cm": params["peak_alpha"] / 100.0,
        }
    )
    if dispersion and method != "pv":
        pv_model = _LineModel(trace.frequencies, profile, True, "pv")
        w = params
        diff = pv_model.power(w["peak_alpha"], w["r1"], w["r2"], w["n_host"], w["L"], w["s"]) - (residual(
            [w[k] for k in free]) + data)
        result.diagnostics["pv_discrepancy_max"] = float(np.max(np.abs(diff)))
    try:
        cav = cavity_from_params(params)
        prof = InhomogeneousProfile(profile_center, profile_width, params["peak_alpha"])
        lo, hi = trace.frequencies[0], trace.frequencies[-1]
        search = (max(lo, profile_center - 0.5 * fsr), min(hi, profile_center + 0.5 * fsr))
        nu_m = find_impedance_match(cav, prof, search, dispersion)
        i = np.argmin(np.abs(model.nu - nu_m))
        result.diagnostics["impedance_match_offset_hz"] = nu_m - profile_center
        result.diagnostics["absorption_at_match"] = 1.0 - float(
            model.power(params["peak_alpha"], cav.r1, cav.r2, cav.n_host, cav.L, 1.0)[i]
        )
    except (NoMinimumError, InvalidArgumentError):
        pass
    return result


def _scales(names, values):
    return [abs(v) if v != 0 else (1.0 if k != "phi0" else np.pi) for k, v in zip(names, values)]


def cavity_from_params(params: dict) -> CavityParams:
    return CavityParams(params["r1"], params["r2"], params["n_host"], params["L"], params["s"])


# -- stage 2 model -------------------------------------------------------------


class _CombModel:
    """Reflectivity with an embedded comb, evaluated on a uniform grid that
    contains the trace samples and the largest comb window allowed."""

    def __init__(
        self,
        freqs,
        cavity: CavityParams,
        profile: InhomogeneousProfile,
        center: float,
        n_teeth: int,
        delta_max: float,
        gamma_min: float,
        dispersion: bool,
        method: str,
        window_halfwidth: float | None = None,
    ):
        self.freqs = np.asarray(freqs, dtype=float)
        self.cavity = cavity
        self.profile = profile
        self.center = center
        self.n_teeth = n_teeth
        self.dispersion = dispersion
        self.method = method
        self.window_halfwidth = window_halfwidth
        w_max = window_halfwidth if window_halfwidth is not None else 0.75 * n_teeth * delta_max
        margin = 2.0 * delta_max
        h_trace = ReflectivityTrace(self.freqs, np.zeros_like(self.freqs)).uniform_spacing()
        target = gamma_min / 4.0
        if h_trace is not None:
            sub = max(1, int(np.ceil(h_trace / target)))
            h = h_trace / sub
        else:
            sub = None
            h = min(float(np.median(np.diff(self.freqs))), target)
        lo = min(self.freqs[0], center - w_max - margin)
        hi = max(self.freqs[-1], center + w_max + margin)
        n_left = int(np.ceil((self.freqs[0] - lo) / h))
        start = self.freqs[0] - n_left * h
        count = int(np.ceil((hi - start) / h)) + 1
        self.grid = FrequencyGrid(start, h, count)
        self.index = None if sub is None else n_left + sub * np.arange(self.freqs.size)
        nu = self.grid.frequencies
        self.nu = nu
        self.lor_alpha = profile.alpha(nu)
        self.lor_depth = self.lor_alpha * cavity.L
        if dispersion:
            self.n_background = lorentzian_index(profile, self.grid, cavity.n_host).values
        else:
            self.n_background = np.full(nu.size, float(cavity.n_host))

    def comb(self, d_c, delta, gamma_tilde, d0) -> CombParams:
        return CombParams(d_c, delta, gamma_tilde, d0, self.center, self.n_teeth)

    def power(self, d_c, delta, gamma_tilde, d0):
        comb = self.comb(d_c, delta, gamma_tilde, d0)
        w = self.window_halfwidth if self.window_halfwidth is not None else comb.default_window()
        weight = embedding_weight(self.nu, comb.center, w, comb.delta)
        inside = weight > 0
        depth = self.lor_depth.copy()
        depth[inside] = weight[inside] * comb_depth_at(comb, self.nu[inside]) + (1 - weight[inside]) * self.lor_depth[inside]
        n = self.n_background
        if self.dispersion:
            resid = alpha_to_k(depth / self.cavity.L - self.lor_alpha, self.nu)
            n = n + kk_delta_n(resid, self.grid, self.method, check=False)
        phase = 4.0 * np.pi * n * self.nu * self.cavity.L / C
        refl = np.abs(reflection_coefficient(self.cavity.r1, self.cavity.r2, depth, phase)) ** 2 / self.cavity.s
        if self.index is not None:
            return refl[self.index]
        return np.interp(self.freqs, self.nu, refl)


def default_comb_bounds(init: CombParams) -> dict:
    return {
        "d_c": (0.0, 20.0),
        "delta": (0.8 * init.delta, 1.25 * init.delta),
        "gamma_tilde": (init.delta / 40.0, init.delta / 2.0),
        "d0": (0.0, 5.0),
    }


def initial_comb(center: float, storage_time: float = 42e-9, n_teeth: int = 9) -> CombParams:
    """Stage-2 starting point seeded from the target storage time."""
    delta = 1.0 / storage_time
    return CombParams(d_c=1.0, delta=delta, gamma_tilde=delta / 6.0, d0=0.1, center=center, n_teeth=n_teeth)


def fit_comb(
    trace: ReflectivityTrace,
    cavity: CavityParams,
    profile: InhomogeneousProfile,
    init: CombParams,
    bounds: dict | None = None,
    *,
    dispersion: bool = True,
    method: str = "hilbert",
    window_halfwidth: float | None = None,
    max_iter: int = 500,
) -> FitResult:
    """Fit ``d_c, delta, gamma_tilde, d0`` with cavity and line frozen.

    The comb center and tooth count are taken from ``init`` and not fitted.
    """
    method = normalize_method(method)
    bnds = default_comb_bounds(init)
    if bounds:
        bnds.update(bounds)
    covered = trace.span
    if covered < 0.75 * (init.n_teeth - 1) * init.delta:
        raise InvalidArgumentError(
            f"trace spans {covered / 1e6:.4g} MHz but the comb spans "
            f"{(init.n_teeth - 1) * init.delta / 1e6:.4g} MHz"
        )
    per_tooth = trace.frequencies.size * init.delta / trace.span
    if per_tooth < MIN_POINTS_PER_FEATURE:
        raise InvalidArgumentError(f"{per_tooth:.1f} points per tooth spacing; need >= {MIN_POINTS_PER_FEATURE}")
    values = _clip_into({k: getattr(init, k) for k in COMB_PARAMS}, bnds)
    model = _CombModel(
        trace.frequencies,
        cavity,
        profile,
        init.center,
        init.n_teeth,
        bnds["delta"][1],
        bnds["gamma_tilde"][0],
        dispersion,
        method,
        window_halfwidth,
    )
    check_comb_resolution(model.comb(values["d_c"], bnds["delta"][0], bnds["gamma_tilde"][0], values["d0"]), model.grid)
    data = trace.power

    def residual(p):
        return model.power(*p) - data

    p0 = [values[k] for k in COMB_PARAMS]
    result = least_squares(
        residual, dict(zip(COMB_PARAMS, p0)), bnds, x_scale=_scales(COMB_PARAMS, p0), max_iter=max_iter
    )
    result.diagnostics.update(
        {
            "dispersion": dispersion,
            "method": method,
            "center_hz": init.center,
            "n_teeth": init.n_teeth,
            "storage_time_s": 1.0 / result.params["delta"],
            "finesse": result.params["delta"] / (np.sqrt(8 * np.log(2)) * result.params["gamma_tilde"]),
        }
    )
    if dispersion and method != "pv":
        pv = _CombModel(
            trace.frequencies, cavity, profile, init.center, init.n_teeth, bnds["delta"][1],
            bnds["gamma_tilde"][0], True, "pv", window_halfwidth,
        )
        p = [result.params[k] for k in COMB_PARAMS]
        result.diagnostics["pv_discrepancy_max"] = float(np.max(np.abs(pv.power(*p) - model.power(*p))))
    return result


def comb_from_result(result: FitResult, like: CombParams) -> CombParams:
    return like.replace(**{k: result.params[k] for k in COMB_PARAMS})


# -- synthetic data --------------------------------------------------------------


def model_power(
    cavity: CavityParams,
    profile: InhomogeneousProfile,
    freqs,
    comb: CombParams | None = None,
    dispersion: bool = True,
    method: str = "hilbert",
    window_halfwidth: float | None = None,
):
    """Forward-model reflectivity ``|r|^2 / s`` at the given frequencies.

    Uses exactly the evaluation path of the corresponding fit stage.
    """
    method = normalize_method(method)
    freqs = np.asarray(freqs, dtype=float)
    if comb is None:
        unit = InhomogeneousProfile(profile.nu0, profile.gamma_in, 1.0)
        m = _LineModel(freqs, unit, dispersion, method)
        return m.power(profile.peak_alpha, cavity.r1, cavity.r2, cavity.n_host, cavity.L, cavity.s)
    bnds = default_comb_bounds(comb)
    m = _CombModel(
        freqs, cavity, profile, comb.center, comb.n_teeth, bnds["delta"][1], bnds["gamma_tilde"][0],
        dispersion, method, window_halfwidth,
    )
    check_comb_resolution(comb, m.grid)
    return m.power(comb.d_c, comb.delta, comb.gamma_tilde, comb.d0)


def synthesize_trace(
    cavity: CavityParams,
    profile: InhomogeneousProfile,
    comb: CombParams | None,
    grid: FrequencyGrid,
    noise_rel: float = 0.0,
    seed: int = 0,
    *,
    dispersion: bool = True,
    method: str = "hilbert",
) -> ReflectivityTrace:
    """Forward model on ``grid`` times ``1 + noise_rel * g``, ``g ~ N(0, 1)`` (seeded)."""
    if noise_rel < 0:
        raise InvalidArgumentError(f"noise_rel must be >= 0, got {noise_rel}")
    power = model_power(cavity, profile, grid.frequencies, comb, dispersion, method)
    if noise_rel > 0:
        rng = np.random.default_rng(seed)
        power = power * (1.0 + noise_rel * rng.standard_normal(power.size))
        power = np.clip(power, 0.0, None)
    meta = {"synthetic": True, "noise_rel": noise_rel, "seed": seed, "dispersion": dispersion}
    if comb is not None:
        meta["comb_center_hz"] = comb.center
    return ReflectivityTrace(grid.frequencies, power, meta)


# -- trace analysis --------------------------------------------------------------


def dip_asymmetry(trace: ReflectivityTrace, delta: float) -> np.ndarray:
    """First moment of each reflectivity dip about its minimum, in units of ``delta``.

    For every local minimum at least ``delta/2`` from the trace ends, the dip
    profile ``max(R) - R`` over ``+-delta/2`` is formed and its centroid
    offset from the minimum returned. Positive values mean the dip has its
    longer flank at higher frequency.
    """
    f = trace.frequencies
    R = trace.power
    h = float(np.median(np.diff(f)))
    dist = max(1, int(0.6 * delta / h))
    prom = 0.05 * (R.max() - R.min())
    minima, _ = find_peaks(-R, distance=dist, prominence=prom)
    out = []
    for i in minima:
        lo, hi = f[i] - 0.5 * delta, f[i] + 0.5 * delta
        if lo < f[0] or hi > f[-1]:
            continue
        sel = (f >= lo) & (f <= hi)
        dip = R[sel].max() - R[sel]
        if dip.sum() <= 0:
            continue
        out.append(float(np.sum((f[sel] - f[i]) * dip) / dip.sum() / delta))
    return np.array(out)


def comb_model_index(cavity, profile, comb, grid, dispersion=True, method="hilbert"):
    """Refractive index used by the comb model on an arbitrary grid."""
    return dispersive_index(profile, cavity.L, grid, cavity.n_host, comb, method=method, dispersion=dispersion)


__all__ = [
    "FitResult",
    "ReflectivityTrace",
    "cavity_from_params",
    "comb_from_result",
    "dip_asymmetry",
    "fit_cavity",
    "fit_comb",
    "initial_comb",
    "least_squares",
    "model_power",
    "synthesize_trace",
]
