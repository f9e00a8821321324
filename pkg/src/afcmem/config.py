"""Strict TOML run configuration.

Example::

    reference = "atomic-center"   # or "absolute"
    seed = 0
    dispersion = true
    method = "hilbert"
    out = "results"

    [profile]
    peak_alpha = 170.0

    [cavity]
    r1 = 0.6927
    r2 = 0.9999
    pin_match = -3.19e9

    [comb]
    center = -2.772e9
    delta = 23.816e6

Frequencies named ``center``, ``pin_match``, ``detunings`` and the grid
center are detunings from ``profile.nu0`` when ``reference`` is
``"atomic-center"`` and absolute frequencies when it is ``"absolute"``.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .cavity import CavityParams, pin_length, reference_cavity
from .constants import GAMMA_IN_TMYAG, NU0_TMYAG, TMYAG_CAVITY
from .dispersion import normalize_method
from .errors import InvalidArgumentError
from .spectra import CombParams, FrequencyGrid, InhomogeneousProfile, make_grid

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(InvalidArgumentError):
    """Invalid configuration; the message starts with the offending key path."""


TOP_KEYS = {"reference", "seed", "dispersion", "method", "out"}
SECTIONS = {
    "constants": set(),
    "profile": {"nu0", "gamma_in", "peak_alpha"},
    "cavity": {"r1", "r2", "n_host", "L", "s", "pin_match"},
    "comb": {"center", "d_c", "delta", "gamma_tilde", "d0", "n_teeth", "window_halfwidth"},
    "grid": {"center", "span", "count"},
    "pulse": {"center", "fwhm", "time_span", "dt", "echo_period"},
    "fit": {"fixed", "max_iter"},
    "sweep": {"detunings", "jobs"},
    "synth": {"noise_rel"},
}


@dataclass(frozen=True)
class PulseSettings:
    fwhm: float = 12e-9
    time_span: float = 512e-9
    dt: float = 0.5e-9
    echo_period: float | None = None
    center: float | None = None


@dataclass(frozen=True)
class RunConfig:
    reference: str = "atomic-center"
    seed: int = 0
    dispersion: bool = True
    method: str = "hilbert"
    out: str = "results"
    profile: InhomogeneousProfile = field(
        default_factory=lambda: InhomogeneousProfile(NU0_TMYAG, GAMMA_IN_TMYAG, TMYAG_CAVITY["peak_alpha"])
    )
    cavity: CavityParams = field(default_factory=reference_cavity)
    pin_match: float | None = None
    comb: CombParams | None = None
    window_halfwidth: float | None = None
    grid: FrequencyGrid | None = None
    pulse: PulseSettings = field(default_factory=PulseSettings)
    fixed: tuple[str, ...] = ("n_host",)
    max_iter: int = 500
    detunings: tuple[float, ...] = ()
    jobs: int = 1
    noise_rel: float = 0.0
    sha256: str = ""

    def absolute(self, freq: float) -> float:
        return freq + self.profile.nu0 if self.reference == "atomic-center" else freq

    def relative(self, freq: float) -> float:
        return freq - self.profile.nu0 if self.reference == "atomic-center" else freq

    def resolved_cavity(self, dispersion: bool | None = None) -> CavityParams:
        """Cavity with ``L`` pinned to ``pin_match`` when that key is set."""
        if self.pin_match is None:
            return self.cavity
        disp = self.dispersion if dispersion is None else dispersion
        return pin_length(self.cavity, self.profile, self.absolute(self.pin_match), disp)


def _number(value, path, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if integer and not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value if integer else float(value)


def _build(path, factory, **kwargs):
    try:
        return factory(**kwargs)
    except (InvalidArgumentError, ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_config(data: dict, sha256: str = "") -> RunConfig:
    """Validate a parsed TOML document and build a :class:`RunConfig`."""
    for key, value in data.items():
        if key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected a table")
            extra = set(value) - SECTIONS[key]
            if extra:
                allowed = ", ".join(sorted(SECTIONS[key])) or "none"
                raise ConfigError(f"{key}.{sorted(extra)[0]}: unknown key (allowed: {allowed})")
        elif key not in TOP_KEYS:
            raise ConfigError(f"{key}: unknown key")

    kw: dict = {"sha256": sha256}
    reference = data.get("reference", "atomic-center")
    if reference not in ("atomic-center", "absolute"):
        raise ConfigError(f"reference: must be 'atomic-center' or 'absolute', got {reference!r}")
    kw["reference"] = reference
    if "seed" in data:
        kw["seed"] = _number(data["seed"], "seed", integer=True)
    if "dispersion" in data:
        if not isinstance(data["dispersion"], bool):
            raise ConfigError(f"dispersion: expected true or false, got {data['dispersion']!r}")
        kw["dispersion"] = data["dispersion"]
    if "method" in data:
        try:
            kw["method"] = normalize_method(data["method"])
        except (InvalidArgumentError, ValueError, TypeError) as exc:
            raise ConfigError(f"method: {exc}") from None
    if "out" in data:
        if not isinstance(data["out"], str):
            raise ConfigError("out: expected a string")
        kw["out"] = data["out"]

    sec = data.get("profile", {})
    pvals = {k: _number(v, f"profile.{k}") for k, v in sec.items()}
    profile = _build(
        "profile",
        InhomogeneousProfile,
        nu0=pvals.get("nu0", NU0_TMYAG),
        gamma_in=pvals.get("gamma_in", GAMMA_IN_TMYAG),
        peak_alpha=pvals.get("peak_alpha", TMYAG_CAVITY["peak_alpha"]),
    )
    kw["profile"] = profile

    def absolute(f):
        return f + profile.nu0 if reference == "atomic-center" else f

    sec = dict(data.get("cavity", {}))
    if "pin_match" in sec:
        kw["pin_match"] = _number(sec.pop("pin_match"), "cavity.pin_match")
    base = reference_cavity()
    cvals = {k: _number(v, f"cavity.{k}") for k, v in sec.items()}
    kw["cavity"] = _build("cavity", base.replace, **cvals)

    if "comb" in data:
        sec = dict(data["comb"])
        if "center" not in sec:
            raise ConfigError("comb.center: required")
        if "window_halfwidth" in sec:
            kw["window_halfwidth"] = _number(sec.pop("window_halfwidth"), "comb.window_halfwidth")
        vals = {}
        for k, v in sec.items():
            vals[k] = _number(v, f"comb.{k}", integer=(k == "n_teeth"))
        delta = vals.get("delta", 1.0 / 42e-9)
        kw["comb"] = _build(
            "comb",
            CombParams,
            d_c=vals.get("d_c", 1.0),
            delta=delta,
            gamma_tilde=vals.get("gamma_tilde", delta / 6.0),
            d0=vals.get("d0", 0.1),
            center=absolute(vals["center"]),
            n_teeth=vals.get("n_teeth", 9),
        )

    if "grid" in data:
        sec = data["grid"]
        for k in ("span", "count"):
            if k not in sec:
                raise ConfigError(f"grid.{k}: required")
        center = absolute(_number(sec.get("center", 0.0 if reference == "atomic-center" else profile.nu0), "grid.center"))
        kw["grid"] = _build(
            "grid",
            make_grid,
            center=center,
            span=_number(sec["span"], "grid.span"),
            count=_number(sec["count"], "grid.count", integer=True),
        )

    sec = data.get("pulse", {})
    vals = {k: _number(v, f"pulse.{k}") for k, v in sec.items()}
    for k in ("fwhm", "time_span", "dt", "echo_period"):
        if k in vals and not vals[k] > 0:
            raise ConfigError(f"pulse.{k}: must be > 0")
    if "center" in vals:
        vals["center"] = absolute(vals["center"])
    kw["pulse"] = PulseSettings(**vals)

    sec = data.get("fit", {})
    if "fixed" in sec:
        fixed = sec["fixed"]
        if not isinstance(fixed, list) or not all(isinstance(x, str) for x in fixed):
            raise ConfigError("fit.fixed: expected a list of parameter names")
        from .fitting import CAVITY_PARAMS

        bad = [x for x in fixed if x not in CAVITY_PARAMS]
        if bad:
            raise ConfigError(f"fit.fixed: unknown parameter {bad[0]!r}")
        kw["fixed"] = tuple(fixed)
    if "max_iter" in sec:
        kw["max_iter"] = _number(sec["max_iter"], "fit.max_iter", integer=True)
        if kw["max_iter"] < 1:
            raise ConfigError("fit.max_iter: must be >= 1")

    sec = data.get("sweep", {})
    if "detunings" in sec:
        dets = sec["detunings"]
        if not isinstance(dets, list):
            raise ConfigError("sweep.detunings: expected a list")
        kw["detunings"] = tuple(_number(v, f"sweep.detunings[{i}]") for i, v in enumerate(dets))
    if "jobs" in sec:
        kw["jobs"] = _number(sec["jobs"], "sweep.jobs", integer=True)
        if kw["jobs"] < 1:
            raise ConfigError("sweep.jobs: must be >= 1")

    sec = data.get("synth", {})
    if "noise_rel" in sec:
        kw["noise_rel"] = _number(sec["noise_rel"], "synth.noise_rel")
        if kw["noise_rel"] < 0:
            raise ConfigError("synth.noise_rel: must be >= 0")
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror or exc})") from None
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, hashlib.sha256(raw).hexdigest())
