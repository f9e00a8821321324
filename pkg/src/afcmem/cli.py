"""Command-line entry point: ``afcmem <command> [options]``.

Exit codes: 0 success, 1 input or validation error, 2 fit did not converge.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .cavity import cavity_response, find_impedance_match, free_spectral_range
from .config import ConfigError, RunConfig, load_config
from .dispersion import ExtinctionSpectrum, alpha_to_k, dispersive_index, kk_real_index
from .errors import AFCError, InvalidArgumentError, NoMinimumError
from .fitting import (
    cavity_from_params,
    comb_from_result,
    fit_cavity,
    fit_comb,
    model_power,
    synthesize_trace,
)
from .io import ParseError, read_csv, read_json, read_trace, write_csv, write_json, write_pulse, write_trace
from .spectra import FrequencyGrid, InhomogeneousProfile, embed_comb, make_grid
from .timedomain import simulate_echo

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2
ECHO_FLOOR = 1e-4
CAUSALITY_FLAG = 1e-4


def _metadata(cfg: RunConfig, command: str, dispersion: bool, method: str) -> dict:
    return {
        "tool": {"name": "afcmem", "version": __version__},
        "command": command,
        "config_sha256": cfg.sha256,
        "seed": cfg.seed,
        "reference": cfg.reference,
        "dispersion": dispersion,
        "method": method,
    }


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg


def _settings(args, cfg: RunConfig):
    dispersion = cfg.dispersion if args.dispersion is None else args.dispersion == "on"
    method = cfg.method if args.method is None else args.method
    seed = cfg.seed if args.seed is None else args.seed
    out = Path(args.out if args.out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return dispersion, method, seed, out


def _dense_grid(freqs, factor=4) -> FrequencyGrid:
    lo, hi = float(freqs[0]), float(freqs[-1])
    count = factor * (len(freqs) - 1) + 1
    return FrequencyGrid(lo, (hi - lo) / (count - 1), count)


def _line_profile(cfg: RunConfig, peak_alpha=None) -> InhomogeneousProfile:
    p = cfg.profile
    return InhomogeneousProfile(p.nu0, p.gamma_in, p.peak_alpha if peak_alpha is None else peak_alpha)


# -- commands -------------------------------------------------------------------


def cmd_fit_cavity(args) -> int:
    cfg = _config(args)
    dispersion, method, seed, out = _settings(args, cfg)
    trace = read_trace(args.trace)
    result = fit_cavity(
        trace,
        cfg.cavity,
        cfg.profile.peak_alpha,
        profile_center=cfg.profile.nu0,
        profile_width=cfg.profile.gamma_in,
        fixed=cfg.fixed,
        dispersion=dispersion,
        method=method,
        max_iter=cfg.max_iter,
    )
    payload = _metadata(cfg, "fit-cavity", dispersion, method)
    payload["profile"] = {"nu0_hz": cfg.profile.nu0, "gamma_in_hz": cfg.profile.gamma_in}
    payload["fit"] = result.to_dict()
    payload["peak_alpha_per_m"] = result.params["peak_alpha"]
    payload["peak_alpha_per_cm"] = result.params["peak_alpha"] / 100.0
    write_json(out / "fit_cavity.json", payload)
    dense = _dense_grid(trace.frequencies)
    profile = _line_profile(cfg, result.params["peak_alpha"])
    curve = model_power(cavity_from_params(result.params), profile, dense.frequencies, None, dispersion, method)
    write_csv(
        out / "fit_cavity_model.csv",
        {"frequency_hz": dense.frequencies, "power": curve},
        [f"afcmem {__version__} fit-cavity model curve", f"dispersion={'on' if dispersion else 'off'}"],
    )
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _load_stage1(path):
    data = read_json(path)
    try:
        params = data["fit"]["params"]
        prof = data["profile"]
        cavity = cavity_from_params(params)
        profile = InhomogeneousProfile(float(prof["nu0_hz"]), float(prof["gamma_in_hz"]), float(params["peak_alpha"]))
    except (KeyError, TypeError) as exc:
        raise ParseError(path, 0, f"not a fit-cavity result (missing {exc})") from None
    return cavity, profile


def cmd_fit_comb(args) -> int:
    cfg = _config(args)
    dispersion, method, seed, out = _settings(args, cfg)
    cavity, profile = _load_stage1(args.cavity)
    trace = read_trace(args.trace)
    if cfg.comb is None:
        raise ConfigError("comb.center: required for fit-comb")
    result = fit_comb(
        trace, cavity, profile, cfg.comb, dispersion=dispersion, method=method, window_halfwidth=cfg.window_halfwidth,
        max_iter=cfg.max_iter,
    )
    payload = _metadata(cfg, "fit-comb", dispersion, method)
    payload["cavity_source"] = str(args.cavity)
    payload["fit"] = result.to_dict()
    payload["comb_center_detuning_hz"] = cfg.comb.center - profile.nu0
    write_json(out / "fit_comb.json", payload)
    dense = _dense_grid(trace.frequencies)
    comb = comb_from_result(result, cfg.comb)
    curve = model_power(cavity, profile, dense.frequencies, comb, dispersion, method, cfg.window_halfwidth)
    write_csv(
        out / "fit_comb_model.csv",
        {"frequency_hz": dense.frequencies, "power": curve},
        [f"afcmem {__version__} fit-comb model curve", f"dispersion={'on' if dispersion else 'off'}"],
    )
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _echo_summary(cfg: RunConfig, dispersion: bool, method: str, comb, center=None):
    cavity = cfg.resolved_cavity(dispersion)
    pulse = cfg.pulse
    if pulse.echo_period is not None:
        delta = 1.0 / pulse.echo_period
    elif comb is not None:
        delta = comb.delta
    else:
        delta = 1.0 / 42e-9
    if center is None:
        if pulse.center is not None:
            center = pulse.center
        elif comb is not None:
            center = comb.center
        else:
            center = cfg.absolute(cfg.pin_match) if cfg.pin_match is not None else cfg.profile.nu0
    return simulate_echo(
        cavity,
        cfg.profile,
        comb,
        delta=delta,
        fwhm_duration=pulse.fwhm,
        time_span=pulse.time_span,
        dt=pulse.dt,
        dispersion=dispersion,
        method=method,
        center_freq=center,
        window_halfwidth=cfg.window_halfwidth,
    )


def cmd_simulate_echo(args) -> int:
    cfg = _config(args)
    dispersion, method, seed, out = _settings(args, cfg)
    sim = _echo_summary(cfg, dispersion, method, cfg.comb)
    write_pulse(out / "echo_input.csv", sim.input, [f"afcmem {__version__} input pulse"])
    write_pulse(out / "echo_output.csv", sim.output, [f"afcmem {__version__} reflected output"])
    payload = _metadata(cfg, "simulate-echo", dispersion, method)
    train = sim.echoes
    payload["echo_train"] = train.to_dict()
    payload["efficiency"] = sim.efficiency
    payload["storage_time_s"] = train.storage_time()
    payload["echoes_above_floor"] = [p.order for p in train.pulses[1:] if p.energy > ECHO_FLOOR]
    payload["causality_metric"] = {
        "pre_input_fraction": sim.causality.fraction,
        "zero_output": sim.causality.zero_output,
        "pre_input_echo": sim.causality.fraction > CAUSALITY_FLAG,
    }
    payload["wrap_fraction"] = sim.wrap_fraction
    write_json(out / "echo.json", payload)
    return EXIT_OK


def _sweep_point(job):
    cfg, detuning, method = job
    comb = cfg.comb.replace(center=cfg.profile.nu0 + detuning)
    on = _echo_summary(cfg, True, method, comb, comb.center).efficiency
    off = _echo_summary(cfg, False, method, comb, comb.center).efficiency
    return on, off


def cmd_efficiency_sweep(args) -> int:
    cfg = _config(args)
    dispersion, method, seed, out = _settings(args, cfg)
    if args.detunings is not None:
        try:
            values = [float(x) for x in args.detunings.split(",") if x.strip()]
        except ValueError:
            raise InvalidArgumentError(f"--detunings: cannot parse {args.detunings!r}") from None
        dets = values
    else:
        dets = list(cfg.detunings)
    if not dets:
        raise InvalidArgumentError("detuning list is empty")
    if cfg.comb is None:
        raise ConfigError("comb: required for efficiency-sweep (tooth shape)")
    rel = [cfg.absolute(d) - cfg.profile.nu0 for d in dets]
    jobs = [(cfg, d, method) for d in rel]
    workers = args.jobs if args.jobs is not None else cfg.jobs
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    on = np.array([r[0] for r in results])
    off = np.array([r[1] for r in results])
    write_csv(
        out / "efficiency_sweep.csv",
        {"detuning_hz": rel, "efficiency_dispersion_on": on, "efficiency_dispersion_off": off},
        [f"afcmem {__version__} efficiency sweep", "detuning relative to the line center"],
    )
    payload = _metadata(cfg, "efficiency-sweep", True, method)
    payload["dispersion"] = "both"
    payload["rows"] = [
        {"detuning_hz": d, "efficiency_dispersion_on": a, "efficiency_dispersion_off": b}
        for d, a, b in zip(rel, on.tolist(), off.tolist())
    ]
    payload["best_detuning_hz"] = rel[int(np.argmax(on))]
    write_json(out / "efficiency_sweep.json", payload)
    return EXIT_OK


def cmd_kk_transform(args) -> int:
    cfg = _config(args)
    dispersion, method, seed, out = _settings(args, cfg)
    cols = read_csv(args.alpha_csv, ("frequency_hz", "alpha_per_m"))
    nu = cols["frequency_hz"]
    if nu.size < 3:
        raise ParseError(args.alpha_csv, 0, "need at least 3 samples")
    h = (nu[-1] - nu[0]) / (nu.size - 1)
    if not np.allclose(np.diff(nu), h, rtol=1e-6, atol=0):
        raise ParseError(args.alpha_csv, 0, "frequencies must be uniformly spaced")
    if np.any(cols["alpha_per_m"] < 0):
        raise ParseError(args.alpha_csv, 0, "absorption must be non-negative")
    grid = FrequencyGrid(float(nu[0]), float(h), int(nu.size))
    n_host = args.n_host if args.n_host is not None else cfg.cavity.n_host
    if dispersion:
        k = ExtinctionSpectrum(grid, alpha_to_k(cols["alpha_per_m"], grid.frequencies))
        n = kk_real_index(k, n_host, method).values
    else:
        n = np.full(grid.count, float(n_host))
    write_csv(
        out / "index.csv",
        {"frequency_hz": grid.frequencies, "n": n},
        [f"afcmem {__version__} kk-transform", f"method={method}", f"n_host={n_host!r}"],
    )
    return EXIT_OK


def _reflectivity_grid(cfg: RunConfig) -> FrequencyGrid:
    if cfg.grid is not None:
        return cfg.grid
    if cfg.comb is not None:
        return make_grid(cfg.comb.center, 2.0 * cfg.comb.default_window() + 100e6, 4001)
    return make_grid(cfg.profile.nu0, 60e9, 6001)


def cmd_simulate_reflectivity(args) -> int:
    cfg = _config(args)
    dispersion, method, seed, out = _settings(args, cfg)
    cavity = cfg.resolved_cavity(dispersion)
    grid = _reflectivity_grid(cfg)
    nu = grid.frequencies
    if cfg.comb is None:
        alpha = cfg.profile.alpha(nu)
    else:
        alpha = embed_comb(cfg.profile, cfg.comb, cavity.L, grid, cfg.window_halfwidth).values / cavity.L
    n = dispersive_index(
        cfg.profile, cavity.L, grid, cavity.n_host, cfg.comb, cfg.window_halfwidth, None, method, dispersion
    ).values
    amp = cavity_response(cavity, cfg.profile, grid, cfg.comb, dispersion, method, cfg.window_halfwidth).values
    power = np.abs(amp) ** 2 / cavity.s
    write_csv(
        out / "reflectivity.csv",
        {
            "frequency_hz": nu,
            "detuning_hz": nu - cfg.profile.nu0,
            "alpha_per_m": alpha,
            "n": n,
            "power": power,
            "phase_rad": np.angle(amp),
        },
        [f"afcmem {__version__} simulate-reflectivity", f"dispersion={'on' if dispersion else 'off'}"],
    )
    payload = _metadata(cfg, "simulate-reflectivity", dispersion, method)
    payload["cavity"] = {"r1": cavity.r1, "r2": cavity.r2, "n_host": cavity.n_host, "L_m": cavity.L, "s": cavity.s}
    payload["free_spectral_range_hz"] = free_spectral_range(cavity)
    try:
        fsr = free_spectral_range(cavity)
        center = cfg.absolute(cfg.pin_match) if cfg.pin_match is not None else cfg.profile.nu0
        nu_m = find_impedance_match(cavity, cfg.profile, (center - 0.5 * fsr, center + 0.5 * fsr), dispersion)
        payload["impedance_match_detuning_hz"] = nu_m - cfg.profile.nu0
    except NoMinimumError as exc:
        payload["impedance_match_detuning_hz"] = None
        payload["impedance_match_note"] = str(exc)
    payload["min_power"] = float(power.min())
    write_json(out / "reflectivity.json", payload)
    return EXIT_OK


def cmd_synthesize_trace(args) -> int:
    cfg = _config(args)
    dispersion, method, seed, out = _settings(args, cfg)
    cavity = cfg.resolved_cavity(dispersion)
    grid = _reflectivity_grid(cfg)
    noise = cfg.noise_rel if args.noise is None else args.noise
    trace = synthesize_trace(cavity, cfg.profile, cfg.comb, grid, noise, seed, dispersion=dispersion, method=method)
    name = args.name or "trace.csv"
    write_trace(
        out / name,
        trace,
        [f"afcmem {__version__} synthetic trace", f"noise_rel={noise!r} seed={seed}", f"config_sha256={cfg.sha256}"],
    )
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="afcmem", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"afcmem {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--out", help="output directory (default: config 'out')")
        p.add_argument("--dispersion", choices=("on", "off"), help="include the atomic dispersion")
        p.add_argument("--method", choices=("pv", "hilbert"), help="Kramers-Kronig evaluation")
        p.add_argument("--seed", type=int, help="random seed")
        return p

    p = common(sub.add_parser("fit-cavity", help="stage 1: fit cavity parameters to a comb-free trace"))
    p.add_argument("trace", help="trace CSV (frequency_hz,power)")
    p.set_defaults(func=cmd_fit_cavity)

    p = common(sub.add_parser("fit-comb", help="stage 2: fit comb parameters with the cavity frozen"))
    p.add_argument("trace", help="trace CSV (frequency_hz,power)")
    p.add_argument("--cavity", required=True, help="fit_cavity.json from stage 1")
    p.set_defaults(func=cmd_fit_comb)

    p = common(sub.add_parser("simulate-echo", help="propagate a pulse and report the echo train"))
    p.set_defaults(func=cmd_simulate_echo)

    p = common(sub.add_parser("efficiency-sweep", help="first-echo efficiency against comb detuning"))
    p.add_argument("--detunings", help="comma-separated comb centers in Hz (per 'reference')")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.set_defaults(func=cmd_efficiency_sweep)

    p = common(sub.add_parser("kk-transform", help="refractive index from an absorption spectrum"))
    p.add_argument("alpha_csv", help="CSV with columns frequency_hz,alpha_per_m on a uniform grid")
    p.add_argument("--n-host", type=float, help="background index (default: config cavity.n_host)")
    p.set_defaults(func=cmd_kk_transform)

    p = common(sub.add_parser("simulate-reflectivity", help="absorption, index and reflectivity spectra"))
    p.set_defaults(func=cmd_simulate_reflectivity)

    p = common(sub.add_parser("synthesize-trace", help="noisy synthetic reflectivity trace"))
    p.add_argument("--noise", type=float, help="relative Gaussian noise (default: config synth.noise_rel)")
    p.add_argument("--name", help="output file name (default trace.csv)")
    p.set_defaults(func=cmd_synthesize_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that code is reserved for non-convergence
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except (AFCError, ValueError, OSError) as exc:
        print(f"afcmem {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # never surface a traceback for bad input
        print(f"afcmem {args.command}: unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
