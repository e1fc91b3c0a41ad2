"""End-to-end orchestration: beam, pattern, drift, deposit, image, analysis.

Each stage is a plain function of the configuration (and of upstream
results), so the CLI can re-run any of them in isolation.  Random stages
draw from the counter-based streams keyed by the run seed, which makes the
outputs a pure function of ``(config, seed)``.
"""

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .analysis import (
    bin_image,
    column_profile,
    detect_molecules,
    estimate_period_orientation,
    fit_fringe,
    significance,
    smooth_profile,
)
from .beamline import VelocityDistribution, build_velocity_distribution
from .classical import classical_pattern
from .deposition import (
    exposure_averaged_pattern,
    render_stm,
    sample_deposit,
)
from .errors import AnalysisError, ConfigError, MolithoError
from .quantum import (
    FringeSpectrum,
    sample_pattern,
    spectrum_at_speed,
    velocity_average,
    visibility_minmax,
    visibility_sinusoidal,
)

SCHEMA_VERSION = 1


class StageError(MolithoError):
    """A pipeline stage failed; ``stage`` names it and ``cause`` is the original error."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except MolithoError as exc:
        raise StageError(name, exc) from exc


@dataclass
class QuantumResult:
    dist: VelocityDistribution
    mono: FringeSpectrum
    averaged: FringeSpectrum
    drifted: FringeSpectrum


@dataclass
class ImageResult:
    molecules: object
    heightmap: object
    binary: object
    profile: object
    smoothed: object
    fit: object
    period_est: float
    theta: float


def beam(cfg):
    sel = cfg.selector
    return build_velocity_distribution(cfg.get("source", "temperature"), cfg.molecule, sel,
                                       cfg.get("selector", "grid_points"),
                                       use_selector=cfg.get("selector", "enabled"))


def quantum(cfg, threads=1, dist=None):
    dist = beam(cfg) if dist is None else dist
    setup = cfg.interferometer
    mono = spectrum_at_speed(setup, cfg.selector.center_velocity)
    avg = velocity_average(setup, dist, threads=threads)
    drifted = exposure_averaged_pattern(avg, cfg.drift, cfg.get("deposition", "exposure"))
    return QuantumResult(dist, mono, avg, drifted)


def classical(cfg, dist, threads=1, seed=None):
    run = cfg.values["run"]
    return classical_pattern(cfg.geometry, cfg.grating(1), cfg.grating(2), cfg.molecule, dist,
                             run["classical_rays"], cfg.seed if seed is None else seed,
                             delta_cut=cfg.get("grating2", "delta_cut"),
                             window=run["classical_window"], mu_max=run["mu_max"],
                             threads=threads)


def classical_spectrum(res, period):
    """The classical smoothed density as a :class:`FringeSpectrum`."""
    c = np.asarray(res.coeffs)
    coeffs = np.concatenate((np.conj(c[:0:-1]), c))
    return FringeSpectrum(period, coeffs)


def drifted_visibility(fs, cfg, n_points=512):
    """Min/max visibility after exposure averaging under the configured drift."""
    fd = exposure_averaged_pattern(fs, cfg.drift, cfg.get("deposition", "exposure"))
    x = np.arange(n_points) * (fs.period / n_points)
    return visibility_minmax(fd.evaluate(x))


def image(cfg, drifted, seed, stm_drift_rate=None):
    """Deposit, render, quantise and analyse one synthetic sample."""
    im = cfg.values["imaging"]
    rate = im["stm_drift_rate"] if stm_drift_rate is None else stm_drift_rate
    ml = _stage("deposit", sample_deposit, drifted, cfg.deposition(seed))
    hm = _stage("render", render_stm, ml, im["px_size"], cfg.scan, im["noise_rms"], rate, seed)
    # analysis always runs on what the PGM file holds
    counts, scale, offset = io.quantize_heightmap(hm)
    hm = io.dequantize(counts, scale, offset, hm.px_size)
    return analyze(cfg, hm, ml)


def analyze(cfg, hm, ml=None):
    an = cfg.values["analysis"]

    def run():
        bm = detect_molecules(hm, an["dz_min"], an["dz_max"], an["offset"], an["neighbor_mode"])
        prof = column_profile(bm)
        sm = smooth_profile(prof, an["smooth_window"], an["smooth_stride"])
        fit = fit_fringe(sm, an["d_init"])
        try:
            d_est, theta = estimate_period_orientation(bm, an["bin"])
        except AnalysisError:
            d_est, theta = float("nan"), float("nan")
        return ImageResult(ml, hm, bm, prof, sm, fit, d_est, theta)

    return _stage("analyze", run)


def _write_outputs(out, cfg, q, cl, img, h):
    out.mkdir(parents=True, exist_ok=True)
    n_pts = cfg.get("run", "pattern_points")
    io.write_velocity(out / "velocity.csv", q.dist, h)
    io.write_spectrum(out / "spectrum.csv", q.averaged, h)
    io.write_spectrum(out / "spectrum_drifted.csv", q.drifted, h)
    io.write_pattern(out / "pattern.csv", sample_pattern(q.averaged, n_pts), h)
    io.write_pattern(out / "pattern_drifted.csv", sample_pattern(q.drifted, n_pts), h)
    if cl is not None:
        io.write_pattern(out / "classical.csv", cl.histogram, h)
        io.write_pattern(out / "classical_smoothed.csv", cl.smoothed, h)
    if img is not None:
        io.write_molecules(out / "molecules.csv", img.molecules, h)
        io.write_heightmap(out / "height.pgm", img.heightmap, h)
        io.write_binarymap(out / "binary.pgm", img.binary, h)
        binned = bin_image(img.binary, cfg.get("analysis", "bin"))
        io.write_pgm(out / "binned.pgm", np.minimum(binned, 255), 255,
                     [f"bin={cfg.get('analysis', 'bin')}", f"config_hash={h}"])
        io.write_profile(out / "profile.csv", img.profile, h)
        io.write_profile(out / "profile_smoothed.csv", img.smoothed, h)


def fit_block(img, n_sigma):
    return io.fit_to_dict(img.fit, img.binary.count, img.period_est, img.theta, n_sigma)


def run_pipeline(cfg, out_dir=None, threads=1, seed=None):
    """Run every stage and return the JSON-ready report.

    With ``out_dir`` all intermediate artefacts, ``report.json`` and (kept
    apart so the report stays byte-reproducible) ``timings.json`` are written.
    """
    seed = cfg.seed if seed is None else int(seed)
    if seed != cfg.seed:
        cfg = cfg.with_value("run", "seed", seed)
    h = cfg.hash
    timings = {}

    t = time.perf_counter()
    dist = _stage("beam", beam, cfg)
    timings["beam"] = time.perf_counter() - t

    t = time.perf_counter()
    q = _stage("quantum", quantum, cfg, threads, dist)
    timings["quantum"] = time.perf_counter() - t

    t = time.perf_counter()
    cl = _stage("classical", classical, cfg, dist, threads)
    cl_spec = classical_spectrum(cl, cfg.grating(2).period_d)
    v_cl_drift = _stage("classical", drifted_visibility, cl_spec, cfg)
    timings["classical"] = time.perf_counter() - t

    t = time.perf_counter()
    img = image(cfg, q.drifted, seed)
    timings["image"] = time.perf_counter() - t

    n_sigma = significance(img.fit.V, img.fit.sigma_V, v_cl_drift) \
        if img.fit.sigma_V > 0 else float("nan")
    report = build_report(cfg, q, cl, v_cl_drift, img, n_sigma)
    if out_dir is not None:
        out = Path(out_dir)
        _write_outputs(out, cfg, q, cl, img, h)
        io.write_json(out / "fit.json", fit_block(img, n_sigma) | {"config_hash": h})
        io.write_json(out / "report.json", report)
        io.write_json(out / "timings.json", {"config_hash": h, "seconds": timings,
                                             "threads": threads})
    return report


def quantum_block(cfg, q):
    n_pts = cfg.get("run", "pattern_points")
    mono_curve = sample_pattern(q.mono, n_pts)
    avg_curve = sample_pattern(q.averaged, n_pts)
    drift_curve = sample_pattern(q.drifted, n_pts)
    v0 = cfg.selector.center_velocity
    return {
        "v_mono_mps": v0,
        "xi_mono": cfg.interferometer.xi(v0),
        "V_mono_minmax": visibility_minmax(mono_curve),
        "V_mono_sin": visibility_sinusoidal(q.mono),
        "V_avg_minmax": visibility_minmax(avg_curve),
        "V_avg_sin": visibility_sinusoidal(q.averaged),
        "V_avg_drifted_minmax": visibility_minmax(drift_curve),
        "V_avg_drifted_sin": visibility_sinusoidal(q.drifted),
        "drift_multiplier_1": abs(q.drifted.meta["drift_multiplier_1"]),
    }


def build_report(cfg, q, cl, v_cl_drift, img, n_sigma):
    qb = quantum_block(cfg, q)
    report = {
        "schema": SCHEMA_VERSION,
        "config_hash": cfg.hash,
        "config": cfg.values,
        "seed": cfg.seed,
        "beam": {"v_mean_mps": q.dist.mean, "fwhm_over_mean": q.dist.fwhm / q.dist.mean,
                 "grid_points": int(q.dist.v.size)},
        "quantum": qb,
    }
    if cl is not None:
        report["classical"] = {
            "V": cl.visibility, "V_se": cl.visibility_se, "V_drifted": v_cl_drift,
            "transmitted_fraction": cl.transmitted_fraction, "n_rays": cl.n_rays,
        }
        report["ratio_quantum_classical"] = qb["V_avg_minmax"] / cl.visibility
    if img is not None:
        report["fit"] = fit_block(img, n_sigma)
        report["significance"] = n_sigma
    return report


def _apply_axis(cfg, axis, value):
    if axis == "selector.v0":
        sel = cfg.values["selector"]
        spin = value * sel["twist_angle"] / (2 * np.pi * sel["length"] * 1e-3)
        return cfg.with_value("selector", "spin_rate", spin)
    section, _, key = axis.partition(".")
    if not key:
        raise ConfigError(f"sweep axis '{axis}' must look like section.key")
    try:
        current = cfg.get(section, key)
    except KeyError:
        raise ConfigError(f"sweep axis '{axis}' is not a config key") from None
    if isinstance(current, (bool, str)):
        raise ConfigError(f"sweep axis '{axis}' is not numeric")
    return cfg.with_value(section, key, value)


def sweep(cfg, axis, values, pattern_only=False, threads=1):
    """One row ``(value, V_quantum, V_classical, V_fitted, sigma_V)`` per value.

    ``V_quantum`` is the velocity-averaged min/max visibility before drift.
    Pattern-only sweeps leave the classical and fitted columns as NaN.
    """
    rows = []
    for value in values:
        c = _apply_axis(cfg, axis, float(value))
        if pattern_only:
            q = _stage("quantum", quantum, c, threads)
            v_q = visibility_minmax(sample_pattern(q.averaged, c.get("run", "pattern_points")))
            rows.append((float(value), v_q, float("nan"), float("nan"), float("nan")))
            continue
        rep = run_pipeline(c, None, threads)
        rows.append((float(value), rep["quantum"]["V_avg_minmax"], rep["classical"]["V"],
                     rep["fit"]["V"], rep["fit"]["sigma_V"]))
    return rows
