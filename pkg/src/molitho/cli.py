"""Command-line interface.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 analysis failure.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io, pipeline
from .analysis import significance
from .config import default_config_path, parse_config
from .deposition import drift_rate_for_stretch, render_stm, sample_deposit
from .errors import AnalysisError, ConfigError, MolithoError, NumericalError
from .oracle import fresnel_oracle
from .quantum import sample_pattern, spectrum_at_speed

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ANALYSIS = 0, 2, 3, 4

log = logging.getLogger("molitho")


def exit_code(exc):
    if isinstance(exc, pipeline.StageError):
        return exit_code(exc.cause)
    if isinstance(exc, AnalysisError):
        return EXIT_ANALYSIS
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_CONFIG


def _load(args):
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_value("run", "seed", args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def cmd_pattern(args):
    cfg, out = _load(args)
    q = pipeline.quantum(cfg, args.threads)
    h = cfg.hash
    n = cfg.get("run", "pattern_points")
    io.write_velocity(out / "velocity.csv", q.dist, h)
    io.write_spectrum(out / "spectrum.csv", q.averaged, h)
    io.write_spectrum(out / "spectrum_mono.csv", q.mono, h)
    io.write_spectrum(out / "spectrum_drifted.csv", q.drifted, h)
    io.write_pattern(out / "pattern.csv", sample_pattern(q.averaged, n), h)
    io.write_pattern(out / "pattern_drifted.csv", sample_pattern(q.drifted, n), h)
    block = pipeline.quantum_block(cfg, q)
    io.write_json(out / "pattern.json", {"config_hash": h, "quantum": block})
    print(f"V (velocity averaged, min/max) = {block['V_avg_minmax']:.4f}; "
          f"after drift = {block['V_avg_drifted_minmax']:.4f}")


def cmd_classical(args):
    cfg, out = _load(args)
    res = pipeline.classical(cfg, pipeline.beam(cfg), args.threads)
    spec = pipeline.classical_spectrum(res, cfg.grating(2).period_d)
    v_drift = pipeline.drifted_visibility(spec, cfg)
    h = cfg.hash
    io.write_pattern(out / "classical.csv", res.histogram, h)
    io.write_pattern(out / "classical_smoothed.csv", res.smoothed, h)
    io.write_json(out / "classical.json", {
        "config_hash": h, "V": res.visibility, "V_se": res.visibility_se,
        "V_drifted": v_drift, "transmitted_fraction": res.transmitted_fraction,
        "n_rays": res.n_rays})
    print(f"V classical = {res.visibility:.4f} +- {res.visibility_se:.4f}")


def cmd_oracle(args):
    cfg, out = _load(args)
    setup = cfg.interferometer
    v = args.speed if args.speed else cfg.selector.center_velocity
    curve, rep = fresnel_oracle(cfg.geometry, cfg.grating(1), cfg.grating(2), cfg.molecule, v,
                                args.source_samples, args.slit_window,
                                delta_cut=setup.delta_cut, band_limit=setup.mu_max,
                                tol=args.tol, max_window=args.max_window, strict=False,
                                return_report=True)
    doc = {"config_hash": cfg.hash, "speed_mps": v, "xi": setup.xi(v),
           "history": rep.history, "converged": rep.converged, "window": rep.window,
           "discretisation_change": rep.discretisation_change}
    if setup.geometry.symmetric:
        fs = spectrum_at_speed(setup, v)
        ref = fs.evaluate(curve.x)
        doc["max_rel_deviation"] = float(np.max(np.abs(curve.s - ref) / ref))
    io.write_pattern(out / "oracle.csv", curve, cfg.hash)
    io.write_json(out / "oracle.json", doc)
    print(f"oracle window {rep.window}, converged={rep.converged}, "
          f"deviation={doc.get('max_rel_deviation', float('nan')):.3g}")
    if not rep.converged:
        raise NumericalError("fresnel_oracle did not converge", {"history": rep.history})


def cmd_deposit(args):
    cfg, out = _load(args)
    q = pipeline.quantum(cfg, args.threads)
    ml = sample_deposit(q.drifted, cfg.deposition())
    io.write_molecules(out / "molecules.csv", ml, cfg.hash)
    print(f"{len(ml)} molecules")


def _stm_rate(cfg, args):
    if args.stretch is not None:
        return drift_rate_for_stretch(args.stretch, cfg.get("imaging", "px_size"), cfg.scan)
    return cfg.get("imaging", "stm_drift_rate")


def cmd_render(args):
    cfg, out = _load(args)
    ml = io.read_molecules(args.molecules or out / "molecules.csv")
    im = cfg.values["imaging"]
    hm = render_stm(ml, im["px_size"], cfg.scan, im["noise_rms"], _stm_rate(cfg, args), cfg.seed)
    io.write_heightmap(out / "height.pgm", hm, cfg.hash)
    print(f"{hm.nx}x{hm.ny} px height map")


def cmd_analyze(args):
    cfg, out = _load(args)
    hm = io.read_heightmap(args.image or out / "height.pgm")
    img = pipeline.analyze(cfg, hm)
    h = cfg.hash
    n_sigma = None
    if args.v_classical is not None:
        n_sigma = significance(img.fit.V, img.fit.sigma_V, args.v_classical)
    io.write_binarymap(out / "binary.pgm", img.binary, h)
    io.write_profile(out / "profile.csv", img.profile, h)
    io.write_profile(out / "profile_smoothed.csv", img.smoothed, h)
    io.write_json(out / "fit.json", pipeline.fit_block(img, n_sigma) | {"config_hash": h})
    print(f"V = {img.fit.V:.4f} +- {img.fit.sigma_V:.4f}, d = {img.fit.d_fit:.2f} nm, "
          f"period estimate = {img.period_est:.2f} nm")


def cmd_pipeline(args):
    cfg, out = _load(args)
    rep = pipeline.run_pipeline(cfg, out, args.threads)
    print(f"V quantum {rep['quantum']['V_avg_minmax']:.4f}, classical "
          f"{rep['classical']['V']:.4f}, fitted {rep['fit']['V']:.4f} +- "
          f"{rep['fit']['sigma_V']:.4f}, significance {rep['significance']:.1f}")


def _values(spec):
    if ":" in spec:
        lo, hi, n = spec.split(":")
        return list(np.linspace(float(lo), float(hi), int(n)))
    return [float(v) for v in spec.split(",") if v.strip()]


def cmd_sweep(args):
    cfg, out = _load(args)
    try:
        values = _values(args.values)
    except ValueError:
        raise ConfigError(f"cannot read sweep values '{args.values}'") from None
    rows = pipeline.sweep(cfg, args.axis, values, args.pattern_only, args.threads)
    header = ["value", "V_quantum", "V_classical", "V_fitted", "sigma_V"]
    if args.format == "json":
        io.write_json(out / "sweep.json", {"config_hash": cfg.hash, "axis": args.axis,
                                           "rows": [dict(zip(header, r)) for r in rows]})
    else:
        io.write_csv(out / "sweep.csv", header, list(zip(*rows)), cfg.hash)
    for r in rows:
        print(",".join(f"{v:.6g}" for v in r))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=str(default_config_path()),
                        help="INI experiment file (default: bundled paper.ini)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="overrides [run] seed")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads; never changes results")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="format of tabular outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="molitho", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    add("pattern", cmd_pattern, "quantum fringe spectrum and pattern")
    add("classical", cmd_classical, "classical moire Monte Carlo")
    sp = add("oracle", cmd_oracle, "direct Fresnel-integral check of the pattern")
    sp.add_argument("--speed", type=float, default=None, help="m/s (default: selector v0)")
    sp.add_argument("--source-samples", type=int, default=256)
    sp.add_argument("--slit-window", type=int, default=16)
    sp.add_argument("--max-window", type=int, default=2048)
    sp.add_argument("--tol", type=float, default=1e-3)
    add("deposit", cmd_deposit, "sample a molecule deposit")
    sp = add("render", cmd_render, "render an STM height map")
    sp.add_argument("--molecules", default=None, help="molecule CSV (default: OUT/molecules.csv)")
    sp.add_argument("--stretch", type=float, default=None,
                    help="set the STM drift rate to give this apparent stretch")
    sp = add("analyze", cmd_analyze, "detect, profile and fit a height map")
    sp.add_argument("--image", default=None, help="height PGM (default: OUT/height.pgm)")
    sp.add_argument("--v-classical", type=float, default=None,
                    help="classical visibility for the significance figure")
    add("pipeline", cmd_pipeline, "run every stage and write report.json")
    sp = add("sweep", cmd_sweep, "repeat the pipeline over one parameter")
    sp.add_argument("--axis", required=True,
                    help="section.key of a numeric config entry, or selector.v0")
    sp.add_argument("--values", required=True, help="comma list or start:stop:count")
    sp.add_argument("--pattern-only", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.func(args)
    except MolithoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
