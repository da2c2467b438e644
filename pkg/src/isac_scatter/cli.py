"""Command-line entry point: simulate, lsm, reconstruct, diagnose, experiment <preset>."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, ExperimentConfig, apply_values, dump_config, read_values
from .diagnostics import coherence_split, crlb_report, ncc_report, roi_quality, spectral_report
from .experiment import PRESETS, build_setup, choose_roi, emit_outputs, inversion_config, lsm_config, preset_config, run_preset
from .forward import ForwardSolveError, simulate_observations
from .inversion import roi_qp_reconstruct, stacked_operator, tikhonov_bim
from .lsm import lsm_from_scene
from .qp import QpConvergenceError
from .roi import RoiIndexSet, read_index_csv, read_pgm, write_index_csv, write_pgm

log = logging.getLogger("isac_scatter")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 2, 3, 4


def _common(p):
    p.add_argument("-c", "--config", help="INI-style config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one config value (repeatable)")
    p.add_argument("-o", "--out", default="out", help="output directory (default: out)")


def _parser():
    ap = argparse.ArgumentParser(prog="isac-scatter", description="Multi-tone CSI inverse scattering toolkit")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize observations for the configured scene")
    _common(p)

    p = sub.add_parser("lsm", help="LSM indicator and ROI for the configured scene")
    _common(p)

    p = sub.add_parser("reconstruct", help="ROI-QP and/or Tikhonov-BIM reconstruction")
    _common(p)
    p.add_argument("--obs", help="observation header (.json) written by 'simulate'; simulated when omitted")
    p.add_argument("--roi", help="ROI mask (.pgm) or index list (.csv); experiment.roi_mode when omitted")

    p = sub.add_parser("diagnose", help="spectral, coherence and CRLB reports")
    _common(p)
    p.add_argument("--roi", help="ROI mask (.pgm) or index list (.csv); full domain when omitted")
    p.add_argument("--operator", choices=("true", "born"), default="true", help="contrast used inside the resolvent")

    p = sub.add_parser("experiment", help="run a figure preset")
    _common(p)
    p.add_argument("preset", choices=PRESETS)
    p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    return ap


def _load_roi(path, side):
    path = Path(path)
    return read_pgm(path) if path.suffix.lower() == ".pgm" else read_index_csv(path, side)


def _cmd_simulate(cfg, args, out):
    setup = build_setup(cfg)
    snr, seed = cfg.experiment.snr_db[0], cfg.experiment.seeds[0]
    obs = simulate_observations(setup.system, setup.scene.chi, snr, seed, **setup.data_kw())
    io.save_observation(obs, out / "observation")
    io.write_chi_csv(setup.scene.chi, out / "chi_true.csv")
    if setup.scene.k_true:
        write_index_csv(RoiIndexSet(setup.scene.support, setup.system.grid.side_pixels), out / "support.csv")
    io.write_manifest(out / "manifest.json", cfg.to_dict(), [seed], extra={"command": "simulate"})
    print(f"wrote {out / 'observation.json'} ({obs.K} tones, {obs.y.shape[1]} rows per tone)")
    return EXIT_OK


def _cmd_lsm(cfg, args, out):
    setup = build_setup(cfg)
    snr, seed = cfg.experiment.snr_db[0], cfg.experiment.seeds[0]
    res = lsm_from_scene(setup.system, setup.scene.chi, snr, seed, lsm_config(cfg), **setup.data_kw())
    write_pgm(res.roi, out / "roi.pgm")
    write_index_csv(res.roi, out / "roi.csv")
    io.write_csv(out / "indicator.csv", ["pixel_index", "J", "score"], ((i, j, s) for i, (j, s) in enumerate(zip(res.J_K, res.scores))))
    extra = {"command": "lsm", "eta": res.eta}
    if setup.scene.k_true:
        q = roi_quality(res.roi, setup.scene.support)
        extra.update(recall=q.recall, precision=q.precision)
    io.write_manifest(out / "manifest.json", cfg.to_dict(), [seed], res.roi, extra)
    print(f"ROI: {res.roi.P} pixels (eta = {res.eta:.4g})")
    return EXIT_OK


def _cmd_reconstruct(cfg, args, out):
    setup = build_setup(cfg)
    n = setup.system.grid.side_pixels
    snr, seed = cfg.experiment.snr_db[0], cfg.experiment.seeds[0]
    if args.obs:
        obs = io.load_observation(args.obs)
        if obs.y.shape != (setup.system.K, setup.system.rows_per_tone):
            raise ConfigError("observation dimensions do not match the config")
    else:
        obs = simulate_observations(setup.system, setup.scene.chi, snr, seed, **setup.data_kw())
    roi = _load_roi(args.roi, n) if args.roi else choose_roi(setup, cfg, snr, seed)
    inv = inversion_config(cfg.inversion)
    methods = ("roi_qp", "tikhonov") if cfg.inversion.method == "both" else (cfg.inversion.method,)
    status = EXIT_OK
    summary = {}
    for m in methods:
        res = roi_qp_reconstruct(setup.system, obs, roi, inv) if m == "roi_qp" else tikhonov_bim(setup.system, obs, roi, inv)
        io.write_chi_csv(res.chi_hat, out / f"chi_{m}.csv")
        io.write_iteration_log(res, out / f"iterations_{m}.csv")
        summary[m] = {"iterations": res.iterations_used, "converged": res.converged, "weights": res.weights, "error": res.error}
        if res.error:
            status = EXIT_NUMERICAL
    io.write_manifest(out / "manifest.json", cfg.to_dict(), [seed], roi, {"command": "reconstruct", "results": summary})
    print(json.dumps(summary, indent=2, default=str))
    return status


def _cmd_diagnose(cfg, args, out):
    setup = build_setup(cfg)
    n = setup.system.grid.side_pixels
    roi = _load_roi(args.roi, n) if args.roi else RoiIndexSet.full(n)
    chi = setup.scene.chi if args.operator == "true" else np.zeros(setup.system.grid.N, dtype=complex)
    est = np.zeros_like(chi)
    est[roi.indices] = chi[roi.indices]
    A = stacked_operator(setup.system, est, roi)
    _, kappa, smin = spectral_report(A)
    rep = ncc_report(A, roi.indices)
    obs = simulate_observations(setup.system, setup.scene.chi, cfg.experiment.snr_db[0], cfg.experiment.seeds[0])
    crlb = crlb_report(A, obs.noise_var)
    summary = {
        "roi_pixels": roi.P, "kappa": kappa, "sigma_min": smin, "mu_eff": rep.mu_eff, "r_max": rep.r_max,
        "kappa_bound": rep.kappa_bound, "bound_valid": rep.bound_valid,
        "crlb_spectral": crlb.crlb_spectral, "crlb_upper_bound": crlb.crlb_upper_bound, "noise_var": obs.noise_var,
    }
    if setup.scene.k_true:
        local = np.searchsorted(roi.indices, np.intersect1d(roi.indices, setup.scene.support))
        split = coherence_split(A, local)
        rows = [[k, v.mean, v.max, v.pairs] for k, v in split.items() if v is not None]
        io.write_csv(out / "coherence.csv", ["block", "mean_ncc", "max_ncc", "pairs"], rows)
        summary["coherence"] = {k: (None if v is None else v.__dict__) for k, v in split.items()}
    (out / "diagnostics.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n")
    print(json.dumps(summary, indent=2, default=str))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        values = read_values(args.config, args.overrides)
        if args.command == "experiment":
            cfg = preset_config(args.preset, ExperimentConfig(), values)
            if args.print_config:
                print(dump_config(cfg))
                return EXIT_OK
        else:
            cfg = apply_values(ExperimentConfig(), values).validate()
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
        if args.command == "experiment":
            result = run_preset(args.preset, cfg)
            files = emit_outputs(result, cfg, out)
            print(f"wrote {files['csv']}")
            if result.failures:
                for f in result.failures:
                    print(f"failure: {f}", file=sys.stderr)
                return EXIT_PARTIAL
            return EXIT_OK
        handler = {"simulate": _cmd_simulate, "lsm": _cmd_lsm, "reconstruct": _cmd_reconstruct, "diagnose": _cmd_diagnose}[args.command]
        return handler(cfg, args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ForwardSolveError, QpConvergenceError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
