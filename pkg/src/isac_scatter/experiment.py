"""Experiment orchestration and figure presets (fig2, fig4, fig5, nmse_roi, nmse_snr).

CSV files hold only deterministic quantities; wall-clock timings go to ``timings.json``.
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .config import ExperimentConfig, InversionSection
from .diagnostics import phase_mixing_mc, roi_quality, spectral_report
from .em import Grid2D, build_frequency_grid, resample_contrast, uniform_circular_array
from .forward import SensingSystem, make_pilots, simulate_observations
from .inversion import InversionConfig, roi_qp_reconstruct, stacked_operator, tikhonov_bim
from .lsm import LsmConfig, lsm_from_scene
from .roi import RoiIndexSet
from .scenes import DEFAULT_ZETA, Scene, bbox_center_rc, build_scene, min_enclosing_side, nmse, preset_scene, shrink_schedule

log = logging.getLogger(__name__)

PRESETS = ("fig2", "fig4", "fig5", "nmse_roi", "nmse_snr")

CSV_HEADERS = {
    "fig2": ["K", "threshold", "empirical_prob", "markov_bound", "mean_sq_zbar", "se_sq_zbar"],
    "fig4": ["roi_pixels", "kappa", "sigma_min"],
    "fig5": ["roi_pixels", "analytic_ops", "analytic_ops_ratio"],
    "nmse_roi": ["scene", "roi_pixels", "nmse_roi_qp_db", "nmse_tikhonov_db"],
    "nmse_snr": [
        "scene", "snr_db", "seed", "roi_pixels", "recall", "precision",
        "nmse_roi_qp_db", "nmse_tikhonov_db", "iters_roi_qp", "iters_tikhonov", "status",
    ],
}

FIG2_K = (1, 2, 4, 8, 16, 24, 32, 48, 64)


# ---------------------------------------------------------------- building blocks


@dataclass
class Setup:
    system: SensingSystem
    scene: Scene
    data_system: SensingSystem | None = None

    data_chi: np.ndarray | None = None

    def data_kw(self) -> dict:
        if self.data_system is None:
            return {}
        return {"data_system": self.data_system, "data_chi": self.data_chi}


def build_setup(cfg: ExperimentConfig) -> Setup:
    s = cfg.scene
    grid = Grid2D(s.side_pixels, s.extent_m)
    freqs = build_frequency_grid(cfg.frequencies.f_c, cfg.frequencies.delta_f, cfg.frequencies.K)
    array = uniform_circular_array(cfg.array.radius_m, cfg.array.n_tx, cfg.array.n_rx, grid)
    pilots = make_pilots(cfg.array.n_tx, cfg.pilots.T, cfg.frequencies.K, cfg.pilots.seed)
    system = SensingSystem(grid, array, freqs, pilots)
    spec = preset_scene(s.name, grid, s.eps_r, s.sigma, (s.offset_x, s.offset_y))
    scene = build_scene(spec, freqs.omega_c)
    setup = Setup(system, scene)
    if s.refine > 1:
        fine = Grid2D(s.side_pixels * s.refine, s.extent_m)
        setup.data_system = SensingSystem(fine, array, freqs, pilots)
        setup.data_chi = resample_contrast(scene.chi, grid, fine)
    return setup


def inversion_config(sec: InversionSection, **over) -> InversionConfig:
    kw = dict(
        alpha=sec.alpha, beta=sec.beta, bounds=(sec.lower, sec.upper), tau_rel=sec.tau_rel,
        max_iter=sec.max_iter, lcurve_min=sec.lcurve_min, lcurve_max=sec.lcurve_max, lcurve_points=sec.lcurve_points,
    )
    kw.update(over)
    return InversionConfig(**kw)


def lsm_config(cfg: ExperimentConfig) -> LsmConfig:
    zeta = cfg.lsm.zeta if cfg.lsm.zeta is not None else DEFAULT_ZETA.get(cfg.scene.name, 1e-3)
    return LsmConfig(zeta, cfg.lsm.epsilon, cfg.lsm.q_trim, cfg.lsm.normalize)


def schedule_for(setup: Setup, steps: int, margin: int):
    grid = setup.system.grid
    if setup.scene.k_true == 0:
        raise ValueError("schedule needs a non-empty scene")
    side_min = min(grid.side_pixels, min_enclosing_side(grid, setup.scene.support) + 2 * margin)
    sched = shrink_schedule(grid.side_pixels, side_min, steps)
    return sched, sched.rois(grid.side_pixels, bbox_center_rc(grid, setup.scene.bbox))


def choose_roi(setup: Setup, cfg: ExperimentConfig, snr_db: float, seed: int) -> RoiIndexSet:
    n = setup.system.grid.side_pixels
    mode = cfg.experiment.roi_mode
    if mode == "full":
        return RoiIndexSet.full(n)
    if mode == "oracle":
        return RoiIndexSet(setup.scene.support, n)
    if mode == "schedule":
        return schedule_for(setup, cfg.experiment.schedule_steps, cfg.experiment.schedule_margin)[1][-1]
    return lsm_from_scene(setup.system, setup.scene.chi, snr_db, seed, lsm_config(cfg), **setup.data_kw()).roi


def analytic_ops(P: int, N: int, K: int, T: int, N_t: int, N_r: int, M: int) -> float:
    """Leading-order operation count of LSM plus M ROI-restricted Born/QP iterations."""
    return float(M * K * (P**3 + T * P**2 + T * (N_t + N_r) * P) + K * (N_t**3 + T * N * N_r * N_t))


# ---------------------------------------------------------------- result records


@dataclass
class PresetResult:
    name: str
    header: list
    rows: list
    timings: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def _run_fig2(cfg: ExperimentConfig) -> PresetResult:
    seed = cfg.experiment.seeds[0]
    t0 = time.perf_counter()
    run = phase_mixing_mc(FIG2_K, 0.25, 10_000, seed)
    rows = [[K, run.threshold, p, b, m, s] for K, p, b, m, s in zip(run.K_values, run.empirical_prob, run.markov_bound, run.mean_sq_zbar, run.se_sq_zbar)]
    return PresetResult("fig2", CSV_HEADERS["fig2"], rows, {"total_s": time.perf_counter() - t0})


def fig4_table(setup: Setup, rois, operator: str = "true"):
    chi = setup.scene.chi if operator == "true" else np.zeros(setup.system.grid.N, dtype=complex)
    rows = []
    for roi in rois:
        est = np.zeros_like(chi)
        est[roi.indices] = chi[roi.indices]
        A = stacked_operator(setup.system, est, roi)
        _, kappa, smin = spectral_report(A)
        rows.append([roi.P, kappa, smin])
    return rows


def _run_fig4(cfg: ExperimentConfig) -> PresetResult:
    setup = build_setup(cfg)
    _, rois = schedule_for(setup, cfg.experiment.schedule_steps, cfg.experiment.schedule_margin)
    t0 = time.perf_counter()
    rows = fig4_table(setup, rois)
    return PresetResult("fig4", CSV_HEADERS["fig4"], rows, {"total_s": time.perf_counter() - t0})


def _run_fig5(cfg: ExperimentConfig) -> PresetResult:
    setup = build_setup(cfg)
    sys_ = setup.system
    _, rois = schedule_for(setup, cfg.experiment.schedule_steps, cfg.experiment.schedule_margin)
    snr, seed = cfg.experiment.snr_db[0], cfg.experiment.seeds[0]
    obs = simulate_observations(sys_, setup.scene.chi, snr, seed, **setup.data_kw())
    inv = inversion_config(cfg.inversion)
    args = (sys_.grid.N, sys_.K, sys_.T, sys_.array.N_t, sys_.array.N_r, inv.max_iter)
    base = analytic_ops(rois[0].P, *args)
    rows, timings, failures = [], {}, []
    for roi in rois:
        res = roi_qp_reconstruct(sys_, obs, roi, inv)
        if res.error:
            failures.append(f"P={roi.P}: {res.error}")
        ops = analytic_ops(roi.P, *args)
        rows.append([roi.P, ops, ops / base])
        timings[str(roi.P)] = res.wall_time
    return PresetResult("fig5", CSV_HEADERS["fig5"], rows, {"reconstruction_s": timings}, failures)


def nmse_vs_roi(setup: Setup, obs, rois, inv: InversionConfig):
    out = []
    for roi in rois:
        q = roi_qp_reconstruct(setup.system, obs, roi, inv)
        t = tikhonov_bim(setup.system, obs, roi, inv)
        out.append((roi.P, nmse(q.chi_hat, setup.scene.chi), nmse(t.chi_hat, setup.scene.chi), q, t))
    return out


def _run_nmse_roi(cfg: ExperimentConfig) -> PresetResult:
    setup = build_setup(cfg)
    _, rois = schedule_for(setup, cfg.experiment.schedule_steps, cfg.experiment.schedule_margin)
    snr, seed = cfg.experiment.snr_db[-1], cfg.experiment.seeds[0]
    obs = simulate_observations(setup.system, setup.scene.chi, snr, seed, **setup.data_kw())
    t0 = time.perf_counter()
    table = nmse_vs_roi(setup, obs, rois, inversion_config(cfg.inversion, max_iter=1))
    rows = [[cfg.scene.name, P, a, b] for P, a, b, *_ in table]
    failures = [f"P={P}: {r.error}" for P, _, _, q, t in table for r in (q, t) if r.error]
    return PresetResult("nmse_roi", CSV_HEADERS["nmse_roi"], rows, {"total_s": time.perf_counter() - t0}, failures)


def run_cell(cfg: ExperimentConfig, snr_db: float, seed: int) -> dict:
    """One (scene, SNR, seed) cell of the full pipeline; failures are recorded, not raised."""
    rec = {"scene": cfg.scene.name, "snr_db": snr_db, "seed": seed, "status": "ok"}
    timings = {}
    try:
        t0 = time.perf_counter()
        setup = build_setup(cfg)
        obs = simulate_observations(setup.system, setup.scene.chi, snr_db, seed, **setup.data_kw())
        timings["simulate_s"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        roi = choose_roi(setup, cfg, snr_db, seed)
        timings["roi_s"] = time.perf_counter() - t0
        rec["roi_pixels"] = roi.P
        if setup.scene.k_true:
            q = roi_quality(roi, setup.scene.support)
            rec["recall"], rec["precision"] = q.recall, q.precision
        inv = inversion_config(cfg.inversion)
        methods = ("roi_qp", "tikhonov") if cfg.inversion.method == "both" else (cfg.inversion.method,)
        for m in methods:
            t0 = time.perf_counter()
            res = roi_qp_reconstruct(setup.system, obs, roi, inv) if m == "roi_qp" else tikhonov_bim(setup.system, obs, roi, inv)
            timings[f"{m}_s"] = time.perf_counter() - t0
            rec[f"iters_{m}"] = res.iterations_used
            if setup.scene.k_true:
                rec[f"nmse_{m}_db"] = nmse(res.chi_hat, setup.scene.chi)
            if res.error:
                rec["status"] = f"partial: {res.error}"
    except Exception as exc:  # batch continues; the cell records the failure
        log.exception("cell (snr=%s, seed=%s) failed", snr_db, seed)
        rec["status"] = f"failed: {type(exc).__name__}: {exc}"
    rec["_timings"] = timings
    return rec


def _cell_job(args):
    return run_cell(*args)


def _run_nmse_snr(cfg: ExperimentConfig) -> PresetResult:
    cells = [(cfg, float(s), int(seed)) for s in cfg.experiment.snr_db for seed in cfg.experiment.seeds]
    if cfg.experiment.workers > 1:
        with ProcessPoolExecutor(cfg.experiment.workers) as pool:
            recs = list(pool.map(_cell_job, cells))
    else:
        recs = [run_cell(*c) for c in cells]
    timings = {f"snr={r['snr_db']},seed={r['seed']}": r.pop("_timings") for r in recs}
    failures = [r["status"] for r in recs if r["status"] != "ok"]
    return PresetResult("nmse_snr", CSV_HEADERS["nmse_snr"], recs, timings, failures)


_RUNNERS = {"fig2": _run_fig2, "fig4": _run_fig4, "fig5": _run_fig5, "nmse_roi": _run_nmse_roi, "nmse_snr": _run_nmse_snr}

PRESET_DEFAULTS = {
    "fig2": {},
    "fig4": {"scene": {"name": "circle"}},
    "fig5": {"scene": {"name": "circle"}, "experiment": {"snr_db": "30"}},
    "nmse_roi": {"scene": {"name": "triangle"}, "experiment": {"snr_db": "30"}},
    "nmse_snr": {"scene": {"name": "triangle"}, "experiment": {"snr_db": "0, 5, 10, 20, 30"}, "inversion": {"method": "both"}},
}


def run_preset(name: str, cfg: ExperimentConfig) -> PresetResult:
    if name not in _RUNNERS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return _RUNNERS[name](cfg)


# ---------------------------------------------------------------- output


_PLOT_TEMPLATE = '''"""Plot {name}.csv (requires matplotlib)."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
with open(here / "{name}.csv") as fh:
    rows = list(csv.DictReader(fh))
x = [float(r["{x}"]) for r in rows]
fig, ax = plt.subplots()
for col in {ys!r}:
    ax.plot(x, [float(r[col]) if r[col] else float("nan") for r in rows], marker="o", label=col)
ax.set_xlabel("{x}")
{logy}ax.legend()
fig.savefig(here / "{name}.png", dpi=150, bbox_inches="tight")
if "--show" in sys.argv:
    plt.show()
'''

_PLOT_AXES = {
    "fig2": ("K", ["empirical_prob", "markov_bound"], False),
    "fig4": ("roi_pixels", ["kappa", "sigma_min"], True),
    "fig5": ("roi_pixels", ["analytic_ops_ratio"], True),
    "nmse_roi": ("roi_pixels", ["nmse_roi_qp_db", "nmse_tikhonov_db"], False),
    "nmse_snr": ("snr_db", ["nmse_roi_qp_db", "nmse_tikhonov_db"], False),
}


def emit_outputs(result: PresetResult, cfg: ExperimentConfig, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not result.rows:
        raise ValueError("no records to write")
    csv_path = io.write_csv(out / f"{result.name}.csv", result.header, result.rows)
    x, ys, logy = _PLOT_AXES[result.name]
    plot = out / f"plot_{result.name}.py"
    plot.write_text(_PLOT_TEMPLATE.format(name=result.name, x=x, ys=ys, logy='ax.set_yscale("log")\n' if logy else ""))
    manifest = io.write_manifest(
        out / f"{result.name}_manifest.json", cfg.to_dict(), list(cfg.experiment.seeds),
        extra={"preset": result.name, "csv": csv_path.name, "failures": result.failures},
    )
    timings = out / f"{result.name}_timings.json"
    timings.write_text(json.dumps(result.timings, indent=2, sort_keys=True) + "\n")
    return {"csv": csv_path, "plot": plot, "manifest": manifest, "timings": timings}


def preset_config(name: str, cfg: ExperimentConfig, explicit: dict | None = None) -> ExperimentConfig:
    """Preset defaults, with anything explicitly set by the user taking precedence."""
    from .config import apply_values

    merged = {s: dict(kv) for s, kv in PRESET_DEFAULTS.get(name, {}).items()}
    for s, kv in (explicit or {}).items():
        merged.setdefault(s, {}).update(kv)
    return apply_values(cfg, merged).validate()
