"""Declarative run configuration: INI-style sections with ``section.key=value`` overrides.

Sections and keys (units in brackets)::

    [scene]        name, side_pixels, extent_m [m], eps_r, sigma [S/m], offset_x [m], offset_y [m], refine
    [array]        radius_m [m], n_tx, n_rx
    [frequencies]  f_c [Hz], delta_f [Hz], K
    [pilots]       T, seed
    [lsm]          zeta, epsilon, q_trim, normalize
    [inversion]    method, alpha, beta, lower, upper, tau_rel, max_iter, lcurve_min, lcurve_max, lcurve_points
    [experiment]   snr_db, seeds, roi_mode, schedule_steps, schedule_margin, workers

``alpha``/``beta``/``eps_r`` accept ``auto``; list values are comma separated.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    name: str = "circle"
    side_pixels: int = 36
    extent_m: float = 1.8
    eps_r: float | None = None
    sigma: float = 0.0
    offset_x: float = 0.0
    offset_y: float = 0.0
    refine: int = 1


@dataclass(frozen=True)
class ArrayConfig:
    radius_m: float = 10.0
    n_tx: int = 60
    n_rx: int = 60


@dataclass(frozen=True)
class FrequencyConfig:
    f_c: float = 28e9
    delta_f: float = 100e6
    K: int = 32


@dataclass(frozen=True)
class PilotConfig:
    T: int = 8
    seed: int = 0


@dataclass(frozen=True)
class LsmSection:
    zeta: float | None = None  # None: per-scene default
    epsilon: float = 1e-4
    q_trim: float = 0.05
    normalize: bool = True


@dataclass(frozen=True)
class InversionSection:
    method: str = "roi_qp"  # roi_qp | tikhonov | both
    alpha: float | None = None
    beta: float | None = None
    lower: float = -10.0
    upper: float = 10.0
    tau_rel: float = 1e-4
    max_iter: int = 10
    lcurve_min: float = 1e-6
    lcurve_max: float = 1.0
    lcurve_points: int = 7


@dataclass(frozen=True)
class ExperimentSection:
    snr_db: tuple = (5.0,)
    seeds: tuple = (0,)
    roi_mode: str = "lsm"  # lsm | schedule | full | oracle
    schedule_steps: int = 8
    schedule_margin: int = 1
    workers: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    array: ArrayConfig = field(default_factory=ArrayConfig)
    frequencies: FrequencyConfig = field(default_factory=FrequencyConfig)
    pilots: PilotConfig = field(default_factory=PilotConfig)
    lsm: LsmSection = field(default_factory=LsmSection)
    inversion: InversionSection = field(default_factory=InversionSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> "ExperimentConfig":
        s, inv, ex = self.scene, self.inversion, self.experiment
        checks = [
            (s.side_pixels >= 1, "scene.side_pixels must be >= 1"),
            (s.extent_m > 0, "scene.extent_m must be positive"),
            (s.refine >= 1, "scene.refine must be >= 1"),
            (self.array.radius_m > s.extent_m / math.sqrt(2), "array.radius_m must exceed the domain circumradius"),
            (self.array.n_tx >= 1 and self.array.n_rx >= 1, "array needs Tx and Rx elements"),
            (self.frequencies.K >= 1, "frequencies.K must be >= 1"),
            (self.frequencies.f_c > 0, "frequencies.f_c must be positive"),
            (self.pilots.T >= 1, "pilots.T must be >= 1"),
            (inv.max_iter >= 1, "inversion.max_iter (M) must be >= 1"),
            (inv.lower <= inv.upper, "inversion.lower exceeds inversion.upper"),
            (inv.method in ("roi_qp", "tikhonov", "both"), f"unknown inversion.method {inv.method!r}"),
            (ex.roi_mode in ("lsm", "schedule", "full", "oracle"), f"unknown experiment.roi_mode {ex.roi_mode!r}"),
            (len(ex.seeds) >= 1 and len(ex.snr_db) >= 1, "experiment needs at least one seed and one SNR"),
            (ex.workers >= 1, "experiment.workers must be >= 1"),
            (self.lsm.zeta is None or self.lsm.zeta > 0, "lsm.zeta must be positive"),
            (0 < self.lsm.q_trim <= 0.5, "lsm.q_trim must lie in (0, 0.5]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self


_SECTIONS = {f.name: f.default_factory for f in fields(ExperimentConfig)}


def _coerce(cls, key: str, raw: str):
    ftypes = {f.name: f for f in fields(cls)}
    if key not in ftypes:
        raise ConfigError(f"unknown key {key!r} in [{cls.__name__}]")
    default = getattr(cls(), key)
    raw = raw.strip()
    try:
        if raw.lower() in ("auto", "none", ""):
            if key in ("alpha", "beta", "eps_r", "zeta"):
                return None
            raise ConfigError(f"{key} requires a value")
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
        if isinstance(default, tuple):
            conv = int if key == "seeds" else float
            return tuple(conv(v) for v in raw.split(",") if v.strip())
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or default is None:
            return float(raw)
        return raw
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{key}: cannot parse {raw!r}") from exc


def apply_values(cfg: ExperimentConfig, values: dict[str, dict[str, str]]) -> ExperimentConfig:
    for section, kv in values.items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        sub = getattr(cfg, section)
        updates = {k: _coerce(type(sub), k, v) for k, v in kv.items()}
        cfg = replace(cfg, **{section: replace(sub, **updates)})
    return cfg


def parse_overrides(items) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {}
    for item in items or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        out.setdefault(section, {})[key] = value
    return out


def read_values(path=None, overrides=None) -> dict[str, dict[str, str]]:
    """Raw section/key strings from a config file followed by overrides."""
    values: dict[str, dict[str, str]] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} not found")
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        cp.optionxform = str  # keys such as K and T are case-sensitive
        try:
            cp.read(p)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        for s in cp.sections():
            values.setdefault(s, {}).update(cp.items(s))
    for s, kv in parse_overrides(overrides).items():
        values.setdefault(s, {}).update(kv)
    return values


def load_config(path=None, overrides=None, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = apply_values(base or ExperimentConfig(), read_values(path, overrides))
    return cfg.validate()


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for section, values in cfg.to_dict().items():
        lines.append(f"[{section}]")
        for k, v in values.items():
            if v is None:
                v = "auto"
            elif isinstance(v, (tuple, list)):
                v = ", ".join(str(x) for x in v)
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)
