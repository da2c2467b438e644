"""On-disk formats: JSON header + little-endian interleaved complex binary, and result CSVs."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .forward import Observation, OperatorBundle
from .roi import RoiIndexSet

_CDTYPE = np.dtype("<c16")  # re, im float64 pairs


def _write_pair(path, header: dict, arrays) -> tuple[Path, Path]:
    path = Path(path)
    hdr = path.with_suffix(".json")
    bin_ = path.with_suffix(".bin")
    with open(bin_, "wb") as fh:
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype=_CDTYPE).tobytes())
    hdr.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return hdr, bin_


def _read_pair(path):
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    data = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype=_CDTYPE).astype(complex)
    return header, data


def save_observation(obs: Observation, path) -> tuple[Path, Path]:
    K, L = obs.y.shape
    header = {
        "kind": "observation",
        "K": K,
        "rows_per_tone": L,
        "tones_hz": [float(f) for f in obs.tones],
        "seed": obs.seed,
        "snr_db": None if np.isinf(obs.snr_db) else obs.snr_db,
        "noise_var": obs.noise_var,
        "has_noiseless": obs.noiseless is not None,
        "layout": "tone-major, then pilot slot, then Rx; complex128 little-endian re/im",
    }
    arrays = [obs.y] + ([obs.noiseless] if obs.noiseless is not None else [])
    return _write_pair(path, header, arrays)


def load_observation(path) -> Observation:
    h, data = _read_pair(path)
    if h.get("kind") != "observation":
        raise ValueError("not an observation file")
    K, L = h["K"], h["rows_per_tone"]
    y = data[: K * L].reshape(K, L)
    clean = data[K * L: 2 * K * L].reshape(K, L) if h["has_noiseless"] else None
    snr = np.inf if h["snr_db"] is None else float(h["snr_db"])
    return Observation(y, snr, float(h["noise_var"]), int(h["seed"]), np.asarray(h["tones_hz"]), clean)


def save_bundle(bundle: OperatorBundle, path) -> tuple[Path, Path]:
    header = {
        "kind": "operator_bundle",
        "K": len(bundle.A_k),
        "rows_per_tone": int(bundle.A_k[0].shape[0]),
        "columns": [int(c) for c in bundle.columns],
        "born_only": bool(bundle.born_only),
        "layout": "per tone, row-major (rows x columns); complex128 little-endian re/im",
    }
    return _write_pair(path, header, bundle.A_k)


def load_bundle(path) -> OperatorBundle:
    h, data = _read_pair(path)
    if h.get("kind") != "operator_bundle":
        raise ValueError("not an operator bundle file")
    K, L, P = h["K"], h["rows_per_tone"], len(h["columns"])
    blocks = data.reshape(K, L, P)
    return OperatorBundle([blocks[k].copy() for k in range(K)], np.asarray(h["columns"], dtype=int), bool(h["born_only"]))


# ---------------------------------------------------------------- CSV


def fmt(x) -> str:
    """Shortest round-trip repr, so CSVs are byte-stable and parse back exactly."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return "" if x is None else str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            if isinstance(r, dict):
                r = [r.get(h) for h in header]
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_chi_csv(chi, path) -> Path:
    chi = np.asarray(chi)
    return write_csv(path, ["pixel_index", "re", "im"], ((i, float(c.real), float(c.imag)) for i, c in enumerate(chi)))


def read_chi_csv(path) -> np.ndarray:
    header, rows = read_csv(path)
    if header != ["pixel_index", "re", "im"]:
        raise ValueError("unexpected contrast CSV header")
    chi = np.zeros(len(rows), dtype=complex)
    for r in rows:
        chi[int(r[0])] = float(r[1]) + 1j * float(r[2])
    return chi


def write_iteration_log(result, path) -> Path:
    rows = [(n + 1, res, d) for n, (res, d) in enumerate(result.per_iteration)]
    return write_csv(path, ["iteration", "residual_norm", "update_norm"], rows)


def config_hash(config_dict: dict) -> str:
    blob = json.dumps(config_dict, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_manifest(path, config_dict: dict, seeds=None, roi: RoiIndexSet | None = None, extra: dict | None = None) -> Path:
    path = Path(path)
    m = {"config": config_dict, "config_hash": config_hash(config_dict), "seeds": seeds}
    if roi is not None:
        m["roi_pixels"] = roi.P
        m["roi_hash"] = roi.digest()
    if extra:
        m.update(extra)
    path.write_text(json.dumps(m, indent=2, sort_keys=True, default=str) + "\n")
    return path
