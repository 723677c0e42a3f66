"""File formats: chain binaries with JSON sidecars, canonical JSON and CSV."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from cmrf.samplers import Chain


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dump_json(path, obj) -> None:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    Path(path).write_text(json.dumps(_plain(obj), indent=1, sort_keys=True) + "\n")


def load_json(path):
    return json.loads(Path(path).read_text())


def write_csv(path, header, columns) -> None:
    """Columns of equal length; floats written with ``repr`` so they round-trip."""
    columns = [np.asarray(c) for c in columns]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) if np.issubdtype(type(v), np.floating) else int(v)
                        for v in row])


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=np.float64).reshape(len(body), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def write_chain(stem, chain: Chain) -> None:
    """``<stem>.bin`` holds little-endian float64 samples (row-major);
    ``<stem>.json`` the sidecar metadata."""
    stem = Path(stem)
    Path(f"{stem}.bin").write_bytes(np.ascontiguousarray(chain.samples, dtype="<f8").tobytes())
    meta = chain.metadata()
    meta["acceptance_rate"] = chain.acceptance_rate
    meta["log_density"] = chain.log_density
    meta["tuning"] = chain.tuning
    meta["final_tuning"] = chain.final_tuning
    dump_json(f"{stem}.json", meta)


def read_chain(stem) -> Chain:
    stem = Path(stem)
    meta = load_json(f"{stem}.json")
    rows, cols = meta["shape"]
    samples = np.frombuffer(Path(f"{stem}.bin").read_bytes(), dtype="<f8")
    if samples.shape[0] != rows * cols:
        raise ValueError(f"{stem}.bin does not match the shape in its sidecar")
    return Chain(samples.reshape(rows, cols).astype(np.float64), meta["seed"], meta["algorithm"],
                 meta["thin"], np.asarray(meta["acceptance_rate"]), meta["adaptation_length"],
                 np.asarray(meta["log_density"], dtype=np.float64), meta["divergences"],
                 meta["capped_stages"], meta.get("tuning", {}), meta.get("final_tuning", {}))
