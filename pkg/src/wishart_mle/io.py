"""CSV and JSON persistence for paths, statistics and estimates."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .exceptions import ValidationError
from .model import WishartSpec
from .pathfun import PathStats
from .sim import SamplePath

FLOAT_FMT = "%.17g"


def _header(d: int) -> list[str]:
    return ["t"] + [f"X_{i + 1}{j + 1}" for i in range(d) for j in range(d)]


def write_path_csv(path: SamplePath, dest) -> None:
    """One row per grid node: ``t`` then the row-major entries of the state."""
    d = path.d
    flat = path.states.reshape(len(path.times), d * d)
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_header(d))
        for t, row in zip(path.times, flat):
            w.writerow([FLOAT_FMT % t] + [FLOAT_FMT % v for v in row])


def read_path_csv(src, spec: WishartSpec | None = None) -> SamplePath:
    with open(src, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError("empty path file")
    head, body = rows[0], rows[1:]
    d = int(round(np.sqrt(len(head) - 1)))
    if head != _header(d):
        raise ValidationError("unexpected path header")
    data = np.array(body, dtype=float)
    return SamplePath(spec=spec, times=data[:, 0], states=data[:, 1:].reshape(-1, d, d), meta={})


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def dump_json(obj, dest) -> None:
    """Deterministic JSON (sorted keys, shortest round-trip floats)."""
    Path(dest).write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n")


def stats_to_dict(stats: PathStats) -> dict:
    return _jsonable({
        "T": stats.T, "N": stats.N, "x0": stats.x0, "X_T": stats.X_T, "R_T": stats.R_T,
        "Qinv_T": stats.Qinv_T, "Z_T": stats.Z_T, "qcov": stats.qcov, "flags": stats.flags,
    })


def stats_from_dict(data: dict) -> PathStats:
    def arr(key):
        v = data.get(key)
        return None if v is None else np.asarray(v, float)

    X_T = arr("X_T")
    x0 = arr("x0") if "x0" in data else np.zeros_like(X_T)
    return PathStats(T=float(data["T"]), N=int(data.get("N", 0)), x0=x0, X_T=X_T, R_T=arr("R_T"),
                     Qinv_T=data.get("Qinv_T"), Z_T=data.get("Z_T"), qcov=arr("qcov"),
                     flags=dict(data.get("flags", {})))


def spec_from_config(data: dict) -> WishartSpec:
    return WishartSpec.from_dict(data)
