"""CSV/JSON emission and loading of result objects, plus run manifests.

Floats are written with ``repr`` so every file round-trips bit for bit.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .halfspace import C2Result, ProfileCurve
from .kernels import StableParams
from .sampler import McEstimate
from .trace import TraceCurve

MANIFEST_SCHEMA = 1

TRACE_COLUMNS = ["t", "Z_mean", "Z_stderr", "rescaled", "c2hat", "c2hat_err"]


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_text(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def read_csv_text(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        parsed = {}
        for k, v in row.items():
            try:
                parsed[k] = int(v) if v.lstrip("-").isdigit() else float(v)
            except ValueError:
                parsed[k] = v
        out.append(parsed)
    return out


def jsonable(obj):
    """Plain-JSON view of results (dataclasses, arrays, numpy scalars)."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        # JSON has no inf/nan; keep them readable and reversible
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def json_text(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# result objects


def estimate_from_dict(d) -> McEstimate:
    return McEstimate(
        float(d["mean"]), float(d["std_error"]), int(d["n"]), int(d.get("flagged", 0)), float(d.get("residual", 0.0))
    )


def params_from_dict(d) -> StableParams:
    return StableParams(int(d["d"]), float(d["alpha"]))


def trace_curve_to_dict(curve: TraceCurve) -> dict:
    return {
        "params": jsonable(curve.params),
        "volume": curve.volume,
        "boundary_measure": curve.boundary_measure,
        "t": curve.t.tolist(),
        "z_mean": curve.z_mean.tolist(),
        "z_stderr": curve.z_stderr.tolist(),
        "n_paths": curve.n_paths.tolist(),
        "rows": curve.rows(),
        "strata": [
            [
                {"lo": s.lo, "hi": s.hi, "volume": s.volume, "n_paths": s.n_paths, "mean": jsonable(s.mean)}
                for s in est.strata
            ]
            for est in curve.details
        ],
    }


def trace_curve_from_dict(d) -> TraceCurve:
    return TraceCurve(
        params_from_dict(d["params"]),
        float(d["volume"]),
        float(d["boundary_measure"]),
        np.array(d["t"], dtype=float),
        np.array(d["z_mean"], dtype=float),
        np.array(d["z_stderr"], dtype=float),
        np.array(d["n_paths"], dtype=int),
    )


def trace_curve_from_csv(text: str, params: StableParams, volume: float, boundary_measure: float) -> TraceCurve:
    rows = read_csv_text(text)
    return TraceCurve(
        params,
        volume,
        boundary_measure,
        np.array([r["t"] for r in rows], dtype=float),
        np.array([r["Z_mean"] for r in rows], dtype=float),
        np.array([r["Z_stderr"] for r in rows], dtype=float),
        np.zeros(len(rows), dtype=int),
    )


def profile_rows(curve: ProfileCurve):
    return [{"q": q, "f": m, "stderr": s} for q, m, s in zip(curve.q, curve.mean, curve.stderr)]


def profile_to_dict(curve: ProfileCurve) -> dict:
    return {
        "params": jsonable(curve.params),
        "q": curve.q.tolist(),
        "mean": curve.mean.tolist(),
        "stderr": curve.stderr.tolist(),
        "dt": curve.dt,
        "n_paths": curve.n_paths,
        "extras": jsonable(curve.extras),
    }


def profile_from_dict(d) -> ProfileCurve:
    extras = dict(d.get("extras", {}))
    for k in ("cumulative_mean", "cumulative_stderr"):
        if k in extras:
            extras[k] = np.array(extras[k], dtype=float)
    if "path_integral" in extras:
        extras["path_integral"] = estimate_from_dict(extras["path_integral"])
    for lvl in extras.get("refinement", []):
        lvl["path_integral"] = estimate_from_dict(lvl["path_integral"])
    params = params_from_dict(d["params"]) if d.get("params") else None
    return ProfileCurve(
        np.array(d["q"], dtype=float),
        np.array(d["mean"], dtype=float),
        np.array(d["stderr"], dtype=float),
        float(d["dt"]),
        int(d["n_paths"]),
        params,
        extras,
    )


def c2_from_dict(d) -> C2Result:
    kw = {f.name: d[f.name] for f in dataclasses.fields(C2Result) if f.name in d}
    if kw.get("path_integral") is not None:
        kw["path_integral"] = estimate_from_dict(kw["path_integral"])
    kw["refinement"] = [
        {**r, "path_integral": estimate_from_dict(r["path_integral"])} for r in kw.get("refinement", [])
    ]
    return C2Result(**kw)


C2_COLUMNS = [
    "value",
    "total_error",
    "head",
    "head_error",
    "quadrature_error",
    "tail_bound",
    "small_q",
    "small_q_error",
    "q_min",
    "q_cut",
    "envelope_constant",
    "n_paths",
    "dt",
]


# ---------------------------------------------------------------------------
# manifests


def manifest(command: str, config: dict, outputs: list[str], status: str, results: dict | None = None) -> dict:
    return {
        "schema_version": MANIFEST_SCHEMA,
        "library_version": __version__,
        "command": command,
        "config": jsonable(config),
        "outputs": outputs,
        "status": status,
        "results": jsonable(results or {}),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="")
