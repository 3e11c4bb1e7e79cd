"""
Run artifacts: CSV time series and JSON documents of a run directory
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from config.settings import (
    BALANCE_FILE,
    CONFIG_FILE,
    EULER_FILE,
    FLOAT_FORMAT,
    HISTORY_FILE,
    MESH_FILE,
    SNAPSHOT_SCHEMA,
    SNAPSHOTS_FILE,
    STABILITY_FILE,
    TRACE_FILE,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ArtifactError(ValueError):
    """Raised when a run directory is missing an artifact or holds an unreadable one"""
    pass


def _plain(value: Any) -> Any:
    """JSON-ready copy: arrays to lists, numpy scalars to Python, NaN/inf to null"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(data: Any, path: PathLike):
    """Write a JSON document; floats keep their round-trip repr"""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_plain(data), f, indent=1, allow_nan=False)


def read_json(path: PathLike) -> Any:
    """
    Raises:
        ArtifactError: If the file is missing or not JSON
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as exc:
        raise ArtifactError(f"missing artifact: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: not valid JSON ({exc})") from exc


def write_frame(frame: pd.DataFrame, path: PathLike):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def read_frame(path: PathLike) -> pd.DataFrame:
    """
    Raises:
        ArtifactError: If the file is missing or empty
    """
    try:
        return pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError as exc:
        raise ArtifactError(f"missing artifact: {path}") from exc
    except pd.errors.EmptyDataError as exc:
        raise ArtifactError(f"{path}: empty table") from exc


def snapshot_knots(times: Sequence[float], requested: Sequence[float]) -> List[int]:
    """Greatest knot ≤ t for every requested t (first and last knot when none are requested)"""
    times = np.asarray(times, dtype=float)
    if not len(requested):
        return sorted({0, len(times) - 1})
    horizon = times[-1]
    knots = []
    for t in requested:
        index = int(np.searchsorted(times, t + 1e-12 * horizon, side="right")) - 1
        knots.append(min(max(index, 0), len(times) - 1))
    return sorted(set(knots))


def snapshots_document(trace, mesh, requested: Sequence[float] = ()) -> Dict:
    """Field snapshots: node coordinates plus u and γ at the selected knots"""
    pairs = mesh.pairs
    return {
        "schema": SNAPSHOT_SCHEMA,
        "dimension": mesh.dimension,
        "field_dimension": mesh.field_dimension,
        "nodes": mesh.nodes,
        "elements": mesh.elements,
        "interface_plus": pairs.plus,
        "interface_minus": pairs.minus,
        "snapshots": [
            {"knot": k, "time": trace.times[k], "u": trace.u[k], "gamma": trace.gamma[k]}
            for k in snapshot_knots(trace.times, requested)
        ],
    }


def history_document(trace, mesh) -> Dict:
    """γ and φ([u]) per knot and interface node"""
    pairs = mesh.pairs
    return {
        "plus": pairs.plus,
        "minus": pairs.minus,
        "weights": pairs.weights,
        "tied": pairs.tied,
        "times": trace.times,
        "gamma": np.array(trace.gamma),
        "phi": np.array(trace.phi_jump),
    }


def write_run(result, out_dir: PathLike, snapshots: Sequence[float] = ()) -> Dict[str, Path]:
    """
    Write every artifact of a finished run

    Args:
        result: RunResult
        out_dir: Run directory (created if missing)
        snapshots: Times whose fields go into the snapshot document

    Returns:
        Mapping of artifact name to path
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace, mesh = result.trace, result.problem.mesh
    paths = {name: out / name for name in (CONFIG_FILE, MESH_FILE, TRACE_FILE, BALANCE_FILE, SNAPSHOTS_FILE,
                                           HISTORY_FILE, STABILITY_FILE, EULER_FILE)}

    write_json(result.config.to_dict(), paths[CONFIG_FILE])
    write_json(mesh.to_dict(), paths[MESH_FILE])

    frame = trace.to_frame()
    if result.euler:
        worst = {r.time: r.worst for r in result.euler}
        frame["euler_worst"] = [worst.get(t, np.nan) for t in trace.times]
    write_frame(frame, paths[TRACE_FILE])
    write_frame(result.balance.frame, paths[BALANCE_FILE])

    write_json(snapshots_document(trace, mesh, snapshots), paths[SNAPSHOTS_FILE])
    write_json(history_document(trace, mesh), paths[HISTORY_FILE])
    write_json({
        "initial": trace.metadata.get("initial_stability"),
        "reports": [r.to_dict() for r in trace.stability],
        "apriori": trace.bounds.to_dict() if trace.bounds else None,
    }, paths[STABILITY_FILE])
    write_json({
        "example_mode": result.config.verification.euler_example,
        "reports": [r.to_dict() for r in result.euler],
    }, paths[EULER_FILE])
    logger.info("wrote %d artifacts to %s", len(paths), out)
    return paths


@dataclass
class RunArtifacts:
    """A run directory read back for verification"""

    trace: pd.DataFrame
    history: Dict[str, np.ndarray]
    config: Dict = field(default_factory=dict)
    euler: List[Dict] = field(default_factory=list)
    stability: Dict = field(default_factory=dict)


def load_run(out_dir: PathLike) -> RunArtifacts:
    """
    Read the artifacts ``verify`` needs

    Raises:
        ArtifactError: If a required artifact is missing or malformed
    """
    out = Path(out_dir)
    if not out.is_dir():
        raise ArtifactError(f"run directory not found: {out}")
    trace = read_frame(out / TRACE_FILE)
    missing = [c for c in ("time", "total", "theta", "dissipation_increment") if c not in trace.columns]
    if missing:
        raise ArtifactError(f"{out / TRACE_FILE}: missing columns {missing}")
    raw = read_json(out / HISTORY_FILE)
    try:
        history = {
            "times": np.asarray(raw["times"], dtype=float),
            "gamma": np.asarray(raw["gamma"], dtype=float),
            "phi": np.asarray(raw["phi"], dtype=float),
            "weights": np.asarray(raw["weights"], dtype=float),
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"{out / HISTORY_FILE}: malformed interface history ({exc})") from exc
    if history["gamma"].shape != history["phi"].shape or history["gamma"].shape[0] != len(trace):
        raise ArtifactError(f"{out / HISTORY_FILE}: history does not match the trace knots")
    euler_path = out / EULER_FILE
    euler = read_json(euler_path).get("reports", []) if euler_path.exists() else []
    stability_path = out / STABILITY_FILE
    stability = read_json(stability_path) if stability_path.exists() else {}
    return RunArtifacts(trace=trace, history=history, config=read_json(out / CONFIG_FILE),
                        euler=euler, stability=stability)
