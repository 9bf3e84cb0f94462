import os
import json
import datetime
from typing import List, Dict, Any, Optional, Tuple

import numpy as np
import pandas as pd


def ensure_directory_exists(directory_path: str):
    """Create directory if it doesn't exist."""
    if directory_path and not os.path.exists(directory_path):
        os.makedirs(directory_path)


def _to_builtin(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if hasattr(value, "model_dump"):
        return value.model_dump()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def save_json(data: Dict[str, Any], filepath: str):
    """Save data to JSON file."""
    ensure_directory_exists(os.path.dirname(filepath))
    with open(filepath, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, ensure_ascii=False, default=_to_builtin)


def load_json(filepath: str) -> Dict[str, Any]:
    """Load data from JSON file."""
    if not os.path.exists(filepath):
        raise FileNotFoundError(f"File not found: {filepath}")
    with open(filepath, 'r', encoding='utf-8') as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"Invalid JSON in {filepath}: {str(e)}")


# ------------------------------------------------------------------- meshes

def meta_path(obj_path: str) -> str:
    stem, _ = os.path.splitext(obj_path)
    return stem + ".meta.json"


def write_obj(vertices: np.ndarray, faces: np.ndarray, filepath: str, header: Optional[str] = None):
    """ASCII OBJ, 1-based indices, vertex order as given."""
    ensure_directory_exists(os.path.dirname(filepath))
    lines = []
    if header:
        lines += [f"# {line}" for line in header.splitlines()]
    lines += ["v %.17g %.17g %.17g" % tuple(p) for p in np.asarray(vertices, dtype=float)]
    lines += ["f %d %d %d" % tuple(f) for f in np.asarray(faces, dtype=np.int64) + 1]
    with open(filepath, 'w', encoding='utf-8') as f:
        f.write("\n".join(lines) + "\n")


def read_obj(filepath: str) -> Tuple[np.ndarray, np.ndarray]:
    """Read v/f records; polygon faces are fanned, texture/normal indices ignored."""
    if not os.path.exists(filepath):
        raise FileNotFoundError(f"OBJ file not found: {filepath}")

    vertices: List[List[float]] = []
    faces: List[List[int]] = []
    with open(filepath, 'r', encoding='utf-8') as f:
        for number, line in enumerate(f, start=1):
            parts = line.split()
            if not parts or parts[0].startswith('#'):
                continue
            try:
                if parts[0] == 'v':
                    vertices.append([float(x) for x in parts[1:4]])
                elif parts[0] == 'f':
                    idx = [int(token.split('/')[0]) for token in parts[1:]]
                    idx = [i - 1 if i > 0 else len(vertices) + i for i in idx]
                    for k in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
            except ValueError as e:
                raise ValueError(f"Malformed OBJ record at {filepath}:{number}: {str(e)}")

    return np.array(vertices, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def mesh_metadata(mesh) -> Dict[str, Any]:
    """Sidecar records of a SurfaceMesh: parameters, regions, s, boundary labels, preimages, generators."""
    P = mesh.params
    meta: Dict[str, Any] = {
        "n_vertices": mesh.n_vertices,
        "n_faces": mesh.n_faces,
        "res": mesh.res,
        "region": mesh.region,
        "s": mesh.s,
        "boundary": mesh.boundary,
        "chart": mesh.chart,
        "spoint": np.where(np.isfinite(mesh.spoint), mesh.spoint, None).tolist(),
    }
    if P is not None:
        meta["params"] = {"theta": P.theta, "m": P.m, "tau": P.tau, "a": P.a, "delta_s": P.delta_s,
                          "lambda": P.lam, "blend": P.blend, "seam": P.seam}
    if mesh.orbits is not None and mesh.orbits.matrices is not None:
        meta["generators"] = mesh.orbits.matrices
        meta["characters"] = mesh.orbits.characters
    return meta


def export_mesh(mesh, filepath: str) -> Tuple[str, str]:
    """Write the OBJ and its metadata sidecar; returns both paths."""
    header = None
    if mesh.params is not None:
        header = f"free boundary surface m={mesh.params.m} theta={mesh.params.theta:.17g} res={mesh.res}"
    write_obj(mesh.vertices, mesh.faces, filepath, header=header)
    sidecar = meta_path(filepath)
    save_json(mesh_metadata(mesh), sidecar)
    return filepath, sidecar


# ------------------------------------------------------------------ reports

def history_frame(report) -> pd.DataFrame:
    """Iteration history of a SolveReport (or its dict) as a DataFrame."""
    rows = report["iterations"] if isinstance(report, dict) else report.iterations
    return pd.DataFrame(rows)


def emit_report(report, filepath: str):
    """Write a report as JSON; SolveReport objects go through as_dict()."""
    data = report.as_dict() if hasattr(report, "as_dict") else dict(report)
    save_json(data, filepath)


def log_run_event(event: str, payload: Dict[str, Any], elapsed: float, log_file: str = "logs/runs.log"):
    """Append one JSON line per event."""
    log_entry = {
        'timestamp': datetime.datetime.now().isoformat(),
        'event': event,
        **payload,
        'elapsed_ms': round(elapsed * 1000, 2)
    }

    ensure_directory_exists(os.path.dirname(log_file))

    with open(log_file, 'a', encoding='utf-8') as f:
        f.write(json.dumps(log_entry, default=_to_builtin) + '\n')
