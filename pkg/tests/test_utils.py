import json

import numpy as np
import pytest

from src.driver import SolveReport
from src.mesher import disk_mesh
from src.utils import (emit_report, export_mesh, history_frame, load_json, log_run_event, meta_path, read_obj,
                       save_json, write_obj)


def test_obj_round_trip(tmp_path):
    disk = disk_mesh(0.2, n_rings=3)
    path = str(tmp_path / "disk.obj")
    write_obj(disk.vertices, disk.faces, path, header="disk\nthree rings")
    vertices, faces = read_obj(path)
    assert np.array_equal(vertices, disk.vertices)
    assert np.array_equal(faces, disk.faces)


def test_obj_quads_are_fanned(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n")
    vertices, faces = read_obj(str(path))
    assert vertices.shape == (4, 3)
    assert faces.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_obj_malformed(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 zero\n")
    with pytest.raises(ValueError):
        read_obj(str(path))


def test_obj_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_obj(str(tmp_path / "none.obj"))


def test_json_with_numpy(tmp_path):
    path = str(tmp_path / "sub" / "data.json")
    save_json({"a": np.arange(3), "b": np.float64(0.5), "c": np.bool_(True), "d": np.int64(7)}, path)
    assert load_json(path) == {"a": [0, 1, 2], "b": 0.5, "c": True, "d": 7}
    with pytest.raises(FileNotFoundError):
        load_json(str(tmp_path / "missing.json"))


def test_log_run_event_appends(tmp_path):
    log_file = str(tmp_path / "logs" / "runs.log")
    log_run_event("build", {"m": 3}, 0.25, log_file=log_file)
    log_run_event("verify", {"m": 3, "passed": np.bool_(True)}, 0.5, log_file=log_file)
    with open(log_file, encoding="utf-8") as f:
        entries = [json.loads(line) for line in f]
    assert [e["event"] for e in entries] == ["build", "verify"]
    assert entries[0]["elapsed_ms"] == 250.0
    assert entries[1]["passed"] is True


def test_export_plain_mesh(tmp_path):
    disk = disk_mesh(0.0, n_rings=3)
    obj, sidecar = export_mesh(disk, str(tmp_path / "disk.obj"))
    assert sidecar == meta_path(obj)
    meta = load_json(sidecar)
    assert meta["n_vertices"] == disk.n_vertices
    assert "params" not in meta
    assert meta["spoint"][0] == [None, None, None]


def test_export_surface_metadata(tmp_path, surface):
    obj, sidecar = export_mesh(surface, str(tmp_path / "m3.obj"))
    meta = load_json(sidecar)
    assert meta["params"]["m"] == 3
    assert len(meta["generators"]) == 12
    vertices, faces = read_obj(obj)
    assert np.array_equal(faces, surface.faces)


def test_emit_report(tmp_path):
    report = SolveReport(config={"m": 3})
    report.record(iteration=1, phi_norm=0.1, theta=0.0, mu=0.0, max_H=1.0, max_Theta=0.0, area=1.0)
    report.timing["total"] = 2.0
    path = str(tmp_path / "report.json")
    emit_report(report, path)
    data = load_json(path)
    assert "timing" not in data
    assert list(history_frame(data).columns) == ["iteration", "phi_norm", "theta", "mu", "max_H",
                                                 "max_Theta", "area"]
