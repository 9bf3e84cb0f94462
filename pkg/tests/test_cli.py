import json

import pandas as pd
import pytest

from src.cli import EXIT_ERROR, EXIT_OK, main


@pytest.fixture
def run_log(tmp_path, monkeypatch):
    path = tmp_path / "runs.log"
    monkeypatch.setenv("FBMS_RUN_LOG", str(path))
    return path


def _events(path):
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f]


def test_constants_command(run_log, tmp_path, capsys):
    out = tmp_path / "constants.json"
    assert main(["--out", str(out), "constants"]) == EXIT_OK
    assert "Critical catenoid" in capsys.readouterr().out
    data = json.loads(out.read_text())
    assert round(data["x_crit"], 3) == 0.986
    events = _events(run_log)
    assert events[-1]["event"] == "constants"
    assert events[-1]["exit_code"] == EXIT_OK


def test_family_command_writes_csv(run_log, tmp_path):
    out = tmp_path / "tables" / "family.csv"
    assert main(["--out", str(out), "family", "--start", "0.0", "--stop", "0.2", "--num", "3"]) == EXIT_OK
    table = pd.read_csv(out)
    assert list(table.columns) == ["theta", "r_theta", "h"]
    assert len(table) == 3


def test_family_out_of_range(run_log):
    assert main(["family", "--start", "0.0", "--stop", "2.0", "--num", "3"]) == EXIT_ERROR
    assert "error" in _events(run_log)[-1]


def test_bad_configuration(run_log, capsys):
    assert main(["--m", "2", "constants"]) == EXIT_ERROR
    assert "Configuration error" in capsys.readouterr().err


def test_build_command(run_log, tmp_path):
    out = tmp_path / "m3.obj"
    assert main(["--m", "3", "--res", "4", "--out", str(out), "build"]) == EXIT_OK
    assert out.exists()
    assert (tmp_path / "m3.meta.json").exists()
    assert _events(run_log)[-1]["result"]["euler_characteristic"] == -5


def test_run_server_reads_environment(monkeypatch):
    import run_server

    calls = {}
    monkeypatch.setattr(run_server.uvicorn, "run", lambda app, **kwargs: calls.update(app=app, **kwargs))
    monkeypatch.setattr(run_server, "load_dotenv", lambda **kwargs: False)
    monkeypatch.delenv("API_HOST", raising=False)
    monkeypatch.setenv("API_PORT", "8123")
    monkeypatch.setenv("API_RELOAD", "true")
    assert run_server.main() == 0
    assert calls == {"app": "api.main:app", "host": "127.0.0.1", "port": 8123, "reload": True}
