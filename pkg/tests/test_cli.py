import csv
import io
import json
import shutil
from importlib import resources

import numpy as np
import pytest

from helpers import TINY_SPEC
from rownav import cli, pgm

FIXTURES = resources.files("rownav").joinpath("fixtures")


@pytest.fixture
def fixtures(tmp_path):
    d = tmp_path / "fx"
    d.mkdir()
    for p in FIXTURES.iterdir():
        if p.name.endswith((".pgm", ".json")):
            (d / p.name).write_bytes(p.read_bytes())
    return d


def test_run_tiny_spec(tmp_path, capsys):
    spec = tmp_path / "tiny.yaml"
    spec.write_text(TINY_SPEC.replace("seeds: [0, 1]", "seeds: [0]"))
    assert cli.main(["run", str(spec), "--out", str(tmp_path / "out"), "-q"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("world,method,runs,completed")
    assert (tmp_path / "out" / "summary.csv").read_text() == out


def test_run_reports_failed_episodes(tmp_path, capsys):
    spec = tmp_path / "tiny.yaml"
    spec.write_text(TINY_SPEC.replace("duration: 12.0", "duration: 0.5").replace("seeds: [0, 1]", "seeds: [0]"))
    assert cli.main(["run", str(spec), "--out", str(tmp_path / "out")]) == 1
    assert "failed: Short/SegMin/seed0 (timeout)" in capsys.readouterr().err


@pytest.mark.parametrize(
    "text,needle",
    [
        (TINY_SPEC.replace("variants: [SegMin, SegZeros]", "variants: []"), "tiny.yaml:12:"),
        (TINY_SPEC.replace("name: tiny", "name: tiny\nspeed: 3"), "unknown key 'speed'"),
        ("worlds: [", "malformed YAML"),
    ],
)
def test_run_bad_spec_is_input_error(tmp_path, capsys, text, needle):
    spec = tmp_path / "tiny.yaml"
    spec.write_text(text)
    assert cli.main(["run", str(spec)]) == 2
    assert needle in capsys.readouterr().err


def test_run_missing_file(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope.yaml")]) == 2


def test_builtin_spec_names():
    assert {"default", "full"} <= set(cli.builtin_specs())
    assert cli._resolve_spec("default").name == "default"


def test_bad_arguments():
    assert cli.main([]) == 2
    assert cli.main(["run", "x.yaml", "--jobs", "0"]) == 2
    assert cli.main(["bench", "--frames", "0"]) == 2
    assert cli.main(["gen-world", "Orchard"]) == 2


def test_oracle_on_shipped_fixtures(fixtures, capsys):
    assert cli.main(["oracle", str(fixtures)]) == 0
    assert "7/7 fixtures match" in capsys.readouterr().out


def test_oracle_empty_dir(tmp_path, capsys):
    assert cli.main(["oracle", str(tmp_path)]) == 2
    assert "no fixtures" in capsys.readouterr().err
    assert cli.main(["oracle", str(tmp_path / "missing")]) == 2


def test_oracle_corrupt_fixture(fixtures):
    (fixtures / "pergola_mask1.pgm").write_bytes(b"P5\n3 3\n255\nxx")
    assert cli.main(["oracle", str(fixtures)]) == 2


def test_oracle_missing_depth(fixtures):
    (fixtures / "pergola_depth.pgm").unlink()
    assert cli.main(["oracle", str(fixtures)]) == 2


def test_oracle_bad_params(fixtures):
    (fixtures / "pergola.json").write_text(json.dumps({"smoothing_window": 4}))
    assert cli.main(["oracle", str(fixtures)]) == 2


def test_oracle_shape_mismatch(fixtures):
    pgm.write_mask(fixtures / "pergola_mask0.pgm", np.zeros((3, 3), np.uint8))
    assert cli.main(["oracle", str(fixtures)]) == 2


def test_oracle_flags_broken_smoothing(fixtures, capsys, monkeypatch):
    import rownav.perception as perception

    real = perception.smooth_histogram
    monkeypatch.setattr(perception, "smooth_histogram", lambda h, n: real(h, n) + 1e-6)
    assert cli.main(["oracle", str(fixtures)]) == 1
    out = capsys.readouterr().out
    assert "first differing stage smooth" in out


def test_bench_csv(tmp_path, capsys):
    assert cli.main(["bench", "--frames", "5", "--out", str(tmp_path / "b.csv")]) == 0
    text = capsys.readouterr().out
    rows = list(csv.DictReader(io.StringIO(text)))
    stages = {r["stage"] for r in rows}
    assert {"render", "perceive[SegMin]", "perceive[SegMinD]", "perceive[SegZeros]", "control"} <= stages
    assert all(float(r["p99_ms"]) >= float(r["p50_ms"]) >= 0 for r in rows)
    assert (tmp_path / "b.csv").read_text() == text


def test_bench_over_budget(capsys):
    assert cli.main(["bench", "--frames", "3", "--budget-ms", "0.000001"]) == 1
    assert "over budget" in capsys.readouterr().err


def test_gen_world_json(tmp_path, capsys):
    assert cli.main(["gen-world", "PearField", "--seed", "3"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["config"]["crop"] == "PearField" and data["primitives"]
    line = np.array(data["centerline"])
    np.testing.assert_allclose(line[:, 1], 0.0, atol=1e-12)
    assert cli.main(["gen-world", "CommonVineyard", "--curvature", "0.05", "--out", str(tmp_path / "w.json")]) == 0
    assert json.loads((tmp_path / "w.json").read_text())["config"]["curvature"] == 0.05
    assert cli.main(["gen-world", "CommonVineyard", "--curvature", "5"]) == 2


def test_version(capsys):
    assert cli.main(["--version"]) == 0
    assert capsys.readouterr().out.startswith("rownav ")


def test_console_script_installed():
    assert shutil.which("rownav") is not None
