"""Config schema, CSV/manifest outputs and the command line."""

import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsymp import fixture_path
from qsymp.cli import COMMANDS, main
from qsymp.config import KINDS, from_dict, load_config
from qsymp.errors import ConfigError
from qsymp.io import file_digest, fmt, read_csv, write_csv, write_svg_lines
from qsymp.parallel import map_shards, pairwise_reduce, shard_sizes

FIXTURES = ["periodic_baseline.json", "flagship_density.json", "flagship_map.json", "shear_flow.json",
            "flagship_flow.json", "pb2d_quasiperiodic.json", "pb2d_periodic.json"]

PERIODIC = {
    "kind": "ergodic-density", "d": 1, "N": 2, "A": [[1, 0], [0, 1]], "base": [0.1, 0.3],
    "field": [{"m": [1, 0], "c": 0.05}, {"m": [0, 1], "c": 0.05}], "half_widths": [1, 2],
}


@pytest.mark.parametrize("name", FIXTURES)
def test_fixtures_round_trip(name):
    cfg = load_config(fixture_path(name))
    again = from_dict(json.loads(cfg.to_json()))
    assert again.to_json() == cfg.to_json()
    assert cfg.kind in KINDS


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError) as exc:
        from_dict({**PERIODIC, "colour": "red"})
    assert "colour" in str(exc.value)


def test_mean_mode_rejected():
    doc = {**PERIODIC, "field": PERIODIC["field"] + [{"m": [0, 0], "c": 0.1}]}
    with pytest.raises(ConfigError) as exc:
        from_dict(doc)
    assert "mean-zero" in str(exc.value)


def test_dimension_error_and_all_violations_listed():
    doc = {**PERIODIC, "N": 1, "A": [[1, 0]], "base": [0.1], "field": [{"m": [1], "c": 0.05}],
           "half_widths": [2, 1]}
    with pytest.raises(ConfigError) as exc:
        from_dict(doc)
    v = exc.value.details["violations"]
    assert any("dimension error" in m for m in v)
    assert any("increasing" in m for m in v)


def test_declared_ergodic_resonance():
    doc = {**PERIODIC, "N": 3, "A": [[1, 0], [0, 1], [1, 1]], "base": [0, 0, 0],
           "field": [{"m": [1, 0, 0], "c": 0.05}], "declared_ergodic": True, "ergodic_radius": 2}
    with pytest.raises(ConfigError) as exc:
        from_dict(doc)
    assert "declared ergodic" in str(exc.value)


def test_twist_margin_is_an_error_for_maps_only():
    strong = [{"m": [1, 1], "c": 0.2}]
    with pytest.raises(ConfigError):
        from_dict({**PERIODIC, "kind": "fixed-points", "field": strong})
    cfg = from_dict({**PERIODIC, "field": strong})
    assert any("twist margin" in w for w in cfg.warnings)


def test_flow_step_must_divide_one():
    doc = json.loads(fixture_path("shear_flow.json").read_text())
    with pytest.raises(ConfigError):
        from_dict({**doc, "step": 0.3})


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_round_trips_doubles(v):
    assert float(fmt(v)) == v


def test_csv_digest(tmp_path):
    d1 = write_csv(tmp_path / "a.csv", ["x", "y"], [(1, 0.1), (2, np.float64(1 / 3))])
    d2 = write_csv(tmp_path / "b.csv", ["x", "y"], [(1, 0.1), (2, 1 / 3)])
    assert d1 == d2 == file_digest(tmp_path / "a.csv")
    header, rows = read_csv(tmp_path / "a.csv")
    assert header == ["x", "y"] and float(rows[1][1]) == 1 / 3


def test_svg_written(tmp_path):
    write_svg_lines(tmp_path / "p.svg", [([0, 1, 2], [1, 2, 1], "s")], title="t", markers=[(1, 2, "red")])
    assert (tmp_path / "p.svg").read_text().startswith("<svg")


def test_pairwise_reduce_and_shards():
    assert pairwise_reduce([1, 2, 3, 4, 5]) == 15
    assert shard_sizes(10, 3) == [4, 3, 3]
    assert map_shards(lambda i: i * i, range(5), threads=3) == [0, 1, 4, 9, 16]
    with pytest.raises(ValueError):
        pairwise_reduce([])


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_cli_bad_config_exit_code(tmp_path, capsys):
    p = _write(tmp_path, {**PERIODIC, "bogus": 1})
    assert main(["ergodic-density", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert json.loads(err.strip().splitlines()[-1])["code"] == "config_invalid"
    assert main(["ergodic-density", "--config", str(tmp_path / "missing.json")]) == 2


def test_cli_numerical_failure_exit_code(tmp_path):
    # codimension two: coarea tracing is unsupported
    doc = {**PERIODIC, "kind": "coarea", "N": 4, "A": [[1, 0], [0, 1], [0.5, 0.25], [0.3, 0.7]],
           "base": [0, 0, 0, 0], "field": [{"m": [1, 0, 1, 0], "c": 0.05}]}
    p = _write(tmp_path, doc)
    assert main(["coarea", "--config", str(p), "--out", str(tmp_path / "o")]) == 3
    assert (tmp_path / "o" / "error.json").exists()


def test_cli_strict_exit_code(tmp_path):
    doc = {**PERIODIC, "field": [{"m": [1, 0], "c": 0.05}]}
    p = _write(tmp_path, doc)
    assert main(["ergodic-density", "--config", str(p), "--out", str(tmp_path / "a")]) == 0
    assert main(["ergodic-density", "--config", str(p), "--out", str(tmp_path / "b"), "--strict"]) == 4


def test_cli_manifest_and_determinism(tmp_path):
    p = _write(tmp_path, {**PERIODIC, "kind": "kac-rice", "eps_schedule": [0.05], "samples": 20000})
    digests = []
    for threads, out in ((1, "a"), (3, "b")):
        assert main(["kac-rice", "--config", str(p), "--out", str(tmp_path / out), "--threads", str(threads)]) == 0
        man = json.loads((tmp_path / out / "manifest.json").read_text())
        assert man["config_digest"] == file_digest(p)
        assert man["outputs"]["kacrice.csv"] == file_digest(tmp_path / out / "kacrice.csv")
        digests.append(man["outputs"])
    assert digests[0] == digests[1]
    assert main(["kac-rice", "--config", str(p), "--out", str(tmp_path / "c"), "--seed", "99"]) == 0
    man = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert man["seed"] == 99 and man["outputs"] != digests[0]


def test_cli_command_needs_matching_section(tmp_path):
    p = _write(tmp_path, PERIODIC)
    assert main(["flow", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "qsymp.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for c in COMMANDS:
        assert c in r.stdout
