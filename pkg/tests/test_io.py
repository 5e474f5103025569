from __future__ import annotations

import json

import numpy as np
import pytest

from pint_swimmer.io import (
    ConfigError,
    RunConfig,
    TrajectoryWriter,
    dump_config_ini,
    load_config,
    parse_config_text,
    provenance,
    read_csv,
    read_trajectory,
    write_table,
)
from pint_swimmer.scenario import ScenarioConfig

INI = """\
[scenario]
M = 21
T = 0.02
fine_dt = 2.5e-5
eps = auto

[material]
b3 = 40.0

[waveform]
A = 0.1

[parareal]
mode = regular
workers = 2
tol = 1e-9

[output]
stride = 5
"""


def test_parse_ini():
    rc = parse_config_text(INI)
    sc = rc.scenario
    assert (sc.M, sc.T, sc.fine_dt, sc.eps) == (21, 0.02, 2.5e-5, None)
    assert sc.material.b3 == 40.0 and sc.material.b1 == 20.0
    assert sc.waveform.A == 0.1
    assert rc.parareal == {"mode": "regular", "workers": 2, "tol": 1e-9}
    assert rc.output == {"stride": 5, "format": "csv"}


def test_parse_json_matches_ini():
    js = json.dumps({
        "scenario": {"M": 21, "T": 0.02, "fine_dt": 2.5e-5},
        "material": {"b3": 40.0},
        "waveform": {"A": 0.1},
        "parareal": {"mode": "regular", "workers": 2, "tol": 1e-9},
        "output": {"stride": 5},
    })
    assert parse_config_text(js).scenario == parse_config_text(INI).scenario


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("[scenario]\nM = 21\nbogus = 1\n", "<string>:3: [scenario] bogus: unknown key"),
        ("[scenario]\nM = twenty\n", "<string>:2: [scenario] M: bad value"),
        ("[scenery]\nM = 21\n", "<string>:1: [scenery]: unknown section"),
        ("M = 21\n", "<string>:1: key outside any [section]"),
        ("[scenario]\nnot a pair\n", "<string>:2: cannot parse"),
        ("[output]\nformat = xml\n", "[output] format"),
        ("[scenario]\nM = 2\n", "invalid scenario"),
        ('{"scenario": [1, 2]}', "must be a table"),
        ('{"scenario": {', "invalid JSON"),
    ],
)
def test_config_errors_name_line_and_key(text, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text)
    assert fragment in str(exc.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.ini")


def test_dump_round_trip():
    rc = parse_config_text(INI)
    again = parse_config_text(dump_config_ini(rc))
    assert again.scenario == rc.scenario
    assert again.parareal == rc.parareal
    assert again.output == rc.output


def test_defaults_round_trip():
    rc = RunConfig()
    assert parse_config_text(dump_config_ini(rc)).scenario == ScenarioConfig()


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_tables_carry_provenance(tmp_path, fmt):
    prov = provenance(ScenarioConfig(seed=9))
    path = write_table(tmp_path, "t", ["a", "b"], [(1, 2.5), (2, 3.5)], prov, fmt)
    if fmt == "csv":
        p, header, rows = read_csv(path)
        assert p == {"seed": "9", "config_hash": prov["config_hash"]}
        assert header == ["a", "b"] and rows == [["1", "2.5"], ["2", "3.5"]]
    else:
        data = json.loads(path.read_text())
        assert data["seed"] == 9 and data["config_hash"] == prov["config_hash"]
        assert data["rows"][1] == {"a": 2, "b": 3.5}


def test_trajectory_round_trip(tmp_path):
    R, M = 2, 4
    rng = np.random.default_rng(0)
    w = TrajectoryWriter(tmp_path / "traj.bin", R, M, 1e-3, 2, {"seed": 1, "config_hash": "abc"})
    frames = [rng.normal(size=12 * R * M) for _ in range(3)]
    for i, f in enumerate(frames):
        w.write(i * 2e-3, f)
    sidecar = w.close()
    meta = json.loads(sidecar.read_text())
    assert meta["frames"] == 3 and meta["rod_count"] == R and meta["node_count"] == M
    assert meta["seed"] == 1 and meta["config_hash"] == "abc"
    meta, t, X, D = read_trajectory(tmp_path / "traj.bin")
    np.testing.assert_array_equal(t, [0.0, 2e-3, 4e-3])
    np.testing.assert_array_equal(X[2].ravel(), frames[2][: 3 * R * M])
    np.testing.assert_array_equal(D[1].ravel(), frames[1][3 * R * M :])


def test_inline_comments():
    rc = parse_config_text("[scenario]\nM = 21   ; nodes per rod\nT = 0.01 # horizon\n")
    assert (rc.scenario.M, rc.scenario.T) == (21, 0.01)
