"""Config parsing and the batch front end, driven through ``main()``."""
import csv
import json

import pytest

from parallelobox.cli import (CSV_COLUMNS, load_manifest, main, parse_config)
from parallelobox.errors import ConfigError
from parallelobox.fixtures import box_mesh, dumbbell
from parallelobox.mesh import save_stl


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# printer config


def test_parse_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "nope.ini")


def test_parse_config_defaults_without_section(tmp_path):
    ini = _write(tmp_path / "p.ini", "[other]\nx = 1\n")
    profile = parse_config(ini)
    assert profile.dims == (250.0, 250.0, 250.0)
    assert profile.speed_shell == 20.0


def test_parse_config_overrides(tmp_path):
    ini = _write(tmp_path / "p.ini",
                 "[printer]\nvolume_x = 200\nvolume_z = 300\n"
                 "layer_height = 0.2\n")
    profile = parse_config(ini)
    assert profile.dims == (200.0, 250.0, 300.0)
    assert profile.layer_height == 0.2


@pytest.mark.parametrize("body", [
    "[printer]\nvolume_x = wide\n",
    "[printer]\nspeed_shell = 0\n",
    "[printer]\nlayer_height = -0.25\n",
    "not an ini at all\n",
])
def test_parse_config_rejects_bad_values(tmp_path, body):
    ini = _write(tmp_path / "p.ini", body)
    with pytest.raises(ConfigError):
        parse_config(ini)


# ---------------------------------------------------------------------------
# manifest


def test_load_manifest_resolves_relative_paths(tmp_path):
    sub = tmp_path / "jobs"
    sub.mkdir()
    manifest = _write(sub / "m.json",
                      json.dumps({"models": ["a.stl", "deep/b.stl"]}))
    raw = load_manifest(manifest)
    assert raw["models"] == [sub / "a.stl", sub / "deep/b.stl"]
    assert raw["printers"] == [4]  # default sweep


@pytest.mark.parametrize("payload", [
    "[]",                                          # not an object
    "{}",                                          # no models
    '{"models": []}',                              # empty list
    '{"models": "a.stl"}',                         # not a list
    '{"models": ["a.stl"], "printers": 4}',        # counts not a list
    '{"models": ["a.stl"], "printers": [0]}',      # count below 1
    '{"models": ["a.stl"], "printers": ["2"]}',    # count not an int
    "{broken",                                     # invalid json
])
def test_load_manifest_rejects(tmp_path, payload):
    manifest = _write(tmp_path / "m.json", payload)
    with pytest.raises(ConfigError):
        load_manifest(manifest)


def test_load_manifest_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_manifest(tmp_path / "m.json")


# ---------------------------------------------------------------------------
# end-to-end runs


def _decompose_args(model, out, extra=()):
    return ["decompose", str(model), "--printers", "2",
            "--granularity", "coarse", "--sample-tries", "1",
            "--out", str(out), *extra]


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_decompose_end_to_end(tmp_path):
    model = tmp_path / "dumbbell.stl"
    save_stl(dumbbell(), model)
    out = tmp_path / "out"
    code = main(_decompose_args(model, out, ["--baseline", "both"]))
    assert code == 0

    rows = _read_csv(out / "results.csv")
    assert rows[0] == list(CSV_COLUMNS)
    body = rows[1:]
    assert {r[1] for r in body} == {"parallelobox", "symmetry"}
    for r in body:
        assert r[0] == "dumbbell"
        assert r[2] == "2"
        assert r[8] == "true"
        float(r[4]), float(r[5]), float(r[6]), float(r[7])  # parse as numbers
        part_dir = out / "dumbbell" / "2" / r[1]
        parts = sorted(part_dir.glob("part_*.stl"))
        assert len(parts) == int(r[3]) > 0
        assert parts[0].name == "part_000.stl"

    plot = json.loads((out / "plotdata.json").read_text(encoding="utf-8"))
    assert set(plot["dumbbell"]) == {"parallelobox", "symmetry"}
    assert plot["dumbbell"]["parallelobox"]["printers"] == [2]

    log_lines = [json.loads(line) for line in
                 (out / "runlog.jsonl").read_text(encoding="utf-8").splitlines()]
    assert log_lines
    for line in log_lines:
        assert {"model", "printers", "algorithm", "seed_blocks", "try_index",
                "seed", "valid", "parts", "parallel_score", "wall_clock_s",
                "reason"} <= set(line)


def test_decompose_is_deterministic(tmp_path):
    model = tmp_path / "dumbbell.stl"
    save_stl(dumbbell(), model)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(_decompose_args(model, out)) == 0
        outs.append(out)

    def stripped_csv(out):
        return [r[:7] + r[8:] for r in _read_csv(out / "results.csv")]

    assert stripped_csv(outs[0]) == stripped_csv(outs[1])
    assert ((outs[0] / "plotdata.json").read_bytes()
            == (outs[1] / "plotdata.json").read_bytes())
    a_parts = sorted((outs[0] / "dumbbell" / "2" / "parallelobox").iterdir())
    b_parts = sorted((outs[1] / "dumbbell" / "2" / "parallelobox").iterdir())
    assert [p.name for p in a_parts] == [p.name for p in b_parts]
    for pa, pb in zip(a_parts, b_parts):
        assert pa.read_bytes() == pb.read_bytes()


def test_decompose_failure_exits_2(tmp_path):
    model = tmp_path / "big.stl"
    save_stl(box_mesh(size=(300.0, 300.0, 300.0)), model)
    out = tmp_path / "out"
    code = main(_decompose_args(model, out, ["--baseline", "parallelobox"]))
    assert code == 2
    body = _read_csv(out / "results.csv")[1:]
    assert len(body) == 1
    assert body[0][8] == "false"
    assert body[0][3] == "0"
    assert not (out / "big" / "2" / "parallelobox").exists()


def test_decompose_missing_config_exits_2(tmp_path):
    model = tmp_path / "dumbbell.stl"
    save_stl(dumbbell(), model)
    code = main(_decompose_args(model, tmp_path / "out",
                                ["--config", str(tmp_path / "nope.ini")]))
    assert code == 2


def test_batch_end_to_end(tmp_path):
    save_stl(dumbbell(), tmp_path / "dumbbell.stl")
    out = tmp_path / "sweep"
    manifest = _write(tmp_path / "m.json", json.dumps({
        "models": ["dumbbell.stl"],
        "printers": [2],
        "granularity": "coarse",
        "sample_tries": 1,
        "baseline": "parallelobox",
        "out": str(out),
    }))
    assert main(["batch", str(manifest)]) == 0
    body = _read_csv(out / "results.csv")[1:]
    assert [r[0] for r in body] == ["dumbbell"]
    assert body[0][8] == "true"


def test_batch_unreadable_model_exits_2(tmp_path):
    manifest = _write(tmp_path / "m.json", json.dumps(
        {"models": ["ghost.stl"], "printers": [2],
         "out": str(tmp_path / "out")}))
    assert main(["batch", str(manifest)]) == 2
    rows = _read_csv(tmp_path / "out" / "results.csv")
    assert rows[1][8] == "false"


def test_batch_missing_manifest_exits_2(tmp_path):
    assert main(["batch", str(tmp_path / "m.json")]) == 2
