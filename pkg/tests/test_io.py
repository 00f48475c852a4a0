import json

import jsonschema
import numpy as np
import pytest

from nlsgraph import graph_core as gc, io, solver as S


def test_fmt():
    assert io.fmt(1 / 3) == "0.333333333333"
    assert io.fmt(None) == ""
    assert io.fmt(True) == "1"
    assert io.fmt(np.int64(7)) == "7"
    assert io.fmt(float("nan")) == "nan"


def test_csv_roundtrip(tmp_path):
    rows = [{"run": 0, "energy": -0.0104, "multiplier": 0.0625, "cluster_id": 0}]
    path = io.write_csv(tmp_path / "u.csv", "uniq", io.UNIQ_COLUMNS, rows)
    kind, cols, back = io.read_csv(path)
    assert kind == "uniq" and tuple(cols) == io.UNIQ_COLUMNS
    assert float(back[0]["energy"]) == -0.0104
    assert path.read_text().splitlines()[0] == "# nlsgraph uniq-csv v1"


def test_read_csv_rejects_foreign_files(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        io.read_csv(p)
    p.write_text("# nlsgraph uniq-csv v9\na\n")
    with pytest.raises(ValueError):
        io.read_csv(p)


def test_json_text_is_canonical():
    doc = {"b": np.float64(1.5), "a": [np.int32(1), float("inf")], "c": np.bool_(True)}
    text = io.json_text(doc)
    assert json.loads(text) == {"a": [1, None], "b": 1.5, "c": True}
    assert text.index('"a"') < text.index('"b"')


def test_result_schema():
    res = S.minimize(gc.tadpole(1.0), 1.0, 4, config=S.SolverConfig(density=30))
    io.validate(res.to_json_dict(include_arrays=False), "result")
    with pytest.raises(jsonschema.ValidationError):
        io.validate({"energy": "low"}, "result")


def test_manifest_roundtrip(tmp_path):
    m = io.RunManifest("solve --mass 1", {"p": 4.0}, 0, "0.1.0", graph=None)
    m.start()
    m.finish()
    path = m.write(tmp_path / "manifest.json")
    back = io.RunManifest.load(path)
    assert back.to_dict() == json.loads(io.json_text(m.to_dict()))
    bad = json.loads(path.read_text())
    bad["surprise"] = 1
    path.write_text(json.dumps(bad))
    with pytest.raises(jsonschema.ValidationError):
        io.RunManifest.load(path)
