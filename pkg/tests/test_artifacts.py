import json

import numpy as np
import pytest

from graphcon.artifacts import (DEFAULTS, ConfigError, fmt, load_checkpoint, load_config, parse_config,
                                read_csv, save_checkpoint, write_csv, write_json)


def test_fmt():
    assert fmt(None) == ""
    assert fmt(True) == "true"
    assert fmt(np.int64(3)) == "3"
    assert fmt(0.1) == "0.1"
    assert fmt(np.float64(1 / 3)) == repr(1 / 3)
    assert fmt("gcn") == "gcn"


def test_csv_round_trip_is_lossless(tmp_path):
    vals = np.random.default_rng(0).normal(size=50) * 10.0 ** np.arange(-25, 25)
    rows = [{"i": i, "x": float(x), "tag": "a" if i % 2 else None} for i, x in enumerate(vals)]
    assert write_csv(tmp_path / "t.csv", ["i", "x", "tag"], rows) == 50
    back = read_csv(tmp_path / "t.csv")
    assert [float(r["x"]) for r in back] == vals.tolist()
    assert back[0]["tag"] == "" and back[1]["tag"] == "a"
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "i,x,tag"


def test_json_handles_non_finite(tmp_path):
    write_json(tmp_path / "a.json", {"b": float("inf"), "a": [np.float64(1.5), float("nan")], "c": np.int64(2)})
    doc = json.loads((tmp_path / "a.json").read_text())
    assert doc == {"a": [1.5, "nan"], "b": "inf", "c": 2}
    assert list(doc) == ["a", "b", "c"]


def test_checkpoint_round_trip(tmp_path):
    arrs = {"w": np.random.default_rng(1).normal(size=(3, 4)), "b": np.array([[1e-300], [-0.0]])}
    save_checkpoint(tmp_path / "c.json", arrs, {"epoch": 3})
    back, meta = load_checkpoint(tmp_path / "c.json")
    assert meta == {"epoch": 3}
    for k in arrs:
        np.testing.assert_array_equal(back[k], arrs[k])
    with pytest.raises(ValueError, match="non-finite"):
        save_checkpoint(tmp_path / "d.json", {"w": np.array([np.nan])})
    (tmp_path / "e.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError, match="not a"):
        load_checkpoint(tmp_path / "e.json")


def test_config_defaults_and_overrides():
    cfg = parse_config({"integrator": {"alpha": 0.25}, "seed": 5})
    assert cfg["integrator"]["alpha"] == 0.25 and cfg["seed"] == 5
    assert cfg["integrator"]["dt"] == DEFAULTS["integrator"]["dt"]
    cfg["train"]["lr"] = 9
    assert DEFAULTS["train"]["lr"] == 0.01


@pytest.mark.parametrize("doc,msg", [
    ({"integrator": {"dtt": 1}}, "integrator.dtt"),
    ({"bogus": 1}, "'bogus'"),
    ({"train": {"lr": "fast"}}, "train.lr"),
    ({"train": {"lr": None}}, "must not be null"),
    ({"model": 3}, "model must be an object"),
    ({"coupling": {"share_weights": 1}}, "coupling.share_weights"),
])
def test_config_rejections(doc, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(doc)


def test_config_nullable_and_file(tmp_path):
    assert parse_config({"train": {"patience": None}, "checks": {"grad_bound_dt": 0.5}})["checks"]["grad_bound_dt"] == 0.5
    (tmp_path / "c.json").write_text('{"seed": 3,}')
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(tmp_path / "c.json")
    assert load_config(None) == parse_config({})
