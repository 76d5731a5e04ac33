from __future__ import annotations

import json
import logging

import numpy as np
import pytest

from szegolab import cache as cache_mod
from szegolab import models
from szegolab.cache import CACHE_ENV, BasisCache, default_cache_dir
from szegolab.reports import (
    Check,
    ConfigError,
    Report,
    RunConfig,
    jsonable,
    parse_key_values,
    read_config_file,
    write_csv,
    write_report,
)

TABLE = {"gram_residual": 3.1e-13,
         "transform": np.array([[1 + 2j, -0.1], [np.pi, 1e-300 - 7e-17j]]),
         "none": None, "ints": np.arange(3)}


def test_roundtrip_is_bit_exact(tmp_path):
    c = BasisCache(tmp_path)
    k = c.key("m", 7, {"n": 64})
    c.store(k, TABLE)
    hit = c.lookup(k)
    assert hit["gram_residual"] == TABLE["gram_residual"]
    assert np.array_equal(hit["transform"], TABLE["transform"])
    assert hit["none"] is None and np.array_equal(hit["ints"], [0, 1, 2])
    assert (c.hits, c.misses) == (1, 0)


def test_miss_on_other_grid_or_level(tmp_path):
    c = BasisCache(tmp_path)
    c.store(c.key("m", 7, {"n": 64}), TABLE)
    assert c.lookup(c.key("m", 7, {"n": 65})) is None
    assert c.lookup(c.key("m", 8, {"n": 64})) is None
    assert c.misses == 2


def test_corrupted_entry_is_discarded(tmp_path, caplog):
    c = BasisCache(tmp_path)
    k = c.key("m", 7, {"n": 64})
    p = c.store(k, TABLE)
    doc = json.loads(p.read_text())
    doc["body"]["data"][0] = "2.5"
    p.write_text(json.dumps(doc))
    with caplog.at_level(logging.WARNING):
        assert c.lookup(k) is None
    assert "corrupted" in caplog.text and not p.exists()
    p2 = c.store(k, TABLE)
    p2.write_text("{ truncated")
    assert c.lookup(k) is None and not p2.exists()


def test_store_is_atomic(tmp_path, monkeypatch):
    c = BasisCache(tmp_path)
    k = c.key("m", 7, {"n": 64})
    p = c.store(k, TABLE)
    before = p.read_text()

    def boom(*a, **kw):
        raise OSError("disk full")

    monkeypatch.setattr(cache_mod.json, "dump", boom)
    with pytest.raises(OSError):
        c.store(k, {"gram_residual": 1.0, "transform": None})
    assert p.read_text() == before
    assert sorted(q.name for q in tmp_path.iterdir()) == [p.name]


def test_cache_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path / "x"))
    assert default_cache_dir() == tmp_path / "x"
    monkeypatch.delenv(CACHE_ENV)
    assert default_cache_dir().name == "szegolab"


def test_basis_cache_reuse(tmp_path, p1_pert, monkeypatch):
    monkeypatch.setattr(models, "_MEMO", {})
    c = BasisCache(tmp_path)
    b1 = models.basis_sections(p1_pert, 12, cache=c)
    assert c.misses == 1 and len(list(tmp_path.iterdir())) == 1
    monkeypatch.setattr(models, "_MEMO", {})
    b2 = models.basis_sections(p1_pert, 12, cache=c)
    assert c.hits == 1
    assert np.array_equal(b1.transform, b2.transform) and b1.gram_residual == b2.gram_residual
    z = np.array([[0.3 + 0.2j], [1.5 - 1j]])
    assert np.array_equal(b1.values(z), b2.values(z))


# ------------------------------------------------------------ reports
def test_jsonable():
    out = jsonable({"c": 1 + 2j, "a": np.array([1.5, np.inf]), "b": np.bool_(True), 3: np.int64(4)})
    assert out == {"c": [1.0, 2.0], "a": [1.5, "inf"], "b": True, "3": 4}
    json.dumps(out, allow_nan=False)


def test_report_roundtrip_and_determinism(tmp_path):
    cfg = RunConfig("zeros", "torus", [16], 3, {"k": "v"}, {"x": 1e-3}, str(tmp_path))
    checks = [Check("a", 1.0, 2.0, True), Check("b", [1, 2], 0, False)]
    r1 = Report.build(cfg, {"z": 1j, "v": np.arange(2.0)}, checks, {"wall_seconds": 0.1})
    r2 = Report.build(cfg, {"z": 1j, "v": np.arange(2.0)}, checks, {"wall_seconds": 9.9})
    assert not r1.passed and r1.schema_version == "1.0"
    assert r1.payload_json() == r2.payload_json() and r1.to_json() != r2.to_json()
    p = write_report(r1, tmp_path)
    assert p.name == "zeros.json"
    back = Report.from_json(p.read_text())
    assert back.to_json() == r1.to_json()
    assert back.config["seed"] == 3 and back.config["tolerances"] == {"x": 0.001}
    assert not list(tmp_path.glob("*.tmp"))


def test_runconfig_tolerance_override():
    cfg = RunConfig("x", tolerances={"far_field": "1e-3"})
    assert cfg.tol("far_field", 1e-8) == 1e-3 and cfg.tol("other", 0.5) == 0.5


def test_key_value_parsing(tmp_path):
    kv = parse_key_values(["model = torus  # comment", "", "# only comment", "N=16,32", "tol.eps=0.1"])
    assert kv == {"model": "torus", "N": "16,32", "tol.eps": "0.1"}
    with pytest.raises(ConfigError):
        parse_key_values(["novalue"])
    with pytest.raises(ConfigError):
        parse_key_values(["=3"])
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "missing.cfg")


def test_csv_keeps_full_precision(tmp_path):
    p = write_csv(tmp_path / "sub" / "t.csv", ["N", "x"], [(1, 0.1 + 0.2), (2, np.float64(1 / 3))])
    lines = p.read_text().splitlines()
    assert lines[0] == "N,x"
    assert float(lines[1].split(",")[1]) == 0.1 + 0.2 and float(lines[2].split(",")[1]) == 1 / 3
