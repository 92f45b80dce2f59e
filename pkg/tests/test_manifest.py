import pytest

from learncert.manifest import ConfigError, RunManifest, config_digest, load_config, pick


def test_manifest_round_trip_and_verify(tmp_path):
    (tmp_path / "a").write_bytes(b"hello")
    m = RunManifest.create({"x": 1}, 7)
    m.add(tmp_path, "blob", tmp_path / "a")
    m.record_config("stage", {"y": 2})
    m.save(tmp_path)
    loaded = RunManifest.load(tmp_path)
    assert loaded == m and loaded.master_seed == 7
    assert loaded.verify(tmp_path) == []
    (tmp_path / "a").write_bytes(b"changed")
    assert loaded.verify(tmp_path) == ["a"]


def test_config_digest_ignores_key_order():
    assert config_digest({"a": 1, "b": 2}) == config_digest({"b": 2, "a": 1})


def test_load_config(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('num_classes = 4\nsigma = 1\n')
    cfg = load_config(p)
    assert pick(cfg, {"num_classes": int, "sigma": float}, "c") == {"num_classes": 4, "sigma": 1.0}
    with pytest.raises(ConfigError):
        pick(cfg, {"num_classes": int}, "c")
    p.write_text('num_classes = "four"\n')
    with pytest.raises(ConfigError):
        pick(load_config(p), {"num_classes": int}, "c")
    p.write_text('[table]\nx = 1\n')
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text('x = = 1\n')
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
