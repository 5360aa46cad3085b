import pytest

from earthdial.config import (
    DEFAULTS,
    fusion_config,
    generator_client,
    load_config_file,
    resolve_config,
    tiler_config,
)
from earthdial.errors import InvalidRange, ParseError


def _resolve(**kw):
    kw.setdefault("environ", {})
    kw.setdefault("search_cwd", False)
    return resolve_config(**kw)


def test_defaults_resolve():
    cfg = _resolve()
    assert cfg == DEFAULTS
    assert cfg is not DEFAULTS
    assert cfg["tiler"] is not DEFAULTS["tiler"]


def test_file_overrides_defaults(tmp_path):
    path = tmp_path / "earthdial.toml"
    path.write_text(
        "[tiler]\nmax_tiles = 40\n\n[filters]\nlum_max = 0.9\n"
        "\n[generator]\nurl = \"http://gen:9\"\n"
    )
    cfg = _resolve(config_path=path)
    assert cfg["tiler"]["max_tiles"] == 40
    assert cfg["tiler"]["tile_size"] == 448
    assert cfg["filters"]["lum_max"] == 0.9
    assert cfg["generator"]["url"] == "http://gen:9"


def test_env_overrides_file(tmp_path):
    path = tmp_path / "earthdial.toml"
    path.write_text('[generator]\nurl = "http://file:1"\nmodel = "file-model"\n')
    cfg = _resolve(
        config_path=path,
        environ={
            "GENERATOR_URL": "http://env:2",
            "GENERATOR_MODEL": "env-model",
            "GENERATOR_TIMEOUT_S": "7.5",
        },
    )
    assert cfg["generator"]["url"] == "http://env:2"
    assert cfg["generator"]["model"] == "env-model"
    assert cfg["generator"]["timeout_s"] == 7.5
    with pytest.raises(InvalidRange):
        _resolve(environ={"GENERATOR_TIMEOUT_S": "soon"})


def test_flag_overrides_beat_env(tmp_path):
    cfg = _resolve(
        environ={"GENERATOR_URL": "http://env:2"},
        overrides={"generator.url": "http://flag:3", "tiler.max_tiles": 6,
                   "filters.min_labels": None},
    )
    assert cfg["generator"]["url"] == "http://flag:3"
    assert cfg["tiler"]["max_tiles"] == 6
    assert cfg["filters"]["min_labels"] == 3  # None falls through
    with pytest.raises(InvalidRange):
        _resolve(overrides={"tiler.nope": 1})
    with pytest.raises(InvalidRange):
        _resolve(overrides={"nope.tile_size": 1})


def test_unknown_file_keys_rejected(tmp_path):
    path = tmp_path / "earthdial.toml"
    path.write_text("[tiler]\ntile_count = 9\n")
    with pytest.raises(ParseError):
        _resolve(config_path=path)
    path.write_text("[weather]\nsunny = true\n")
    with pytest.raises(ParseError):
        _resolve(config_path=path)


def test_file_type_checks(tmp_path):
    path = tmp_path / "earthdial.toml"
    path.write_text('[tiler]\nmax_tiles = "many"\n')
    with pytest.raises(ParseError):
        _resolve(config_path=path)
    path.write_text("[tiler]\nuse_thumbnail = 1\n")
    with pytest.raises(ParseError):
        _resolve(config_path=path)
    # Ints are fine where floats are expected.
    path.write_text("[filters]\nlum_max = 1\n")
    cfg = _resolve(config_path=path)
    assert cfg["filters"]["lum_max"] == 1.0
    assert isinstance(cfg["filters"]["lum_max"], float)


def test_bad_toml(tmp_path):
    path = tmp_path / "earthdial.toml"
    path.write_text("[tiler\nmax_tiles = 3\n")
    with pytest.raises(ParseError):
        load_config_file(path)


def test_cwd_search(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "earthdial.toml").write_text("[tiler]\nmax_tiles = 5\n")
    cfg = resolve_config(environ={})
    assert cfg["tiler"]["max_tiles"] == 5
    cfg = resolve_config(environ={}, search_cwd=False)
    assert cfg["tiler"]["max_tiles"] == 12


def test_builders():
    cfg = _resolve(overrides={"tiler.max_tiles": 40, "fusion.aggregate": "mean"})
    t = tiler_config(cfg)
    assert (t.tile_size, t.max_tiles, t.use_thumbnail) == (448, 40, True)
    f = fusion_config(cfg)
    assert f.aggregate == "mean"
    assert f.tokens_per_tile == 256
    assert generator_client(cfg) is None
    cfg["generator"]["url"] = "http://gen:1"
    client = generator_client(cfg)
    assert client is not None
    assert client.endpoint == "http://gen:1/v1/chat/completions"
