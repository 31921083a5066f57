import warnings
from pathlib import Path

import pytest

from app.config import (
    ConfigError,
    build_run_config,
    get_settings,
    load_run_config,
    parse_key_value_file,
    parse_overrides,
    reload_settings,
)
from app.state import ModelKind
from tests.conftest import CONFIG_DIR, DATA_DIR


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_karate_config():
    config = load_run_config(CONFIG_DIR / "karate.conf")
    assert config.model == ModelKind.STATIC
    assert config.data[0].resolve() == (DATA_DIR / "karate.txt").resolve()
    assert config.hyper.a_nu == 5.0
    assert config.chain.chains == 3
    assert config.chain.retained == 2000
    assert config.output_dir.resolve() == (CONFIG_DIR.parent / "runs" / "karate").resolve()


def test_sensitivity_config_priors():
    config = load_run_config(CONFIG_DIR / "karate_sensitivity.conf")
    hyper = config.hyper
    assert (hyper.a_alpha, hyper.b_alpha, hyper.a_nu, hyper.b_nu) == (10.0, 10.0, 10.0, 10.0)


def test_dynamic_config_lists_snapshots():
    config = load_run_config(CONFIG_DIR / "kapferer_dynamic2.conf")
    assert config.model == ModelKind.DYNAMIC2
    assert [p.name for p in config.data] == ["kapferer_t1.txt", "kapferer_t2.txt"]
    assert config.index_base == 1
    assert config.hyper.var_eta == 1.0


def test_comments_and_case(tmp_path):
    path = write(tmp_path / "run.conf", "# fit\nModel = static  # inline\n\nBurn-In = 5\n")
    assert parse_key_value_file(path) == {"model": "static", "burn_in": "5"}


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_key_value_file(tmp_path / "nope.conf")


def test_line_without_equals(tmp_path):
    path = write(tmp_path / "run.conf", "model static\n")
    with pytest.raises(ConfigError, match="run.conf:1"):
        parse_key_value_file(path)


def test_unknown_key():
    with pytest.raises(ConfigError, match="Unknown config key: colour"):
        build_run_config({"model": "static", "data": "a.txt", "colour": "blue"})


@pytest.mark.parametrize("flat, message", [
    ({"model": "dynamic2", "data": "only.txt"}, "at least 2 snapshots"),
    ({"model": "static", "data": "a.txt, b.txt"}, "exactly one data file"),
    ({"model": "static", "data": "a.txt", "burn_in": "50", "iterations": "50"}, "burn_in"),
    ({"model": "static", "data": "a.txt", "var_beta": "-1"}, "var_beta"),
    ({"model": "static", "data": "a.txt", "index_base": "2"}, "index_base"),
    ({"model": "blocks", "data": "a.txt"}, "model"),
])
def test_invalid_configs(flat, message):
    with pytest.raises(ConfigError, match=message):
        build_run_config(flat)


def test_paths_relative_to_config_file(tmp_path):
    conf_dir = tmp_path / "configs"
    conf_dir.mkdir()
    path = write(conf_dir / "run.conf", "model = static\ndata = ../net.txt\noutput_dir = out\n")
    config = load_run_config(path)
    assert config.data == [conf_dir / "../net.txt"]
    assert config.output_dir == conf_dir / "out"


def test_overrides_replace_file_values(tmp_path, monkeypatch):
    path = write(tmp_path / "run.conf", "model = static\ndata = net.txt\nseed = 1\n")
    monkeypatch.chdir(tmp_path)
    config = load_run_config(path, {"seed": "99", "iterations": "100", "burn-in": "10", "output_dir": "elsewhere"})
    assert config.chain.seed == 99
    assert config.chain.burn_in == 10
    assert config.output_dir == (tmp_path / "elsewhere").resolve()


def test_default_output_dir():
    config = build_run_config({"model": "static", "data": "a.txt", "seed": "42"})
    assert config.resolved_output_dir() == Path(get_settings().output_dir) / "static-42"


def test_to_flat_rebuilds_the_same_config():
    config = build_run_config({"model": "dynamic1", "data": "a.txt, b.txt", "var_theta": "2.5", "thin": "3"})
    again = build_run_config(config.to_flat())
    assert again == config.model_copy(update={"output_dir": config.resolved_output_dir()})


def test_parse_overrides():
    assert parse_overrides(["a=1", " b = x=y "]) == {"a": "1", "b": "x=y"}
    with pytest.raises(ConfigError):
        parse_overrides(["seed"])


def test_settings_read_environment_without_warnings(tmp_path, monkeypatch):
    monkeypatch.setenv("OUTPUT_DIR", str(tmp_path / "out"))
    monkeypatch.setenv("TIMEZONE", "UTC")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        settings = reload_settings()
    assert settings.output_dir == str(tmp_path / "out")
    assert settings.tz.zone == "UTC"
