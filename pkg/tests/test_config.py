import pytest

from anchorvid.config import (ConfigError, PipelineConfig, emit_config, parse_config,
                              parse_config_text)


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.ini"
    path.write_text("")
    cfg = parse_config(path)
    assert cfg == PipelineConfig()
    assert (cfg.anchor.N, cfg.nivsds.p, cfg.nivsds.alpha, cfg.pipeline.p_re,
            cfg.sampler.steps) == (16, 0.4, 1.0, 1.0, 25)


def test_flat_and_sectioned_keys():
    a = parse_config_text("nivsds.p = 0.5\nanchor.N = 4\n")
    b = parse_config_text("[nivsds]\np = 0.5\n[anchor]\nN = 4\n")
    assert a == b and a.nivsds.p == 0.5 and a.N == 4


def test_range_error_names_key_and_bounds():
    with pytest.raises(ConfigError) as info:
        parse_config_text("nivsds.p = 1.5")
    msg = str(info.value)
    assert "nivsds.p" in msg and "0" in msg and "1" in msg


@pytest.mark.parametrize("text", ["nivsds.p = 0.4\nnivsds.p = 0.5",
                                  "[nivsds]\np = 0.4\np = 0.5",
                                  "nivsds.p = 0.4\n[nivsds]\np = 0.5"])
def test_duplicate_keys_rejected(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


@pytest.mark.parametrize("text", ["nivsds.beta = 1", "[wat]\nx = 1", "anchor.N = many",
                                  "pipeline.skip_nivsds = maybe", "sampler.mode = euler",
                                  "sampler.eta = 0.3", "pipeline.label = 7", "not a key value"])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_config(tmp_path / "nope.ini")


def test_overrides():
    cfg = parse_config_text("pipeline.seed = 3", {"pipeline.seed": 9})
    assert cfg.pipeline.seed == 9
    with pytest.raises(ConfigError):
        parse_config_text("", {"pipeline.sneed": 1})


def test_emit_parse_round_trip():
    cfg = PipelineConfig().replace(
        prior={"velocities": (0.25, -0.5, 1.0, 0.0), "sigma2": 0.05},
        pipeline={"skip_nivsds": True, "seed": 123456789},
        anchor={"override_path": "/tmp/x.lat", "reward": "neg_distance"},
        sampler={"mode": "ddpm_ancestral", "eta": 0.7})
    again = parse_config_text(emit_config(cfg))
    assert again == cfg and again.hash() == cfg.hash()


def test_hash_is_canonical():
    a = PipelineConfig().replace(nivsds={"p": 0.3})
    b = parse_config_text("[nivsds]\np = 0.30")
    assert a.hash() == b.hash()
    assert a.hash() != PipelineConfig().hash()
    assert PipelineConfig.from_dict(a.to_dict()) == a


def test_skip_selection_forces_single_candidate():
    assert PipelineConfig().replace(pipeline={"skip_selection": True}).N == 1
