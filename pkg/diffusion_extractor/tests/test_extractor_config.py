import pytest

from diffusion_extractor import ConfigError, ExtractorConfig


def test_defaults():
    cfg = ExtractorConfig()
    assert cfg.layers == (0, 3, 6)
    assert cfg.timestep == 261
    assert cfg.total_steps == 1000
    assert (cfg.target_height, cfg.target_width) == (512, 704)
    assert cfg.backend == "diffusion"
    assert cfg.seed == 0
    assert cfg.channels == 16


def test_layers_coerced_to_int_tuple():
    cfg = ExtractorConfig(layers=[3.0, 6])
    assert cfg.layers == (3, 6)
    assert all(isinstance(x, int) for x in cfg.layers)


def test_timestep_must_precede_total_steps():
    with pytest.raises(ConfigError):
        ExtractorConfig(timestep=1000, total_steps=1000)
    with pytest.raises(ConfigError):
        ExtractorConfig(timestep=-1)


def test_layer_range_enforced():
    with pytest.raises(ConfigError):
        ExtractorConfig(layers=())
    with pytest.raises(ConfigError):
        ExtractorConfig(layers=(13,))
    ExtractorConfig(layers=(0, 12))  # boundary ids are fine


def test_channel_and_target_floors():
    with pytest.raises(ConfigError):
        ExtractorConfig(channels=0)
    with pytest.raises(ConfigError):
        ExtractorConfig(target_height=32)
    with pytest.raises(ConfigError):
        ExtractorConfig(target_width=32)


def test_seed_and_backend_validation():
    with pytest.raises(ConfigError):
        ExtractorConfig(seed=-1)
    with pytest.raises(ConfigError):
        ExtractorConfig(backend="magic")
    ExtractorConfig(backend="stats")
