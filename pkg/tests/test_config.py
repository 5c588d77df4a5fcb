import numpy as np
import pytest
from pydantic import ValidationError

from conftest import PROFILES
from entanglement.errors import ConfigError
from tools.config_tools import (CALIBRATED_MU, ExperimentConfig, config_from_flat, config_to_flat,
                                format_validation_error, load_config)


def test_defaults_describe_the_reference_acquisition():
    config = ExperimentConfig()
    assert config.period_ps == 100_000
    assert config.pulse_width_ps == 50_000
    assert config.storage_ps == 50_000
    assert config.dead_time_ps("s+") == 1_000_000
    assert config.dead_time_ps("i-") == 100_000
    assert config.pulses_per_segment == 2_500_000
    assert config.mean_pairs_per_pulse == CALIBRATED_MU
    assert config.settings.is_standard()


def test_profile_matches_the_defaults():
    config = load_config(PROFILES / "reference.env")
    expected = ExperimentConfig(duration_s=3600.0)
    assert config.model_dump(exclude={"settings"}) == expected.model_dump(exclude={"settings"})
    assert config.settings.is_standard()


def test_acceptance_profile():
    config = load_config(PROFILES / "acceptance.env")
    assert config.pulse_sampling == "multi_pair"
    assert config.mean_pairs_per_pulse == 0.05
    assert config.visibility == 0.912


def test_overrides_beat_environment_beat_file(monkeypatch):
    monkeypatch.setenv("ENTANGLEMENT_RNG_SEED", "42")
    monkeypatch.setenv("ENTANGLEMENT_VISIBILITY", "0.8")
    config = load_config(PROFILES / "reference.env", overrides={"VISIBILITY": "0.85"})
    assert config.rng_seed == 42
    assert config.visibility == 0.85
    assert load_config(use_environment=False).rng_seed == 1


def test_flat_keys_reach_nested_fields():
    config = config_from_flat({
        "DETECTOR_S_PLUS_EFFICIENCY": "0.5",
        "DETECTOR_I_MINUS_DEAD_TIME_NS": "50",
        "ALICE_0": "0,0,1",
        "IDLER_FRAME": "direct",
        "pulse_sampling": "multi_pair",
    })
    assert config.detectors["s+"].efficiency == 0.5
    assert config.detectors["s-"].efficiency == 0.40
    assert config.dead_time_ps("i-") == 50_000
    assert config.settings.signal_vector(0).z == pytest.approx(1.0)
    assert config.settings.idler_frame == "direct"
    assert config.pulse_sampling == "multi_pair"
    assert not config.settings.is_standard()


def test_flat_round_trip():
    config = ExperimentConfig(visibility=0.85, rng_seed=123, duration_s=2.5, pulse_sampling="multi_pair")
    again = config_from_flat(config_to_flat(config))
    assert again.model_dump(exclude={"settings"}) == config.model_dump(exclude={"settings"})
    for party in ("alice", "bob"):
        assert np.allclose(getattr(again.settings, party), getattr(config.settings, party), atol=1e-15)


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError, match="VISIBILTY"):
        config_from_flat({"VISIBILTY": "0.9"})
    with pytest.raises(ConfigError, match="DETECTOR_S_PLUS_GAIN"):
        config_from_flat({"DETECTOR_S_PLUS_GAIN": "2"})


def test_invalid_values_name_the_field():
    with pytest.raises(ConfigError, match="visibility"):
        config_from_flat({"VISIBILITY": "1.5"})
    with pytest.raises(ConfigError, match="ALICE_1"):
        config_from_flat({"ALICE_1": "a,b,c"})
    with pytest.raises(ConfigError):
        config_from_flat({"ALICE_1": "1,1,0"})


def test_missing_profile():
    with pytest.raises(ConfigError):
        load_config(PROFILES / "missing.env")


def test_routing_probabilities_cannot_exceed_one():
    with pytest.raises(ValidationError) as excinfo:
        ExperimentConfig(memory_efficiency=0.9, transmission_prob=0.2)
    assert "exceeds 1" in format_validation_error(excinfo.value)


def test_period_must_hold_a_pulse():
    with pytest.raises(ValidationError):
        ExperimentConfig(pump_rep_rate_hz=1e8)


def test_unknown_model_fields_are_forbidden():
    with pytest.raises(ValidationError):
        ExperimentConfig(temperature_k=4.0)
