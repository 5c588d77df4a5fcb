import pytest

from entanglement.certify import published_bounds
from entanglement.workflow import analyze_table, certify_report
from tools.config_tools import config_from_flat, config_to_flat


@pytest.fixture
def captured_settings(monkeypatch):
    captured = []

    def fake_compute_bounds(settings=None, **kwargs):
        captured.append(settings)
        return published_bounds()

    monkeypatch.setattr("entanglement.workflow.compute_bounds", fake_compute_bounds)
    return captured


def test_recomputed_bounds_follow_the_config_echo(stored_table_path, captured_settings):
    echo = config_to_flat(config_from_flat({"IDLER_FRAME": "direct"}))
    report = analyze_table(stored_table_path).model_copy(update={"config": echo})
    certified = certify_report(report, recompute=True)
    (settings,) = captured_settings
    assert settings is not None
    assert settings.idler_frame == "direct"
    assert certified.verdict.provenance == "recomputed"


def test_explicit_settings_win_over_the_config_echo(stored_table_path, captured_settings):
    echo = config_to_flat(config_from_flat({"IDLER_FRAME": "direct"}))
    report = analyze_table(stored_table_path).model_copy(update={"config": echo})
    explicit = config_from_flat({}).settings
    certify_report(report, recompute=True, settings=explicit)
    assert captured_settings == [explicit]


def test_table_without_echo_uses_default_settings(stored_table_path, captured_settings):
    certify_report(analyze_table(stored_table_path), recompute=True)
    assert captured_settings == [None]
