import json

import pytest

from app import EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, main
from entanglement import T_PPT


def _output(capsys):
    return json.loads(capsys.readouterr().out)


@pytest.fixture
def busy_source(monkeypatch):
    """Enough pairs per pulse for a handful of stored four-folds in one simulated second."""
    monkeypatch.setenv("ENTANGLEMENT_MEAN_PAIRS_PER_PULSE", "0.2")
    monkeypatch.setenv("ENTANGLEMENT_PULSE_SAMPLING", "multi_pair")


def test_predict_from_visibility(capsys):
    assert main(["predict", "--visibility", "0.912"]) == EXIT_OK
    output = _output(capsys)
    assert output["predicted_T"] == pytest.approx(3.643, abs=1e-3)
    assert output["min_certifying_visibility"] == pytest.approx(0.8517, abs=1e-4)
    assert output["input"] == {"visibility": 0.912}


def test_predict_from_chsh(capsys):
    assert main(["predict", "--chsh", "2.58"]) == EXIT_OK
    assert _output(capsys)["predicted_T"] == pytest.approx(3.64, abs=0.01)


def test_predict_out_of_range_is_an_input_error():
    assert main(["predict", "--visibility", "1.5"]) == EXIT_INPUT


def test_predict_needs_exactly_one_input():
    with pytest.raises(SystemExit):
        main(["predict"])


def test_certify_count_table(tmp_path, capsys, stored_table_path):
    assert main(["certify", str(stored_table_path), "--out-dir", str(tmp_path)]) == EXIT_OK
    printed = _output(capsys)
    report = json.loads((tmp_path / "report.json").read_text())
    assert printed == report
    assert report["verdict"]["level"] == "more_than_one_pair"
    assert report["verdict"]["provenance"] == "published"
    assert report["classes"]["table"]["witness"]["T"] == pytest.approx(3.669, abs=1e-3)
    assert (tmp_path / "run.log").is_file()


def test_certify_witness_value(capsys):
    assert main(["certify", "--T", "3.0", "--sigma", "0.05"]) == EXIT_OK
    assert _output(capsys)["verdict"]["level"] == "at_least_one_pair"


@pytest.mark.parametrize("argv", [
    ["certify"],
    ["certify", "--T", "3.0"],
    ["certify", "--T", "3.0", "--sigma", "-1"],
])
def test_certify_input_errors(argv):
    assert main(argv) == EXIT_INPUT


def test_certify_degenerate_statistics_is_numerical():
    assert main(["certify", "--T", repr(T_PPT), "--sigma", "0"]) == EXIT_NUMERICAL


def test_analyze_malformed_stream(tmp_path):
    path = tmp_path / "events.csv"
    path.write_text("time_ps,detector,pulse_index,setting_x,setting_y,path_tag\n1000,q+,0,0,0,\n")
    assert main(["analyze", str(path), "--out-dir", str(tmp_path / "out")]) == EXIT_INPUT


def test_analyze_count_table(tmp_path, capsys, transmitted_table_path):
    assert main(["analyze", str(transmitted_table_path), "--out-dir", str(tmp_path)]) == EXIT_OK
    report = _output(capsys)
    assert report["verdict"] is None
    assert report["classes"]["table"]["fourfolds"] == 1783


def test_published_bounds(capsys):
    assert main(["bounds"]) == EXIT_OK
    bounds = {b["constraint"]: b["bound"] for b in _output(capsys)}
    assert bounds["ppt"] == pytest.approx(2.8284, abs=1e-4)
    assert bounds["one_pair"] == pytest.approx(3.5355, abs=1e-4)


def test_simulate_then_analyze(tmp_path, capsys, busy_source):
    events = tmp_path / "run" / "events.csv"
    assert main(["simulate", "--out", str(events), "--duration-s", "0.2", "--seed", "4"]) == EXIT_OK
    summary = _output(capsys)
    assert summary["events"] > 0
    assert events.is_file()
    assert (tmp_path / "run" / "events.csv.config").is_file()

    out = tmp_path / "analysis"
    assert main(["analyze", str(events), "--out-dir", str(out)]) == EXIT_OK
    report = _output(capsys)
    assert report["seed"] == 4
    assert set(report["classes"]) == {"stored-stored", "stored-transmitted", "transmitted-stored",
                                      "transmitted-transmitted"}
    assert report["windows_ns"]["max_delay_ns"] == 50.0
    for name in report["histograms"].values():
        assert (out / name).is_file()


def test_reruns_are_byte_identical(tmp_path, capsys, busy_source):
    for run in ("a", "b"):
        events = tmp_path / run / "events.csv"
        assert main(["simulate", "--out", str(events), "--duration-s", "0.1"]) == EXIT_OK
        assert main(["analyze", str(events), "--out-dir", str(tmp_path / run / "out")]) == EXIT_OK
    capsys.readouterr()
    assert (tmp_path / "a" / "events.csv").read_bytes() == (tmp_path / "b" / "events.csv").read_bytes()
    assert (tmp_path / "a" / "out" / "report.json").read_bytes() == (tmp_path / "b" / "out" / "report.json").read_bytes()


def test_pipeline(tmp_path, capsys, busy_source):
    assert main(["pipeline", "--out-dir", str(tmp_path), "--duration-s", "1.0", "--seed", "8"]) == EXIT_OK
    report = _output(capsys)
    assert report["verdict"]["level"] in ("none", "at_least_one_pair", "more_than_one_pair")
    assert report["classes"]["stored-stored"]["fourfolds"] > 0
    assert (tmp_path / "events.csv").is_file()
    assert (tmp_path / "report.json").is_file()
