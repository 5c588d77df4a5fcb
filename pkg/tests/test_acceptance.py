import math

import numpy as np
import pandas as pd
import pytest

from conftest import PROFILES
from entanglement import T_ONE_PAIR, T_PPT
from entanglement.certify import certification_bounds, compute_bounds
from entanglement.witness import predict_T_from_S, predict_T_from_visibility
from entanglement.workflow import analyze_stream, certify_report, simulate_to_file
from tools.config_tools import load_config

pytestmark = pytest.mark.slow

# CHSH value of the reference source, with its quoted uncertainty
REFERENCE_CHSH = (2.58, 0.02)


@pytest.fixture(scope="module")
def acceptance_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    config = load_config(PROFILES / "acceptance.env", use_environment=False)
    summary = simulate_to_file(config, out / "events.csv")
    report = certify_report(analyze_stream(out / "events.csv", out))
    return config, summary, report, out


def test_enough_stored_fourfolds(acceptance_report):
    _, summary, report, _ = acceptance_report
    assert report.classes["stored-stored"].fourfolds >= 500
    assert summary["stored_fourfolds"] >= report.classes["stored-stored"].fourfolds


def test_stored_witness_matches_the_werner_prediction(acceptance_report):
    config, _, report, _ = acceptance_report
    witness = report.classes["stored-stored"].witness
    predicted = predict_T_from_visibility(config.visibility)
    assert abs(witness.T - predicted) < 3 * witness.sigma_T
    assert witness.T > T_PPT


def test_stored_witness_matches_the_chsh_prediction(acceptance_report):
    _, _, report, _ = acceptance_report
    witness = report.classes["stored-stored"].witness
    S, sigma_S = REFERENCE_CHSH
    predicted = predict_T_from_S(S)
    sigma_predicted = (predict_T_from_S(S + sigma_S) - predict_T_from_S(S - sigma_S)) / 2
    combined = math.hypot(witness.sigma_T, sigma_predicted)
    assert abs(witness.T - predicted) < 2 * combined


def test_stored_class_certifies_more_than_one_pair(acceptance_report):
    _, _, report, _ = acceptance_report
    assert report.verdict.level == "more_than_one_pair"
    assert report.verdict.margin_sigmas > 0
    assert math.isfinite(report.verdict.margin_sigmas)


def test_all_storage_modes_are_occupied(acceptance_report):
    _, _, report, _ = acceptance_report
    assert report.mode_capacity == 10


def test_pair_delay_envelope_is_triangular(acceptance_report):
    _, _, report, out = acceptance_report
    frame = pd.read_csv(out / report.histograms["delta_t"])
    inside = frame[(frame["bin_start_ps"] >= 5_000) & (frame["bin_start_ps"] < 50_000)]
    counts = inside["count"].to_numpy(dtype=float)
    assert counts.size == 9
    assert (counts > 0).all()
    assert counts[0] > counts[-1]
    # falls by ~55 per bin over ~2000 four-folds; allow three combined Poisson sigmas per step
    steps_ok = counts[1:] <= counts[:-1] + 3 * np.sqrt(counts[1:] + counts[:-1])
    assert steps_ok.all()
    slope, _ = np.polyfit(inside["bin_start_ps"].to_numpy(dtype=float) / 1000, counts, 1)
    assert slope < 0


def test_delay_scan_covers_the_storage_window(acceptance_report):
    _, _, report, _ = acceptance_report
    scan = report.delay_scan["stored-stored"]
    assert [row[0] for row in scan][:5] == [10.0, 20.0, 30.0, 40.0, 50.0]
    assert all(row[2] > 0 for row in scan)


def test_recomputed_bounds():
    reports = {r.constraint: r for r in compute_bounds(restarts=20)}
    assert reports["ppt"].bound == pytest.approx(T_PPT, abs=1e-4)
    assert not reports["ppt"].flagged
    assert reports["separable"].bound <= reports["ppt"].bound + 1e-3
    assert reports["one_pair_product"].bound == pytest.approx(reports["pair_two_ppt"].bound, abs=1e-3)
    assert reports["pair_two_ppt"].bound < T_ONE_PAIR
    assert reports["schmidt_2"].bound == pytest.approx(4.0, abs=1e-3)
    assert reports["schmidt_rank_2"].bound == pytest.approx(T_ONE_PAIR, abs=1e-3)
    ppt, one_pair = certification_bounds(list(reports.values()))
    assert ppt == pytest.approx(T_PPT, abs=1e-4)
    assert one_pair >= T_ONE_PAIR
    assert one_pair >= reports["schmidt_rank_2"].bound
