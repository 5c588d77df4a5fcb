import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from entanglement import T_ONE_PAIR, T_TWO_BELL_PAIRS
from entanglement.errors import EmptyDataError, RangeError
from entanglement.qstate import werner_state
from entanglement.witness import (CountTable, SettingsPair, chsh, exact_count_table, induced_witness,
                                  min_certifying_visibility, normalized_correlators, outcome_probabilities,
                                  pair_correlators, predict_T_from_S, predict_T_from_visibility, two_pair_state,
                                  witness_operators, witness_statistic)


def test_stored_fixture_reproduces_published_witness(stored_table):
    value = witness_statistic(stored_table)
    assert value.total == 749
    assert value.normalization == pytest.approx(187.25)
    assert value.T == pytest.approx(3.67, abs=0.01)
    assert value.sigma_T == pytest.approx(0.058, abs=0.005)
    assert_allclose(value.correlators, (0.98, 0.92, 0.88, -0.88), atol=0.01)
    assert value.raw_correlators == (185.0, 174.0, 164.0, -164.0)


def test_transmitted_fixture(transmitted_table):
    value = witness_statistic(transmitted_table)
    assert value.total == 1783
    assert value.T == pytest.approx(3.63, abs=0.01)


def test_witness_equals_sum_of_normalized_correlators(stored_table):
    c00, c01, c10, c11 = normalized_correlators(stored_table)
    assert witness_statistic(stored_table).T == pytest.approx(c00 + c01 + c10 - c11, rel=1e-12)


def test_sigma_matches_closed_form(stored_table):
    value = witness_statistic(stored_table)
    # per-count terms of the witness are +-1, so var T = 16 (1 - r^2) / D with r = T / 4
    r = value.T / 4
    assert value.sigma_T == pytest.approx(math.sqrt(16 * (1 - r ** 2) / value.total), rel=1e-12)


def test_witness_is_scale_invariant(stored_table):
    assert witness_statistic(stored_table.scaled(3.0)).T == pytest.approx(witness_statistic(stored_table).T)


def test_empty_table_has_no_witness():
    with pytest.raises(EmptyDataError):
        witness_statistic(CountTable.zeros())


def test_count_table_records_accumulate_repeated_cells():
    table = CountTable.from_records([(0, 0, 1, 1, 2), (0, 0, 1, 1, 3), (1, 1, -1, 1, 4)])
    assert table.cell(0, 0, 1, 1) == 5
    assert table.cell(1, 1, -1, 1) == 4
    assert table.total == 9
    assert len(table.records()) == 16


def test_count_table_rejects_invalid_entries():
    with pytest.raises(RangeError):
        CountTable.from_records([(2, 0, 1, 1, 1)])
    with pytest.raises(RangeError):
        CountTable.from_records([(0, 0, 1, 1, -1)])


@pytest.mark.parametrize("visibility", [0.0, 0.3, 0.6, 0.85, 0.912, 1.0])
def test_exact_table_reproduces_werner_formula(visibility):
    table = exact_count_table(two_pair_state(visibility), scale=1e6)
    T = witness_statistic(table).T
    assert T == pytest.approx(4 * math.sqrt(2) * visibility / (1 + visibility ** 2 / 2), abs=1e-10)


@pytest.mark.parametrize("visibility", [0.5, 0.912, 1.0])
def test_operator_ratio_matches_exact_table(visibility):
    A, B = witness_operators()
    rho = two_pair_state(visibility).matrix
    ratio = np.trace(A @ rho).real / np.trace(B @ rho).real
    assert ratio == pytest.approx(predict_T_from_visibility(visibility), abs=1e-10)


def test_two_bell_pair_operator_values():
    A, B = witness_operators()
    rho = two_pair_state(1.0).matrix
    assert np.trace(A @ rho).real == pytest.approx(math.sqrt(2), abs=1e-12)
    assert np.trace(B @ rho).real == pytest.approx(0.375, abs=1e-12)


def test_induced_witness_vanishes_at_the_state_ratio():
    rho = two_pair_state(0.9).matrix
    W = induced_witness(predict_T_from_visibility(0.9))
    assert np.trace(W @ rho).real == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(W, W.conj().T)


def test_bell_outcome_probabilities():
    probs = outcome_probabilities(werner_state(1.0), 0, 0)
    r = 1 / math.sqrt(2)
    assert_allclose(probs, [(1 + r) / 4, (1 - r) / 4, (1 - r) / 4, (1 + r) / 4], atol=1e-12)


def test_mirrored_frame_gives_chsh_pattern():
    correlators = pair_correlators(werner_state(1.0))
    r = 1 / math.sqrt(2)
    assert_allclose(correlators, (r, r, r, -r), atol=1e-12)
    assert chsh(correlators) == pytest.approx(2 * math.sqrt(2))


def test_direct_frame_loses_the_violation():
    correlators = pair_correlators(werner_state(1.0), SettingsPair(idler_frame="direct"))
    assert chsh(correlators) == pytest.approx(0.0, abs=1e-12)


def test_werner_chsh_scales_with_visibility():
    assert chsh(pair_correlators(werner_state(0.912))) == pytest.approx(2 * math.sqrt(2) * 0.912, abs=1e-12)


def test_chsh_rejects_out_of_range_correlators():
    with pytest.raises(RangeError):
        chsh((1.2, 0.0, 0.0, 0.0))
    with pytest.raises(RangeError):
        chsh((0.5, 0.5, 0.5))


def test_predictions():
    assert predict_T_from_S(2.58) == pytest.approx(3.64, abs=0.01)
    assert predict_T_from_visibility(1.0) == pytest.approx(3.7712, abs=1e-4)
    assert predict_T_from_visibility(1.0) == pytest.approx(T_TWO_BELL_PAIRS, abs=1e-12)
    assert predict_T_from_visibility(0.912) == pytest.approx(predict_T_from_S(2 * math.sqrt(2) * 0.912))


def test_minimum_certifying_visibility():
    v = min_certifying_visibility()
    assert v == pytest.approx(0.8517, abs=1e-4)
    assert predict_T_from_visibility(v) == pytest.approx(T_ONE_PAIR, abs=1e-12)


def test_prediction_ranges():
    with pytest.raises(RangeError):
        predict_T_from_visibility(-0.1)
    with pytest.raises(RangeError):
        predict_T_from_S(3.0)


def test_settings_must_be_unit_vectors():
    with pytest.raises(ValueError):
        SettingsPair(alice=((1.0, 1.0, 0.0), (0.0, 1.0, 0.0)))
    assert SettingsPair().is_standard()
    assert not SettingsPair(idler_frame="direct").is_standard()


@pytest.mark.parametrize("idler_frame", ["mirrored", "direct"])
def test_witness_operator_invariants(idler_frame):
    A, B = witness_operators(SettingsPair(idler_frame=idler_frame))
    assert_allclose(B, B.conj().T, atol=1e-12)
    assert_allclose(A, A.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(B)[0] >= -1e-10
    assert np.trace(B).real == pytest.approx(4.0, abs=1e-12)
    assert np.linalg.norm(A, 2) <= 4 + 1e-12
    # every state has ratio at most 4
    assert np.linalg.eigvalsh(4 * B - A)[0] >= -1e-10
