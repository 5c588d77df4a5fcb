import math

import numpy as np
import pytest

from entanglement import T_ONE_PAIR, T_PPT, T_TWO_BELL_PAIRS
from entanglement.certify import (certification_bounds, certify, certify_T, e_ppt, e_schmidt, max_ratio_bound,
                                  published_bounds, ratio_of, seesaw_one_pair, seesaw_schmidt, seesaw_separable,
                                  state_set)
from entanglement.errors import DegenerateStatisticsError, RangeError
from entanglement.state import BoundReport
from entanglement.witness import induced_witness, witness_operators, witness_statistic


@pytest.fixture(scope="module")
def operators():
    return witness_operators()


@pytest.fixture(scope="module")
def ppt_bound():
    return max_ratio_bound("ppt", cross_check=False)


def test_ppt_bound_is_two_root_two(ppt_bound):
    assert ppt_bound == pytest.approx(T_PPT, abs=1e-4)


def test_ppt_witness_is_tight_at_three(operators):
    # states invisible to B give Tr(W sigma) = 0, no PPT state goes below
    assert e_ppt(induced_witness(3.0, operators)) == pytest.approx(0.0, abs=2e-6)


def test_ppt_witness_detects_values_below_the_bound(operators):
    assert e_ppt(induced_witness(2.7, operators)) < -1e-3


def test_normalized_ppt_minimum(operators):
    _, B = operators
    value = e_ppt(induced_witness(3.0, operators), normalizer=B)
    assert value == pytest.approx(3 - 2 * math.sqrt(2), abs=1e-4)


def test_schmidt_two_witness_is_violated_at_the_one_pair_value(operators):
    # rho(1) diluted with invisible PPT states to negativity 1/2 already gives -0.0295
    assert e_schmidt(induced_witness(T_ONE_PAIR, operators), 2) < -0.029


def test_negativity_only_schmidt_bound_is_vacuous():
    # states invisible to B dilute any state to negativity 1/2, so only the trace cap limits the ratio
    assert max_ratio_bound("schmidt", 2, cross_check=False) == pytest.approx(4.0, abs=1e-3)


def test_pair_two_ppt_relaxation_is_achieved(operators, ppt_bound):
    A, B = operators
    relaxation = max_ratio_bound("one_pair", cross_check=False)
    achievable = seesaw_one_pair(A, B, restarts=20, seed=1)
    assert abs(achievable - relaxation) < 1e-3
    assert ppt_bound < relaxation < T_ONE_PAIR


def test_schmidt_rank_two_reaches_the_one_pair_bound(operators):
    A, B = operators
    result = seesaw_schmidt(A, B, rank=2, restarts=60, seed=0)
    assert result.ratio == pytest.approx(T_ONE_PAIR, abs=1e-3)
    assert result.ratio <= T_ONE_PAIR + 1e-6
    assert len(result.restart_ratios) == 60


def test_schmidt_rank_one_stays_below_the_ppt_bound(operators, ppt_bound):
    A, B = operators
    assert seesaw_schmidt(A, B, rank=1, restarts=20, seed=0).ratio <= ppt_bound + 1e-3


def test_schmidt_rank_is_validated(operators):
    A, B = operators
    with pytest.raises(RangeError):
        seesaw_schmidt(A, B, rank=5)


def test_certification_never_uses_less_than_an_achievable_rank_two_value():
    reports = published_bounds() + [
        BoundReport(constraint="pair_two_ppt", bound=3.5233, method="fractional_sdp"),
        BoundReport(constraint="schmidt_rank_2", bound=T_ONE_PAIR + 0.01, method="seesaw"),
    ]
    ppt, one_pair = certification_bounds(reports)
    assert ppt == pytest.approx(T_PPT)
    assert one_pair == pytest.approx(T_ONE_PAIR + 0.01)


def test_schmidt_minimum_is_non_increasing_in_k(operators):
    witness = induced_witness(T_ONE_PAIR, operators)
    values = [e_schmidt(witness, k) for k in (1, 2, 3, 4)]
    assert all(later <= earlier + 1e-6 for earlier, later in zip(values, values[1:]))
    assert values[0] == pytest.approx(e_ppt(witness), abs=1e-6)


def test_two_bell_pair_witness_is_not_violated_at_full_schmidt_number(operators):
    # rho(1) has T = 8*sqrt(2)/3 and Schmidt number 4
    assert e_schmidt(induced_witness(T_TWO_BELL_PAIRS, operators), 4) <= 1e-6


def test_ratio_bound_is_non_decreasing_in_k(ppt_bound):
    values = [max_ratio_bound("schmidt", k, cross_check=False) for k in (1, 2, 4)]
    assert all(later >= earlier - 1e-5 for earlier, later in zip(values, values[1:]))
    assert values[0] == pytest.approx(ppt_bound, abs=1e-5)
    assert values[-1] >= T_TWO_BELL_PAIRS - 1e-6


def test_separable_seesaw_saturates_the_ppt_bound(operators, ppt_bound):
    A, B = operators
    achievable = seesaw_separable(A, B, restarts=50, seed=0)
    assert achievable >= T_PPT - 1e-4
    assert achievable <= ppt_bound + 1e-3


def test_fractional_and_bisection_bounds_agree():
    # cross_check raises ConsistencyError on disagreement
    assert max_ratio_bound("ppt", cross_check=True) == pytest.approx(T_PPT, abs=1e-4)


def test_product_state_ratio_is_finite(operators):
    A, B = operators
    psi = np.zeros(16, dtype=complex)
    psi[0] = 1.0
    value = ratio_of(A, B, psi)
    assert math.isfinite(value)
    assert value <= T_PPT + 1e-9


def test_state_set_names():
    assert state_set("schmidt_2").negativity == pytest.approx(0.5)
    assert state_set("schmidt", 3, with_fidelity=True).fidelity == pytest.approx(0.75)
    assert state_set("one_pair").cuts == ((1,), (3,))
    with pytest.raises(RangeError):
        state_set("schmidt", 5)
    with pytest.raises(RangeError):
        state_set("entangled")


def test_certify_published_fixture(stored_table):
    verdict = certify(witness_statistic(stored_table))
    assert verdict.level == "more_than_one_pair"
    assert verdict.margin_sigmas == pytest.approx(2.29, abs=0.02)
    assert verdict.provenance == "published"


@pytest.mark.parametrize("T, sigma, level", [
    (3.67, 0.06, "more_than_one_pair"),
    (3.0, 0.05, "at_least_one_pair"),
    (2.0, 0.1, "none"),
])
def test_certify_levels(T, sigma, level):
    assert certify_T(T, sigma).level == level


def test_certify_margin_refers_to_the_relevant_bound():
    assert certify_T(3.0, 0.1).margin_sigmas == pytest.approx((3.0 - T_PPT) / 0.1)
    assert certify_T(2.0, 0.1).margin_sigmas == pytest.approx((2.0 - T_PPT) / 0.1)


def test_certify_rejects_degenerate_statistics():
    with pytest.raises(DegenerateStatisticsError):
        certify_T(T_PPT, 0.0)
    with pytest.raises(RangeError):
        certify_T(3.0, -0.1)
    assert certify_T(3.0, 0.0).margin_sigmas == math.inf


def test_published_bounds():
    ppt, one_pair = certification_bounds(published_bounds())
    assert ppt == pytest.approx(2 * math.sqrt(2))
    assert one_pair == pytest.approx(5 / math.sqrt(2))
