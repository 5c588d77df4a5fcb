import functools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from tqdm import tqdm

from entanglement import IDLERS, SIGNALS, T_ONE_PAIR, T_PPT, T_TWO_BELL_PAIRS
from entanglement.errors import BracketError, ConsistencyError, DegenerateStatisticsError, RangeError
from entanglement.qstate import partial_transpose_matrix
from entanglement.sdp import SdpConstraint, SdpProblem, SdpSolution, require_optimal, solve_sdp
from entanglement.state import BoundReport, CertificationVerdict, WitnessValue
from entanglement.witness import SettingsPair, induced_witness, two_pair_state, witness_operators

logger = logging.getLogger(__name__)

DIMS = (2, 2, 2, 2)
DIM = 16
TRACE_CAP = 100.0
BISECTION_RANGE = (2.0, 4.0)
BISECTION_ITERATIONS = 40
BISECTION_TOLERANCE = 1e-6
CONSISTENCY_TOLERANCE = 1e-3
SEESAW_RESTARTS = 50

# PPT on the second pair's signal and idler: relaxation of "pair 1 arbitrary, pair 2 separable"
ONE_PAIR_CUTS = ((1,), (3,))


@dataclass(frozen=True)
class StateSet:
    """
    Convex relaxation of a set of two-pair states.

    Attributes:
        name (str): Label used in reports.
        cuts (tuple): Subsystem sets whose partial transpose is constrained.
        negativity (float | None): Cap on the negativity of the (single) cut, in units of Tr(sigma).
        fidelity (float | None): Cap on Tr(Phi sigma) / Tr(sigma), Phi the two-Bell-pair state.
    """
    name: str
    cuts: tuple[tuple[int, ...], ...] = (SIGNALS,)
    negativity: float | None = None
    fidelity: float | None = None


def state_set(constraint: str, k: int | None = None, with_fidelity: bool = False) -> StateSet:
    """
    Parses a constraint name: 'ppt', 'schmidt' (with k) or 'schmidt_<k>', and 'one_pair'.
    """
    if constraint.startswith("schmidt_") and k is None:
        constraint, k = "schmidt", int(constraint.split("_", 1)[1])
    if constraint == "ppt":
        return StateSet("ppt")
    if constraint == "one_pair":
        return StateSet("one_pair", cuts=ONE_PAIR_CUTS)
    if constraint == "schmidt":
        if k not in (1, 2, 3, 4):
            raise RangeError(f"Schmidt number must be 1, 2, 3 or 4, got {k}")
        if k == 1:
            # negativity zero leaves no interior point; the PPT form is the same set
            return StateSet("schmidt_1")
        name = f"schmidt_{k}" + ("_fidelity" if with_fidelity else "")
        return StateSet(name, negativity=(k - 1) / 2, fidelity=k / 4 if with_fidelity else None)
    raise RangeError(f"unknown constraint {constraint!r}")


@functools.lru_cache(maxsize=None)
def _hermitian_basis(d: int) -> tuple[np.ndarray, ...]:
    """Orthonormal basis of d x d Hermitian matrices under the trace inner product."""
    basis = []
    for p in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[p, p] = 1
        basis.append(e)
    for p in range(d):
        for q in range(p + 1, d):
            sym = np.zeros((d, d), dtype=complex)
            sym[p, q] = sym[q, p] = 1 / math.sqrt(2)
            anti = np.zeros((d, d), dtype=complex)
            anti[p, q], anti[q, p] = 1j / math.sqrt(2), -1j / math.sqrt(2)
            basis.extend((sym, anti))
    return tuple(basis)


def _program(objective: np.ndarray, states: StateSet, normalizer: np.ndarray | None = None,
             sense: str = "min", trace_cap: float = TRACE_CAP) -> SdpProblem:
    """
    Builds min/max Tr(objective sigma) over the relaxation `states`.

    With normalizer None, sigma has unit trace. Otherwise Tr(normalizer sigma) = 1 and the trace is capped,
    Tr(sigma) + t = trace_cap, which keeps the program bounded on the kernel of the normalizer.
    """
    identity = np.eye(DIM, dtype=complex)
    one = np.ones((1, 1), dtype=complex)
    blocks, objectives, bounds, constraints = [DIM], [objective], [], []
    sigma_bound = 1.0 if normalizer is None else trace_cap

    def add_block(d: int, trace_bound: float) -> int:
        blocks.append(d)
        objectives.append(np.zeros((d, d), dtype=complex))
        bounds.append(trace_bound)
        return len(blocks) - 1

    bounds.append(sigma_bound)
    if normalizer is None:
        constraints.append(SdpConstraint({0: identity}, 1.0))
    else:
        constraints.append(SdpConstraint({0: normalizer}, 1.0))
        cap = add_block(1, trace_cap)
        constraints.append(SdpConstraint({0: identity, cap: one}, trace_cap))

    if states.negativity is not None and len(states.cuts) != 1:
        raise RangeError("a negativity cap needs exactly one cut")

    for cut in states.cuts:
        if states.negativity is None:
            positive = add_block(DIM, sigma_bound)
            for e in _hermitian_basis(DIM):
                # Tr(E sigma^G) = Tr(E^G sigma)
                constraints.append(SdpConstraint({0: partial_transpose_matrix(e, DIMS, cut), positive: -e}, 0.0))
        else:
            c = states.negativity
            plus = add_block(DIM, (1 + c) * sigma_bound)
            minus = add_block(DIM, c * sigma_bound)
            slack = add_block(1, c * sigma_bound)
            for e in _hermitian_basis(DIM):
                constraints.append(SdpConstraint(
                    {0: partial_transpose_matrix(e, DIMS, cut), plus: -e, minus: e}, 0.0))
            constraints.append(SdpConstraint({minus: identity, slack: one, 0: -c * identity}, 0.0))

    if states.fidelity is not None:
        phi = two_pair_state(1.0).matrix
        slack = add_block(1, states.fidelity * sigma_bound)
        constraints.append(SdpConstraint({0: phi - states.fidelity * identity, slack: one}, 0.0))

    return SdpProblem(blocks=blocks, objective=objectives, constraints=constraints, sense=sense,
                      trace_bounds=bounds)


def _minimize(W: np.ndarray, states: StateSet, normalizer: np.ndarray | None = None) -> float:
    offset = 0.0
    if normalizer is not None:
        # Tr(N sigma) = 1 on the feasible set, so the component of W along N is a constant
        offset = float(np.vdot(normalizer, W).real / np.vdot(normalizer, normalizer).real)
        W = W - offset * normalizer
    solution = require_optimal(solve_sdp(_program(W, states, normalizer)), f"minimum over {states.name}")
    return solution.bound + offset


# --- Operations ---

def e_ppt(W: np.ndarray, normalizer: np.ndarray | None = None) -> float:
    """
    Certified lower bound on min Tr(W sigma) over PPT states (signals | idlers cut).

    Args:
        W (np.ndarray): Hermitian 16x16 operator.
        normalizer (np.ndarray | None): If given, minimize under Tr(normalizer sigma) = 1 instead of unit trace.

    Returns:
        float: The dual bound.
    """
    return _minimize(W, state_set("ppt"), normalizer)


def e_schmidt(W: np.ndarray, k: int, normalizer: np.ndarray | None = None, with_fidelity: bool = False) -> float:
    """Certified lower bound on min Tr(W sigma) over states with negativity <= (k-1)/2."""
    return _minimize(W, state_set("schmidt", k, with_fidelity), normalizer)


def _fractional_bound(states: StateSet, operators: tuple[np.ndarray, np.ndarray]) -> SdpSolution:
    A, B = operators
    solution = solve_sdp(_program(A, states, normalizer=B, sense="max"))
    return require_optimal(solution, f"ratio bound over {states.name}")


def bisection_bound(states: StateSet, operators: tuple[np.ndarray, np.ndarray],
                    bracket: tuple[float, float] = BISECTION_RANGE,
                    iterations: int = BISECTION_ITERATIONS, tolerance: float = BISECTION_TOLERANCE) -> float:
    """
    Largest T for which some state of the set has Tr(W(T) sigma) < 0, found by bisection.

    Raises:
        BracketError: If the bracket does not contain the bound.
    """

    def exceeded(T: float) -> bool:
        return _minimize(induced_witness(T, operators), states) < -tolerance

    lo, hi = bracket
    if not exceeded(lo) or exceeded(hi):
        raise BracketError(f"[{lo}, {hi}] does not bracket the ratio bound over {states.name}")
    for _ in tqdm(range(iterations), desc=f"bisection {states.name}", leave=False, disable=None):
        mid = (lo + hi) / 2
        if exceeded(mid):
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def max_ratio_bound(constraint: str = "ppt", k: int | None = None, settings: SettingsPair | None = None,
                    cross_check: bool = True, with_fidelity: bool = False) -> float:
    """
    Largest Tr(A sigma)/Tr(B sigma) over a constrained state set, as the fractional program
    max Tr(A s) s.t. Tr(B s) = 1, s in the cone over the set.

    Args:
        constraint (str): 'ppt', 'schmidt' (with k), 'schmidt_<k>' or 'one_pair'.
        k (int | None): Schmidt number for 'schmidt'.
        settings (SettingsPair | None): Measurement settings, defaults to the CHSH-optimal ones.
        cross_check (bool): Re-derive the value by bisection on T and compare.
        with_fidelity (bool): Add the two-Bell-pair fidelity Schmidt witness to the Schmidt constraint.

    Returns:
        float: Certified upper bound on the witness value over the set.
    """
    return _ratio_bound(state_set(constraint, k, with_fidelity), witness_operators(settings), cross_check)[0]


def _ratio_bound(states: StateSet, operators, cross_check: bool) -> tuple[float, SdpSolution, float | None]:
    solution = _fractional_bound(states, operators)
    value = solution.bound
    bisected = None
    if cross_check:
        bisected = bisection_bound(states, operators)
        if abs(bisected - value) > CONSISTENCY_TOLERANCE:
            raise ConsistencyError(f"{states.name}: fractional bound {value:.6f} and bisection {bisected:.6f} "
                                   f"differ by more than {CONSISTENCY_TOLERANCE}")
    return value, solution, bisected


# --- See-saw ---

@dataclass(frozen=True)
class SeesawResult:
    ratio: float
    vectors: tuple[np.ndarray, ...]
    restart_ratios: tuple[float, ...]


def ratio_of(A: np.ndarray, B: np.ndarray, psi: np.ndarray) -> float:
    denominator = float(np.vdot(psi, B @ psi).real)
    if denominator <= 0:
        return -math.inf
    return float(np.vdot(psi, A @ psi).real) / denominator


def _embedding(vectors: Sequence[np.ndarray], groups, dims, g: int) -> np.ndarray:
    """Isometry phi -> (product of the other group vectors with phi in slot g), in natural subsystem order."""
    factors = [np.eye(len(v)) if h == g else v.reshape(-1, 1) for h, v in enumerate(vectors)]
    iso = functools.reduce(np.kron, factors)
    order = [s for group in groups for s in group]
    iso = iso.reshape([dims[s] for s in order] + [iso.shape[1]])
    iso = iso.transpose(list(np.argsort(order)) + [len(order)])
    return iso.reshape(-1, iso.shape[-1])


def _best_vector(a_eff: np.ndarray, b_eff: np.ndarray) -> tuple[np.ndarray | None, float]:
    """Maximizer of <v|a|v>/<v|b|v>, restricted to the range of b."""
    lam, u = np.linalg.eigh((b_eff + b_eff.conj().T) / 2)
    keep = lam > 1e-12 * max(float(lam[-1]), 0.0)
    if lam[-1] <= 0 or not keep.any():
        return None, -math.inf
    whiten = u[:, keep] / np.sqrt(lam[keep])
    m = whiten.conj().T @ a_eff @ whiten
    values, vecs = np.linalg.eigh((m + m.conj().T) / 2)
    best = whiten @ vecs[:, -1]
    return best / np.linalg.norm(best), float(values[-1])


def _seesaw_run(A, B, groups, dims, rng: np.random.Generator, tolerance: float, max_iterations: int):
    sizes = [math.prod(dims[s] for s in group) for group in groups]
    vectors = []
    for size in sizes:
        v = rng.normal(size=size) + 1j * rng.normal(size=size)
        vectors.append(v / np.linalg.norm(v))
    ratio = -math.inf
    for _ in range(max_iterations):
        value = ratio
        for g in range(len(groups)):
            iso = _embedding(vectors, groups, dims, g)
            vec, value = _best_vector(iso.conj().T @ A @ iso, iso.conj().T @ B @ iso)
            if vec is not None:
                vectors[g] = vec
        if value - ratio <= tolerance:
            ratio = max(ratio, value)
            break
        ratio = value
    psi = _embedding(vectors, groups, dims, 0) @ vectors[0]
    return ratio_of(A, B, psi), tuple(vectors)


def seesaw(A: np.ndarray, B: np.ndarray, groups, dims=DIMS, restarts: int = SEESAW_RESTARTS, seed: int = 0,
           tolerance: float = 1e-10, max_iterations: int = 500, threads: int = 1) -> SeesawResult:
    """Alternating maximization of the ratio over product vectors with one factor per subsystem group."""
    return _best_of_restarts(
        lambda rng: _seesaw_run(A, B, groups, dims, rng, tolerance, max_iterations), restarts, seed, threads)


def _best_of_restarts(run_one, restarts: int, seed: int, threads: int, desc: str = "see-saw") -> SeesawResult:
    if restarts < 1:
        raise RangeError("see-saw needs at least one restart")
    children = np.random.SeedSequence(seed).spawn(restarts)

    def run(child):
        return run_one(np.random.default_rng(child))

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(tqdm(pool.map(run, children), total=restarts, desc=desc, leave=False, disable=None))
    ratios = tuple(r for r, _ in results)
    best = int(np.argmax(ratios))
    return SeesawResult(ratio=ratios[best], vectors=results[best][1], restart_ratios=ratios)


def _schmidt_run(A, B, rank: int, rng: np.random.Generator, tolerance: float, max_iterations: int):
    """
    Climbs over psi = vec(U V^T), U and V 4 x rank: vectors of Schmidt rank <= rank across signals | idlers.
    Each half-step is the exact maximizer for the other factor held fixed.
    """
    factors = [rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank)) for _ in range(2)]
    factors = [f / np.linalg.norm(f) for f in factors]
    identity = np.eye(4)
    ratio = -math.inf
    for _ in range(max_iterations):
        value = ratio
        # psi[4i + j] = sum_k U[i, k] V[j, k]; linear in U.ravel() via I x V, in V^T.ravel() via U x I
        iso = np.kron(identity, factors[1])
        vec, value = _best_vector(iso.conj().T @ A @ iso, iso.conj().T @ B @ iso)
        if vec is not None:
            factors[0] = vec.reshape(4, rank)
        iso = np.kron(factors[0], identity)
        vec, value = _best_vector(iso.conj().T @ A @ iso, iso.conj().T @ B @ iso)
        if vec is not None:
            factors[1] = vec.reshape(rank, 4).T
        if value - ratio <= tolerance:
            ratio = max(ratio, value)
            break
        ratio = value
    psi = (factors[0] @ factors[1].T).reshape(-1)
    return ratio_of(A, B, psi / np.linalg.norm(psi)), tuple(factors)


def seesaw_schmidt(A: np.ndarray, B: np.ndarray, rank: int = 2, restarts: int = SEESAW_RESTARTS, seed: int = 0,
                   tolerance: float = 1e-10, max_iterations: int = 500, threads: int = 1) -> SeesawResult:
    """
    Achievable ratio over pure states of Schmidt rank <= `rank` across signals | idlers. Mixtures of such
    states cannot exceed the best pure one, so this is a lower bound on the Schmidt-number-`rank` maximum.
    """
    if rank not in (1, 2, 3, 4):
        raise RangeError(f"Schmidt rank must be 1, 2, 3 or 4, got {rank}")
    return _best_of_restarts(
        lambda rng: _schmidt_run(A, B, rank, rng, tolerance, max_iterations), restarts, seed, threads,
        desc=f"see-saw rank {rank}")


def seesaw_separable(A: np.ndarray, B: np.ndarray, restarts: int = SEESAW_RESTARTS, seed: int = 0,
                     threads: int = 1) -> float:
    """Achievable ratio over product vectors alpha (signals) x beta (idlers): a lower bound on the separable max."""
    return seesaw(A, B, (SIGNALS, IDLERS), restarts=restarts, seed=seed, threads=threads).ratio


def seesaw_one_pair(A: np.ndarray, B: np.ndarray, restarts: int = SEESAW_RESTARTS, seed: int = 0,
                    threads: int = 1) -> float:
    """Achievable ratio with pair 1 in an arbitrary pure state and pair 2 in a product state."""
    return seesaw(A, B, ((0, 2), (1,), (3,)), restarts=restarts, seed=seed, threads=threads).ratio


# --- Verdicts ---

def certify(value: WitnessValue, ppt_bound: float = T_PPT, one_pair_bound: float = T_ONE_PAIR,
            provenance: str = "published") -> CertificationVerdict:
    return certify_T(value.T, value.sigma_T, ppt_bound, one_pair_bound, provenance)


def certify_T(T: float, sigma: float, ppt_bound: float = T_PPT, one_pair_bound: float = T_ONE_PAIR,
              provenance: str = "published") -> CertificationVerdict:
    if sigma < 0 or not math.isfinite(T):
        raise RangeError(f"need a finite T and a non-negative sigma, got T = {T}, sigma = {sigma}")
    if sigma == 0 and T in (ppt_bound, one_pair_bound):
        raise DegenerateStatisticsError(f"T = {T} sits exactly on a bound with zero uncertainty")

    if T > one_pair_bound:
        level, reference = "more_than_one_pair", one_pair_bound
    elif T > ppt_bound:
        level, reference = "at_least_one_pair", ppt_bound
    else:
        level, reference = "none", ppt_bound
    margin = (T - reference) / sigma if sigma > 0 else math.copysign(math.inf, T - reference)
    return CertificationVerdict(level=level, margin_sigmas=margin, T=T, sigma_T=sigma, ppt_bound=ppt_bound,
                                one_pair_bound=one_pair_bound, provenance=provenance)


def published_bounds() -> list[BoundReport]:
    return [
        BoundReport(constraint="ppt", bound=T_PPT, method="published", published=T_PPT,
                    note="2*sqrt(2), shipped constant"),
        BoundReport(constraint="one_pair", bound=T_ONE_PAIR, method="published", published=T_ONE_PAIR,
                    note="5/sqrt(2), shipped constant"),
    ]


def _sdp_report(states: StateSet, operators, published: float | None, tolerance: float,
                cross_check: bool, note: str = "", label: str | None = None) -> BoundReport:
    label = label or states.name
    logger.info("  bound over %s ...", label)
    value, solution, bisected = _ratio_bound(states, operators, cross_check)
    flagged = published is not None and abs(value - published) > tolerance
    if flagged:
        logger.warning("  %s bound %.6f differs from the published %.6f", label, value, published)
    if bisected is not None:
        note = (note + " " if note else "") + f"bisection {bisected:.6f}"
    return BoundReport(constraint=label, bound=value, gap=solution.gap, method="fractional_sdp",
                       iterations=solution.iterations, published=published, flagged=flagged, note=note)


def _seesaw_report(label: str, result: SeesawResult, restarts: int, published: float | None, flagged: bool,
                   note: str) -> BoundReport:
    return BoundReport(constraint=label, bound=result.ratio, gap=result.ratio - min(result.restart_ratios),
                       method="seesaw", iterations=restarts, published=published, flagged=flagged, note=note)


def compute_bounds(settings: SettingsPair | None = None, restarts: int = SEESAW_RESTARTS, seed: int = 0,
                   threads: int = 1, cross_check: bool = True) -> list[BoundReport]:
    """
    Recomputes every bound: the PPT bound, the Schmidt-2 relaxations, the relaxation with the second pair
    PPT, the see-saw achievability values and the one-pair bound used for certification.

    No convex relaxation of Schmidt number 2 used here is tight: the negativity-only one is diluted by states
    invisible to B up to the two-Bell-pair corner of 4. The certified one-pair bound is therefore the larger of
    the shipped 5/sqrt(2) and the rank-2 see-saw value, never the relaxation with pair 2 PPT, which only
    covers "pair 1 arbitrary, pair 2 separable".
    """
    logger.info("---BOUNDS---")
    operators = witness_operators(settings)
    A, B = operators
    reports = [
        _sdp_report(state_set("ppt"), operators, T_PPT, 1e-4, cross_check),
        _sdp_report(state_set("schmidt", 2), operators, T_ONE_PAIR, CONSISTENCY_TOLERANCE, cross_check,
                    note="negativity <= 1/2 only; states invisible to B dilute it to the trivial bound 4"),
        _sdp_report(state_set("schmidt", 2, with_fidelity=True), operators, T_ONE_PAIR, CONSISTENCY_TOLERANCE,
                    cross_check, note="negativity and two-Bell-pair fidelity <= 1/2"),
        _sdp_report(state_set("one_pair"), operators, None, CONSISTENCY_TOLERANCE, cross_check,
                    note="PPT on the second pair's signal and idler; pair 2 separable only", label="pair_two_ppt"),
    ]
    logger.info("  see-saw over separable product vectors ...")
    separable = seesaw(A, B, (SIGNALS, IDLERS), restarts=restarts, seed=seed, threads=threads)
    reports.append(_seesaw_report("separable", separable, restarts, T_PPT, separable.ratio > T_PPT + 1e-6,
                                  "achievable value, lower bound on the separable maximum"))
    logger.info("  see-saw with one entangled pair ...")
    one_pair = seesaw(A, B, ((0, 2), (1,), (3,)), restarts=restarts, seed=seed, threads=threads)
    reports.append(_seesaw_report("one_pair_product", one_pair, restarts, None, False,
                                  "achievable value, pair 2 in a product state"))
    logger.info("  see-saw over Schmidt rank 2 ...")
    rank_two = seesaw_schmidt(A, B, 2, restarts=restarts, seed=seed, threads=threads)
    rank_two_flagged = abs(rank_two.ratio - T_ONE_PAIR) > CONSISTENCY_TOLERANCE
    if rank_two_flagged:
        logger.warning("  Schmidt rank 2 see-saw %.6f differs from the published %.6f", rank_two.ratio, T_ONE_PAIR)
    reports.append(_seesaw_report("schmidt_rank_2", rank_two, restarts, T_ONE_PAIR, rank_two_flagged,
                                  "achievable value over Schmidt rank <= 2 across signals | idlers"))
    certified = max(T_ONE_PAIR, rank_two.ratio)
    reports.append(BoundReport(
        constraint="one_pair", bound=certified, method="seesaw" if rank_two.ratio > T_ONE_PAIR else "published",
        published=T_ONE_PAIR, flagged=rank_two_flagged,
        note="max of 5/sqrt(2) and the rank-2 see-saw; no tight Schmidt-2 relaxation is available"))
    reports.append(BoundReport(constraint="two_bell_pairs", bound=T_TWO_BELL_PAIRS, method="analytic",
                               published=T_TWO_BELL_PAIRS, note="value of rho(1), 8*sqrt(2)/3"))
    return reports


def certification_bounds(reports: Sequence[BoundReport]) -> tuple[float, float]:
    """
    (PPT bound, one-pair bound) to certify with, taken from recomputed reports. The one-pair bound never drops
    below an achievable Schmidt-rank-2 value.
    """
    by_name = {r.constraint: r.bound for r in reports}
    one_pair = max(by_name["one_pair"], by_name.get("schmidt_rank_2", -math.inf))
    return by_name["ppt"], one_pair
