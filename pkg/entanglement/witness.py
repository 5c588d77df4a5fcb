import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from entanglement import T_ONE_PAIR, TOL_ALGEBRA
from entanglement.errors import EmptyDataError, InvalidStateError, RangeError
from entanglement.qstate import BlochVector, DensityMatrix, pauli_along, permute_subsystems, projector, tensor, \
    werner_state
from entanglement.state import WitnessValue

logger = logging.getLogger(__name__)

OUTCOMES = (1, -1)
SETTINGS = ((0, 0), (0, 1), (1, 0), (1, 1))
# s_xy in the witness combination C00 + C01 + C10 - C11
SIGN_PATTERN = {(0, 0): 1, (0, 1): 1, (1, 0): 1, (1, 1): -1}

Vector3 = Tuple[float, float, float]
_ROOT_HALF = 1 / math.sqrt(2)


# --- Settings ---

class SettingsPair(BaseModel):
    """
    Measurement directions of both parties.

    Attributes:
        alice (Tuple[Vector3, Vector3]): Signal analyzer directions v_0, v_1.
        bob (Tuple[Vector3, Vector3]): Idler analyzer directions w_0, w_1.
        idler_frame (str): 'mirrored' builds idler projectors along (w_x, -w_y, w_z), i.e. the transposed
                           projector, so that |phi+> gives E_xy = v_x . w_y. 'direct' uses w as given.
    """
    model_config = ConfigDict(frozen=True)

    alice: Tuple[Vector3, Vector3] = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0))
    bob: Tuple[Vector3, Vector3] = ((_ROOT_HALF, _ROOT_HALF, 0.0), (_ROOT_HALF, -_ROOT_HALF, 0.0))
    idler_frame: Literal["mirrored", "direct"] = "mirrored"

    @field_validator("alice", "bob")
    @classmethod
    def _unit_vectors(cls, vectors):
        return tuple(
            (v.x, v.y, v.z) for v in (BlochVector.from_components(components) for components in vectors)
        )

    def signal_vector(self, x: int) -> BlochVector:
        return BlochVector(*self.alice[x])

    def idler_vector(self, y: int) -> BlochVector:
        """Direction actually used in the idler projectors (frame applied)."""
        w = BlochVector(*self.bob[y])
        return w.mirrored() if self.idler_frame == "mirrored" else w

    def is_standard(self) -> bool:
        default = SettingsPair()
        return all(
            np.allclose(getattr(self, party), getattr(default, party), atol=1e-9) for party in ("alice", "bob")
        ) and self.idler_frame == default.idler_frame


def _outcome_index(outcome: int) -> int:
    return 0 if outcome == 1 else 1


def _coefficients() -> np.ndarray:
    """s_xy * a * b laid out like CountTable.counts."""
    coeff = np.zeros((2, 2, 2, 2))
    for (x, y), a, b in itertools.product(SETTINGS, OUTCOMES, OUTCOMES):
        coeff[x, y, _outcome_index(a), _outcome_index(b)] = SIGN_PATTERN[(x, y)] * a * b
    return coeff


# --- Count tables ---

@dataclass(frozen=True, eq=False)
class CountTable:
    """
    Four-fold rates N_{ab,-a-b|xy} indexed counts[x, y, ia, ib], with ia = 0 for a = +1 and 1 for a = -1.
    Counts are usually integers; exact-probability tables carry real rates.
    """
    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=float)
        if counts.shape != (2, 2, 2, 2):
            raise RangeError(f"count table must have shape (2, 2, 2, 2), got {counts.shape}")
        if not np.all(np.isfinite(counts)) or np.any(counts < 0):
            raise RangeError("count table entries must be finite and non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def zeros(cls) -> "CountTable":
        return cls(np.zeros((2, 2, 2, 2)))

    @classmethod
    def from_records(cls, records: Iterable[Sequence]) -> "CountTable":
        """Builds a table from (x, y, a, b, count) rows; repeated cells accumulate."""
        counts = np.zeros((2, 2, 2, 2))
        for x, y, a, b, count in records:
            if x not in (0, 1) or y not in (0, 1) or a not in OUTCOMES or b not in OUTCOMES:
                raise RangeError(f"invalid cell ({x}, {y}, {a}, {b})")
            counts[x, y, _outcome_index(a), _outcome_index(b)] += count
        return cls(counts)

    def cell(self, x: int, y: int, a: int, b: int) -> float:
        return float(self.counts[x, y, _outcome_index(a), _outcome_index(b)])

    def records(self) -> list[list]:
        rows = []
        for (x, y), a, b in itertools.product(SETTINGS, OUTCOMES, OUTCOMES):
            value = self.cell(x, y, a, b)
            rows.append([x, y, a, b, int(value) if value.is_integer() else value])
        return rows

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def scaled(self, factor: float) -> "CountTable":
        return CountTable(self.counts * factor)

    def __add__(self, other: "CountTable") -> "CountTable":
        return CountTable(self.counts + other.counts)


def correlator(table: CountTable, x: int, y: int) -> float:
    """Raw correlator sum_ab ab N_{ab,-a-b|xy}."""
    block = table.counts[x, y]
    return float(block[0, 0] + block[1, 1] - block[0, 1] - block[1, 0])


def normalization(table: CountTable) -> float:
    total = table.total
    if total <= 0:
        raise EmptyDataError("count table is empty")
    return total / 4


def normalized_correlators(table: CountTable) -> tuple[float, float, float, float]:
    n = normalization(table)
    return tuple(correlator(table, x, y) / n for x, y in SETTINGS)


def witness_statistic(table: CountTable) -> WitnessValue:
    """
    Computes T = (C00 + C01 + C10 - C11) / N with Poisson error propagation.

    Every count is an independent Poisson variable, so var(f) = sum_i n_i (df/dn_i)^2 to first order.
    Correlator uncertainties are propagated through the global N.
    """
    n = table.counts
    total = table.total
    if total <= 0:
        raise EmptyDataError("count table is empty; no witness value can be formed")

    coeff = _coefficients()
    weighted = float((coeff * n).sum())
    T = 4 * weighted / total
    grad_T = 4 * (coeff - weighted / total) / total
    sigma_T = math.sqrt(float((n * grad_T ** 2).sum()))

    raw, normed, sigmas = [], [], []
    for x, y in SETTINGS:
        c = correlator(table, x, y)
        mask = np.zeros_like(n)
        mask[x, y] = [[1, -1], [-1, 1]]
        grad = 4 * mask / total - 4 * c / total ** 2
        raw.append(c)
        normed.append(4 * c / total)
        sigmas.append(math.sqrt(float((n * grad ** 2).sum())))

    return WitnessValue(
        T=T,
        sigma_T=sigma_T,
        correlators=tuple(normed),
        correlator_sigmas=tuple(sigmas),
        raw_correlators=tuple(raw),
        normalization=total / 4,
        total=total,
    )


# --- Operators ---

def _fourfold_projector(settings: SettingsPair, x: int, y: int, a: int, b: int) -> np.ndarray:
    v, w = settings.signal_vector(x), settings.idler_vector(y)
    return tensor(projector(v, a), projector(v, -a), projector(w, b), projector(w, -b))


def witness_operators(settings: SettingsPair | None = None) -> tuple[np.ndarray, np.ndarray]:
    """
    Returns (A, B) on (signal1, signal2, idler1, idler2) such that for any state the witness statistic of its
    exact rates is Tr(A rho) / Tr(B rho).
    """
    settings = settings or SettingsPair()
    A = np.zeros((16, 16), dtype=complex)
    B = np.zeros((16, 16), dtype=complex)
    for (x, y), a, b in itertools.product(SETTINGS, OUTCOMES, OUTCOMES):
        q = _fourfold_projector(settings, x, y, a, b)
        A += SIGN_PATTERN[(x, y)] * a * b * q
        B += q / 4
    return A, B


def induced_witness(T: float, operators: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """W(T) = T B - A; zero expectation on every state whose ratio Tr(A rho)/Tr(B rho) equals T."""
    A, B = operators if operators is not None else witness_operators()
    return T * B - A


def two_pair_state(visibility: float, second_visibility: float | None = None) -> DensityMatrix:
    """rho_W(V1) x rho_W(V2) reordered to (signal1, signal2, idler1, idler2), party A = signals."""
    first = werner_state(visibility).matrix
    second = werner_state(visibility if second_visibility is None else second_visibility).matrix
    # pairs come out as (s1, i1, s2, i2)
    joint = permute_subsystems(tensor(first, second), (2, 2, 2, 2), (0, 2, 1, 3))
    return DensityMatrix(joint, dims=(2, 2, 2, 2), bipartition=(0, 1))


def exact_count_table(rho: DensityMatrix, settings: SettingsPair | None = None, scale: float = 1.0) -> CountTable:
    """Count table of exact rates scale * Tr(P_a x P_-a x P_b x P_-b rho), no sampling."""
    settings = settings or SettingsPair()
    if rho.dim != 16:
        raise InvalidStateError(f"expected a two-pair state of dimension 16, got {rho.dim}")
    counts = np.zeros((2, 2, 2, 2))
    for (x, y), a, b in itertools.product(SETTINGS, OUTCOMES, OUTCOMES):
        q = _fourfold_projector(settings, x, y, a, b)
        counts[x, y, _outcome_index(a), _outcome_index(b)] = scale * np.trace(q @ rho.matrix).real
    return CountTable(np.clip(counts, 0.0, None))


def outcome_probabilities(rho: DensityMatrix, x: int, y: int, settings: SettingsPair | None = None) -> np.ndarray:
    """p(ab|xy) for one pair in the order (+,+), (+,-), (-,+), (-,-)."""
    settings = settings or SettingsPair()
    if rho.dim != 4:
        raise InvalidStateError(f"expected a two-qubit state, got dimension {rho.dim}")
    v, w = settings.signal_vector(x), settings.idler_vector(y)
    probs = np.array([
        np.trace(tensor(projector(v, a), projector(w, b)) @ rho.matrix).real
        for a, b in itertools.product(OUTCOMES, OUTCOMES)
    ])
    if abs(probs.sum() - 1.0) > TOL_ALGEBRA or np.any(probs < -TOL_ALGEBRA):
        raise InvalidStateError(f"outcome probabilities {probs} are not a distribution")
    return np.clip(probs, 0.0, 1.0)


def pair_correlators(rho: DensityMatrix, settings: SettingsPair | None = None) -> tuple[float, ...]:
    """E_xy = Tr[(v_x.sigma x w_y.sigma) rho] for the four settings."""
    settings = settings or SettingsPair()
    return tuple(
        float(np.trace(tensor(pauli_along(settings.signal_vector(x)), pauli_along(settings.idler_vector(y)))
                       @ rho.matrix).real)
        for x, y in SETTINGS
    )


def chsh(correlators: Sequence[float]) -> float:
    if len(correlators) != 4:
        raise RangeError(f"expected four correlators, got {len(correlators)}")
    if any(abs(e) > 1 + TOL_ALGEBRA for e in correlators):
        raise RangeError(f"correlators {tuple(correlators)} must lie in [-1, 1]")
    e00, e01, e10, e11 = correlators
    return float(e00 + e01 + e10 - e11)


# --- Werner consistency model ---

def predict_T_from_visibility(visibility: float) -> float:
    if not 0.0 <= visibility <= 1.0:
        raise RangeError(f"visibility must lie in [0, 1], got {visibility}")
    return 4 * math.sqrt(2) * visibility / (1 + visibility ** 2 / 2)


def predict_T_from_S(S: float) -> float:
    if not 0.0 <= S <= 2 * math.sqrt(2) + TOL_ALGEBRA:
        raise RangeError(f"CHSH value must lie in [0, 2*sqrt(2)], got {S}")
    return 2 * S / (1 + S ** 2 / 16)


def min_certifying_visibility(bound: float = T_ONE_PAIR) -> float:
    """Smallest V with predict_T_from_visibility(V) = bound: root of (bound/2) V^2 - 4 sqrt(2) V + bound = 0."""
    a, b = bound / 2, -4 * math.sqrt(2)
    discriminant = b * b - 4 * a * bound
    if discriminant < 0:
        raise RangeError(f"no visibility reaches T = {bound}")
    return (-b - math.sqrt(discriminant)) / (2 * a)
