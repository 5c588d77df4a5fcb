import functools
import logging
import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from entanglement import TOL_ALGEBRA, TOL_SPECTRUM
from entanglement.errors import BipartitionError, InvalidStateError, NormalizationError, RangeError

logger = logging.getLogger(__name__)

IDENTITY_2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


# --- Types ---

@dataclass(frozen=True)
class BlochVector:
    """
    Unit vector on the Bloch sphere defining a qubit measurement direction.

    Attributes:
        x (float): Component along sigma_x.
        y (float): Component along sigma_y.
        z (float): Component along sigma_z.
    """
    x: float
    y: float
    z: float

    def __post_init__(self):
        norm_sq = self.x ** 2 + self.y ** 2 + self.z ** 2
        if abs(norm_sq - 1.0) > TOL_ALGEBRA:
            raise NormalizationError(f"Bloch vector ({self.x}, {self.y}, {self.z}) has squared norm {norm_sq}")

    @classmethod
    def from_components(cls, components: Sequence[float]) -> "BlochVector":
        """Builds a vector from three components, renormalizing away rounding in e.g. 0.7071."""
        arr = np.asarray(components, dtype=float)
        if arr.shape != (3,):
            raise NormalizationError(f"expected three Bloch components, got {len(arr)}")
        norm = float(np.linalg.norm(arr))
        if abs(norm - 1.0) > 1e-3:
            raise NormalizationError(f"Bloch vector {tuple(arr)} is not normalized (norm {norm:.6f})")
        arr = arr / norm
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))

    @classmethod
    def in_plane(cls, angle: float) -> "BlochVector":
        return cls(math.cos(angle), math.sin(angle), 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def mirrored(self) -> "BlochVector":
        """Reflection y -> -y; the projector along the mirrored vector is the transpose of the original."""
        return BlochVector(self.x, -self.y, self.z)

    def dot(self, other: "BlochVector") -> float:
        return float(self.as_array() @ other.as_array())


def is_hermitian(m: np.ndarray, tol: float = TOL_ALGEBRA) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """
    A validated density matrix over a registered tensor factorization.

    Attributes:
        matrix (np.ndarray): Square complex matrix, Hermitian with unit trace and non-negative spectrum.
        dims (tuple[int, ...]): Subsystem dimensions, slowest index first.
        bipartition (tuple[int, ...]): Subsystems forming party A; the rest form party B.
    """
    matrix: np.ndarray
    dims: tuple[int, ...]
    bipartition: tuple[int, ...] = (0,)

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "bipartition", tuple(sorted(int(s) for s in self.bipartition)))

        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise InvalidStateError(f"density matrix must be square, got shape {matrix.shape}")
        if math.prod(self.dims) != matrix.shape[0]:
            raise InvalidStateError(f"dims {self.dims} do not factor a {matrix.shape[0]}-dimensional matrix")
        _check_subsystems(self.bipartition, len(self.dims))
        if not is_hermitian(matrix):
            raise InvalidStateError("density matrix is not Hermitian")
        trace = np.trace(matrix).real
        if abs(trace - 1.0) > TOL_SPECTRUM:
            raise InvalidStateError(f"density matrix has trace {trace}")
        lowest = min_eigenvalue(matrix)
        if lowest < -TOL_SPECTRUM:
            raise InvalidStateError(f"density matrix has negative eigenvalue {lowest:.3e}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def party(self, which: Literal["A", "B"]) -> tuple[int, ...]:
        if which == "A":
            return self.bipartition
        if which == "B":
            return tuple(s for s in range(len(self.dims)) if s not in self.bipartition)
        raise BipartitionError(f"party must be 'A' or 'B', got {which!r}")


def _check_subsystems(subsystems: Sequence[int], count: int) -> None:
    for s in subsystems:
        if not 0 <= s < count:
            raise BipartitionError(f"subsystem index {s} out of range for {count} subsystems")


# --- Operations ---

def tensor(*matrices: np.ndarray) -> np.ndarray:
    """Kronecker product, first argument on the most significant axes."""
    return functools.reduce(np.kron, (np.asarray(m, dtype=complex) for m in matrices))


def pauli_along(v: BlochVector) -> np.ndarray:
    return v.x * PAULI_X + v.y * PAULI_Y + v.z * PAULI_Z


def projector(v: BlochVector, a: int) -> np.ndarray:
    """P_a(v) = (1 + a v.sigma)/2 for outcome a in {+1, -1}."""
    if a not in (1, -1):
        raise RangeError(f"outcome must be +1 or -1, got {a}")
    return (IDENTITY_2 + a * pauli_along(v)) / 2


def partial_transpose_matrix(m: np.ndarray, dims: Sequence[int], subsystems: Sequence[int]) -> np.ndarray:
    """Transposes the indices of `subsystems` only. Works on any square matrix, not just states."""
    dims = list(dims)
    n = len(dims)
    _check_subsystems(subsystems, n)
    m = np.asarray(m)
    axes = list(range(2 * n))
    for s in subsystems:
        axes[s], axes[n + s] = axes[n + s], axes[s]
    return m.reshape(dims + dims).transpose(axes).reshape(m.shape)


def partial_transpose(rho: DensityMatrix, party: Literal["A", "B"] = "A") -> np.ndarray:
    return partial_transpose_matrix(rho.matrix, rho.dims, rho.party(party))


def permute_subsystems(m: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorders tensor factors: new factor k is old factor order[k]."""
    dims = list(dims)
    n = len(dims)
    if sorted(order) != list(range(n)):
        raise BipartitionError(f"{order} is not a permutation of {n} subsystems")
    m = np.asarray(m)
    axes = list(order) + [n + k for k in order]
    return m.reshape(dims + dims).transpose(axes).reshape(m.shape)


def min_eigenvalue(m: np.ndarray) -> float:
    m = np.asarray(m)
    if not is_hermitian(m, tol=max(TOL_ALGEBRA, TOL_ALGEBRA * float(np.max(np.abs(m), initial=0.0)))):
        raise InvalidStateError("min_eigenvalue requires a Hermitian matrix")
    return float(np.linalg.eigvalsh(m)[0])


def negativity(rho: DensityMatrix) -> float:
    """Sum of the magnitudes of the negative eigenvalues of the partial transpose."""
    spectrum = np.linalg.eigvalsh(partial_transpose(rho, "A"))
    return float(-spectrum[spectrum < 0].sum())


def bell_state() -> np.ndarray:
    """|phi+><phi+| with |phi+> = (|00> + |11>)/sqrt(2)."""
    phi = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)
    return np.outer(phi, phi.conj())


def werner_state(visibility: float) -> DensityMatrix:
    if not 0.0 <= visibility <= 1.0:
        raise RangeError(f"visibility must lie in [0, 1], got {visibility}")
    matrix = visibility * bell_state() + (1 - visibility) * np.eye(4, dtype=complex) / 4
    return DensityMatrix(matrix, dims=(2, 2), bipartition=(0,))
