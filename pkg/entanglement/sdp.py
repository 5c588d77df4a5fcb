import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular

from entanglement.errors import InputError, SolverError
from entanglement.qstate import is_hermitian

logger = logging.getLogger(__name__)

SolverStatus = Literal["optimal", "infeasible", "max_iterations"]

DEFAULT_OPTIONS = {
    "max_iterations": 200,
    "gap_tolerance": 1e-7,
    "feasibility_tolerance": 1e-9,
    "step_fraction": 0.95,
    "divergence": 1e12,
}


@dataclass
class SdpConstraint:
    """sum_j Tr(coefficients[j] X_j) = rhs. Blocks absent from `coefficients` do not take part."""
    coefficients: dict[int, np.ndarray]
    rhs: float


@dataclass
class SdpProblem:
    """
    min (or max) sum_j Tr(C_j X_j) subject to linear equalities and X_j PSD Hermitian.

    Attributes:
        blocks (list[int]): Dimension of every PSD block.
        objective (list[np.ndarray]): Hermitian C_j per block.
        constraints (list[SdpConstraint]): Equality constraints.
        sense (str): 'min' or 'max'.
        trace_bounds (list[float] | None): Known upper bounds on Tr X_j implied by the constraints. When given,
                                           the solution carries a bound that holds despite dual residuals.
    """
    blocks: list[int]
    objective: list[np.ndarray]
    constraints: list[SdpConstraint]
    sense: Literal["min", "max"] = "min"
    trace_bounds: list[float] | None = None


@dataclass
class SdpSolution:
    status: SolverStatus
    primal_value: float
    dual_value: float
    gap: float
    blocks: list[np.ndarray]
    multipliers: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float
    certified_bound: float | None = None
    history: list[float] = field(default_factory=list)

    @property
    def bound(self) -> float:
        """Certified bound when available, dual value otherwise."""
        return self.certified_bound if self.certified_bound is not None else self.dual_value


def _hermitize(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2


class _Compiled:
    """Constraint data as one sparse m x d_j^2 matrix per block with rows conj(vec(A_ij))."""

    def __init__(self, problem: SdpProblem):
        self.dims = [int(d) for d in problem.blocks]
        if len(problem.objective) != len(self.dims):
            raise InputError("one objective matrix per block is required")
        sign = -1.0 if problem.sense == "max" else 1.0
        self.C = []
        for j, (c, d) in enumerate(zip(problem.objective, self.dims)):
            c = np.asarray(c, dtype=complex)
            if c.shape != (d, d) or not is_hermitian(c, tol=1e-12 * max(1.0, float(np.abs(c).max(initial=0)))):
                raise InputError(f"objective of block {j} must be a Hermitian {d}x{d} matrix")
            self.C.append(sign * _hermitize(c))

        self.m = len(problem.constraints)
        self.b = np.array([float(c.rhs) for c in problem.constraints])
        rows = [[] for _ in self.dims]
        cols = [[] for _ in self.dims]
        data = [[] for _ in self.dims]
        self.coefficient_norms = np.zeros((self.m, len(self.dims)))
        for i, constraint in enumerate(problem.constraints):
            for j, coefficient in constraint.coefficients.items():
                if not 0 <= j < len(self.dims):
                    raise InputError(f"constraint {i} refers to unknown block {j}")
                coefficient = np.asarray(coefficient, dtype=complex)
                d = self.dims[j]
                scale = max(1.0, float(np.abs(coefficient).max(initial=0)))
                if coefficient.shape != (d, d) or not is_hermitian(coefficient, tol=1e-12 * scale):
                    raise InputError(f"constraint {i} has a non-Hermitian or mis-sized coefficient for block {j}")
                flat = coefficient.ravel()
                nz = np.flatnonzero(flat)
                rows[j].append(np.full(nz.size, i))
                cols[j].append(nz)
                data[j].append(flat[nz].conj())
                self.coefficient_norms[i, j] = np.linalg.norm(flat)
        self.A = []
        for j, d in enumerate(self.dims):
            if rows[j]:
                matrix = sp.coo_matrix(
                    (np.concatenate(data[j]), (np.concatenate(rows[j]), np.concatenate(cols[j]))),
                    shape=(self.m, d * d),
                ).tocsr()
            else:
                matrix = sp.csr_matrix((self.m, d * d), dtype=complex)
            self.A.append(matrix)
        self.A_conj = [a.conj() for a in self.A]
        self.A_conj_t = [a.T.tocsr() for a in self.A_conj]

    def op(self, X: Sequence[np.ndarray]) -> np.ndarray:
        """A(X)_i = sum_j Re Tr(A_ij X_j)."""
        out = np.zeros(self.m)
        for a, x in zip(self.A, X):
            out += (a @ x.ravel()).real
        return out

    def adjoint(self, y: np.ndarray) -> list[np.ndarray]:
        """A*(y)_j = sum_i y_i A_ij."""
        return [(at @ y).reshape(d, d) for at, d in zip(self.A_conj_t, self.dims)]

    def schur(self, X: Sequence[np.ndarray], W: Sequence[np.ndarray]) -> np.ndarray:
        """M_ik = sum_j Re Tr(A_ij X_j A_kj W_j)."""
        M = np.zeros((self.m, self.m))
        for a, a_conj, x, w in zip(self.A, self.A_conj, X, W):
            if a.nnz == 0:
                continue
            K = np.kron(x, w.T)
            columns = (a_conj @ K.T).T
            M += (a @ columns).real
        return (M + M.T) / 2


def _max_step(X: np.ndarray, dX: np.ndarray) -> float:
    """Largest alpha with X + alpha dX PSD."""
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    L_inv = solve_triangular(L, np.eye(X.shape[0]), lower=True)
    lowest = np.linalg.eigvalsh(_hermitize(L_inv @ dX @ L_inv.conj().T))[0]
    return math.inf if lowest >= 0 else -1.0 / lowest


def _initial_scales(data: _Compiled) -> tuple[list[float], list[float]]:
    xi, eta = [], []
    for j, d in enumerate(data.dims):
        norms = data.coefficient_norms[:, j]
        used = norms > 0
        ratio = float(np.max((1 + np.abs(data.b[used])) / (1 + norms[used]), initial=0.0))
        xi.append(max(10.0, math.sqrt(d), d * ratio))
        eta.append(max(10.0, math.sqrt(d), float(norms.max(initial=0.0)), float(np.linalg.norm(data.C[j]))))
    return xi, eta


def _factor(M: np.ndarray):
    try:
        return cho_factor(M)
    except LinAlgError:
        shift = 1e-12 * max(1.0, float(np.abs(np.diag(M)).max(initial=1.0)))
        try:
            return cho_factor(M + shift * np.eye(M.shape[0]))
        except LinAlgError as exc:
            raise SolverError("Schur complement is not positive definite; constraints may be dependent",
                              status="infeasible") from exc


def _certified_lower(data: _Compiled, y: np.ndarray, trace_bounds: Sequence[float] | None) -> float | None:
    """Weak duality: Tr(CX) >= b.y + sum_j lambda_min(C_j - A*(y)_j) Tr X_j."""
    if trace_bounds is None:
        return None
    bound = float(data.b @ y)
    for c, aty, limit in zip(data.C, data.adjoint(y), trace_bounds):
        lowest = float(np.linalg.eigvalsh(_hermitize(c - aty))[0])
        if lowest < 0:
            bound += lowest * limit
    return bound


def solve_sdp(problem: SdpProblem, **options) -> SdpSolution:
    """
    Infeasible-start primal-dual interior-point method (HKM direction, Mehrotra predictor-corrector)
    operating directly on complex Hermitian blocks.

    Args:
        problem (SdpProblem): The program to solve.
        **options: Overrides for DEFAULT_OPTIONS (max_iterations, gap_tolerance, feasibility_tolerance,
                   step_fraction, divergence).

    Returns:
        SdpSolution: Status, values in the problem's own sense, primal blocks and, when trace bounds were
                     supplied, a certified bound on the optimum.
    """
    opts = {**DEFAULT_OPTIONS, **options}
    data = _Compiled(problem)
    dims = data.dims
    n_total = sum(dims)
    identities = [np.eye(d, dtype=complex) for d in dims]
    norm_b = float(np.linalg.norm(data.b))
    norm_C = math.sqrt(sum(float(np.linalg.norm(c)) ** 2 for c in data.C))

    xi, eta = _initial_scales(data)
    X = [s * eye for s, eye in zip(xi, identities)]
    Z = [s * eye for s, eye in zip(eta, identities)]
    y = np.zeros(data.m)

    status: SolverStatus = "max_iterations"
    history: list[float] = []
    stalled = 0
    iteration = 0
    rel_p = rel_d = math.inf
    primal = dual = 0.0

    for iteration in range(1, opts["max_iterations"] + 1):
        r_p = data.b - data.op(X)
        R_d = [c - aty - z for c, aty, z in zip(data.C, data.adjoint(y), Z)]
        primal = sum(float(np.vdot(c, x).real) for c, x in zip(data.C, X))
        dual = float(data.b @ y)
        complementarity = sum(float(np.vdot(x, z).real) for x, z in zip(X, Z))
        mu = complementarity / n_total
        rel_p = float(np.linalg.norm(r_p)) / (1 + norm_b)
        rel_d = math.sqrt(sum(float(np.linalg.norm(r)) ** 2 for r in R_d)) / (1 + norm_C)
        gap = abs(primal - dual)
        history.append(gap)

        threshold = opts["gap_tolerance"] * (1 + abs(primal))
        if (rel_p <= opts["feasibility_tolerance"] and rel_d <= opts["feasibility_tolerance"]
                and gap <= threshold and complementarity <= threshold):
            status = "optimal"
            break
        if max(float(np.trace(x).real) for x in X) > opts["divergence"] or \
                float(np.abs(y).max(initial=0)) > opts["divergence"]:
            status = "infeasible"
            break

        W = [_hermitize(np.linalg.inv(z)) for z in Z]
        factor = _factor(data.schur(X, W))
        XRdW = [x @ r @ w for x, r, w in zip(X, R_d, W)]

        def direction(R_c):
            G = [r @ w for r, w in zip(R_c, W)]
            rhs = r_p - data.op(G) + data.op(XRdW)
            dy = cho_solve(factor, rhs)
            dZ = [_hermitize(r - aty) for r, aty in zip(R_d, data.adjoint(dy))]
            dX = [_hermitize(g - x @ dz @ w) for g, x, dz, w in zip(G, X, dZ, W)]
            return dX, dy, dZ

        # predictor
        dX, dy, dZ = direction([-x @ z for x, z in zip(X, Z)])
        alpha_p = min(1.0, min(_max_step(x, d) for x, d in zip(X, dX)))
        alpha_d = min(1.0, min(_max_step(z, d) for z, d in zip(Z, dZ)))
        mu_aff = sum(
            float(np.vdot(x + alpha_p * dx, z + alpha_d * dz).real) for x, dx, z, dz in zip(X, dX, Z, dZ)
        ) / n_total
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3 if mu > 0 else 0.0

        # corrector
        R_c = [sigma * mu * eye - x @ z - dx @ dz for eye, x, z, dx, dz in zip(identities, X, Z, dX, dZ)]
        dX, dy, dZ = direction(R_c)
        alpha_p = min(1.0, opts["step_fraction"] * min(_max_step(x, d) for x, d in zip(X, dX)))
        alpha_d = min(1.0, opts["step_fraction"] * min(_max_step(z, d) for z, d in zip(Z, dZ)))

        X = [_hermitize(x + alpha_p * d) for x, d in zip(X, dX)]
        Z = [_hermitize(z + alpha_d * d) for z, d in zip(Z, dZ)]
        y = y + alpha_d * dy

        stalled = stalled + 1 if max(alpha_p, alpha_d) < 1e-9 else 0
        if stalled >= 5:
            logger.warning("  SDP stalled after %d iterations (gap %.3e)", iteration, gap)
            break

    certified = _certified_lower(data, y, problem.trace_bounds)
    sign = -1.0 if problem.sense == "max" else 1.0
    solution = SdpSolution(
        status=status,
        primal_value=sign * primal,
        dual_value=sign * dual,
        gap=abs(primal - dual),
        blocks=X,
        multipliers=y,
        iterations=iteration,
        primal_residual=rel_p,
        dual_residual=rel_d,
        certified_bound=None if certified is None else sign * certified,
        history=history,
    )
    logger.debug("  SDP %s after %d iterations: primal %.10f dual %.10f", status, iteration,
                 solution.primal_value, solution.dual_value)
    return solution


def require_optimal(solution: SdpSolution, what: str) -> SdpSolution:
    """Raises SolverError unless the solve converged and its blocks pass the post-hoc feasibility check."""
    if solution.status != "optimal":
        raise SolverError(f"{what}: solver finished with status {solution.status} (gap {solution.gap:.3e})",
                          status=solution.status, best_bound=solution.bound)
    lowest = min(float(np.linalg.eigvalsh(x)[0]) for x in solution.blocks)
    if lowest < -1e-8 or solution.primal_residual > 1e-8:
        raise SolverError(f"{what}: post-hoc check failed (min eigenvalue {lowest:.2e}, "
                          f"residual {solution.primal_residual:.2e})", status=solution.status,
                          best_bound=solution.bound)
    return solution
