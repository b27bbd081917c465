"""
Linear solvers for the symmetric positive definite step systems.

Preconditioned conjugate gradients on CSR matrices, plus a dense LU solve
used as an oracle on small systems.
"""
import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix, issparse

from ..utils.constants import DEFAULT_TOLERANCE, DENSE_SOLVE_LIMIT
from .errors import BreakdownError, ConvergenceError, SingularMatrixError

logger = logging.getLogger(__name__)


class Preconditioner(Enum):
    NONE = "none"
    DIAGONAL = "diagonal"


@dataclass(frozen=True)
class SolverConfig:
    """
    CG settings.

    max_iter None means 10 times the system dimension.
    """

    tol: float = DEFAULT_TOLERANCE
    max_iter: Optional[int] = None
    preconditioner: Preconditioner = Preconditioner.DIAGONAL

    def __post_init__(self):
        if not 0.0 < self.tol < 1.0:
            raise ValueError(f"Solver tolerance must lie in (0, 1), got {self.tol!r}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter!r}")
        object.__setattr__(self, "preconditioner", Preconditioner(self.preconditioner))

    def iteration_limit(self, dimension: int) -> int:
        return self.max_iter if self.max_iter is not None else max(1, 10 * dimension)

    def to_dict(self) -> dict:
        return {"tol": self.tol, "maxit": self.max_iter, "preconditioner": self.preconditioner.value}


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    residual: float
    history: List[float] = field(default_factory=list)

    def record(self) -> dict:
        return {"iterations": self.iterations, "residual": self.residual, "converged": True}


class PreparedOperator:
    """A matrix with its preconditioner set up once, for repeated solves."""

    def __init__(self, matrix, config: Optional[SolverConfig] = None):
        self.matrix = csr_matrix(matrix)
        self.config = config or SolverConfig()
        n, m = self.matrix.shape
        if n != m:
            raise ValueError(f"Matrix must be square, got {n}x{m}")
        if self.config.preconditioner is Preconditioner.DIAGONAL:
            diagonal = self.matrix.diagonal()
            bad = np.flatnonzero(~(diagonal > 0))
            if bad.size:
                raise BreakdownError(0, f"diagonal entry {bad[0]} is {diagonal[bad[0]]!r}, matrix is not SPD")
            self._inverse_diagonal = 1.0 / diagonal
        else:
            self._inverse_diagonal = None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def _precondition(self, r: np.ndarray) -> np.ndarray:
        if self._inverse_diagonal is None:
            return r.copy()
        return self._inverse_diagonal * r

    def solve(self, b: np.ndarray, x0: Optional[np.ndarray] = None) -> SolveResult:
        """
        Solve A x = b to relative residual ||b - Ax|| / ||b|| <= tol.

        Raises:
            ConvergenceError: iteration limit reached (carries the best iterate)
            BreakdownError: NaN or non-positive curvature
        """
        A = self.matrix
        n = self.dimension
        b = np.asarray(b, dtype=float)
        if b.shape != (n,):
            raise ValueError(f"Right-hand side has shape {b.shape}, expected ({n},)")
        if not np.all(np.isfinite(b)):
            raise ValueError("Right-hand side contains non-finite entries")

        b_norm = np.linalg.norm(b)
        if b_norm == 0.0:
            return SolveResult(np.zeros(n), 0, 0.0, [0.0])

        x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
        r = b - A @ x
        rel = np.linalg.norm(r) / b_norm
        history = [float(rel)]
        if rel <= self.config.tol:
            return SolveResult(x, 0, float(rel), history)

        z = self._precondition(r)
        p = z.copy()
        rz = r @ z
        best, best_rel = x.copy(), rel
        limit = self.config.iteration_limit(n)

        for k in range(1, limit + 1):
            Ap = A @ p
            pAp = p @ Ap
            if not np.isfinite(pAp) or pAp <= 0.0:
                raise BreakdownError(k, f"p.Ap = {pAp!r}")
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            rel = np.linalg.norm(r) / b_norm
            if not np.isfinite(rel):
                raise BreakdownError(k, "residual is not finite")
            history.append(float(rel))
            if rel < best_rel:
                best, best_rel = x.copy(), rel
            if rel <= self.config.tol:
                logger.debug(f"CG converged in {k} iterations (relative residual {rel:.3e})")
                return SolveResult(x, k, float(rel), history)
            z = self._precondition(r)
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new

        logger.error(f"CG stopped after {limit} iterations at relative residual {rel:.3e}")
        raise ConvergenceError(limit, history, best)


def prepare_operator(matrix, config: Optional[SolverConfig] = None) -> PreparedOperator:
    return PreparedOperator(matrix, config)


def cg_solve(matrix, b, config: Optional[SolverConfig] = None, x0=None) -> SolveResult:
    """One-shot preconditioned CG solve."""
    return PreparedOperator(matrix, config).solve(b, x0)


def dense_solve(matrix, b) -> np.ndarray:
    """
    Dense LU solve with partial pivoting (test oracle).

    Raises:
        ValueError: dimension above the dense limit
        SingularMatrixError: singular or numerically singular matrix
    """
    A = matrix.toarray() if issparse(matrix) else np.asarray(matrix, dtype=float)
    if A.shape[0] > DENSE_SOLVE_LIMIT:
        raise ValueError(f"Dense solve limited to dimension {DENSE_SOLVE_LIMIT}, got {A.shape[0]}")
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            return scipy.linalg.solve(A, np.asarray(b, dtype=float))
        except (scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as e:
            raise SingularMatrixError(f"Dense solve failed: {e}") from e
