"""
Dense revised simplex for max c^T x s.t. A x = b, x >= 0.

The caller supplies a feasible starting basis (the master problem always
has one made of artificial columns). Each iteration factors the basis
once and reuses the factors for the primal solve, the dual solve and the
ratio test direction.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from config import get_logger

logger = get_logger(__name__)

STATUS_OPTIMAL = "optimal"

# Degenerate pivots in a row before switching to Bland's rule
DEGENERATE_STREAK = 25


class SimplexError(Exception):
    """Raised for shape mismatches, infeasible starts, unboundedness or iteration limits."""
    pass


@dataclass(frozen=True)
class SimplexResult:
    """Optimal vertex with its duals and reduced costs."""

    x: np.ndarray
    duals: np.ndarray
    objective: float
    reduced_costs: np.ndarray
    basis: np.ndarray
    iterations: int
    status: str = STATUS_OPTIMAL


def solve_standard_form(
    c: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    basis: Sequence[int],
    tol: float = 1e-9,
    max_iter: Optional[int] = None
) -> SimplexResult:
    """
    Maximize c^T x subject to A x = b, x >= 0.

    Args:
        c: Objective (n,)
        A: Constraint matrix (m, n)
        b: Right-hand side (m,)
        basis: m column indices forming a feasible basis
        tol: Pricing and ratio-test tolerance
        max_iter: Pivot limit (default 50 * (m + n))

    Returns:
        SimplexResult; duals pi solve B^T pi = c_B and reduced costs are
        c - A^T pi (all <= tol at optimality)

    Raises:
        SimplexError: On bad shapes, an infeasible or singular start,
            unboundedness, or hitting the pivot limit
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    m, n = A.shape
    if c.shape[0] != n or b.shape[0] != m:
        raise SimplexError(f"Shape mismatch: A is {m}x{n}, c has {c.shape[0]}, b has {b.shape[0]}")

    basis = np.array(basis, dtype=int).reshape(-1)
    if basis.shape[0] != m or np.unique(basis).shape[0] != m:
        raise SimplexError(f"Basis must list {m} distinct columns")

    limit = max_iter if max_iter is not None else 50 * (m + n)
    degenerate = 0

    for iteration in range(limit + 1):
        try:
            factors = lu_factor(A[:, basis], check_finite=False)
        except (ValueError, np.linalg.LinAlgError) as e:
            raise SimplexError(f"Basis factorization failed: {e}") from e
        if np.any(np.abs(np.diag(factors[0])) < 1e-14):
            raise SimplexError("Basis is singular")

        x_basic = lu_solve(factors, b, check_finite=False)
        if iteration == 0 and np.any(x_basic < -1e-7):
            raise SimplexError("Starting basis is not primal feasible")
        x_basic = np.maximum(x_basic, 0.0)

        duals = lu_solve(factors, c[basis], trans=1, check_finite=False)
        reduced = c - A.T @ duals
        reduced[basis] = 0.0

        candidates = np.flatnonzero(reduced > tol)
        if candidates.size == 0:
            x = np.zeros(n)
            x[basis] = x_basic
            return SimplexResult(x, duals, float(c @ x), reduced, basis.copy(), iteration)

        if iteration == limit:
            break

        if degenerate >= DEGENERATE_STREAK:
            entering = int(candidates[0])
        else:
            entering = int(candidates[np.argmax(reduced[candidates])])

        direction = lu_solve(factors, A[:, entering], check_finite=False)
        rising = np.flatnonzero(direction > tol)
        if rising.size == 0:
            raise SimplexError(f"Problem is unbounded along column {entering}")

        ratios = x_basic[rising] / direction[rising]
        step = float(np.min(ratios))
        ties = rising[ratios <= step + tol]
        # Lowest variable index leaves among ties
        leaving = int(ties[np.argmin(basis[ties])])

        degenerate = degenerate + 1 if step <= tol else 0
        basis[leaving] = entering

    raise SimplexError(f"No optimum after {limit} pivots")
