#!/usr/bin/env python3
"""
Tests for revised_simplex.py

Verifies:
1. Optimal objective matches scipy's HiGHS on random packing LPs
2. Duals and reduced costs satisfy complementary slackness
3. Unbounded, infeasible-start and malformed problems are rejected
"""

import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / 'src'))

import numpy as np
from scipy.optimize import linprog

from revised_simplex import STATUS_OPTIMAL, SimplexError, solve_standard_form


def _packing_lp(seed: int, rows: int = 6, cols: int = 10):
    """max c^T x, G x <= b, x >= 0 in equality form with slack columns."""
    rng = np.random.default_rng(seed)
    g = rng.uniform(0.1, 1.0, size=(rows, cols))
    b = rng.uniform(1.0, 5.0, size=rows)
    c = np.concatenate((rng.uniform(0.5, 2.0, size=cols), np.zeros(rows)))
    A = np.hstack((g, np.eye(rows)))
    basis = list(range(cols, cols + rows))
    return c, A, b, basis


def test_matches_linprog():
    """Same optimum as HiGHS."""
    for seed in range(10):
        c, A, b, basis = _packing_lp(seed)
        result = solve_standard_form(c, A, b, basis)
        reference = linprog(-c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
        assert reference.status == 0
        assert result.status == STATUS_OPTIMAL
        assert abs(result.objective + reference.fun) < 1e-7 * max(1.0, abs(reference.fun)), (
            result.objective, -reference.fun
        )
        assert np.all(result.x >= 0)
        assert np.allclose(A @ result.x, b, atol=1e-8)
    print("  ✓ 10 random LPs agree with HiGHS")


def test_complementary_slackness():
    """Reduced costs are non-positive and vanish on the support; strong duality holds."""
    c, A, b, basis = _packing_lp(42, rows=8, cols=15)
    result = solve_standard_form(c, A, b, basis)
    assert np.all(result.reduced_costs <= 1e-9)
    assert np.allclose(result.reduced_costs, c - A.T @ result.duals, atol=1e-9)
    assert np.all(np.abs(result.x * result.reduced_costs) < 1e-9)
    assert abs(b @ result.duals - result.objective) < 1e-8 * max(1.0, abs(result.objective))
    # Packing duals are non-negative prices on the rows
    assert np.all(result.duals >= -1e-9)
    print(f"  ✓ Objective {result.objective:.6f} equals b^T pi")


def test_degenerate_start():
    """Zero right-hand sides pivot through without cycling."""
    c = np.array([1.0, 1.0, 0.0, 0.0, 0.0])
    A = np.array([
        [1.0, 1.0, 1.0, 0.0, 0.0],
        [1.0, -1.0, 0.0, 1.0, 0.0],
        [-1.0, 1.0, 0.0, 0.0, 1.0],
    ])
    b = np.array([2.0, 0.0, 0.0])
    result = solve_standard_form(c, A, b, [2, 3, 4])
    assert abs(result.objective - 2.0) < 1e-9
    print(f"  ✓ Degenerate LP solved in {result.iterations} pivots")


def test_rejections():
    """Unbounded rays, infeasible starts and bad shapes raise SimplexError."""
    cases = {
        "unbounded": (np.array([0.0, 1.0]), np.array([[1.0, -1.0]]), np.array([1.0]), [0]),
        "infeasible start": (np.array([1.0]), np.array([[1.0]]), np.array([-1.0]), [0]),
        "shape": (np.array([1.0, 1.0, 1.0]), np.array([[1.0, 1.0]]), np.array([1.0]), [0]),
        "repeated basis": (np.array([1.0, 0.0]), np.eye(2), np.array([1.0, 1.0]), [0, 0]),
    }
    for name, (c, A, b, basis) in cases.items():
        try:
            solve_standard_form(c, A, b, basis)
            raise AssertionError(f"{name} should be rejected")
        except SimplexError:
            print(f"  ✓ Rejected {name}")


def main():
    """Run all tests."""
    print("\n" + "=" * 70)
    print("  Revised Simplex Tests")
    print("=" * 70 + "\n")

    tests = [
        test_matches_linprog,
        test_complementary_slackness,
        test_degenerate_start,
        test_rejections,
    ]

    passed = 0
    failed = 0

    for test in tests:
        print(f"{test.__name__}:")
        try:
            test()
            passed += 1
            print()
        except Exception as e:
            failed += 1
            print(f"  ✗ {test.__name__} FAILED: {e}\n")
            import traceback
            traceback.print_exc()

    print("=" * 70)
    print(f"Results: {passed} passed, {failed} failed")
    print("=" * 70 + "\n")

    if failed > 0:
        sys.exit(1)
    else:
        print("✅ All simplex tests passed!")
        sys.exit(0)


if __name__ == "__main__":
    main()
