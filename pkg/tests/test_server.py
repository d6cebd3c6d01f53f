#!/usr/bin/env python3
"""
Tests for server.py

Verifies:
1. Tools return success dictionaries on valid input
2. Invalid input and oversized jobs return error dictionaries
"""

import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / 'src'))

import server


def _tool(obj):
    """The plain function behind a registered tool."""
    return getattr(obj, 'fn', obj)


def test_theory_tools():
    """Probability and density tools."""
    result = _tool(server.assignment_probability)(1e-4, 200.0, [1, 4, 16])
    assert result['success']
    values = [p['probability'] for p in result['probabilities']]
    assert values == sorted(values)
    print(f"  ✓ Probabilities {[round(v, 4) for v in values]}")

    result = _tool(server.assignment_probability)(-1.0, 200.0, [4])
    assert not result['success'] and 'Invalid input' in result['error']
    print("  ✓ Negative density reported as an error")

    curve = _tool(server.density_curve)(1e-4, 100.0, t_max=0.5, step=0.1)
    assert curve['success']
    assert len(curve['t']) == len(curve['rho'])
    assert 0.0 < curve['coverage'] < 0.5474
    print(f"  ✓ Density curve coverage {curve['coverage']:.4f}")


def test_simulate_tool():
    """Small runs succeed; bad fields and oversized jobs do not."""
    settings = {
        "user_density": 5e-5,
        "rrh_density": 5e-5,
        "generation_radius": 600.0,
        "measurement_radius": 300.0,
        "trials": 2,
        "num_pilots": 3,
    }
    result = _tool(server.simulate)(settings)
    assert result['success']
    assert len(result['summary']) == 1
    assert result['summary'][0]['trials'] == 2
    print("  ✓ Two-trial summary")

    assert not _tool(server.simulate)({"bogus": 1})['success']
    big = _tool(server.simulate)({"trials": server.MAX_TOOL_TRIALS + 1})
    assert not big['success'] and 'at most' in big['error']
    print("  ✓ Unknown field and oversized job rejected")


def test_partition_tools():
    """Max-min partition and R_inh search."""
    line = [[100.0 * i, 0.0] for i in range(6)]
    result = _tool(server.maxmin_partition)(line, 2, epsilon=0.5)
    assert result['success']
    assert sorted(set(result['pilots'])) == [1, 2]
    assert result['t_star'] >= 200.0 - 1e-9
    print(f"  ✓ Alternating line split, t*={result['t_star']:.1f} m")

    result = _tool(server.maxmin_partition)(line[:3], 2)
    assert not result['success']
    print("  ✓ Three users cannot fill two sets of two")

    result = _tool(server.best_inhibition_radius)(1e-4, 1e-4, 4, [150.0])
    assert result['success'] and result['inhibition_radius'] == 150.0
    result = _tool(server.best_inhibition_radius)(1e-4, 1e-4, 4, [])
    assert not result['success']
    print("  ✓ Single-point grid returned; empty grid rejected")


def main():
    """Run all tests."""
    print("\n" + "=" * 70)
    print("  Tool Server Tests")
    print("=" * 70 + "\n")

    tests = [
        test_theory_tools,
        test_simulate_tool,
        test_partition_tools,
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
        print("✅ All server tests passed!")
        sys.exit(0)


if __name__ == "__main__":
    main()
