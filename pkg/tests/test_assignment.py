#!/usr/bin/env python3
"""
Tests for rsa_assignment.py

Verifies:
1. RSA assignment is hard-core and maximal, and follows mark order
2. Regenerative and distributed variants
3. Random baseline
4. PilotAssignment helpers
"""

import sys
import shutil
import tempfile
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / 'src'))

import numpy as np

from stochastic_geometry import CircularWindow, PointSet, assign_marks, derive_seed, sample_ppp
from rsa_assignment import (
    AssignmentError, PilotAssignment, SensingConfig, UNASSIGNED, assign_distributed,
    assign_random, assign_regenerative, assign_rsa, is_hard_core, is_maximal,
    threshold_for_radius
)
from export import read_table

WINDOW = CircularWindow(800.0)


def _users(seed: int, density: float = 1e-4) -> PointSet:
    return assign_marks(sample_ppp(density, WINDOW, derive_seed(seed, 0, "users")), derive_seed(seed, 0, "marks"))


def test_rsa_hard_core_and_maximal():
    """No co-pilot pair closer than R_inh; every unassigned user is fully blocked."""
    for k in range(5):
        users = _users(k)
        for num_pilots, radius in ((1, 200.0), (4, 250.0), (16, 150.0)):
            result = assign_rsa(users, num_pilots, radius, seed=derive_seed(k, 0, "pilots"))
            assert is_hard_core(result, users)
            assert is_maximal(result, users)
            assert result.scheme == "rsa"
    print("  ✓ Hard-core and maximal over 15 layouts")

    users = _users(9)
    a = assign_rsa(users, 4, 200.0, seed=5)
    b = assign_rsa(users, 4, 200.0, seed=5)
    assert np.array_equal(a.pilots, b.pilots)
    print("  ✓ Same seed, same pilots")


def test_rsa_mark_order():
    """With one pilot, the earliest user in a conflicting chain wins."""
    window = CircularWindow(300.0)
    points = [[-100.0, 0.0], [0.0, 0.0], [100.0, 0.0]]

    middle_first = PointSet(points, window, marks=[0.5, 0.1, 0.9])
    result = assign_rsa(middle_first, 1, 150.0, seed=0)
    assert result.pilots.tolist() == [UNASSIGNED, 1, UNASSIGNED]

    ends_first = PointSet(points, window, marks=[0.1, 0.9, 0.2])
    result = assign_rsa(ends_first, 1, 150.0, seed=0)
    assert result.pilots.tolist() == [1, UNASSIGNED, 1]
    print("  ✓ Arrival follows marks")

    # Exactly R_inh apart is not a conflict
    at_radius = PointSet([[0.0, 0.0], [150.0, 0.0]], window, marks=[0.1, 0.2])
    assert assign_rsa(at_radius, 1, 150.0, seed=0).pilots.tolist() == [1, 1]
    print("  ✓ Distance equal to R_inh does not conflict")

def test_translation_invariance():
    """Shifting the whole realization leaves every pilot decision unchanged."""
    for k, shift in enumerate(((1234.5, -987.25), (-40.0, 3000.0), (1e4, 1e4))):
        users = _users(20 + k)
        moved = users.translated(shift)
        seed = derive_seed(20 + k, "pilots")
        assert np.array_equal(assign_rsa(users, 4, 200.0, seed).pilots,
                              assign_rsa(moved, 4, 200.0, seed).pilots)
        assert np.array_equal(assign_regenerative(users, 4, 200.0).pilots,
                              assign_regenerative(moved, 4, 200.0).pilots)
    print("  ✓ RSA and regenerative assignments survive three translations")



def test_rsa_validation():
    """Marks, pilot counts and radii are checked; empty inputs are fine."""
    unmarked = PointSet([[0.0, 0.0]], WINDOW)
    for call in (lambda: assign_rsa(unmarked, 2, 100.0, seed=1),
                 lambda: assign_rsa(_users(1), 0, 100.0, seed=1),
                 lambda: assign_rsa(_users(1), 2, 0.0, seed=1)):
        try:
            call()
            raise AssertionError("Invalid input should be rejected")
        except AssignmentError:
            pass
    print("  ✓ Invalid inputs rejected")

    empty = PointSet(np.zeros((0, 2)), WINDOW)
    assert len(assign_rsa(empty, 2, 100.0, seed=1)) == 0
    print("  ✓ Empty user set")


def test_regenerative():
    """Pilot-by-pilot packing is hard-core and maximal."""
    for k in range(3):
        users = _users(k)
        result = assign_regenerative(users, 4, 200.0)
        assert is_hard_core(result, users)
        assert is_maximal(result, users)
    print("  ✓ Hard-core and maximal")

    unmarked = PointSet([[0.0, 0.0], [50.0, 0.0], [500.0, 0.0]], WINDOW)
    result = assign_regenerative(unmarked, 2, 100.0)
    assert result.pilots.tolist() == [1, 2, 1]
    print("  ✓ List order used when unmarked")


def test_distributed():
    """Sensed power replaces distance; a huge threshold assigns everyone."""
    users = _users(3)
    energy = 16 * 1e8
    try:
        assign_distributed(PointSet([[0.0, 0.0]], WINDOW), 2, SensingConfig(1.0, energy), seed=1)
        raise AssertionError("Unmarked users should be rejected")
    except AssignmentError:
        print("  ✓ Unmarked users rejected")

    loose = assign_distributed(users, 2, SensingConfig(1e30, energy), seed=1)
    assert loose.assigned_count == len(users)

    threshold = threshold_for_radius(200.0, energy)
    strict = assign_distributed(users, 2, SensingConfig(threshold, energy), seed=1, inhibition_radius=200.0)
    # Sensed power includes every earlier holder, so the single-user radius is a lower bound
    assert is_hard_core(strict, users, 200.0)
    assert strict.assigned_count <= len(users)
    assert strict.scheme == "distributed-rsa"
    print(f"  ✓ {strict.assigned_count}/{len(users)} users assigned under threshold {threshold:.3e}")

    try:
        SensingConfig(0.0, energy)
        raise AssertionError("Zero threshold should be rejected")
    except AssignmentError:
        print("  ✓ Zero threshold rejected")


def test_random():
    """Everyone gets a pilot in 1..P; P = 1 puts everyone on pilot 1."""
    users = _users(4)
    result = assign_random(users, 1, seed=2)
    assert np.all(result.pilots == 1)
    result = assign_random(users, 8, seed=2)
    assert result.assigned_count == len(users)
    assert result.pilots.min() >= 1 and result.pilots.max() <= 8
    assert result.inhibition_radius is None
    print("  ✓ Random baseline")


def test_pilot_assignment_helpers():
    """Validation, copilot groups, embedding and CSV output."""
    try:
        PilotAssignment(np.array([0, 3]), 2)
        raise AssertionError("Pilot above P should be rejected")
    except AssignmentError:
        print("  ✓ Out-of-range pilot rejected")

    result = PilotAssignment(np.array([2, 0, 2, 1]), 2, 100.0, "rsa", 7)
    groups = result.copilot_groups()
    assert sorted(groups) == [1, 2]
    assert groups[2].tolist() == [0, 2]
    assert result.assigned_count == 3

    embedded = result.restricted_to(np.array([True, False, True, True, True, False]), 6)
    assert embedded.pilots.tolist() == [2, 0, 0, 2, 1, 0]
    print("  ✓ Groups and embedding")

    users = PointSet([[0.0, 0.0], [10.0, 0.0], [20.0, 0.0], [30.0, 0.0]], WINDOW)
    temp_dir = Path(tempfile.mkdtemp())
    try:
        path = result.to_csv(temp_dir / "assignment.csv", users)
        header, columns, rows = read_table(path)
        assert columns == ["user_index", "x", "y", "pilot"]
        assert [row[3] for row in rows] == ["2", "0", "2", "1"]
        assert header["scheme"] == "rsa"
        print("  ✓ CSV written")
    finally:
        shutil.rmtree(temp_dir)


def main():
    """Run all tests."""
    print("\n" + "=" * 70)
    print("  Pilot Assignment Tests")
    print("=" * 70 + "\n")

    tests = [
        test_rsa_hard_core_and_maximal,
        test_rsa_mark_order,
        test_translation_invariance,
        test_rsa_validation,
        test_regenerative,
        test_distributed,
        test_random,
        test_pilot_assignment_helpers,
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
        print("✅ All assignment tests passed!")
        sys.exit(0)


if __name__ == "__main__":
    main()
