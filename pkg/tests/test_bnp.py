#!/usr/bin/env python3
"""
Tests for bnp_solver.py

Verifies:
1. Column costs, set enumeration and branching helpers
2. Restricted master LP
3. Branch-and-price optimum equals exhaustive enumeration on small instances
4. Structural infeasibility and time-budget behavior
"""

import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / 'src'))

import numpy as np

from stochastic_geometry import CircularWindow, derive_seed, sample_uniform
from channel_model import gain_matrix
from spectral_clustering import cluster_users
from bnp_solver import (
    BnbNode, BnpError, BnpInstance, Column, StructuralInfeasibility, bnp_solve,
    branch_pair, column_cost, enumerate_columns, exhaustive_oracle, is_integral,
    round_robin_partition, set_partitions, solve_rlmp
)

ENERGY = 16 * 1e8


def _instance(seed: int, users: int, pilots: int, clusters=None, sinr_floor: float = 0.0) -> BnpInstance:
    window = CircularWindow(400.0)
    rrhs = sample_uniform(6, window, derive_seed(seed, 0, "rrhs"))
    points = sample_uniform(users, window, derive_seed(seed, 0, "users"))
    beta = gain_matrix(rrhs, points)
    if clusters is None:
        clusters = np.arange(1, users + 1)
    return BnpInstance(beta, pilots, clusters, ENERGY, sinr_floor=sinr_floor)


def test_set_partitions():
    """Counts match Stirling numbers restricted by block size."""
    assert len(list(set_partitions(4, 2, 2))) == 3
    assert len(list(set_partitions(4, 2))) == 7
    assert len(list(set_partitions(6, 3, 2))) == 15
    assert list(set_partitions(3, 2, 2)) == []
    first = next(set_partitions(5, 2, 2))
    assert first[0] == 0
    print("  ✓ Restricted-growth partitions")


def test_column_cost():
    """Same-cluster sets and sub-floor SINRs cost -M; singletons are invalid."""
    instance = _instance(1, 4, 2, clusters=[1, 1, 2, 3])
    assert column_cost((0, 1), instance) == -instance.big_m
    value = column_cost((0, 2), instance)
    assert value > 0
    assert instance.cost([2, 0]) == value
    print(f"  ✓ Cross-cluster pair worth {value:.3f} bit/s/Hz; same-cluster pair -M")

    strict = _instance(1, 4, 2, sinr_floor=1e30)
    assert column_cost((0, 2), strict) == -strict.big_m
    print("  ✓ SINR floor enforced")

    try:
        column_cost((0,), instance)
        raise AssertionError("Singletons should be rejected")
    except BnpError:
        print("  ✓ Singleton column rejected")

    try:
        BnpInstance(np.ones((2, 3)), 2, [1, 2], ENERGY)
        raise AssertionError("Short cluster vector should be rejected")
    except BnpError:
        print("  ✓ Cluster labels must cover every user")


def test_enumerate_and_branch_helpers():
    """Enumeration respects clusters and branching; pairs are picked from fractional q."""
    instance = _instance(2, 4, 2, clusters=[1, 1, 2, 2])
    sets = list(enumerate_columns(instance))
    assert sorted(sets) == [(0, 2), (0, 3), (1, 2), (1, 3)]

    node = BnbNode(same=frozenset({(0, 2)}))
    assert sorted(enumerate_columns(instance, node)) == [(0, 2), (1, 3)]
    node = BnbNode(diff=frozenset({(0, 2)}))
    assert (0, 2) not in list(enumerate_columns(instance, node))
    print("  ✓ Cluster-respecting sets under same/different constraints")

    try:
        BnbNode(same=frozenset({(0, 1)}), diff=frozenset({(0, 1)}))
        raise AssertionError("Contradictory node should be rejected")
    except BnpError:
        print("  ✓ Contradictory branching rejected")

    columns = [Column((0, 1), 1.0), Column((2, 3), 1.0), Column((0, 2), 1.0), Column((1, 3), 1.0)]
    lambdas = np.full(4, 0.5)
    assert not is_integral(lambdas) and is_integral(np.array([1.0, 0.0, 1.0]))
    pair = branch_pair(lambdas, columns, 4)
    assert pair in {(0, 1), (2, 3), (0, 2), (1, 3)}
    try:
        branch_pair(np.array([1.0, 1.0, 0.0, 0.0]), columns, 4)
        raise AssertionError("Integral solution should not branch")
    except BnpError:
        print(f"  ✓ Branching pair {pair}; integral solutions refused")


def test_round_robin():
    """Users sorted by cluster are dealt onto pilots, one per cluster per pilot."""
    instance = _instance(3, 4, 2, clusters=[2, 1, 2, 1])
    parts = round_robin_partition(instance)
    assert [c.members for c in parts] == [(0, 1), (2, 3)]
    assert all(c.cost > -instance.big_m for c in parts)
    print("  ✓ Round-robin start is cluster-respecting")


def test_restricted_master():
    """Artificials carry the LP when the pool cannot cover everyone."""
    instance = _instance(4, 4, 2)
    empty = solve_rlmp([], 4, 2, instance.big_m)
    assert not empty.feasible

    pool = [Column((0, 1), instance.cost((0, 1))), Column((2, 3), instance.cost((2, 3)))]
    solution = solve_rlmp(pool, 4, 2, instance.big_m)
    assert solution.feasible
    assert np.allclose(solution.lambdas, [1.0, 1.0])
    assert abs(solution.objective - (pool[0].cost + pool[1].cost)) < 1e-9
    print("  ✓ Two disjoint columns cover the users")

    try:
        solve_rlmp([], 1, 2, instance.big_m)
        raise AssertionError("Fewer users than pilots should be rejected")
    except StructuralInfeasibility:
        print("  ✓ Fewer users than pilots rejected")


def test_matches_oracle():
    """Branch-and-price finds the enumerated optimum and certifies it on 60 geometries."""
    worst_nodes = 0
    for k in range(60):
        users = 4 + k % 5
        pilots = 3 if users >= 6 and (k // 5) % 2 else 2
        instance = _instance(10 + k, users, pilots)
        result = bnp_solve(instance, time_budget=120.0)
        _, optimum = exhaustive_oracle(instance)

        assert result.certified
        assert abs(result.objective - optimum) <= 1e-6 * max(1.0, abs(optimum)), (k, result.objective, optimum)
        assert len(result.columns) == pilots
        assert np.all(result.pilots >= 1)
        sizes = np.bincount(result.pilots, minlength=pilots + 1)[1:]
        assert np.all(sizes >= 2)
        assert abs(sum(c.cost for c in result.columns) - result.objective) < 1e-9
        assert result.stats.root_bound >= result.objective - 1e-6
        worst_nodes = max(worst_nodes, result.stats.nodes_processed)
    print(f"  ✓ 60 instances with N in 4..8 match the oracle (at most {worst_nodes} nodes)")



def test_matches_oracle_with_clusters():
    """Spectral clusters restrict both searches to the same partitions."""
    window = CircularWindow(400.0)
    rrhs = sample_uniform(6, window, seed=21)
    points = sample_uniform(8, window, seed=22)
    beta = gain_matrix(rrhs, points)
    clusters = cluster_users(beta, 3, seed=1).user_membership
    instance = BnpInstance(beta, 3, clusters, ENERGY, sinr_floor=0.0)

    result = bnp_solve(instance, time_budget=120.0)
    _, optimum = exhaustive_oracle(instance)
    assert result.certified
    assert abs(result.objective - optimum) <= 1e-6 * max(1.0, abs(optimum))
    for column in result.columns:
        labels = clusters[list(column.members)]
        assert np.unique(labels).size == labels.size
    assignment = result.to_assignment()
    assert assignment.scheme == "bnp" and assignment.assigned_count == 8
    print(f"  ✓ Clustered instance: {result.objective:.4f} bit/s/Hz")


def test_infeasible_and_budget():
    """N_u < 2P is structural; an exhausted budget returns the start uncertified."""
    try:
        bnp_solve(_instance(5, 3, 2))
        raise AssertionError("Three users cannot fill two pilot sets")
    except StructuralInfeasibility:
        print("  ✓ N_u < 2P rejected")

    try:
        exhaustive_oracle(_instance(5, 4, 2, clusters=[1, 1, 1, 1]))
        raise AssertionError("One shared cluster leaves no valid partition")
    except StructuralInfeasibility:
        print("  ✓ Oracle reports no cluster-respecting partition")

    instance = _instance(6, 10, 2)
    result = bnp_solve(instance, time_budget=1e-9)
    assert not result.certified
    assert len(result.columns) == 2
    assert np.all(result.pilots >= 1)
    print("  ✓ Uncertified incumbent returned when the budget runs out")


def main():
    """Run all tests."""
    print("\n" + "=" * 70)
    print("  Branch-and-Price Tests")
    print("=" * 70 + "\n")

    tests = [
        test_set_partitions,
        test_column_cost,
        test_enumerate_and_branch_helpers,
        test_round_robin,
        test_restricted_master,
        test_matches_oracle,
        test_matches_oracle_with_clusters,
        test_infeasible_and_budget,
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
        print("✅ All branch-and-price tests passed!")
        sys.exit(0)


if __name__ == "__main__":
    main()
