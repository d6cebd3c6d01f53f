#!/usr/bin/env python3
"""
Tests for channel_model.py

Verifies:
1. Path loss values and slope
2. Estimation quality and power control
3. Asymptotic SINR (symmetric layouts, singletons, vectorized form)
4. Channel state and SE metrics
"""

import sys
import shutil
import tempfile
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / 'src'))

import numpy as np

from stochastic_geometry import CircularWindow, PointSet, derive_seed, sample_uniform
from channel_model import (
    ChannelError, PathlossParams, asymptotic_sinr, channel_state, copilot_sinrs,
    gain_matrix, gamma_for_set, gammas_for_set, large_scale_gain, pathloss_db,
    power_control, se_metrics, spectral_efficiency
)
from export import read_table

ENERGY = 16 * 1e8


def test_pathloss():
    """l(1 km) and the per-doubling slope of the urban model."""
    assert abs(pathloss_db(1000.0) - 111.1609) < 1e-3, pathloss_db(1000.0)
    slope = pathloss_db(2000.0) - pathloss_db(1000.0)
    assert abs(slope - 11.5757) < 1e-3, slope
    print(f"  ✓ l(1000) = {pathloss_db(1000.0):.4f} dB, slope {slope:.4f} dB per doubling")

    assert pathloss_db(0.5) == pathloss_db(1.0)
    values = pathloss_db(np.array([10.0, 100.0, 1000.0]))
    assert values.shape == (3,) and np.all(np.diff(values) > 0)
    assert np.isclose(large_scale_gain(1000.0), 10 ** (-pathloss_db(1000.0) / 10), rtol=1e-12, atol=0)
    print("  ✓ Clamped below 1 m, increasing, gain is 10^(-l/10)")

    for bad in (0.0, -5.0):
        try:
            pathloss_db(bad)
            raise AssertionError(f"distance {bad} should be rejected")
        except ChannelError:
            print(f"  ✓ Rejected distance {bad}")
    try:
        PathlossParams(ap_height=0.0)
        raise AssertionError("Non-positive height should be rejected")
    except ChannelError:
        print("  ✓ Rejected zero AP height")


def test_gamma_and_power():
    """gamma = E b^2 / (1 + E sum b); every RRH spends 1/P per pilot."""
    rng = np.random.default_rng(0)
    betas = rng.uniform(1e-12, 1e-9, size=(5, 3))
    gammas = gammas_for_set(betas, ENERGY)
    expected = ENERGY * betas[:, 1] ** 2 / (1 + ENERGY * betas.sum(axis=1))
    assert np.allclose(gammas[:, 1], expected, rtol=1e-12)
    assert np.allclose(gamma_for_set(betas, 1, ENERGY), expected, rtol=1e-12)
    assert np.all(gammas <= betas)

    etas = power_control(gammas, 4)
    assert np.allclose(etas.sum(axis=1), 0.25, atol=1e-12)
    print("  ✓ gamma formula and per-RRH power 1/P")

    for call in (lambda: gammas_for_set(np.zeros((3, 0)), ENERGY),
                 lambda: gammas_for_set(betas, 0.0),
                 lambda: gamma_for_set(betas, 3, ENERGY)):
        try:
            call()
            raise AssertionError("Invalid input should be rejected")
        except ChannelError:
            pass
    print("  ✓ Empty sets, zero energy and bad targets rejected")


def test_symmetric_sinr():
    """Two users mirrored between two RRHs see SINR exactly 1."""
    rrhs = PointSet([[100.0, 0.0], [-100.0, 0.0]], CircularWindow(200.0))
    users = PointSet([[0.0, 50.0], [0.0, -50.0]], CircularWindow(200.0))
    beta = gain_matrix(rrhs, users)
    sinr = copilot_sinrs(beta, ENERGY, 1)
    assert np.allclose(sinr, 1.0, rtol=1e-12), sinr
    print("  ✓ Mirror layout gives SINR 1")

    assert np.isinf(copilot_sinrs(beta[:, :1], ENERGY, 1))[0]
    print("  ✓ Singleton set has infinite SINR")


def test_vectorized_sinr_matches_loop():
    """copilot_sinrs agrees with asymptotic_sinr member by member."""
    window = CircularWindow(500.0)
    for k in range(5):
        rrhs = sample_uniform(8, window, derive_seed(3, k, "rrhs"))
        users = sample_uniform(4, window, derive_seed(3, k, "users"))
        beta = gain_matrix(rrhs, users)
        fast = copilot_sinrs(beta, ENERGY, 4)
        gammas = gammas_for_set(beta, ENERGY)
        etas = power_control(gammas, 4)
        slow = np.array([asymptotic_sinr(gammas, etas, o) for o in range(4)])
        assert np.allclose(fast, slow, rtol=1e-10)
    print("  ✓ Vectorized and per-member SINR agree")


def test_sinr_scaling_invariance():
    """A common scale on every gamma, with power control recomputed, leaves the SINR unchanged."""
    window = CircularWindow(500.0)
    for k in range(10):
        rrhs = sample_uniform(6, window, derive_seed(5, k, "rrhs"))
        users = sample_uniform(3, window, derive_seed(5, k, "users"))
        beta = gain_matrix(rrhs, users)
        gammas = gammas_for_set(beta, ENERGY)
        for scale in (1e-3, 7.5, 1e4):
            scaled = gammas * scale
            etas = power_control(scaled, 3)
            assert np.allclose(etas, power_control(gammas, 3), rtol=1e-12)
            for o in range(3):
                base = asymptotic_sinr(gammas, power_control(gammas, 3), o)
                assert abs(asymptotic_sinr(scaled, etas, o) - base) <= 1e-9 * base

        # beta -> c beta with energy / c scales every gamma by c
        for scale in (0.01, 100.0):
            assert np.allclose(copilot_sinrs(beta * scale, ENERGY / scale, 3),
                               copilot_sinrs(beta, ENERGY, 3), rtol=1e-9)
    print("  ✓ SINR unchanged under a common gamma scale on 10 layouts")


def test_copilot_never_increases_sinr():
    """A new co-pilot user lowers gamma and, at fixed power control, the SINR of existing members."""
    window = CircularWindow(500.0)
    for k in range(20):
        rrhs = sample_uniform(6, window, derive_seed(9, k, "rrhs"))
        users = sample_uniform(4, window, derive_seed(9, k, "users"))
        beta = gain_matrix(rrhs, users)
        before = gammas_for_set(beta[:, :3], ENERGY)
        after = gammas_for_set(beta, ENERGY)
        assert np.all(after[:, :3] <= before + 1e-300)

        etas = power_control(before, 4)
        newcomer = power_control(after, 4)[:, 3:]
        for o in range(3):
            alone = asymptotic_sinr(before, etas, o)
            crowded = asymptotic_sinr(np.hstack((before, after[:, 3:])), np.hstack((etas, newcomer)), o)
            assert crowded <= alone * (1 + 1e-12)
    print("  ✓ Gamma and fixed-power SINR never rise with a new co-pilot user on 20 layouts")


def test_copilot_can_raise_sinr_after_power_control():
    """
    Recomputed power control can raise an existing member's SINR.

    RRH 1 serves o, RRH 2 serves k. A strong newcomer next to RRH 2 takes
    most of its power, so k interferes less with o than before.
    """
    u, eps, big = 1e-6, 1e-3, 1e3
    energy = 1e14
    pair = np.array([[u, eps * u], [eps * u, u]])
    trio = np.array([[u, eps * u, 1e-9 * u], [eps * u, u, big * u]])
    alone = copilot_sinrs(pair, energy, 3)[0]
    crowded = copilot_sinrs(trio, energy, 3)[0]
    assert crowded > 2.0 * alone, (alone, crowded)
    print(f"  ✓ SINR of o rises from {alone:.3g} to {crowded:.3g}")


def test_channel_state():
    """Unassigned users get zero gamma, eta and SINR; RRH power is 1/P per used pilot."""
    window = CircularWindow(500.0)
    rrhs = sample_uniform(6, window, seed=1)
    users = sample_uniform(7, window, seed=2)
    beta = gain_matrix(rrhs, users)
    pilots = np.array([1, 2, 1, 0, 2, 3, 1])
    state = channel_state(beta, pilots, ENERGY, 4)

    assert np.all(state.gamma[:, 3] == 0) and np.all(state.eta[:, 3] == 0)
    assert state.sinr(3) == 0.0
    assert np.isinf(state.sinr(5))
    assert np.allclose(state.power_per_rrh(), 3 / 4, atol=1e-12)
    sinrs = state.sinrs()
    for user in (0, 1, 2, 4, 6):
        assert abs(sinrs[user] - state.sinr(user)) <= 1e-9 * max(1.0, sinrs[user])
    print("  ✓ Per-user SINR consistent; power 3/P with three pilots in use")

    temp_dir = Path(tempfile.mkdtemp())
    try:
        path = state.to_csv(temp_dir / "state.csv")
        _, columns, rows = read_table(path)
        assert columns == ["rrh", "user", "beta", "gamma", "eta"]
        assert len(rows) == 6 * 7
        print("  ✓ State written")
    finally:
        shutil.rmtree(temp_dir)

    try:
        channel_state(beta, pilots[:5], ENERGY, 4)
        raise AssertionError("Mismatched pilots should be rejected")
    except ChannelError:
        print("  ✓ Mismatched pilot vector rejected")


def test_se_metrics():
    """SE is log2(1 + SINR) for assigned users, capped for singletons, summed over the window."""
    sinr = np.array([1.0, np.inf, 3.0])
    se = spectral_efficiency(sinr, np.array([True, True, False]), 1e4)
    assert np.allclose(se, [1.0, np.log2(1 + 1e4), 0.0])

    rrhs = PointSet([[100.0, 0.0], [-100.0, 0.0]], CircularWindow(200.0))
    users = PointSet([[0.0, 50.0], [0.0, -50.0], [150.0, 0.0]], CircularWindow(200.0))
    beta = gain_matrix(rrhs, users)
    report = se_metrics(beta, np.array([1, 1, 0]), ENERGY, 2, 1e4, in_window=np.array([True, False, True]))
    assert np.allclose(report.se, [1.0, 1.0, 0.0])
    assert abs(report.sum_se - 1.0) < 1e-12
    assert report.user_se(2) == 0.0
    print("  ✓ SE values and window sum")

    none = se_metrics(beta, np.zeros(3, dtype=int), ENERGY, 2, 1e4)
    assert none.sum_se == 0.0
    print("  ✓ Nobody assigned gives zero SE")


def main():
    """Run all tests."""
    print("\n" + "=" * 70)
    print("  Channel Model Tests")
    print("=" * 70 + "\n")

    tests = [
        test_pathloss,
        test_gamma_and_power,
        test_symmetric_sinr,
        test_vectorized_sinr_matches_loop,
        test_sinr_scaling_invariance,
        test_copilot_never_increases_sinr,
        test_copilot_can_raise_sinr_after_power_control,
        test_channel_state,
        test_se_metrics,
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
        print("✅ All channel tests passed!")
        sys.exit(0)


if __name__ == "__main__":
    main()
