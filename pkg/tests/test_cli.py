#!/usr/bin/env python3
"""
Tests for cli.py

Verifies:
1. Exit codes for configuration errors and infeasible instances
2. theory, assign and cluster subcommands on small inputs
3. simulate writes a dataset and its summary
"""

import sys
import shutil
import tempfile
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / 'src'))

from cli import (
    EXIT_CONFIG, EXIT_FAILURE, EXIT_INFEASIBLE, EXIT_NOT_CERTIFIED, EXIT_OK,
    build_parser, exit_code_for, main
)
from config import ConfigError
from bnp_solver import StructuralInfeasibility
from export import read_table
from figures import FigureError
from maxmin_partition import FeasibilityTimeout
from stochastic_geometry import CircularWindow, sample_uniform


def _point_file(directory: Path, name: str, count: int, seed: int) -> Path:
    return sample_uniform(count, CircularWindow(300.0), seed).to_csv(directory / name)


def test_exit_codes():
    """Each error family maps to its documented code."""
    assert exit_code_for(ConfigError("x")) == EXIT_CONFIG
    assert exit_code_for(FigureError("x")) == EXIT_CONFIG
    assert exit_code_for(StructuralInfeasibility("x")) == EXIT_INFEASIBLE
    assert exit_code_for(FeasibilityTimeout("x")) == EXIT_NOT_CERTIFIED
    assert exit_code_for(RuntimeError("x")) == EXIT_FAILURE
    print("  ✓ Config 2, infeasible 3, budget 4, other 1")

    assert main(["simulate", "--override", "bogus=1"]) == EXIT_CONFIG
    assert main(["simulate", "--override", "trials"]) == EXIT_CONFIG
    assert main(["simulate", "--override", "trials=0"]) == EXIT_CONFIG
    print("  ✓ Unknown field, malformed override and invalid value all exit 2")
    assert main(["simulate", "--override", "scheme=bnp"]) == EXIT_CONFIG
    print("  ✓ BnP over the default layout exits 2 before any trial")

    temp_dir = Path(tempfile.mkdtemp())
    try:
        assert main(["figure", "fig9", "--out", str(temp_dir)]) == EXIT_CONFIG
        print("  ✓ Unknown figure exits 2")
    finally:
        shutil.rmtree(temp_dir)


def test_parser():
    """Subcommands parse into their handlers."""
    parser = build_parser()
    args = parser.parse_args(["theory", "prob", "--user-density", "1e-4", "--radius", "200", "--pilots", "4", "8"])
    assert args.pilots == [4, 8]
    assert args.observation_radius == 600.0
    args = parser.parse_args(["assign", "rsa", "--users", "u.csv", "--pilots", "3"])
    assert args.radius == 200.0 and args.scheme == "rsa"
    try:
        parser.parse_args(["assign", "kmeans", "--users", "u.csv", "--pilots", "3"])
        raise AssertionError("Unknown scheme should not parse")
    except SystemExit:
        print("  ✓ Arguments parsed; unknown scheme refused")


def test_theory():
    """Probability and density curves print or write datasets."""
    assert main(["theory", "prob", "--user-density", "1e-4", "--radius", "200", "--pilots", "4", "8"]) == EXIT_OK

    temp_dir = Path(tempfile.mkdtemp())
    try:
        out = temp_dir / "prob.csv"
        assert main(["theory", "prob", "--user-density", "1e-4", "--radius", "200",
                     "--pilots", "1", "2", "4", "--out", str(out)]) == EXIT_OK
        header, columns, rows = read_table(out)
        assert columns == ["num_pilots", "probability"]
        probabilities = [float(r[1]) for r in rows]
        assert probabilities == sorted(probabilities)
        assert header["printed_form"] == "0"
        print(f"  ✓ Probabilities rise with P: {[round(p, 4) for p in probabilities]}")

        curve = temp_dir / "density.csv"
        assert main(["theory", "density", "--intensity", "1e-4", "--radius", "100",
                     "--t-max", "0.5", "--step", "0.05", "--out", str(curve)]) == EXIT_OK
        assert curve.exists()
        print("  ✓ Density curve written")
    finally:
        shutil.rmtree(temp_dir)


def test_assign():
    """RSA on a point file; max-min and BnP report infeasibility with exit 3."""
    temp_dir = Path(tempfile.mkdtemp())
    try:
        users = _point_file(temp_dir, "users.csv", 10, seed=3)
        out = temp_dir / "pilots.csv"
        assert main(["assign", "rsa", "--users", str(users), "--pilots", "3",
                     "--radius", "150", "--seed", "7", "--out", str(out)]) == EXIT_OK
        header, columns, rows = read_table(out)
        assert columns == ["user_index", "x", "y", "pilot"]
        assert len(rows) == 10
        assert all(0 <= int(r[3]) <= 3 for r in rows)
        assert header["scheme"] == "rsa"
        print(f"  ✓ RSA assigned {sum(int(r[3]) > 0 for r in rows)}/10 users")

        out = temp_dir / "maxmin.csv"
        assert main(["assign", "maxmin", "--users", str(users), "--pilots", "2",
                     "--out", str(out)]) == EXIT_OK
        _, _, rows = read_table(out)
        assert sorted({int(r[3]) for r in rows}) == [1, 2]
        print("  ✓ Max-min splits 10 users onto 2 pilots")

        few = _point_file(temp_dir, "few.csv", 3, seed=4)
        rrhs = _point_file(temp_dir, "rrhs.csv", 4, seed=5)
        assert main(["assign", "maxmin", "--users", str(few), "--pilots", "2"]) == EXIT_INFEASIBLE
        assert main(["assign", "bnp", "--users", str(few), "--rrhs", str(rrhs), "--pilots", "2"]) == EXIT_INFEASIBLE
        print("  ✓ Three users cannot fill two pilot sets of two")

        assert main(["assign", "bnp", "--users", str(users), "--pilots", "2"]) == EXIT_CONFIG
        print("  ✓ bnp without --rrhs exits 2")

        assert main(["assign", "maxmin", "--users", str(users), "--pilots", "2",
                     "--time-budget", "1e-9"]) == EXIT_NOT_CERTIFIED
        print("  ✓ Max-min out of time exits 4")
    finally:
        shutil.rmtree(temp_dir)


def test_cluster():
    """Cluster labels for every user and RRH."""
    temp_dir = Path(tempfile.mkdtemp())
    try:
        users = _point_file(temp_dir, "users.csv", 12, seed=8)
        rrhs = _point_file(temp_dir, "rrhs.csv", 6, seed=9)
        out = temp_dir / "clusters.csv"
        assert main(["cluster", "--users", str(users), "--rrhs", str(rrhs), "--pilots", "3",
                     "--seed", "2", "--out", str(out)]) == EXIT_OK
        header, columns, rows = read_table(out)
        assert columns == ["kind", "index", "cluster"]
        assert [r[0] for r in rows].count("user") == 12
        assert [r[0] for r in rows].count("rrh") == 6
        user_labels = [int(r[2]) for r in rows if r[0] == "user"]
        assert max(user_labels.count(c) for c in set(user_labels)) <= 3
        print(f"  ✓ {header['num_clusters']} clusters, Ncut {float(header['ncut']):.4f}")
    finally:
        shutil.rmtree(temp_dir)


def test_simulate():
    """A small experiment writes its trials and summary."""
    temp_dir = Path(tempfile.mkdtemp())
    try:
        out = temp_dir / "run.csv"
        summary = temp_dir / "summary.csv"
        argv = ["simulate", "--out", str(out), "--summary", str(summary)]
        for item in ("trials=2", "generation_radius=600", "measurement_radius=300",
                     "user_density=5e-5", "rrh_density=5e-5", "num_pilots=3"):
            argv += ["--override", item]
        assert main(argv) == EXIT_OK

        header, _, rows = read_table(out)
        assert len(rows) == 2
        assert header["trials"] == "2"
        _, _, summary_rows = read_table(summary)
        assert len(summary_rows) == 1
        print("  ✓ Two trials and one summary line")
    finally:
        shutil.rmtree(temp_dir)


def test_bnp_with_cluster_file():
    """assign bnp reads the clusters written by the cluster subcommand and honors --big-m."""
    temp_dir = Path(tempfile.mkdtemp())
    try:
        users = _point_file(temp_dir, "users.csv", 8, seed=21)
        rrhs = _point_file(temp_dir, "rrhs.csv", 4, seed=22)
        clusters = temp_dir / "clusters.csv"
        assert main(["cluster", "--users", str(users), "--rrhs", str(rrhs), "--pilots", "2",
                     "--restarts", "3", "--out", str(clusters)]) == EXIT_OK
        header, _, _ = read_table(clusters)
        assert header["restarts"] == "3"
        assert header["include_null_vector"] == "0"

        out = temp_dir / "pilots.csv"
        code = main(["assign", "bnp", "--users", str(users), "--rrhs", str(rrhs), "--pilots", "2",
                     "--cluster-file", str(clusters), "--big-m", "1e5", "--time-budget", "30",
                     "--out", str(out)])
        assert code in (EXIT_OK, EXIT_NOT_CERTIFIED)
        header, _, rows = read_table(out)
        assert header["big_m"] == "100000.0"
        assert header["clusters"] == "clusters.csv"
        assert len(rows) == 8
        print(f"  ✓ BnP on given clusters, objective {float(header['objective']):.3f}")

        labels = [int(r[2]) for r in read_table(clusters)[2] if r[0] == "user"]
        short = temp_dir / "short.csv"
        short.write_text("kind,index,cluster\n" + "".join(f"user,{i},{c}\n" for i, c in enumerate(labels[:5])))
        assert main(["assign", "bnp", "--users", str(users), "--rrhs", str(rrhs), "--pilots", "2",
                     "--cluster-file", str(short)]) == EXIT_CONFIG
        assert main(["assign", "bnp", "--users", str(users), "--rrhs", str(rrhs), "--pilots", "2",
                     "--cluster-file", str(temp_dir / "missing.csv")]) == EXIT_CONFIG
        print("  ✓ Short or missing cluster file exits 2")
    finally:
        shutil.rmtree(temp_dir)


def test_cluster_flags():
    """Restart count and null-vector option reach the clustering."""
    temp_dir = Path(tempfile.mkdtemp())
    try:
        users = _point_file(temp_dir, "users.csv", 10, seed=31)
        rrhs = _point_file(temp_dir, "rrhs.csv", 5, seed=32)
        out = temp_dir / "clusters.csv"
        assert main(["cluster", "--users", str(users), "--rrhs", str(rrhs), "--pilots", "3",
                     "--include-null-vector", "--restarts", "2", "--out", str(out)]) == EXIT_OK
        header, _, rows = read_table(out)
        assert header["include_null_vector"] == "1"
        assert header["restarts"] == "2"
        assert len(rows) == 15
        print("  ✓ Null-vector embedding with two restarts")

        assert main(["cluster", "--users", str(users), "--rrhs", str(rrhs), "--pilots", "3",
                     "--restarts", "0"]) == EXIT_CONFIG
        print("  ✓ Zero restarts exits 2")
    finally:
        shutil.rmtree(temp_dir)


def main_runner():
    """Run all tests."""
    print("\n" + "=" * 70)
    print("  Command-Line Tests")
    print("=" * 70 + "\n")

    tests = [
        test_exit_codes,
        test_parser,
        test_theory,
        test_assign,
        test_cluster,
        test_simulate,
        test_bnp_with_cluster_file,
        test_cluster_flags,
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
        print("✅ All command-line tests passed!")
        sys.exit(0)


if __name__ == "__main__":
    main_runner()
