import numpy as np
import pytest

from distancenet import analysis as A
from distancenet.analysis import DistanceMatrix
from distancenet.distances import DomainBatch, d_l2
from distancenet.errors import DegenerateSpread

from oracles import grid_phi, z2_by_hand


def matrix(values, ids=None):
    values = np.asarray(values, float)
    return DistanceMatrix(ids or list(range(len(values))), values, "test")


def separating(k, rng, noise=0.05):
    v = 1.0 + noise * rng.normal(size=(k, k))
    v[np.diag_indices(k)] = 0.2 + noise * rng.normal(size=k)
    return matrix(v)


def noise_matrix(k, rng):
    return matrix(rng.uniform(0.5, 1.5, size=(k, k)))


class TestBuildMatrix:
    def test_entries_are_direct_calls(self):
        rng = np.random.default_rng(0)
        probes = [A.split_probes(rng.normal(size=(40, 3)) + i, 10, rng, f"d{i}") for i in range(3)]
        m = A.build_distance_matrix(probes, "L2")
        assert m.domain_ids == ["d0", "d1", "d2"]
        for i in range(3):
            for j in range(3):
                assert m.values[i, j] == d_l2(probes[i][0], probes[j][1])

    def test_probes_are_disjoint(self):
        rng = np.random.default_rng(1)
        x = np.arange(60, dtype=float).reshape(30, 2)
        a, b = A.split_probes(x, 15, rng)
        rows_a = {tuple(r) for r in a.samples}
        rows_b = {tuple(r) for r in b.samples}
        assert not rows_a & rows_b and len(rows_a) == len(rows_b) == 15

    def test_same_distribution_near_zero(self):
        rng = np.random.default_rng(2)
        probes = [A.split_probes(rng.normal(size=(4000, 3)), 2000, rng) for _ in range(2)]
        m = A.build_distance_matrix(probes, "L2")
        assert np.all(m.values < 0.15)

    def test_far_apart_gaussians(self):
        rng = np.random.default_rng(3)
        centers = [np.zeros(4), np.array([10.0, 0, 0, 0])]
        probes = [A.split_probes(rng.normal(size=(400, 4)) + c, 200, rng) for c in centers]
        m = A.build_distance_matrix(probes, "L2")
        assert m.values[0, 0] < 0.5 and m.values[1, 1] < 0.5
        assert m.values[0, 1] == pytest.approx(10, abs=0.5)
        assert m.values[1, 0] == pytest.approx(10, abs=0.5)


class TestZ1:
    def test_perfect(self):
        assert A.z1(matrix(1 - np.eye(4))) == 1.0

    def test_inverted(self):
        assert A.z1(matrix(np.eye(4))) == 0.0

    def test_one_violation(self):
        v = np.full((3, 3), 2.0)
        v[np.diag_indices(3)] = [1.0, 0.1, 0.1]
        v[0, 1] = 0.5  # below domain 0's diagonal, still above domain 1's
        assert A.z1(matrix(v)) == pytest.approx(2 / 3)

    def test_column_violation_counts(self):
        v = np.full((3, 3), 2.0)
        v[np.diag_indices(3)] = 0.1
        v[2, 0] = 0.05  # below domain 0's diagonal, in its column
        assert A.z1(matrix(v)) == pytest.approx(1 / 3)

    def test_affine_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            v = rng.uniform(size=(5, 5))
            a, b = rng.uniform(0.1, 10), rng.normal() * 5
            assert A.z1(matrix(v)) == A.z1(matrix(a * v + b))


class TestZ2:
    def test_matches_hand_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            v = rng.normal(size=(4, 4))
            assert A.z2(matrix(v)) == pytest.approx(z2_by_hand(v), abs=1e-12)

    def test_near_constant(self):
        rng = np.random.default_rng(6)
        k = 5
        v = 3.0 + 1e-9 * rng.normal(size=(k, k))
        # Standardizing amplifies the noise to unit scale, so only approximate.
        assert A.z2(matrix(v)) == pytest.approx(1 / k, rel=1.0)
        assert 0 < A.z2(matrix(v)) < 1

    def test_uniform_after_tiny_spread(self):
        k = 4
        v = np.full((k, k), 2.0)
        v[0, 1] += 1e-6
        v[1, 0] -= 1e-6
        # Two entries at +-sqrt(K^2/2) after standardization, rest at zero.
        z = np.sqrt(k * k / 2)
        total = (k * k - 2) + np.exp(z) + np.exp(-z)
        assert A.z2(matrix(v)) == pytest.approx(k / total, rel=1e-6)

    def test_diagonal_far_below(self):
        k = 16
        v = np.full((k, k), 10.0)
        v[np.diag_indices(k)] = -10.0
        # Standardized: diagonal at -sqrt(K-1), off-diagonal at 1/sqrt(K-1).
        lo, hi = -np.sqrt(k - 1), 1 / np.sqrt(k - 1)
        expected = k * np.exp(lo) / (k * np.exp(lo) + (k * k - k) * np.exp(hi))
        assert A.z2(matrix(v)) == pytest.approx(expected, rel=1e-12)
        assert A.z2(matrix(v)) < 2e-3

    def test_affine_invariance(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            v = rng.uniform(size=(6, 6))
            a, b = rng.uniform(0.01, 100), rng.normal() * 50
            assert abs(A.z2(matrix(v)) - A.z2(matrix(a * v + b))) <= 1e-9

    def test_constant_matrix(self):
        with pytest.raises(DegenerateSpread):
            A.z2(matrix(np.ones((3, 3))))


def test_correlate_with_results():
    acc = np.array([0.9, 0.8, 0.75, 0.6, 0.55])
    assert A.correlate_with_results(3.0 - 2.0 * acc, acc) == pytest.approx(-1.0)


def test_correlate_null_distribution():
    rng = np.random.default_rng(8)
    x, y = rng.normal(size=1000), rng.normal(size=1000)
    assert abs(A.correlate_with_results(x, y)) < 0.1


class TestMixturePhi:
    def test_single_component(self):
        m = separating(5, np.random.default_rng(9))
        phi, alpha = A.mixture_phi([m], steps=200)
        assert phi == pytest.approx(A.z2(m), abs=1e-9)
        assert alpha[0] > 0

    def test_informative_beats_noise(self):
        rng = np.random.default_rng(10)
        good, bad = separating(4, rng), noise_matrix(4, rng)
        result = A.mixture_phi([good, bad])
        assert result.phi <= A.z2(bad)
        assert abs(result.alpha[0]) > abs(result.alpha[1])
        grid_value, _ = grid_phi([good.values, bad.values])
        # Fixed-budget descent should land within optimizer slack of the grid optimum.
        assert result.phi <= grid_value + 1e-3

    def test_full_set_no_worse_than_subsets(self):
        rng = np.random.default_rng(11)
        mats = [noise_matrix(4, rng) for _ in range(3)]
        full = A.mixture_phi(mats).phi
        for drop in range(3):
            assert full <= A.mixture_phi([m for i, m in enumerate(mats) if i != drop]).phi + 1e-6
        for m in mats:
            assert full <= A.z2(m) + 1e-6

    def test_unpacks(self):
        rng = np.random.default_rng(12)
        phi, alpha = A.mixture_phi([noise_matrix(3, rng), noise_matrix(3, rng)], steps=10)
        assert np.isfinite(phi) and len(alpha) == 2


class TestInformativeness:
    def test_duplicate_component(self):
        rng = np.random.default_rng(13)
        a, b = separating(4, rng, noise=0.3), noise_matrix(4, rng)
        score = A.informativeness([a, b, a], 2)
        assert abs(score) <= 1e-3
        # Grid search agrees that the duplicate adds nothing.
        with_dup, _ = grid_phi([a.values, b.values, a.values], grid=np.linspace(0, 1, 11))
        without, _ = grid_phi([a.values, b.values], grid=np.linspace(0, 1, 11))
        assert abs(with_dup - without) <= 1e-3

    def test_removing_the_separating_matrix(self):
        rng = np.random.default_rng(14)
        good = separating(6, rng)
        flat = matrix(1.0 + 0.01 * rng.normal(size=(6, 6)))
        score = A.informativeness([good, flat], 0)
        oracle_full, _ = grid_phi([good.values, flat.values])
        oracle_rest, _ = grid_phi([flat.values])
        assert oracle_full - oracle_rest < -0.05
        assert score == pytest.approx(oracle_full - oracle_rest, abs=5e-3)

    def test_report(self):
        rng = np.random.default_rng(15)
        mats = [separating(4, rng, noise=0.3), noise_matrix(4, rng), noise_matrix(4, rng)]
        report = A.informativeness_report(mats, ["a", "b", "c"], steps=300)
        assert set(report.scores) == {"a", "b", "c"}
        assert all(s <= 1e-6 for s in report.scores.values())
        assert report.least_informative() in {"a", "b", "c"}


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(16)
    m = DistanceMatrix(["x", "y", "z"], rng.uniform(size=(3, 3)), "L2")
    m.to_csv(tmp_path / "m.csv")
    back = DistanceMatrix.from_csv(tmp_path / "m.csv")
    assert back.domain_ids == ["x", "y", "z"]
    assert np.array_equal(back.values, m.values)
    m.to_csv(tmp_path / "log.csv", log=True)
    np.testing.assert_array_equal(DistanceMatrix.from_csv(tmp_path / "log.csv").values, np.log(m.values))
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "x,y,z"
