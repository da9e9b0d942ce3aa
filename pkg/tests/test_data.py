import numpy as np
import pytest

from distancenet.data import gen_multisource, gen_synthetic, load_embedded, write_embedded
from distancenet.errors import DimensionMismatch, ParseError


def test_synthetic_sizes_and_ids():
    ds = gen_synthetic(num_domains=3, dim=4, n_train=10, n_valid=5, n_test=6, n_unlabeled=7, seed=1)
    assert [d.domain_id for d in ds] == ["D0", "D1", "D2"]
    d = ds[0]
    assert d.train.inputs.shape == (10, 4) and len(d.valid) == 5 and len(d.test) == 6
    assert d.unlabeled.shape == (7, 4)
    assert set(np.unique(d.train.labels)) <= {0, 1}


def test_synthetic_deterministic():
    a = gen_synthetic(num_domains=2, dim=3, seed=5)
    b = gen_synthetic(num_domains=2, dim=3, seed=5)
    c = gen_synthetic(num_domains=2, dim=3, seed=6)
    np.testing.assert_array_equal(a[1].train.inputs, b[1].train.inputs)
    assert not np.array_equal(a[1].train.inputs, c[1].train.inputs)


def test_zero_shift_shares_distribution():
    ds = gen_synthetic(num_domains=2, dim=4, n_unlabeled=4000, shift=0.0, seed=0)
    gap = np.abs(ds[0].unlabeled.mean(0) - ds[1].unlabeled.mean(0)).max()
    assert gap < 0.15


def test_larger_shift_moves_domains_apart():
    means = []
    for shift in (0.5, 3.0):
        ds = gen_synthetic(num_domains=2, dim=8, n_unlabeled=2000, shift=shift, seed=3)
        means.append(np.linalg.norm(ds[0].unlabeled.mean(0) - ds[1].unlabeled.mean(0)))
    assert means[1] > means[0]


def test_invalid_generation_arguments():
    with pytest.raises(ValueError):
        gen_synthetic(num_domains=1)
    with pytest.raises(ValueError):
        gen_synthetic(dim=1)
    with pytest.raises(ValueError):
        gen_multisource(structure="spiral")


class TestMultisource:
    def test_roles(self):
        sources, target = gen_multisource(dim=6, n_train=50, n_valid=20, n_test=20, n_unlabeled=50, seed=0)
        assert [s.domain_id for s in sources] == ["near", "adversarial", "neutral0", "neutral1"]
        assert target.domain_id == "target"

    def test_near_is_closest_in_mean(self):
        sources, target = gen_multisource(dim=8, n_unlabeled=3000, seed=2)
        gaps = {s.domain_id: np.linalg.norm(s.unlabeled.mean(0) - target.unlabeled.mean(0)) for s in sources}
        assert gaps["near"] < gaps["neutral0"] and gaps["near"] < gaps["neutral1"]

    def test_adversarial_labels_are_flipped(self):
        # Same cluster geometry as the target, so the target's best classifier is
        # wrong on the adversarial domain: check with nearest-center labels.
        sources, target = gen_multisource(dim=8, seed=4, structure="linear")
        adv = sources[1]
        centers = np.stack([target.train.inputs[target.train.labels == c].mean(0) for c in (0, 1)])

        def nearest(x):
            return np.argmin(((x[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)

        assert np.mean(nearest(target.test.inputs) == target.test.labels) > 0.8
        assert np.mean(nearest(adv.test.inputs) == adv.test.labels) < 0.2

    def test_xor_labels_not_linearly_separable_by_class_means(self):
        _, target = gen_multisource(dim=8, seed=0)
        m0 = target.train.inputs[target.train.labels == 0].mean(0)
        m1 = target.train.inputs[target.train.labels == 1].mean(0)
        # Each class is a symmetric pair of clusters, so class means nearly coincide.
        assert np.linalg.norm(m0 - m1) < 0.5


class TestTextFormat:
    def test_round_trip_is_exact(self, tmp_path):
        ds = gen_synthetic(num_domains=2, dim=3, n_train=5, n_valid=2, n_test=3, n_unlabeled=4, seed=0)
        path = tmp_path / "d.tsv"
        write_embedded(ds, path)
        back = load_embedded(path)
        assert [d.domain_id for d in back] == ["D0", "D1"]
        for a, b in zip(ds, back):
            for split in ("train", "valid", "test"):
                np.testing.assert_array_equal(getattr(a, split).inputs, getattr(b, split).inputs)
                np.testing.assert_array_equal(getattr(a, split).labels, getattr(b, split).labels)
            np.testing.assert_array_equal(a.unlabeled, b.unlabeled)

    def test_write_is_deterministic(self, tmp_path):
        ds = gen_synthetic(num_domains=2, dim=3, n_train=5, seed=0)
        write_embedded(ds, tmp_path / "a.tsv")
        write_embedded(ds, tmp_path / "b.tsv")
        assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()

    def test_label_minus_one_goes_to_unlabeled(self, tmp_path):
        path = tmp_path / "d.tsv"
        path.write_text("A\ttrain\t1\t1,2\nA\ttrain\t-1\t3,4\nA\tunlabeled\t-1\t5,6\nA\tvalid\t0\t7,8\n")
        (a,) = load_embedded(path)
        assert len(a.train) == 1 and len(a.valid) == 1 and len(a.test) == 0
        np.testing.assert_array_equal(a.unlabeled, [[3.0, 4.0], [5.0, 6.0]])

    def test_blank_and_comment_lines_skipped(self, tmp_path):
        path = tmp_path / "d.tsv"
        path.write_text("# header\n\nA\ttrain\t0\t1.5\n")
        (a,) = load_embedded(path)
        assert a.train.inputs.tolist() == [[1.5]]

    @pytest.mark.parametrize(
        "bad, line",
        [
            ("A\ttrain\t0\t1,2\nA\ttrain\t0\n", 2),
            ("A\ttrain\t0\t1,2\nA\tholdout\t0\t1,2\n", 2),
            ("A\ttrain\tx\t1,2\n", 1),
            ("A\ttrain\t0\t1,2\nA\ttrain\t0\t1,2\nA\ttrain\t0\t1,zz\n", 3),
            ("A\ttrain\t-3\t1,2\n", 1),
            ("A\ttrain\t0\t1,nan\n", 1),
        ],
    )
    def test_parse_errors_carry_line_numbers(self, tmp_path, bad, line):
        path = tmp_path / "d.tsv"
        path.write_text(bad)
        with pytest.raises(ParseError) as exc:
            load_embedded(path)
        assert exc.value.line == line
        assert f"line {line}" in str(exc.value)

    def test_dimension_mismatch(self, tmp_path):
        path = tmp_path / "d.tsv"
        path.write_text("A\ttrain\t0\t1,2\nB\ttrain\t0\t1,2,3\n")
        with pytest.raises(DimensionMismatch):
            load_embedded(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "d.tsv"
        path.write_text("")
        with pytest.raises(ParseError):
            load_embedded(path)
