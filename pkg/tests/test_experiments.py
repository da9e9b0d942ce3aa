import csv

import numpy as np
import pytest

from distancenet.analysis import DistanceMatrix, z1
from distancenet.data import gen_synthetic
from distancenet.experiments import run_analysis
from distancenet.training import ExperimentConfig

CFG = ExperimentConfig(probe_size=100)


@pytest.fixture(scope="module")
def separated():
    return gen_synthetic(num_domains=4, dim=8, n_train=200, n_unlabeled=200, shift=3.0, seed=0)


def test_well_separated_z1(separated):
    res = run_analysis(separated, ["L2", "MMD"], CFG)
    assert z1(res.matrices["L2"]) == 1.0
    assert z1(res.matrices["MMD"]) == 1.0


def test_zero_shift_z2_near_uniform():
    ds = gen_synthetic(num_domains=4, dim=8, n_train=200, n_unlabeled=200, shift=0.0, seed=1)
    res = run_analysis(ds, ["L2", "MMD"], CFG)
    k = len(ds)
    for row in res.table:
        assert abs(row["z2"] - 1 / k) <= 0.2 / k


def test_duplicate_measure_is_uninformative(separated):
    res = run_analysis(separated, ["L2", "MMD", "MMD"], CFG)
    assert list(res.matrices) == ["L2", "MMD", "MMD_2"]
    np.testing.assert_array_equal(res.matrices["MMD"].values, res.matrices["MMD_2"].values)
    assert abs(res.informativeness.scores["MMD_2"]) <= 1e-3


def test_csv_outputs(tmp_path, separated):
    res = run_analysis(separated, ["L2", "MMD", "FLD"], CFG, tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    for m in ("L2", "MMD", "FLD"):
        assert f"distance_{m}.csv" in names and f"log_distance_{m}.csv" in names
    assert {"separability.csv", "informativeness.csv", "phi.csv"} <= names
    back = DistanceMatrix.from_csv(tmp_path / "distance_L2.csv")
    np.testing.assert_array_equal(back.values, res.matrices["L2"].values)
    logs = DistanceMatrix.from_csv(tmp_path / "log_distance_L2.csv")
    np.testing.assert_array_equal(logs.values, np.log(res.matrices["L2"].values))
    with open(tmp_path / "informativeness.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["measure"] for r in rows] == ["L2", "MMD", "FLD"]


def test_deterministic_bytes(tmp_path, separated):
    run_analysis(separated, ["L2", "Cosine"], CFG, tmp_path / "a")
    run_analysis(separated, ["L2", "Cosine"], CFG, tmp_path / "b")
    for p in (tmp_path / "a").iterdir():
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_correlation_with_results(tmp_path, separated):
    ids = [d.domain_id for d in separated]
    res0 = run_analysis(separated, ["L2"], CFG)
    m = res0.matrices["L2"]
    # Accuracy falling linearly with distance gives correlation -1.
    results = {(a, b): 1.0 - 0.01 * m.values[i, j] for i, a in enumerate(ids) for j, b in enumerate(ids)}
    res = run_analysis(separated, ["L2"], CFG, tmp_path, results)
    by_metric = {r["metric"]: r for r in res.correlations}
    assert by_metric["accuracy"]["pearson"] == pytest.approx(-1.0, abs=1e-9)
    assert by_metric["accuracy_drop"]["pairs"] == len(ids) * (len(ids) - 1)
    assert (tmp_path / "correlation.csv").exists()


def test_needs_two_domains(separated):
    with pytest.raises(ValueError):
        run_analysis(separated[:1], ["L2"], CFG)
