import itertools

import numpy as np
import pytest
from scipy.stats import binom

from conftest import random_rows
from pmdist.confusion import (
    ClassifierOutput,
    ConfusionMatrixUQ,
    build_confusion_pmd,
    cell_interval,
    cell_marginal_pmf,
    confusion_to_outcome,
    interval_grid,
    joint_pmf,
    quantile_interval,
    read_classifier_csv,
)
from pmdist.errors import SPMError
from pmdist.exact import pmf_blockwise
from pmdist.spm import detect_blocks

# six soft predictions over four classes, all from units of class 4
TABLE_ROWS = np.array([
    [0.0193, 0.0082, 0.0013, 0.9712],
    [0.0229, 0.0140, 0.0016, 0.9615],
    [0.0117, 0.0113, 0.0010, 0.9760],
    [0.0224, 0.0208, 0.0016, 0.9552],
    [0.0108, 0.0163, 0.0008, 0.9721],
    [0.0252, 0.0126, 0.0015, 0.9607],
])


def toy(rng, n, m):
    return ClassifierOutput(random_rows(rng, n, m), rng.integers(1, m + 1, n))


def test_two_unit_placement():
    out = ClassifierOutput([[0.9, 0.1], [0.2, 0.8]], [1, 2])
    c = build_confusion_pmd(out)
    np.testing.assert_array_equal(c.spm.entries, [[0.9, 0.1, 0, 0], [0, 0, 0.2, 0.8]])
    assert c.empty_classes == ()
    assert joint_pmf(out, [[1, 0], [0, 1]]) == pytest.approx(0.72)


def test_single_class_blocks():
    out = ClassifierOutput(TABLE_ROWS, [4] * 6)
    c = build_confusion_pmd(out)
    assert c.spm.entries.shape == (6, 16)
    np.testing.assert_allclose(c.spm.entries[:, 12:], TABLE_ROWS / TABLE_ROWS.sum(axis=1, keepdims=True))
    assert np.all(c.spm.entries[:, :12] == 0)
    assert c.empty_classes == (1, 2, 3)


def test_three_classes_give_three_blocks():
    out = toy(np.random.default_rng(0), 30, 3)
    assert len(detect_blocks(build_confusion_pmd(out).spm)) == 3


def test_rows_follow_sorted_labels():
    out = ClassifierOutput([[0.1, 0.9], [0.7, 0.3], [0.6, 0.4]], [2, 1, 2])
    c = build_confusion_pmd(out)
    assert c.order.tolist() == [1, 0, 2]
    np.testing.assert_allclose(c.spm.entries[0], [0.7, 0.3, 0, 0])


def test_deterministic_classifier():
    out = ClassifierOutput([[1, 0], [0, 1], [0, 1]], [1, 1, 2])
    # exact up to transform round-off
    assert abs(joint_pmf(out, [[1, 0], [1, 1]]) - 1.0) < 1e-14
    assert abs(joint_pmf(out, [[2, 0], [0, 1]])) < 1e-14


def test_joint_equals_blockwise():
    out = toy(np.random.default_rng(1), 30, 3)
    c = build_confusion_pmd(out)
    rng = np.random.default_rng(2)
    for _ in range(5):
        x = np.zeros((3, 3), dtype=int)
        for k, nk in enumerate(out.class_sizes):
            x[:, k] = rng.multinomial(nk, [1 / 3] * 3)
        assert abs(joint_pmf(out, x) - pmf_blockwise(c.spm, c.partition, confusion_to_outcome(x))) < 1e-12


def _all_matrices(sizes, m):
    cols = [[c for c in itertools.product(range(nk + 1), repeat=m) if sum(c) == nk] for nk in sizes]
    for combo in itertools.product(*cols):
        yield np.array(combo).T


@pytest.mark.parametrize("n,m,seed", [(4, 2, 0), (5, 3, 1), (6, 3, 2), (6, 2, 3)])
def test_joint_sums_to_one_and_marginalizes(n, m, seed):
    out = toy(np.random.default_rng(seed), n, m)
    mats = list(_all_matrices(out.class_sizes, m))
    probs = np.array([joint_pmf(out, x) for x in mats])
    assert abs(probs.sum() - 1) < 1e-10
    for j in range(m):
        for k in range(m):
            if out.class_sizes[k] == 0:
                continue
            marg = np.zeros(out.class_sizes[k] + 1)
            for x, p in zip(mats, probs):
                marg[x[j, k]] += p
            assert np.abs(marg - cell_marginal_pmf(out, j + 1, k + 1)).max() < 1e-10


def test_column_sums_rejected():
    out = ClassifierOutput([[0.9, 0.1], [0.2, 0.8]], [1, 2])
    with pytest.raises(ValueError, match="column sums"):
        joint_pmf(out, [[2, 0], [0, 0]])


def test_cell_marginal_examples():
    out = ClassifierOutput([[0.1, 0.9], [0.9, 0.1], [0.0, 1.0]], [1, 1, 2])
    np.testing.assert_allclose(cell_marginal_pmf(out, 1, 1), [0.09, 0.82, 0.09], atol=1e-15)
    np.testing.assert_array_equal(cell_marginal_pmf(out, 1, 2), [1.0, 0.0])
    with pytest.raises(SPMError):
        cell_marginal_pmf(ClassifierOutput([[0.5, 0.5]], [1]), 1, 2)


def test_means_sum_to_class_sizes():
    out = toy(np.random.default_rng(3), 300, 3)
    for k in range(1, 4):
        means = [cell_interval(out, j, k).mean for j in range(1, 4)]
        assert abs(sum(means) - out.class_sizes[k - 1]) < 1e-8
        assert abs(means[0] - out.class_probs(k)[:, 0].sum()) < 1e-10


def test_binomial_interval():
    out = ClassifierOutput(np.full((100, 2), 0.5), [1] * 100)
    ci = cell_interval(out, 1, 1, 0.95)
    assert (ci.lo, ci.hi) == (40, 60)
    assert binom.cdf(39, 100, 0.5) < 0.025 <= binom.cdf(40, 100, 0.5)
    assert binom.cdf(59, 100, 0.5) < 0.975 <= binom.cdf(60, 100, 0.5)


def test_interval_properties():
    out = toy(np.random.default_rng(4), 80, 3)
    for j, k in itertools.product(range(1, 4), repeat=2):
        ci = cell_interval(out, j, k, 0.9)
        pmf = cell_marginal_pmf(out, j, k)
        assert 0 <= ci.lo <= ci.hi <= out.class_sizes[k - 1]
        assert pmf[ci.lo : ci.hi + 1].sum() >= 0.9 - 1e-12
    assert quantile_interval([0.0, 0.0, 1.0], 0.95) == (2, 2)
    with pytest.raises(ValueError):
        quantile_interval([1.0], 1.5)


def test_label_validation():
    with pytest.raises(ValueError):
        ClassifierOutput([[0.5, 0.5]], [3])
    with pytest.raises(ValueError):
        ClassifierOutput([[0.5, 0.5]], [1, 2])


def test_csv_and_grid(tmp_path):
    path = tmp_path / "probs.csv"
    path.write_text("true_label,p_1,p_2,p_3\n1,0.7,0.2,0.1\n3,0.1,0.1,0.8\n1,0.6,0.3,0.1\n")
    out = read_classifier_csv(path)
    assert out.class_sizes.tolist() == [2, 0, 1]
    grid = interval_grid(out, with_pmf=True)
    assert grid["empty_classes"] == [2]
    assert len(grid["cells"]) == 6
    assert len(grid["cells"][0]["pmf"]) == 3


def test_estimator():
    out = toy(np.random.default_rng(5), 60, 3)
    est = ConfusionMatrixUQ(level=0.9).fit(out.probs, out.true_labels)
    np.testing.assert_allclose(est.mean_.sum(axis=0), out.class_sizes, atol=1e-8)
    assert np.all(est.lower_ <= est.upper_)
    assert est.cell_pmf(1, 1).size == out.class_sizes[0] + 1
