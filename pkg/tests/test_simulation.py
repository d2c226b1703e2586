import json
import math

import numpy as np
import pytest

from conftest import EXAMPLE1, random_rows
from pmdist.exact import pmf_at
from pmdist.simulation import (
    BLOCK_DRAWS,
    count_matches,
    empirical_pmf,
    sample,
    sim_error_bounds,
    sim_pmf_at,
)
from pmdist.spm import moments, validate_spm


def test_degenerate_row_always_counted():
    spm = validate_spm([[1.0, 0.0, 0.0], [0.2, 0.3, 0.5], [0.1, 0.1, 0.8]])
    draws = sample(spm, 5000, seed=1).draws
    assert np.all(draws[:, 0] >= 1)
    assert np.all(draws.sum(axis=1) == 3)


def test_zero_column_never_drawn():
    spm = validate_spm([[0.5, 0.5, 0.0], [0.3, 0.7, 0.0]])
    assert np.all(sample(spm, 20000, seed=2).draws[:, 2] == 0)
    assert sim_pmf_at(spm, [0, 1, 1], 1000, seed=0).value == 0.0


def test_single_trial_frequencies():
    p = np.array([0.2, 0.3, 0.5])
    draws = sample(validate_spm(p), 10**5, seed=3).draws
    np.testing.assert_allclose(draws.mean(axis=0), p, atol=0.01)


def test_example_mean():
    draws = sample(validate_spm(EXAMPLE1), 10**6, seed=4).draws
    np.testing.assert_allclose(draws.mean(axis=0), [1.8, 1.0, 1.2], atol=0.01)


def test_mean_within_five_standard_errors():
    spm = validate_spm(random_rows(np.random.default_rng(0), 25, 4))
    b = 10**5
    draws = sample(spm, b, seed=5).draws[:, :3]
    mom = moments(spm)
    assert np.all(np.abs(draws.mean(axis=0) - mom.mu_star) < 5 * np.sqrt(np.diag(mom.sigma_star) / b))


def test_point_estimate_example():
    spm = validate_spm(EXAMPLE1)
    est = sim_pmf_at(spm, [4, 0, 0], 10**7, seed=6)
    assert abs(est.value - 0.016) < 3 * math.sqrt(0.016 * 0.984 / 10**7)
    assert est.bound == pytest.approx(1.26e-4, abs=1e-6)


def test_small_b_grid_and_bound():
    est = sim_pmf_at(validate_spm(EXAMPLE1), [2, 1, 1], 10, seed=7)
    assert est.value * 10 == est.hits
    assert est.bound == pytest.approx(math.sqrt(1 / (20 * math.pi)))
    assert est.bound == pytest.approx(0.126, abs=1e-3)


def test_error_bounds():
    single, total = sim_error_bounds(10**5, 66)
    assert total == pytest.approx(math.sqrt(130 / (math.pi * 1e5)))
    assert total == pytest.approx(0.0203, abs=1e-4)
    assert sim_error_bounds(10, 1)[1] == 0.0
    with pytest.raises(ValueError):
        sim_error_bounds(0, 3)


def test_reproducible_across_threads():
    spm = validate_spm(random_rows(np.random.default_rng(1), 12, 3))
    b = 3 * BLOCK_DRAWS + 17
    one = sample(spm, b, seed=9, threads=1).draws
    for t in (2, 4):
        np.testing.assert_array_equal(sample(spm, b, seed=9, threads=t).draws, one)
    assert count_matches(spm, one[0], b, seed=9, threads=3) == int(np.all(one == one[0], axis=1).sum())


def test_prefix_stability():
    # the first draws do not depend on how many are requested
    spm = validate_spm(EXAMPLE1)
    short = sample(spm, 100, seed=10).draws
    long = sample(spm, BLOCK_DRAWS + 5, seed=10).draws
    np.testing.assert_array_equal(long[:100], short)
    assert not np.array_equal(sample(spm, 100, seed=11).draws, short)


def test_unbiased_over_seeds():
    spm = validate_spm(EXAMPLE1)
    exact = pmf_at(spm, [2, 1, 1])
    b = 10**4
    ests = [sim_pmf_at(spm, [2, 1, 1], b, seed=s).value for s in range(50)]
    assert abs(np.mean(ests) - exact) < 3 * sim_error_bounds(b, 1)[0] / math.sqrt(50)


def test_outputs(tmp_path):
    batch = sample(validate_spm(EXAMPLE1), 5, seed=7)
    batch.to_csv(tmp_path / "draws.csv")
    lines = (tmp_path / "draws.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,x3"
    assert len(lines) == 6
    batch.write_metadata(tmp_path / "meta.json")
    assert json.loads((tmp_path / "meta.json").read_text()) == {"seed": 7, "b": 5, "n": 4, "m": 3}
    freq = empirical_pmf(batch)
    assert sum(freq.values()) == pytest.approx(1.0)


def test_b_must_be_positive():
    with pytest.raises(ValueError):
        sample(validate_spm(EXAMPLE1), 0, seed=1)
