import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import EXAMPLE1
from pmdist import PoissonMultinomial


def test_exact_queries():
    pmd = PoissonMultinomial().fit(EXAMPLE1)
    assert pmd.n_trials_ == 4 and pmd.n_categories_ == 3
    assert pmd.pmf([4, 0, 0]) == pytest.approx(0.016, abs=1e-12)
    assert pmd.pmf().values.shape == (5, 5)
    assert pmd.cdf([4, 4]) == pytest.approx(1.0)
    np.testing.assert_allclose(pmd.mean_, [1.8, 1.0])
    assert pmd.mode().x.tolist() == [2, 1, 1]
    assert pmd.q_mode(0.5).p <= pmd.mode().p
    assert pmd.winner_probabilities().probs.shape == (3,)
    np.testing.assert_allclose(pmd.score_samples([[4, 0, 0]]), [np.log(0.016)])


def test_other_methods():
    na = PoissonMultinomial(method="na").fit(EXAMPLE1)
    assert 0 <= na.pmf([2, 1, 1]) <= 1
    assert 0 <= na.cdf([2, 2]) <= 1
    with pytest.raises(ValueError):
        na.pmf()
    sim = PoissonMultinomial(method="sim", b=10**5, seed=3).fit(EXAMPLE1)
    assert abs(sim.pmf([2, 1, 1]) - 0.2486) < 0.01
    assert sim.sample(4).shape == (4, 3)
    with pytest.raises(ValueError):
        sim.cdf([1, 1])


def test_estimator_protocol():
    pmd = PoissonMultinomial(seed=4)
    with pytest.raises(NotFittedError):
        pmd.pmf([1, 1, 2])
    assert clone(pmd).get_params()["seed"] == 4
    with pytest.raises(ValueError):
        PoissonMultinomial(method="bogus").fit(EXAMPLE1)
