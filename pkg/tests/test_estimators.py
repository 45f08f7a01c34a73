from __future__ import annotations

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from coopobs.estimators import DistributedLeaderObserver, GainSynthesizer

from conftest import BENCHMARK_D, BENCHMARK_H


def test_gain_synthesizer_from_graph_and_matrix(graph):
    a = GainSynthesizer(d=BENCHMARK_D).fit(graph)
    b = GainSynthesizer(d=BENCHMARK_D).fit(BENCHMARK_H)
    np.testing.assert_allclose(a.w_, b.w_)
    np.testing.assert_array_equal(a.d_, BENCHMARK_D)
    assert all(a.certificates_.values())
    assert a.constants_.lambda_q == pytest.approx(0.06127, rel=1e-3)


def test_gain_synthesizer_params_roundtrip():
    est = GainSynthesizer(seed=3)
    assert est.get_params() == {"d": None, "seed": 3, "tol": 1e-9}
    twin = clone(est).set_params(seed=4)
    assert twin.seed == 4 and est.seed == 3


def test_gain_synthesizer_rejects_non_square():
    with pytest.raises(ValueError):
        GainSynthesizer().fit(np.ones((2, 3)))


def test_observer_estimator(benchmark_cfg):
    est = DistributedLeaderObserver(horizon=0.5, d=BENCHMARK_D)
    with pytest.raises(NotFittedError):
        est.predict(0.1)
    est.fit(benchmark_cfg.graph, benchmark_cfg.leader)
    eta = est.predict([0.0, 0.25, 0.5])
    assert eta.shape == (3, 4, 6)
    np.testing.assert_array_equal(eta[0], 0.0)
    np.testing.assert_allclose(eta[-1], est.eta_hat_[-1])
    assert est.predict_frequencies(0.5).shape == (1, 4, 3)
    assert est.predict_output_matrix(0.5).shape == (1, 4, 2, 6)
    # estimates approach the leader state
    err0 = np.linalg.norm(eta[0] - benchmark_cfg.leader.state(0.0))
    err1 = np.linalg.norm(eta[-1] - benchmark_cfg.leader.state(0.5))
    assert err1 < 0.5 * err0


def test_observer_estimator_input_types(benchmark_cfg):
    with pytest.raises(TypeError):
        DistributedLeaderObserver().fit(BENCHMARK_H, benchmark_cfg.leader)
    with pytest.raises(TypeError):
        DistributedLeaderObserver().fit(benchmark_cfg.graph, None)
