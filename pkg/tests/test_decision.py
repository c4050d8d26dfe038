import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from vpnflow.decision import (
    REJECT,
    Decision,
    Method,
    Pipeline,
    Provenance,
    Thresholds,
    center_distances,
    class_centers,
    classify_flow,
    distance_cascade,
    distance_cascade_batch,
    distance_decide,
    score_cascade,
    score_cascade_batch,
    score_decide,
)
from vpnflow.errors import ConfigError
from vpnflow.neural import MlpParameters, predict

import oracles

scores = st.lists(st.floats(0.001, 1.0), min_size=5, max_size=5)


def test_score_decide_examples():
    assert score_decide([0.9, 0.2, 0.3, 0.1, 0.05], 0.5) == Decision(0, Provenance.NET1)
    assert score_decide([0.4] * 5, 0.5) == REJECT
    assert score_decide([0.8, 0.8, 0.1, 0.1, 0.1], 0.5).outcome == 0


def test_score_decide_boundary_rejects():
    assert score_decide([0.5, 0.1, 0.1, 0.1, 0.1], 0.5) == REJECT


def test_score_cascade_examples():
    t = Thresholds(lam=0.5, mu=0.9)
    assert score_cascade([0.1, 0.95, 0.2, 0.3, 0.1], np.zeros(5), t) == Decision(1, Provenance.NET1)
    assert score_cascade([0.7, 0.1, 0.1, 0.1, 0.1], [0.1, 0.9, 0.2, 0.3, 0.4], t) == Decision(1, Provenance.NET2)
    assert score_cascade([0.3] * 5, [1, 0, 0, 0, 0], t) == REJECT


def test_score_cascade_partition_at_boundaries():
    t = Thresholds(lam=0.5, mu=0.9)
    y2 = [0, 0, 1, 0, 0]
    assert score_cascade([0.9, 0, 0, 0, 0], y2, t) == Decision(2, Provenance.NET2)
    assert score_cascade([0.5, 0, 0, 0, 0], y2, t) == REJECT


def test_score_cascade_invariant():
    with pytest.raises(ConfigError):
        score_cascade([1] * 5, [1] * 5, Thresholds(lam=0.9, mu=0.9))


def test_second_network_is_lazy():
    calls = []

    def y2():
        calls.append(1)
        return [0, 1, 0, 0, 0]

    t = Thresholds()
    score_cascade([0.99, 0, 0, 0, 0], y2, t)
    score_cascade([0.1] * 5, y2, t)
    assert not calls
    score_cascade([0.7, 0, 0, 0, 0], y2, t)
    assert calls == [1]


def test_center_distance_examples():
    assert np.allclose(center_distances(np.eye(5)[2]), [math.sqrt(2)] * 2 + [0] + [math.sqrt(2)] * 2)
    assert np.allclose(center_distances(np.zeros(5)), np.ones(5))
    d = center_distances([0.5, 0.5, 0, 0, 0])
    assert d[:2] == pytest.approx([math.sqrt(0.5)] * 2, abs=1e-12)
    assert d[2:] == pytest.approx([math.sqrt(1.5)] * 3, abs=1e-12)
    assert d[0] == pytest.approx(0.70711, abs=1e-5) and d[2] == pytest.approx(1.22474, abs=1e-5)


def test_centers_are_one_hot():
    assert np.array_equal(class_centers(), np.eye(5))


@given(scores)
def test_distances_nonnegative_and_bounded(y):
    d = center_distances(y)
    assert (d >= 0).all() and (d <= math.sqrt(26)).all()


def test_distance_decide_examples():
    assert distance_decide(center_distances(np.eye(5)[1]), 0.5) == Decision(1, Provenance.NET1)
    assert distance_decide(np.ones(5), 0.5) == REJECT
    assert distance_decide([0.3, 0.3, 1, 1, 1], 0.5).outcome == 0
    with pytest.raises(ConfigError):
        distance_decide(np.ones(5), 0)


def test_distance_cascade_examples():
    t = Thresholds(eta=1.0, delta=0.1)
    assert distance_cascade([0.05, 1, 1, 1, 1], np.zeros(5), t) == Decision(0, Provenance.NET1)
    assert distance_cascade([0.5, 1, 1, 1, 1], [1, 1, 1, 0.2, 1], t) == Decision(3, Provenance.NET2)
    assert distance_cascade([1.2] * 5, np.zeros(5), t) == REJECT
    with pytest.raises(ConfigError):
        distance_cascade([1] * 5, [1] * 5, Thresholds(eta=0.1, delta=0.1))


def test_decision_invariant():
    with pytest.raises(ValueError):
        Decision(5, Provenance.NET1)
    with pytest.raises(ValueError):
        Decision(2, Provenance.REJECTED)


@given(scores, scores, st.floats(0.0, 0.95), st.floats(0.0, 1.0))
def test_score_cascade_matches_oracle(y1, y2, lam, gap):
    mu = lam + gap * (1 - lam)
    assume(mu > lam)
    t = Thresholds(lam=lam, mu=mu)
    assert oracles.as_pair(score_cascade(y1, y2, t)) == oracles.score_cascade_rule(y1, y2, lam, mu)


@given(scores, scores, st.floats(0.01, 2.0), st.floats(0.01, 0.99))
def test_distance_cascade_matches_oracle(y1, y2, eta, frac):
    delta = eta * frac
    t = Thresholds(eta=eta, delta=delta)
    d1, d2 = center_distances(y1), center_distances(y2)
    want = oracles.distance_cascade_rule(d1.tolist(), d2.tolist(), delta, eta)
    assert oracles.as_pair(distance_cascade(d1, d2, t)) == want


@given(scores)
def test_center_distances_match_oracle(y):
    # near-ties may round differently between the two summation orders,
    # so the distance values are compared with a tolerance, the rules above exactly
    assert center_distances(y) == pytest.approx(oracles.distances(y), abs=1e-12)


GRID = [0.0, 0.25, 0.5, 0.75, 1.0]
THRESH = [round(0.1 * k, 1) for k in range(1, 10)]


def test_exhaustive_small_grid():
    ys = np.array(list(itertools.product(GRID, repeat=5)))
    rng = np.random.default_rng(0)
    y2s = ys[rng.permutation(len(ys))]
    for lam, mu in itertools.combinations(THRESH, 2):
        out, prov = score_cascade_batch(ys, y2s, Thresholds(lam=lam, mu=mu))
        for k in range(0, len(ys), 7):
            want = oracles.score_cascade_rule(ys[k].tolist(), y2s[k].tolist(), lam, mu)
            got = ("VPN" if out[k] == 5 else out[k], ["net1", "net2", "rejected"][prov[k]])
            assert got == want
    d1 = center_distances(ys)
    d2 = center_distances(y2s)
    for delta, eta in itertools.combinations(THRESH, 2):
        out, prov = distance_cascade_batch(d1, d2, Thresholds(eta=eta, delta=delta))
        for k in range(0, len(ys), 7):
            want = oracles.distance_cascade_rule(d1[k].tolist(), d2[k].tolist(), delta, eta)
            got = ("VPN" if out[k] == 5 else out[k], ["net1", "net2", "rejected"][prov[k]])
            assert got == want


def test_batch_matches_scalar():
    rng = np.random.default_rng(1)
    y1, y2 = rng.random((500, 5)), rng.random((500, 5))
    t = Thresholds(lam=0.4, mu=0.8, eta=0.9, delta=0.3)
    out, _ = score_cascade_batch(y1, y2, t)
    assert out.tolist() == [score_cascade(a, b, t).outcome for a, b in zip(y1, y2)]
    d1, d2 = center_distances(y1), center_distances(y2)
    out, _ = distance_cascade_batch(d1, d2, t)
    assert out.tolist() == [distance_cascade(a, b, t).outcome for a, b in zip(d1, d2)]


@given(scores, scores, st.floats(0, 0.89), st.floats(0, 0.89))
def test_score_monotone_in_lambda(y1, y2, lam_a, lam_b):
    lo, hi = sorted((lam_a, lam_b))
    if score_cascade(y1, y2, Thresholds(lam=lo, mu=0.9)).is_vpn:
        assert score_cascade(y1, y2, Thresholds(lam=hi, mu=0.9)).is_vpn


@given(scores, scores, st.floats(0.11, 5), st.floats(0.11, 5))
def test_distance_monotone_in_eta(y1, y2, eta_a, eta_b):
    lo, hi = sorted((eta_a, eta_b))
    d1, d2 = center_distances(y1), center_distances(y2)
    if distance_cascade(d1, d2, Thresholds(eta=hi, delta=0.1)).is_vpn:
        assert distance_cascade(d1, d2, Thresholds(eta=lo, delta=0.1)).is_vpn


@given(scores, scores)
def test_closed_set_degeneration(y1, y2):
    assert not score_cascade(y1, y2, Thresholds(lam=0.0, mu=1e-12)).is_vpn
    d1, d2 = center_distances(y1), center_distances(y2)
    assert not distance_cascade(d1, d2, Thresholds(eta=1e9, delta=0.1)).is_vpn


@given(scores, st.floats(0.01, 100), st.floats(0, 0.9))
def test_positive_scaling_keeps_argmax(y, k, lam):
    y = np.array(y)
    a, b = score_decide(y, lam), score_decide(y * k, lam)
    if not a.is_vpn and not b.is_vpn:
        assert a.outcome == b.outcome


@given(scores, scores, st.floats(0, 0.8))
def test_net1_decision_matches_single_rule(y1, y2, lam):
    d = score_cascade(y1, y2, Thresholds(lam=lam, mu=0.9))
    if d.provenance is Provenance.NET1:
        assert d.outcome == score_decide(y1, lam).outcome


# --- full pipeline ----------------------------------------------------------

def _zero_pipeline(method, **t):
    net = MlpParameters.zeros()
    return Pipeline(method, net, net, Thresholds(**t))


def test_zero_nets_score_pipeline():
    x = np.random.default_rng(0).random(784)
    assert classify_flow(x, _zero_pipeline(Method.SCORE, lam=0.5, mu=0.9)) == Decision(0, Provenance.NET1)


def test_zero_nets_distance_pipeline():
    x = np.random.default_rng(0).random(784)
    assert classify_flow(x, _zero_pipeline(Method.DISTANCE, eta=1.0, delta=0.1)) == REJECT


def test_pipeline_validates_thresholds():
    with pytest.raises(ConfigError):
        _zero_pipeline(Method.SCORE, lam=0.95, mu=0.9)


def _oracle_chain(x, pipeline):
    y1 = predict(pipeline.net1, x[None])[0].tolist()
    y2 = predict(pipeline.net2, x[None])[0].tolist()
    t = pipeline.thresholds
    if pipeline.method is Method.SCORE:
        return oracles.score_cascade_rule(y1, y2, t.lam, t.mu)
    return oracles.distance_cascade_rule(oracles.distances(y1), oracles.distances(y2), t.delta, t.eta)


@pytest.mark.parametrize("method", list(Method))
def test_random_pipelines_match_oracle_chain(method):
    rng = np.random.default_rng(7)
    sizes = (784, 32, 16, 5)
    net1 = MlpParameters(*(rng.normal(0, s, shape) for s, shape in
                           ((0.08, (784, 32)), (0.3, (32, 16)), (0.5, (16, 5)))))
    net2 = MlpParameters.initialize(rng, sizes)
    t = Thresholds(lam=0.3, mu=0.8, eta=1.0, delta=0.6)
    pipeline = Pipeline(method, net1, net2, t)
    xs = rng.random((1000, 784))
    batch, _ = pipeline.classify_batch(xs)
    provs = set()
    for i, x in enumerate(xs):
        want = _oracle_chain(x, pipeline)
        got = oracles.as_pair(classify_flow(x, pipeline))
        assert got == want
        assert (5 if want[0] == "VPN" else want[0]) == batch[i]
        provs.add(got[1])
    assert provs == {"net1", "net2", "rejected"}
