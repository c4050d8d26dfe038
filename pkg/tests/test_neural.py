import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vpnflow.errors import BadMagicError, ConfigError, NumericalError, ShortFileError, TrailingDataError
from vpnflow.neural import (
    LossKind,
    LstmParameters,
    MlpParameters,
    backward,
    lstm_forward,
    margin_distance_loss,
    mlp_forward,
    mse_loss,
    predict,
    target_vector,
)
from vpnflow.neural.activations import gaussian
from vpnflow.neural.losses import margin_batch, mse_batch
from vpnflow.neural.modelio import decode_model, encode_model, read_model, write_model
from vpnflow.neural.optim import Adam
from vpnflow.neural.train import TrainConfig, split_indices, train

from gradcheck import max_relative_error, random_lstm, random_mlp


# --- MLP forward ------------------------------------------------------------

def test_zero_mlp_gives_unit_scores():
    trace = mlp_forward(np.random.default_rng(0).random(784), MlpParameters.zeros())
    assert np.array_equal(trace.z, np.zeros(5))
    assert np.array_equal(trace.y, np.ones(5))


def test_gaussian_of_unit_z():
    y = gaussian(np.array([1.0, 0, 0, 0, 0]))
    assert y == pytest.approx([math.exp(-0.5), 1, 1, 1, 1], abs=1e-15)
    assert y[0] == pytest.approx(0.60653, abs=1e-5)


def _straight_line_mlp(x, W, U, V):
    # scalar loops, no numpy
    q = [sum(x[i] * W[i][j] for i in range(len(x))) for j in range(len(W[0]))]
    s = [max(0.0, v) for v in q]
    p = [sum(s[i] * U[i][j] for i in range(len(s))) for j in range(len(U[0]))]
    r = [max(0.0, v) for v in p]
    z = [sum(r[i] * V[i][j] for i in range(len(r))) for j in range(len(V[0]))]
    return [math.exp(-v * v / 2) for v in z]


def test_mlp_matches_straight_line_evaluator():
    rng = np.random.default_rng(11)
    for _ in range(10):
        params = MlpParameters(rng.normal(size=(4, 3)), rng.normal(size=(3, 2)), rng.normal(size=(2, 2)))
        x = rng.random(4)
        got = mlp_forward(x, params).y
        want = _straight_line_mlp(x.tolist(), params.W.tolist(), params.U.tolist(), params.V.tolist())
        assert np.allclose(got, want, rtol=0, atol=1e-12)


def test_mlp_trace_invariants():
    rng = np.random.default_rng(2)
    t = mlp_forward(rng.random(784), MlpParameters.initialize(rng))
    assert t.q.shape == (1000,) and t.p.shape == (100,) and t.y.shape == (5,)
    assert np.array_equal(t.s, np.maximum(t.q, 0)) and np.array_equal(t.r, np.maximum(t.p, 0))
    assert ((t.y > 0) & (t.y <= 1)).all()


def test_mlp_non_finite_names_layer():
    params = MlpParameters.zeros((3, 2, 2, 5))
    params.U[0, 0] = np.inf
    params.W[:] = 1.0
    with pytest.raises(NumericalError, match="'p'"):
        mlp_forward(np.ones(3), params)


def test_mlp_dimension_mismatch():
    with pytest.raises(ConfigError):
        mlp_forward(np.ones(10), MlpParameters.zeros((4, 3, 2, 5)))


@settings(max_examples=50)
@given(st.floats(-1e3, 1e3, allow_nan=False))
def test_gaussian_in_unit_interval(z):
    y = float(gaussian(np.array(z)))
    assert 0 <= y <= 1
    assert y <= float(gaussian(np.array(0.0))) == 1.0


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, 784, elements=st.floats(0, 1)), st.integers(0, 2**32 - 1))
def test_forward_outputs_finite(x, seed):
    rng = np.random.default_rng(seed)
    assert np.isfinite(mlp_forward(x, MlpParameters.initialize(rng)).y).all()
    _, y = lstm_forward(x, LstmParameters.initialize(rng, hidden=8))
    assert np.isfinite(y).all()


# --- LSTM forward -----------------------------------------------------------

def test_zero_lstm_fixed_point():
    state, y = lstm_forward(np.random.default_rng(0).random(784), LstmParameters.zeros(hidden=20))
    assert not state.c.any() and not state.h.any()
    assert np.array_equal(y, np.ones(5))


def test_scalar_lstm_hand_computed():
    p = LstmParameters.zeros(hidden=1, step_width=1, head_hidden=1)
    for g in "fioc":
        p.W[g][:] = 1.0
    state, _ = lstm_forward(np.array([1.0]), p)
    sig = 1 / (1 + math.exp(-1))
    c1 = sig * math.tanh(1)
    h1 = sig * math.tanh(c1)
    assert state.c[0] == pytest.approx(c1, abs=1e-15)
    assert state.h[0] == pytest.approx(h1, abs=1e-15)
    assert (sig, c1, h1) == pytest.approx((0.73106, 0.55677, 0.36961), abs=1e-5)


def test_default_lstm_shapes():
    p = LstmParameters.initialize(np.random.default_rng(0))
    state, y = lstm_forward(np.random.default_rng(1).random(784), p)
    assert p.hidden_size == 300 and p.step_width == 28
    assert state.h.shape == (300,) and y.shape == (5,)


def test_lstm_step_width_must_divide():
    p = LstmParameters.zeros(hidden=2, step_width=5)
    with pytest.raises(ConfigError):
        lstm_forward(np.zeros(784), p)


def test_lstm_batch_matches_single():
    rng = np.random.default_rng(5)
    p = LstmParameters.initialize(rng, hidden=7, step_width=4)
    x = rng.random((3, 16))
    batch = predict(p, x)
    for i in range(3):
        assert np.allclose(lstm_forward(x[i], p)[1], batch[i], atol=1e-15)


# --- losses -----------------------------------------------------------------

def test_mse_identity_and_value():
    t = target_vector(2)
    assert mse_loss(t, t) == 0
    assert mse_loss(np.ones(5), target_vector(0)) == 4


def test_mse_random_pair():
    rng = np.random.default_rng(4)
    y, t = rng.random(5), rng.random(5)
    assert mse_loss(y, t) == pytest.approx(sum((a - b) ** 2 for a, b in zip(y, t)), abs=1e-12)


def test_vpn_target_is_zero():
    assert not target_vector(5).any()
    assert target_vector(3).tolist() == [0, 0, 0, 1, 0]


def test_margin_values():
    assert margin_distance_loss([0.2, 1.5, 0.3, 2.0, 1.2], 0, 1.0) == pytest.approx(0.9, abs=1e-12)
    assert margin_distance_loss([0, 1, 1.5, 2, 1], 0, 1.0) == 0
    assert margin_distance_loss([0.5] * 5, 5, 1.0) == pytest.approx(2.5, abs=1e-12)


def test_margin_rejects_bad_eta():
    with pytest.raises(ConfigError):
        margin_distance_loss([1] * 5, 0, 0.0)


@given(arrays(np.float64, 5, elements=st.floats(0, 3)), st.integers(0, 5), st.floats(0.01, 2))
def test_margin_nonnegative_and_zero_condition(d, label, eta):
    loss = margin_distance_loss(d, label, eta)
    assert loss >= 0
    others = [d[j] for j in range(5) if j != label]
    zero = all(v >= eta for v in others) and (label == 5 or d[label] == 0)
    if label == 5:
        zero = all(v >= eta for v in d)
    assert (loss == 0) == zero


def test_batch_losses_are_means():
    rng = np.random.default_rng(8)
    y = rng.random((6, 5))
    labels = np.array([0, 1, 5, 2, 5, 4])
    from vpnflow.decision import center_distances

    l_mse, _ = mse_batch(y, labels)
    assert l_mse == pytest.approx(np.mean([mse_loss(y[i], target_vector(labels[i])) for i in range(6)]))
    l_m, _ = margin_batch(y, labels, 1.2)
    assert l_m == pytest.approx(np.mean([margin_distance_loss(center_distances(y[i]), labels[i], 1.2)
                                         for i in range(6)]))


# --- backward ---------------------------------------------------------------

def test_zero_params_stationary_under_mse():
    x = np.random.default_rng(0).random((2, 784))
    _, grads = backward(x, MlpParameters.zeros(), np.array([1, 3]), LossKind.MSE)
    assert all(not g.any() for g in grads.values())


def test_margin_inactive_hinges_only_label_gradient():
    # all non-label distances exceed eta, so dL/dy is the unit vector toward the label center
    y = np.array([[0.9, 0.05, 0.05, 0.05, 0.05]])
    _, dy = margin_batch(y, np.array([0]), 1.0)
    c0 = np.eye(5)[0]
    assert np.allclose(dy[0], (y[0] - c0) / np.linalg.norm(y[0] - c0))


@pytest.mark.parametrize("kind", [LossKind.MSE, LossKind.MARGIN])
def test_mlp_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(21)
    params = random_mlp(rng)
    x = rng.random((4, 10))
    labels = np.array([0, 2, 5, 4])
    assert max_relative_error(params, x, labels, kind, eta=1.5) < 1e-6


@pytest.mark.parametrize("kind", [LossKind.MSE, LossKind.MARGIN])
def test_lstm_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(22)
    params = random_lstm(rng)
    x = rng.random((4, 12))
    labels = np.array([1, 5, 3, 0])
    assert max_relative_error(params, x, labels, kind, eta=1.5) < 1e-6


# --- Adam -------------------------------------------------------------------

def test_adam_first_step_by_hand():
    p = {"w": np.array([1.0, -2.0])}
    g = {"w": np.array([0.5, 0.25])}
    Adam(p, lr=0.1, weight_decay=0.05).step(g)
    # decoupled decay, then bias-corrected m/sqrt(v) = sign(g)
    decayed = np.array([1.0, -2.0]) * (1 - 0.1 * 0.05)
    expected = decayed - 0.1 * g["w"] / (np.abs(g["w"]) + 1e-8)
    assert np.allclose(p["w"], expected, atol=1e-12)


# --- training ---------------------------------------------------------------

def _toy_data(n=240, seed=0):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n)
    x = rng.random((n, 784)) * 0.2
    x[labels == 1, :100] += 0.7
    return x, labels


def test_train_is_deterministic():
    x, labels = _toy_data(120)
    cfg = TrainConfig(epochs=2, seed=3, batch_size=32)
    a = train(x, labels, "mlp", cfg)
    b = train(x, labels, "mlp", cfg)
    assert encode_model(a.params) == encode_model(b.params)
    assert a.curve == b.curve


def test_train_loss_decreases_on_separable_classes():
    x, labels = _toy_data()
    result = train(x, labels, "mlp", TrainConfig(epochs=5, seed=1, learning_rate=1e-3))
    assert result.curve[-1].train_loss < result.curve[0].train_loss


def test_train_lstm_runs_and_decreases():
    x, labels = _toy_data(160)
    cfg = TrainConfig(epochs=4, seed=2, learning_rate=3e-3, lstm_hidden=8, loss_kind=LossKind.MARGIN)
    result = train(x, labels, "lstm", cfg)
    assert result.params.hidden_size == 8
    assert result.curve[-1].train_loss < result.curve[0].train_loss


def test_class_filter_excludes_vpn():
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 6, 300)
    x = rng.random((300, 784))
    result = train(x, labels, "mlp", TrainConfig(epochs=0), class_filter=range(5))
    assert 5 not in set(labels[result.train_indices]) and 5 not in set(labels[result.test_indices])
    full_train, full_test = split_indices(300, 0.2, 0)
    assert set(result.test_indices) <= set(full_test)


def test_train_empty_after_filter():
    with pytest.raises(ConfigError):
        train(np.zeros((10, 784)), np.full(10, 5), "mlp", TrainConfig(epochs=1), class_filter=range(5))


def test_train_config_validation():
    for bad in ({"test_fraction": 0}, {"test_fraction": 1}, {"batch_size": 0}, {"margin_eta": 0}):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


def test_nan_loss_aborts_with_position():
    x, labels = _toy_data(64)
    init = MlpParameters.initialize(np.random.default_rng(0))
    init.V[0, 0] = np.nan
    with pytest.raises(NumericalError, match="epoch 1, batch 0"):
        train(x, labels, "mlp", TrainConfig(epochs=1), init=init)


def test_split_fraction():
    tr, te = split_indices(1000, 0.2, 9)
    assert len(te) == 200 and len(tr) == 800 and not set(tr) & set(te)


# --- model files ------------------------------------------------------------

def test_mlp_model_round_trip():
    params = MlpParameters.initialize(np.random.default_rng(0), (10, 16, 8, 5))
    blob = encode_model(params)
    again = decode_model(blob)
    assert encode_model(again) == blob
    for k, v in params.arrays().items():
        assert np.array_equal(v, again.arrays()[k])


def test_mlp_model_layout():
    params = MlpParameters.zeros((2, 3, 4, 5))
    blob = encode_model(params)
    assert blob[:6] == b"NNMD1\x00" and blob[6:10] == (3).to_bytes(4, "little")
    assert blob[10:12] == (1).to_bytes(2, "little") and blob[12:13] == b"W"
    assert blob[13:21] == (2).to_bytes(4, "little") + (3).to_bytes(4, "little")
    assert len(blob) == 10 + 3 * (2 + 1 + 8) + 8 * (6 + 12 + 20)


def test_lstm_model_round_trip(tmp_path):
    params = LstmParameters.initialize(np.random.default_rng(1), hidden=6, step_width=4)
    write_model(params, tmp_path / "m.nnmd")
    again = read_model(tmp_path / "m.nnmd")
    assert isinstance(again, LstmParameters) and again.step_width == 4
    assert encode_model(again) == (tmp_path / "m.nnmd").read_bytes()
    assert (tmp_path / "m.nnmd").read_bytes()[-4:] == (4).to_bytes(4, "little")


def test_model_file_errors():
    blob = encode_model(MlpParameters.zeros((2, 2, 2, 5)))
    with pytest.raises(BadMagicError):
        decode_model(b"XXXXX" + blob[5:])
    with pytest.raises(ShortFileError):
        decode_model(blob[:-3])
    with pytest.raises(TrailingDataError):
        decode_model(blob + b"\x00")
