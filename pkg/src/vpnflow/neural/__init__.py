"""From-scratch MLP/LSTM forward and reverse passes, losses and Adam training."""
from __future__ import annotations

import numpy as np

from vpnflow.errors import NumericalError
from vpnflow.neural.losses import (
    LossKind,
    batch_loss,
    margin_distance_loss,
    mse_loss,
    target_vector,
)
from vpnflow.neural.lstm import LstmParameters, LstmState, lstm_backward, lstm_forward
from vpnflow.neural.lstm import _run as _lstm_run
from vpnflow.neural.mlp import MlpParameters, MlpTrace, mlp_backward, mlp_forward

_PREDICT_CHUNK = 2048


def predict(params, x: np.ndarray) -> np.ndarray:
    """Score vectors (B, 5) for a batch of normalized inputs."""
    x = np.asarray(x, dtype=np.float64)
    outs = []
    for start in range(0, len(x), _PREDICT_CHUNK):
        chunk = x[start:start + _PREDICT_CHUNK]
        if isinstance(params, MlpParameters):
            outs.append(mlp_forward(chunk, params).y)
        else:
            outs.append(_lstm_run(chunk, params).y)
    if not outs:
        return np.zeros((0, 5))
    return np.concatenate(outs)


def backward(x: np.ndarray, params, labels: np.ndarray, loss_kind: LossKind, eta: float = 1.0):
    """Mean batch loss and its gradient for every parameter array.

    ``labels`` are integers 0..5; the MSE target is derived from them
    (all-zero for VPN).
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    if isinstance(params, MlpParameters):
        trace = mlp_forward(x, params)
        loss, dy = batch_loss(trace.y, labels, loss_kind, eta)
        grads = mlp_backward(x, trace, params, dy)
    else:
        cache = _lstm_run(x, params)
        loss, dy = batch_loss(cache.y, labels, loss_kind, eta)
        grads = lstm_backward(cache, params, dy)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name!r}")
    return loss, grads


__all__ = [
    "LossKind", "LstmParameters", "LstmState", "MlpParameters", "MlpTrace",
    "backward", "lstm_forward", "margin_distance_loss", "mlp_forward",
    "mse_loss", "predict", "target_vector",
]
