"""Seeded mini-batch training loop.

Randomness comes from three independent streams derived from ``cfg.seed``:
the train/test split, weight initialization and per-epoch shuffling. The
split is drawn over the full dataset *before* the class filter is applied,
so two networks trained with the same seed share one held-out test set.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from vpnflow.errors import ConfigError, NumericalError
from vpnflow.neural import backward, predict
from vpnflow.neural.losses import LossKind, batch_loss
from vpnflow.neural.lstm import DEFAULT_STEP_WIDTH, LSTM_HIDDEN, LstmParameters
from vpnflow.neural.mlp import MLP_SIZES, MlpParameters
from vpnflow.neural.optim import Adam

log = logging.getLogger(__name__)

_SPLIT, _INIT, _SHUFFLE = 0, 1, 2


# Default gap between the margin of the distance loss and the decision eta.
# With the two tied, the hinge stops pushing exactly at the rejection boundary
# and VPN samples settle just inside it.
MARGIN_SLACK = 0.25


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 20
    learning_rate: float = 1e-4
    weight_decay: float = 0.05
    test_fraction: float = 0.2
    seed: int = 0
    loss_kind: LossKind = LossKind.MSE
    margin_eta: float = 1.0
    lstm_hidden: int = LSTM_HIDDEN
    step_width: int = DEFAULT_STEP_WIDTH

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ConfigError(f"test_fraction must be in (0, 1), got {self.test_fraction}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not self.margin_eta > 0:
            raise ConfigError(f"margin_eta must be positive, got {self.margin_eta}")


@dataclass(frozen=True)
class EpochLoss:
    epoch: int
    train_loss: float
    test_loss: float


@dataclass
class TrainResult:
    params: object
    curve: list[EpochLoss]
    train_indices: np.ndarray = field(repr=False)
    test_indices: np.ndarray = field(repr=False)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream])


def split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded random split; returns sorted (train, test) index arrays."""
    perm = _rng(seed, _SPLIT).permutation(n)
    n_test = int(round(n * test_fraction))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def init_params(arch: str, cfg: TrainConfig, input_width: int):
    rng = _rng(cfg.seed, _INIT)
    if arch == "mlp":
        return MlpParameters.initialize(rng, (input_width,) + MLP_SIZES[1:])
    if arch == "lstm":
        if input_width % cfg.step_width:
            raise ConfigError(f"input width {input_width} not divisible by step_width {cfg.step_width}")
        return LstmParameters.initialize(rng, hidden=cfg.lstm_hidden, step_width=cfg.step_width)
    raise ConfigError(f"unknown architecture {arch!r}")


def evaluate_loss(params, x, labels, cfg: TrainConfig) -> float:
    if len(x) == 0:
        return float("nan")
    loss, _ = batch_loss(predict(params, x), labels, cfg.loss_kind, cfg.margin_eta)
    return loss


def train(x: np.ndarray, labels: np.ndarray, arch: str, cfg: TrainConfig,
          class_filter=None, init=None) -> TrainResult:
    """Train one network on normalized inputs ``x`` (N, 784) with integer labels.

    ``class_filter`` restricts both splits to the given labels (e.g. 0..4 for
    the second network). Deterministic for fixed inputs and config.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    train_idx, test_idx = split_indices(len(x), cfg.test_fraction, cfg.seed)
    if class_filter is not None:
        allowed = np.array(sorted(set(int(c) for c in class_filter)))
        train_idx = train_idx[np.isin(labels[train_idx], allowed)]
        test_idx = test_idx[np.isin(labels[test_idx], allowed)]
    if len(train_idx) == 0:
        raise ConfigError("training set is empty after filtering")

    params = init.copy() if init is not None else init_params(arch, cfg, x.shape[1])
    arrays = params.arrays()
    opt = Adam(arrays, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    shuffle = _rng(cfg.seed, _SHUFFLE)
    x_test, y_test = x[test_idx], labels[test_idx]

    curve = []
    for epoch in range(1, cfg.epochs + 1):
        order = train_idx[shuffle.permutation(len(train_idx))]
        total = 0.0
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            try:
                loss, grads = backward(x[idx], params, labels[idx], cfg.loss_kind, cfg.margin_eta)
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}, batch {b}: {exc}") from exc
            if not np.isfinite(loss):
                raise NumericalError(f"epoch {epoch}, batch {b}: loss is {loss}")
            opt.step(grads)
            total += loss * len(idx)
        row = EpochLoss(epoch, total / len(order), evaluate_loss(params, x_test, y_test, cfg))
        log.info("epoch %d train_loss %.6f test_loss %.6f", row.epoch, row.train_loss, row.test_loss)
        curve.append(row)
    return TrainResult(params, curve, train_idx, test_idx)


def train_on_samples(samples, arch: str, cfg: TrainConfig, class_filter=None) -> TrainResult:
    from vpnflow.ingest import samples_to_arrays

    raw, labels = samples_to_arrays(samples)
    return train(raw / 255.0, labels, arch, cfg, class_filter)


def write_loss_curve(curve: list[EpochLoss], destination) -> None:
    lines = ["epoch,train_loss,test_loss"]
    for row in curve:
        test = "" if np.isnan(row.test_loss) else repr(row.test_loss)
        lines.append(f"{row.epoch},{row.train_loss!r},{test}")
    with open(destination, "w") as fh:
        fh.write("\n".join(lines) + "\n")
