"""LSTM over byte chunks followed by the Linear+ReLU / Linear+Gaussian head.

The 784-byte input is read as ``784 // step_width`` time steps of
``step_width`` bytes each. Gates use the logistic sigmoid; the candidate
and output squashing use tanh. State starts at c = h = 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vpnflow.errors import ConfigError
from vpnflow.neural.activations import check_finite, gaussian, glorot, relu, sigmoid

GATES = ("f", "i", "o", "c")
LSTM_HIDDEN = 300
HEAD_HIDDEN = 100
N_CLASSES = 5
DEFAULT_STEP_WIDTH = 28


@dataclass
class LstmParameters:
    """Gate weights W_g (hidden, step_width), U_g (hidden, hidden), b_g (hidden,),
    plus head_U (hidden, 100) and head_V (100, 5)."""

    W: dict[str, np.ndarray]
    U: dict[str, np.ndarray]
    b: dict[str, np.ndarray]
    head_U: np.ndarray
    head_V: np.ndarray
    step_width: int = DEFAULT_STEP_WIDTH

    arch = "lstm"

    def __post_init__(self):
        h = self.hidden_size
        for g in GATES:
            if self.W[g].shape != (h, self.step_width):
                raise ConfigError(f"W_{g} has shape {self.W[g].shape}, expected {(h, self.step_width)}")
            if self.U[g].shape != (h, h) or self.b[g].shape != (h,):
                raise ConfigError(f"U_{g}/b_{g} do not match hidden size {h}")
        if self.head_U.shape[0] != h or self.head_U.shape[1] != self.head_V.shape[0]:
            raise ConfigError("LSTM head shapes do not chain")

    @property
    def hidden_size(self) -> int:
        return self.W["f"].shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for g in GATES:
            out[f"W_{g}"] = self.W[g]
        for g in GATES:
            out[f"U_{g}"] = self.U[g]
        for g in GATES:
            out[f"b_{g}"] = self.b[g]
        out["head_U"] = self.head_U
        out["head_V"] = self.head_V
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], step_width: int) -> "LstmParameters":
        return cls(
            W={g: arrays[f"W_{g}"] for g in GATES},
            U={g: arrays[f"U_{g}"] for g in GATES},
            b={g: np.asarray(arrays[f"b_{g}"]).reshape(-1) for g in GATES},
            head_U=arrays["head_U"],
            head_V=arrays["head_V"],
            step_width=step_width,
        )

    @classmethod
    def zeros(cls, hidden=LSTM_HIDDEN, step_width=DEFAULT_STEP_WIDTH,
              head_hidden=HEAD_HIDDEN, n_classes=N_CLASSES) -> "LstmParameters":
        return cls(
            W={g: np.zeros((hidden, step_width)) for g in GATES},
            U={g: np.zeros((hidden, hidden)) for g in GATES},
            b={g: np.zeros(hidden) for g in GATES},
            head_U=np.zeros((hidden, head_hidden)),
            head_V=np.zeros((head_hidden, n_classes)),
            step_width=step_width,
        )

    @classmethod
    def initialize(cls, rng: np.random.Generator, hidden=LSTM_HIDDEN, step_width=DEFAULT_STEP_WIDTH,
                   head_hidden=HEAD_HIDDEN, n_classes=N_CLASSES) -> "LstmParameters":
        W = {g: glorot(rng, step_width, hidden, shape=(hidden, step_width)) for g in GATES}
        U = {g: glorot(rng, hidden, hidden) for g in GATES}
        return cls(
            W=W, U=U, b={g: np.zeros(hidden) for g in GATES},
            head_U=glorot(rng, hidden, head_hidden),
            head_V=glorot(rng, head_hidden, n_classes),
            step_width=step_width,
        )

    def copy(self) -> "LstmParameters":
        return LstmParameters.from_arrays(
            {k: v.copy() for k, v in self.arrays().items()}, self.step_width
        )


@dataclass
class LstmState:
    c: np.ndarray
    h: np.ndarray


@dataclass
class _Cache:
    xs: np.ndarray  # (T, B, w)
    gates: list     # per step (f, i, o, g) after nonlinearity
    cs: list        # c_0 .. c_T
    hs: list        # h_0 .. h_T
    p: np.ndarray
    r: np.ndarray
    z: np.ndarray
    y: np.ndarray


def _steps(x: np.ndarray, params: LstmParameters) -> np.ndarray:
    w = params.step_width
    n = x.shape[-1]
    if w <= 0 or n % w:
        raise ConfigError(f"input width {n} is not divisible by step_width {w}")
    return x.reshape(x.shape[0], n // w, w).transpose(1, 0, 2)


def _run(x: np.ndarray, params: LstmParameters) -> _Cache:
    xs = _steps(x, params)
    H = params.hidden_size
    # gate order f, i, o, c stacked along the output axis
    Wx = np.concatenate([params.W[g] for g in GATES], axis=0).T   # (w, 4H)
    Uh = np.concatenate([params.U[g] for g in GATES], axis=0).T   # (H, 4H)
    bias = np.concatenate([params.b[g] for g in GATES])
    B = x.shape[0]
    c = np.zeros((B, H))
    h = np.zeros((B, H))
    cs, hs, gates = [c], [h], []
    pre_x = xs @ Wx + bias  # (T, B, 4H)
    for t in range(xs.shape[0]):
        a = pre_x[t] + h @ Uh
        sig = sigmoid(a[:, :3 * H])
        f, i, o = sig[:, :H], sig[:, H:2 * H], sig[:, 2 * H:]
        g = np.tanh(a[:, 3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates.append((f, i, o, g))
        cs.append(c)
        hs.append(h)
    check_finite("lstm_h", h)
    p = check_finite("head_p", h @ params.head_U)
    r = relu(p)
    z = check_finite("head_z", r @ params.head_V)
    return _Cache(xs, gates, cs, hs, p, r, z, gaussian(z))


def lstm_forward(x: np.ndarray, params: LstmParameters) -> tuple[LstmState, np.ndarray]:
    """Final (c, h) state and the 5 Gaussian scores, for one input or a batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    cache = _run(x[None, :] if single else x, params)
    c, h, y = cache.cs[-1], cache.hs[-1], cache.y
    if single:
        c, h, y = c[0], h[0], y[0]
    return LstmState(c, h), y


def lstm_backward(cache: _Cache, params: LstmParameters, dy: np.ndarray) -> dict[str, np.ndarray]:
    H = params.hidden_size
    dz = dy * (-cache.z * cache.y)
    grads = {"head_V": cache.r.T @ dz}
    dp = (dz @ params.head_V.T) * (cache.p > 0)
    h_T = cache.hs[-1]
    grads["head_U"] = h_T.T @ dp
    dh = dp @ params.head_U.T
    dc = np.zeros_like(dh)

    Uh = np.concatenate([params.U[g] for g in GATES], axis=0)  # (4H, H)
    T = len(cache.gates)
    da_all = np.empty((T,) + (dh.shape[0], 4 * H))
    for t in reversed(range(T)):
        f, i, o, g = cache.gates[t]
        c, c_prev = cache.cs[t + 1], cache.cs[t]
        tc = np.tanh(c)
        dc = dc + dh * o * (1.0 - tc * tc)
        da = da_all[t]
        da[:, :H] = dc * c_prev * f * (1.0 - f)
        da[:, H:2 * H] = dc * g * i * (1.0 - i)
        da[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        da[:, 3 * H:] = dc * i * (1.0 - g * g)
        dc = dc * f
        dh = da @ Uh
    # weight gradients as single contractions over (time, batch)
    rows = da_all.shape[0] * da_all.shape[1]
    da_flat = da_all.reshape(rows, 4 * H).T
    dW_all = da_flat @ cache.xs.reshape(rows, -1)
    dU_all = da_flat @ np.stack(cache.hs[:-1]).reshape(rows, H)
    db_all = da_all.sum(axis=(0, 1))
    for n, gname in enumerate(GATES):
        sl = slice(n * H, (n + 1) * H)
        grads[f"W_{gname}"] = dW_all[sl]
        grads[f"U_{gname}"] = dU_all[sl]
        grads[f"b_{gname}"] = db_all[sl]
    return grads
