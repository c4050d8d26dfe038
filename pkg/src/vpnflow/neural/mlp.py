"""Three-layer perceptron: Linear+ReLU, Linear+ReLU, Linear+Gaussian (no biases)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vpnflow.errors import ConfigError
from vpnflow.neural.activations import check_finite, gaussian, glorot, relu

MLP_SIZES = (784, 1000, 100, 5)


@dataclass
class MlpParameters:
    """Row-major weights used as ``x @ W``: W (784, 1000), U (1000, 100), V (100, 5)."""

    W: np.ndarray
    U: np.ndarray
    V: np.ndarray

    ARRAY_NAMES = ("W", "U", "V")
    arch = "mlp"

    def __post_init__(self):
        if self.W.shape[1] != self.U.shape[0] or self.U.shape[1] != self.V.shape[0]:
            raise ConfigError(
                f"MLP shapes do not chain: W{self.W.shape} U{self.U.shape} V{self.V.shape}"
            )

    @property
    def sizes(self) -> tuple[int, int, int, int]:
        return (self.W.shape[0], self.W.shape[1], self.U.shape[1], self.V.shape[1])

    def arrays(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "U": self.U, "V": self.V}

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "MlpParameters":
        return cls(arrays["W"], arrays["U"], arrays["V"])

    @classmethod
    def zeros(cls, sizes=MLP_SIZES) -> "MlpParameters":
        n0, n1, n2, n3 = sizes
        return cls(np.zeros((n0, n1)), np.zeros((n1, n2)), np.zeros((n2, n3)))

    @classmethod
    def initialize(cls, rng: np.random.Generator, sizes=MLP_SIZES) -> "MlpParameters":
        n0, n1, n2, n3 = sizes
        return cls(glorot(rng, n0, n1), glorot(rng, n1, n2), glorot(rng, n2, n3))

    def copy(self) -> "MlpParameters":
        return MlpParameters(self.W.copy(), self.U.copy(), self.V.copy())


@dataclass
class MlpTrace:
    q: np.ndarray
    s: np.ndarray
    p: np.ndarray
    r: np.ndarray
    z: np.ndarray
    y: np.ndarray


def mlp_forward(x: np.ndarray, params: MlpParameters) -> MlpTrace:
    """Forward pass for one input (n,) or a batch (B, n); keeps every intermediate."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.W.shape[0]:
        raise ConfigError(f"input width {x.shape[-1]} != MLP input {params.W.shape[0]}")
    q = check_finite("q", x @ params.W)
    s = relu(q)
    p = check_finite("p", s @ params.U)
    r = relu(p)
    z = check_finite("z", r @ params.V)
    y = gaussian(z)
    return MlpTrace(q, s, p, r, z, y)


def mlp_backward(x: np.ndarray, trace: MlpTrace, params: MlpParameters, dy: np.ndarray):
    """Reverse pass for a batch given dLoss/dy; returns a gradient dict keyed like ``arrays()``."""
    dz = dy * (-trace.z * trace.y)
    dV = trace.r.T @ dz
    dp = (dz @ params.V.T) * (trace.p > 0)
    dU = trace.s.T @ dp
    dq = (dp @ params.U.T) * (trace.q > 0)
    dW = x.T @ dq
    return {"W": dW, "U": dU, "V": dV}
