import numpy as np

from vpnflow.errors import NumericalError

GAUSSIAN_SIGMA_SQ = 1.0
GAUSSIAN_CENTER = 0.0


def relu(x):
    return np.maximum(x, 0.0)


def gaussian(z):
    """Elementwise exp(-(z - c)^2 / (2 sigma^2)) with c = 0, sigma^2 = 1."""
    return np.exp(-((z - GAUSSIAN_CENTER) ** 2) / (2.0 * GAUSSIAN_SIGMA_SQ))


def sigmoid(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values in layer {name!r}")
    return arr


def glorot(rng, fan_in, fan_out, shape=None):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out))
