import numpy as np


class Adam:
    """Adam with decoupled weight decay; updates parameter arrays in place.

    The decay step is ``p -= lr * weight_decay * p`` applied before the
    moment update, independent of the gradient.
    """

    def __init__(self, params: dict[str, np.ndarray], lr=1e-4, betas=(0.9, 0.999),
                 eps=1e-8, weight_decay=0.0):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        step = self.lr / (1.0 - b1 ** self.t)
        vscale = 1.0 / (1.0 - b2 ** self.t)
        for name, p in self.params.items():
            g = grads[name]
            m, v = self.m[name], self.v[name]
            if self.weight_decay:
                p *= 1.0 - self.lr * self.weight_decay
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            denom = np.sqrt(v * vscale)
            denom += self.eps
            p -= step * m / denom
