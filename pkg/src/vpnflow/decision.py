"""Open-set decision rules and the two-network cascades.

Score rule: accept ``argmax y`` when ``max y > lambda``, otherwise reject as
VPN. Distance rule: accept ``argmin d`` when ``min d < eta`` where ``d`` are
Euclidean distances to the one-hot class centers. The cascades route
mid-confidence inputs to a second network trained on non-VPN classes only.
Ties go to the lowest class index.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from vpnflow.errors import ConfigError

N_CLASSES = 5
VPN = 5


class Provenance(enum.Enum):
    NET1 = "net1"
    NET2 = "net2"
    REJECTED = "rejected"


# integer codes used by the vectorized paths
_PROV_CODES = {0: Provenance.NET1, 1: Provenance.NET2, 2: Provenance.REJECTED}


class Method(enum.Enum):
    SCORE = "score"
    DISTANCE = "distance"


@dataclass(frozen=True)
class Decision:
    outcome: int
    provenance: Provenance

    def __post_init__(self):
        if (self.outcome == VPN) != (self.provenance is Provenance.REJECTED):
            raise ValueError("VPN outcome and REJECTED provenance must coincide")

    @property
    def is_vpn(self) -> bool:
        return self.outcome == VPN


REJECT = Decision(VPN, Provenance.REJECTED)


@dataclass(frozen=True)
class Thresholds:
    lam: float = 0.5
    mu: float = 0.9
    eta: float = 1.0
    delta: float = 0.1

    def check_score(self):
        if not self.mu > self.lam:
            raise ConfigError(f"mu ({self.mu}) must be greater than lambda ({self.lam})")

    def check_distance(self):
        if not self.eta > 0 or not self.delta > 0:
            raise ConfigError(f"eta ({self.eta}) and delta ({self.delta}) must be positive")
        if not self.delta < self.eta:
            raise ConfigError(f"delta ({self.delta}) must be less than eta ({self.eta})")

    def check(self, method: Method | None = None):
        if method in (None, Method.SCORE):
            self.check_score()
        if method in (None, Method.DISTANCE):
            self.check_distance()


def class_centers(n_classes: int = N_CLASSES) -> np.ndarray:
    """One-hot centers; row i is the center of class i (shared by both networks)."""
    return np.eye(n_classes)


def center_distances(y, centers: np.ndarray | None = None) -> np.ndarray:
    """Euclidean distance from each score vector to each center; works on (5,) or (B, 5)."""
    y = np.asarray(y, dtype=np.float64)
    if centers is None:
        centers = class_centers(y.shape[-1])
    diff = y[..., None, :] - centers
    return np.sqrt(np.einsum("...kj,...kj->...k", diff, diff))


def score_decide(y, lam: float) -> Decision:
    y = np.asarray(y)
    k = int(np.argmax(y))
    if y[k] > lam:
        return Decision(k, Provenance.NET1)
    return REJECT


def score_cascade(y1, y2, t: Thresholds) -> Decision:
    t.check_score()
    y1 = np.asarray(y1)
    best = y1.max()
    if best > t.mu:
        return Decision(int(np.argmax(y1)), Provenance.NET1)
    if best > t.lam:
        if callable(y2):
            y2 = y2()
        return Decision(int(np.argmax(y2)), Provenance.NET2)
    return REJECT


def distance_decide(d, eta: float) -> Decision:
    if not eta > 0:
        raise ConfigError(f"eta ({eta}) must be positive")
    d = np.asarray(d)
    k = int(np.argmin(d))
    if d[k] < eta:
        return Decision(k, Provenance.NET1)
    return REJECT


def distance_cascade(d1, d2, t: Thresholds) -> Decision:
    t.check_distance()
    d1 = np.asarray(d1)
    best = d1.min()
    if best < t.delta:
        return Decision(int(np.argmin(d1)), Provenance.NET1)
    if best < t.eta:
        if callable(d2):
            d2 = d2()
        return Decision(int(np.argmin(d2)), Provenance.NET2)
    return REJECT


def score_cascade_batch(y1: np.ndarray, y2: np.ndarray | None, t: Thresholds):
    """Vectorized :func:`score_cascade`; returns (outcomes, provenance codes 0/1/2).

    ``y2`` may be None only if no row reaches the middle branch.
    """
    t.check_score()
    best = y1.max(axis=1)
    out = np.full(len(y1), VPN, dtype=np.int64)
    prov = np.full(len(y1), 2, dtype=np.int64)
    first = best > t.mu
    middle = ~first & (best > t.lam)
    out[first] = np.argmax(y1[first], axis=1)
    prov[first] = 0
    if middle.any():
        out[middle] = np.argmax(y2[middle], axis=1)
        prov[middle] = 1
    return out, prov


def distance_cascade_batch(d1: np.ndarray, d2: np.ndarray | None, t: Thresholds):
    t.check_distance()
    best = d1.min(axis=1)
    out = np.full(len(d1), VPN, dtype=np.int64)
    prov = np.full(len(d1), 2, dtype=np.int64)
    first = best < t.delta
    middle = ~first & (best < t.eta)
    out[first] = np.argmin(d1[first], axis=1)
    prov[first] = 0
    if middle.any():
        out[middle] = np.argmin(d2[middle], axis=1)
        prov[middle] = 1
    return out, prov


def provenance_of(code: int) -> Provenance:
    return _PROV_CODES[int(code)]


@dataclass(frozen=True)
class Pipeline:
    """Two trained networks plus a decision method and its thresholds."""

    method: Method
    net1: object
    net2: object
    thresholds: Thresholds = Thresholds()

    def __post_init__(self):
        self.thresholds.check(self.method)

    def with_thresholds(self, **changes) -> "Pipeline":
        return replace(self, thresholds=replace(self.thresholds, **changes))

    def outputs(self, x: np.ndarray):
        """Score vectors of both networks for a batch (no laziness)."""
        from vpnflow.neural import predict

        return predict(self.net1, x), predict(self.net2, x)

    def decide_outputs(self, y1: np.ndarray, y2: np.ndarray | None):
        if self.method is Method.SCORE:
            return score_cascade_batch(y1, y2, self.thresholds)
        d2 = None if y2 is None else center_distances(y2)
        return distance_cascade_batch(center_distances(y1), d2, self.thresholds)

    def classify_batch(self, x: np.ndarray):
        """Outcomes and provenance codes for a batch; net2 only runs on middle-branch rows."""
        from vpnflow.neural import predict

        x = np.asarray(x, dtype=np.float64)
        y1 = predict(self.net1, x)
        t = self.thresholds
        if self.method is Method.SCORE:
            best = y1.max(axis=1)
            middle = (best <= t.mu) & (best > t.lam)
        else:
            best = center_distances(y1).min(axis=1)
            middle = (best >= t.delta) & (best < t.eta)
        y2 = None
        if middle.any():
            y2 = np.zeros_like(y1)
            y2[middle] = predict(self.net2, x[middle])
        return self.decide_outputs(y1, y2)


def classify_flow(x, pipeline: Pipeline) -> Decision:
    """Decide one input; the second network is evaluated only if the cascade needs it."""
    from vpnflow.neural import predict

    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    y1 = predict(pipeline.net1, x[None, :])[0]

    def second():
        return predict(pipeline.net2, x[None, :])[0]

    if pipeline.method is Method.SCORE:
        return score_cascade(y1, second, pipeline.thresholds)
    return distance_cascade(
        center_distances(y1), lambda: center_distances(second()), pipeline.thresholds
    )
