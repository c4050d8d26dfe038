"""Training losses over the 5 Gaussian scores.

Labels 0..4 are application classes; label 5 (VPN) has no correct class:
its MSE target is all zeros and its margin loss is the hinge over all five
centers.
"""
from __future__ import annotations

import enum

import numpy as np

from vpnflow.decision import center_distances, class_centers
from vpnflow.errors import ConfigError

N_CLASSES = 5
VPN = 5


class LossKind(enum.Enum):
    MSE = "mse"
    MARGIN = "margin"


def target_vector(label: int) -> np.ndarray:
    t = np.zeros(N_CLASSES)
    if label != VPN:
        t[label] = 1.0
    return t


def target_matrix(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    t = np.zeros((labels.size, N_CLASSES))
    known = labels != VPN
    t[np.flatnonzero(known), labels[known]] = 1.0
    return t


def mse_loss(y, target) -> float:
    diff = np.asarray(y, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.dot(diff, diff))


def margin_distance_loss(distances, label: int, eta: float) -> float:
    if not eta > 0:
        raise ConfigError(f"margin eta must be positive, got {eta}")
    d = np.asarray(distances, dtype=np.float64)
    hinge = np.maximum(0.0, eta - d)
    if label == VPN:
        return float(hinge.sum())
    others = np.arange(d.size) != label
    return float(d[label] + hinge[others].sum())


def mse_batch(y: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean per-sample squared error and its gradient w.r.t. y."""
    diff = y - target_matrix(labels)
    n = len(y)
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


def margin_batch(y: np.ndarray, labels: np.ndarray, eta: float) -> tuple[float, np.ndarray]:
    """Mean margin loss over the batch and its gradient w.r.t. y.

    Hinge subgradient is 0 at d == eta; distance gradient is 0 at d == 0.
    """
    if not eta > 0:
        raise ConfigError(f"margin eta must be positive, got {eta}")
    labels = np.asarray(labels)
    n = len(y)
    centers = class_centers(N_CLASSES)
    d = center_distances(y, centers)  # (n, 5)
    active = eta - d > 0
    own = np.zeros_like(d, dtype=bool)
    known = np.flatnonzero(labels != VPN)
    own[known, labels[known]] = True
    hinge_on = active & ~own
    loss = d[own].sum() + (eta - d[hinge_on]).sum()
    dloss_dd = np.where(own, 1.0, np.where(hinge_on, -1.0, 0.0))
    safe = np.where(d > 0, d, 1.0)
    unit = (y[:, None, :] - centers) / safe[:, :, None]
    unit[d == 0] = 0.0
    dy = np.einsum("nk,nkj->nj", dloss_dd, unit) / n
    return float(loss / n), dy


def batch_loss(y: np.ndarray, labels: np.ndarray, kind: LossKind, eta: float = 1.0):
    if kind is LossKind.MSE:
        return mse_batch(y, labels)
    return margin_batch(y, labels, eta)
