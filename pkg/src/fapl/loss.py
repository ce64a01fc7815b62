"""Classification and center losses, their gradients, and the center update."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .errors import ContractError, InputError, ShapeError
from .labeling import CenterBank
from .model import softmax_prob


@dataclass(frozen=True)
class LossBreakdown:
    L_S: float
    L_C: float
    lam: float
    L: float

    def as_dict(self) -> dict:
        return asdict(self)


def _check_targets(y: np.ndarray, q: np.ndarray) -> None:
    if y.shape != q.shape:
        raise ShapeError(f"logits {y.shape} and targets {q.shape} differ")
    if np.any(q < 0) or np.any(np.abs(q.sum(axis=-1) - 1.0) > 1e-9) or not np.all(np.isfinite(q)):
        raise InputError("target is not a probability distribution")


def cross_entropy(y, q):
    """``-sum_k q_k (y_k - y_max) + log sum_j exp(y_j - y_max)``; per sample for 2-D input."""
    y = np.asarray(y, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    _check_targets(y, q)
    shifted = y - y.max(axis=-1, keepdims=True)
    val = -(q * shifted).sum(axis=-1) + np.log(np.exp(shifted).sum(axis=-1))
    return float(val) if val.ndim == 0 else val


def cross_entropy_grad(y, q) -> np.ndarray:
    """``softmax(y) - q``."""
    y = np.asarray(y, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    _check_targets(y, q)
    return softmax_prob(y) - q


def _check_assignments(xs: np.ndarray, labels: np.ndarray, K: int) -> None:
    if xs.shape[0] != labels.shape[0]:
        raise InputError(f"{xs.shape[0]} features but {labels.shape[0]} assignments")
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise InputError(f"assignment outside [0, {K})")


def center_loss(xs, assignments, bank: CenterBank) -> float:
    """``0.5 * sum_i |x_i - c_{l_i}|^2``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    labels = np.asarray(assignments, dtype=np.int64).reshape(-1)
    _check_assignments(xs, labels, bank.K)
    if labels.size == 0:
        return 0.0
    diff = xs - bank.centers[labels]
    return 0.5 * float(np.sum(diff * diff))


def center_loss_grad(x, c) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if x.shape != c.shape:
        raise ShapeError(f"feature {x.shape} and center {c.shape} differ")
    return x - c


def center_delta(features, labels, bank: CenterBank) -> np.ndarray:
    """Per-class ``sum_i [l_i = k] (c_k - x_i) / (1 + sum_i [l_i = k])``, shape (K, d)."""
    xs = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size and labels.min() < 0:
        raise ContractError("center update received an unlabeled sample")
    _check_assignments(xs, labels, bank.K)
    if labels.size == 0:
        return np.zeros_like(bank.centers)
    if xs.shape[1] != bank.d_feat:
        raise ShapeError(f"feature dim {xs.shape[1]} != center dim {bank.d_feat}")
    return kernels.center_delta(np.ascontiguousarray(xs), labels, bank.centers)


def center_update(features, labels, bank: CenterBank) -> CenterBank:
    """Move each center toward its labeled batch members: ``c_k - alpha * delta_k``.

    Only labeled samples may be passed; classes absent from the batch are unchanged.
    """
    delta = center_delta(features, labels, bank)
    return CenterBank(bank.centers - bank.alpha * delta, bank.alpha)


def total_loss(logits, targets, features, assignments, bank: CenterBank, lam: float) -> LossBreakdown:
    """Batch joint loss. ``assignments`` holds -1 for unlabeled members, which add no center term."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    assignments = np.asarray(assignments, dtype=np.int64).reshape(-1)
    n = logits.shape[0]
    if targets.shape[0] != n or features.shape[0] != n or assignments.shape[0] != n:
        raise InputError("batch arity mismatch between logits, targets, features, assignments")
    L_S = float(np.sum(cross_entropy(logits, targets))) if n else 0.0
    lab = assignments >= 0
    L_C = center_loss(features[lab], assignments[lab], bank)
    return LossBreakdown(L_S, L_C, float(lam), L_S + lam * L_C)


def joint_output_grads(logits, targets, features, assignments, bank: CenterBank, lam: float):
    """Gradients of ``total_loss`` w.r.t. the logits and the features.

    Returns ``(grad_y, grad_x)``; feeding both to ``model.backward`` gives the
    parameter gradient. Centers are treated as constants.
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    assignments = np.asarray(assignments, dtype=np.int64).reshape(-1)
    grad_y = cross_entropy_grad(logits, targets)
    grad_x = np.zeros_like(features)
    lab = assignments >= 0
    if lam > 0 and lab.any():
        grad_x[lab] = lam * center_loss_grad(features[lab], bank.centers[assignments[lab]])
    return grad_y, grad_x
