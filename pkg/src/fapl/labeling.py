"""Pseudo-labels for unlabeled samples.

FAPL schemes label a feature by its cosine affinity to the per-class centers;
the baselines (all-in-one, prediction one-hot, LSRO) are kept for comparison.
Class indices are 0-based; the all-in-one extra class is index ``K``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, InputError, ShapeError

SCHEMES = ("baseline", "all-in-one", "onehot-pred", "lsro", "fapl-o", "fapl-d")


@dataclass
class CenterBank:
    centers: np.ndarray  # (K, d_feat)
    alpha: float = 0.5

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        if self.centers.ndim != 2:
            raise ShapeError(f"centers must be 2-D, got shape {self.centers.shape}")

    @classmethod
    def zeros(cls, K: int, d_feat: int, alpha: float = 0.5) -> CenterBank:
        return cls(np.zeros((K, d_feat)), alpha)

    @property
    def K(self) -> int:
        return self.centers.shape[0]

    @property
    def d_feat(self) -> int:
        return self.centers.shape[1]

    def copy(self) -> CenterBank:
        return CenterBank(self.centers.copy(), self.alpha)


def cosine_sim(x, c) -> float:
    """``x.c / (|x||c|)``, defined as 0 when either vector has zero norm."""
    x = np.asarray(x, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if x.shape != c.shape or x.ndim != 1:
        raise ShapeError(f"cosine_sim needs equal 1-D shapes, got {x.shape} and {c.shape}")
    return float(kernels.cosine_matrix(x[None, :], c[None, :])[0, 0])


def affinity(xs, bank: CenterBank) -> np.ndarray:
    """Cosine similarity of each feature row to each center, shape (n, K)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if bank.K == 0:
        raise ConfigError("empty center bank")
    if xs.shape[1] != bank.d_feat:
        raise ShapeError(f"feature dim {xs.shape[1]} != center dim {bank.d_feat}")
    return kernels.cosine_matrix(np.ascontiguousarray(xs), bank.centers)


def fapl_onehot(x, bank: CenterBank):
    """Index of the most similar center (lowest index on ties). Accepts (d,) or (n, d)."""
    sims = affinity(x, bank)
    out = np.argmax(sims, axis=1)
    return int(out[0]) if np.ndim(x) == 1 else out


def fapl_distributed(x, bank: CenterBank) -> np.ndarray:
    """Softmax over the raw cosine similarities to every center."""
    sims = affinity(x, bank)
    e = np.exp(sims - sims.max(axis=1, keepdims=True))
    q = e / e.sum(axis=1, keepdims=True)
    return q[0] if np.ndim(x) == 1 else q


def baseline_all_in_one(K: int, n_out: int | None = None) -> int:
    """Every unlabeled sample goes to the extra class ``K``; needs a K+1 output head."""
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    if n_out is not None and n_out != K + 1:
        raise ConfigError(f"all-in-one needs a {K + 1}-way head, got {n_out}")
    return K


def _check_distribution(p: np.ndarray, tol: float = 1e-9) -> None:
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > tol):
        raise InputError("input is not a probability distribution")


def baseline_prediction_onehot(p):
    """Argmax of the predicted class probabilities (lowest index on ties)."""
    p = np.asarray(p, dtype=np.float64)
    _check_distribution(p)
    out = np.argmax(np.atleast_2d(p), axis=1)
    return int(out[0]) if p.ndim == 1 else out


def baseline_lsro(K: int) -> np.ndarray:
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    return np.full(K, 1.0 / K)


def pseudo_targets(scheme: str, x, probs, bank: CenterBank, n_out: int) -> np.ndarray:
    """Target distributions (n, n_out) for a batch of unlabeled features.

    ``probs`` are the model's softmax outputs for the same samples, used only
    by the prediction one-hot scheme.
    """
    n = np.shape(x)[0]
    K = bank.K
    targets = np.zeros((n, n_out))
    if n == 0:
        return targets
    if scheme == "fapl-d":
        targets[:, :K] = fapl_distributed(x, bank)
    elif scheme == "fapl-o":
        targets[np.arange(n), fapl_onehot(x, bank)] = 1.0
    elif scheme == "onehot-pred":
        targets[np.arange(n), np.argmax(probs[:, :K], axis=1)] = 1.0
    elif scheme == "lsro":
        targets[:, :K] = baseline_lsro(K)
    elif scheme == "all-in-one":
        targets[:, baseline_all_in_one(K, n_out)] = 1.0
    else:
        raise ConfigError(f"scheme {scheme!r} does not label unlabeled samples")
    return targets
