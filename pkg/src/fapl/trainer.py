"""Semi-supervised training loop.

Each iteration: forward the mini-batch, pseudo-label its unlabeled members,
compute the joint loss, update centers from labeled members, backpropagate
(center gradient only into labeled members), take a momentum SGD step.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .data import Dataset, make_batches
from .errors import ConfigError, DivergenceError, ShapeError
from .labeling import SCHEMES, CenterBank, pseudo_targets
from .loss import center_update, joint_output_grads, total_loss
from .model import ModelParams, OptimizerState, backward, forward_cached, init_params, sgd_step, softmax_prob

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    scheme: str = "fapl-d"
    lam: float = 1e-4
    alpha: float = 0.5
    lr: float = 0.01
    momentum: float = 0.9
    epochs: int = 50
    batch_size: int = 32
    warmup_epochs: int = 0
    seed: int = 0
    hidden: tuple[int, ...] = (32,)
    d_feat: int | None = 16
    head_classes: int | None = None
    average_loss: bool = False
    activation: str = "tanh"
    final_activation: bool = True

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)

    def validate(self) -> None:
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not self.lam >= 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.warmup_epochs < 0:
            raise ConfigError(f"warmup_epochs must be >= 0, got {self.warmup_epochs}")
        if self.d_feat is None and self.hidden:
            raise ConfigError("d_feat=None (identity embedding) cannot have hidden layers")

    def layer_sizes(self) -> list[int]:
        return [] if self.d_feat is None else [*self.hidden, self.d_feat]

    def n_out(self, K: int) -> int:
        want = K + 1 if self.scheme == "all-in-one" else K
        if self.head_classes is not None and self.head_classes != want:
            raise ConfigError(f"scheme {self.scheme!r} needs a {want}-way head, config forces {self.head_classes}")
        return want

    def as_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class TrainHistory:
    records: list[dict] = field(default_factory=list)
    pseudo_label_accuracy: list[float | None] = field(default_factory=list)

    @property
    def final_pseudo_label_accuracy(self) -> float | None:
        return self.pseudo_label_accuracy[-1] if self.pseudo_label_accuracy else None


class TrainResult(NamedTuple):
    params: ModelParams
    centers: CenterBank
    history: TrainHistory


EpochCallback = Callable[[int, ModelParams, CenterBank], None]


def init_centers(K: int, d_feat: int, alpha: float = 0.5) -> CenterBank:
    return CenterBank.zeros(K, d_feat, alpha)


def _readonly(params: ModelParams, bank: CenterBank) -> tuple[ModelParams, CenterBank]:
    p = params.copy()
    for t in p.tensors():
        t.flags.writeable = False
    b = bank.copy()
    b.centers.flags.writeable = False
    return p, b


def train(
    cfg: TrainConfig,
    labeled: Dataset,
    unlabeled: Dataset | None = None,
    callback: EpochCallback | None = None,
    zero_center_grad: bool = False,
) -> TrainResult:
    """Run ``cfg.epochs`` passes over labeled + unlabeled samples.

    ``zero_center_grad`` drops the center-loss gradient while still updating
    centers; it exists for ablation checks.
    """
    cfg.validate()
    labeled.check_coverage()
    K = labeled.K
    if unlabeled is None or cfg.scheme == "baseline":
        unlabeled = Dataset.empty(labeled.d_in, K)
    if len(unlabeled) and (unlabeled.d_in != labeled.d_in or unlabeled.K != K):
        raise ShapeError("unlabeled samples do not match the labeled set's d_in/K")
    if np.any(unlabeled.labeled_mask):
        raise ConfigError("unlabeled set contains labeled samples")
    n_out = cfg.n_out(K)

    X = labeled.concat(unlabeled) if len(unlabeled) else labeled
    feats = X.features
    is_lab = X.labeled_mask
    n_lab = len(labeled)
    track_acc = len(unlabeled) > 0 and unlabeled.has_provenance

    params = init_params(
        labeled.d_in, cfg.layer_sizes(), n_out, seed=cfg.seed,
        activation=cfg.activation, final_activation=cfg.final_activation,
    )
    bank = init_centers(K, params.d_feat, cfg.alpha)
    opt = OptimizerState.for_params(params, cfg.lr, cfg.momentum)
    history = TrainHistory()
    eye = np.eye(n_out)

    for epoch in range(cfg.epochs):
        pool = n_lab if epoch < cfg.warmup_epochs else len(X)
        batches = make_batches(pool, cfg.batch_size, cfg.seed, epoch)
        assigned = np.full(len(unlabeled), -1, dtype=np.int64)
        for bi, idx in enumerate(batches):
            xb = feats[idx]
            lab = is_lab[idx]
            x, y, cache = forward_cached(params, xb)
            p = softmax_prob(y)

            targets = np.empty((idx.size, n_out))
            targets[lab] = eye[X.labels[idx[lab]]]
            unl = ~lab
            if unl.any():
                tq = pseudo_targets(cfg.scheme, x[unl], p[unl], bank, n_out)
                targets[unl] = tq
                assigned[idx[unl] - n_lab] = np.argmax(tq, axis=1)

            assign = np.where(lab, X.labels[idx], -1)
            lb = total_loss(y, targets, x, assign, bank, cfg.lam)
            if not np.isfinite(lb.L):
                raise DivergenceError(f"non-finite loss at epoch {epoch + 1} batch {bi + 1}")

            grad_y, grad_x = joint_output_grads(y, targets, x, assign, bank, cfg.lam)
            if zero_center_grad:
                grad_x[:] = 0.0
            bank = center_update(x[lab], X.labels[idx[lab]], bank)

            if cfg.average_loss:
                grad_y /= idx.size
                grad_x /= idx.size
            grads = backward(params, xb, grad_y, grad_x, cache=cache)
            params = sgd_step(params, grads, opt)

            history.records.append({
                "epoch": epoch + 1,
                "batch": bi + 1,
                "L": lb.L,
                "L_S": lb.L_S,
                "L_C": lb.L_C,
                "n_unlabeled": int(unl.sum()),
            })

        if track_acc and epoch >= cfg.warmup_epochs:
            history.pseudo_label_accuracy.append(float(np.mean(assigned == unlabeled.provenance)))
        else:
            history.pseudo_label_accuracy.append(None)

        if callback is not None:
            try:
                callback(epoch + 1, *_readonly(params, bank))
            except Exception:
                log.exception("epoch callback failed at epoch %d", epoch + 1)

    return TrainResult(params, bank, history)
