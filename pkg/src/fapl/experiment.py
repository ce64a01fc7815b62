"""Experiment configs and the generate -> train -> evaluate pipeline behind the CLI."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import Dataset, SynthConfig, generate_synthetic, generate_unlabeled, reduce_labeled, split_per_class
from .errors import ConfigError
from .evaluation import evaluate_retrieval, extract_descriptors, intra_class_variance, query_gallery_split
from .model import ModelParams
from .trainer import TrainConfig, TrainResult, train

REPORT_FIELDS = (
    "scheme", "seed", "n_unlabeled", "lam", "rank1", "rank5", "rank10", "mAP",
    "intra_class_variance", "pseudo_label_accuracy",
)


@dataclass
class ExperimentConfig:
    # data
    K: int = 8
    d_in: int = 16
    per_class: int = 30
    mean_spread: float = 1.0
    within_std: float = 1.0
    labeled_fraction: str = "full"
    n_unlabeled: int = 960
    mix_strength: float = 1.0
    noise_ratio: float = 0.3
    # evaluation split
    heldout_per_class: int = 20
    queries_per_class: int = 5
    max_rank: int = 10
    # training
    scheme: str = "fapl-d"
    lam: float = 1e-4
    alpha: float = 0.5
    lr: float = 0.01
    momentum: float = 0.9
    epochs: int = 50
    batch_size: int = 32
    warmup_epochs: int = 0
    hidden: list[int] = field(default_factory=lambda: [32])
    d_feat: int | None = 16
    head_classes: int | None = None
    average_loss: bool = False
    activation: str = "tanh"
    final_activation: bool = True
    # run
    seed: int = 0
    out: str = "runs"

    def validate(self) -> None:
        self.synth_config(0).validate()
        self.train_config(0).validate()
        if self.heldout_per_class < 1:
            raise ConfigError("heldout_per_class must be >= 1")
        if not 1 <= self.queries_per_class < self.heldout_per_class:
            raise ConfigError("queries_per_class must be in [1, heldout_per_class)")
        if self.n_unlabeled < 0:
            raise ConfigError("n_unlabeled must be >= 0")
        if self.max_rank < 1:
            raise ConfigError("max_rank must be >= 1")
        if not self.noise_ratio >= 0:
            raise ConfigError("noise_ratio must be >= 0")

    # -- derived configs -------------------------------------------------
    def seeds(self) -> tuple[int, int, int]:
        """Independent (data, unlabeled, training) seeds derived from ``seed``."""
        s = np.random.SeedSequence(self.seed).generate_state(3)
        return int(s[0]), int(s[1]), int(s[2])

    def synth_config(self, seed: int) -> SynthConfig:
        return SynthConfig(
            K=self.K, d_in=self.d_in, per_class=self.per_class + self.heldout_per_class,
            mean_spread=self.mean_spread, within_std=self.within_std, seed=seed,
        )

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            scheme=self.scheme, lam=self.lam, alpha=self.alpha, lr=self.lr, momentum=self.momentum,
            epochs=self.epochs, batch_size=self.batch_size, warmup_epochs=self.warmup_epochs,
            seed=seed, hidden=tuple(self.hidden), d_feat=self.d_feat,
            head_classes=self.head_classes, average_loss=self.average_loss,
            activation=self.activation, final_activation=self.final_activation,
        )

    # -- (de)serialization -----------------------------------------------
    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        cfg = cls(**d)
        cfg._coerce()
        cfg.validate()
        return cfg

    def _coerce(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            try:
                if f.name == "hidden":
                    v = [int(h) for h in v]
                elif f.name in ("d_feat", "head_classes"):
                    v = None if v is None else int(v)
                elif f.type == "int":
                    if isinstance(v, float) and not v.is_integer():
                        raise ValueError(v)
                    v = int(v)
                elif f.type == "float":
                    v = float(v)
                elif f.type == "bool":
                    if not isinstance(v, bool):
                        raise ValueError(v)
                elif f.type == "str":
                    v = str(v)
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for {f.name}: {getattr(self, f.name)!r}") from None
            setattr(self, f.name, v)

    @classmethod
    def load(cls, path=None, overrides: list[str] | None = None) -> ExperimentConfig:
        d = {}
        if path is not None:
            try:
                d = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
        for item in overrides or []:
            key, sep, raw = item.partition("=")
            if not sep:
                raise ConfigError(f"override must be key=value, got {item!r}")
            d[key.strip()] = parse_scalar(raw)
        return cls.from_dict(d)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def replace(self, **changes) -> ExperimentConfig:
        return ExperimentConfig.from_dict({**self.to_dict(), **changes})


def parse_scalar(raw: str):
    """Parse an override value as JSON, falling back to the raw string."""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


@dataclass
class DataSplits:
    labeled: Dataset
    unlabeled: Dataset
    heldout: Dataset


def make_data(cfg: ExperimentConfig) -> DataSplits:
    data_seed, unl_seed, _ = cfg.seeds()
    full = generate_synthetic(cfg.synth_config(data_seed))
    labeled, heldout = split_per_class(full, cfg.per_class)
    labeled = reduce_labeled(labeled, cfg.labeled_fraction)
    unlabeled = generate_unlabeled(
        labeled, cfg.n_unlabeled, cfg.mix_strength, cfg.noise_ratio * cfg.within_std, unl_seed
    )
    return DataSplits(labeled, unlabeled, heldout)


def evaluate(cfg: ExperimentConfig, params: ModelParams, heldout: Dataset) -> dict:
    feats = extract_descriptors(params, heldout)
    qi, gi = query_gallery_split(heldout, cfg.queries_per_class)
    rep = evaluate_retrieval(feats[qi], heldout.labels[qi], feats[gi], heldout.labels[gi], cfg.max_rank)
    return {
        "rank1": rep.rank(1),
        "rank5": rep.rank(5),
        "rank10": rep.rank(10),
        "mAP": rep.map,
        "intra_class_variance": intra_class_variance(feats, heldout.labels),
        "n_query": rep.n_query,
        "n_gallery": rep.n_gallery,
        "cmc": rep.cmc.tolist(),
    }


def build_report(cfg: ExperimentConfig, metrics: dict, pla: float | None) -> dict:
    rep = {
        "scheme": cfg.scheme, "seed": cfg.seed, "n_unlabeled": cfg.n_unlabeled, "lam": cfg.lam,
        **metrics, "pseudo_label_accuracy": pla,
    }
    return rep


def run_experiment(cfg: ExperimentConfig, data: DataSplits | None = None) -> tuple[dict, TrainResult]:
    """Generate data, train, evaluate on the held-out split; return (report, train result)."""
    cfg.validate()
    data = data or make_data(cfg)
    result = train(cfg.train_config(cfg.seeds()[2]), data.labeled, data.unlabeled)
    metrics = evaluate(cfg, result.params, data.heldout)
    return build_report(cfg, metrics, result.history.final_pseudo_label_accuracy), result
