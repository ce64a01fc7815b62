"""Sample sets: synthetic generation, labeled-set reduction, CSV I/O, batching.

Class indices are 0-based in memory (``0..K-1``) and 1-based in CSV files.
Unlabeled samples carry label ``UNLABELED`` (-1); provenance is -1 when absent.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, InputError, ParseError

UNLABELED = -1
UNLABELED_TOKEN = "U"

FRACTIONS = {"full": 1.0, "half": 1.0 / 2.0, "third": 1.0 / 3.0}
REDUCE_THRESHOLD = 8


class Sample(NamedTuple):
    features: np.ndarray
    label: int | None
    provenance: int | None


@dataclass(eq=False)
class Dataset:
    """An ordered set of samples over ``K`` classes stored column-wise."""

    features: np.ndarray
    labels: np.ndarray
    K: int
    provenance: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim == 1 and self.features.size == 0:
            self.features = self.features.reshape(0, 0)
        if self.features.ndim != 2:
            raise InputError(f"features must be 2-D, got shape {self.features.shape}")
        n = self.features.shape[0]
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.provenance is None:
            self.provenance = np.full(n, -1, dtype=np.int64)
        self.provenance = np.asarray(self.provenance, dtype=np.int64).reshape(-1)
        if self.labels.shape[0] != n or self.provenance.shape[0] != n:
            raise InputError("features, labels and provenance lengths differ")
        if self.K < 1:
            raise InputError(f"K must be >= 1, got {self.K}")
        if not np.all(np.isfinite(self.features)):
            raise InputError("features contain non-finite values")
        bad = (self.labels != UNLABELED) & ((self.labels < 0) | (self.labels >= self.K))
        if bad.any():
            raise InputError(f"label out of range at index {int(np.flatnonzero(bad)[0])}")
        bad = (self.provenance != -1) & ((self.provenance < 0) | (self.provenance >= self.K))
        if bad.any():
            raise InputError(f"provenance out of range at index {int(np.flatnonzero(bad)[0])}")

    @classmethod
    def empty(cls, d_in: int, K: int) -> Dataset:
        return cls(np.zeros((0, d_in)), np.zeros(0, dtype=np.int64), K)

    def __len__(self) -> int:
        return self.features.shape[0]

    def __getitem__(self, i: int) -> Sample:
        label = int(self.labels[i])
        prov = int(self.provenance[i])
        return Sample(
            self.features[i],
            None if label == UNLABELED else label,
            None if prov < 0 else prov,
        )

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.K == other.K
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.provenance, other.provenance)
        )

    @property
    def d_in(self) -> int:
        return self.features.shape[1]

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.labels != UNLABELED

    @property
    def has_provenance(self) -> bool:
        return len(self) > 0 and bool(np.all(self.provenance >= 0))

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels[self.labeled_mask], minlength=self.K)

    def check_coverage(self) -> None:
        """Raise unless every class has at least one labeled sample."""
        missing = np.flatnonzero(self.class_counts() == 0)
        if missing.size:
            raise InputError(f"classes without labeled samples: {(missing + 1).tolist()}")

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.K, self.provenance[idx])

    def concat(self, other: Dataset) -> Dataset:
        if len(other) and len(self) and other.d_in != self.d_in:
            raise InputError(f"d_in mismatch: {self.d_in} vs {other.d_in}")
        if other.K != self.K:
            raise InputError(f"K mismatch: {self.K} vs {other.K}")
        return Dataset(
            np.concatenate([self.features, other.features]) if len(other) else self.features,
            np.concatenate([self.labels, other.labels]),
            self.K,
            np.concatenate([self.provenance, other.provenance]),
        )


@dataclass(frozen=True)
class SynthConfig:
    K: int = 8
    d_in: int = 16
    per_class: int = 30
    mean_spread: float = 1.0
    within_std: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.K < 2:
            raise ConfigError(f"K must be >= 2, got {self.K}")
        if self.d_in < 1:
            raise ConfigError(f"d_in must be >= 1, got {self.d_in}")
        if self.per_class < 1:
            raise ConfigError(f"per_class must be >= 1, got {self.per_class}")
        if not self.mean_spread > 0:
            raise ConfigError(f"mean_spread must be > 0, got {self.mean_spread}")
        if not self.within_std >= 0:
            raise ConfigError(f"within_std must be >= 0, got {self.within_std}")


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    """K Gaussian identity clusters, class-major order.

    Class means are drawn once from ``N(0, mean_spread^2 I)``; each sample is
    its class mean plus ``N(0, within_std^2 I)`` noise.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    means = rng.normal(0.0, cfg.mean_spread, size=(cfg.K, cfg.d_in))
    labels = np.repeat(np.arange(cfg.K), cfg.per_class)
    noise = rng.normal(0.0, 1.0, size=(labels.size, cfg.d_in)) * cfg.within_std
    return Dataset(means[labels] + noise, labels, cfg.K)


def split_per_class(ds: Dataset, n_first: int) -> tuple[Dataset, Dataset]:
    """Split labeled samples into the first ``n_first`` of each class and the rest."""
    head = np.zeros(len(ds), dtype=bool)
    for k in range(ds.K):
        idx = np.flatnonzero(ds.labels == k)
        head[idx[:n_first]] = True
    return ds.subset(np.flatnonzero(head)), ds.subset(np.flatnonzero(~head))


def generate_unlabeled(
    ds: Dataset, n: int, mix_strength: float = 1.0, noise_std: float = 0.0, seed: int = 0
) -> Dataset:
    """Unlabeled samples interpolated between two same-class labeled samples.

    Each output is ``t*a + (1-t)*b + eps`` with ``t ~ U[1-mix_strength, 1]`` and
    ``eps ~ N(0, noise_std^2 I)``; its provenance is the class of ``a`` and ``b``.
    """
    if n < 0:
        raise ConfigError(f"n must be >= 0, got {n}")
    if not 0.0 <= mix_strength <= 1.0:
        raise ConfigError(f"mix_strength must be in [0, 1], got {mix_strength}")
    if not noise_std >= 0:
        raise ConfigError(f"noise_std must be >= 0, got {noise_std}")
    if n == 0:
        return Dataset(np.zeros((0, ds.d_in)), np.zeros(0, dtype=np.int64), ds.K)
    counts = ds.class_counts()
    if len(ds) == 0 or counts.sum() == 0:
        raise InputError("cannot generate unlabeled samples from an empty dataset")

    rng = np.random.default_rng(seed)
    present = np.flatnonzero(counts > 0)
    members = [np.flatnonzero(ds.labels == k) for k in range(ds.K)]
    ks = present[rng.integers(0, present.size, size=n)]
    ia = rng.integers(0, counts[ks])
    ib = rng.integers(0, counts[ks])
    a_idx = np.array([members[k][i] for k, i in zip(ks, ia)], dtype=np.int64)
    b_idx = np.array([members[k][i] for k, i in zip(ks, ib)], dtype=np.int64)
    t = rng.uniform(1.0 - mix_strength, 1.0, size=(n, 1))
    eps = rng.normal(0.0, 1.0, size=(n, ds.d_in)) * noise_std
    a = ds.features[a_idx]
    b = ds.features[b_idx]
    feats = t * a + (1.0 - t) * b + eps
    return Dataset(feats, np.full(n, UNLABELED, dtype=np.int64), ds.K, ks)


def reduce_labeled(ds: Dataset, fraction: str = "full") -> Dataset:
    """Shrink large classes to a fraction of their samples.

    Classes with fewer than 8 labeled samples are kept whole; larger classes keep their
    first ``ceil(count * fraction)`` samples in stored order. Unlabeled samples pass through.
    """
    if fraction not in FRACTIONS:
        raise ConfigError(f"fraction must be one of {sorted(FRACTIONS)}, got {fraction!r}")
    if fraction == "full":
        return ds
    f = FRACTIONS[fraction]
    keep = ~ds.labeled_mask
    for k in range(ds.K):
        idx = np.flatnonzero(ds.labels == k)
        if idx.size < REDUCE_THRESHOLD:
            keep[idx] = True
        else:
            # round before ceil so 9 * (1/3) does not become 4
            keep[idx[: math.ceil(round(idx.size * f, 9))]] = True
    return ds.subset(np.flatnonzero(keep))


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def save_csv(ds: Dataset, path) -> None:
    """Write ``d_in=<int>,K=<int>`` then one ``f1,...,fd,label[,provenance]`` row per sample."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"d_in={ds.d_in}", f"K={ds.K}"])
        for x, label, prov in zip(ds.features, ds.labels, ds.provenance):
            row = [repr(float(v)) for v in x]
            row.append(UNLABELED_TOKEN if label == UNLABELED else str(int(label) + 1))
            if prov >= 0:
                row.append(str(int(prov) + 1))
            w.writerow(row)


def _parse_header(row: list[str]) -> tuple[int, int]:
    fields = {}
    for cell in row:
        key, sep, val = cell.strip().partition("=")
        if not sep:
            raise ParseError(f"bad header cell {cell!r}", 1)
        try:
            fields[key] = int(val)
        except ValueError:
            raise ParseError(f"header value for {key!r} is not an integer", 1) from None
    if set(fields) != {"d_in", "K"}:
        raise ParseError("header must declare exactly d_in and K", 1)
    if fields["d_in"] < 1 or fields["K"] < 1:
        raise ParseError("header d_in and K must be positive", 1)
    return fields["d_in"], fields["K"]


def _parse_class(tok: str, K: int, line: int, what: str) -> int:
    try:
        v = int(tok)
    except ValueError:
        raise ParseError(f"unknown {what} token {tok!r}", line) from None
    if not 1 <= v <= K:
        raise ParseError(f"{what} {v} outside [1, {K}]", line)
    return v - 1


def load_csv(path) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("missing header", 1)
    d_in, K = _parse_header(rows[0])
    feats, labels, prov = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) not in (d_in + 1, d_in + 2):
            raise ParseError(f"expected {d_in + 1} or {d_in + 2} fields, got {len(row)}", lineno)
        try:
            x = [float(v) for v in row[:d_in]]
        except ValueError:
            raise ParseError("non-numeric feature value", lineno) from None
        if not all(math.isfinite(v) for v in x):
            raise ParseError("non-finite feature value", lineno)
        tok = row[d_in].strip()
        labels.append(UNLABELED if tok == UNLABELED_TOKEN else _parse_class(tok, K, lineno, "label"))
        prov.append(_parse_class(row[d_in + 1].strip(), K, lineno, "provenance") if len(row) == d_in + 2 else -1)
        feats.append(x)
    if not feats:
        return Dataset.empty(d_in, K)
    return Dataset(np.array(feats), np.array(labels), K, np.array(prov))


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------

def make_batches(indices, m: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Shuffle ``indices`` deterministically per (seed, epoch) and cut into chunks of ``m``.

    ``indices`` may be an int (meaning ``range(indices)``) or an array of sample indices.
    The final short batch is kept.
    """
    if m < 1:
        raise ConfigError(f"batch size must be >= 1, got {m}")
    if np.isscalar(indices):
        indices = np.arange(int(indices))
    indices = np.asarray(indices, dtype=np.int64)
    rng = np.random.default_rng([int(seed), int(epoch)])
    perm = rng.permutation(indices)
    return [perm[i:i + m] for i in range(0, perm.size, m)]
