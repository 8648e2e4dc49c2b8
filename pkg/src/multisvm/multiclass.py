"""One-against-one and one-against-all decomposition over binary machines.

Prediction yields a class code, ``UNCLASSIFIED`` (0) or ``MIXED`` (255).
One-against-one labels a point by voting and leaves it unclassified when the
top score is shared.  One-against-all labels a point only when exactly one
machine claims it; no claim gives ``UNCLASSIFIED``, several give ``MIXED``.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError
from .kernels import KernelSpec
from .svm_binary import (
    DEFAULT_MAX_PASSES,
    DEFAULT_TOLERANCE,
    BinaryProblem,
    BinarySvmModel,
    CrossValidationResult,
    Standardizer,
    grid_search,
    train,
)

__all__ = [
    "UNCLASSIFIED",
    "MIXED",
    "Strategy",
    "Voting",
    "ClassCatalog",
    "LabeledDataset",
    "MulticlassModel",
    "train_multiclass",
    "decision_matrix",
    "vote_one_against_one",
    "resolve_one_against_all",
    "predict",
    "predict_1a1",
    "predict_1aa",
    "predict_1aa_detail",
    "count_special",
    "cross_validate_multiclass",
]

UNCLASSIFIED = 0
MIXED = 255


class Strategy(str, enum.Enum):
    ONE_AGAINST_ONE = "one-against-one"
    ONE_AGAINST_ALL = "one-against-all"

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        aliases = {"1a1": cls.ONE_AGAINST_ONE, "ovo": cls.ONE_AGAINST_ONE,
                   "1aa": cls.ONE_AGAINST_ALL, "ovr": cls.ONE_AGAINST_ALL, "ova": cls.ONE_AGAINST_ALL}
        key = text.strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise InputError(f"unknown strategy {text!r}") from None

    @property
    def short(self) -> str:
        return "1a1" if self is Strategy.ONE_AGAINST_ONE else "1aa"


class Voting(str, enum.Enum):
    MAJORITY = "majority"
    WEIGHTED = "weighted"


@dataclass(frozen=True)
class ClassCatalog:
    """Ordered class codes (1..254) with display names."""

    codes: tuple[int, ...]
    names: tuple[str, ...]

    def __post_init__(self):
        codes = tuple(int(c) for c in self.codes)
        names = tuple(str(n) for n in self.names)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "names", names)
        if len(codes) < 2:
            raise InputError(f"catalog needs at least 2 classes, got {len(codes)}")
        if len(names) != len(codes):
            raise InputError("catalog codes and names differ in length")
        if len(set(codes)) != len(codes):
            raise InputError(f"duplicate class codes in catalog: {codes}")
        bad = [c for c in codes if not 1 <= c <= 254]
        if bad:
            raise InputError(f"class codes must lie in 1..254 (0 and 255 are reserved), got {bad}")
        for n in names:
            if not n or any(ch.isspace() for ch in n) or "," in n or "=" in n:
                raise InputError(f"class name {n!r} must be nonempty without whitespace, ',' or '='")

    @classmethod
    def from_codes(cls, codes) -> "ClassCatalog":
        codes = sorted({int(c) for c in codes})
        return cls(tuple(codes), tuple(f"class{c}" for c in codes))

    @classmethod
    def parse(cls, text: str) -> "ClassCatalog":
        """Parse ``1=water,2=vegetation,3=built_up``."""
        codes, names = [], []
        for item in filter(None, (p.strip() for p in text.split(","))):
            code, eq, name = item.partition("=")
            try:
                codes.append(int(code))
            except ValueError:
                raise InputError(f"bad class code {code!r} in catalog {text!r}") from None
            names.append(name.strip() if eq else f"class{code.strip()}")
        return cls(tuple(codes), tuple(names))

    def __len__(self) -> int:
        return len(self.codes)

    def index(self, code: int) -> int:
        try:
            return self.codes.index(int(code))
        except ValueError:
            raise InputError(f"class code {code} is not in the catalog {self.codes}") from None

    def name(self, code: int) -> str:
        return self.names[self.index(code)]

    def to_text(self) -> str:
        return ",".join(f"{c}={n}" for c, n in zip(self.codes, self.names))


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise InputError(f"features must be 2-D, got shape {self.features.shape}")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.features.shape[0],):
            raise InputError(f"{self.labels.size} labels for {self.features.shape[0]} feature vectors")
        if not np.all(np.isfinite(self.features)):
            raise InputError("features contain non-finite values")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class MulticlassModel:
    strategy: Strategy
    catalog: ClassCatalog
    machines: tuple[BinarySvmModel, ...]
    voting: Voting = Voting.MAJORITY

    def __post_init__(self):
        n = len(self.catalog)
        expected = n * (n - 1) // 2 if self.strategy is Strategy.ONE_AGAINST_ONE else n
        if len(self.machines) != expected:
            raise InputError(f"{self.strategy.value} with {n} classes needs {expected} machines, got {len(self.machines)}")
        dims = {m.n_features for m in self.machines}
        if len(dims) != 1:
            raise InputError(f"machines disagree on feature dimensionality: {sorted(dims)}")

    @property
    def n_features(self) -> int:
        return self.machines[0].n_features

    @property
    def kernel(self) -> KernelSpec:
        return self.machines[0].kernel

    @property
    def cost(self) -> float:
        return self.machines[0].cost

    def pairs(self) -> list[tuple[int, int]]:
        """Catalog indices ``(positive, negative)`` per machine (negative is -1 for 1AA)."""
        if self.strategy is Strategy.ONE_AGAINST_ONE:
            return list(itertools.combinations(range(len(self.catalog)), 2))
        return [(i, -1) for i in range(len(self.catalog))]


def _check_dataset(dataset: LabeledDataset, catalog: ClassCatalog) -> None:
    if len(dataset) == 0:
        raise InputError("training dataset is empty")
    for code in np.unique(dataset.labels):
        if int(code) not in catalog.codes:
            raise InputError(f"training label {int(code)} is not in the catalog {catalog.codes}")
    for code, name in zip(catalog.codes, catalog.names):
        count = int(np.sum(dataset.labels == code))
        if count < 2:
            raise InputError(f"class {code} ({name}) has {count} training samples; at least 2 required")


def train_multiclass(dataset: LabeledDataset, strategy: Strategy, kernel: KernelSpec, cost: float,
                     voting: Voting = Voting.MAJORITY, seed: int = 0, catalog: ClassCatalog | None = None,
                     tolerance: float = DEFAULT_TOLERANCE, max_passes: int = DEFAULT_MAX_PASSES,
                     standardize: bool = True) -> MulticlassModel:
    """Train every binary machine of the chosen decomposition.

    One standardizer is fitted on the full training set and shared by all
    machines.  Machine ``k`` is trained with seed ``seed + k``.
    """
    strategy = Strategy(strategy)
    voting = Voting(voting)
    if catalog is None:
        catalog = ClassCatalog.from_codes(dataset.labels)
    _check_dataset(dataset, catalog)
    scaler = Standardizer.fit(dataset.features) if standardize else None
    kernel = kernel.resolve(dataset.n_features)
    x, labels = dataset.features, dataset.labels
    machines = []
    if strategy is Strategy.ONE_AGAINST_ONE:
        for k, (i, j) in enumerate(itertools.combinations(range(len(catalog)), 2)):
            ci, cj = catalog.codes[i], catalog.codes[j]
            mask = (labels == ci) | (labels == cj)
            y = np.where(labels[mask] == ci, 1.0, -1.0)
            m = train(BinaryProblem(x[mask], y, cost), kernel, tolerance, max_passes, seed + k, scaler=scaler)
            machines.append(m.tagged(ci, cj))
    else:
        for k, ci in enumerate(catalog.codes):
            y = np.where(labels == ci, 1.0, -1.0)
            m = train(BinaryProblem(x, y, cost), kernel, tolerance, max_passes, seed + k, scaler=scaler)
            machines.append(m.tagged(ci, None))
    return MulticlassModel(strategy, catalog, tuple(machines), voting)


def decision_matrix(model: MulticlassModel, x, backend: str | None = None) -> np.ndarray:
    """Decision values, one column per machine, for each row of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise InputError(f"dimensionality mismatch: model has {model.n_features} features, input shape {x.shape}")
    out = np.empty((x.shape[0], len(model.machines)))
    for k, m in enumerate(model.machines):
        out[:, k] = m.decision_function(x, backend=backend)
    return out


def vote_one_against_one(decisions, pairs: Sequence[tuple[int, int]], codes: Sequence[int],
                         voting: Voting = Voting.MAJORITY) -> np.ndarray:
    """Turn pairwise decision values into labels.

    A decision value >= 0 is a win for the pair's first class.  Majority
    voting counts wins; weighted voting sums ``|decision|``.  A shared
    maximum gives ``UNCLASSIFIED``.
    """
    d = np.atleast_2d(np.asarray(decisions, dtype=np.float64))
    n_classes = len(codes)
    scores = np.zeros((d.shape[0], n_classes))
    weighted = Voting(voting) is Voting.WEIGHTED
    for k, (i, j) in enumerate(pairs):
        col = d[:, k]
        gain = np.abs(col) if weighted else np.ones_like(col)
        pos = col >= 0
        scores[:, i] += np.where(pos, gain, 0.0)
        scores[:, j] += np.where(pos, 0.0, gain)
    best = scores.max(axis=1)
    n_best = np.sum(scores == best[:, None], axis=1)
    winner = np.asarray(codes, dtype=np.uint8)[np.argmax(scores, axis=1)]
    return np.where(n_best == 1, winner, np.uint8(UNCLASSIFIED)).astype(np.uint8)


def resolve_one_against_all(decisions, codes: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Labels and the boolean mask of claiming machines (``decision > 0``)."""
    d = np.atleast_2d(np.asarray(decisions, dtype=np.float64))
    positive = d > 0
    n_pos = positive.sum(axis=1)
    winner = np.asarray(codes, dtype=np.uint8)[np.argmax(positive, axis=1)]
    labels = np.where(n_pos == 1, winner, np.where(n_pos == 0, UNCLASSIFIED, MIXED)).astype(np.uint8)
    return labels, positive


def predict(model: MulticlassModel, x, backend: str | None = None) -> np.ndarray:
    """Strategy-appropriate labels (uint8) for each row of ``x``."""
    d = decision_matrix(model, x, backend)
    if model.strategy is Strategy.ONE_AGAINST_ONE:
        return vote_one_against_one(d, model.pairs(), model.catalog.codes, model.voting)
    return resolve_one_against_all(d, model.catalog.codes)[0]


def predict_1a1(model: MulticlassModel, x) -> int:
    if model.strategy is not Strategy.ONE_AGAINST_ONE:
        raise InputError("predict_1a1 needs a one-against-one model")
    return int(predict(model, np.asarray(x, dtype=np.float64)[None, :])[0])


def predict_1aa(model: MulticlassModel, x) -> int:
    return predict_1aa_detail(model, x)[0]


def predict_1aa_detail(model: MulticlassModel, x) -> tuple[int, tuple[int, ...]]:
    """Label plus the codes of every class whose machine claimed the point."""
    if model.strategy is not Strategy.ONE_AGAINST_ALL:
        raise InputError("predict_1aa needs a one-against-all model")
    d = decision_matrix(model, np.asarray(x, dtype=np.float64)[None, :])
    labels, positive = resolve_one_against_all(d, model.catalog.codes)
    claimed = tuple(c for c, p in zip(model.catalog.codes, positive[0]) if p)
    return int(labels[0]), claimed


def count_special(labels) -> tuple[int, int]:
    """``(unclassified, mixed)`` pixel counts of a label array or LabelMap."""
    arr = np.asarray(getattr(labels, "labels", labels))
    return int(np.count_nonzero(arr == UNCLASSIFIED)), int(np.count_nonzero(arr == MIXED))


def cross_validate_multiclass(dataset: LabeledDataset, strategies: Sequence[Strategy],
                              kernel_grid: Sequence[KernelSpec], cost_grid: Sequence[float],
                              folds: int = 3, seed: int = 0, voting: Voting = Voting.MAJORITY,
                              catalog: ClassCatalog | None = None, tolerance: float = DEFAULT_TOLERANCE,
                              max_passes: int = DEFAULT_MAX_PASSES) -> CrossValidationResult:
    """Grid search scored by fold accuracy averaged over ``strategies``.

    Unclassified and mixed predictions count as errors.
    """
    if catalog is None:
        catalog = ClassCatalog.from_codes(dataset.labels)

    def fit_score(tx, ty, vx, vy, kernel, cost, seed):
        accs = []
        for strategy in strategies:
            model = train_multiclass(LabeledDataset(tx, ty), strategy, kernel, cost, voting, seed,
                                     catalog, tolerance, max_passes)
            accs.append(float(np.mean(predict(model, vx) == vy)))
        return float(np.mean(accs))

    return grid_search(dataset.features, dataset.labels, kernel_grid, cost_grid, folds, seed, fit_score)
