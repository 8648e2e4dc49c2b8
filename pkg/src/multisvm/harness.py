"""Experiment orchestration and the synthetic scene generator.

``run_experiment`` repeats the comparison for every configured kernel:
cross-validate C, train both decompositions, classify the raster, assess
both label maps against the test pixels and Z-test the two kappas.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .assessment import (
    AccuracyReport,
    ComparisonVerdict,
    ConfusionMatrix,
    build_confusion,
    format_confusion,
    kappa,
    z_test,
)
from .errors import InputError, MultiSvmError
from .kernels import DEFAULT_KERNELS, KernelKind, KernelSpec
from .modelfile import save_model
from .multiclass import (
    MIXED,
    ClassCatalog,
    LabeledDataset,
    MulticlassModel,
    Strategy,
    Voting,
    count_special,
    cross_validate_multiclass,
    decision_matrix,
    train_multiclass,
)
from .raster_io import (
    LabelMap,
    PixelSamples,
    RasterImage,
    atomic_write,
    classify_raster,
    extract_samples,
    read_raster,
    read_samples,
    write_labelmap,
    write_raster,
    write_samples,
)
from .svm_binary import DEFAULT_MAX_PASSES, DEFAULT_TOLERANCE

__all__ = [
    "SCENARIOS",
    "ExperimentConfig",
    "StrategyResult",
    "KernelComparison",
    "ComparisonReport",
    "generate_synthetic",
    "write_scene",
    "run_experiment",
]

log = logging.getLogger(__name__)

STRATEGIES = (Strategy.ONE_AGAINST_ONE, Strategy.ONE_AGAINST_ALL)
DEFAULT_COSTS = (0.1, 1.0, 10.0, 100.0)
# rbf kernels without an explicit gamma are cross-validated over these multiples of 1/bands
RBF_GAMMA_SCALES = (0.25, 1.0, 4.0)

SCENARIOS = {
    "overlap": dict(rows=128, cols=128, n_classes=3, band_count=6, class_separation=2.0,
                    overlap_fraction=0.3, seed=42),
    "separated": dict(rows=128, cols=128, n_classes=3, band_count=6, class_separation=10.0,
                      overlap_fraction=0.1, seed=42),
}


def generate_synthetic(rows: int, cols: int, n_classes: int, band_count: int, class_separation: float,
                       overlap_fraction: float, seed: int, train_per_class: int = 40,
                       test_per_class: int = 100, return_truth: bool = False):
    """Random scene with Gaussian class signatures.

    Classes occupy equal vertical stripes; ``overlap_fraction`` of the pixels
    are then reassigned to a random other class, interleaving the regions.
    Each pixel is ``mean[class] + N(0, I)``.  Class means sit on a regular
    simplex with pairwise distance ``class_separation`` (on a line along band
    1 if there are more classes than bands).

    Returns ``(raster, train, test)`` (plus the true label array with
    ``return_truth``); train and test pixels are disjoint.
    """
    for name, v in (("rows", rows), ("cols", cols), ("band_count", band_count)):
        if int(v) != v or v < 1:
            raise InputError(f"{name} must be a positive integer, got {v!r}")
    if int(n_classes) != n_classes or not 2 <= n_classes <= 254:
        raise InputError(f"n_classes must be an integer in 2..254, got {n_classes!r}")
    if not (math.isfinite(class_separation) and class_separation >= 0):
        raise InputError(f"class_separation must be finite and >= 0, got {class_separation!r}")
    if not 0.0 <= overlap_fraction <= 1.0:
        raise InputError(f"overlap_fraction must lie in [0, 1], got {overlap_fraction!r}")
    if train_per_class < 2 or test_per_class < 1:
        raise InputError("need at least 2 training and 1 test pixel per class")
    rng = np.random.default_rng(seed)
    stripe = (np.arange(cols) * n_classes) // cols
    truth = np.broadcast_to(stripe, (rows, cols)).copy()
    moved = rng.random((rows, cols)) < overlap_fraction
    shift = rng.integers(1, n_classes, size=(rows, cols))
    truth = np.where(moved, (truth + shift) % n_classes, truth)

    means = np.zeros((n_classes, band_count))
    if n_classes <= band_count:
        means[np.arange(n_classes), np.arange(n_classes)] = class_separation / math.sqrt(2.0)
    else:
        means[:, 0] = class_separation * np.arange(n_classes)
    data = means[truth].transpose(2, 0, 1) + rng.standard_normal((band_count, rows, cols))
    raster = RasterImage(data.astype(np.float32), [f"b{i + 1}" for i in range(band_count)])

    need = train_per_class + test_per_class
    train_idx, test_idx, train_cls, test_cls = [], [], [], []
    flat = truth.ravel()
    for c in range(n_classes):
        pool = np.flatnonzero(flat == c)
        if pool.size < need:
            raise InputError(f"class {c + 1} covers {pool.size} pixels, fewer than the {need} requested samples")
        pick = rng.choice(pool, size=need, replace=False)
        train_idx.append(np.sort(pick[:train_per_class]))
        test_idx.append(np.sort(pick[train_per_class:]))
        train_cls.append(np.full(train_per_class, c + 1))
        test_cls.append(np.full(test_per_class, c + 1))

    def samples(idx, cls):
        idx = np.concatenate(idx)
        return PixelSamples(idx // cols, idx % cols, np.concatenate(cls))

    out = (raster, samples(train_idx, train_cls), samples(test_idx, test_cls))
    if return_truth:
        return out + ((truth + 1).astype(np.uint8),)
    return out


def write_scene(directory, name: str = "scene", **params) -> tuple[Path, Path, Path]:
    """Generate a synthetic scene and write ``name.hdr``, ``name_train.csv`` and ``name_test.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    raster, train, test = generate_synthetic(**params)
    paths = (directory / f"{name}.hdr", directory / f"{name}_train.csv", directory / f"{name}_test.csv")
    write_raster(raster, paths[0])
    write_samples(train, paths[1])
    write_samples(test, paths[2])
    return paths


@dataclass
class ExperimentConfig:
    raster: Path
    train: Path
    test: Path
    output_dir: Path
    catalog: ClassCatalog | None = None
    kernels: Sequence[KernelSpec] = DEFAULT_KERNELS
    costs: Sequence[float] = DEFAULT_COSTS
    folds: int = 3
    voting: Voting = Voting.MAJORITY
    seed: int = 0
    workers: int = 1
    tolerance: float = DEFAULT_TOLERANCE
    max_passes: int = DEFAULT_MAX_PASSES

    def __post_init__(self):
        self.raster, self.train, self.test, self.output_dir = (
            Path(p) for p in (self.raster, self.train, self.test, self.output_dir))
        self.kernels = tuple(self.kernels)
        self.costs = tuple(float(c) for c in self.costs)
        self.voting = Voting(self.voting)
        if not self.kernels:
            raise InputError("kernel list is empty")
        if not self.costs or any(not (math.isfinite(c) and c > 0) for c in self.costs):
            raise InputError(f"cost grid must be nonempty with positive entries, got {self.costs}")
        labels = [k.label for k in self.kernels]
        if len(set(labels)) != len(labels):
            raise InputError(f"duplicate kernels in {labels}")


@dataclass
class StrategyResult:
    strategy: Strategy
    unclassified: int
    mixed: int
    confusion: ConfusionMatrix
    accuracy: AccuracyReport
    labelmap_path: str
    model_path: str
    mixed_breakdown: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "unclassified": self.unclassified,
            "mixed": self.mixed,
            "mixed_breakdown": dict(sorted(self.mixed_breakdown.items())),
            "confusion": self.confusion.counts.tolist(),
            "confusion_rows": self.confusion.row_labels,
            **self.accuracy.to_dict(),
            "labelmap": self.labelmap_path,
            "model": self.model_path,
        }


@dataclass
class KernelComparison:
    kernel: KernelSpec
    cost: float
    cv_accuracy: float
    one_against_one: StrategyResult
    one_against_all: StrategyResult
    verdict: ComparisonVerdict
    cv_table: list[dict] = field(default_factory=list)

    @property
    def label(self) -> str:
        return self.kernel.label

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.to_dict(),
            "cost": self.cost,
            "cv_accuracy": self.cv_accuracy,
            "1a1": self.one_against_one.to_dict(),
            "1aa": self.one_against_all.to_dict(),
            "z": self.verdict.z,
            "significant": self.verdict.significant,
            "verdict": self.verdict.label,
            "cv_table": [
                {"kernel": row["kernel"].to_dict(), "cost": row["cost"], "mean_accuracy": row["mean_accuracy"],
                 "converged": row["converged"]}
                for row in self.cv_table
            ],
        }


@dataclass
class ComparisonReport:
    catalog: ClassCatalog
    seed: int
    rows: list[KernelComparison]

    def to_dict(self) -> dict:
        return {
            "format": "multisvm-report v1",
            "catalog": self.catalog.to_text(),
            "seed": self.seed,
            "kernels": {r.label: r.to_dict() for r in self.rows},
        }

    def to_json(self) -> str:
        return json.dumps(_json_safe(self.to_dict()), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        out = ["Unclassified and mixed pixels", ""]
        out.append(f"{'kernel':<14}{'type':<16}{'1A1':>8}{'1AA':>8}")
        for r in self.rows:
            a, b = r.one_against_one, r.one_against_all
            out.append(f"{r.label:<14}{'unclassified':<16}{a.unclassified:>8}{b.unclassified:>8}")
            out.append(f"{'':<14}{'mixed':<16}{a.mixed:>8}{b.mixed:>8}")
        out += ["", "Kappa comparison (|Z| > 1.96 is significant)", ""]
        out.append(f"{'kernel':<14}{'cost':>8}{'1A1':>8}{'1AA':>8}{'Z':>9}  verdict")
        for r in self.rows:
            out.append(f"{r.label:<14}{r.cost:>8g}{r.one_against_one.accuracy.kappa:>8.3f}"
                       f"{r.one_against_all.accuracy.kappa:>8.3f}{r.verdict.z:>9.3f}  {r.verdict.label}")
        for r in self.rows:
            for res in (r.one_against_one, r.one_against_all):
                acc = res.accuracy
                out += ["", f"{r.label} / {res.strategy.value}: overall accuracy {acc.overall_accuracy:.4f}, "
                            f"kappa {acc.kappa:.4f} (variance {acc.kappa_variance:.3g}), n={acc.n}",
                        format_confusion(res.confusion)]
                if res.mixed_breakdown:
                    parts = ", ".join(f"{k}: {v}" for k, v in sorted(res.mixed_breakdown.items()))
                    out.append(f"mixed pixels by claiming classes: {parts}")
        return "\n".join(out) + "\n"


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _kernel_grid(kernel: KernelSpec, n_features: int) -> list[KernelSpec]:
    if kernel.kind is KernelKind.RBF and kernel.gamma is None:
        return [replace(kernel, gamma=s / n_features) for s in RBF_GAMMA_SCALES]
    return [kernel.resolve(n_features)]


def _mixed_breakdown(model: MulticlassModel, image: RasterImage, labelmap: LabelMap) -> dict[str, int]:
    idx = np.flatnonzero(labelmap.labels.ravel() == MIXED)
    if idx.size == 0:
        return {}
    feats = image.pixel_features()[idx]
    positive = decision_matrix(model, feats) > 0
    keys, counts = np.unique(positive, axis=0, return_counts=True)
    codes = model.catalog.codes
    return {"+".join(str(c) for c, p in zip(codes, key) if p): int(n) for key, n in zip(keys, counts)}


def _load_inputs(config: ExperimentConfig):
    for name in ("raster", "train", "test"):
        path = getattr(config, name)
        if not path.exists():
            raise InputError(f"{name} path {path} does not exist")
    test = read_samples(config.test)
    if not isinstance(test, PixelSamples):
        raise InputError(f"test samples {config.test} must use the row,col,class layout")
    if len(test) == 0:
        raise InputError(f"test sample set {config.test} is empty")
    train = read_samples(config.train)
    if len(train) == 0:
        raise InputError(f"training sample set {config.train} is empty")
    image = read_raster(config.raster)
    test.check_bounds(image.rows, image.cols)
    dataset = extract_samples(image, train) if isinstance(train, PixelSamples) else train
    if dataset.n_features != image.bands:
        raise InputError(f"training features have {dataset.n_features} bands, raster has {image.bands}")
    catalog = config.catalog or ClassCatalog.from_codes(np.concatenate([dataset.labels, test.classes]))
    return image, dataset, test, catalog


def run_experiment(config: ExperimentConfig) -> ComparisonReport:
    """Run the full comparison and write label maps, models and reports to ``output_dir``."""
    image, dataset, test, catalog = _load_inputs(config)
    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for kernel in config.kernels:
        label = kernel.label
        try:
            cv = cross_validate_multiclass(dataset, STRATEGIES, _kernel_grid(kernel, image.bands), config.costs,
                                           config.folds, config.seed, config.voting, catalog,
                                           config.tolerance, config.max_passes)
        except MultiSvmError as exc:
            raise exc.add_context(f"kernel={label} cross-validation")
        log.info("%s: selected cost=%g (cv accuracy %.4f)", label, cv.cost, cv.best_accuracy)
        results = {}
        for strategy in STRATEGIES:
            try:
                model = train_multiclass(dataset, strategy, cv.kernel, cv.cost, config.voting, config.seed,
                                         catalog, config.tolerance, config.max_passes)
                labels = classify_raster(model, image, workers=config.workers)
                stem = f"{label}_{strategy.short}"
                write_labelmap(labels, out_dir / f"labels_{stem}.hdr")
                save_model(model, out_dir / f"model_{stem}.txt")
                confusion = build_confusion(labels, test, catalog)
                accuracy = kappa(confusion)
            except MultiSvmError as exc:
                raise exc.add_context(f"kernel={label} strategy={strategy.short}")
            unclassified, mixed = count_special(labels)
            breakdown = _mixed_breakdown(model, image, labels) if strategy is Strategy.ONE_AGAINST_ALL else {}
            results[strategy] = StrategyResult(strategy, unclassified, mixed, confusion, accuracy,
                                               f"labels_{stem}.hdr", f"model_{stem}.txt", breakdown)
        try:
            verdict = z_test(results[Strategy.ONE_AGAINST_ONE].accuracy, results[Strategy.ONE_AGAINST_ALL].accuracy)
        except MultiSvmError as exc:
            raise exc.add_context(f"kernel={label} z-test")
        rows.append(KernelComparison(cv.kernel, cv.cost, cv.best_accuracy, results[Strategy.ONE_AGAINST_ONE],
                                     results[Strategy.ONE_AGAINST_ALL], verdict, cv.table))
    report = ComparisonReport(catalog, config.seed, rows)
    atomic_write(out_dir / "report.txt", report.to_text().encode("utf-8"))
    atomic_write(out_dir / "report.json", report.to_json().encode("utf-8"))
    return report
