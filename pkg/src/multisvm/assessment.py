"""Confusion matrices, kappa and the two-classification Z-test.

Rows of a confusion matrix are predicted categories: the N catalog classes,
then UNCLASSIFIED, then MIXED.  Columns are the N reference classes.  The two
sentinel rows count toward ``n`` and the row totals but never toward the
diagonal, so a non-decision is always an error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, InputError
from .multiclass import MIXED, UNCLASSIFIED, ClassCatalog

__all__ = [
    "Z_CRITICAL",
    "ConfusionMatrix",
    "AccuracyReport",
    "ComparisonVerdict",
    "build_confusion",
    "kappa",
    "z_test",
    "is_significant",
    "format_confusion",
]

Z_CRITICAL = 1.96


@dataclass(frozen=True)
class ConfusionMatrix:
    catalog: ClassCatalog
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        n = len(self.catalog)
        if counts.shape != (n + 2, n):
            raise InputError(f"confusion counts must have shape {(n + 2, n)}, got {counts.shape}")
        if np.any(counts < 0):
            raise InputError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_square(cls, catalog: ClassCatalog, square, unclassified=None, mixed=None) -> "ConfusionMatrix":
        """Build from an N x N class block plus optional sentinel rows."""
        n = len(catalog)
        counts = np.zeros((n + 2, n), dtype=np.int64)
        counts[:n] = np.asarray(square)
        if unclassified is not None:
            counts[n] = np.asarray(unclassified)
        if mixed is not None:
            counts[n + 1] = np.asarray(mixed)
        return cls(catalog, counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def row_labels(self) -> list[str]:
        return list(self.catalog.names) + ["unclassified", "mixed"]


@dataclass(frozen=True)
class AccuracyReport:
    n: int
    overall_accuracy: float
    chance_agreement: float
    kappa: float
    kappa_variance: float
    producer_accuracy: tuple[float, ...]
    user_accuracy: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "overall_accuracy": self.overall_accuracy,
            "chance_agreement": self.chance_agreement,
            "kappa": self.kappa,
            "kappa_variance": self.kappa_variance,
            "producer_accuracy": list(self.producer_accuracy),
            "user_accuracy": list(self.user_accuracy),
        }


@dataclass(frozen=True)
class ComparisonVerdict:
    z: float
    significant: bool

    @property
    def label(self) -> str:
        if self.z == 0:
            return "no difference"
        return "significant" if self.significant else "insignificant"


def is_significant(z: float) -> bool:
    """Two-sided 95 % rule: strictly ``|z| > 1.96``."""
    return abs(z) > Z_CRITICAL


def build_confusion(predicted, reference, catalog: ClassCatalog) -> ConfusionMatrix:
    """Cross-tabulate predicted labels at each reference pixel.

    ``predicted`` is a LabelMap or a 2-D label array; ``reference`` a
    PixelSamples with coordinates and reference class codes.
    """
    labels = np.asarray(getattr(predicted, "labels", predicted))
    if len(reference) == 0:
        raise InputError("reference sample set is empty")
    if labels.ndim != 2:
        raise InputError(f"predicted labels must be 2-D, got shape {labels.shape}")
    reference.check_bounds(*labels.shape)
    n = len(catalog)
    code_to_row = np.full(256, -1, dtype=np.int64)
    code_to_row[list(catalog.codes)] = np.arange(n)
    code_to_row[UNCLASSIFIED] = n
    code_to_row[MIXED] = n + 1
    col_lookup = np.full(256, -1, dtype=np.int64)
    col_lookup[list(catalog.codes)] = np.arange(n)

    ref = reference.classes
    out_of_range = (ref < 0) | (ref > 255)
    cols = np.where(out_of_range, -1, col_lookup[np.clip(ref, 0, 255)])
    if np.any(cols < 0):
        k = int(np.argmax(cols < 0))
        raise InputError(f"reference class {int(ref[k])} at row={reference.rows[k]}, col={reference.cols[k]} "
                         f"is not in the catalog {catalog.codes}")
    pred = labels[reference.rows, reference.cols].astype(np.int64)
    rows = code_to_row[pred]
    if np.any(rows < 0):
        k = int(np.argmax(rows < 0))
        raise InputError(f"predicted code {int(pred[k])} at row={reference.rows[k]}, col={reference.cols[k]} "
                         f"is neither a catalog class nor a sentinel")
    counts = np.zeros((n + 2, n), dtype=np.int64)
    np.add.at(counts, (rows, cols), 1)
    return ConfusionMatrix(catalog, counts)


def kappa(matrix: ConfusionMatrix) -> AccuracyReport:
    """Overall accuracy, kappa and its large-sample variance.

    ``p_o`` is the diagonal share, ``p_e = sum_i row_i * col_i / n**2`` over
    class rows, and ``var = p_o (1 - p_o) / (n (1 - p_e)**2)``.
    """
    n = matrix.n
    if n < 1:
        raise InputError("confusion matrix is empty")
    k = len(matrix.catalog)
    counts = matrix.counts
    rows = counts.sum(axis=1).astype(np.float64)
    cols = counts.sum(axis=0).astype(np.float64)
    diag = np.diag(counts[:k]).astype(np.float64)
    p_o = float(diag.sum() / n)
    p_e = float(np.dot(rows[:k], cols) / (float(n) * n))
    if p_e >= 1.0:
        raise DegenerateError("chance agreement is 1; kappa is undefined for this matrix")
    kap = (p_o - p_e) / (1.0 - p_e)
    var = p_o * (1.0 - p_o) / (n * (1.0 - p_e) ** 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        producer = np.where(cols > 0, diag / np.where(cols > 0, cols, 1), np.nan)
        user = np.where(rows[:k] > 0, diag / np.where(rows[:k] > 0, rows[:k], 1), np.nan)
    return AccuracyReport(n, p_o, p_e, float(kap), float(var),
                          tuple(float(v) for v in producer), tuple(float(v) for v in user))


def z_test(a: AccuracyReport, b: AccuracyReport) -> ComparisonVerdict:
    """``z = (kappa_a - kappa_b) / sqrt(var_a + var_b)``."""
    va, vb = a.kappa_variance, b.kappa_variance
    if not (math.isfinite(va) and math.isfinite(vb)) or va < 0 or vb < 0:
        raise InputError("kappa variances must be finite and non-negative")
    diff = a.kappa - b.kappa
    total = va + vb
    if total == 0:
        if diff == 0:
            return ComparisonVerdict(0.0, False)
        raise DegenerateError(f"both kappa variances are zero but kappas differ ({a.kappa} vs {b.kappa})")
    z = diff / math.sqrt(total)
    return ComparisonVerdict(z, is_significant(z))


def format_confusion(matrix: ConfusionMatrix) -> str:
    names = list(matrix.catalog.names)
    width = max(12, *(len(s) + 2 for s in matrix.row_labels))
    lines = ["predicted \\ reference".ljust(width) + "".join(n.rjust(width) for n in names) + "total".rjust(width)]
    for label, row in zip(matrix.row_labels, matrix.counts):
        lines.append(label.ljust(width) + "".join(str(v).rjust(width) for v in row) + str(row.sum()).rjust(width))
    lines.append("total".ljust(width) + "".join(str(v).rjust(width) for v in matrix.col_totals)
                 + str(matrix.n).rjust(width))
    return "\n".join(lines)
