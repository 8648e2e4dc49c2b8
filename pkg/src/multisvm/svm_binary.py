"""Two-class soft-margin SVM trained with SMO on the dual problem."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _smo
from .errors import ConvergenceError, InputError
from .kernels import KernelSpec, gram_matrix, kernel_expansion

__all__ = [
    "Standardizer",
    "BinaryProblem",
    "DualSolution",
    "BinarySvmModel",
    "CrossValidationResult",
    "solve_dual",
    "dual_objective",
    "train",
    "decision_value",
    "decision_values",
    "stratified_folds",
    "grid_search",
    "cross_validate",
]

DEFAULT_TOLERANCE = 1e-3
DEFAULT_MAX_PASSES = 100
# size of the pre-drawn pool of random start offsets for the SMO fallback scans
_DRAW_POOL = 4096


@dataclass(frozen=True)
class Standardizer:
    """Per-band affine scaling ``(x - mean) / std``."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features) -> "Standardizer":
        x = np.asarray(features, dtype=np.float64)
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        # constant bands are centred but not scaled
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    @classmethod
    def identity(cls, n_features: int) -> "Standardizer":
        return cls(np.zeros(n_features), np.ones(n_features))

    def transform(self, features) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std


def _as_features(samples, name="samples") -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise InputError(f"{name} must be a nonempty 2-D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError(f"{name} contains non-finite values")
    return x


@dataclass
class BinaryProblem:
    samples: np.ndarray
    labels: np.ndarray
    cost: float = 1.0

    def __post_init__(self):
        self.samples = _as_features(self.samples)
        labels = np.asarray(self.labels)
        if labels.shape != (self.samples.shape[0],):
            raise InputError(f"{labels.shape[0] if labels.ndim else 0} labels for {self.samples.shape[0]} samples")
        if not np.all(np.isin(labels, (-1, 1))):
            raise InputError("binary labels must be -1 or +1")
        if not (np.any(labels == 1) and np.any(labels == -1)):
            raise InputError("binary problem needs at least one sample of each class")
        self.labels = labels.astype(np.float64)
        if not (np.isfinite(self.cost) and self.cost > 0):
            raise InputError(f"cost must be finite and > 0, got {self.cost!r}")
        self.cost = float(self.cost)


@dataclass
class DualSolution:
    alpha: np.ndarray
    bias: float
    steps: int
    kkt_gap: float


@dataclass(frozen=True)
class BinarySvmModel:
    """A trained two-class machine.

    ``dual_coefs[i] = alpha_i * y_i`` for each retained support vector.  The
    decision function is ``sum_i dual_coefs[i] * K(sv_i, scale(x)) + bias``.
    Support vectors are stored in scaled space.
    """

    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    kernel: KernelSpec
    cost: float
    scaler: Standardizer | None = None
    positive_class: int | None = None
    negative_class: int | None = None

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, x, backend: str | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        x = _as_features(x[None, :] if x.ndim == 1 else x, "x")
        if x.shape[1] != self.n_features:
            raise InputError(f"dimensionality mismatch: model has {self.n_features} features, input has {x.shape[1]}")
        if self.scaler is not None:
            x = self.scaler.transform(x)
        return kernel_expansion(self.kernel, x, self.support_vectors, self.dual_coefs, self.bias, backend=backend)

    def tagged(self, positive_class, negative_class=None) -> "BinarySvmModel":
        return BinarySvmModel(
            self.support_vectors, self.dual_coefs, self.bias, self.kernel, self.cost,
            self.scaler, positive_class, negative_class,
        )


def dual_objective(alpha, gram, labels) -> float:
    """``sum(alpha) - 0.5 * (alpha*y)^T K (alpha*y)``; the quantity SMO maximizes."""
    ay = np.asarray(alpha) * np.asarray(labels)
    return float(np.sum(alpha) - 0.5 * ay @ gram @ ay)


def solve_dual(gram, labels, cost: float, tolerance: float = DEFAULT_TOLERANCE,
               max_passes: int = DEFAULT_MAX_PASSES, seed: int = 0) -> DualSolution:
    """Run SMO on a precomputed kernel matrix.

    Raises ConvergenceError if the KKT gap is still above ``2 * tolerance``
    after ``max_passes * n`` pair updates.
    """
    if not tolerance > 0:
        raise InputError(f"tolerance must be > 0, got {tolerance!r}")
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    y = np.ascontiguousarray(labels, dtype=np.float64)
    n = y.shape[0]
    draws = np.random.default_rng(seed).random(_DRAW_POOL)
    max_steps = int(max_passes) * n
    alpha, theta, steps, gap, converged = _smo.smo_solve(gram, y, float(cost), float(tolerance), max_steps, draws)
    if not converged:
        raise ConvergenceError(
            f"SMO did not converge within {max_steps} updates (KKT gap {gap:.3g} > {2 * tolerance:.3g})",
            {"alpha": alpha, "bias": -theta, "iterations": int(steps), "kkt_gap": float(gap)},
        )
    return DualSolution(alpha, -float(theta), int(steps), float(gap))


def train(problem: BinaryProblem, kernel: KernelSpec, tolerance: float = DEFAULT_TOLERANCE,
          max_passes: int = DEFAULT_MAX_PASSES, seed: int = 0,
          scaler: Standardizer | None = None, standardize: bool = False) -> BinarySvmModel:
    """Train one machine.

    With ``standardize=True`` a :class:`Standardizer` is fitted on the
    problem's samples; alternatively pass a pre-fitted ``scaler``.
    """
    x = problem.samples
    if standardize and scaler is None:
        scaler = Standardizer.fit(x)
    if scaler is not None:
        x = scaler.transform(x)
    kernel = kernel.resolve(x.shape[1])
    gram = gram_matrix(kernel, x)
    sol = solve_dual(gram, problem.labels, problem.cost, tolerance, max_passes, seed)
    keep = sol.alpha > 0
    return BinarySvmModel(
        support_vectors=np.ascontiguousarray(x[keep]),
        dual_coefs=sol.alpha[keep] * problem.labels[keep],
        bias=sol.bias,
        kernel=kernel,
        cost=problem.cost,
        scaler=scaler,
    )


def decision_value(model: BinarySvmModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputError("decision_value expects a single feature vector")
    return float(model.decision_function(x[None, :])[0])


def decision_values(model: BinarySvmModel, xs, backend: str | None = None) -> np.ndarray:
    return model.decision_function(xs, backend=backend)


def stratified_folds(labels, folds: int, seed: int = 0) -> list[np.ndarray]:
    """Shuffle each class separately and deal its indices round-robin into folds."""
    labels = np.asarray(labels)
    if folds < 2:
        raise InputError(f"need at least 2 folds, got {folds}")
    classes, counts = np.unique(labels, return_counts=True)
    if counts.min() < folds:
        short = classes[np.argmin(counts)]
        raise InputError(f"class {short!r} has {counts.min()} samples, fewer than {folds} folds")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(folds)]
    offset = 0
    for c in classes:
        idx = rng.permutation(np.flatnonzero(labels == c))
        for k, i in enumerate(idx):
            buckets[(k + offset) % folds].append(int(i))
        offset += len(idx)
    return [np.sort(np.array(b, dtype=np.int64)) for b in buckets]


@dataclass
class CrossValidationResult:
    kernel: KernelSpec
    cost: float
    table: list[dict] = field(default_factory=list)

    @property
    def best_accuracy(self) -> float:
        for row in self.table:
            if row["kernel"] == self.kernel and row["cost"] == self.cost:
                return row["mean_accuracy"]
        raise KeyError("best entry missing from table")


FitScore = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray, KernelSpec, float, int], float]


def grid_search(features, labels, kernel_grid: Sequence[KernelSpec], cost_grid: Sequence[float],
                folds: int, seed: int, fit_score: FitScore) -> CrossValidationResult:
    """Stratified k-fold search over ``kernel_grid x cost_grid``.

    ``fit_score(train_x, train_y, test_x, test_y, kernel, cost, seed)``
    returns the fold accuracy.  The best mean wins; ties go to the smaller
    cost, then to the earlier grid entry.  A cell whose training fails to
    converge in any fold is recorded with ``converged=False`` and skipped;
    if every cell fails the last ConvergenceError is re-raised.
    """
    if not kernel_grid or not cost_grid:
        raise InputError("kernel and cost grids must be nonempty")
    x = _as_features(features)
    y = np.asarray(labels)
    parts = stratified_folds(y, folds, seed)
    table = []
    failure: ConvergenceError | None = None
    for kernel in kernel_grid:
        for cost in cost_grid:
            accs = []
            try:
                for f, test_idx in enumerate(parts):
                    train_idx = np.concatenate([p for g, p in enumerate(parts) if g != f])
                    accs.append(fit_score(x[train_idx], y[train_idx], x[test_idx], y[test_idx],
                                          kernel, float(cost), seed + f))
            except ConvergenceError as exc:
                failure = exc.add_context(f"cv kernel={kernel.label} cost={cost:g}")
                table.append({"kernel": kernel, "cost": float(cost), "fold_accuracy": accs,
                              "mean_accuracy": float("nan"), "converged": False})
                continue
            table.append({"kernel": kernel, "cost": float(cost), "fold_accuracy": accs,
                          "mean_accuracy": float(np.mean(accs)), "converged": True})
    candidates = [i for i, row in enumerate(table) if row["converged"]]
    if not candidates:
        raise failure
    order = sorted(candidates, key=lambda i: (-table[i]["mean_accuracy"], table[i]["cost"], i))
    best = table[order[0]]
    return CrossValidationResult(best["kernel"], best["cost"], table)


def _binary_fit_score(standardize, tolerance, max_passes):
    def fit_score(tx, ty, vx, vy, kernel, cost, seed):
        model = train(BinaryProblem(tx, ty, cost), kernel, tolerance, max_passes, seed, standardize=standardize)
        pred = np.where(model.decision_function(vx) >= 0, 1.0, -1.0)
        return float(np.mean(pred == vy))
    return fit_score


def cross_validate(dataset: BinaryProblem, kernel_grid: Sequence[KernelSpec], cost_grid: Sequence[float],
                   folds: int = 5, seed: int = 0, tolerance: float = DEFAULT_TOLERANCE,
                   max_passes: int = DEFAULT_MAX_PASSES, standardize: bool = True) -> CrossValidationResult:
    """Pick the (kernel, cost) pair with the best mean stratified k-fold accuracy."""
    return grid_search(dataset.samples, dataset.labels, kernel_grid, cost_grid, folds, seed,
                       _binary_fit_score(standardize, tolerance, max_passes))
