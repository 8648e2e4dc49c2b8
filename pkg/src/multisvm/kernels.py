"""Kernel functions and kernel matrices.

Four kernels are supported::

    linear      x . z
    quadratic   (x . z + offset) ** 2
    polynomial  (x . z + offset) ** degree
    rbf         exp(-gamma * ||x - z||**2)

Quadratic is evaluated through the polynomial path with ``degree=2``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

from ._accel import JIT_ENABLED, njit
from .errors import InputError

__all__ = [
    "KernelKind",
    "KernelSpec",
    "evaluate",
    "gram_matrix",
    "cross_kernel",
    "kernel_expansion",
    "DEFAULT_KERNELS",
]

_LINEAR, _POLY, _RBF = 0, 1, 2


class KernelKind(str, enum.Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"
    POLYNOMIAL = "polynomial"
    RBF = "rbf"


@dataclass(frozen=True)
class KernelSpec:
    """Which kernel to use and its parameters.

    Parameters that do not apply to ``kind`` are ignored.  ``gamma=None``
    means "1 / number of features", filled in by :meth:`resolve` once the
    feature dimensionality is known.
    """

    kind: KernelKind = KernelKind.LINEAR
    degree: int = 3
    offset: float = 1.0
    gamma: float | None = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", KernelKind(self.kind))
        except ValueError:
            raise InputError(f"unknown kernel kind {self.kind!r}") from None
        if self.kind is KernelKind.QUADRATIC:
            object.__setattr__(self, "degree", 2)
        if int(self.degree) != self.degree or self.degree < 1:
            raise InputError(f"polynomial degree must be a positive integer, got {self.degree!r}")
        object.__setattr__(self, "degree", int(self.degree))
        if not np.isfinite(self.offset) or self.offset < 0:
            raise InputError(f"kernel offset must be finite and >= 0, got {self.offset!r}")
        if self.gamma is not None and not (np.isfinite(self.gamma) and self.gamma > 0):
            raise InputError(f"rbf gamma must be finite and > 0, got {self.gamma!r}")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(KernelKind.LINEAR)

    @classmethod
    def quadratic(cls, offset: float = 1.0) -> "KernelSpec":
        return cls(KernelKind.QUADRATIC, degree=2, offset=offset)

    @classmethod
    def polynomial(cls, degree: int = 3, offset: float = 1.0) -> "KernelSpec":
        return cls(KernelKind.POLYNOMIAL, degree=degree, offset=offset)

    @classmethod
    def rbf(cls, gamma: float | None = None) -> "KernelSpec":
        return cls(KernelKind.RBF, gamma=gamma)

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        """Parse ``kind[:key=value,...]``, e.g. ``rbf:gamma=0.5`` or ``polynomial:3``.

        A bare number after the colon is the degree for polynomial kernels and
        gamma for rbf.
        """
        kind, _, rest = text.strip().partition(":")
        kind = kind.strip().lower()
        aliases = {"poly": "polynomial", "gaussian": "rbf", "quad": "quadratic"}
        kind = aliases.get(kind, kind)
        params: dict = {}
        for item in filter(None, (p.strip() for p in rest.split(","))):
            key, eq, value = item.partition("=")
            if not eq:
                key, value = ("degree" if kind == "polynomial" else "gamma"), key
            key = key.strip()
            if key not in ("degree", "offset", "gamma"):
                raise InputError(f"unknown kernel parameter {key!r} in {text!r}")
            try:
                params[key] = float(value)
            except ValueError:
                raise InputError(f"kernel parameter {key!r} is not a number in {text!r}") from None
        return cls(kind, **params)

    @property
    def label(self) -> str:
        if self.kind is KernelKind.POLYNOMIAL:
            return f"polynomial{self.degree}"
        return self.kind.value

    def resolve(self, n_features: int) -> "KernelSpec":
        """Return a copy with the default rbf gamma filled in."""
        if self.kind is KernelKind.RBF and self.gamma is None:
            return replace(self, gamma=1.0 / n_features)
        return self

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "degree": self.degree, "offset": self.offset, "gamma": self.gamma}

    def _params(self):
        if self.kind is KernelKind.LINEAR:
            return _LINEAR, 1, 0.0, 0.0
        if self.kind is KernelKind.RBF:
            if self.gamma is None:
                raise InputError("rbf gamma unresolved; call KernelSpec.resolve(n_features) first")
            return _RBF, 1, 0.0, float(self.gamma)
        return _POLY, self.degree, float(self.offset), 0.0


DEFAULT_KERNELS = (
    KernelSpec.linear(),
    KernelSpec.quadratic(),
    KernelSpec.polynomial(3),
    KernelSpec.rbf(),
)


@njit
def _value(code, degree, offset, gamma, a, i, b, j):
    """Kernel between rows ``a[i]`` and ``b[j]`` (indexed, no row views)."""
    s = 0.0
    if code == 2:
        for k in range(a.shape[1]):
            d = a[i, k] - b[j, k]
            s += d * d
        return np.exp(-gamma * s)
    for k in range(a.shape[1]):
        s += a[i, k] * b[j, k]
    if code == 1:
        return (s + offset) ** degree
    return s


@njit
def _cross_loops(code, degree, offset, gamma, a, b):
    out = np.empty((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            out[i, j] = _value(code, degree, offset, gamma, a, i, b, j)
    return out


@njit
def _gram_loops(code, degree, offset, gamma, a):
    n = a.shape[0]
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            v = _value(code, degree, offset, gamma, a, i, a, j)
            out[i, j] = v
            out[j, i] = v
    return out


def _cross_numpy(code, degree, offset, gamma, a, b):
    if code == _RBF:
        return np.exp(-gamma * cdist(a, b, "sqeuclidean"))
    dots = a @ b.T
    if code == _POLY:
        return (dots + offset) ** degree
    return dots


def _as_matrix(xs, name="xs") -> np.ndarray:
    arr = np.asarray(xs, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InputError(f"{name} must be a nonempty list of feature vectors, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


def _use_jit(backend: str | None) -> bool:
    if backend is None:
        return JIT_ENABLED
    if backend not in ("numba", "numpy"):
        raise InputError(f"unknown backend {backend!r}")
    return backend == "numba"


def evaluate(spec: KernelSpec, x, z) -> float:
    """Kernel value for a single pair of feature vectors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    z = np.asarray(z, dtype=np.float64).ravel()
    if x.shape != z.shape:
        raise InputError(f"dimensionality mismatch: {x.shape[0]} vs {z.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
        raise InputError("feature vectors must be finite")
    spec = spec.resolve(x.shape[0])
    return float(_value(*spec._params(), x[None, :], 0, z[None, :], 0))


def gram_matrix(spec: KernelSpec, xs, backend: str | None = None) -> np.ndarray:
    """Symmetric matrix ``G[i, j] = evaluate(spec, xs[i], xs[j])``.

    The upper triangle is computed and mirrored, so the result is exactly
    symmetric on either backend.
    """
    xs = _as_matrix(xs)
    params = spec.resolve(xs.shape[1])._params()
    if _use_jit(backend):
        return _gram_loops(*params, xs)
    g = _cross_numpy(*params, xs, xs)
    upper = np.triu(g)
    return upper + np.triu(g, 1).T


def cross_kernel(spec: KernelSpec, a, b, backend: str | None = None) -> np.ndarray:
    """Rectangular kernel matrix ``K[i, j] = evaluate(spec, a[i], b[j])``."""
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise InputError(f"dimensionality mismatch: {a.shape[1]} vs {b.shape[1]}")
    params = spec.resolve(a.shape[1])._params()
    if _use_jit(backend):
        return _cross_loops(*params, a, b)
    return _cross_numpy(*params, a, b)


@njit
def _expansion_loops(code, degree, offset, gamma, x, sv, coefs, bias):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        s = 0.0
        for j in range(sv.shape[0]):
            s += coefs[j] * _value(code, degree, offset, gamma, x, i, sv, j)
        out[i] = s + bias
    return out


def kernel_expansion(spec: KernelSpec, x, sv, coefs, bias: float = 0.0, backend: str | None = None) -> np.ndarray:
    """``sum_j coefs[j] * K(x[i], sv[j]) + bias`` for every row of ``x``.

    Each row is reduced independently in a fixed order, so a row's value does
    not depend on which other rows are in the batch.
    """
    x = _as_matrix(x, "x")
    sv = _as_matrix(sv, "sv")
    if x.shape[1] != sv.shape[1]:
        raise InputError(f"dimensionality mismatch: {x.shape[1]} vs {sv.shape[1]}")
    coefs = np.ascontiguousarray(coefs, dtype=np.float64)
    params = spec.resolve(x.shape[1])._params()
    if _use_jit(backend):
        return _expansion_loops(*params, x, sv, coefs, float(bias))
    return _cross_numpy(*params, x, sv) @ coefs + bias
