"""Line-oriented text serialization of multiclass models.

Layout::

    multisvm-model v1
    strategy: one-against-one
    voting: majority
    classes: 3
    class: 1 water
    ...
    features: 6
    machines: 3
    machine: 1
    positive: 1
    negative: 2              ("rest" for one-against-all)
    kernel: rbf
    degree: 3
    offset: 1
    gamma: 0.16666666666666666
    cost: 10
    bias: -0.123...
    means: m1 m2 ...         ("none" when unscaled)
    stds: s1 s2 ...
    support_vectors: 17
    <one row of features per support vector>
    dual_coefs: c1 c2 ...
    end

Numbers carry 17 significant digits so a read/write cycle is lossless.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError
from .kernels import KernelSpec
from .multiclass import ClassCatalog, MulticlassModel, Strategy, Voting
from .raster_io import atomic_write
from .svm_binary import BinarySvmModel, Standardizer

__all__ = ["MAGIC", "dumps", "loads", "save_model", "load_model"]

MAGIC = "multisvm-model v1"


def _num(v: float) -> str:
    return format(float(v), ".17g")


def _vec(values) -> str:
    return " ".join(_num(v) for v in values)


def dumps(model: MulticlassModel) -> str:
    out = [
        MAGIC,
        f"strategy: {model.strategy.value}",
        f"voting: {model.voting.value}",
        f"classes: {len(model.catalog)}",
    ]
    out += [f"class: {c} {n}" for c, n in zip(model.catalog.codes, model.catalog.names)]
    out.append(f"features: {model.n_features}")
    out.append(f"machines: {len(model.machines)}")
    for k, m in enumerate(model.machines, start=1):
        out.append(f"machine: {k}")
        out.append(f"positive: {m.positive_class}")
        out.append(f"negative: {'rest' if m.negative_class is None else m.negative_class}")
        out.append(f"kernel: {m.kernel.kind.value}")
        out.append(f"degree: {m.kernel.degree}")
        out.append(f"offset: {_num(m.kernel.offset)}")
        out.append(f"gamma: {'none' if m.kernel.gamma is None else _num(m.kernel.gamma)}")
        out.append(f"cost: {_num(m.cost)}")
        out.append(f"bias: {_num(m.bias)}")
        if m.scaler is None:
            out += ["means: none", "stds: none"]
        else:
            out += [f"means: {_vec(m.scaler.mean)}", f"stds: {_vec(m.scaler.std)}"]
        out.append(f"support_vectors: {m.support_vectors.shape[0]}")
        out += [_vec(row) for row in m.support_vectors]
        out.append(f"dual_coefs: {_vec(m.dual_coefs)}")
        out.append("end")
    return "\n".join(out) + "\n"


class _Lines:
    def __init__(self, text: str, source: str):
        self.lines = text.split("\n")
        self.pos = 0
        self.source = source

    def error(self, msg: str) -> FormatError:
        return FormatError(f"{self.source}:{self.pos}: {msg}")

    def raw(self) -> str:
        if self.pos >= len(self.lines):
            raise self.error("unexpected end of file")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def field(self, key: str) -> str:
        line = self.raw()
        name, sep, value = line.partition(":")
        if not sep or name.strip() != key:
            raise self.error(f"expected '{key}: ...', got {line!r}")
        return value.strip()

    def number(self, key: str) -> float:
        value = self.field(key)
        try:
            return float(value)
        except ValueError:
            raise self.error(f"{key} {value!r} is not a number") from None

    def integer(self, key: str) -> int:
        value = self.field(key)
        try:
            return int(value)
        except ValueError:
            raise self.error(f"{key} {value!r} is not an integer") from None

    def vector(self, text: str, size: int, what: str) -> np.ndarray:
        try:
            vals = np.array([float(v) for v in text.split()], dtype=np.float64)
        except ValueError:
            raise self.error(f"{what} holds a non-numeric entry") from None
        if vals.shape[0] != size:
            raise self.error(f"{what} has {vals.shape[0]} values, expected {size}")
        return vals


def loads(text: str, source: str = "<model>") -> MulticlassModel:
    r = _Lines(text, source)
    magic = r.raw().strip()
    if magic != MAGIC:
        if magic.startswith("multisvm-model"):
            raise r.error(f"unsupported model version {magic!r}")
        raise r.error("not a multisvm model file")
    try:
        strategy = Strategy(r.field("strategy"))
        voting = Voting(r.field("voting"))
    except ValueError as exc:
        raise r.error(str(exc)) from None
    n_classes = r.integer("classes")
    codes, names = [], []
    for _ in range(n_classes):
        code, _, name = r.field("class").partition(" ")
        try:
            codes.append(int(code))
        except ValueError:
            raise r.error(f"bad class code {code!r}") from None
        names.append(name.strip())
    catalog = ClassCatalog(tuple(codes), tuple(names))
    n_features = r.integer("features")
    machines = []
    for k in range(r.integer("machines")):
        if r.integer("machine") != k + 1:
            raise r.error(f"machines out of order (expected {k + 1})")
        positive = r.integer("positive")
        neg = r.field("negative")
        negative = None if neg == "rest" else int(neg)
        kind = r.field("kernel")
        degree = r.integer("degree")
        offset = r.number("offset")
        gamma_text = r.field("gamma")
        gamma = None if gamma_text == "none" else float(gamma_text)
        kernel = KernelSpec(kind, degree=degree, offset=offset, gamma=gamma)
        cost = r.number("cost")
        bias = r.number("bias")
        means, stds = r.field("means"), r.field("stds")
        scaler = None
        if means != "none":
            scaler = Standardizer(r.vector(means, n_features, "means"), r.vector(stds, n_features, "stds"))
        n_sv = r.integer("support_vectors")
        sv = np.array([r.vector(r.raw(), n_features, "support vector") for _ in range(n_sv)]).reshape(n_sv, n_features)
        coefs = r.vector(r.field("dual_coefs"), n_sv, "dual_coefs")
        if r.raw().strip() != "end":
            raise r.error("expected 'end'")
        machines.append(BinarySvmModel(sv, coefs, bias, kernel, cost, scaler, positive, negative))
    return MulticlassModel(strategy, catalog, tuple(machines), voting)


def save_model(model: MulticlassModel, path) -> None:
    atomic_write(path, dumps(model).encode("utf-8"))


def load_model(path) -> MulticlassModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FormatError(f"model file {path} does not exist") from None
    return loads(text, str(path))
