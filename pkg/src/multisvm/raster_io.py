"""Band-sequential raster files, training-sample CSVs and label maps.

A raster is a UTF-8 text header plus a raw companion file::

    multisvm-raster v1
    rows: 128
    cols: 128
    bands: 6
    dtype: f32
    byte_order: little-endian
    interleave: bsq
    nodata: -9999.0          (optional)
    band_names: b1,b2,b3,b4,b5,b7
    data_file: scene.bin
    <blank line>

The payload holds little-endian scalars, band after band, row-major within a
band.  Label maps use the same header with ``dtype: u8`` and one band.
"""
from __future__ import annotations

import csv
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError
from .multiclass import MIXED, UNCLASSIFIED, ClassCatalog, LabeledDataset, MulticlassModel, predict

__all__ = [
    "RasterImage",
    "LabelMap",
    "PixelSamples",
    "read_raster",
    "write_raster",
    "read_labelmap",
    "write_labelmap",
    "read_samples",
    "write_samples",
    "extract_samples",
    "classify_raster",
    "atomic_write",
]

MAGIC = "multisvm-raster v1"
_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}
# pixels per work unit in classify_raster; fixed so results never depend on the worker count
CHUNK_PIXELS = 4096


@dataclass
class RasterImage:
    """Multiband image; ``data`` has shape ``(bands, rows, cols)``, float32."""

    data: np.ndarray
    band_names: list[str]
    nodata: float | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise InputError(f"raster data must have shape (bands, rows, cols), got {self.data.shape}")
        self.band_names = [str(b) for b in self.band_names]
        if len(self.band_names) != self.bands:
            raise InputError(f"{len(self.band_names)} band names for {self.bands} bands")
        for name in self.band_names:
            if not name or "," in name or name != name.strip() or "\n" in name:
                raise InputError(f"invalid band name {name!r}")
        if self.nodata is not None:
            self.nodata = float(self.nodata)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def rows(self) -> int:
        return self.data.shape[1]

    @property
    def cols(self) -> int:
        return self.data.shape[2]

    def nodata_mask(self) -> np.ndarray:
        """``(rows, cols)`` mask of pixels where any band holds the nodata value."""
        if self.nodata is None:
            return np.zeros((self.rows, self.cols), dtype=bool)
        if math.isnan(self.nodata):
            return np.isnan(self.data).any(axis=0)
        return (self.data == np.float32(self.nodata)).any(axis=0)

    def pixel_features(self) -> np.ndarray:
        """``(rows * cols, bands)`` float64 matrix in row-major pixel order."""
        return self.data.reshape(self.bands, -1).T.astype(np.float64)


@dataclass
class LabelMap:
    """Per-pixel class codes; 0 = unclassified, 255 = mixed."""

    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 2 or min(self.labels.shape) < 1:
            raise InputError(f"label map must be 2-D and nonempty, got shape {self.labels.shape}")
        if self.labels.dtype != np.uint8:
            if np.any((self.labels < 0) | (self.labels > 255)):
                raise InputError("label codes must fit in 0..255")
            self.labels = self.labels.astype(np.uint8)

    @property
    def rows(self) -> int:
        return self.labels.shape[0]

    @property
    def cols(self) -> int:
        return self.labels.shape[1]

    def histogram(self) -> dict[int, int]:
        codes, counts = np.unique(self.labels, return_counts=True)
        return {int(c): int(n) for c, n in zip(codes, counts)}

    def validate(self, catalog: ClassCatalog) -> None:
        allowed = set(catalog.codes) | {UNCLASSIFIED, MIXED}
        bad = sorted(set(self.histogram()) - allowed)
        if bad:
            raise InputError(f"label map holds codes {bad} outside the catalog {catalog.codes}")


@dataclass
class PixelSamples:
    """Reference pixels given by raster coordinates."""

    rows: np.ndarray
    cols: np.ndarray
    classes: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64).ravel()
        self.cols = np.asarray(self.cols, dtype=np.int64).ravel()
        self.classes = np.asarray(self.classes, dtype=np.int64).ravel()
        if not (self.rows.shape == self.cols.shape == self.classes.shape):
            raise InputError("sample rows, cols and classes differ in length")

    def __len__(self) -> int:
        return self.rows.shape[0]

    def check_bounds(self, rows: int, cols: int) -> None:
        bad = (self.rows < 0) | (self.rows >= rows) | (self.cols < 0) | (self.cols >= cols)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise InputError(
                f"sample {k} at row={self.rows[k]}, col={self.cols[k]} lies outside the {rows}x{cols} raster"
            )


def atomic_write(path, payload: bytes) -> None:
    """Write ``payload`` to a temp file in the target directory, then rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _companion(header_path: Path) -> Path:
    if header_path.suffix == ".hdr":
        return header_path.with_suffix(".bin")
    return header_path.with_name(header_path.name + ".bin")


def _format_float(v: float) -> str:
    return repr(float(v))


def _write(header_path, payload: np.ndarray, dtype: str, band_names, nodata) -> None:
    header_path = Path(header_path)
    data_path = _companion(header_path)
    bands, rows, cols = payload.shape
    lines = [
        MAGIC,
        f"rows: {rows}",
        f"cols: {cols}",
        f"bands: {bands}",
        f"dtype: {dtype}",
        "byte_order: little-endian",
        "interleave: bsq",
    ]
    if nodata is not None:
        lines.append(f"nodata: {_format_float(nodata)}")
    lines.append("band_names: " + ",".join(band_names))
    lines.append(f"data_file: {data_path.name}")
    text = "\n".join(lines) + "\n\n"
    try:
        atomic_write(data_path, np.ascontiguousarray(payload, dtype=_DTYPES[dtype]).tobytes())
        atomic_write(header_path, text.encode("utf-8"))
    except OSError as exc:
        raise OSError(f"cannot write raster {header_path}: {exc}") from exc


def _parse_header(header_path: Path) -> dict:
    try:
        text = header_path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FormatError(f"header file {header_path} does not exist") from None
    except UnicodeDecodeError as exc:
        raise FormatError(f"{header_path}: header is not UTF-8 text (byte {exc.start})") from None
    lines = text.split("\n")
    if not lines or lines[0].strip() != MAGIC:
        first = lines[0].strip() if lines else ""
        if first.startswith("multisvm-raster"):
            raise FormatError(f"{header_path}: unsupported version {first!r} (expected {MAGIC!r})")
        raise FormatError(f"{header_path}: not a multisvm raster header (first line {first!r})")
    fields: dict[str, str] = {}
    offset = len(lines[0]) + 1
    for line in lines[1:]:
        if not line.strip():
            break
        key, sep, value = line.partition(":")
        key = key.strip()
        if not sep or not key:
            raise FormatError(f"{header_path}: malformed header line {line!r} at byte {offset}")
        if key in fields:
            raise FormatError(f"{header_path}: duplicate header key {key!r} at byte {offset}")
        fields[key] = value.strip()
        offset += len(line.encode("utf-8")) + 1
    for key in ("rows", "cols", "bands", "dtype"):
        if key not in fields:
            raise FormatError(f"{header_path}: missing header key {key!r}")
    try:
        shape = tuple(int(fields[k]) for k in ("bands", "rows", "cols"))
    except ValueError:
        raise FormatError(f"{header_path}: rows/cols/bands must be integers") from None
    if min(shape) < 1:
        raise FormatError(f"{header_path}: rows/cols/bands must be positive, got {shape}")
    if fields["dtype"] not in _DTYPES:
        raise FormatError(f"{header_path}: unsupported dtype {fields['dtype']!r}")
    if fields.get("byte_order", "little-endian") != "little-endian":
        raise FormatError(f"{header_path}: unsupported byte order {fields['byte_order']!r}")
    if fields.get("interleave", "bsq") != "bsq":
        raise FormatError(f"{header_path}: unsupported interleave {fields['interleave']!r}")
    nodata = None
    if "nodata" in fields:
        try:
            nodata = float(fields["nodata"])
        except ValueError:
            raise FormatError(f"{header_path}: nodata value {fields['nodata']!r} is not a number") from None
    names = fields["band_names"].split(",") if fields.get("band_names") else [f"b{i + 1}" for i in range(shape[0])]
    if len(names) != shape[0]:
        raise FormatError(f"{header_path}: {len(names)} band names for {shape[0]} bands")
    data_path = header_path.parent / fields["data_file"] if fields.get("data_file") else _companion(header_path)
    return {"shape": shape, "dtype": fields["dtype"], "nodata": nodata, "band_names": names, "data_path": data_path}


def _read_payload(meta: dict) -> np.ndarray:
    dtype = _DTYPES[meta["dtype"]]
    expected = int(np.prod(meta["shape"])) * dtype.itemsize
    path = meta["data_path"]
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError:
        raise FormatError(f"data file {path} does not exist") from None
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype=dtype).reshape(meta["shape"]).copy()


def read_raster(header_path) -> RasterImage:
    header_path = Path(header_path)
    meta = _parse_header(header_path)
    if meta["dtype"] != "f32":
        raise FormatError(f"{header_path}: raster images must be f32, got {meta['dtype']}")
    data = _read_payload(meta)
    image = RasterImage(data, meta["band_names"], meta["nodata"])
    bad = ~np.isfinite(data) & ~image.nodata_mask()[None, :, :]
    if np.any(bad):
        k = int(np.argmax(bad.ravel()))
        raise FormatError(
            f"{meta['data_path']}: non-finite value at byte offset {k * 4} without a matching nodata flag"
        )
    return image


def write_raster(image: RasterImage, header_path) -> None:
    _write(header_path, image.data, "f32", image.band_names, image.nodata)


def read_labelmap(header_path) -> LabelMap:
    header_path = Path(header_path)
    meta = _parse_header(header_path)
    if meta["dtype"] != "u8" or meta["shape"][0] != 1:
        raise FormatError(f"{header_path}: label maps must be single-band u8")
    return LabelMap(_read_payload(meta)[0])


def write_labelmap(labelmap: LabelMap, header_path) -> None:
    _write(header_path, labelmap.labels[None, :, :], "u8", ["labels"], None)


def read_samples(path) -> PixelSamples | LabeledDataset:
    """Read ``row,col,class`` (pixel coordinates) or ``f1,...,fk,class`` (direct features)."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except FileNotFoundError:
        raise InputError(f"sample file {path} does not exist") from None
    if not rows:
        raise FormatError(f"{path}: empty sample file (no header)")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if header == ["row", "col", "class"]:
        kind = "pixels"
    elif len(header) >= 2 and header[-1] == "class" and header[:-1] == [f"f{i + 1}" for i in range(len(header) - 1)]:
        kind = "features"
    else:
        raise FormatError(f"{path}: header must be 'row,col,class' or 'f1,...,fk,class', got {','.join(header)!r}")
    width = len(header)
    for lineno, r in enumerate(body, start=2):
        if len(r) != width:
            raise FormatError(f"{path}:{lineno}: expected {width} fields, got {len(r)}")
    try:
        if kind == "pixels":
            arr = np.array([[int(v) for v in r] for r in body], dtype=np.int64).reshape(-1, 3)
            return PixelSamples(arr[:, 0], arr[:, 1], arr[:, 2])
        feats = np.array([[float(v) for v in r[:-1]] for r in body], dtype=np.float64).reshape(-1, width - 1)
        labels = np.array([int(r[-1]) for r in body], dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return LabeledDataset(feats, labels)


def write_samples(samples: PixelSamples | LabeledDataset, path) -> None:
    lines = []
    if isinstance(samples, PixelSamples):
        lines.append("row,col,class")
        lines += [f"{r},{c},{k}" for r, c, k in zip(samples.rows, samples.cols, samples.classes)]
    else:
        k = samples.n_features
        lines.append(",".join([f"f{i + 1}" for i in range(k)] + ["class"]))
        lines += [",".join([repr(float(v)) for v in f] + [str(int(c))])
                  for f, c in zip(samples.features, samples.labels)]
    atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def extract_samples(image: RasterImage, samples: PixelSamples) -> LabeledDataset:
    """Feature vectors (band values in band order) for each sample pixel.  Duplicates are kept."""
    samples.check_bounds(image.rows, image.cols)
    nodata = image.nodata_mask()[samples.rows, samples.cols]
    if np.any(nodata):
        k = int(np.argmax(nodata))
        raise InputError(f"sample {k} at row={samples.rows[k]}, col={samples.cols[k]} is a nodata pixel")
    feats = image.data[:, samples.rows, samples.cols].T.astype(np.float64)
    return LabeledDataset(feats.reshape(len(samples), image.bands), samples.classes)


def classify_raster(model: MulticlassModel, image: RasterImage, workers: int = 1,
                    backend: str | None = None) -> LabelMap:
    """Label every pixel; nodata pixels become UNCLASSIFIED.

    Pixels are processed in fixed chunks of ``CHUNK_PIXELS``, so the output
    is identical for any ``workers`` value.
    """
    if image.bands != model.n_features:
        raise InputError(f"raster has {image.bands} bands but the model expects {model.n_features}")
    feats = image.pixel_features()
    valid = ~image.nodata_mask().ravel()
    out = np.full(feats.shape[0], UNCLASSIFIED, dtype=np.uint8)
    starts = range(0, feats.shape[0], CHUNK_PIXELS)

    def run(start: int) -> None:
        stop = min(start + CHUNK_PIXELS, feats.shape[0])
        idx = np.flatnonzero(valid[start:stop]) + start
        if idx.size:
            out[idx] = predict(model, feats[idx], backend)

    if workers <= 1:
        for s in starts:
            run(s)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, starts))
    return LabelMap(out.reshape(image.rows, image.cols))
