import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from multisvm.errors import FormatError, InputError
from multisvm.kernels import KernelSpec
from multisvm.multiclass import MIXED, UNCLASSIFIED, LabeledDataset, Strategy, train_multiclass
from multisvm.raster_io import (
    LabelMap,
    PixelSamples,
    RasterImage,
    classify_raster,
    extract_samples,
    read_labelmap,
    read_raster,
    read_samples,
    write_labelmap,
    write_raster,
    write_samples,
)


def file_bytes(header):
    return header.read_bytes(), header.with_suffix(".bin").read_bytes()


def test_minimal_raster(tmp_path):
    img = RasterImage(np.zeros((1, 1, 1)), ["b1"])
    write_raster(img, tmp_path / "one.hdr")
    back = read_raster(tmp_path / "one.hdr")
    assert (back.rows, back.cols, back.bands) == (1, 1, 1)
    assert back.data[0, 0, 0] == 0.0


def test_header_layout(tmp_path):
    img = RasterImage(np.arange(8, dtype=np.float32).reshape(2, 2, 2), ["red", "nir"], nodata=-9999)
    write_raster(img, tmp_path / "s.hdr")
    assert (tmp_path / "s.hdr").read_text() == (
        "multisvm-raster v1\nrows: 2\ncols: 2\nbands: 2\ndtype: f32\nbyte_order: little-endian\n"
        "interleave: bsq\nnodata: -9999.0\nband_names: red,nir\ndata_file: s.bin\n\n"
    )
    raw = (tmp_path / "s.bin").read_bytes()
    # band-sequential, row-major, little-endian float32
    assert raw == np.arange(8, dtype="<f4").tobytes()


def test_round_trip_2x2x2(tmp_path, rng):
    img = RasterImage(rng.normal(size=(2, 2, 2)), ["a", "b"])
    write_raster(img, tmp_path / "r.hdr")
    back = read_raster(tmp_path / "r.hdr")
    np.testing.assert_array_equal(back.data, img.data)
    assert back.band_names == ["a", "b"] and back.nodata is None


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**32 - 1), st.booleans())
def test_write_read_write_is_byte_identical(tmp_path, rows, cols, bands, seed, with_nodata):
    rng = np.random.default_rng(seed)
    data = rng.normal(scale=100, size=(bands, rows, cols)).astype(np.float32)
    nodata = None
    if with_nodata:
        nodata = float("nan") if seed % 2 else -9999.0
        data[:, 0, 0] = np.float32(nodata)
    img = RasterImage(data, [f"band{i}" for i in range(bands)], nodata)
    write_raster(img, tmp_path / "a.hdr")
    write_raster(read_raster(tmp_path / "a.hdr"), tmp_path / "b.hdr")
    ha, ba = file_bytes(tmp_path / "a.hdr")
    hb, bb = file_bytes(tmp_path / "b.hdr")
    assert ba == bb
    assert ha.replace(b"a.bin", b"b.bin") == hb
    labels = LabelMap(rng.choice([0, 1, 2, 3, 255], size=(rows, cols)))
    write_labelmap(labels, tmp_path / "la.hdr")
    write_labelmap(read_labelmap(tmp_path / "la.hdr"), tmp_path / "lb.hdr")
    assert file_bytes(tmp_path / "la.hdr")[1] == file_bytes(tmp_path / "lb.hdr")[1]


def test_truncated_payload(tmp_path):
    write_raster(RasterImage(np.ones((2, 3, 3)), ["a", "b"]), tmp_path / "t.hdr")
    path = tmp_path / "t.bin"
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(FormatError, match="expected 72 bytes, found 71"):
        read_raster(tmp_path / "t.hdr")


def test_header_errors(tmp_path):
    write_raster(RasterImage(np.ones((1, 2, 2)), ["a"]), tmp_path / "h.hdr")
    text = (tmp_path / "h.hdr").read_text()
    (tmp_path / "h.hdr").write_text(text.replace("multisvm-raster v1", "multisvm-raster v9"))
    with pytest.raises(FormatError, match="unsupported version"):
        read_raster(tmp_path / "h.hdr")
    (tmp_path / "h.hdr").write_text(text.replace("dtype: f32", "dtype: f64"))
    with pytest.raises(FormatError, match="dtype"):
        read_raster(tmp_path / "h.hdr")
    (tmp_path / "h.hdr").write_text(text.replace("rows: 2\n", ""))
    with pytest.raises(FormatError, match="rows"):
        read_raster(tmp_path / "h.hdr")
    with pytest.raises(FormatError, match="does not exist"):
        read_raster(tmp_path / "missing.hdr")


def test_non_finite_needs_nodata(tmp_path):
    data = np.ones((2, 2, 2), np.float32)
    data[1, 0, 1] = np.inf
    write_raster(RasterImage(data, ["a", "b"]), tmp_path / "n.hdr")
    with pytest.raises(FormatError, match="byte offset 20"):
        read_raster(tmp_path / "n.hdr")
    data[1, 0, 1] = np.nan
    write_raster(RasterImage(data, ["a", "b"], nodata=float("nan")), tmp_path / "m.hdr")
    img = read_raster(tmp_path / "m.hdr")
    assert img.nodata_mask().tolist() == [[False, True], [False, False]]


def test_labelmap_all_unclassified_is_zero_bytes(tmp_path):
    write_labelmap(LabelMap(np.zeros((3, 4), np.uint8)), tmp_path / "z.hdr")
    assert (tmp_path / "z.bin").read_bytes() == bytes(12)


def test_labelmap_histogram_survives(tmp_path, rng):
    labels = rng.choice([1, 2, 3], size=(9, 11)).astype(np.uint8)
    before = LabelMap(labels).histogram()
    write_labelmap(LabelMap(labels), tmp_path / "h.hdr")
    after = read_labelmap(tmp_path / "h.hdr").histogram()
    assert before == after
    assert before == {c: int(np.sum(labels == c)) for c in (1, 2, 3)}


def test_labelmap_requires_u8(tmp_path):
    write_raster(RasterImage(np.ones((1, 2, 2)), ["a"]), tmp_path / "f.hdr")
    with pytest.raises(FormatError, match="u8"):
        read_labelmap(tmp_path / "f.hdr")
    write_labelmap(LabelMap(np.ones((2, 2))), tmp_path / "l.hdr")
    with pytest.raises(FormatError, match="f32"):
        read_raster(tmp_path / "l.hdr")


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        write_raster(RasterImage(np.ones((1, 1, 1)), ["a"]), tmp_path / "no" / "such" / "dir.hdr")


def test_extract_samples():
    data = np.broadcast_to(np.arange(1, 7, dtype=np.float32)[:, None, None], (6, 3, 4)).copy()
    img = RasterImage(data, [f"b{i}" for i in (1, 2, 3, 4, 5, 7)])
    ds = extract_samples(img, PixelSamples([0, 2, 2], [0, 3, 3], [1, 2, 2]))
    np.testing.assert_array_equal(ds.features[0], [1, 2, 3, 4, 5, 6])
    assert len(ds) == 3 and np.array_equal(ds.features[1], ds.features[2])
    assert ds.labels.tolist() == [1, 2, 2]


def test_extract_samples_errors():
    data = np.ones((2, 3, 3), np.float32)
    data[:, 1, 1] = -1
    img = RasterImage(data, ["a", "b"], nodata=-1)
    with pytest.raises(InputError, match="row=5, col=0"):
        extract_samples(img, PixelSamples([5], [0], [1]))
    with pytest.raises(InputError, match="nodata"):
        extract_samples(img, PixelSamples([1], [1], [1]))


@pytest.fixture(scope="module")
def scene_model():
    from multisvm.harness import generate_synthetic
    image, train, test = generate_synthetic(20, 30, 3, 3, 10.0, 0.0, seed=3, train_per_class=10,
                                            test_per_class=10)
    ds = extract_samples(image, train)
    models = {s: train_multiclass(ds, s, KernelSpec.rbf(), 1.0) for s in Strategy}
    return image, train, models


def test_classify_training_pixel(scene_model):
    image, train, models = scene_model
    k = int(np.argmax(train.classes == 2))
    r, c = train.rows[k], train.cols[k]
    for model in models.values():
        labels = classify_raster(model, image)
        assert labels.labels[r, c] == 2
        assert sum(labels.histogram().values()) == image.rows * image.cols


def test_classify_nodata_and_workers(scene_model):
    image, _, models = scene_model
    for model in models.values():
        serial = classify_raster(model, image, workers=1).labels
        parallel = classify_raster(model, image, workers=8).labels
        assert serial.tobytes() == parallel.tobytes()
    blank = RasterImage(np.full((3, 5, 5), -1.0), image.band_names, nodata=-1.0)
    for model in models.values():
        assert np.all(classify_raster(model, blank).labels == UNCLASSIFIED)
    partial = RasterImage(image.data.copy(), image.band_names, nodata=-1.0)
    partial.data[:, 0, :] = -1.0
    out = classify_raster(models[Strategy.ONE_AGAINST_ONE], partial).labels
    assert np.all(out[0] == UNCLASSIFIED)


def test_classify_band_mismatch(scene_model):
    image, _, models = scene_model
    with pytest.raises(InputError, match="bands"):
        classify_raster(models[Strategy.ONE_AGAINST_ALL], RasterImage(np.ones((4, 2, 2)), list("abcd")))


def test_sample_csv_round_trip(tmp_path):
    px = PixelSamples([0, 3, 3], [1, 2, 2], [1, 2, 2])
    write_samples(px, tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text() == "row,col,class\n0,1,1\n3,2,2\n3,2,2\n"
    back = read_samples(tmp_path / "p.csv")
    assert isinstance(back, PixelSamples)
    assert back.rows.tolist() == [0, 3, 3] and back.classes.tolist() == [1, 2, 2]
    ds = LabeledDataset([[0.1, 2.0], [3.5, -1.25]], [1, 2])
    write_samples(ds, tmp_path / "f.csv")
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "f1,f2,class"
    back = read_samples(tmp_path / "f.csv")
    np.testing.assert_array_equal(back.features, ds.features)
    assert back.labels.tolist() == [1, 2]


def test_sample_csv_errors(tmp_path):
    (tmp_path / "bad.csv").write_text("x,y,class\n1,2,3\n")
    with pytest.raises(FormatError, match="header"):
        read_samples(tmp_path / "bad.csv")
    (tmp_path / "short.csv").write_text("row,col,class\n1,2\n")
    with pytest.raises(FormatError, match="expected 3 fields"):
        read_samples(tmp_path / "short.csv")
    (tmp_path / "empty.csv").write_text("row,col,class\n")
    assert len(read_samples(tmp_path / "empty.csv")) == 0
    with pytest.raises(InputError):
        read_samples(tmp_path / "nope.csv")


def test_labelmap_validate():
    from multisvm.multiclass import ClassCatalog
    cat = ClassCatalog.from_codes([1, 2])
    LabelMap(np.array([[0, 1], [2, MIXED]])).validate(cat)
    with pytest.raises(InputError, match=r"\[7\]"):
        LabelMap(np.array([[7, 1]])).validate(cat)
