import gzip
import json
import logging
import os
import struct

import numpy as np
import pytest

from qshield import dataio
from qshield.errors import (
    BadMagic,
    BadVersion,
    ChecksumMismatch,
    InsufficientSamples,
    LabelOutOfRange,
    ShapeMismatch,
    TrailingBytes,
    TruncatedPayload,
)


def _image_bytes(count=3, rows=4, cols=5, fill=None):
    rng = np.random.default_rng(0)
    px = rng.integers(0, 256, size=(count, rows, cols), dtype=np.uint8) if fill is None else fill
    return struct.pack(">iiii", 2051, count, rows, cols) + px.tobytes(), px


def _label_bytes(values):
    arr = np.asarray(values, dtype=np.uint8)
    return struct.pack(">ii", 2049, arr.size) + arr.tobytes()


# ------------------------------------------------------------------------ IDX

def test_idx_images_roundtrip_bytes():
    raw, px = _image_bytes()
    parsed = dataio.parse_idx_images(raw)
    assert parsed.count == 3 and parsed.rows == 4 and parsed.cols == 5
    assert np.array_equal(parsed.pixels, px)
    assert dataio.serialize_idx_images(parsed) == raw


def test_idx_labels_roundtrip_bytes():
    raw = _label_bytes([0, 9, 3])
    parsed = dataio.parse_idx_labels(raw)
    assert parsed.labels.dtype == np.int64
    assert dataio.serialize_idx_labels(parsed) == raw


def test_idx_image_error_paths():
    raw, _ = _image_bytes()
    with pytest.raises(TruncatedPayload):
        dataio.parse_idx_images(raw[:10])
    with pytest.raises(TruncatedPayload):
        dataio.parse_idx_images(raw[:-1])
    with pytest.raises(TrailingBytes):
        dataio.parse_idx_images(raw + b"x")
    with pytest.raises(BadMagic):
        dataio.parse_idx_images(struct.pack(">iiii", 2050, 0, 0, 0))


def test_idx_label_error_paths():
    with pytest.raises(TruncatedPayload):
        dataio.parse_idx_labels(b"\x00" * 7)
    with pytest.raises(BadMagic):
        dataio.parse_idx_labels(struct.pack(">ii", 2051, 0))
    with pytest.raises(TrailingBytes):
        dataio.parse_idx_labels(_label_bytes([1]) + b"z")
    with pytest.raises(LabelOutOfRange):
        dataio.parse_idx_labels(struct.pack(">ii", 2049, 1) + bytes([10]))
    with pytest.raises(LabelOutOfRange):
        dataio.serialize_idx_labels(dataio.LabelSet(np.array([11])))


def test_serialize_images_requires_uint8():
    with pytest.raises(ShapeMismatch):
        dataio.serialize_idx_images(dataio.ImageSet(np.zeros((1, 2, 2))))


def test_normalize_scales_and_guards():
    img = dataio.ImageSet(np.array([[[0, 255], [51, 102]]], dtype=np.uint8))
    out = dataio.normalize(img)
    assert out.pixels.dtype == np.float64
    assert out.pixels.max() == 1.0 and out.pixels.min() == 0.0
    assert out.pixels[0, 1, 0] == pytest.approx(0.2)
    with pytest.raises(ShapeMismatch):
        dataio.normalize(out)  # double normalization is a bug


# --------------------------------------------------------------------- splits

def _write_split(root, gz=False, train_n=30, test_n=20):
    os.makedirs(root, exist_ok=True)
    rng = np.random.default_rng(1)
    for prefix, n in (("train", train_n), ("t10k", test_n)):
        px = rng.integers(0, 256, size=(n, 28, 28), dtype=np.uint8)
        labels = np.arange(n) % 10
        img_raw = struct.pack(">iiii", 2051, n, 28, 28) + px.tobytes()
        lab_raw = _label_bytes(labels)
        img_name = f"{prefix}-images-idx3-ubyte"
        lab_name = f"{prefix}-labels-idx1-ubyte"
        if gz:
            with gzip.open(os.path.join(root, img_name + ".gz"), "wb") as fh:
                fh.write(img_raw)
            with gzip.open(os.path.join(root, lab_name + ".gz"), "wb") as fh:
                fh.write(lab_raw)
        else:
            with open(os.path.join(root, img_name), "wb") as fh:
                fh.write(img_raw)
            with open(os.path.join(root, lab_name), "wb") as fh:
                fh.write(lab_raw)


def test_load_split_plain_and_nested(tmp_path):
    _write_split(str(tmp_path / "mnist"))
    split = dataio.load_split(str(tmp_path), "mnist")
    assert split.train_images.count == 30
    assert split.test_images.count == 20
    assert split.train_images.pixels.dtype == np.float64  # normalized by default
    raw = dataio.load_split(str(tmp_path), "mnist", normalized=False)
    assert raw.train_images.pixels.dtype == np.uint8


def test_load_split_transparently_reads_gz(tmp_path):
    _write_split(str(tmp_path / "mnist"), gz=True)
    split = dataio.load_split(str(tmp_path), "mnist")
    assert split.train_images.count == 30


def test_load_split_missing_and_unknown(tmp_path):
    with pytest.raises(FileNotFoundError):
        dataio.load_split(str(tmp_path), "mnist")
    with pytest.raises(ShapeMismatch):
        dataio.load_split(str(tmp_path), "cifar")


def test_load_split_checksum_warning(tmp_path, caplog):
    root = tmp_path / "mnist"
    _write_split(str(root))
    bogus = {"train-images-idx3-ubyte": "0" * 64}
    (root / "checksums.json").write_text(json.dumps(bogus))
    with caplog.at_level(logging.WARNING, logger="qshield.dataio"):
        split = dataio.load_split(str(tmp_path), "mnist")
    assert split.train_images.count == 30  # mismatch warns, does not abort
    assert any("checksum mismatch" in r.message for r in caplog.records)


def test_subset_counts_and_determinism(tmp_path):
    _write_split(str(tmp_path / "mnist"), train_n=100, test_n=50)
    split = dataio.load_split(str(tmp_path), "mnist")
    sub = dataio.subset(split, (5, 2), seed=8)
    assert sub.train_images.count == 50
    assert sub.test_images.count == 20
    counts = np.bincount(sub.train_labels.labels, minlength=10)
    assert np.all(counts == 5)
    again = dataio.subset(split, (5, 2), seed=8)
    assert np.array_equal(sub.train_images.pixels, again.train_images.pixels)
    other = dataio.subset(split, (5, 2), seed=9)
    assert not np.array_equal(sub.train_images.pixels, other.train_images.pixels)


def test_subset_zero_leaves_side_whole(tmp_path):
    _write_split(str(tmp_path / "mnist"), train_n=100, test_n=50)
    split = dataio.load_split(str(tmp_path), "mnist")
    sub = dataio.subset(split, (5, 0), seed=8)
    assert sub.train_images.count == 50
    assert sub.test_images.count == 50  # untouched
    assert sub.test_images.pixels is split.test_images.pixels


def test_subset_insufficient_samples(tmp_path):
    _write_split(str(tmp_path / "mnist"), train_n=30, test_n=20)
    split = dataio.load_split(str(tmp_path), "mnist")
    with pytest.raises(InsufficientSamples):
        dataio.subset(split, 4, seed=1)  # only 3 per class in train


def test_batch_iter_partitions_and_shuffles():
    images = np.arange(10)[:, None] * np.ones((1, 4))
    labels = np.arange(10)
    seen = []
    for bx, by in dataio.batch_iter(images, labels, 3, seed=5):
        assert bx.shape[0] == by.shape[0] <= 3
        assert np.all(bx[:, 0] == by)  # pairs stay aligned
        seen.extend(by.tolist())
    assert sorted(seen) == list(range(10))
    order1 = [by.tolist() for _, by in dataio.batch_iter(images, labels, 3, seed=5)]
    order2 = [by.tolist() for _, by in dataio.batch_iter(images, labels, 3, seed=5)]
    order3 = [by.tolist() for _, by in dataio.batch_iter(images, labels, 3, seed=5, epoch=1)]
    assert order1 == order2
    assert order1 != order3


def test_batch_iter_validates():
    with pytest.raises(ShapeMismatch):
        list(dataio.batch_iter(np.zeros((3, 2)), np.zeros(4), 2, seed=0))
    with pytest.raises(ShapeMismatch):
        list(dataio.batch_iter(np.zeros((3, 2)), np.zeros(3), 0, seed=0))


# ---------------------------------------------------------------- checkpoints

def _sample_ckpt(path):
    arrays = {
        "beta": np.arange(6, dtype=np.float64).reshape(2, 3),
        "alpha": np.array(3.5),
    }
    meta = {"note": "hello", "n": 2}
    dataio.write_checkpoint(path, dataio.KIND_QVC, meta, arrays)
    return meta, arrays


def test_checkpoint_roundtrip(tmp_path):
    path = str(tmp_path / "x.ckpt")
    meta, arrays = _sample_ckpt(path)
    kind, meta2, arrays2 = dataio.read_checkpoint(path)
    assert kind == dataio.KIND_QVC
    assert meta2 == meta
    assert set(arrays2) == set(arrays)
    for name in arrays:
        assert np.array_equal(arrays2[name], arrays[name])
        assert arrays2[name].shape == np.asarray(arrays[name]).shape


def test_checkpoint_bytes_are_canonical(tmp_path):
    p1, p2 = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
    arrays = {"w": np.ones((2, 2)), "b": np.zeros(2)}
    dataio.write_checkpoint(p1, dataio.KIND_AUTOENCODER, {"x": 1, "y": 2}, arrays)
    dataio.write_checkpoint(
        p2, dataio.KIND_AUTOENCODER, {"y": 2, "x": 1}, dict(reversed(list(arrays.items())))
    )
    with open(p1, "rb") as f1, open(p2, "rb") as f2:
        assert f1.read() == f2.read()


def test_checkpoint_error_paths(tmp_path):
    path = str(tmp_path / "x.ckpt")
    _sample_ckpt(path)
    with open(path, "rb") as fh:
        good = fh.read()

    bad = str(tmp_path / "bad.ckpt")

    with open(bad, "wb") as fh:
        fh.write(b"NOPE" + good[4:])
    with pytest.raises(BadMagic):
        dataio.read_checkpoint(bad)

    with open(bad, "wb") as fh:
        fh.write(good[:4] + struct.pack("<H", 99) + good[6:])
    with pytest.raises(BadVersion):
        dataio.read_checkpoint(bad)

    with open(bad, "wb") as fh:
        fh.write(good[:-10])
    with pytest.raises(TruncatedPayload):
        dataio.read_checkpoint(bad)

    with open(bad, "wb") as fh:
        fh.write(good + b"\x00")
    with pytest.raises(TrailingBytes):
        dataio.read_checkpoint(bad)

    flipped = bytearray(good)
    flipped[-20] ^= 0xFF  # inside the last array's float payload
    with open(bad, "wb") as fh:
        fh.write(bytes(flipped))
    with pytest.raises(ChecksumMismatch):
        dataio.read_checkpoint(bad)


def test_checkpoint_rejects_unknown_kind(tmp_path):
    with pytest.raises(ShapeMismatch):
        dataio.write_checkpoint(str(tmp_path / "x.ckpt"), 9, {}, {})


def test_checkpoint_scalar_and_empty_arrays(tmp_path):
    path = str(tmp_path / "s.ckpt")
    dataio.write_checkpoint(
        path, dataio.KIND_QVC, {}, {"s": np.float64(2.0), "e": np.zeros((0, 3))}
    )
    _, _, arrays = dataio.read_checkpoint(path)
    assert arrays["s"].shape == ()
    assert arrays["s"] == 2.0
    assert arrays["e"].shape == (0, 3)


def test_checkpoint_write_is_atomic(tmp_path):
    path = str(tmp_path / "x.ckpt")
    _sample_ckpt(path)
    assert not os.path.exists(path + ".tmp")
