"""Dataset files and binary checkpoints.

IDX: the classic big-endian format. Images are magic 0x00000803, then
count/rows/cols as u32, then raw u8 pixels; labels are magic 0x00000801,
count, u8 values restricted here to 0..9. Parsing is strict: wrong magic,
short payloads, extra bytes and out-of-range labels each raise their own
error. serialize_* are byte-exact inverses of parse_* on valid input.

Checkpoints: a small tagged container for float64 arrays.

    magic "QSHD" | u16 version (LE) | u8 kind | u32 meta_len | meta JSON
    u16 n_arrays | per array: u16 name_len, name, u8 ndim, u32 dims, f64 LE
    payload (C order) | u32 CRC32 of everything before it

Array names are written sorted and meta JSON uses sorted keys, so the same
logical content always produces identical bytes. Writes go through a temp
file and os.replace, so a crash never leaves a half-written checkpoint.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import logging
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    BadVersion,
    ChecksumMismatch,
    InsufficientSamples,
    LabelOutOfRange,
    ShapeMismatch,
    TrailingBytes,
    TruncatedPayload,
)
from .rng import derive, permutation

log = logging.getLogger("qshield.dataio")

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049

DATASET_NAMES = ("mnist", "fmnist")

SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}

CKPT_MAGIC = b"QSHD"
CKPT_VERSION = 1
KIND_QVC = 1
KIND_AUTOENCODER = 2
KIND_ADVERSARIAL = 3
KIND_NAMES = {KIND_QVC: "qvc", KIND_AUTOENCODER: "autoencoder", KIND_ADVERSARIAL: "adversarial_batch"}


@dataclass
class ImageSet:
    pixels: np.ndarray  # (count, rows, cols), uint8 raw or float64 normalized

    @property
    def count(self) -> int:
        return self.pixels.shape[0]

    @property
    def rows(self) -> int:
        return self.pixels.shape[1]

    @property
    def cols(self) -> int:
        return self.pixels.shape[2]


@dataclass
class LabelSet:
    labels: np.ndarray  # (count,) int64 in 0..9

    @property
    def count(self) -> int:
        return self.labels.shape[0]


@dataclass
class DatasetSplit:
    name: str
    train_images: ImageSet
    train_labels: LabelSet
    test_images: ImageSet
    test_labels: LabelSet


def parse_idx_images(data: bytes) -> ImageSet:
    if len(data) < 16:
        raise TruncatedPayload(f"image header needs 16 bytes, have {len(data)}")
    magic, count, rows, cols = struct.unpack(">iiii", data[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise BadMagic(f"image magic {magic}, expected {IDX_IMAGES_MAGIC}")
    need = 16 + count * rows * cols
    if len(data) < need:
        raise TruncatedPayload(f"images need {need} bytes, have {len(data)}")
    if len(data) > need:
        raise TrailingBytes(f"{len(data) - need} bytes after image payload")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16).reshape(count, rows, cols)
    return ImageSet(pixels.copy())


def parse_idx_labels(data: bytes) -> LabelSet:
    if len(data) < 8:
        raise TruncatedPayload(f"label header needs 8 bytes, have {len(data)}")
    magic, count = struct.unpack(">ii", data[:8])
    if magic != IDX_LABELS_MAGIC:
        raise BadMagic(f"label magic {magic}, expected {IDX_LABELS_MAGIC}")
    need = 8 + count
    if len(data) < need:
        raise TruncatedPayload(f"labels need {need} bytes, have {len(data)}")
    if len(data) > need:
        raise TrailingBytes(f"{len(data) - need} bytes after label payload")
    raw = np.frombuffer(data, dtype=np.uint8, offset=8)
    if raw.size and raw.max() > 9:
        raise LabelOutOfRange(f"label {int(raw.max())} outside 0..9")
    return LabelSet(raw.astype(np.int64))


def serialize_idx_images(images: ImageSet) -> bytes:
    if images.pixels.dtype != np.uint8:
        raise ShapeMismatch(f"serialization wants uint8 pixels, got {images.pixels.dtype}")
    header = struct.pack(">iiii", IDX_IMAGES_MAGIC, images.count, images.rows, images.cols)
    return header + images.pixels.tobytes()


def serialize_idx_labels(labels: LabelSet) -> bytes:
    arr = labels.labels
    if arr.size and (arr.min() < 0 or arr.max() > 9):
        raise LabelOutOfRange("labels must be 0..9")
    return struct.pack(">ii", IDX_LABELS_MAGIC, labels.count) + arr.astype(np.uint8).tobytes()


def normalize(images: ImageSet) -> ImageSet:
    """Raw u8 to float64 in [0, 1]. Applied exactly once, at ingestion."""
    if images.pixels.dtype != np.uint8:
        raise ShapeMismatch(f"normalize expects raw uint8 pixels, got {images.pixels.dtype}")
    return ImageSet(images.pixels.astype(np.float64) / 255.0)


def _read_maybe_gz(path: str) -> bytes | None:
    if os.path.exists(path):
        with open(path, "rb") as fh:
            return fh.read()
    if os.path.exists(path + ".gz"):
        with gzip.open(path + ".gz", "rb") as fh:
            return fh.read()
    return None


def _verify_checksums(base: str, filenames: list[str]) -> None:
    table_path = os.path.join(base, "checksums.json")
    if not os.path.exists(table_path):
        return
    with open(table_path) as fh:
        table = json.load(fh)
    for name in filenames:
        path = os.path.join(base, name)
        if name not in table or not os.path.exists(path):
            continue
        with open(path, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        if digest != table[name]:
            log.warning(
                "checksum mismatch for %s: have %s, expected %s", path, digest, table[name]
            )


def load_split(data_dir: str, name: str, normalized: bool = True) -> DatasetSplit:
    """Load the four IDX files for a dataset.

    Files are looked up in data_dir/<name>/ first, then data_dir itself,
    accepting either plain or .gz files. Label/image counts must agree. Any
    checksums.json found beside the files is verified; a mismatch logs a
    warning and loading continues.
    """
    if name not in DATASET_NAMES:
        raise ShapeMismatch(f"unknown dataset {name!r}, expected one of {DATASET_NAMES}")
    candidates = [os.path.join(data_dir, name), data_dir]
    base = next(
        (
            c
            for c in candidates
            if _read_maybe_gz(os.path.join(c, SPLIT_FILES["train"][0])) is not None
        ),
        None,
    )
    if base is None:
        raise FileNotFoundError(
            f"no {name} IDX files under {data_dir} (looked in {candidates})"
        )
    _verify_checksums(base, [f for pair in SPLIT_FILES.values() for f in pair])
    sets = {}
    for split, (img_name, lab_name) in SPLIT_FILES.items():
        img_bytes = _read_maybe_gz(os.path.join(base, img_name))
        lab_bytes = _read_maybe_gz(os.path.join(base, lab_name))
        if img_bytes is None or lab_bytes is None:
            raise FileNotFoundError(f"missing {split} files for {name} under {base}")
        images = parse_idx_images(img_bytes)
        labels = parse_idx_labels(lab_bytes)
        if images.count != labels.count:
            raise ShapeMismatch(
                f"{split}: {images.count} images but {labels.count} labels"
            )
        sets[split] = (normalize(images) if normalized else images, labels)
    return DatasetSplit(name, sets["train"][0], sets["train"][1], sets["test"][0], sets["test"][1])


def _subset_side(
    images: ImageSet, labels: LabelSet, per_class: int, seed: int
) -> tuple[ImageSet, LabelSet]:
    if per_class <= 0:
        return images, labels
    picks = []
    for cls in range(10):
        idx = np.nonzero(labels.labels == cls)[0]
        if idx.size < per_class:
            raise InsufficientSamples(
                f"class {cls} has {idx.size} samples, need {per_class}"
            )
        order = permutation(idx.size, derive(seed, f"class{cls}"))
        picks.append(idx[order[:per_class]])
    chosen = np.concatenate(picks)
    return ImageSet(images.pixels[chosen]), LabelSet(labels.labels[chosen])


def subset(split: DatasetSplit, per_class, seed: int) -> DatasetSplit:
    """Seeded per-class subsample of one or both sides.

    per_class is an int (applied to train and test alike) or a (train, test)
    pair; 0 leaves that side whole. Within the result, samples are grouped
    by class in label order; training shuffles per epoch anyway.
    """
    if isinstance(per_class, (tuple, list)):
        train_pc, test_pc = per_class
    else:
        train_pc = test_pc = int(per_class)
    tr_i, tr_l = _subset_side(
        split.train_images, split.train_labels, train_pc, derive(seed, "train")
    )
    te_i, te_l = _subset_side(
        split.test_images, split.test_labels, test_pc, derive(seed, "test")
    )
    return DatasetSplit(split.name, tr_i, tr_l, te_i, te_l)


def batch_iter(
    images: np.ndarray, labels: np.ndarray, batch_size: int, seed: int, epoch: int = 0
):
    """Yield shuffled (images, labels) minibatches, deterministic per (seed, epoch)."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.shape[0] != labels.shape[0]:
        raise ShapeMismatch(f"{images.shape[0]} images vs {labels.shape[0]} labels")
    if batch_size < 1:
        raise ShapeMismatch(f"batch_size must be >= 1, got {batch_size}")
    order = permutation(images.shape[0], derive(seed, f"epoch{epoch}"))
    for start in range(0, images.shape[0], batch_size):
        idx = order[start : start + batch_size]
        yield images[idx], labels[idx]


def write_checkpoint(path: str, kind: int, meta: dict, arrays: dict) -> None:
    """Serialize float64 arrays with metadata; atomic via temp file + rename."""
    if kind not in KIND_NAMES:
        raise ShapeMismatch(f"unknown checkpoint kind {kind}")
    buf = bytearray()
    buf += CKPT_MAGIC
    buf += struct.pack("<HB", CKPT_VERSION, kind)
    meta_json = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf += struct.pack("<I", len(meta_json))
    buf += meta_json
    buf += struct.pack("<H", len(arrays))
    for name in sorted(arrays):
        encoded = name.encode("utf-8")
        # asarray, not ascontiguousarray: the latter promotes 0-d to 1-d,
        # and tobytes() below already emits C-order bytes for any layout
        arr = np.asarray(arrays[name], dtype=np.float64)
        buf += struct.pack("<H", len(encoded))
        buf += encoded
        buf += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            buf += struct.pack("<I", dim)
        buf += arr.astype("<f8", copy=False).tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf)
    os.replace(tmp, path)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedPayload(
                f"need {n} bytes at offset {self.pos}, file has {len(self.data)}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_checkpoint(path: str) -> tuple[int, dict, dict]:
    """Returns (kind, meta, arrays). Validates magic, version, CRC, bounds."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != CKPT_MAGIC:
        raise BadMagic(f"{path} does not start with {CKPT_MAGIC!r}")
    cur = _Cursor(data)
    cur.take(4)
    version, kind = cur.unpack("<HB")
    if version != CKPT_VERSION:
        raise BadVersion(f"checkpoint version {version}, reader supports {CKPT_VERSION}")
    if kind not in KIND_NAMES:
        raise BadVersion(f"unknown checkpoint kind {kind}")
    (meta_len,) = cur.unpack("<I")
    meta = json.loads(cur.take(meta_len).decode("utf-8"))
    (n_arrays,) = cur.unpack("<H")
    arrays = {}
    for _ in range(n_arrays):
        (name_len,) = cur.unpack("<H")
        name = cur.take(name_len).decode("utf-8")
        (ndim,) = cur.unpack("<B")
        shape = tuple(cur.unpack("<" + "I" * ndim)) if ndim else ()
        n_items = int(np.prod(shape)) if shape else 1
        payload = cur.take(8 * n_items)
        arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    body_end = cur.pos
    (stored_crc,) = cur.unpack("<I")
    if cur.pos != len(data):
        raise TrailingBytes(f"{len(data) - cur.pos} bytes after checkpoint CRC")
    actual = zlib.crc32(data[:body_end])
    if actual != stored_crc:
        raise ChecksumMismatch(f"CRC32 {actual:#010x} != stored {stored_crc:#010x}")
    return kind, meta, arrays
