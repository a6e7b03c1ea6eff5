"""Dataset ingestion and generation.

Inputs are always float64 in [0, 1] with integer class labels; smoothing is
applied at loss time, never baked into stored data. Supports the big-endian
IDX image/label format, two synthetic generators (Gaussian blobs and rendered
digit glyphs), and a checksummed binary cache with bitwise round-trip.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError, check_labels, check_unit_box

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

CACHE_MAGIC = b"LSRBDATA"
CACHE_VERSION = 1


class DataFormatError(ValueError):
    """Raised for malformed dataset files."""


@dataclass(frozen=True)
class Dataset:
    """Labelled inputs in the unit box: X is (n, dim) in [0,1], y is (n,)."""

    X: np.ndarray
    y: np.ndarray
    num_classes: int
    name: str = "dataset"
    split: str = "train"

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.X, dtype=np.float64))
        if X.ndim != 2:
            raise ValidationError(f"X must be 2-D, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValidationError("X contains non-finite values")
        check_unit_box(X, "X")
        y = check_labels(self.y, self.num_classes, "y")
        if y.shape[0] != X.shape[0]:
            raise ValidationError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} labels"
            )
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def take(self, indices, split: str | None = None) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.num_classes,
                       self.name, split or self.split)


def subset(dataset: Dataset, n: int, seed: int = 0) -> Dataset:
    """First ``n`` examples after a seeded shuffle (fixed evaluation subset)."""
    if n > len(dataset):
        n = len(dataset)
    order = np.random.default_rng(seed).permutation(len(dataset))
    return dataset.take(order[:n])


def _read_be_u32(f, what):
    raw = f.read(4)
    if len(raw) != 4:
        raise DataFormatError(f"truncated file while reading {what}")
    return struct.unpack(">I", raw)[0]


def load_idx(images_path, labels_path, name: str = "mnist",
             split: str = "test", num_classes: int = 10) -> Dataset:
    """Parse a big-endian IDX image/label file pair; pixels scaled by 1/255."""
    with open(images_path, "rb") as f:
        magic = _read_be_u32(f, "image magic")
        if magic != IDX_IMAGE_MAGIC:
            raise DataFormatError(
                f"bad image magic 0x{magic:08x} (expected 0x{IDX_IMAGE_MAGIC:08x})"
            )
        count = _read_be_u32(f, "image count")
        rows = _read_be_u32(f, "row count")
        cols = _read_be_u32(f, "column count")
        payload = f.read(count * rows * cols)
        if len(payload) != count * rows * cols:
            raise DataFormatError("truncated image payload")
        pixels = np.frombuffer(payload, dtype=np.uint8)
    with open(labels_path, "rb") as f:
        magic = _read_be_u32(f, "label magic")
        if magic != IDX_LABEL_MAGIC:
            raise DataFormatError(
                f"bad label magic 0x{magic:08x} (expected 0x{IDX_LABEL_MAGIC:08x})"
            )
        label_count = _read_be_u32(f, "label count")
        labels = np.frombuffer(f.read(label_count), dtype=np.uint8)
        if labels.shape[0] != label_count:
            raise DataFormatError("truncated label payload")
    if label_count != count:
        raise DataFormatError(
            f"image count {count} does not match label count {label_count}"
        )
    X = pixels.astype(np.float64).reshape(count, rows * cols) / 255.0
    return Dataset(X, labels.astype(np.int64), num_classes, name, split)


def write_idx(dataset: Dataset, images_path, labels_path,
              rows: int | None = None, cols: int | None = None) -> None:
    """Write a Dataset as an IDX pair (pixels quantized to uint8)."""
    n, dim = dataset.X.shape
    if rows is None or cols is None:
        side = int(round(np.sqrt(dim)))
        if side * side != dim:
            raise ValidationError("dim is not square; pass rows/cols explicitly")
        rows = cols = side
    if rows * cols != dim:
        raise ValidationError(f"rows*cols = {rows * cols} != dim {dim}")
    pixels = np.clip(np.rint(dataset.X * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(dataset.y.astype(np.uint8).tobytes())


def synth_blobs(num_classes: int, n_per_class: int, dim: int,
                separation: float = 4.0, seed: int = 0,
                noise_std: float = 1.0, split: str = "train") -> Dataset:
    """K unit-variance Gaussian clusters, means on a scaled simplex, clipped
    to the unit box. Deterministic per seed."""
    if num_classes < 2 or dim < 1:
        raise ValidationError("need num_classes >= 2 and dim >= 1")
    if num_classes > dim:
        raise ValidationError("need dim >= num_classes to place simplex means")
    rng = np.random.default_rng(seed)
    # Simplex directions (e_k minus centroid), tiled across all coordinates
    # so the class signal is not confined to the first K dimensions.
    base = np.eye(num_classes) - 1.0 / num_classes
    reps = int(np.ceil(dim / num_classes))
    dirs = np.tile(base, (1, reps))[:, :dim]
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    means = 0.5 + separation * dirs
    X = np.empty((num_classes * n_per_class, dim))
    y = np.empty(num_classes * n_per_class, dtype=np.int64)
    for k in range(num_classes):
        sl = slice(k * n_per_class, (k + 1) * n_per_class)
        X[sl] = means[k] + noise_std * rng.standard_normal((n_per_class, dim))
        y[sl] = k
    order = rng.permutation(X.shape[0])
    X = np.clip(X[order], 0.0, 1.0)
    return Dataset(X, y[order], num_classes, f"blobs{num_classes}", split)


# Segment-display digit font: thick strokes drawn as capsules on a nominal
# 28x28 canvas. Typographic disambiguators (slashed zero, serifed one,
# ticked six, tailed nine) keep every class pair at least two segments
# apart, so class evidence is spread over broad pixel regions.
_SEGMENTS = {
    "A": (4.0, 8.0, 4.0, 20.0),     # top bar
    "B": (5.5, 20.5, 12.5, 20.5),   # top-right vertical
    "C": (15.5, 20.5, 22.5, 20.5),  # bottom-right vertical
    "D": (24.0, 8.0, 24.0, 20.0),   # bottom bar
    "E": (15.5, 7.5, 22.5, 7.5),    # bottom-left vertical
    "F": (5.5, 7.5, 12.5, 7.5),     # top-left vertical
    "G": (14.0, 9.0, 14.0, 19.0),   # middle bar
    "S": (6.5, 19.5, 21.5, 8.0),    # slash of the zero
    "T": (17.0, 19.5, 24.0, 13.0),  # tail of the nine
    "H": (4.0, 2.5, 9.5, 4.5),      # tick of the six
    "R": (10.0, 14.5, 5.0, 19.0),   # flag of the one
}

_DIGIT_SEGMENTS = {
    0: "ABCDEFS", 1: "BCR", 2: "ABGED", 3: "ABGCD", 4: "FGBC",
    5: "AFGCD", 6: "AFGEDCH", 7: "ABC", 8: "ABCDEFG", 9: "ABCFGT",
}

_STROKE_WIDTH = 3.8


def _render_digit(digit: int, rng, size: int) -> np.ndarray:
    """One jittered segment-digit image (antialiased capsule rasterizer)."""
    unit = size / 28.0
    scale = unit * rng.uniform(0.88, 1.06)
    angle = rng.uniform(-0.1, 0.1)
    shift = rng.uniform(-1.5, 1.5, size=2) * unit
    intensity = rng.uniform(0.85, 1.0)
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    center = (size - 1) / 2.0
    nominal_center = 13.5
    coords = np.arange(size)
    rr, cc = np.meshgrid(coords, coords, indexing="ij")
    img = np.zeros((size, size))
    half = _STROKE_WIDTH * scale / 2.0
    for name in _DIGIT_SEGMENTS[digit]:
        r0, c0, r1, c1 = _SEGMENTS[name]
        pts = []
        for pr, pc in ((r0, c0), (r1, c1)):
            dy = (pr - nominal_center) * scale
            dx = (pc - nominal_center) * scale
            pts.append((center + cos_a * dy - sin_a * dx + shift[0],
                        center + sin_a * dy + cos_a * dx + shift[1]))
        (ar, ac), (br, bc) = pts
        vy, vx = br - ar, bc - ac
        seg_len2 = max(vy * vy + vx * vx, 1e-9)
        t = np.clip(((rr - ar) * vy + (cc - ac) * vx) / seg_len2, 0.0, 1.0)
        dist = np.sqrt((rr - (ar + t * vy)) ** 2 + (cc - (ac + t * vx)) ** 2)
        img = np.maximum(img, np.clip(half + 0.5 - dist, 0.0, 1.0))
    return np.clip(img * intensity, 0.0, 1.0)


def synth_digits(n_per_class: int, seed: int = 0, split: str = "train",
                 image_size: int = 28) -> Dataset:
    """Deterministic 10-class digit images (jittered segment-display font).

    A desk-scale stand-in for handwritten-digit data: 28x28 pixels in [0,1],
    labels 0-9, with geometric and intensity jitter so a dense classifier
    has to generalize across renders.
    """
    rng = np.random.default_rng(seed)
    n = 10 * n_per_class
    X = np.empty((n, image_size * image_size))
    y = np.empty(n, dtype=np.int64)
    i = 0
    for digit in range(10):
        for _ in range(n_per_class):
            X[i] = _render_digit(digit, rng, image_size).ravel()
            y[i] = digit
            i += 1
    order = rng.permutation(n)
    return Dataset(X[order], y[order], 10, "synth_digits", split)


def save_dataset(dataset: Dataset, path) -> None:
    """Write the checksummed binary cache: header JSON + float64/int64 payload."""
    import json

    header = json.dumps({
        "name": dataset.name,
        "split": dataset.split,
        "num_classes": dataset.num_classes,
        "n": len(dataset),
        "dim": dataset.dim,
    }).encode("utf-8")
    body = (CACHE_MAGIC + struct.pack("<I", CACHE_VERSION)
            + struct.pack("<I", len(header)) + header
            + dataset.X.astype("<f8").tobytes()
            + dataset.y.astype("<i8").tobytes())
    with open(path, "wb") as f:
        f.write(body)
        f.write(struct.pack("<I", zlib.crc32(body)))


def load_dataset(path) -> Dataset:
    """Reload a cache file, verifying version and checksum."""
    import json

    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(CACHE_MAGIC) + 12 or not blob.startswith(CACHE_MAGIC):
        raise DataFormatError("not a dataset cache file")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise DataFormatError("dataset cache checksum mismatch")
    off = len(CACHE_MAGIC)
    version, header_len = struct.unpack_from("<II", body, off)
    if version > CACHE_VERSION:
        raise DataFormatError(f"unsupported cache version {version}")
    off += 8
    header = json.loads(body[off:off + header_len].decode("utf-8"))
    off += header_len
    n, dim = header["n"], header["dim"]
    X = np.frombuffer(body, dtype="<f8", count=n * dim, offset=off).reshape(n, dim)
    off += n * dim * 8
    y = np.frombuffer(body, dtype="<i8", count=n, offset=off)
    return Dataset(X.copy(), y.copy(), header["num_classes"],
                   header["name"], header["split"])
