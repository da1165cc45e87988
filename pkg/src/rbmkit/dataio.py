"""Dataset ingestion (MNIST IDX, ISOLET CSV), normalization, and model
serialization.

Loaders are total: any byte stream either yields a Dataset or raises a
typed error from errors.py, never a silently truncated result. Model JSON
stores every float as a 17-significant-digit decimal string, which
round-trips all float64 values (subnormals included) bit-exactly while
staying diffable.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .dbn import DbnModel
from .errors import (CsvFormatError, IdxCountMismatchError, IdxMagicError,
                     IdxTruncatedError, ModelFormatError)
from .model import GAUSSIAN, BINARY, RbmParams

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049
MODEL_FORMAT_VERSION = 1

__all__ = [
    "Dataset", "NormStats",
    "load_mnist_idx", "load_isolet_csv", "minmax_normalize",
    "save_model", "load_model", "write_pgm",
    "IDX_IMAGE_MAGIC", "IDX_LABEL_MAGIC", "MODEL_FORMAT_VERSION",
]


@dataclass
class NormStats:
    """Per-column min/max recorded when normalizing training data, reused
    (with clamping) on test data."""

    col_min: np.ndarray
    col_max: np.ndarray


@dataclass
class Dataset:
    """Row-major sample matrix with optional integer labels."""

    features: np.ndarray
    labels: np.ndarray | None = None
    normalization: NormStats | None = None

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite feature values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise ValueError("labels must align with feature rows")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def _read_exact(fh, n: int, path, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise IdxTruncatedError(f"{path}: expected {n} bytes for {what}, "
                                f"got {len(data)}")
    return data


def _load_idx_array(path, expected_magic: int) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = struct.unpack(">i", _read_exact(fh, 4, path, "magic"))[0]
        if magic != expected_magic:
            raise IdxMagicError(f"{path}: magic {magic}, expected {expected_magic}")
        n_dims = magic & 0xFF
        dims = [struct.unpack(">i", _read_exact(fh, 4, path, "dimension"))[0]
                for _ in range(n_dims)]
        if any(d < 0 for d in dims):
            raise IdxMagicError(f"{path}: negative dimension in header")
        n_bytes = int(np.prod(dims, dtype=np.int64))
        payload = _read_exact(fh, n_bytes, path, "payload")
        if fh.read(1):
            raise IdxTruncatedError(f"{path}: trailing bytes after payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """MNIST-style IDX pair -> Dataset with raw byte-valued pixels.

    Images stay in 0..255; run minmax_normalize to map them into [0, 1].
    """
    images = _load_idx_array(images_path, IDX_IMAGE_MAGIC)
    labels = _load_idx_array(labels_path, IDX_LABEL_MAGIC)
    if images.ndim != 3:
        raise IdxMagicError(f"{images_path}: image file must have 3 dimensions")
    if labels.ndim != 1:
        raise IdxMagicError(f"{labels_path}: label file must have 1 dimension")
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(
            f"{images.shape[0]} images vs {labels.shape[0]} labels")
    feats = images.reshape(images.shape[0], -1).astype(np.float64)
    return Dataset(feats, labels.astype(np.int64))


def load_isolet_csv(path) -> Dataset:
    """ISOLET CSV: 617 real features then a 1..26 class label per row."""
    n_features = 617
    rows = []
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != n_features + 1:
                raise CsvFormatError(
                    f"{path}:{lineno}: {len(fields)} columns, expected "
                    f"{n_features + 1}")
            try:
                values = [float(f) for f in fields]
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{lineno}: {exc}") from None
            label = int(round(values[-1])) - 1
            if not (0 <= label <= 25):
                raise CsvFormatError(
                    f"{path}:{lineno}: class label {values[-1]} outside 1..26")
            rows.append(values[:-1])
            labels.append(label)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    return Dataset(np.array(rows), np.array(labels))


def minmax_normalize(ds: Dataset, stats: NormStats | None = None) -> Dataset:
    """Map features to [0, 1] per column.

    Without stats, each column is scaled by its own min/max (constant
    columns map to 0) and the statistics are recorded on the result. With
    stats — the training statistics, applied to test data — values are
    scaled the same way and clamped into [0, 1].
    """
    if ds.n_samples == 0:
        raise ValueError("empty dataset")
    fresh = stats is None
    if fresh:
        stats = NormStats(ds.features.min(axis=0), ds.features.max(axis=0))
    span = stats.col_max - stats.col_min
    safe = np.where(span > 0, span, 1.0)
    scaled = (ds.features - stats.col_min) / safe
    scaled[:, span == 0] = 0.0
    if not fresh:
        np.clip(scaled, 0.0, 1.0, out=scaled)
    return Dataset(scaled, ds.labels, stats)


def atomic_write_text(path, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _floats_out(arr: np.ndarray) -> list:
    flat = np.asarray(arr, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(flat)):
        raise ModelFormatError("refusing to serialize non-finite values")
    return [format(x, ".17g") for x in flat]


def _floats_in(values, shape, what: str) -> np.ndarray:
    expected = int(np.prod(shape))
    if not isinstance(values, list) or len(values) != expected:
        raise ModelFormatError(f"{what}: expected {expected} values")
    try:
        arr = np.array([float(x) for x in values]).reshape(shape)
    except (TypeError, ValueError):
        raise ModelFormatError(f"{what}: unparsable float") from None
    if not np.all(np.isfinite(arr)):
        raise ModelFormatError(f"{what}: non-finite value")
    return arr


def _rbm_to_dict(p: RbmParams) -> dict:
    return {
        "visible_kind": p.visible_kind,
        "n_visible": p.n_visible,
        "n_hidden": p.n_hidden,
        "label_units": p.label_units,
        "weights": _floats_out(p.w),
        "visible_bias": _floats_out(p.a),
        "hidden_bias": _floats_out(p.b),
    }


def _rbm_from_dict(doc: dict, what: str = "model") -> RbmParams:
    try:
        kind = doc["visible_kind"]
        n_visible = int(doc["n_visible"])
        n_hidden = int(doc["n_hidden"])
        label_units = int(doc.get("label_units", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{what}: bad header field ({exc})") from None
    if kind not in (BINARY, GAUSSIAN):
        raise ModelFormatError(f"{what}: unknown visible_kind {kind!r}")
    if n_visible < 1 or n_hidden < 1:
        raise ModelFormatError(f"{what}: dimensions must be positive")
    w = _floats_in(doc.get("weights"), (n_visible, n_hidden), f"{what}.weights")
    a = _floats_in(doc.get("visible_bias"), (n_visible,), f"{what}.visible_bias")
    b = _floats_in(doc.get("hidden_bias"), (n_hidden,), f"{what}.hidden_bias")
    try:
        return RbmParams(w, a, b, kind, label_units)
    except ValueError as exc:
        raise ModelFormatError(f"{what}: {exc}") from None


def save_model(path, model):
    """Serialize an RbmParams or DbnModel to JSON, atomically."""
    if isinstance(model, RbmParams):
        doc = {"format_version": MODEL_FORMAT_VERSION, "kind": "rbm"}
        doc.update(_rbm_to_dict(model))
    elif isinstance(model, DbnModel):
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "dbn",
            "top_label_units": model.top_label_units,
            "layers": [_rbm_to_dict(layer) for layer in model.layers],
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    atomic_write_text(path, json.dumps(doc, indent=1) + "\n")


def load_model(path):
    """Load a model JSON; bit-identical to what save_model wrote."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: top level must be an object")
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: format_version {version!r}, expected {MODEL_FORMAT_VERSION}")
    kind = doc.get("kind")
    if kind == "rbm":
        return _rbm_from_dict(doc, path)
    if kind == "dbn":
        layers_doc = doc.get("layers")
        if not isinstance(layers_doc, list) or not layers_doc:
            raise ModelFormatError(f"{path}: dbn needs a nonempty layers list")
        layers = [_rbm_from_dict(d, f"{path}.layers[{i}]")
                  for i, d in enumerate(layers_doc)]
        try:
            return DbnModel(layers, int(doc.get("top_label_units", 0)))
        except (TypeError, ValueError) as exc:
            raise ModelFormatError(f"{path}: {exc}") from None
    raise ModelFormatError(f"{path}: unknown kind {kind!r}")


def write_pgm(path, image: np.ndarray):
    """Binary PGM (P5) of values in [0, 1], written atomically."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("PGM image must be 2-D")
    gray = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header + gray.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
