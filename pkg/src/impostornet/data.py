"""Dataset/model persistence and synthetic dataset generators.

Both binary formats are little-endian and deliberately trivial to parse
from any language:

Dataset (.impd)::

    magic "IMPD" | version u32 | M u32 | dim u32 | L u32
    M records of (label u32, dim * f32)

Model (.impm)::

    magic "IMPM" | version u32 | kind u8 | class_count u32 | sigma f64
    backbone: frozen u8 | input_dim u32 | n_layers u32
              then per layer: out u32 | activation u8 | W f32[out*in] | b f32[out]
    head (by kind):
      0 raw points:   M u32 | d u32 | labels u32[M] | points f32[M*d]
      1 coded points: M u32 | d u32 | m u32 | k u32 | labels u32[M]
                      | centroids f32[m*k*(d/m)] | codes u8/u16[M*m]
      2 softmax head: d u32 | W f32[L*d] | b f32[L]
    metadata: u32 byte length | UTF-8 JSON
    crc32 u32 of all preceding bytes

Values are stored as float32; in-memory computation is float64 throughout,
so write -> read -> write is byte-identical and reading back a file
reproduces exactly what was stored.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .backbone import Backbone, Layer
from .pq import PqCodebook
from .rbf import ImpostorSet, KernelParams

DATASET_MAGIC = b"IMPD"
MODEL_MAGIC = b"IMPM"
FORMAT_VERSION = 1

_ACT_CODES = {"identity": 0, "relu": 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


class DataFormatError(Exception):
    """Base for all file-format failures."""


class BadMagicError(DataFormatError):
    pass


class VersionError(DataFormatError):
    pass


class TruncatedError(DataFormatError):
    pass


class RecordError(DataFormatError):
    """A stored value violates an invariant (bad label, non-finite float)."""


class ChecksumError(DataFormatError):
    pass


@dataclass
class LabeledEmbeddingSet:
    """M vectors with integer class labels; vectors kept in float32."""

    vectors: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1:
            raise ValueError("vectors must be a non-empty (M, dim) matrix")
        if self.labels.shape != (self.vectors.shape[0],):
            raise ValueError("labels must be one integer per vector")
        if not np.isfinite(self.vectors).all():
            raise ValueError("vectors contain non-finite values")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError("labels must lie in [0, n_classes)")

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def subset(self, mask: np.ndarray) -> "LabeledEmbeddingSet":
        return LabeledEmbeddingSet(self.vectors[mask], self.labels[mask],
                                   self.n_classes)


# ---------------------------------------------------------------------------
# synthetic generators

@dataclass
class SyntheticSpec:
    generator: str = "rings"          # rings | blobs | moons
    classes: int = 2
    per_class: int = 1000
    noise: float = 0.1
    seed: int = 0
    fractions: tuple[float, float, float] = (0.5, 0.25, 0.25)

    def __post_init__(self):
        if self.generator not in ("rings", "blobs", "moons"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.classes < 1 or self.per_class < 1:
            raise ValueError("need at least one class and one sample")
        if self.generator == "moons" and self.classes != 2:
            raise ValueError("moons is a two-class generator")
        if abs(sum(self.fractions) - 1.0) > 1e-9 or min(self.fractions) < 0:
            raise ValueError("fractions must be non-negative and sum to 1")


@dataclass
class SplitSets:
    train: LabeledEmbeddingSet
    val: LabeledEmbeddingSet
    test: LabeledEmbeddingSet


def _ring(rng, radius, n, noise):
    angles = rng.uniform(0.0, 2.0 * np.pi, n)
    radii = radius + rng.normal(0.0, noise, n)
    return np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)


def generate(spec: SyntheticSpec) -> SplitSets:
    """Deterministic three-way split of a synthetic 2-D dataset.

    rings: class l lives on the circle of radius 1 + l with Gaussian radial
    noise — linearly non-separable for two or more classes. blobs: isotropic
    Gaussians centered on a circle of radius 4. moons: two interleaved half
    circles.
    """
    rng = np.random.default_rng(spec.seed)
    per_class_points = []
    for label in range(spec.classes):
        n = spec.per_class
        if spec.generator == "rings":
            pts = _ring(rng, 1.0 + label, n, spec.noise)
        elif spec.generator == "blobs":
            angle = 2.0 * np.pi * label / spec.classes
            center = 4.0 * np.array([np.cos(angle), np.sin(angle)])
            pts = center + rng.normal(0.0, max(spec.noise, 1e-12), (n, 2))
        else:  # moons
            t = rng.uniform(0.0, np.pi, n)
            if label == 0:
                pts = np.stack([np.cos(t), np.sin(t)], axis=1)
            else:
                pts = np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1)
            pts += rng.normal(0.0, spec.noise, (n, 2))
        per_class_points.append(pts.astype(np.float32))

    n = spec.per_class
    n_train = round(spec.fractions[0] * n)
    n_val = round(spec.fractions[1] * n)
    splits = ([], [], [])
    for label, pts in enumerate(per_class_points):
        order = rng.permutation(n)
        bounds = (order[:n_train], order[n_train:n_train + n_val],
                  order[n_train + n_val:])
        for part, take in zip(splits, bounds):
            part.append((pts[take], np.full(take.shape[0], label,
                                            dtype=np.int64)))

    made = []
    for part in splits:
        vectors = np.concatenate([p for p, _ in part])
        labels = np.concatenate([l for _, l in part])
        order = rng.permutation(vectors.shape[0])
        made.append(LabeledEmbeddingSet(vectors[order], labels[order],
                                        spec.classes))
    return SplitSets(*made)


# ---------------------------------------------------------------------------
# dataset file I/O

def write_dataset(path, dataset: LabeledEmbeddingSet) -> None:
    header = DATASET_MAGIC + struct.pack(
        "<IIII", FORMAT_VERSION, dataset.count, dataset.dim,
        dataset.n_classes)
    records = np.empty(dataset.count,
                       dtype=_record_dtype(dataset.dim))
    records["label"] = dataset.labels
    records["vec"] = dataset.vectors
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(records.tobytes())


def _record_dtype(dim: int):
    return np.dtype([("label", "<u4"), ("vec", "<f4", (dim,))])


def read_dataset(path) -> LabeledEmbeddingSet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != DATASET_MAGIC:
        raise BadMagicError(f"{path}: not a dataset file")
    if len(blob) < 20:
        raise TruncatedError(f"{path}: header truncated")
    version, count, dim, n_classes = struct.unpack("<IIII", blob[4:20])
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported version {version}")
    if count < 1 or dim < 1 or n_classes < 1:
        raise RecordError(f"{path}: degenerate header")
    rec = _record_dtype(dim)
    expected = 20 + count * rec.itemsize
    if len(blob) != expected:
        raise TruncatedError(f"{path}: expected {expected} bytes, "
                             f"found {len(blob)}")
    records = np.frombuffer(blob, dtype=rec, count=count, offset=20)
    labels = records["label"].astype(np.int64)
    vectors = records["vec"]
    bad = np.flatnonzero(labels >= n_classes)
    if bad.size:
        raise RecordError(f"{path}: record {bad[0]} has label "
                          f"{labels[bad[0]]} >= {n_classes}")
    finite = np.isfinite(vectors).all(axis=1)
    if not finite.all():
        raise RecordError(f"{path}: record {int(np.flatnonzero(~finite)[0])} "
                          "has non-finite values")
    return LabeledEmbeddingSet(vectors, labels, n_classes)


# ---------------------------------------------------------------------------
# model file I/O

KIND_RAW = 0
KIND_PQ = 1
KIND_SOFTMAX = 2


def _pack_backbone(net: Backbone) -> bytes:
    parts = [struct.pack("<BII", int(net.frozen), net.input_dim,
                         len(net.layers))]
    for layer in net.layers:
        parts.append(struct.pack("<IB", layer.weights.shape[0],
                                 _ACT_CODES[layer.activation]))
        parts.append(layer.weights.astype("<f4").tobytes())
        parts.append(layer.bias.astype("<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.off = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.blob):
            raise TruncatedError(f"{self.path}: truncated at byte {self.off}")
        out = self.blob[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype, shape):
        n = int(np.prod(shape)) * np.dtype(dtype).itemsize
        arr = np.frombuffer(self.take(n), dtype=dtype).reshape(shape)
        return arr


def _unpack_backbone(r: _Reader) -> Backbone:
    frozen, input_dim, n_layers = r.unpack("<BII")
    layers = []
    width = input_dim
    for _ in range(n_layers):
        out, act = r.unpack("<IB")
        if act not in _ACT_NAMES:
            raise RecordError(f"{r.path}: unknown activation code {act}")
        w = r.array("<f4", (out, width)).astype(np.float64)
        b = r.array("<f4", (out,)).astype(np.float64)
        layers.append(Layer(w, b, _ACT_NAMES[act]))
        width = out
    return Backbone(layers, input_dim, frozen=bool(frozen))


def write_model(path, model) -> None:
    """Serialize a trained model (see the module docstring for the layout)."""
    parts = [MODEL_MAGIC, struct.pack("<IBI", FORMAT_VERSION, model.kind,
                                      model.class_count)]
    sigma = model.kernel.sigma if model.kernel is not None else 0.0
    parts.append(struct.pack("<d", sigma))
    parts.append(_pack_backbone(model.backbone))
    if model.kind == KIND_RAW:
        imp = model.impostors
        parts.append(struct.pack("<II", imp.count, imp.dim))
        parts.append(imp.labels.astype("<u4").tobytes())
        parts.append(imp.points.astype("<f4").tobytes())
    elif model.kind == KIND_PQ:
        imp, cb = model.impostors, model.codebook
        parts.append(struct.pack("<IIII", imp.count, imp.dim,
                                 cb.n_subspaces, cb.k))
        parts.append(imp.labels.astype("<u4").tobytes())
        parts.append(cb.centroids.astype("<f4").tobytes())
        parts.append(np.ascontiguousarray(model.codes).tobytes())
    elif model.kind == KIND_SOFTMAX:
        head = model.softmax_head
        parts.append(struct.pack("<I", head.weights.shape[1]))
        parts.append(head.weights.astype("<f4").tobytes())
        parts.append(head.bias.astype("<f4").tobytes())
    else:
        raise ValueError(f"unknown model kind {model.kind}")
    meta = json.dumps(model.metadata, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(meta)))
    parts.append(meta)
    body = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body)))


def read_model(path):
    from .train import SoftmaxHead, TrainedModel  # deferred: avoids a cycle

    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != MODEL_MAGIC:
        raise BadMagicError(f"{path}: not a model file")
    if len(blob) < 8:
        raise TruncatedError(f"{path}: truncated header")
    body, stored = blob[:-4], blob[-4:]
    if struct.unpack("<I", stored)[0] != zlib.crc32(body):
        raise ChecksumError(f"{path}: checksum mismatch")
    r = _Reader(body, path)
    r.take(4)
    version, kind, class_count = r.unpack("<IBI")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported version {version}")
    (sigma,) = r.unpack("<d")
    net = _unpack_backbone(r)
    kernel = KernelParams(sigma) if kind != KIND_SOFTMAX else None

    impostors = codebook = codes = softmax_head = None
    if kind == KIND_RAW:
        count, dim = r.unpack("<II")
        labels = r.array("<u4", (count,)).astype(np.int64)
        points = r.array("<f4", (count, dim)).astype(np.float64)
        impostors = ImpostorSet(points, labels, class_count, frozen=True)
    elif kind == KIND_PQ:
        count, dim, m, k = r.unpack("<IIII")
        labels = r.array("<u4", (count,)).astype(np.int64)
        if dim % m:
            raise RecordError(f"{path}: dim {dim} not divisible by m {m}")
        cents = r.array("<f4", (m, k, dim // m))
        codebook = PqCodebook(cents.copy())
        codes = r.array(codebook.code_dtype, (count, m)).copy()
        if codes.max() >= k:
            raise RecordError(f"{path}: code indexes a missing centroid")
        from .pq import decode
        impostors = ImpostorSet(decode(codebook, codes), labels, class_count,
                                frozen=True)
    elif kind == KIND_SOFTMAX:
        (dim,) = r.unpack("<I")
        w = r.array("<f4", (class_count, dim)).astype(np.float64)
        b = r.array("<f4", (class_count,)).astype(np.float64)
        softmax_head = SoftmaxHead(w, b)
    else:
        raise RecordError(f"{path}: unknown model kind {kind}")

    (meta_len,) = r.unpack("<I")
    metadata = json.loads(r.take(meta_len).decode("utf-8"))
    if r.off != len(body):
        raise TruncatedError(f"{path}: {len(body) - r.off} trailing bytes")
    return TrainedModel(backbone=net, impostors=impostors, kernel=kernel,
                        class_count=class_count, metadata=metadata,
                        codebook=codebook, codes=codes,
                        softmax_head=softmax_head)
