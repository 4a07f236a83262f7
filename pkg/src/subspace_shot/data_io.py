"""Embedding-bank persistence and synthetic bank generation.

A bank is a class-grouped collection of nonnegative embedding vectors from
which episodes are sampled.  Two interchangeable on-disk formats are
supported (full byte-level description in docs/formats.md):

* ``binary`` ("EMB1", preferred): little-endian with float32 vectors.
    bytes 0-3  magic ``EMB1``
    u32        class count
    u32        embedding dimension p
    u32        total vector count
    per class  u32 name length, UTF-8 name, u32 vectors in this class
    vectors    grouped by class in table order, each p * float32
    trailer    u32 provenance length, UTF-8 provenance
* ``csv``: header ``label,v0,...,v{p-1}``, one row per vector.  Values are
  written with 9 significant digits (enough to round-trip float32) and read
  back through float32, so both formats quantize identically.  CSV carries
  no provenance.

Vectors are float64 in memory; a save/load cycle therefore reproduces a
bank exactly up to float32 quantization.
"""

from __future__ import annotations

import csv
import io
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .rng import SplitMix64

_MAGIC = b"EMB1"
_U32 = struct.Struct("<I")

PROTO_STYLES = ("onehot_blocks", "random_nonneg")


class BankError(Exception):
    """Base class for bank file problems."""


class BankMagicError(BankError):
    """File does not start with the EMB1 magic."""


class BankTruncatedError(BankError):
    """File ended before the declared payload was complete."""


class BankDimensionError(BankError):
    """Declared dimensions or counts disagree with the payload."""


class BankNegativeEntryError(BankError):
    """Vector entries are negative and clamping was not requested."""


@dataclass
class EmbeddingBank:
    """Class-grouped nonnegative embedding vectors.

    ``vectors[i]`` is a (count_i, dim) float64 array holding the vectors of
    class ``class_names[i]``, one per row.  Banks are immutable by
    convention once constructed; transforms return new banks.
    """

    dim: int
    class_names: list[str]
    vectors: list[np.ndarray]
    provenance: str = ""

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if len(self.class_names) != len(self.vectors):
            raise ValueError(
                f"{len(self.class_names)} class names but "
                f"{len(self.vectors)} vector groups"
            )
        if not self.class_names:
            raise ValueError("bank must contain at least one class")
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class names must be unique")
        cleaned = []
        for name, vecs in zip(self.class_names, self.vectors):
            arr = np.ascontiguousarray(vecs, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != self.dim:
                raise ValueError(
                    f"class '{name}' vectors must have shape (count, {self.dim}), "
                    f"got {arr.shape}"
                )
            if arr.shape[0] < 1:
                raise ValueError(f"class '{name}' has no vectors")
            if not np.isfinite(arr).all():
                raise ValueError(f"class '{name}' contains non-finite entries")
            if (arr < 0.0).any():
                raise BankNegativeEntryError(
                    f"class '{name}' contains negative entries"
                )
            cleaned.append(arr)
        self.vectors = cleaned

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def total_vectors(self) -> int:
        return sum(v.shape[0] for v in self.vectors)

    def min_class_size(self) -> tuple[str, int]:
        """(name, size) of the smallest class."""
        sizes = [(v.shape[0], n) for n, v in zip(self.class_names, self.vectors)]
        size, name = min(sizes)
        return name, size


def l2_normalize_columns(bank: EmbeddingBank) -> EmbeddingBank:
    """Scale every vector to unit L2 norm (zero vectors are kept as-is).

    Normalization preserves nonnegativity, so the result is a valid bank.
    """
    normalized = []
    for vecs in bank.vectors:
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        safe = np.where(norms > 0.0, norms, 1.0)
        normalized.append(vecs / safe)
    return EmbeddingBank(
        dim=bank.dim,
        class_names=list(bank.class_names),
        vectors=normalized,
        provenance=bank.provenance + " | l2-normalized" if bank.provenance else "l2-normalized",
    )


def _resolve_format(path: str, fmt: str | None) -> str:
    if fmt is None:
        fmt = "csv" if str(path).lower().endswith(".csv") else "binary"
    if fmt not in ("binary", "csv"):
        raise ValueError(f"unknown bank format '{fmt}' (expected 'binary' or 'csv')")
    return fmt


def _apply_negative_policy(
    class_names: list[str],
    groups: list[np.ndarray],
    allow_negative: bool,
    origin: str,
) -> list[np.ndarray]:
    n_negative = sum(int((g < 0.0).sum()) for g in groups)
    if n_negative == 0:
        return groups
    if not allow_negative:
        bad = next(n for n, g in zip(class_names, groups) if (g < 0.0).any())
        raise BankNegativeEntryError(
            f"{origin}: {n_negative} negative entries (first in class '{bad}'); "
            "embeddings are expected to be nonnegative ReLU outputs, "
            "pass allow_negative to clamp them to zero"
        )
    warnings.warn(
        f"{origin}: clamped {n_negative} negative entries to zero",
        stacklevel=3,
    )
    return [np.maximum(g, 0.0) for g in groups]


def load_bank(path, fmt: str | None = None, allow_negative: bool = False) -> EmbeddingBank:
    """Read a bank file in the given (or suffix-inferred) format."""
    fmt = _resolve_format(path, fmt)
    if fmt == "binary":
        with open(path, "rb") as fh:
            return _read_binary(fh.read(), str(path), allow_negative)
    with open(path, "r", newline="", encoding="utf-8") as fh:
        return _read_csv(fh, str(path), allow_negative)


def save_bank(bank: EmbeddingBank, path, fmt: str | None = None) -> None:
    """Write a bank; the result reads back equal up to float32 quantization."""
    fmt = _resolve_format(path, fmt)
    if fmt == "binary":
        payload = _write_binary(bank)
        with open(path, "wb") as fh:
            fh.write(payload)
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            _write_csv(bank, fh)


def _write_binary(bank: EmbeddingBank) -> bytes:
    out = io.BytesIO()
    out.write(_MAGIC)
    out.write(_U32.pack(bank.n_classes))
    out.write(_U32.pack(bank.dim))
    out.write(_U32.pack(bank.total_vectors))
    for name, vecs in zip(bank.class_names, bank.vectors):
        encoded = name.encode("utf-8")
        out.write(_U32.pack(len(encoded)))
        out.write(encoded)
        out.write(_U32.pack(vecs.shape[0]))
    for vecs in bank.vectors:
        out.write(np.ascontiguousarray(vecs, dtype="<f4").tobytes())
    encoded = bank.provenance.encode("utf-8")
    out.write(_U32.pack(len(encoded)))
    out.write(encoded)
    return out.getvalue()


class _Cursor:
    """Bounds-checked reader over a byte payload."""

    def __init__(self, data: bytes, origin: str) -> None:
        self.data = data
        self.pos = 0
        self.origin = origin

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.data):
            raise BankTruncatedError(
                f"{self.origin}: truncated while reading {what} "
                f"(needed {count} bytes at offset {self.pos}, "
                f"file has {len(self.data)})"
            )
        chunk = self.data[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def take_u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def _read_binary(data: bytes, origin: str, allow_negative: bool) -> EmbeddingBank:
    cur = _Cursor(data, origin)
    magic = cur.take(4, "magic")
    if magic != _MAGIC:
        raise BankMagicError(
            f"{origin}: bad magic {magic!r}, expected {_MAGIC!r}"
        )
    n_classes = cur.take_u32("class count")
    dim = cur.take_u32("dimension")
    total = cur.take_u32("total vector count")
    if n_classes == 0 or dim == 0:
        raise BankDimensionError(f"{origin}: zero class count or dimension")
    names: list[str] = []
    counts: list[int] = []
    for i in range(n_classes):
        name_len = cur.take_u32(f"name length of class {i}")
        names.append(cur.take(name_len, f"name of class {i}").decode("utf-8"))
        counts.append(cur.take_u32(f"vector count of class {i}"))
    if sum(counts) != total:
        raise BankDimensionError(
            f"{origin}: header declares {total} vectors but the label table "
            f"sums to {sum(counts)}"
        )
    groups: list[np.ndarray] = []
    for name, count in zip(names, counts):
        raw = cur.take(4 * count * dim, f"vectors of class '{name}'")
        arr = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        groups.append(arr.reshape(count, dim))
    prov_len = cur.take_u32("provenance length")
    provenance = cur.take(prov_len, "provenance").decode("utf-8")
    if cur.pos != len(data):
        raise BankDimensionError(
            f"{origin}: {len(data) - cur.pos} unexpected trailing bytes"
        )
    groups = _apply_negative_policy(names, groups, allow_negative, origin)
    return EmbeddingBank(dim=dim, class_names=names, vectors=groups, provenance=provenance)


def _write_csv(bank: EmbeddingBank, fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["label"] + [f"v{i}" for i in range(bank.dim)])
    for name, vecs in zip(bank.class_names, bank.vectors):
        for row in np.asarray(vecs, dtype=np.float32):
            writer.writerow([name] + [f"{float(x):.9g}" for x in row])


def _read_csv(fh, origin: str, allow_negative: bool) -> EmbeddingBank:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise BankTruncatedError(f"{origin}: empty CSV file") from None
    dim = len(header) - 1
    if dim < 1 or header[0] != "label" or header[1:] != [f"v{i}" for i in range(dim)]:
        raise BankDimensionError(
            f"{origin}: malformed CSV header, expected 'label,v0,...,v{{p-1}}'"
        )
    names: list[str] = []
    rows: dict[str, list[np.ndarray]] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != dim + 1:
            raise BankDimensionError(
                f"{origin}: line {line_no} has {len(row) - 1} values, "
                f"header declares {dim}"
            )
        label = row[0]
        try:
            # parse, then quantize through float32 to match the binary format
            values = np.array(row[1:], dtype=np.float64).astype(np.float32)
        except ValueError as exc:
            raise BankDimensionError(
                f"{origin}: line {line_no}: {exc}"
            ) from None
        if label not in rows:
            names.append(label)
            rows[label] = []
        rows[label].append(values.astype(np.float64))
    if not names:
        raise BankTruncatedError(f"{origin}: CSV has a header but no rows")
    groups = [np.vstack(rows[name]) for name in names]
    groups = _apply_negative_policy(names, groups, allow_negative, origin)
    return EmbeddingBank(dim=dim, class_names=names, vectors=groups, provenance="")


def gen_synthetic(
    n_classes: int,
    per_class: int,
    dim: int,
    noise_sigma: float,
    proto_style: str = "onehot_blocks",
    seed: int = 0,
) -> EmbeddingBank:
    """Deterministic synthetic bank: per-class prototype plus clamped noise.

    ``onehot_blocks`` prototypes occupy disjoint coordinate blocks of
    magnitude 1 (requires dim >= n_classes); ``random_nonneg`` prototypes
    are uniform on [0, 1]^dim.  Vectors are prototype + N(0, sigma^2) noise
    clamped at zero, emulating ReLU outputs.  The draw order is fixed and
    documented in docs/determinism.md, so a seed pins the bank exactly.
    """
    if n_classes < 1 or per_class < 1 or dim < 1:
        raise ValueError(
            f"n_classes, per_class and dim must be positive, got "
            f"({n_classes}, {per_class}, {dim})"
        )
    if noise_sigma < 0.0:
        raise ValueError(f"noise_sigma must be nonnegative, got {noise_sigma}")
    if proto_style not in PROTO_STYLES:
        raise ValueError(
            f"unknown proto_style '{proto_style}' (expected one of {PROTO_STYLES})"
        )
    if proto_style == "onehot_blocks" and dim < n_classes:
        raise ValueError(
            f"onehot_blocks needs dim >= n_classes, got dim={dim} < {n_classes}"
        )

    rng = SplitMix64(seed)
    if proto_style == "onehot_blocks":
        prototypes = np.zeros((n_classes, dim))
        block = dim // n_classes
        for c in range(n_classes):
            prototypes[c, c * block : (c + 1) * block] = 1.0
    else:
        prototypes = rng.floats(n_classes * dim).reshape(n_classes, dim)

    groups = []
    for c in range(n_classes):
        noise = rng.normals(per_class * dim).reshape(per_class, dim)
        groups.append(np.maximum(prototypes[c] + noise_sigma * noise, 0.0))

    return EmbeddingBank(
        dim=dim,
        class_names=[f"class_{c:03d}" for c in range(n_classes)],
        vectors=groups,
        provenance=(
            f"synthetic proto_style={proto_style} n_classes={n_classes} "
            f"per_class={per_class} dim={dim} noise_sigma={noise_sigma!r} seed={seed}"
        ),
    )
