"""Writers for the embedding-bank file contract.

The consumer of these files is a separate benchmarking tool; the contract
is the byte layout itself, so this module implements it independently:

binary "EMB1", little-endian:
    bytes 0-3  magic ``EMB1``
    u32        class count
    u32        embedding dimension p
    u32        total vector count
    per class  u32 name length, UTF-8 name, u32 vectors in this class
    vectors    grouped by class in table order, each p * float32
    trailer    u32 provenance length, UTF-8 provenance

CSV: header ``label,v0,...,v{p-1}``, one row per vector, values printed
with 9 significant digits (enough to round-trip float32), no provenance.
"""

from __future__ import annotations

import struct

import numpy as np

_MAGIC = b"EMB1"
_U32 = struct.Struct("<I")


def write_binary_bank(path, class_names, vectors_by_class, provenance: str) -> None:
    """Write a class-grouped bank in the EMB1 layout."""
    dims = {np.asarray(v).shape[1] for v in vectors_by_class}
    if len(dims) != 1:
        raise ValueError(f"inconsistent vector dimensions across classes: {sorted(dims)}")
    dim = dims.pop()
    total = sum(np.asarray(v).shape[0] for v in vectors_by_class)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(_U32.pack(len(class_names)))
        fh.write(_U32.pack(dim))
        fh.write(_U32.pack(total))
        for name, vecs in zip(class_names, vectors_by_class):
            encoded = name.encode("utf-8")
            fh.write(_U32.pack(len(encoded)))
            fh.write(encoded)
            fh.write(_U32.pack(np.asarray(vecs).shape[0]))
        for vecs in vectors_by_class:
            fh.write(np.ascontiguousarray(vecs, dtype="<f4").tobytes())
        encoded = provenance.encode("utf-8")
        fh.write(_U32.pack(len(encoded)))
        fh.write(encoded)


def write_csv_bank(path, class_names, vectors_by_class) -> None:
    """Write the same bank as CSV (provenance is not representable)."""
    dim = np.asarray(vectors_by_class[0]).shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("label," + ",".join(f"v{i}" for i in range(dim)) + "\n")
        for name, vecs in zip(class_names, vectors_by_class):
            for row in np.asarray(vecs, dtype=np.float32):
                fh.write(name + "," + ",".join(f"{float(x):.9g}" for x in row) + "\n")
