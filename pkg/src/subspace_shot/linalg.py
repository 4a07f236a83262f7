"""Dense float64 matrix kernels shared by every other module.

All in-memory arithmetic is IEEE-754 double precision in row-major layout;
float32 quantization happens only at the file-format boundary (data_io).
Every function is pure and safe to call from concurrent workers.
"""

from __future__ import annotations

import numpy as np


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite, non-empty, 2-D, C-contiguous float64 array."""
    a = np.ascontiguousarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    return a


def matmul(a, b) -> np.ndarray:
    """Matrix product with explicit dimension checking."""
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by "
            f"{b.shape[0]}x{b.shape[1]}: inner dimensions "
            f"{a.shape[1]} and {b.shape[0]} differ"
        )
    return a @ b


def frobenius_norm_sq(a) -> float:
    """Sum of squared entries."""
    flat = as_matrix(a).ravel()
    return float(np.dot(flat, flat))


def project_nonneg(a) -> np.ndarray:
    """Entrywise max(x, 0); idempotent and never increases an entry."""
    return np.maximum(as_matrix(a), 0.0)


def softmax_cols(a) -> np.ndarray:
    """Column-wise softmax, stabilized by subtracting each column's max."""
    a = as_matrix(a)
    e = np.exp(a - a.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)
