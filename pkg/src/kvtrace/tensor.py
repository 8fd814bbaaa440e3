"""Dense float32 matrix primitives used by every other module.

A "matrix" throughout this library is a 2-D, C-contiguous ``float32``
ndarray with rows = tokens and columns = channels. All functions here are
pure; matrices are treated as immutable once built, so they are safe to
share read-only across threads.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation


def as_matrix(data, *, name: str = "matrix") -> np.ndarray:
    """Coerce ``data`` to a 2-D float32 array, rejecting non-finite values."""
    m = np.ascontiguousarray(data, dtype=np.float32)
    if m.ndim != 2:
        raise ContractViolation(f"{name} must be 2-D, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ContractViolation(f"{name} contains NaN or Inf")
    return m


def as_vector(data, *, name: str = "vector") -> np.ndarray:
    """Coerce ``data`` to a non-empty 1-D float32 array of finite values."""
    v = np.ascontiguousarray(data, dtype=np.float32)
    if v.ndim != 1:
        raise ContractViolation(f"{name} must be 1-D, got shape {v.shape}")
    if v.size == 0:
        raise ContractViolation(f"{name} must be non-empty")
    if not np.isfinite(v).all():
        raise ContractViolation(f"{name} contains NaN or Inf")
    return v


def row_l1_norm(m: np.ndarray, row: int) -> float:
    """Sum of absolute values of one row."""
    if not 0 <= row < m.shape[0]:
        raise ContractViolation(f"row {row} out of range for {m.shape[0]} rows")
    return float(np.abs(m[row]).sum(dtype=np.float64))


def softmax(v) -> np.ndarray:
    """Numerically stable softmax (max-subtracted) over a 1-D vector.

    The output is a probability vector: nonnegative, summing to 1 within
    1e-6, for any finite input including large magnitudes.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ContractViolation("softmax input must be a non-empty 1-D vector")
    if not np.isfinite(v).all():
        raise ContractViolation("softmax input contains NaN or Inf")
    e = np.exp(v - v.max())
    return (e / e.sum()).astype(np.float32)


def matmul_t(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product ``a @ b.T``: result[i, j] = sum_c a[i, c] * b[j, c]."""
    if a.ndim != 2 or b.ndim != 2:
        raise ContractViolation("matmul_t expects 2-D operands")
    if a.shape[1] != b.shape[1]:
        raise ContractViolation(
            f"column mismatch: {a.shape[1]} vs {b.shape[1]}"
        )
    return np.asarray(a @ b.T, dtype=np.float32)
