"""Decode-phase attention over the cache tiers, plus the exact oracle.

``attend_full_precision`` is the reference: softmax(q . K^T / sqrt(d)) . V
in float32. ``attend_mixed`` runs the same computation against a tiered
cache, with quantized tiers dequantized on the fly and, for every pooled
outlier token, the logit and value row at its absolute position overwritten
by the pool's full-precision copy. Overwriting (rather than appending extra
positions) keeps exactly one logit per true token, so no softmax mass is
double-counted.

Both calls read the cache without mutating it; any number may run
concurrently while no writer is active.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cache import TieredCache
from .errors import ContractViolation
from .tensor import softmax


@dataclass
class AttentionResult:
    """Output row plus the per-position weights and pre-softmax logits."""

    output: np.ndarray
    weights: np.ndarray
    scores: np.ndarray


def attend_full_precision(q, keys, values) -> AttentionResult:
    """Exact single-query attention over (n, d) key/value matrices."""
    q = np.asarray(q, dtype=np.float32)
    keys = np.asarray(keys, dtype=np.float32)
    values = np.asarray(values, dtype=np.float32)
    if q.ndim != 1:
        raise ContractViolation("query must be 1-D")
    if keys.ndim != 2 or values.ndim != 2:
        raise ContractViolation("keys and values must be 2-D")
    if keys.shape[0] != values.shape[0]:
        raise ContractViolation("keys and values must cover the same tokens")
    if keys.shape[1] != q.shape[0] or values.shape[1] != q.shape[0]:
        raise ContractViolation("width mismatch between query and cache rows")
    if keys.shape[0] == 0:
        raise ContractViolation("attention needs at least one cached token")

    d = q.shape[0]
    scores = (keys @ q) / np.float32(np.sqrt(d))
    weights = softmax(scores)
    output = weights @ values
    return AttentionResult(
        output=output.astype(np.float32),
        weights=weights,
        scores=scores.astype(np.float32),
    )


def reconstructed_kv(cache: TieredCache) -> tuple[np.ndarray, np.ndarray]:
    """Materialize the cache as full (total_tokens, d) key/value matrices.

    Quantized blocks are dequantized, pending rows copied verbatim, and
    rows at pooled positions replaced with the pool's full-precision
    entries.
    """
    parts_k = [b.to_matrix() for b in cache.quantized_k] + [cache.pending_k]
    parts_v = [b.to_matrix() for b in cache.quantized_v] + [cache.pending_v]
    keys = np.concatenate(parts_k, axis=0) if cache.total_tokens else np.empty((0, cache.config.head_dim), np.float32)
    values = np.concatenate(parts_v, axis=0) if cache.total_tokens else np.empty((0, cache.config.head_dim), np.float32)
    for entry in cache.pool.entries:
        keys[entry.position] = entry.key
        values[entry.position] = entry.value
    return keys, values


def attend_mixed(q, cache: TieredCache) -> AttentionResult:
    """Single-query attention over all tiers of a cache.

    The weights vector spans every token the cache has seen, sums to 1
    within 1e-6, and is independent of the shadow (mean-substituted)
    quantized rows at pooled positions.
    """
    q = np.asarray(q, dtype=np.float32)
    if q.shape != (cache.config.head_dim,):
        raise ContractViolation(f"query must have shape ({cache.config.head_dim},)")
    if cache.total_tokens == 0:
        raise ContractViolation("cannot attend over an empty cache")
    keys, values = reconstructed_kv(cache)
    return attend_full_precision(q, keys, values)


def l1_error(a, b) -> float:
    """Sum of absolute element differences between two equal-length vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractViolation(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())
