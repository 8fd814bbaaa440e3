"""Per-(layer, head) tiered KV cache.

Three tiers hold every token exactly once:

  * quantized store: consecutive groups of ``group_size`` tokens, keys
    quantized per channel and values per token;
  * pending buffer: full-precision rows not yet quantized, covering both
    the group being filled and the ``residual`` most recent tokens;
  * outlier pool: full-precision rows of pooled outlier tokens, which are
    additionally shadowed in the quantized store by their mean-substituted
    rows (attention resolves the duplication by overwriting their logits).

Appending the token that brings the pending count to ``group_size +
residual`` quantizes the oldest ``group_size`` pending rows, so the newest
``residual`` tokens are always full precision.

Each cache is single-writer; distinct (layer, head) caches are independent
and may be driven in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .outlier import OutlierEntry, OutlierPool, score_tokens, substitute_means
from .quant import (
    FP16_BITS,
    PassthroughBlock,
    quantize_keys_channelwise,
    quantize_values_tokenwise,
)


@dataclass(frozen=True)
class EngineConfig:
    """Quantization engine settings.

    Defaults reproduce the reference setting: 2-bit codes, groups of 128,
    a 32-token residual window, 3 pooled outlier tokens per (layer, head)
    with pooling disabled on layers 0 and 1, and a 32-entry auxiliary pool.
    """

    bits: int = 2
    group_size: int = 128
    residual: int = 32
    outlier_num: int = 3
    skip_layers: tuple[int, ...] = (0, 1)
    aux_capacity: int = 32
    n_layers: int = 1
    n_heads: int = 1
    head_dim: int = 64

    def __post_init__(self):
        if not 1 <= self.bits <= 8:
            raise ContractViolation(f"bits must be in [1, 8], got {self.bits}")
        if self.group_size < 1:
            raise ContractViolation("group_size must be >= 1")
        if self.residual < 0 or self.outlier_num < 0 or self.aux_capacity < 0:
            raise ContractViolation("residual, outlier_num, aux_capacity must be >= 0")
        if self.n_layers < 1 or self.n_heads < 1 or self.head_dim < 1:
            raise ContractViolation("dimensions must be >= 1")

    def outlier_capacity(self, layer: int) -> int:
        """Pool capacity for one layer (0 on skipped layers)."""
        return 0 if layer in self.skip_layers else self.outlier_num


@dataclass(frozen=True)
class MemoryBreakdown:
    """Cache footprint in bits under fp16-equivalent accounting.

    Quantized codes count at their code width, parameter lines at 2x16
    bits, and full-precision rows (pending buffer and outlier/aux pool) at
    16 bits per value.
    """

    quantized_bits: int
    param_bits: int
    pending_bits: int
    pool_bits: int

    @property
    def total_bits(self) -> int:
        return self.quantized_bits + self.param_bits + self.pending_bits + self.pool_bits


class TieredCache:
    """Streaming KV cache for a single (layer, head) pair."""

    def __init__(self, config: EngineConfig, layer: int = 0, passthrough: bool = False):
        self.config = config
        self.layer = layer
        self.passthrough = passthrough
        self.pool = OutlierPool(
            capacity=config.outlier_capacity(layer),
            aux_capacity=config.aux_capacity,
        )
        self.quantized_k: list = []
        self.quantized_v: list = []
        self.substituted_positions: set[int] = set()
        self.total_tokens = 0
        self.quantized_tokens = 0
        cap = config.group_size + config.residual
        self._pending_k = np.empty((cap, config.head_dim), dtype=np.float32)
        self._pending_v = np.empty((cap, config.head_dim), dtype=np.float32)
        self._pending_count = 0

    @property
    def pending_rows(self) -> int:
        return self._pending_count

    @property
    def pending_k(self) -> np.ndarray:
        """Full-precision pending keys (view; do not mutate)."""
        return self._pending_k[: self._pending_count]

    @property
    def pending_v(self) -> np.ndarray:
        return self._pending_v[: self._pending_count]

    def append(self, k_row, v_row) -> None:
        """Add one token's key/value rows, quantizing a group when due."""
        k_row = np.asarray(k_row, dtype=np.float32)
        v_row = np.asarray(v_row, dtype=np.float32)
        d = self.config.head_dim
        if k_row.shape != (d,) or v_row.shape != (d,):
            raise ContractViolation(f"rows must have shape ({d},)")
        if not (np.isfinite(k_row).all() and np.isfinite(v_row).all()):
            raise ContractViolation("rows contain NaN or Inf")

        self._pending_k[self._pending_count] = k_row
        self._pending_v[self._pending_count] = v_row
        self._pending_count += 1
        self.total_tokens += 1
        if self._pending_count - self.config.residual >= self.config.group_size:
            self.quantize_oldest_group()

    def quantize_oldest_group(self) -> None:
        """Quantize the oldest ``group_size`` pending rows into the store.

        When this layer pools outliers and the pool is not frozen, the
        group's tokens first compete for pool slots; winners keep their
        full-precision rows in the pool and are mean-substituted in the
        group before quantization.
        """
        g = self.config.group_size
        if self._pending_count < g:
            raise ContractViolation(
                f"need {g} pending rows to quantize, have {self._pending_count}"
            )
        base = self.quantized_tokens
        group_k = self._pending_k[:g].copy()
        group_v = self._pending_v[:g].copy()

        if self.pool.capacity > 0 and not self.pool.frozen:
            scores = score_tokens(group_k)
            candidates = [
                OutlierEntry(
                    position=base + i,
                    key=group_k[i].copy(),
                    value=group_v[i].copy(),
                    score=float(scores[i]),
                )
                for i in range(g)
            ]
            selected, _evicted = self.pool.update(candidates)
            if selected:
                in_group = [p - base for p in selected]
                group_k, group_v = substitute_means(group_k, group_v, in_group)
                self.substituted_positions |= selected

        if self.passthrough:
            self.quantized_k.append(PassthroughBlock(group_k))
            self.quantized_v.append(PassthroughBlock(group_v))
        else:
            self.quantized_k.append(quantize_keys_channelwise(group_k, self.config.bits))
            self.quantized_v.append(quantize_values_tokenwise(group_v, self.config.bits))
        self.quantized_tokens += g

        remaining = self._pending_count - g
        self._pending_k[:remaining] = self._pending_k[g : self._pending_count]
        self._pending_v[:remaining] = self._pending_v[g : self._pending_count]
        self._pending_count = remaining

    def memory_usage(self) -> MemoryBreakdown:
        """Current footprint under fp16-equivalent accounting."""
        quantized_bits = sum(
            b.code_bits for b in self.quantized_k + self.quantized_v
        )
        param_bits = sum(b.param_bits for b in self.quantized_k + self.quantized_v)
        d = self.config.head_dim
        pending_bits = self._pending_count * d * FP16_BITS * 2
        pool_rows = len(self.pool.entries) + len(self.pool.aux)
        pool_bits = pool_rows * d * FP16_BITS * 2
        return MemoryBreakdown(
            quantized_bits=quantized_bits,
            param_bits=param_bits,
            pending_bits=pending_bits,
            pool_bits=pool_bits,
        )
