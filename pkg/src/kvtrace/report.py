"""Experiment metrics: memory estimation, compression curves, retention study.

Experiments over seeds and configurations are embarrassingly parallel;
each run owns its caches. CSV emission uses one header row, a fixed column
order, and floats at 6 significant digits.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np

from .attention import attend_full_precision, l1_error
from .cache import EngineConfig, TieredCache
from .errors import ContractViolation
from .quant import (
    FP16_BITS,
    PassthroughBlock,
    quantize_keys_channelwise,
    quantize_values_tokenwise,
)
from .trace import Trace


def estimate_kv_bytes(
    n_layers: int,
    n_heads: int,
    head_dim: int,
    seq_len: int,
    batch: int,
    bytes_per_value: int,
) -> int:
    """Bytes needed to hold full K and V caches for a dense decoder.

    2 (K and V) x bytes_per_value x batch x heads x head_dim x seq_len x
    layers; linear in every argument.
    """
    args = dict(
        n_layers=n_layers,
        n_heads=n_heads,
        head_dim=head_dim,
        seq_len=seq_len,
        batch=batch,
        bytes_per_value=bytes_per_value,
    )
    for name, v in args.items():
        if not isinstance(v, int) or v < 1:
            raise ContractViolation(f"{name} must be a positive integer, got {v!r}")
    return 2 * bytes_per_value * batch * n_heads * head_dim * seq_len * n_layers


class Criterion(enum.Enum):
    """Which tokens to retain at full precision in the retention study."""

    SMALLEST_KEY = "smallest-key"
    LARGEST_KEY = "largest-key"
    RANDOM = "random"


def compare_criteria(
    trace: Trace,
    budget: int,
    criterion: Criterion,
    bits: int,
    *,
    group_size: int = 128,
    layer: int = 0,
    head: int = 0,
    rng: np.random.Generator | None = None,
    passthrough: bool = False,
) -> float:
    """L1 attention-output error after retaining ``budget`` tokens.

    Retention is post-hoc over the whole sequence: the chosen tokens keep
    their exact rows, every other token is group-quantized (keys per
    channel, values per token), and the final query attends over the mix.
    Groups follow the sequence's fixed position blocks of ``group_size``
    tokens, minus whatever was retained, so retaining a token perturbs
    only its own group. Returns the L1 distance to the full-precision
    oracle output.
    """
    seq_len = trace.header.seq_len
    if not 0 <= budget < seq_len:
        raise ContractViolation(f"budget must be in [0, seq_len), got {budget}")
    keys = trace.k[layer, head]
    values = trace.v[layer, head]
    query = trace.q[layer, head, -1]

    scores = np.abs(keys.astype(np.float64)).sum(axis=1)
    if criterion is Criterion.SMALLEST_KEY:
        retained = np.argsort(scores, kind="stable")[:budget]
    elif criterion is Criterion.LARGEST_KEY:
        retained = np.argsort(-scores, kind="stable")[:budget]
    elif criterion is Criterion.RANDOM:
        if rng is None:
            rng = np.random.default_rng(0)
        retained = rng.choice(seq_len, size=budget, replace=False)
    else:
        raise ContractViolation(f"unknown criterion {criterion!r}")

    mask = np.zeros(seq_len, dtype=bool)
    mask[retained] = True

    k_hat = keys.copy()
    v_hat = values.copy()
    for start in range(0, seq_len, group_size):
        block = np.arange(start, min(start + group_size, seq_len))
        idx = block[~mask[block]]
        if idx.size == 0:
            continue
        if passthrough:
            k_hat[idx] = PassthroughBlock(keys[idx]).to_matrix()
            v_hat[idx] = PassthroughBlock(values[idx]).to_matrix()
        else:
            k_hat[idx] = quantize_keys_channelwise(keys[idx], bits).to_matrix()
            v_hat[idx] = quantize_values_tokenwise(values[idx], bits).to_matrix()

    mixed = attend_full_precision(query, k_hat, v_hat)
    oracle = attend_full_precision(query, keys, values)
    return l1_error(mixed.output, oracle.output)


@dataclass(frozen=True)
class ExperimentRow:
    """One line of an experiment report.

    ``ratio_vs_fp16`` is fp16-equivalent bits divided by actual stored
    bits for the same tokens; it exceeds 1 whenever any block is quantized
    below 16 bits. ``l1_output_error`` is None for memory-only runs.
    """

    mode: str
    bits: int
    group_size: int
    residual: int
    outlier_num: int
    seq_len: int
    l1_output_error: float | None
    total_bits: int
    ratio_vs_fp16: float


CSV_COLUMNS = [
    "mode",
    "bits",
    "group_size",
    "residual",
    "outlier_num",
    "seq_len",
    "l1_output_error",
    "total_bits",
    "ratio_vs_fp16",
]


def ratio_curve(
    config: EngineConfig,
    seq_lens: list[int],
    *,
    layer: int | None = None,
    passthrough: bool = False,
    seed: int = 0,
) -> list[ExperimentRow]:
    """Compression ratio against fp16 accounting at increasing lengths.

    Replays one representative (layer, head) cache token by token and
    snapshots the memory breakdown at each requested length. By default
    the replayed layer is the lowest index where outlier pooling is
    active, so the configured pool overhead is included. Below
    ``group_size + residual`` tokens nothing is quantized and the ratio is
    exactly 1.
    """
    if list(seq_lens) != sorted(seq_lens) or any(s < 1 for s in seq_lens):
        raise ContractViolation("seq_lens must be positive and sorted ascending")
    if layer is None:
        layer = 0
        while layer in config.skip_layers:
            layer += 1
    cache = TieredCache(config, layer=layer, passthrough=passthrough)
    if passthrough:
        mode = "fp16"
    elif cache.pool.capacity > 0:
        mode = "ott"
    else:
        mode = "baseline"

    rng = np.random.default_rng(seed)
    d = config.head_dim
    rows: list[ExperimentRow] = []
    token = 0
    for target in seq_lens:
        while token < target:
            cache.append(
                rng.standard_normal(d).astype(np.float32),
                rng.standard_normal(d).astype(np.float32),
            )
            token += 1
        usage = cache.memory_usage()
        fp16_bits = 2 * target * d * FP16_BITS
        rows.append(
            ExperimentRow(
                mode=mode,
                bits=config.bits,
                group_size=config.group_size,
                residual=config.residual,
                outlier_num=cache.pool.capacity,
                seq_len=target,
                l1_output_error=None,
                total_bits=usage.total_bits,
                ratio_vs_fp16=fp16_bits / usage.total_bits,
            )
        )
    return rows


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def write_rows(path, rows: list[ExperimentRow]) -> None:
    """Write experiment rows as CSV with the fixed column order."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_format_value(getattr(row, col)) for col in CSV_COLUMNS])


def read_rows(path) -> list[ExperimentRow]:
    """Parse a CSV written by :func:`write_rows`."""
    rows: list[ExperimentRow] = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_COLUMNS:
            raise ContractViolation(f"unexpected CSV columns: {reader.fieldnames}")
        for rec in reader:
            rows.append(
                ExperimentRow(
                    mode=rec["mode"],
                    bits=int(rec["bits"]),
                    group_size=int(rec["group_size"]),
                    residual=int(rec["residual"]),
                    outlier_num=int(rec["outlier_num"]),
                    seq_len=int(rec["seq_len"]),
                    l1_output_error=float(rec["l1_output_error"]) if rec["l1_output_error"] else None,
                    total_bits=int(rec["total_bits"]),
                    ratio_vs_fp16=float(rec["ratio_vs_fp16"]),
                )
            )
    return rows


def write_csv(path, header: list[str], rows: list[list]) -> None:
    """Write a generic CSV with floats at 6 significant digits."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_value(v) for v in row])
