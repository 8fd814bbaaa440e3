"""Command-line entry point for reproducible trace experiments.

Subcommands::

    gen-synthetic     write a synthetic trace file
    simulate          replay a trace through tiered caches, report L1 error
    compare-criteria  retention-criteria study on one trace or seeded set
    ratio-curve       compression ratio vs fp16 at several lengths
    mem-estimate      closed-form full-precision KV memory footprint
    decile-stats      decile histogram of one key channel

Flag defaults reproduce the reference setting (2-bit codes, groups of 128,
residual 32, 3 pooled outliers with layers 0-1 skipped, auxiliary pool 32).
Outputs are deterministic given ``--seed``; every randomized component
derives its stream from the root seed via SeedSequence(root, (layer,
head)). ``simulate`` computes a per-step full-precision oracle, so it is
quadratic in sequence length; intended for desk-scale traces (<= 8k
tokens).

Exit codes: 0 on success, 1 on bad flags, 2 on trace parse errors.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .attention import attend_full_precision, attend_mixed, l1_error
from .cache import EngineConfig, TieredCache
from .errors import ContractViolation, TraceFormatError
from .quant import FP16_BITS
from .report import (
    Criterion,
    compare_criteria,
    estimate_kv_bytes,
    ratio_curve,
    write_csv,
    write_rows,
)
from .trace import SyntheticSpec, Trace, generate_synthetic, read_trace, write_trace, decile_stats

MODES = ("fp16", "baseline", "ott")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bits", type=int, default=2, help="code width in bits (default 2)")
    p.add_argument("--group-size", type=int, default=128, help="tokens per quantized group")
    p.add_argument("--residual", type=int, default=32, help="recent tokens kept full precision")
    p.add_argument("--outlier-num", type=int, default=3, help="outlier pool capacity per (layer, head)")
    p.add_argument(
        "--skip-layers",
        default="0,1",
        help="comma-separated layers with outlier pooling disabled (default '0,1')",
    )
    p.add_argument("--aux-capacity", type=int, default=32, help="auxiliary pool capacity")
    p.add_argument("--mode", choices=MODES, default="ott", help="fp16, baseline (no pool), or ott")


def _add_generator_flags(p: argparse.ArgumentParser, seq_len_default: int = 1024) -> None:
    p.add_argument("--layers", type=int, default=3, help="trace layers (default 3)")
    p.add_argument("--heads", type=int, default=1, help="heads per layer")
    p.add_argument("--head-dim", type=int, default=16, help="channels per head")
    p.add_argument("--seq-len", type=int, default=seq_len_default, help="tokens per sequence")
    p.add_argument("--mu", type=float, default=SyntheticSpec.mu, help="outlier-channel center")
    p.add_argument("--sigma", type=float, default=SyntheticSpec.sigma, help="outlier-channel half-width")
    p.add_argument("--eps", type=float, default=SyntheticSpec.eps, help="low-magnitude floor")
    p.add_argument("--delta", type=float, default=SyntheticSpec.delta, help="low-magnitude ceiling")
    p.add_argument("--outlier-tokens", type=int, default=SyntheticSpec.m, help="planted low-magnitude tokens")
    p.add_argument(
        "--outlier-channels", type=int, default=SyntheticSpec.outlier_channels, help="planted channels"
    )
    p.add_argument("--q-scale", type=float, default=SyntheticSpec.q_scale, help="query magnitude in outlier channels")


def build_parser() -> _Parser:
    parser = _Parser(prog="kvtrace", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen-synthetic", help="write a synthetic trace file")
    _add_generator_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output trace path")

    p = sub.add_parser("simulate", help="replay a trace and measure per-step L1 error")
    _add_engine_flags(p)
    _add_generator_flags(p)
    p.add_argument("--trace", help="trace file; omitted = synthetic from generator flags")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="per-step CSV path (default: no file, summary only)")

    p = sub.add_parser("compare-criteria", help="retention-criteria error comparison")
    _add_engine_flags(p)
    _add_generator_flags(p)
    p.add_argument("--trace", help="trace file; omitted = synthetic from generator flags")
    p.add_argument("--budget", type=int, default=3, help="retained tokens per criterion")
    p.add_argument("--trials", type=int, default=1, help="synthetic seeds to average over")
    p.add_argument("--layer", type=int, default=None, help="layer to study (default: last)")
    p.add_argument("--head", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default: print)")

    p = sub.add_parser("ratio-curve", help="compression ratio vs fp16 accounting")
    _add_engine_flags(p)
    p.add_argument("--head-dim", type=int, default=64)
    p.add_argument(
        "--seq-lens",
        default="128,1024,8192,65536",
        help="comma-separated ascending lengths",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default: print)")

    p = sub.add_parser("mem-estimate", help="full-precision KV cache footprint")
    p.add_argument("--layers", type=int, required=True)
    p.add_argument("--heads", type=int, required=True)
    p.add_argument("--head-dim", type=int, required=True)
    p.add_argument("--seq-len", type=int, required=True)
    p.add_argument("--batch", type=int, required=True)
    p.add_argument("--bytes-per-value", type=int, default=2, help="2 for fp16 (default)")

    p = sub.add_parser("decile-stats", help="decile histogram of one key channel")
    _add_generator_flags(p)
    p.add_argument("--trace", help="trace file; omitted = synthetic from generator flags")
    p.add_argument("--layer", type=int, default=0)
    p.add_argument("--head", type=int, default=0)
    p.add_argument("--channel", type=int, default=None, help="default: channel with largest mean |K|")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default: print)")

    return parser


def _spec_from_args(args, seed: int) -> SyntheticSpec:
    return SyntheticSpec(
        mu=args.mu,
        sigma=args.sigma,
        eps=args.eps,
        delta=args.delta,
        m=args.outlier_tokens,
        outlier_channels=args.outlier_channels,
        q_scale=args.q_scale,
        seed=seed,
    )


def _load_trace(args, seed: int) -> Trace:
    if getattr(args, "trace", None):
        return read_trace(args.trace)
    spec = _spec_from_args(args, seed)
    return generate_synthetic(spec, args.layers, args.heads, args.head_dim, args.seq_len)


def _config_from_args(args, trace: Trace) -> EngineConfig:
    skip = tuple(int(s) for s in str(args.skip_layers).split(",") if s.strip() != "")
    outlier_num = 0 if args.mode == "baseline" else args.outlier_num
    return EngineConfig(
        bits=args.bits,
        group_size=args.group_size,
        residual=args.residual,
        outlier_num=outlier_num,
        skip_layers=skip,
        aux_capacity=args.aux_capacity,
        n_layers=trace.header.n_layers,
        n_heads=trace.header.n_heads,
        head_dim=trace.header.head_dim,
    )


def _cmd_gen_synthetic(args) -> int:
    trace = _load_trace(args, args.seed)
    write_trace(args.out, trace)
    h = trace.header
    print(f"wrote {args.out}: layers={h.n_layers} heads={h.n_heads} "
          f"head_dim={h.head_dim} seq_len={h.seq_len}")
    return 0


def _cmd_simulate(args) -> int:
    trace = _load_trace(args, args.seed)
    config = _config_from_args(args, trace)
    h = trace.header
    steps = h.seq_len

    if args.mode == "fp16":
        # Mixed attention is the oracle itself; every per-step error is 0.
        step_errors = np.zeros(steps)
        fp16_bits = h.n_layers * h.n_heads * 2 * steps * h.head_dim * FP16_BITS
        usage = {"quantized_bits": 0, "param_bits": 0,
                 "pending_bits": fp16_bits, "pool_bits": 0, "total_bits": fp16_bits}
    else:
        caches = {
            (layer, head): TieredCache(config, layer=layer)
            for layer in range(h.n_layers)
            for head in range(h.n_heads)
        }
        step_errors = np.zeros(steps)
        for t in range(steps):
            total = 0.0
            for (layer, head), cache in caches.items():
                cache.append(trace.k[layer, head, t], trace.v[layer, head, t])
                q = trace.q[layer, head, t]
                mixed = attend_mixed(q, cache)
                oracle = attend_full_precision(
                    q, trace.k[layer, head, : t + 1], trace.v[layer, head, : t + 1]
                )
                total += l1_error(mixed.output, oracle.output)
            step_errors[t] = total / len(caches)
        breakdowns = [c.memory_usage() for c in caches.values()]
        usage = {
            "quantized_bits": sum(b.quantized_bits for b in breakdowns),
            "param_bits": sum(b.param_bits for b in breakdowns),
            "pending_bits": sum(b.pending_bits for b in breakdowns),
            "pool_bits": sum(b.pool_bits for b in breakdowns),
            "total_bits": sum(b.total_bits for b in breakdowns),
        }

    if args.out:
        write_csv(args.out, ["step", "l1_error"],
                  [[t, float(step_errors[t])] for t in range(steps)])
    fp16_bits = h.n_layers * h.n_heads * 2 * steps * h.head_dim * FP16_BITS
    print(f"mode={args.mode} steps={steps} aggregate_l1_error={step_errors.mean():.6g}")
    for key in ("quantized_bits", "param_bits", "pending_bits", "pool_bits", "total_bits"):
        print(f"{key}={usage[key]}")
    print(f"ratio_vs_fp16={fp16_bits / usage['total_bits']:.6g}")
    return 0


def _cmd_compare_criteria(args) -> int:
    if args.trace and args.trials != 1:
        raise _UsageError("--trials requires synthetic traces (omit --trace)")
    results = {c: [] for c in Criterion}
    for trial in range(args.trials):
        trace = _load_trace(args, args.seed + trial)
        layer = args.layer if args.layer is not None else trace.header.n_layers - 1
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=args.seed + trial, spawn_key=(layer, args.head, 1))
        )
        for criterion in Criterion:
            err = compare_criteria(
                trace,
                args.budget,
                criterion,
                args.bits,
                group_size=args.group_size,
                layer=layer,
                head=args.head,
                rng=rng,
                passthrough=args.mode == "fp16",
            )
            results[criterion].append(err)
    rows = [
        [c.value, args.budget, args.trials, float(np.mean(results[c]))]
        for c in Criterion
    ]
    if args.out:
        write_csv(args.out, ["criterion", "budget", "trials", "mean_l1_error"], rows)
    for row in rows:
        print(f"criterion={row[0]} budget={row[1]} trials={row[2]} mean_l1_error={row[3]:.6g}")
    return 0


def _cmd_ratio_curve(args) -> int:
    seq_lens = [int(s) for s in str(args.seq_lens).split(",") if s.strip() != ""]
    skip = tuple(int(s) for s in str(args.skip_layers).split(",") if s.strip() != "")
    config = EngineConfig(
        bits=args.bits,
        group_size=args.group_size,
        residual=args.residual,
        outlier_num=0 if args.mode == "baseline" else args.outlier_num,
        skip_layers=skip,
        aux_capacity=args.aux_capacity,
        head_dim=args.head_dim,
    )
    rows = ratio_curve(config, seq_lens, passthrough=args.mode == "fp16", seed=args.seed)
    if args.out:
        write_rows(args.out, rows)
    for r in rows:
        print(f"seq_len={r.seq_len} total_bits={r.total_bits} ratio_vs_fp16={r.ratio_vs_fp16:.6g}")
    return 0


def _cmd_mem_estimate(args) -> int:
    total = estimate_kv_bytes(
        n_layers=args.layers,
        n_heads=args.heads,
        head_dim=args.head_dim,
        seq_len=args.seq_len,
        batch=args.batch,
        bytes_per_value=args.bytes_per_value,
    )
    print(f"{total} bytes ({total / 2**30:.6g} GiB)")
    return 0


def _cmd_decile_stats(args) -> int:
    trace = _load_trace(args, args.seed)
    keys = trace.k[args.layer, args.head]
    channel = args.channel
    if channel is None:
        channel = int(np.abs(keys).mean(axis=0).argmax())
    stats = decile_stats(keys[:, channel])
    if args.out:
        write_csv(
            args.out,
            [f"decile_{i + 1}" for i in range(10)],
            [[float(x) for x in stats]],
        )
    print(f"layer={args.layer} head={args.head} channel={channel}")
    print("deciles_pct=" + ",".join(f"{x:.6g}" for x in stats))
    return 0


_COMMANDS = {
    "gen-synthetic": _cmd_gen_synthetic,
    "simulate": _cmd_simulate,
    "compare-criteria": _cmd_compare_criteria,
    "ratio-curve": _cmd_ratio_curve,
    "mem-estimate": _cmd_mem_estimate,
    "decile-stats": _cmd_decile_stats,
}


def run(argv=None) -> int:
    """Parse ``argv`` and execute; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.subcommand](args)
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TraceFormatError as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
