#!/usr/bin/env python3
"""Follow the outlier pool through competition, eviction, and freezing.

Tokens are scored by the L1 norm of their key rows; the pool keeps the
lowest-scoring tokens seen so far, parks losers in a bounded auxiliary
list, and freezes for good once that list fills.
"""

import numpy as np

from kvtrace import OutlierEntry, OutlierPool, score_tokens, substitute_means

rng = np.random.default_rng(1)

print("=== Scoring ===")
keys = rng.uniform(4.5, 5.5, size=(6, 4)).astype(np.float32)
keys[2] = 0.05  # a low-magnitude token
scores = score_tokens(keys)
print("token scores:", np.round(scores, 2))
print(f"token 2 stands out with score {scores[2]:.2f}")
print()

print("=== Competition until the auxiliary pool fills ===")
pool = OutlierPool(capacity=2, aux_capacity=3)
position = 0
step = 0
while not pool.frozen:
    group = []
    for i in range(4):
        key = rng.uniform(4.5, 5.5, size=4).astype(np.float32)
        if rng.random() < 0.4:
            key *= float(rng.uniform(0.01, 0.2))  # plant a low-magnitude token
        group.append(OutlierEntry.from_rows(position, key, key.copy()))
        position += 1
    selected, evicted = pool.update(group)
    members = sorted((e.position, round(e.score, 2)) for e in pool.entries)
    print(f"update {step}: selected {sorted(selected)} evicted "
          f"{[e.position for e in evicted]} -> pool {members} "
          f"aux {[e.position for e in pool.aux]} frozen={pool.frozen}")
    step += 1
print("three evictions filled the auxiliary pool; identification stops here")
print()

print("=== Freezing is permanent ===")
before = pool.positions
for _ in range(1000):
    entry = OutlierEntry.from_rows(position, np.zeros(4, dtype=np.float32), np.zeros(4, dtype=np.float32))
    position += 1
    pool.update([entry])
print(f"after 1000 zero-score candidates, membership unchanged: {pool.positions == before}")
print()

print("=== Mean substitution shrinks the channel range ===")
group_k = rng.uniform(4.5, 5.5, size=(8, 4)).astype(np.float32)
group_k[5] = 0.01
group_v = rng.standard_normal((8, 4)).astype(np.float32)
print(f"channel 0 range before: {group_k[:, 0].max() - group_k[:, 0].min():.3f}")
sub_k, _ = substitute_means(group_k, group_v, [5])
print(f"channel 0 range after : {sub_k[:, 0].max() - sub_k[:, 0].min():.3f}")
print("the substituted row now carries the per-channel group means,")
print("so it no longer stretches the quantization step")
