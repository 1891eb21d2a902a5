"""
Pruning the base model to one search point
==========================================

Build the desk-scale base, collect activation energies on the bundled corpus,
prune to a point with skip and sliding-window layers, then compare analytic
cost against a host timing.
"""

import numpy as np

from hilnas.bench import BenchProtocol, count_flops, count_params, measure_ttft
from hilnas.calib import PruneSpec, calibrate, calibration_batches, load_corpus, prune, split_corpus
from hilnas.model import desk_base_config, init_model, prefill
from hilnas.space import SearchSpace, is_feasible, parse_point

base = init_model(desk_base_config(), seed=0)
print("base:", base.config.n_layers, "layers, d_model", base.config.d_model, "d_ffn", base.config.d_ffn)

# calibration statistics: per-channel FFN energy, residual energy, layer scores
train, heldout = split_corpus(load_corpus())
stats = calibrate(base, calibration_batches(train, n_positions=2048, seq_len=256))
print("layer scores:", np.round(stats.layer_score, 3))

# points are written in full-size units; the space maps them to desk scale
space = SearchSpace()
point = parse_point("L12-F4096-M1536-P=F.K.F.S.F.K.F.F.S.F.K.F")
print(point.encode(), "feasible:", is_feasible(point))
small = prune(base, stats, PruneSpec(space.scaled(point), base.config.block_unit, swa_window=256))
print("pruned:", small.config.n_layers, "layers, d_model", small.config.d_model, "d_ffn", small.config.d_ffn)

for name, m in (("base", base), ("pruned", small)):
    pre, dec = count_flops(m.config, 1024)
    print(f"{name:>6}: {count_params(m.config):>9,d} params  {pre / 1e9:6.2f} GFLOP prefill @1k  "
          f"{dec / 1e6:6.2f} MFLOP per decoded token")

# one chunked prefill: full layers cache every key, SWA layers keep a ring
# buffer of the last `window` keys, skip layers keep nothing
tokens = heldout[:1024]
logits, cache = prefill(small, tokens, 256)
print(len(tokens), "tokens, next-token argmax", int(np.argmax(logits)))
for kind, buf in list(zip(small.config.attn_pattern, cache.layers))[:4]:
    print(f"  {kind.tag:>4}: cached keys {getattr(buf, 'length', 0)}")

proto = BenchProtocol(context_lengths=(1024,), chunk_size=256, threads=1, warmup_runs=1, measured_runs=3)
for name, m in (("base", base), ("pruned", small)):
    s = measure_ttft(m, proto, 1024)
    print(f"{name:>6}: TTFT {s.ttft_seconds * 1e3:7.1f} ms  (spread {s.run_spread:.2f})")
