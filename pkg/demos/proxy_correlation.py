"""
Are parameters and FLOPs good latency proxies?
==============================================

Measure a few pruned architectures on this machine and rank-correlate their
TTFT and decode time with parameter count and FLOPs. A perfect proxy would
give tau = 1.
"""

from hilnas.analysis import CORRELATION_COLUMNS, proxy_correlation, to_csv
from hilnas.bench import BenchProtocol
from hilnas.calib import calibrate, calibration_batches, load_corpus, split_corpus
from hilnas.model import desk_base_config, init_model
from hilnas.oracles import HostLatency
from hilnas.search import Trial, feasible_sobol_points
from hilnas.space import SearchSpace

space = SearchSpace()
base = init_model(desk_base_config(), seed=0)
train, _ = split_corpus(load_corpus())
stats = calibrate(base, calibration_batches(train, n_positions=2048, seq_len=256))

proto = BenchProtocol(context_lengths=(512,), chunk_size=256, threads=1, warmup_runs=1, measured_runs=3,
                      decode_tokens=8)
host = HostLatency(base, stats, space, proto, swa_window=256)

points = feasible_sobol_points(space, 24, seed=0)
trials = []
for i, p in enumerate(points):
    trials.append(Trial(1, i, p, "sobol", samples=host(p)))
    s = trials[-1].samples[0]
    print(f"{p.encode():<52} ttft {s.ttft_seconds * 1e3:7.1f} ms  decode {s.decode_tok_per_s:6.1f} tok/s")

report = proxy_correlation(trials, space, base.config, swa_window=256)
print()
print(to_csv(report.rows(), CORRELATION_COLUMNS))
