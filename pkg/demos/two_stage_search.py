"""
Two-stage search against stub objectives
========================================

Stage 1 spends cheap latency measurements on Sobol points and fits a latency
GP. Stage 2 spends quality evaluations chosen by NEHVI under the predicted
latency. Both objectives here are in-repo stubs, so the numbers only show how
the machinery behaves.
"""

import numpy as np

from hilnas.analysis import export_pareto
from hilnas.oracles import AnalyticLatency, SyntheticQuality
from hilnas.search import SearchConfig, front_hypervolume, run_stage1, run_stage2, sobol_baseline
from hilnas.space import SearchSpace

space = SearchSpace()
latency = AnalyticLatency()  # TTFT seconds at 2k context
quality = SyntheticQuality(seed=1)
cfg = SearchConfig(stage1_budget=64, stage2_budget=64, seed=1)

s1 = run_stage1(space, cfg, latency)
print(f"stage 1: {len(s1.trials)} latency samples, 5-fold R^2 {s1.cv_r2:.4f}")

s2 = run_stage2(s1.latency_gp, quality, cfg, space)
print(f"stage 2: {len(s2.trials)} quality evaluations, {len(s2.front)} on the front inside r = {cfg.reference_point}")
print(export_pareto(s2.front, cfg.reference_point))

# score both sets by true stub latency, the GP prediction is only a guide
true_ttft = lambda p: latency.ttft(p, 2048)  # noqa: E731
found = np.array([[t.quality, true_ttft(t.point)] for t in s2.trials])
base = sobol_baseline(space, 128, quality, true_ttft, seed=1)
hv, hb = front_hypervolume(found, cfg.reference_point), front_hypervolume(base, cfg.reference_point)
print(f"hypervolume: search {hv:.4f} vs 128 Sobol points {hb:.4f}  (ratio {hv / hb:.2f})")

# the front, fastest first
for t in sorted(s2.front, key=lambda t: t.ttft):
    print(f"  {t.point.encode():<50} loss {t.quality:.4f}  ttft {t.ttft:.2f}s")
