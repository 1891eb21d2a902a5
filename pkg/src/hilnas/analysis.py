"""Post-hoc analysis: proxy correlations, rank stability and Pareto tables.

Tables are comma-separated with a one-line header. Column sets:

* pareto: ``loss, ttft_s, d_l, d_ffn, d_model, n_skip, n_swa, on_front``
* correlation: ``context, proxy, objective, tau, n``
* rank: ``early_step, late_step, tau, n``

``on_front`` is 1 for trials on the (loss, ttft) front that strictly
dominate the reference point.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import kendalltau

from .bench import count_flops, count_params
from .model import ModelConfig
from .oracles import concrete_config
from .pareto import pareto_front
from .space import SearchSpace

PARETO_COLUMNS = ("loss", "ttft_s", "d_l", "d_ffn", "d_model", "n_skip", "n_swa", "on_front")
CORRELATION_COLUMNS = ("context", "proxy", "objective", "tau", "n")
RANK_COLUMNS = ("early_step", "late_step", "tau", "n")


def kendall_tau(a, b) -> float:
    """Tie-corrected Kendall tau-b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("need two equal-length sequences of at least two values")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise ValueError("kendall tau is undefined when one side is constant")
    return float(kendalltau(a, b, variant="b").statistic)


@dataclass
class CorrelationReport:
    pairs: list = field(default_factory=list)  # (context, proxy, objective, tau, n)

    def rows(self):
        return [dict(zip(CORRELATION_COLUMNS, p)) for p in self.pairs]

    def tau(self, context, proxy, objective) -> float:
        for c, p, o, t, _ in self.pairs:
            if (c, p, o) == (context, proxy, objective):
                return t
        raise KeyError((context, proxy, objective))


def proxy_correlation(trials, space: SearchSpace, base: ModelConfig, swa_window: int = 1024) -> CorrelationReport:
    """Kendall tau of parameter count and FLOPs against TTFT and decode time.

    Each stage-1 trial contributes, per context, three objectives: raw TTFT
    (``ttft_s``), TTFT divided by the context length (``ttft_s_per_tok``) and
    decode seconds per token (``decode_s_per_tok``, the inverse of the measured
    rate). Within one context the two TTFT columns rank identically, so their
    taus agree. Params and FLOPs are computed on the concrete pruned config.
    Decode pairs use decode FLOPs per token. Pairs with fewer than two usable
    samples are omitted.
    """
    by_ctx = {}
    for t in trials:
        cfg = concrete_config(t.point, space, base, swa_window)
        params = count_params(cfg)
        for s in t.samples:
            pf, df = count_flops(cfg, s.context)
            ttft = s.ttft_seconds
            by_ctx.setdefault(s.context, []).append(
                (params, pf, df, ttft, None if ttft is None else ttft / s.context,
                 None if not s.decode_tok_per_s else 1.0 / s.decode_tok_per_s))
    report = CorrelationReport()
    for ctx in sorted(by_ctx):
        rows = by_ctx[ctx]
        for obj, col in (("ttft_s", 3), ("ttft_s_per_tok", 4), ("decode_s_per_tok", 5)):
            use = [r for r in rows if r[col] is not None]
            if len(use) < 2:
                continue
            y = [r[col] for r in use]
            flops = [r[2] if obj == "decode_s_per_tok" else r[1] for r in use]
            report.pairs.append((ctx, "params", obj, kendall_tau([r[0] for r in use], y), len(use)))
            report.pairs.append((ctx, "flops", obj, kendall_tau(flops, y), len(use)))
    return report


def rank_stability(series, early_step, late_step) -> float:
    """Kendall tau between candidate rankings at two checkpoints.

    ``series`` maps candidate -> {step: loss}; every candidate needs both steps.
    """
    early, late = [], []
    for name, curve in series.items():
        if early_step not in curve or late_step not in curve:
            raise ValueError(f"candidate {name!r} lacks a loss at step {early_step} or {late_step}")
        early.append(curve[early_step])
        late.append(curve[late_step])
    return kendall_tau(early, late)


def pareto_rows(trials, ref) -> list[dict]:
    """One row per trial, ordered by ttft then loss; see ``PARETO_COLUMNS``."""
    if not trials:
        return []
    P = np.array([[t.quality, t.ttft] for t in trials], dtype=float)
    front = set(pareto_front(P))
    rows = []
    for i, t in enumerate(trials):
        on = i in front and P[i, 0] < ref[0] and P[i, 1] < ref[1]
        rows.append({"loss": t.quality, "ttft_s": t.ttft, "d_l": t.point.d_layers, "d_ffn": t.point.d_ffn,
                     "d_model": t.point.d_model, "n_skip": t.point.n_skip, "n_swa": t.point.n_swa,
                     "on_front": int(on), "_i": i})
    rows.sort(key=lambda r: (r["ttft_s"], r["loss"], r["_i"]))
    for r in rows:
        del r["_i"]
    return rows


def to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def export_pareto(trials, ref) -> str:
    return to_csv(pareto_rows(trials, ref), PARETO_COLUMNS)
