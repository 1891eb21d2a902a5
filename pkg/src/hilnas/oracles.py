"""Objective evaluators: latency sources and quality oracles.

The analytic latency stub and the synthetic quality oracle are test doubles
with hand-picked constants. Their outputs are shaped like phone-scale TTFT
seconds and short-run training losses but are not measurements of anything.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .bench import BenchProtocol, LatencySample, benchmark, count_flops
from .calib import CalibrationStats, PruneSpec, prune
from .model import ModelBundle, ModelConfig, prefill
from .space import EFFICIENT, SearchPoint, SearchSpace

# Full-size attention geometry used by the stubs: 32 query heads, 8 KV heads, head size 64.
FULL_HEADS, FULL_KV_HEADS, FULL_HEAD_DIM = 32, 8, 64


def concrete_config(point: SearchPoint, space: SearchSpace, base: ModelConfig, swa_window: int) -> ModelConfig:
    """The ModelConfig that ``prune`` produces for ``point`` on ``base``."""
    p = space.scaled(point)
    return ModelConfig(
        n_layers=p.d_layers, d_model=p.d_model, d_ffn=p.d_ffn, n_heads=base.n_heads,
        n_kv_heads=base.n_kv_heads, head_dim=base.head_dim, vocab_size=base.vocab_size,
        attn_pattern=p.attention_kinds(swa_window), block_unit=base.block_unit,
        norm_eps=base.norm_eps, tied_embeddings=base.tied_embeddings, rope_base=base.rope_base,
        max_context=base.max_context,
    ).validate()


def _point_seed(point: SearchPoint, seed: int) -> int:
    h = hashlib.sha256(f"{point.encode()}|{seed}".encode()).digest()
    return int.from_bytes(h[:8], "little")


# ---------------------------------------------------------------------------
# latency sources: callables point -> list[LatencySample]


class AnalyticLatency:
    """Deterministic phone-like TTFT model.

    ``ttft = 0.05 + 1.8e-12 * linear_flops + 9e-12 * attention_flops + 4e-3 * n_layers``

    where linear FLOPs cover projections and the gated FFN for every prefill
    token, and attention FLOPs count ``4 * 2048`` per scored query/key pair
    under chunked prefill: full layers score a lower triangle per chunk, SWA
    layers score the dense ``chunk x (window + chunk)`` ring-buffer block,
    skip layers score nothing. Decode time per token uses the same constants
    on one token.
    """

    def __init__(self, context_lengths=(2048,), chunk_size: int = 1024, swa_window: int = 1024):
        self.context_lengths = tuple(context_lengths)
        self.chunk_size = chunk_size
        self.swa_window = swa_window

    def _pairs(self, kind: str, n: int) -> float:
        c, w = min(self.chunk_size, n), self.swa_window
        total = 0.0
        for start in range(0, n, c):
            m = min(c, n - start)
            if kind == "F":
                total += m * start + m * (m + 1) / 2
            elif kind == "S":
                total += m * (w + m)
        return total

    def ttft(self, point: SearchPoint, context: int) -> float:
        A = FULL_HEADS * FULL_HEAD_DIM
        K = FULL_KV_HEADS * FULL_HEAD_DIM
        d, f = point.d_model, point.d_ffn
        linear = attn = 0.0
        for kind in point.attn_pattern:
            linear += 6 * d * f * context
            if kind != "K":
                linear += 2 * (2 * d * A + 2 * d * K) * context
                attn += 4 * A * self._pairs(kind, context)
        return 0.05 + 1.8e-12 * linear + 9e-12 * attn + 4e-3 * point.d_layers

    def decode_rate(self, point: SearchPoint, context: int) -> float:
        A = FULL_HEADS * FULL_HEAD_DIM
        K = FULL_KV_HEADS * FULL_HEAD_DIM
        d, f = point.d_model, point.d_ffn
        t = 0.002
        for kind in point.attn_pattern:
            t += 1.8e-12 * 6 * d * f * 4 + 2e-4  # weight-streaming bound, per-layer dispatch
            if kind != "K":
                keys = context if kind == "F" else self.swa_window + 1
                t += 1.8e-12 * 2 * (2 * d * A + 2 * d * K) * 4 + 9e-12 * 4 * A * keys
        return 1.0 / t

    def __call__(self, point: SearchPoint) -> list[LatencySample]:
        return [LatencySample(context=c, ttft_seconds=self.ttft(point, c),
                              decode_tok_per_s=self.decode_rate(point, c),
                              host_fingerprint="analytic-stub", point=point.encode())
                for c in self.context_lengths]


class FlopsLatency:
    """Latency exactly proportional to analytic FLOPs of the concrete pruned config."""

    def __init__(self, base: ModelConfig, space: SearchSpace, context_lengths=(2048,),
                 swa_window: int = 1024, seconds_per_flop: float = 1e-11):
        self.base, self.space = base, space
        self.context_lengths = tuple(context_lengths)
        self.swa_window = swa_window
        self.k = seconds_per_flop

    def __call__(self, point: SearchPoint) -> list[LatencySample]:
        cfg = concrete_config(point, self.space, self.base, self.swa_window)
        out = []
        for c in self.context_lengths:
            pf, df = count_flops(cfg, c)
            out.append(LatencySample(context=c, ttft_seconds=self.k * pf, decode_tok_per_s=1.0 / (self.k * df),
                                     host_fingerprint="flops-stub", point=point.encode()))
        return out


class HostLatency:
    """Prune the base model to each point and time it on this machine."""

    def __init__(self, base: ModelBundle, stats: CalibrationStats, space: SearchSpace,
                 proto: BenchProtocol, swa_window: int = 1024, decode: bool = True):
        self.base, self.stats, self.space, self.proto = base, stats, space, proto
        self.swa_window = swa_window
        self.decode = decode

    def model_for(self, point: SearchPoint) -> ModelBundle:
        spec = PruneSpec(self.space.scaled(point), self.base.config.block_unit, self.swa_window)
        return prune(self.base, self.stats, spec)

    def __call__(self, point: SearchPoint) -> list[LatencySample]:
        return benchmark(self.model_for(point), self.proto, point=point.encode(), decode=self.decode)


# ---------------------------------------------------------------------------
# quality oracles: callables point -> loss (lower is better)


def nonembedding_params(point: SearchPoint) -> int:
    A = FULL_HEADS * FULL_HEAD_DIM
    K = FULL_KV_HEADS * FULL_HEAD_DIM
    d = point.d_model
    per_ffn = 3 * d * point.d_ffn
    per_attn = 2 * d * A + 2 * d * K
    return point.d_layers * per_ffn + (point.d_layers - point.n_skip) * per_attn


def efficient_runs(point: SearchPoint) -> list[int]:
    runs, cur = [], 0
    for c in point.attn_pattern + ("F",):
        if c in EFFICIENT:
            cur += 1
        elif cur:
            runs.append(cur)
            cur = 0
    return runs


def synthetic_loss(point: SearchPoint) -> float:
    """Noiseless synthetic loss.

    ``0.25 + 1.6 * P**-0.3`` (P = non-embedding parameters in millions)
    ``+ 0.006 per skip layer + 0.003 per SWA layer``
    ``+ 0.03 * (run - 2) for each run of >= 3 consecutive SWA/skip layers``
    ``- 0.004 * (d_layers - 10)``
    """
    p_m = nonembedding_params(point) / 1e6
    loss = 0.25 + 1.6 * p_m ** -0.3
    loss += 0.006 * point.n_skip + 0.003 * point.n_swa
    loss += 0.03 * sum(r - 2 for r in efficient_runs(point) if r >= 3)
    loss -= 0.004 * (point.d_layers - 10)
    return float(loss)


def synthetic_quality_oracle(point: SearchPoint, seed: int = 0, noise: float = 0.003) -> float:
    """Test double for short-training loss: :func:`synthetic_loss` plus seeded Gaussian noise."""
    eps = np.random.default_rng(_point_seed(point, seed)).standard_normal() if noise else 0.0
    return synthetic_loss(point) + noise * float(eps)


class SyntheticQuality:
    def __init__(self, seed: int = 0, noise: float = 0.003):
        self.seed, self.noise = seed, noise

    def __call__(self, point: SearchPoint) -> float:
        return synthetic_quality_oracle(point, self.seed, self.noise)


def mean_nll(model: ModelBundle, tokens) -> float:
    """Mean next-token negative log-likelihood (nats) over ``tokens``."""
    tokens = np.asarray(tokens)
    if tokens.size < 2:
        raise ValueError("need at least two held-out tokens")
    windows = [k.window for k in model.config.attn_pattern if k.window]
    chunk = min([tokens.size - 1, 512] + windows)
    logits, _ = prefill(model, tokens[:-1], chunk, all_logits=True)
    z = logits.astype(np.float64)
    z -= z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(z)), tokens[1:]].mean())


def nll_quality_oracle(base: ModelBundle, stats: CalibrationStats, point: SearchPoint, heldout,
                       space: SearchSpace | None = None, swa_window: int = 1024) -> float:
    """Prune to ``point`` and score held-out NLL. Only meaningful for trained bases.

    ``point`` is in full-size units when ``space`` is given, otherwise in the
    base model's own units.
    """
    target = space.scaled(point) if space is not None else point
    model = prune(base, stats, PruneSpec(target, base.config.block_unit, swa_window))
    return mean_nll(model, heldout)


class NLLQuality:
    def __init__(self, base, stats, heldout, space=None, swa_window=1024):
        self.base, self.stats, self.heldout = base, stats, np.asarray(heldout)
        self.space, self.swa_window = space, swa_window

    def __call__(self, point: SearchPoint) -> float:
        return nll_quality_oracle(self.base, self.stats, point, self.heldout, self.space, self.swa_window)


def synthetic_loss_curve(point: SearchPoint, steps, seed: int = 0, noise: float = 0.003) -> np.ndarray:
    """Test double for a training-loss curve sampled at ``steps``.

    ``synthetic_loss(point) + a * (step / 1000) ** -0.5 + noise`` where the
    transient amplitude ``a`` in [0.05, 0.35] is drawn per point, so curves of
    different points can cross before settling. Noise is seeded per
    (point, seed, step).
    """
    steps = np.asarray(steps, dtype=float)
    if np.any(steps <= 0):
        raise ValueError("steps must be positive")
    a = 0.05 + 0.3 * np.random.default_rng(_point_seed(point, -1)).random()
    base = synthetic_loss(point) + a * (steps / 1000.0) ** -0.5
    if noise:
        eps = [np.random.default_rng(_point_seed(point, f"{seed}@{int(s)}")).standard_normal() for s in steps]
        base = base + noise * np.asarray(eps)
    return base
