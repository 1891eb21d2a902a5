"""Host-CPU latency measurement and analytic cost proxies.

FLOP accounting (multiply-accumulate counted as 2), for context ``n``,
``A = n_heads * head_dim``, ``K = n_kv_heads * head_dim``:

* per token, attention layers: ``2 * (d*A + 2*d*K + A*d)`` projection FLOPs
* per token, every layer: ``2 * 3 * d * d_ffn`` gated-FFN FLOPs
* prefill score+value term, full attention: ``2 * A * n**2`` (the causal half
  of the dense ``4 * A * n**2``)
* prefill score+value term, SWA window ``w < n``: ``2 * A * (2*w*n - w**2)``;
  identical to full when ``w >= n``
* LM head: ``2 * d * vocab`` once per prefill and once per decoded token
* decode, attending over ``n`` cached keys: ``4 * A * n`` (full) or
  ``4 * A * min(n, w)`` (SWA)

This is ideal-mask accounting. The engine's ring-buffer SWA actually scores a
dense ``chunk x (window + chunk)`` block, which is the point of measuring.
Norms, rotary and softmax are not counted.
"""

from __future__ import annotations

import logging
import os
import platform
import threading
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

log = logging.getLogger(__name__)

from .model import FULL, SKIP, SWA, ModelBundle, ModelConfig, decode_step, prefill

THREADS_ENV = "HILNAS_THREADS"

_BENCH_LOCK = threading.Lock()


class TimerResolutionError(RuntimeError):
    pass


def count_params(config: ModelConfig) -> int:
    c = config
    d = c.d_model
    total = c.vocab_size * d + d  # embeddings + final norm
    if not c.tied_embeddings:
        total += d * c.vocab_size
    for kind in c.attn_pattern:
        if kind.tag != SKIP:
            total += d + d * c.attn_width + 2 * d * c.kv_width + c.attn_width * d + 2 * c.head_dim
        total += d + 3 * d * c.d_ffn
    return int(total)


def count_flops(config: ModelConfig, context: int) -> tuple[int, int]:
    """(prefill FLOPs for ``context`` tokens, decode FLOPs per token at ``context``)."""
    c = config
    n = int(context)
    d, A, K = c.d_model, c.attn_width, c.kv_width
    head = 2 * d * c.vocab_size
    prefill_f, decode_f = head, head
    for kind in c.attn_pattern:
        per_tok = 2 * 3 * d * c.d_ffn
        if kind.tag != SKIP:
            per_tok += 2 * (d * A + 2 * d * K + A * d)
        prefill_f += per_tok * n
        decode_f += per_tok
        if kind.tag == FULL or (kind.tag == SWA and kind.window >= n):
            prefill_f += 2 * A * n * n
            decode_f += 4 * A * n
        elif kind.tag == SWA:
            w = kind.window
            prefill_f += 2 * A * (2 * w * n - w * w)
            decode_f += 4 * A * w
    return int(prefill_f), int(decode_f)


@dataclass(frozen=True)
class BenchProtocol:
    context_lengths: tuple = (1024, 2048, 4096)
    chunk_size: int = 1024
    threads: int = 4
    warmup_runs: int = 1
    measured_runs: int = 3
    decode_tokens: int = 64
    stability_threshold: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "context_lengths", tuple(int(c) for c in self.context_lengths))
        env = os.environ.get(THREADS_ENV)
        if env:
            object.__setattr__(self, "threads", int(env))
        counts = (self.chunk_size, self.threads, self.warmup_runs, self.measured_runs, self.decode_tokens)
        if not self.context_lengths or min(self.context_lengths) < 1 or min(counts) < 1:
            raise ValueError("benchmark counts must all be >= 1")
        if self.chunk_size > min(self.context_lengths):
            raise ValueError("chunk_size exceeds the shortest context length")
        cores = os.cpu_count() or 1
        if self.threads > cores:
            # oversubscribed BLAS pools time contention, not the kernels
            log.warning("benchmark threads %d exceed the %d available cores", self.threads, cores)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["context_lengths"] = list(self.context_lengths)
        return d


def host_fingerprint(threads: int | None = None) -> str:
    parts = [platform.machine(), platform.processor() or "cpu", f"{os.cpu_count()}cpu",
             f"py{platform.python_version()}", f"numpy{np.__version__}"]
    if threads is not None:
        parts.append(f"t{threads}-unpinned")
    return "|".join(parts)


@dataclass
class LatencySample:
    context: int
    ttft_seconds: float | None = None
    decode_tok_per_s: float | None = None
    run_spread: float = 0.0
    host_fingerprint: str = ""
    point: str | None = None
    unstable: bool = False
    runs: list = field(default_factory=list)

    def __post_init__(self):
        if self.ttft_seconds is not None and not self.ttft_seconds > 0:
            raise ValueError("ttft must be positive")
        if self.run_spread < 0:
            raise ValueError("run_spread must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LatencySample":
        return cls(**d)


def bench_tokens(n: int, vocab: int, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, vocab, size=n)


def _spread(times) -> float:
    t = np.asarray(times)
    return float((t.max() - t.min()) / t.mean())


def _check_inputs(model: ModelBundle, proto: BenchProtocol, context: int):
    if context not in proto.context_lengths:
        raise ValueError(f"context {context} is not in the protocol {proto.context_lengths}")
    chunk = min(proto.chunk_size, context)
    for kind in model.config.attn_pattern:
        if kind.tag == SWA and kind.window < chunk:
            raise ValueError(f"SWA window {kind.window} is below chunk size {chunk}")
    cfg = model.config
    need = 4 * (sum(w.size for w in model.weights.values())
                + 2 * cfg.n_layers * cfg.kv_width * (context + proto.decode_tokens)
                + cfg.n_heads * chunk * (context + chunk))
    try:
        avail = os.sysconf("SC_AVPHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    except (ValueError, OSError, AttributeError):
        avail = None
    if avail and need > avail:
        raise MemoryError(f"benchmark needs ~{need >> 20} MiB, {avail >> 20} MiB available")
    return chunk


def _check_resolution(elapsed):
    res = time.get_clock_info("perf_counter").resolution
    if min(elapsed) < 1000 * res:
        raise TimerResolutionError(
            f"run of {min(elapsed):.3g}s is within 1000x of the timer resolution ({res:g}s); "
            "use a longer context")


def measure_ttft(model: ModelBundle, proto: BenchProtocol, context: int, *, point: str | None = None,
                 tokens=None) -> LatencySample:
    """Mean wall time of chunked prefill plus the first decode step.

    KV-cache allocation happens inside the timed region.
    """
    chunk = _check_inputs(model, proto, context)
    tokens = bench_tokens(context, model.config.vocab_size) if tokens is None else np.asarray(tokens)
    times = []
    with _BENCH_LOCK, threadpool_limits(limits=proto.threads, user_api="blas"):
        for r in range(proto.warmup_runs + proto.measured_runs):
            t0 = time.perf_counter()
            logits, cache = prefill(model, tokens, chunk, capacity=context + 1)
            decode_step(model, cache, int(np.argmax(logits)))
            dt = time.perf_counter() - t0
            if r >= proto.warmup_runs:
                times.append(dt)
    _check_resolution(times)
    spread = _spread(times)
    return LatencySample(context=context, ttft_seconds=float(np.mean(times)), run_spread=spread,
                         host_fingerprint=host_fingerprint(proto.threads), point=point,
                         unstable=spread > proto.stability_threshold, runs=[float(t) for t in times])


def measure_decode(model: ModelBundle, proto: BenchProtocol, context: int, *, point: str | None = None,
                   tokens=None) -> LatencySample:
    """Prefill to ``context`` (untimed), then time ``decode_tokens`` greedy steps."""
    chunk = _check_inputs(model, proto, context)
    tokens = bench_tokens(context, model.config.vocab_size) if tokens is None else np.asarray(tokens)
    n = proto.decode_tokens
    times = []
    with _BENCH_LOCK, threadpool_limits(limits=proto.threads, user_api="blas"):
        for r in range(proto.warmup_runs + proto.measured_runs):
            logits, cache = prefill(model, tokens, chunk, capacity=context + n)
            tok = int(np.argmax(logits))
            t0 = time.perf_counter()
            for _ in range(n):
                tok = int(np.argmax(decode_step(model, cache, tok)))
            dt = time.perf_counter() - t0
            if r >= proto.warmup_runs:
                times.append(dt)
    _check_resolution(times)
    spread = _spread(times)
    return LatencySample(context=context, decode_tok_per_s=float(n / np.mean(times)), run_spread=spread,
                         host_fingerprint=host_fingerprint(proto.threads), point=point,
                         unstable=spread > proto.stability_threshold, runs=[float(t) for t in times])


def benchmark(model: ModelBundle, proto: BenchProtocol, *, point: str | None = None,
              decode: bool = True) -> list[LatencySample]:
    """One sample per protocol context carrying TTFT and (optionally) decode rate."""
    out = []
    for ctx in proto.context_lengths:
        s = measure_ttft(model, proto, ctx, point=point)
        if decode:
            d = measure_decode(model, proto, ctx, point=point)
            s.decode_tok_per_s = d.decode_tok_per_s
            s.run_spread = max(s.run_spread, d.run_spread)
            s.unstable = s.unstable or d.unstable
        out.append(s)
    return out
