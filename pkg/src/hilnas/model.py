"""Dense decoder-only transformer inference in numpy.

Supports three per-layer attention kinds (full causal, sliding-window over a
ring buffer, and skip), grouped-query attention with QK-norm, rotary
positions, a KV cache, and chunked prefill. The same forward pass feeds the
activation recorder used for calibration.

Weight layout is row-vector style: ``y = x @ W`` with ``W`` shaped
``(fan_in, fan_out)``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

FULL = "full"
SWA = "swa"
SKIP = "skip"

_LETTERS = {FULL: "F", SWA: "S", SKIP: "K"}

# Query-tile height for full causal attention; tiles above the diagonal are never computed.
CAUSAL_TILE = 128


class ConfigError(ValueError):
    """Raised for model configurations that violate shape invariants."""


class CacheMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class AttentionKind:
    tag: str
    window: int | None = None

    def __post_init__(self):
        if self.tag not in _LETTERS:
            raise ConfigError(f"unknown attention tag {self.tag!r}")
        if self.tag == SWA:
            if self.window is None or int(self.window) < 1:
                raise ConfigError("SWA needs a window >= 1")
        elif self.window is not None:
            raise ConfigError(f"{self.tag} attention takes no window")

    @classmethod
    def full(cls) -> "AttentionKind":
        return cls(FULL)

    @classmethod
    def swa(cls, window: int) -> "AttentionKind":
        return cls(SWA, int(window))

    @classmethod
    def skip(cls) -> "AttentionKind":
        return cls(SKIP)

    @property
    def letter(self) -> str:
        return _LETTERS[self.tag]

    def __str__(self):
        return f"swa{self.window}" if self.tag == SWA else self.tag


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    d_model: int
    d_ffn: int
    n_heads: int
    n_kv_heads: int
    head_dim: int
    vocab_size: int = 256
    attn_pattern: tuple = ()
    block_unit: int = 8
    norm_eps: float = 1e-5
    tied_embeddings: bool = True
    rope_base: float = 10000.0
    max_context: int = 8192

    def __post_init__(self):
        if not self.attn_pattern:
            object.__setattr__(self, "attn_pattern", (AttentionKind.full(),) * self.n_layers)
        else:
            object.__setattr__(self, "attn_pattern", tuple(self.attn_pattern))

    @property
    def attn_width(self) -> int:
        return self.n_heads * self.head_dim

    @property
    def kv_width(self) -> int:
        return self.n_kv_heads * self.head_dim

    def validate(self) -> "ModelConfig":
        if self.n_layers < 1:
            raise ConfigError("need at least one layer")
        for name in ("d_model", "d_ffn", "n_heads", "n_kv_heads", "head_dim", "vocab_size", "block_unit"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if len(self.attn_pattern) != self.n_layers:
            raise ConfigError(
                f"attn_pattern has {len(self.attn_pattern)} entries for {self.n_layers} layers")
        if not all(isinstance(k, AttentionKind) for k in self.attn_pattern):
            raise ConfigError("attn_pattern entries must be AttentionKind")
        if self.n_heads % self.n_kv_heads:
            raise ConfigError("n_heads must be divisible by n_kv_heads")
        if self.d_ffn % self.block_unit or self.d_model % self.block_unit:
            raise ConfigError(
                f"d_ffn={self.d_ffn} and d_model={self.d_model} must be multiples of block_unit={self.block_unit}")
        if self.head_dim % 2:
            raise ConfigError("rotary embeddings need an even head_dim")
        if not self.norm_eps > 0:
            raise ConfigError("norm_eps must be positive")
        return self

    def with_pattern(self, pattern: Sequence[AttentionKind]) -> "ModelConfig":
        return replace(self, attn_pattern=tuple(pattern), n_layers=len(pattern))

    def pattern_string(self) -> str:
        return ".".join(k.letter for k in self.attn_pattern)


def desk_base_config(n_layers: int = 16, **overrides) -> ModelConfig:
    """The stand-in base model: 16 x 2048/8192 with 32/8/64 heads, every channel
    dimension divided by 16 so it runs on a laptop CPU."""
    kw = dict(n_layers=n_layers, d_model=128, d_ffn=512, n_heads=8, n_kv_heads=2, head_dim=16,
              vocab_size=256, block_unit=8, tied_embeddings=True)
    kw.update(overrides)
    return ModelConfig(**kw).validate()


def tensor_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every weight of ``cfg``, in canonical order."""
    shapes = {"tok_embeddings": (cfg.vocab_size, cfg.d_model)}
    for i, kind in enumerate(cfg.attn_pattern):
        p = f"layer.{i}."
        if kind.tag != SKIP:
            shapes[p + "attn_norm"] = (cfg.d_model,)
            shapes[p + "attn.wq"] = (cfg.d_model, cfg.attn_width)
            shapes[p + "attn.wk"] = (cfg.d_model, cfg.kv_width)
            shapes[p + "attn.wv"] = (cfg.d_model, cfg.kv_width)
            shapes[p + "attn.wo"] = (cfg.attn_width, cfg.d_model)
            shapes[p + "attn.q_norm"] = (cfg.head_dim,)
            shapes[p + "attn.k_norm"] = (cfg.head_dim,)
        shapes[p + "ffn_norm"] = (cfg.d_model,)
        shapes[p + "ffn.w_gate"] = (cfg.d_model, cfg.d_ffn)
        shapes[p + "ffn.w_up"] = (cfg.d_model, cfg.d_ffn)
        shapes[p + "ffn.w_down"] = (cfg.d_ffn, cfg.d_model)
    shapes["final_norm"] = (cfg.d_model,)
    if not cfg.tied_embeddings:
        shapes["lm_head"] = (cfg.d_model, cfg.vocab_size)
    return shapes


@dataclass(frozen=True, eq=False)
class ModelBundle:
    """Config plus dense float32 weights. Arrays are frozen read-only."""

    config: ModelConfig
    weights: dict = field(repr=False)

    def __post_init__(self):
        expected = tensor_shapes(self.config)
        if set(expected) != set(self.weights):
            missing = sorted(set(expected) - set(self.weights))
            extra = sorted(set(self.weights) - set(expected))
            raise ConfigError(f"weights do not match config (missing={missing[:3]}, extra={extra[:3]})")
        frozen = {}
        for name, shape in expected.items():
            arr = np.ascontiguousarray(self.weights[name], dtype=np.float32)
            if arr.shape != shape:
                raise ConfigError(f"{name}: shape {arr.shape}, expected {shape}")
            arr.flags.writeable = False
            frozen[name] = arr
        object.__setattr__(self, "weights", frozen)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.weights[name]

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name in tensor_shapes(self.config):
            h.update(name.encode())
            h.update(self.weights[name].tobytes())
        return h.hexdigest()

    def lm_head(self) -> np.ndarray:
        if self.config.tied_embeddings:
            return self.weights["tok_embeddings"].T
        return self.weights["lm_head"]


def init_model(config: ModelConfig, seed: int = 0) -> ModelBundle:
    """Deterministic synthetic weights.

    Channel and layer gains are drawn log-normally / uniformly so that the
    activation-energy metrics have real spread to rank on.
    """
    cfg = config.validate()
    rng = np.random.default_rng(seed)
    resid_gain = rng.lognormal(0.0, 0.5, size=cfg.d_model)
    w = {"tok_embeddings": 0.05 * rng.standard_normal((cfg.vocab_size, cfg.d_model)) * resid_gain}
    for i, kind in enumerate(cfg.attn_pattern):
        p = f"layer.{i}."
        layer_gain = rng.uniform(0.1, 1.0)
        if kind.tag != SKIP:
            w[p + "attn_norm"] = 1.0 + 0.1 * rng.standard_normal(cfg.d_model)
            w[p + "attn.wq"] = rng.standard_normal((cfg.d_model, cfg.attn_width)) / np.sqrt(cfg.d_model)
            w[p + "attn.wk"] = rng.standard_normal((cfg.d_model, cfg.kv_width)) / np.sqrt(cfg.d_model)
            w[p + "attn.wv"] = rng.standard_normal((cfg.d_model, cfg.kv_width)) / np.sqrt(cfg.d_model)
            w[p + "attn.wo"] = layer_gain * rng.standard_normal((cfg.attn_width, cfg.d_model)) / np.sqrt(cfg.attn_width)
            w[p + "attn.q_norm"] = np.ones(cfg.head_dim)
            w[p + "attn.k_norm"] = np.ones(cfg.head_dim)
        ffn_gain = rng.lognormal(0.0, 0.6, size=cfg.d_ffn)
        w[p + "ffn_norm"] = 1.0 + 0.1 * rng.standard_normal(cfg.d_model)
        w[p + "ffn.w_gate"] = rng.standard_normal((cfg.d_model, cfg.d_ffn)) / np.sqrt(cfg.d_model)
        w[p + "ffn.w_up"] = ffn_gain * rng.standard_normal((cfg.d_model, cfg.d_ffn)) / np.sqrt(cfg.d_model)
        w[p + "ffn.w_down"] = layer_gain * rng.standard_normal((cfg.d_ffn, cfg.d_model)) / np.sqrt(cfg.d_ffn)
    w["final_norm"] = np.ones(cfg.d_model)
    if not cfg.tied_embeddings:
        w["lm_head"] = rng.standard_normal((cfg.d_model, cfg.vocab_size)) / np.sqrt(cfg.d_model)
    return ModelBundle(cfg, {k: v.astype(np.float32) for k, v in w.items()})


# ---------------------------------------------------------------------------
# kernels


def rms_norm(x: np.ndarray, weight: np.ndarray | None, eps: float) -> np.ndarray:
    ms = np.mean(np.square(x), axis=-1, keepdims=True)
    y = x / np.sqrt(ms + eps)
    return y if weight is None else y * weight


def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def rope(x: np.ndarray, positions: np.ndarray, base: float) -> np.ndarray:
    """Rotary embedding over the last axis of a (heads, n, head_dim) array (half-split layout)."""
    half = x.shape[-1] // 2
    inv_freq = base ** (-np.arange(half, dtype=np.float64) / half)
    ang = np.asarray(positions, dtype=np.float64)[:, None] * inv_freq[None, :]
    cos = np.cos(ang).astype(np.float32)
    sin = np.sin(ang).astype(np.float32)
    x1, x2 = x[..., :half], x[..., half:]
    return np.concatenate([x1 * cos - x2 * sin, x1 * sin + x2 * cos], axis=-1)


def attend(q: np.ndarray, k: np.ndarray, v: np.ndarray, kind: AttentionKind,
           positions: np.ndarray, key_positions: np.ndarray | None = None) -> np.ndarray:
    """Causal scaled-dot-product attention with grouped KV heads.

    ``q`` is (n_heads, n_q, d); ``k``/``v`` are (n_kv_heads, n_k, d), already
    QK-normalized and rotated. ``key_positions`` defaults to ``positions``
    (self-attention); entries < 0 mark empty cache slots. Every key/query pair
    is scored, so the cost is the full n_q x n_k rectangle.
    """
    if kind.tag == SKIP:
        raise ValueError("skip layers bypass attention; they are handled at layer level")
    if q.ndim != 3 or k.ndim != 3 or v.shape != k.shape or q.shape[2] != k.shape[2]:
        raise ValueError(f"shape mismatch: q{q.shape} k{k.shape} v{v.shape}")
    n_heads, n_q, d = q.shape
    n_kv, n_k, _ = k.shape
    if n_heads % n_kv:
        raise ValueError(f"{n_kv} kv heads do not divide {n_heads} query heads")
    positions = np.asarray(positions)
    if positions.shape != (n_q,):
        raise ValueError("positions must have one entry per query")
    if n_q > 1 and np.any(np.diff(positions) <= 0):
        raise ValueError("query positions must be strictly increasing")
    if key_positions is None:
        key_positions = positions
    key_positions = np.asarray(key_positions)
    if key_positions.shape != (n_k,):
        raise ValueError("key_positions must have one entry per key")

    mask = (key_positions[None, :] <= positions[:, None]) & (key_positions[None, :] >= 0)
    if kind.tag == SWA:
        mask &= (positions[:, None] - key_positions[None, :]) < kind.window

    g = n_heads // n_kv
    qg = q.reshape(n_kv, g * n_q, d)
    scores = np.matmul(qg, k.transpose(0, 2, 1))
    scores *= np.float32(1.0 / np.sqrt(d))
    scores = scores.reshape(n_kv, g, n_q, n_k)
    np.copyto(scores, -np.inf, where=~mask)
    scores -= scores.max(axis=-1, keepdims=True)
    np.exp(scores, out=scores)
    scores /= scores.sum(axis=-1, keepdims=True)
    out = np.matmul(scores.reshape(n_kv, g * n_q, n_k), v)
    return out.reshape(n_heads, n_q, d)


# ---------------------------------------------------------------------------
# KV cache


class _LinearBuffer:
    """Append-only KV store for full-attention layers."""

    def __init__(self, capacity: int, n_kv: int, head_dim: int):
        self.k = np.empty((n_kv, capacity, head_dim), dtype=np.float32)
        self.v = np.empty_like(self.k)
        self.length = 0
        self.last_attn_width = 0

    @property
    def capacity(self):
        return self.k.shape[1]

    def attend_chunk(self, q, k, v, pos, kind):
        n = k.shape[1]
        start = self.length
        if start + n > self.capacity:
            raise ValueError(f"context {start + n} exceeds cache capacity {self.capacity}")
        self.k[:, start:start + n] = k
        self.v[:, start:start + n] = v
        self.length += n
        # Lower-triangular tiling: query tile [a, b) only reads keys < start + b.
        out = np.empty((q.shape[0], n, q.shape[2]), dtype=np.float32)
        for a in range(0, n, CAUSAL_TILE):
            b = min(a + CAUSAL_TILE, n)
            end = start + b
            out[:, a:b] = attend(q[:, a:b], self.k[:, :end], self.v[:, :end], kind,
                                 pos[a:b], np.arange(end))
        self.last_attn_width = start + n
        return out


class _RingBuffer:
    """Circular KV store of ``window`` slots for sliding-window layers.

    Each chunk is scored against the whole buffer plus itself (a dense
    n x (window + n) matrix); out-of-window and empty slots are masked, not
    skipped.
    """

    def __init__(self, window: int, n_kv: int, head_dim: int):
        self.window = window
        self.k = np.zeros((n_kv, window, head_dim), dtype=np.float32)
        self.v = np.zeros_like(self.k)
        self.pos = np.full(window, -1, dtype=np.int64)
        self.cursor = 0
        self.last_attn_width = 0

    @property
    def length(self) -> int:
        return int(np.count_nonzero(self.pos >= 0))

    def attend_chunk(self, q, k, v, pos, kind):
        n = k.shape[1]
        keys = np.concatenate([self.k, k], axis=1)
        vals = np.concatenate([self.v, v], axis=1)
        kpos = np.concatenate([self.pos, pos])
        out = attend(q, keys, vals, kind, pos, kpos)
        self.last_attn_width = keys.shape[1]
        keep = min(n, self.window)
        slots = (self.cursor + np.arange(keep)) % self.window
        self.k[:, slots] = k[:, n - keep:]
        self.v[:, slots] = v[:, n - keep:]
        self.pos[slots] = pos[n - keep:]
        self.cursor = (self.cursor + keep) % self.window
        return out


class KVCache:
    def __init__(self, config: ModelConfig, capacity: int | None = None):
        self.config = config
        capacity = capacity or config.max_context
        self.layers = []
        for kind in config.attn_pattern:
            if kind.tag == FULL:
                self.layers.append(_LinearBuffer(capacity, config.n_kv_heads, config.head_dim))
            elif kind.tag == SWA:
                self.layers.append(_RingBuffer(kind.window, config.n_kv_heads, config.head_dim))
            else:
                self.layers.append(None)
        self.position = 0

    def occupancy(self) -> list[int]:
        return [0 if buf is None else buf.length for buf in self.layers]


# ---------------------------------------------------------------------------
# forward


def _layer(model: ModelBundle, i: int, x: np.ndarray, pos: np.ndarray, cache: KVCache | None,
           recorder=None) -> np.ndarray:
    cfg = model.config
    w = model.weights
    p = f"layer.{i}."
    kind = cfg.attn_pattern[i]
    x_in = x
    if kind.tag != SKIP:
        n = x.shape[0]
        h = rms_norm(x, w[p + "attn_norm"], cfg.norm_eps)
        q = (h @ w[p + "attn.wq"]).reshape(n, cfg.n_heads, cfg.head_dim).transpose(1, 0, 2)
        k = (h @ w[p + "attn.wk"]).reshape(n, cfg.n_kv_heads, cfg.head_dim).transpose(1, 0, 2)
        v = (h @ w[p + "attn.wv"]).reshape(n, cfg.n_kv_heads, cfg.head_dim).transpose(1, 0, 2)
        q = rope(rms_norm(q, w[p + "attn.q_norm"], cfg.norm_eps), pos, cfg.rope_base)
        k = rope(rms_norm(k, w[p + "attn.k_norm"], cfg.norm_eps), pos, cfg.rope_base)
        v = np.ascontiguousarray(v)
        if cache is not None:
            o = cache.layers[i].attend_chunk(q, k, v, pos, kind)
        else:
            o = attend(q, k, v, kind, pos)
        x = x + o.transpose(1, 0, 2).reshape(n, cfg.attn_width) @ w[p + "attn.wo"]
    h = rms_norm(x, w[p + "ffn_norm"], cfg.norm_eps)
    hidden = silu(h @ w[p + "ffn.w_gate"]) * (h @ w[p + "ffn.w_up"])
    x = x + hidden @ w[p + "ffn.w_down"]
    if recorder is not None:
        recorder.update(i, x_in, hidden, x)
    return x


def _check_swa_windows(cfg: ModelConfig, chunk_size: int):
    for i, kind in enumerate(cfg.attn_pattern):
        if kind.tag == SWA and kind.window < chunk_size:
            raise ValueError(
                f"layer {i}: SWA window {kind.window} is below the prefill chunk size {chunk_size}")


def prefill(model: ModelBundle, tokens: Sequence[int], chunk_size: int, *, capacity: int | None = None,
            all_logits: bool = False, recorder=None):
    """Chunked prefill. Returns (logits, cache).

    ``logits`` is the last-position vector, or every position's logits when
    ``all_logits`` is set.
    """
    cfg = model.config
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1 or tokens.size == 0:
        raise ValueError("prefill needs a non-empty 1-D token list")
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    _check_swa_windows(cfg, chunk_size)
    if tokens.min() < 0 or tokens.max() >= cfg.vocab_size:
        raise ValueError("token id out of vocabulary")
    cache = KVCache(cfg, capacity or max(cfg.max_context, tokens.size))
    emb = model.weights["tok_embeddings"]
    outs = []
    for start in range(0, tokens.size, chunk_size):
        chunk = tokens[start:start + chunk_size]
        pos = np.arange(start, start + chunk.size)
        x = emb[chunk]
        for i in range(cfg.n_layers):
            x = _layer(model, i, x, pos, cache, recorder)
        cache.position = start + chunk.size
        outs.append(x if all_logits else x[-1:])
    x = np.concatenate(outs) if all_logits else outs[-1]
    logits = rms_norm(x, model.weights["final_norm"], cfg.norm_eps) @ model.lm_head()
    return (logits if all_logits else logits[0]), cache


def decode_step(model: ModelBundle, cache: KVCache, token: int) -> np.ndarray:
    cfg = model.config
    if cache.config != cfg:
        raise CacheMismatchError("cache was built for a different model config")
    if not 0 <= int(token) < cfg.vocab_size:
        raise ValueError("token id out of vocabulary")
    pos = np.array([cache.position])
    x = model.weights["tok_embeddings"][[int(token)]]
    for i in range(cfg.n_layers):
        x = _layer(model, i, x, pos, cache)
    cache.position += 1
    return (rms_norm(x, model.weights["final_norm"], cfg.norm_eps) @ model.lm_head())[0]


# ---------------------------------------------------------------------------
# activation capture


@dataclass
class ActivationTrace:
    """Streaming aggregates of per-layer activations (float64 sums).

    Per layer ``l`` over all N positions:
      ffn_sumsq[l, j]        sum of squared post-gate FFN hidden activations
      ffn_norm_sum[l]        sum of ||hidden_i||
      resid_sumsq[l, j]      sum of squared RMS-normalized layer inputs
      resid_norm_sum[l]      sum of ||norm(x_i)||
      cos_sum[l]             sum of cos(layer input_i, layer output_i)
      n_degenerate[l]        positions where either vector had zero norm
    """

    n_positions: int
    ffn_sumsq: np.ndarray
    ffn_norm_sum: np.ndarray
    resid_sumsq: np.ndarray
    resid_norm_sum: np.ndarray
    cos_sum: np.ndarray
    n_degenerate: np.ndarray

    @property
    def n_layers(self) -> int:
        return self.ffn_sumsq.shape[0]


class TraceRecorder:
    """Accumulates an :class:`ActivationTrace` one (layer, batch) at a time."""

    def __init__(self, n_layers: int, d_model: int, d_ffn: int):
        self.n_layers = n_layers
        self.ffn_sumsq = np.zeros((n_layers, d_ffn))
        self.ffn_norm_sum = np.zeros(n_layers)
        self.resid_sumsq = np.zeros((n_layers, d_model))
        self.resid_norm_sum = np.zeros(n_layers)
        self.cos_sum = np.zeros(n_layers)
        self.n_degenerate = np.zeros(n_layers, dtype=np.int64)
        self._counts = np.zeros(n_layers, dtype=np.int64)

    def update(self, layer: int, x_in: np.ndarray, hidden: np.ndarray, x_out: np.ndarray):
        x_in = np.asarray(x_in, dtype=np.float64)
        x_out = np.asarray(x_out, dtype=np.float64)
        hidden = np.asarray(hidden, dtype=np.float64)
        self.ffn_sumsq[layer] += np.einsum("ij,ij->j", hidden, hidden)
        self.ffn_norm_sum[layer] += np.sqrt(np.einsum("ij,ij->i", hidden, hidden)).sum()
        normed = _safe_rms(x_in)
        self.resid_sumsq[layer] += np.einsum("ij,ij->j", normed, normed)
        self.resid_norm_sum[layer] += np.sqrt(np.einsum("ij,ij->i", normed, normed)).sum()
        nin = np.einsum("ij,ij->i", x_in, x_in)
        nout = np.einsum("ij,ij->i", x_out, x_out)
        dot = np.einsum("ij,ij->i", x_in, x_out)
        ok = (nin > 0) & (nout > 0)
        cos = np.zeros_like(dot)
        cos[ok] = np.clip(dot[ok] / np.sqrt(nin[ok] * nout[ok]), -1.0, 1.0)
        self.cos_sum[layer] += cos.sum()
        self.n_degenerate[layer] += int(np.count_nonzero(~ok))
        self._counts[layer] += x_in.shape[0]

    def trace(self) -> ActivationTrace:
        if not np.all(self._counts == self._counts[0]):
            raise ValueError("layers saw different position counts")
        return ActivationTrace(int(self._counts[0]), self.ffn_sumsq.copy(), self.ffn_norm_sum.copy(),
                               self.resid_sumsq.copy(), self.resid_norm_sum.copy(),
                               self.cos_sum.copy(), self.n_degenerate.copy())


def _safe_rms(x: np.ndarray) -> np.ndarray:
    ms = np.mean(np.square(x), axis=-1, keepdims=True)
    out = np.zeros_like(x)
    nz = ms[:, 0] > 0
    out[nz] = x[nz] / np.sqrt(ms[nz])
    return out


def capture_activations(model: ModelBundle, batches: Iterable) -> ActivationTrace:
    """Run calibration sequences through the model and aggregate activations.

    ``batches`` yields 2-D (batch, seq) token arrays or lists of sequences.
    Nothing per-position is retained.
    """
    cfg = model.config
    rec = TraceRecorder(cfg.n_layers, cfg.d_model, cfg.d_ffn)
    windows = [k.window for k in cfg.attn_pattern if k.tag == SWA]
    seen = 0
    for batch in batches:
        for seq in batch:
            seq = np.asarray(seq)
            chunk = min([seq.size] + windows)
            prefill(model, seq, chunk, recorder=rec)
            seen += 1
    if seen == 0:
        raise ValueError("no calibration batches")
    return rec.trace()
