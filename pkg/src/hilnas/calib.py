"""Activation-energy importance metrics and the structured ``prune`` operator."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .model import SKIP, ActivationTrace, ModelBundle, ModelConfig, capture_activations
from .space import SearchPoint

STATS_FORMAT = "hilnas-calib-1"


def _check(trace: ActivationTrace):
    if trace.n_positions <= 0:
        raise ValueError("activation trace has no positions")


def ffn_metric(trace: ActivationTrace) -> np.ndarray:
    """Per-layer, per-hidden-channel RMS activation over all positions, shape (L, d_ffn).

    The sum of squared channel energies equals (1/N) sum ||x_i||^2.
    """
    _check(trace)
    return np.sqrt(trace.ffn_sumsq / trace.n_positions)


def ffn_scalar_metric(trace: ActivationTrace) -> np.ndarray:
    """(1/N) sum_i ||x_i|| per layer."""
    _check(trace)
    return trace.ffn_norm_sum / trace.n_positions


def modeldim_metric(trace: ActivationTrace) -> np.ndarray:
    """Per-residual-channel energy of the RMS-normalized layer inputs, summed over layers."""
    _check(trace)
    return np.sqrt(trace.resid_sumsq / trace.n_positions).sum(axis=0)


def modeldim_scalar_metric(trace: ActivationTrace) -> np.ndarray:
    """(1/N) sum_i ||norm(x_i)|| per layer."""
    _check(trace)
    return trace.resid_norm_sum / trace.n_positions


def layer_metric(trace: ActivationTrace) -> np.ndarray:
    """1 - mean cosine(layer input, layer output after the residual add), in [0, 2].

    Positions where either vector is zero count as similarity 0.
    """
    _check(trace)
    return 1.0 - trace.cos_sum / trace.n_positions


@dataclass
class CalibrationStats:
    ffn_channel_energy: np.ndarray       # (L, d_ffn)
    modeldim_channel_energy: np.ndarray  # (d_model,)
    layer_score: np.ndarray              # (L,)
    n_positions: int
    n_degenerate: np.ndarray | None = None

    @property
    def n_layers(self) -> int:
        return self.layer_score.shape[0]

    @classmethod
    def from_trace(cls, trace: ActivationTrace) -> "CalibrationStats":
        return cls(ffn_metric(trace), modeldim_metric(trace), np.clip(layer_metric(trace), 0.0, 2.0),
                   trace.n_positions, trace.n_degenerate.copy())

    def matches(self, cfg: ModelConfig) -> bool:
        return (self.ffn_channel_energy.shape == (cfg.n_layers, cfg.d_ffn)
                and self.modeldim_channel_energy.shape == (cfg.d_model,)
                and self.layer_score.shape == (cfg.n_layers,))


def save_stats(stats: CalibrationStats, path, **meta) -> Path:
    """Write stats as an ``.npz``: the arrays plus a ``meta`` array of ``key=value`` strings."""
    path = Path(path)
    meta = {"format": STATS_FORMAT, "n_positions": stats.n_positions, **meta}
    degenerate = stats.n_degenerate if stats.n_degenerate is not None else np.zeros(stats.n_layers, np.int64)
    with open(path, "wb") as fh:
        np.savez(fh, ffn_channel_energy=stats.ffn_channel_energy,
                 modeldim_channel_energy=stats.modeldim_channel_energy,
                 layer_score=stats.layer_score, n_degenerate=degenerate,
                 meta=np.array([f"{k}={v}" for k, v in sorted(meta.items())]))
    return path


def load_stats(path) -> tuple[CalibrationStats, dict]:
    with np.load(path) as z:
        meta = dict(s.split("=", 1) for s in z["meta"].tolist())
        if meta.get("format") != STATS_FORMAT:
            raise ValueError(f"{path}: not a calibration stats file")
        stats = CalibrationStats(z["ffn_channel_energy"], z["modeldim_channel_energy"], z["layer_score"],
                                 int(meta["n_positions"]), z["n_degenerate"])
    return stats, meta


# ---------------------------------------------------------------------------
# corpus


def load_corpus(path=None) -> bytes:
    if path is None:
        return resources.files("hilnas").joinpath("data/corpus.txt").read_bytes()
    data = Path(path).read_bytes()
    if not data:
        raise ValueError(f"corpus {path} is empty")
    return data


def split_corpus(data: bytes, heldout_fraction: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    arr = np.frombuffer(data, dtype=np.uint8).astype(np.int64)
    cut = int(len(arr) * (1.0 - heldout_fraction))
    return arr[:cut], arr[cut:]


def calibration_batches(tokens: np.ndarray, n_positions: int = 65536, seq_len: int = 512, batch_size: int = 8):
    """Yield (batch, seq_len) arrays streamed cyclically from ``tokens`` until
    ``n_positions`` positions (rounded down to whole sequences) are covered."""
    tokens = np.asarray(tokens)
    if tokens.size == 0:
        raise ValueError("empty calibration corpus")
    n_seq = max(1, n_positions // seq_len)
    offset = 0
    while n_seq > 0:
        b = min(batch_size, n_seq)
        idx = (offset + np.arange(b * seq_len)) % tokens.size
        yield tokens[idx].reshape(b, seq_len)
        offset = (offset + b * seq_len) % tokens.size
        n_seq -= b


def calibrate(model: ModelBundle, batches) -> CalibrationStats:
    return CalibrationStats.from_trace(capture_activations(model, batches))


# ---------------------------------------------------------------------------
# pruning


@dataclass(frozen=True)
class PruneSpec:
    target: SearchPoint  # in the base model's own channel units
    block_unit: int
    swa_window: int = 1024

    def validate(self, base: ModelConfig):
        t = self.target
        if len(t.attn_pattern) != t.d_layers:
            raise ValueError("pattern length differs from d_layers")
        if t.d_layers > base.n_layers or t.d_ffn > base.d_ffn or t.d_model > base.d_model:
            raise ValueError(f"target {t} exceeds base dims "
                             f"({base.n_layers} layers, d_ffn {base.d_ffn}, d_model {base.d_model})")
        if t.d_layers < 1 or t.d_ffn < self.block_unit or t.d_model < self.block_unit:
            raise ValueError(f"target {t} is empty")
        if t.d_ffn % self.block_unit or t.d_model % self.block_unit:
            raise ValueError(f"target dims must be multiples of block_unit={self.block_unit}")
        if base.d_ffn % self.block_unit or base.d_model % self.block_unit:
            raise ValueError("base dims are not multiples of block_unit")


def top_blocks(energy: np.ndarray, keep_channels: int, block_unit: int) -> np.ndarray:
    """Channel indices of the ``keep_channels // block_unit`` highest-energy blocks.

    Block energy is the sum of member channel energies; ties go to the lower
    block index. Returned indices are ascending. The kept sets are nested in
    ``keep_channels``.
    """
    blocks = np.asarray(energy, dtype=np.float64).reshape(-1, block_unit).sum(axis=1)
    k = keep_channels // block_unit
    order = np.argsort(-blocks, kind="stable")
    kept = np.sort(order[:k])
    return (kept[:, None] * block_unit + np.arange(block_unit)[None, :]).ravel()


def top_layers(layer_score: np.ndarray, keep: int) -> np.ndarray:
    """Indices of the ``keep`` highest-scoring layers in original order (ties keep the earlier layer)."""
    order = np.argsort(-np.asarray(layer_score, dtype=np.float64), kind="stable")
    return np.sort(order[:keep])


def prune(base: ModelBundle, stats: CalibrationStats, spec: PruneSpec) -> ModelBundle:
    """Cut ``base`` down to ``spec.target`` using the calibration metrics.

    Drops the lowest-LayerMetric layers, keeps the top FFN blocks per surviving
    layer and one global set of top residual blocks, then applies the target
    attention pattern (skip layers lose their attention weights). The result
    is a dense, smaller bundle.
    """
    cfg = base.config
    spec.validate(cfg)
    if not stats.matches(cfg):
        raise ValueError("calibration stats were computed for a different model")
    t = spec.target
    bu = spec.block_unit
    layers = top_layers(stats.layer_score, t.d_layers)
    resid = top_blocks(stats.modeldim_channel_energy, t.d_model, bu)
    kinds = t.attention_kinds(spec.swa_window)
    w = base.weights

    out = {"tok_embeddings": w["tok_embeddings"][:, resid]}
    for new_i, old_i in enumerate(layers):
        src, dst = f"layer.{old_i}.", f"layer.{new_i}."
        if kinds[new_i].tag != SKIP:
            if cfg.attn_pattern[old_i].tag == SKIP:
                raise ValueError(f"base layer {old_i} has no attention weights to inherit")
            out[dst + "attn_norm"] = w[src + "attn_norm"][resid]
            for name in ("wq", "wk", "wv"):
                out[dst + "attn." + name] = w[src + "attn." + name][resid, :]
            out[dst + "attn.wo"] = w[src + "attn.wo"][:, resid]
            out[dst + "attn.q_norm"] = w[src + "attn.q_norm"]
            out[dst + "attn.k_norm"] = w[src + "attn.k_norm"]
        ffn = top_blocks(stats.ffn_channel_energy[old_i], t.d_ffn, bu)
        out[dst + "ffn_norm"] = w[src + "ffn_norm"][resid]
        out[dst + "ffn.w_gate"] = w[src + "ffn.w_gate"][np.ix_(resid, ffn)]
        out[dst + "ffn.w_up"] = w[src + "ffn.w_up"][np.ix_(resid, ffn)]
        out[dst + "ffn.w_down"] = w[src + "ffn.w_down"][np.ix_(ffn, resid)]
    out["final_norm"] = w["final_norm"][resid]
    if not cfg.tied_embeddings:
        out["lm_head"] = w["lm_head"][resid, :]

    new_cfg = ModelConfig(
        n_layers=t.d_layers, d_model=t.d_model, d_ffn=t.d_ffn, n_heads=cfg.n_heads,
        n_kv_heads=cfg.n_kv_heads, head_dim=cfg.head_dim, vocab_size=cfg.vocab_size,
        attn_pattern=kinds, block_unit=bu, norm_eps=cfg.norm_eps,
        tied_embeddings=cfg.tied_embeddings, rope_base=cfg.rope_base, max_context=cfg.max_context,
    ).validate()
    return ModelBundle(new_cfg, out)
