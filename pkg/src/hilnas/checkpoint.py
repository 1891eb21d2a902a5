"""On-disk checkpoint format.

A checkpoint is a directory::

    config.txt          one ``key = value`` line per ModelConfig field
    tensors.txt         ``<name> <dim0>x<dim1>...`` per tensor, canonical order
    <name>.f32          raw little-endian float32, C order

Tensor names (``i`` is the 0-based layer index after pruning):

    tok_embeddings                      (vocab, d_model)
    layer.i.attn_norm                   (d_model,)          absent for skip layers
    layer.i.attn.wq / wk / wv / wo      projections         absent for skip layers
    layer.i.attn.q_norm / k_norm        (head_dim,)         absent for skip layers
    layer.i.ffn_norm                    (d_model,)
    layer.i.ffn.w_gate / w_up           (d_model, d_ffn)
    layer.i.ffn.w_down                  (d_ffn, d_model)
    final_norm                          (d_model,)
    lm_head                             (d_model, vocab)    only when untied

The attention pattern is stored as ``attn_pattern = full.swa1024.skip...``.
"""

from __future__ import annotations

import hashlib
from dataclasses import fields
from pathlib import Path

import numpy as np

from .model import SKIP, SWA, AttentionKind, ModelBundle, ModelConfig, tensor_shapes

_INT_FIELDS = ("n_layers", "d_model", "d_ffn", "n_heads", "n_kv_heads", "head_dim", "vocab_size",
               "block_unit", "max_context")
_FLOAT_FIELDS = ("norm_eps", "rope_base")


def pattern_to_text(pattern) -> str:
    return ".".join(str(k) for k in pattern)


def pattern_from_text(text: str) -> tuple[AttentionKind, ...]:
    out = []
    for tok in text.split("."):
        if tok == SKIP:
            out.append(AttentionKind.skip())
        elif tok.startswith(SWA):
            out.append(AttentionKind.swa(int(tok[len(SWA):])))
        else:
            out.append(AttentionKind(tok))
    return tuple(out)


def config_to_text(cfg: ModelConfig) -> str:
    lines = []
    for f in fields(cfg):
        val = getattr(cfg, f.name)
        if f.name == "attn_pattern":
            val = pattern_to_text(val)
        elif isinstance(val, bool):
            val = "true" if val else "false"
        lines.append(f"{f.name} = {val}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> ModelConfig:
    kv = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        kv[key.strip()] = val.strip()
    args = {}
    for name in _INT_FIELDS:
        args[name] = int(kv[name])
    for name in _FLOAT_FIELDS:
        args[name] = float(kv[name])
    args["tied_embeddings"] = kv["tied_embeddings"].lower() == "true"
    args["attn_pattern"] = pattern_from_text(kv["attn_pattern"])
    return ModelConfig(**args).validate()


def config_digest(cfg: ModelConfig) -> str:
    return hashlib.sha256(config_to_text(cfg).encode()).hexdigest()[:16]


def save_checkpoint(model: ModelBundle, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "config.txt").write_text(config_to_text(model.config))
    index = []
    for name, shape in tensor_shapes(model.config).items():
        model.weights[name].astype("<f4").tofile(path / f"{name}.f32")
        index.append(f"{name} {'x'.join(map(str, shape))}")
    (path / "tensors.txt").write_text("\n".join(index) + "\n")
    return path


def load_checkpoint(path) -> ModelBundle:
    path = Path(path)
    cfg = config_from_text((path / "config.txt").read_text())
    weights = {}
    for name, shape in tensor_shapes(cfg).items():
        arr = np.fromfile(path / f"{name}.f32", dtype="<f4")
        if arr.size != int(np.prod(shape)):
            raise ValueError(f"{name}.f32 holds {arr.size} values, expected shape {shape}")
        weights[name] = arr.reshape(shape)
    return ModelBundle(cfg, weights)
