import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hilnas.model import AttentionKind, ModelConfig, init_model  # noqa: E402


def tiny_config(pattern="FFFF", d_model=32, d_ffn=64, n_heads=4, n_kv_heads=2, head_dim=8, window=16,
                block_unit=8, tied=True):
    lut = {"F": AttentionKind.full(), "S": AttentionKind.swa(window), "K": AttentionKind.skip()}
    return ModelConfig(n_layers=len(pattern), d_model=d_model, d_ffn=d_ffn, n_heads=n_heads,
                       n_kv_heads=n_kv_heads, head_dim=head_dim, attn_pattern=tuple(lut[c] for c in pattern),
                       block_unit=block_unit, tied_embeddings=tied)


@pytest.fixture
def tiny():
    return init_model(tiny_config(), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        status, detail = mod.RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")
