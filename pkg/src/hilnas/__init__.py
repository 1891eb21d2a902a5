"""Hardware-in-the-loop architecture search for hybrid-attention language models.

A numpy inference engine with full, sliding-window and skip attention;
activation-energy structured pruning; host-CPU latency measurement; and a
two-stage (latency, then quality) multi-objective Bayesian search.
"""

from .model import AttentionKind, KVCache, ModelBundle, ModelConfig, decode_step, desk_base_config, init_model, prefill
from .space import SearchPoint, SearchSpace, is_feasible, parse_point
from .search import SearchConfig, Trial, run_stage1, run_stage2

__version__ = "0.1.0"
