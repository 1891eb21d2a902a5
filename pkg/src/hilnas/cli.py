"""Command-line driver: ``hilnas <command> --config run.json``.

Commands: ``init-base``, ``calibrate``, ``search``, ``bench``, ``report``.
Exit codes: 0 success, 2 configuration or input error, 3 infeasible point,
4 trial-store conflict.

The run configuration is JSON; every key is optional::

    {
      "output_dir": "run",             # relative paths resolve against the config file
      "base_checkpoint": null,          # default <output_dir>/base
      "corpus": null,                   # default: bundled corpus
      "seed": 0,
      "base": {"n_layers": 16},         # overrides for the desk-size base config
      "space": {},                      # SearchSpace overrides
      "allow_out_of_bounds": false,
      "swa_window": 1024,
      "latency": "host",                # host | analytic | flops
      "oracle": "synthetic",            # synthetic | nll
      "calibration": {"n_positions": 65536, "seq_len": 512, "batch_size": 8},
      "bench": {...BenchProtocol fields...},
      "search": {...SearchConfig fields...}
    }

``HILNAS_THREADS`` overrides the benchmark thread count, including ``--threads``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import (CORRELATION_COLUMNS, PARETO_COLUMNS, RANK_COLUMNS, export_pareto, proxy_correlation,
                       rank_stability, to_csv)
from .bench import BenchProtocol, host_fingerprint
from .calib import calibrate, calibration_batches, load_corpus, load_stats, save_stats, split_corpus
from .checkpoint import config_digest, load_checkpoint, save_checkpoint
from .model import desk_base_config, init_model
from .oracles import AnalyticLatency, FlopsLatency, HostLatency, NLLQuality, SyntheticQuality, synthetic_loss_curve
from .search import SearchConfig, Trial, run_stage1, run_stage2
from .space import SearchSpace, is_feasible, parse_point
from .store import StoreConflictError, TrialStore, config_hash

log = logging.getLogger("hilnas")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_CONFLICT = 0, 2, 3, 4
RANK_STEPS = (10_000, 120_000)
RANK_CANDIDATES = 20


class InfeasiblePointError(ValueError):
    pass


@dataclass
class RunConfig:
    output_dir: Path = Path("run")
    base_checkpoint: Path | None = None
    corpus: Path | None = None
    seed: int = 0
    base: dict = field(default_factory=dict)
    space: SearchSpace = field(default_factory=SearchSpace)
    allow_out_of_bounds: bool = False
    swa_window: int = 1024
    latency: str = "host"
    oracle: str = "synthetic"
    calibration: dict = field(default_factory=lambda: {"n_positions": 65536, "seq_len": 512, "batch_size": 8})
    bench: BenchProtocol = field(default_factory=BenchProtocol)
    search: SearchConfig = field(default_factory=SearchConfig)

    @property
    def base_path(self) -> Path:
        return self.base_checkpoint or self.output_dir / "base"

    @property
    def stats_path(self) -> Path:
        return self.output_dir / "calib.npz"

    @property
    def store_path(self) -> Path:
        return self.output_dir / "trials.jsonl"

    @classmethod
    def from_dict(cls, d: dict, root: Path = Path(".")) -> "RunConfig":
        known = {"output_dir", "base_checkpoint", "corpus", "seed", "base", "space", "allow_out_of_bounds",
                 "swa_window", "latency", "oracle", "calibration", "bench", "search"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")

        def path(v):
            return None if v is None else (root / v if not Path(v).is_absolute() else Path(v))

        cfg = cls()
        cfg.output_dir = path(d.get("output_dir", "run"))
        cfg.base_checkpoint = path(d.get("base_checkpoint"))
        cfg.corpus = path(d.get("corpus"))
        if cfg.corpus is not None and not cfg.corpus.exists():
            raise ValueError(f"corpus {cfg.corpus} does not exist")
        cfg.seed = int(d.get("seed", 0))
        cfg.base = dict(d.get("base", {}))
        cfg.allow_out_of_bounds = bool(d.get("allow_out_of_bounds", False))
        cfg.space = SearchSpace.from_dict(d.get("space", {}), cfg.allow_out_of_bounds)
        cfg.swa_window = int(d.get("swa_window", 1024))
        cfg.latency = d.get("latency", "host")
        cfg.oracle = d.get("oracle", "synthetic")
        cfg.calibration.update(d.get("calibration", {}))
        cfg.bench = BenchProtocol(**d.get("bench", {}))
        search = dict(d.get("search", {}))
        search.setdefault("seed", cfg.seed)
        cfg.search = SearchConfig(**search)
        return cfg.validate()

    def validate(self) -> "RunConfig":
        if self.latency not in ("host", "analytic", "flops"):
            raise ValueError(f"latency must be host, analytic or flops, not {self.latency!r}")
        if self.oracle not in ("synthetic", "nll"):
            raise ValueError(f"oracle must be synthetic or nll, not {self.oracle!r}")
        if self.search.target_context not in self.bench.context_lengths and self.latency == "host":
            raise ValueError("search.target_context must be one of bench.context_lengths")
        self.search.validate()
        desk_base_config(**self.base)
        return self

    def semantic_dict(self) -> dict:
        """Everything that changes what a trial means. Paths and budgets are
        excluded: budgets may be extended on resume, and replay itself checks
        that every stored trial matches the proposal at its index."""
        search = self.search.to_dict()
        search.pop("stage1_budget")
        search.pop("stage2_budget")
        return {"seed": self.seed, "base": config_digest(desk_base_config(**self.base)), "space": self.space.to_dict(),
                "swa_window": self.swa_window, "latency": self.latency, "oracle": self.oracle,
                "calibration": self.calibration, "bench": self.bench.to_dict(), "search": search}


def load_config(path: str | None, args=None) -> RunConfig:
    if path:
        p = Path(path)
        try:
            d = json.loads(p.read_text())
        except FileNotFoundError:
            raise ValueError(f"config file {p} not found") from None
        except json.JSONDecodeError as e:
            raise ValueError(f"config file {p} is not valid JSON: {e}") from None
        root = p.parent
    else:
        d, root = {}, Path(".")
    if args is not None:
        if args.seed is not None:
            d["seed"] = args.seed
            d.setdefault("search", {})["seed"] = args.seed
        if getattr(args, "oracle", None):
            d["oracle"] = args.oracle
        if getattr(args, "threads", None):
            d.setdefault("bench", {})["threads"] = args.threads
    return RunConfig.from_dict(d, root)


def _open_store(cfg: RunConfig, readonly=False) -> TrialStore:
    return TrialStore(cfg.store_path, config_hash(cfg.semantic_dict()),
                      host=host_fingerprint(cfg.bench.threads), readonly=readonly)


def _load_base(cfg: RunConfig):
    if not (cfg.base_path / "config.txt").exists():
        raise ValueError(f"no base checkpoint at {cfg.base_path}; run init-base first")
    return load_checkpoint(cfg.base_path)


def _load_stats(cfg: RunConfig):
    if not cfg.stats_path.exists():
        raise ValueError(f"no calibration stats at {cfg.stats_path}; run calibrate first")
    return load_stats(cfg.stats_path)[0]


def _latency_source(cfg: RunConfig):
    ctx = cfg.bench.context_lengths
    if cfg.latency == "analytic":
        return AnalyticLatency(ctx, cfg.bench.chunk_size, cfg.swa_window)
    if cfg.latency == "flops":
        return FlopsLatency(desk_base_config(**cfg.base), cfg.space, ctx, cfg.swa_window)
    return HostLatency(_load_base(cfg), _load_stats(cfg), cfg.space, cfg.bench, cfg.swa_window)


def _quality_oracle(cfg: RunConfig):
    if cfg.oracle == "synthetic":
        return SyntheticQuality(cfg.seed)
    _, heldout = split_corpus(load_corpus(cfg.corpus))
    return NLLQuality(_load_base(cfg), _load_stats(cfg), heldout, cfg.space, cfg.swa_window)


# ---------------------------------------------------------------------------
# commands


def cmd_init_base(cfg: RunConfig, args) -> int:
    model = init_model(desk_base_config(**cfg.base), cfg.seed)
    save_checkpoint(model, cfg.base_path)
    print(f"base checkpoint {cfg.base_path} ({model.config.n_layers} layers, d_model {model.config.d_model}, "
          f"checksum {model.checksum()})")
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig, args) -> int:
    if cfg.stats_path.exists() and not args.force:
        print(f"calibration stats {cfg.stats_path} exist; reusing (pass --force to recompute)")
        return EXIT_OK
    model = _load_base(cfg)
    train, _ = split_corpus(load_corpus(cfg.corpus))
    stats = calibrate(model, calibration_batches(train, **cfg.calibration))
    save_stats(stats, cfg.stats_path, base=config_digest(model.config), checksum=model.checksum(),
               n_positions=stats.n_positions)
    print(f"calibration stats {cfg.stats_path} ({stats.n_positions} positions, {stats.n_layers} layers)")
    return EXIT_OK


def cmd_search(cfg: RunConfig, args) -> int:
    scfg = cfg.search
    if args.trials is not None:
        if args.stage in ("1", "both"):
            scfg.stage1_budget = args.trials
        if args.stage in ("2", "both"):
            scfg.stage2_budget = args.trials
    scfg.validate()
    with _open_store(cfg) as store:
        # stage 2 replays stage 1 from the store to rebuild the latency GP
        s1 = run_stage1(cfg.space, scfg, _latency_source(cfg), store)
        print(f"stage 1: {len(s1.trials)} trials, latency GP cross-val R^2 = {s1.cv_r2:.4f}")
        if args.stage != "1":
            s2 = run_stage2(s1.latency_gp, _quality_oracle(cfg), scfg, cfg.space, store)
            out = cfg.output_dir / "pareto.csv"
            out.write_text(export_pareto(s2.trials, scfg.reference_point))
            print(f"stage 2: {len(s2.trials)} trials, {len(s2.front)} on the front; wrote {out}")
    return EXIT_OK


def cmd_bench(cfg: RunConfig, args) -> int:
    point = parse_point(args.point)
    if not cfg.space.contains(point) and not args.allow_infeasible:
        raise InfeasiblePointError(f"{point} lies outside the search space")
    if not is_feasible(point, cfg.search.feasibility_max_consecutive) and not args.allow_infeasible:
        raise InfeasiblePointError(
            f"{point} has a run of {cfg.search.feasibility_max_consecutive + 1} or more consecutive "
            "SWA/skip layers, which the search space excludes (pass --allow-infeasible to measure anyway)")
    samples = _latency_source(cfg)(point)
    with _open_store(cfg) as store:
        for s in samples:
            store.append("bench", s.to_dict())
    for s in samples:
        dec = "-" if s.decode_tok_per_s is None else f"{s.decode_tok_per_s:.2f}"
        flag = "  UNSTABLE" if s.unstable else ""
        print(f"context {s.context}: ttft {s.ttft_seconds:.4f} s  decode {dec} tok/s  "
              f"spread {s.run_spread:.3f}{flag}")
    return EXIT_OK


def cmd_report(cfg: RunConfig, args) -> int:
    if not cfg.store_path.exists():
        raise ValueError(f"trial store {cfg.store_path} does not exist")
    store = _open_store(cfg, readonly=True)
    if not store.records:
        raise ValueError(f"trial store {cfg.store_path} is empty")
    if args.kind == "pareto":
        text = export_pareto([Trial.from_record(r) for r in store.trials(2)], cfg.search.reference_point)
    elif args.kind == "correlation":
        trials = [Trial.from_record(r) for r in store.trials(1)]
        report = proxy_correlation(trials, cfg.space, desk_base_config(**cfg.base), cfg.swa_window)
        text = to_csv(report.rows(), CORRELATION_COLUMNS)
    else:
        if cfg.oracle != "synthetic":
            raise ValueError("the rank report needs the step-aware synthetic oracle")
        trials = sorted((Trial.from_record(r) for r in store.trials(2)), key=lambda t: t.index)[:RANK_CANDIDATES]
        series = {t.point.encode(): dict(zip(RANK_STEPS, synthetic_loss_curve(t.point, RANK_STEPS, cfg.seed)))
                  for t in trials}
        tau = rank_stability(series, *RANK_STEPS) if len(series) >= 2 else float("nan")
        text = to_csv([{"early_step": RANK_STEPS[0], "late_step": RANK_STEPS[1], "tau": tau, "n": len(series)}],
                      RANK_COLUMNS)
    out = cfg.output_dir / f"{args.kind}.csv"
    out.write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hilnas", description=__doc__.split("\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (JSON)")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--threads", type=int, help="benchmark thread count")
    common.add_argument("--oracle", choices=("synthetic", "nll"), help="quality oracle")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("init-base", parents=[common], help="write the synthetic base checkpoint")
    p = sub.add_parser("calibrate", parents=[common], help="capture activation statistics")
    p.add_argument("--force", action="store_true", help="recompute existing stats")
    p = sub.add_parser("search", parents=[common], help="run or resume the search")
    p.add_argument("--stage", choices=("1", "2", "both"), default="both")
    p.add_argument("--trials", type=int, help="budget for the selected stage(s)")
    p = sub.add_parser("bench", parents=[common], help="measure one encoded point")
    p.add_argument("--point", required=True, help="e.g. L13-F6144-M1280-P=F.S.K...")
    p.add_argument("--allow-infeasible", action="store_true")
    p = sub.add_parser("report", parents=[common], help="write an analysis table")
    p.add_argument("--kind", choices=("pareto", "correlation", "rank"), default="pareto")
    return parser


COMMANDS = {"init-base": cmd_init_base, "calibrate": cmd_calibrate, "search": cmd_search,
            "bench": cmd_bench, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = load_config(args.config, args)
        return COMMANDS[args.command](cfg, args)
    except InfeasiblePointError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except StoreConflictError as e:
        print(f"store conflict: {e}", file=sys.stderr)
        return EXIT_CONFLICT
    except (ValueError, TypeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
