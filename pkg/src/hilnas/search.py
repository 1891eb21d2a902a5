"""Two-stage multi-objective search.

Stage 1 measures latency on Sobol-decoded feasible points (optionally topped
up with max-variance picks) and fits a latency GP. Stage 2 spends quality
evaluations: a quality GP is refit each iteration and a batch of ``q``
candidates is chosen by MC NEHVI against the GP-predicted latency.

Both stages are replayable. Each proposal is keyed by (stage, index); if a
store already holds that key, the stored result is reused instead of
re-evaluated, and a different stored point is a hard conflict. Since every
random draw is seeded from (seed, stage, iteration), a resumed run proposes
exactly the points an uninterrupted run would.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .bench import LatencySample
from .gp import GPSurrogate, cross_val_r2, gp_fit
from .nehvi import nehvi_acquire
from .pareto import hypervolume_2d, pareto_front
from .sobol import SobolStream, sobol
from .space import SearchPoint, SearchSpace, is_feasible, parse_point
from .store import StoreConflictError, TrialStore

log = logging.getLogger(__name__)


@dataclass
class SearchConfig:
    reference_point: tuple = (0.6, 4.0)  # (loss, TTFT seconds)
    stage1_budget: int = 64
    stage2_budget: int = 64
    batch_size: int = 8
    mc_samples: int = 128
    seed: int = 0
    latency_threshold: float | None = None  # drop candidates predicted slower than this
    feasibility_max_consecutive: int = 2
    n_init: int = 8  # stage-2 seed evaluations, not counted in stage2_budget
    n_candidates: int = 256  # Sobol candidates per stage-2 iteration
    n_incumbents: int = 4  # front members whose neighbours join the candidate pool
    stage1_refine: int = 0  # trailing stage-1 trials picked by max posterior variance
    target_context: int = 2048  # context whose TTFT the latency GP models
    cv_folds: int = 5
    gp_restarts: int = 2

    def __post_init__(self):
        self.reference_point = tuple(float(v) for v in self.reference_point)

    def validate(self) -> "SearchConfig":
        if self.stage1_budget < 1 or self.stage2_budget < 0:
            raise ValueError("stage1_budget must be >= 1 and stage2_budget >= 0")
        if self.batch_size < 1 or self.mc_samples < 1 or self.n_init < 1:
            raise ValueError("batch_size, mc_samples and n_init must be >= 1")
        if not 0 <= self.stage1_refine < self.stage1_budget:
            raise ValueError("stage1_refine must leave at least one Sobol trial")
        if len(self.reference_point) != 2:
            raise ValueError("reference_point is (loss, ttft_seconds)")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reference_point"] = list(self.reference_point)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SearchConfig":
        return cls(**d).validate()


@dataclass
class Trial:
    """One evaluated point.

    Stage-1 trials carry measured ``samples``; ``ttft`` is the TTFT at the
    target context. Stage-2 trials carry ``quality`` and a GP-predicted
    ``ttft`` (``ttft_predicted`` set).
    """

    stage: int
    index: int
    point: SearchPoint
    provenance: str
    ttft: float | None = None
    ttft_predicted: bool = False
    quality: float | None = None
    samples: list = field(default_factory=list)

    def to_record(self) -> dict:
        return {"stage": self.stage, "index": self.index, "point": self.point.encode(),
                "provenance": self.provenance, "ttft": self.ttft, "ttft_predicted": self.ttft_predicted,
                "quality": self.quality, "samples": [s.to_dict() for s in self.samples]}

    @classmethod
    def from_record(cls, r: dict) -> "Trial":
        return cls(stage=r["stage"], index=r["index"], point=parse_point(r["point"]),
                   provenance=r["provenance"], ttft=r.get("ttft"), ttft_predicted=r.get("ttft_predicted", False),
                   quality=r.get("quality"), samples=[LatencySample.from_dict(s) for s in r.get("samples", [])])


def _sub_seed(*parts) -> int:
    h = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:4], "little") or 1


def _replay(store: TrialStore | None, trial: Trial, evaluate) -> Trial:
    """Return the stored result for ``trial``'s key, or evaluate and persist it."""
    if store is not None:
        rec = store.lookup(trial.stage, trial.index)
        if rec is not None:
            if rec["point"] != trial.point.encode():
                raise StoreConflictError(
                    f"stage {trial.stage} trial {trial.index}: store has {rec['point']}, "
                    f"run proposes {trial.point.encode()}")
            return Trial.from_record(rec)
    evaluate(trial)
    if store is not None:
        store.append("trial", trial.to_record())
    return trial


def feasible_sobol_points(space: SearchSpace, n: int, seed: int, max_consecutive: int = 2,
                          exclude=(), max_draws: int = 1 << 20) -> list[SearchPoint]:
    """First ``n`` distinct feasible decodes of the Sobol stream for ``seed``."""
    stream = SobolStream(space.dims, seed)
    seen = set(exclude)
    out = []
    while len(out) < n:
        if stream.drawn >= max_draws:
            raise RuntimeError(f"only {len(out)} feasible points in {max_draws} Sobol draws")
        for u in stream.draw(64):
            p = space.decode_point(u)
            if p in seen or not is_feasible(p, max_consecutive):
                continue
            seen.add(p)
            out.append(p)
            if len(out) == n:
                break
    return out


def _ttft_at(samples, context: int) -> float:
    for s in samples:
        if s.context == context:
            if s.ttft_seconds is None:
                break
            return float(s.ttft_seconds)
    raise ValueError(f"no TTFT measured at context {context}")


@dataclass
class Stage1Result:
    latency_gp: GPSurrogate
    trials: list
    cv_r2: float


def run_stage1(space: SearchSpace, config: SearchConfig, bench, store: TrialStore | None = None) -> Stage1Result:
    """Measure latency on ``stage1_budget`` feasible points and fit the latency GP.

    ``bench(point)`` returns a list of :class:`LatencySample`, one of which
    must be at ``config.target_context``.
    """
    config.validate()
    n_sobol = config.stage1_budget - config.stage1_refine
    points = feasible_sobol_points(space, n_sobol, config.seed, config.feasibility_max_consecutive)

    def measure(t: Trial):
        t.samples = list(bench(t.point))
        t.ttft = _ttft_at(t.samples, config.target_context)

    trials = []
    for i, p in enumerate(points):
        trials.append(_replay(store, Trial(1, i, p, "sobol"), measure))

    for r in range(config.stage1_refine):
        # coverage refinement: measure where the latency GP is least certain
        gp = _fit_latency(space, trials, config, _sub_seed(config.seed, 1, "refine", r))
        taken = {t.point for t in trials}
        pool = [p for p in feasible_sobol_points(space, config.n_candidates, _sub_seed(config.seed, 1, "pool", r),
                                                 config.feasibility_max_consecutive) if p not in taken]
        if not pool:
            break
        var = gp.predict(np.array([space.featurize(p) for p in pool]))[1]
        p = pool[int(np.argmax(var))]
        trials.append(_replay(store, Trial(1, len(trials), p, "refine"), measure))

    gp = _fit_latency(space, trials, config, _sub_seed(config.seed, 1, "final"))
    X = np.array([space.featurize(t.point) for t in trials])
    y = np.array([t.ttft for t in trials])
    r2 = float("nan")
    if len(trials) >= config.cv_folds:
        r2 = cross_val_r2(X, y, config.cv_folds, seed=config.seed,
                          fit=lambda a, b: gp_fit(a, b, n_restarts=config.gp_restarts, seed=config.seed))
    log.info("stage 1: %d trials, latency GP cross-val R^2 %.4f", len(trials), r2)
    return Stage1Result(gp, trials, r2)


def _fit_latency(space, trials, config, seed) -> GPSurrogate:
    X = np.array([space.featurize(t.point) for t in trials])
    y = np.array([t.ttft for t in trials])
    return gp_fit(X, y, n_restarts=config.gp_restarts, seed=seed)


@dataclass
class Stage2Result:
    front: list  # trials on the (quality, predicted ttft) front strictly inside the reference point
    trials: list
    quality_gp: GPSurrogate | None


def front_within(trials, ref) -> list:
    """Pareto-optimal trials (quality, ttft) that strictly dominate ``ref``."""
    if not trials:
        return []
    P = np.array([[t.quality, t.ttft] for t in trials], dtype=float)
    idx = pareto_front(P)
    return [trials[i] for i in idx if P[i, 0] < ref[0] and P[i, 1] < ref[1]]


def _candidates(space, config, evaluated, incumbents, iteration) -> list[SearchPoint]:
    seed = _sub_seed(config.seed, 2, "candidates", iteration)
    pool = {}
    for u in sobol(config.n_candidates, space.dims, seed=seed):
        p = space.decode_point(u)
        pool.setdefault(p, None)
    for inc in incumbents:
        for p in space.neighbors(inc):
            pool.setdefault(p, None)
    return [p for p in pool if p not in evaluated and space.contains(p)
            and is_feasible(p, config.feasibility_max_consecutive)]


def run_stage2(latency_gp: GPSurrogate, quality_oracle, config: SearchConfig, space: SearchSpace,
               store: TrialStore | None = None, seed_points=None) -> Stage2Result:
    """Quality search under GP-predicted latency.

    ``seed_points`` (default: the first ``n_init`` feasible Sobol points of the
    run's stream, i.e. the start of stage 1) are evaluated first; then
    ``stage2_budget`` further points are chosen ``batch_size`` at a time.
    """
    config.validate()
    ref = config.reference_point
    if seed_points is None:
        seed_points = feasible_sobol_points(space, config.n_init, config.seed, config.feasibility_max_consecutive)

    def predicted_ttft(p):
        return float(latency_gp.predict(space.featurize(p)[None, :])[0][0])

    def evaluate(t: Trial):
        t.quality = float(quality_oracle(t.point))
        t.ttft = predicted_ttft(t.point)
        t.ttft_predicted = True

    trials = []
    for p in seed_points:
        trials.append(_replay(store, Trial(2, len(trials), p, "init"), evaluate))

    spent, iteration, gp_q = 0, 0, None
    while spent < config.stage2_budget:
        X = np.array([space.featurize(t.point) for t in trials])
        y = np.array([t.quality for t in trials])
        gp_q = gp_fit(X, y, n_restarts=config.gp_restarts, seed=_sub_seed(config.seed, 2, "gp", iteration))
        evaluated = {t.point for t in trials}
        incumbents = [t.point for t in front_within(trials, (np.inf, np.inf))][:config.n_incumbents]
        cands = _candidates(space, config, evaluated, incumbents, iteration)
        if config.latency_threshold is not None and cands:
            lat = latency_gp.predict(np.array([space.featurize(p) for p in cands]))[0]
            cands = [p for p, v in zip(cands, lat) if v <= config.latency_threshold]
        if not cands:
            log.warning("stage 2: candidate pool exhausted after %d trials", spent)
            break
        q = min(config.batch_size, config.stage2_budget - spent)
        picks, _ = nehvi_acquire(gp_q, latency_gp, [t.point for t in trials], ref, cands, q,
                                 mc_samples=config.mc_samples, seed=_sub_seed(config.seed, 2, "mc", iteration),
                                 featurize=space.featurize)
        for p in picks:
            trials.append(_replay(store, Trial(2, len(trials), p, f"nehvi:{iteration}"), evaluate))
        spent += len(picks)
        iteration += 1
        log.info("stage 2 iteration %d: %d quality evaluations", iteration, len(trials))
    return Stage2Result(front_within(trials, ref), trials, gp_q)


def sobol_baseline(space: SearchSpace, n: int, quality_oracle, latency_fn, seed: int = 0,
                   max_consecutive: int = 2) -> np.ndarray:
    """(quality, latency) of the first ``n`` feasible Sobol points; ``latency_fn(point) -> seconds``."""
    pts = feasible_sobol_points(space, n, seed, max_consecutive)
    return np.array([[quality_oracle(p), latency_fn(p)] for p in pts])


def front_hypervolume(points, ref) -> float:
    return hypervolume_2d(np.asarray(points, dtype=float).reshape(-1, 2), ref)
