import numpy as np
import pytest

from hilnas.gp import cross_val_r2, gp_fit
from hilnas.oracles import AnalyticLatency, SyntheticQuality
from hilnas.search import (SearchConfig, Trial, _sub_seed, feasible_sobol_points, front_hypervolume,
                           front_within, run_stage1, run_stage2, sobol_baseline)
from hilnas.space import SearchSpace, is_feasible
from hilnas.store import StoreConflictError, TrialStore

SPACE = SearchSpace()


def small_config(**kw):
    base = dict(stage1_budget=16, stage2_budget=8, batch_size=4, mc_samples=16, n_init=4, n_candidates=64,
                gp_restarts=1, cv_folds=4)
    base.update(kw)
    return SearchConfig(**base)


def test_config_validation_and_round_trip():
    c = small_config()
    assert SearchConfig.from_dict(c.to_dict()) == c
    for bad in (dict(stage1_budget=0), dict(batch_size=0), dict(stage1_refine=16), dict(reference_point=(1,)),
                dict(cv_folds=1)):
        with pytest.raises(ValueError):
            small_config(**bad).validate()


def test_sub_seed_deterministic_and_distinct():
    assert _sub_seed(0, 2, "mc", 1) == _sub_seed(0, 2, "mc", 1)
    assert len({_sub_seed(0, 2, "mc", i) for i in range(50)}) == 50


def test_feasible_sobol_points_distinct_and_feasible():
    pts = feasible_sobol_points(SPACE, 40, 0)
    assert len(set(pts)) == 40 and all(is_feasible(p) for p in pts)
    assert feasible_sobol_points(SPACE, 5, 0) == pts[:5]
    assert not set(feasible_sobol_points(SPACE, 5, 0, exclude=pts[:5])) & set(pts[:5])


def test_stage1_sixteen_feasible_records(tmp_path):
    with TrialStore(tmp_path / "t.jsonl", "h") as store:
        res = run_stage1(SPACE, small_config(), AnalyticLatency(), store)
        recs = store.trials(stage=1)
    assert len(res.trials) == 16 and len(recs) == 16
    assert all(is_feasible(t.point) for t in res.trials)
    assert [r["index"] for r in recs] == list(range(16))


def test_stage1_cv_r2_matches_direct_computation():
    cfg = small_config()
    res = run_stage1(SPACE, cfg, AnalyticLatency())
    X = np.array([SPACE.featurize(t.point) for t in res.trials])
    y = np.array([t.ttft for t in res.trials])
    r2 = cross_val_r2(X, y, cfg.cv_folds, seed=cfg.seed, fit=lambda a, b: gp_fit(a, b, n_restarts=1, seed=0))
    assert r2 == res.cv_r2


def test_stage1_refinement_adds_unique_points():
    res = run_stage1(SPACE, small_config(stage1_budget=12, stage1_refine=3), AnalyticLatency())
    assert [t.provenance for t in res.trials].count("refine") == 3
    assert len({t.point for t in res.trials}) == 12


def test_stage1_needs_target_context():
    with pytest.raises(ValueError):
        run_stage1(SPACE, small_config(stage1_budget=2), AnalyticLatency(context_lengths=(1024,)))


@pytest.fixture(scope="module")
def latency_gp():
    return run_stage1(SPACE, small_config(), AnalyticLatency()).latency_gp


def test_stage2_zero_budget_only_seeds(latency_gp):
    res = run_stage2(latency_gp, SyntheticQuality(), small_config(stage2_budget=0), SPACE)
    assert len(res.trials) == 4 and all(t.provenance == "init" for t in res.trials)
    assert res.quality_gp is None


def test_stage2_proposals_feasible_unique_and_predicted(latency_gp):
    res = run_stage2(latency_gp, SyntheticQuality(), small_config(), SPACE)
    assert len(res.trials) == 12
    assert all(is_feasible(t.point) and SPACE.contains(t.point) for t in res.trials)
    assert len({t.point for t in res.trials}) == 12
    assert all(t.ttft_predicted for t in res.trials)
    ref = small_config().reference_point
    assert all(t.quality < ref[0] and t.ttft < ref[1] for t in res.front)


def test_stage2_latency_threshold_filters(latency_gp):
    cfg = small_config(latency_threshold=2.0)
    res = run_stage2(latency_gp, SyntheticQuality(), cfg, SPACE)
    assert all(t.ttft <= 2.0 for t in res.trials if t.provenance != "init")


def test_resume_replays_identically(tmp_path, latency_gp):
    cfg = small_config()
    full = run_stage2(latency_gp, SyntheticQuality(), cfg, SPACE)
    path = tmp_path / "t.jsonl"
    calls = []

    def counting(p):
        calls.append(p)
        return SyntheticQuality()(p)

    with TrialStore(path, "h") as s:
        run_stage2(latency_gp, counting, small_config(stage2_budget=4), SPACE, s)
    n_first = len(calls)
    with TrialStore(path, "h") as s:
        res = run_stage2(latency_gp, counting, cfg, SPACE, s)
    assert [t.point for t in res.trials] == [t.point for t in full.trials]
    assert [t.quality for t in res.trials] == [t.quality for t in full.trials]
    assert len(calls) - n_first == len(full.trials) - n_first


def test_replay_conflict_on_different_point(tmp_path, latency_gp):
    path = tmp_path / "t.jsonl"
    with TrialStore(path, "h") as s:
        run_stage2(latency_gp, SyntheticQuality(), small_config(stage2_budget=0), SPACE, s)
    with TrialStore(path, "h") as s:
        with pytest.raises(StoreConflictError):
            run_stage2(latency_gp, SyntheticQuality(), small_config(stage2_budget=0, seed=5), SPACE, s)


def test_front_within_and_baseline():
    pts = feasible_sobol_points(SPACE, 3, 0)
    ts = [Trial(2, i, p, "x", ttft=l, quality=q) for i, (p, q, l) in enumerate(zip(pts, [0.5, 0.4, 0.7], [1, 2, 0.5]))]
    assert [t.index for t in front_within(ts, (0.6, 4.0))] == [0, 1]
    assert front_within([], (1, 1)) == []
    base = sobol_baseline(SPACE, 5, SyntheticQuality(), lambda p: AnalyticLatency().ttft(p, 2048))
    assert base.shape == (5, 2)
    assert front_hypervolume(base, (10.0, 100.0)) > 0
    assert front_hypervolume([], (1, 1)) == 0.0
