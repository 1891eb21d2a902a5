import itertools

import numpy as np
import pytest

from hilnas.analysis import (CORRELATION_COLUMNS, PARETO_COLUMNS, export_pareto, kendall_tau, pareto_rows,
                             proxy_correlation, rank_stability, to_csv)
from hilnas.model import desk_base_config
from hilnas.oracles import FlopsLatency
from hilnas.search import Trial, feasible_sobol_points
from hilnas.space import SearchSpace
from reference import brute_front, brute_kendall_tau_b

SPACE = SearchSpace()


def test_tau_examples():
    assert kendall_tau([1, 2, 3], [1, 2, 3]) == 1.0
    assert kendall_tau([1, 2, 3], [3, 2, 1]) == -1.0
    assert kendall_tau([1, 2, 3], [2, 3, 1]) == pytest.approx(-1 / 3)
    assert kendall_tau([1, 2, 3], [1, 3, 2]) == pytest.approx(1 / 3)


def test_tau_matches_brute_force_with_ties():
    rng = np.random.default_rng(0)
    for _ in range(30):
        a = rng.integers(0, 4, 12).tolist()
        b = rng.integers(0, 4, 12).tolist()
        if len(set(a)) < 2 or len(set(b)) < 2:
            continue
        assert kendall_tau(a, b) == pytest.approx(brute_kendall_tau_b(a, b), abs=1e-12)


def test_tau_rejects_degenerate_input():
    for a, b in (([1], [1]), ([1, 1, 1], [1, 2, 3]), ([1, 2], [1, 2, 3])):
        with pytest.raises(ValueError):
            kendall_tau(a, b)


def test_rank_stability():
    series = {"a": {1: 3.0, 2: 1.0}, "b": {1: 2.0, 2: 2.0}, "c": {1: 1.0, 2: 3.0}}
    assert rank_stability(series, 1, 2) == -1.0
    assert rank_stability(series, 1, 1) == 1.0
    with pytest.raises(ValueError):
        rank_stability({"a": {1: 1.0}, "b": {2: 1.0}}, 1, 2)


def trials_from(qs, ls):
    pts = feasible_sobol_points(SPACE, len(qs), 0)
    return [Trial(2, i, p, "x", ttft=l, quality=q) for i, (p, q, l) in enumerate(zip(pts, qs, ls))]


def test_pareto_rows_flags_and_order():
    ts = trials_from([0.5, 0.4, 0.7, 0.45, 0.3], [1.0, 2.0, 0.5, 3.0, 5.0])
    rows = pareto_rows(ts, (0.6, 4.0))
    assert len(rows) == 5
    assert [r["ttft_s"] for r in rows] == sorted(r["ttft_s"] for r in rows)
    flags = {(r["loss"], r["ttft_s"]): r["on_front"] for r in rows}
    # (0.7, 0.5) is on the front but outside the reference loss; (0.3, 5.0) outside the reference ttft
    assert flags == {(0.5, 1.0): 1, (0.4, 2.0): 1, (0.7, 0.5): 0, (0.45, 3.0): 0, (0.3, 5.0): 0}
    pts = [(r["loss"], r["ttft_s"]) for r in rows]
    on = {pts[i] for i in brute_front(pts) if pts[i][0] < 0.6 and pts[i][1] < 4.0}
    assert {p for p, f in flags.items() if f} == on


def test_export_pareto_text():
    text = export_pareto(trials_from([0.5, 0.4], [1.0, 2.0]), (0.6, 4.0))
    lines = text.splitlines()
    assert lines[0] == ",".join(PARETO_COLUMNS)
    assert len(lines) == 3 and lines[1].startswith("0.5,1.0,")
    assert export_pareto([], (1, 1)) == ",".join(PARETO_COLUMNS) + "\n"


def test_to_csv_round_trips_floats():
    x = 0.1 + 0.2
    text = to_csv([{"context": 1, "proxy": "p", "objective": "o", "tau": x, "n": 2}], CORRELATION_COLUMNS)
    assert float(text.splitlines()[1].split(",")[3]) == x


def flops_trials(n, contexts=(512, 1024)):
    base = desk_base_config()
    lat = FlopsLatency(base, SPACE, context_lengths=contexts, swa_window=64)
    pts = feasible_sobol_points(SPACE, n, 0)
    return [Trial(1, i, p, "sobol", samples=lat(p)) for i, p in enumerate(pts)]


def test_flops_stub_gives_perfect_flops_tau():
    rep = proxy_correlation(flops_trials(12), SPACE, desk_base_config(), swa_window=64)
    assert len(rep.rows()) == 2 * 2 * 3  # contexts x proxies x objectives
    for ctx, obj in itertools.product((512, 1024), ("ttft_s", "ttft_s_per_tok", "decode_s_per_tok")):
        assert rep.tau(ctx, "flops", obj) == pytest.approx(1.0)
        assert -1.0 <= rep.tau(ctx, "params", obj) <= 1.0
    with pytest.raises(KeyError):
        rep.tau(2048, "flops", "ttft_s")


def test_per_token_ttft_ranks_like_raw_ttft():
    rep = proxy_correlation(flops_trials(10, (512,)), SPACE, desk_base_config(), swa_window=64)
    assert rep.tau(512, "params", "ttft_s") == rep.tau(512, "params", "ttft_s_per_tok")


def test_two_trials_give_n_two():
    rep = proxy_correlation(flops_trials(2, (512,)), SPACE, desk_base_config(), swa_window=64)
    assert {r["n"] for r in rep.rows()} == {2}
    assert proxy_correlation(flops_trials(1, (512,)), SPACE, desk_base_config(), swa_window=64).rows() == []


def test_crossing_curves_lower_rank_stability():
    # a learns fast then plateaus, b starts worse and overtakes, c is steady
    series = {"a": {1: 1.0, 2: 0.8}, "b": {1: 1.5, 2: 0.6}, "c": {1: 1.2, 2: 1.0}}
    assert rank_stability(series, 1, 2) < 1.0


def test_synthetic_curves_cross_between_budgets():
    from hilnas.oracles import synthetic_loss_curve
    pts = feasible_sobol_points(SPACE, 20, 0)
    series = {p.encode(): dict(zip((10_000, 120_000), synthetic_loss_curve(p, (10_000, 120_000)))) for p in pts}
    tau = rank_stability(series, 10_000, 120_000)
    assert 0.0 < tau < 1.0
