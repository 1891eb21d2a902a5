import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from hilnas.analysis import kendall_tau
from hilnas.calib import top_blocks
from hilnas.nehvi import expected_hvi
from hilnas.pareto import hypervolume_2d, pareto_front
from hilnas.space import SearchPoint, SearchSpace, is_feasible
from reference import brute_front

coord = st.floats(0.0, 1.0, allow_nan=False, width=32)
points = st.lists(st.tuples(coord, coord), min_size=1, max_size=25)
patterns = st.lists(st.sampled_from("FSK"), min_size=10, max_size=16)
REF = (1.0, 1.0)


@given(points)
def test_front_matches_brute_force(pts):
    assert sorted(pareto_front(pts)) == brute_front(pts)


@given(points)
def test_front_members_are_mutually_non_dominated(pts):
    P = np.array(pts)
    F = P[pareto_front(P)]
    for a in F:
        assert not np.any(np.all(F <= a, axis=1) & np.any(F < a, axis=1))


@given(points, st.tuples(coord, coord))
def test_hypervolume_monotone_under_insertion(pts, extra):
    assert hypervolume_2d(pts + [extra], REF) >= hypervolume_2d(pts, REF) - 1e-12


@given(points)
def test_hypervolume_depends_only_on_front(pts):
    P = np.array(pts)
    assert np.isclose(hypervolume_2d(P, REF), hypervolume_2d(P[pareto_front(P)], REF), atol=1e-12)


@given(points)
def test_front_point_has_zero_improvement(pts):
    P = np.array(pts)
    i = pareto_front(P)[0]
    assert expected_hvi(P[None], P[None, [i]], REF)[0] == 0.0


pairs = st.integers(2, 20).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 5), min_size=n, max_size=n), st.lists(st.integers(0, 5), min_size=n, max_size=n)))


@given(pairs)
def test_tau_symmetric_and_monotone_invariant(ab):
    a, b = ab
    if len(set(a)) < 2 or len(set(b)) < 2:
        return
    t = kendall_tau(a, b)
    assert np.isclose(t, kendall_tau(b, a))
    assert np.isclose(t, kendall_tau(np.exp(np.array(a, float)), 3 * np.array(b, float) + 7))
    assert np.isclose(-t, kendall_tau(a, [-x for x in b]))
    assert -1.0 <= t <= 1.0


@given(patterns)
def test_feasibility_ignores_swa_skip_identity(pat):
    swapped = [{"S": "K", "K": "S"}.get(c, c) for c in pat]
    p = SearchPoint(len(pat), 2048, 1024, tuple(pat))
    q = SearchPoint(len(pat), 2048, 1024, tuple(swapped))
    assert is_feasible(p) == is_feasible(q)


@given(patterns)
def test_feasibility_is_a_run_length_rule(pat):
    s = "".join("E" if c != "F" else "F" for c in pat)
    assert is_feasible(SearchPoint(len(pat), 2048, 1024, tuple(pat))) == ("EEE" not in s)


@given(st.lists(st.floats(0, 1, allow_nan=False), min_size=5, max_size=80), st.integers(0, 1000))
def test_decode_always_lands_in_space(u, seed):
    space = SearchSpace()
    v = np.random.default_rng(seed).random(space.dims)
    v[: min(len(u), space.dims)] = np.clip(u[: space.dims], 0, 1)
    assert space.contains(space.decode_point(v))


@settings(max_examples=50)
@given(st.lists(st.integers(0, 4), min_size=4, max_size=12))
def test_top_blocks_nested(block_vals):
    unit = 2
    e = np.repeat(np.array(block_vals, float), unit)
    prev = set()
    for k in range(unit, len(e) + 1, unit):
        cur = set(top_blocks(e, k, unit))
        assert prev <= cur and len(cur) == k
        prev = cur
