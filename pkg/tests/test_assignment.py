import itertools
import math

import pytest
from hypothesis import given, strategies as st

from oracles import brute_force_assignments
from snowsim.assignment import (
    AssignmentError,
    AvailabilityScore,
    MobilityProfile,
    assign,
    mobility_aware_assignment,
    order_nodes,
    order_subcarriers,
    subcarrier_loads,
)
from snowsim.baseband import Subcarrier


def scs(cells):
    return [AvailabilityScore(Subcarrier(500e6 + 200e3 * k, 200e3), c) for k, c in enumerate(cells)]


def test_order_nodes_examples():
    p = [MobilityProfile("A", 0), MobilityProfile("B", 5), MobilityProfile("C", 0), MobilityProfile("D", 10)]
    assert order_nodes(p) == ["A", "C", "B", "D"]
    assert order_nodes([MobilityProfile(x, 3) for x in "QBZ"]) == ["B", "Q", "Z"]
    assert order_nodes([MobilityProfile("solo", 7)]) == ["solo"]


def test_order_subcarriers_examples():
    s = scs([10, 3, 10, 0])
    assert [x.center_freq for x in order_subcarriers(s)] == [500.6e6, 500.2e6, 500e6, 500.4e6]
    tied = scs([4, 4, 4])
    assert order_subcarriers(tied) == [x.subcarrier for x in tied]
    assert order_subcarriers(scs([9])) == [scs([9])[0].subcarrier]


def test_assign_hand_example():
    profiles = [MobilityProfile("a", 0), MobilityProfile("b", 0), MobilityProfile("c", 5), MobilityProfile("d", 10)]
    scores = scs([3, 10])
    out = mobility_aware_assignment(profiles, scores)
    assert out["a"] == out["b"] == scores[0].subcarrier
    assert out["c"] == out["d"] == scores[1].subcarrier


def test_assign_bijection_when_n_equals_m():
    nodes = list("abcd")
    subs = [s.subcarrier for s in scs([1, 2, 3, 4])]
    assert assign(nodes, subs) == dict(zip(nodes, subs))


def test_loads_five_over_two():
    assert subcarrier_loads(5, 2) == [3, 2]
    out = assign(list("abcde"), [s.subcarrier for s in scs([1, 2])])
    assert sorted(list(out.values()).count(v) for v in set(out.values())) == [2, 3]


def test_empty_and_rejected():
    assert assign([], [s.subcarrier for s in scs([1])]) == {}
    assert assign([], []) == {}
    with pytest.raises(AssignmentError):
        assign(["a"], [])
    with pytest.raises(AssignmentError):
        MobilityProfile("x", -1)


def _instance(n, m, rates, cells):
    profiles = [MobilityProfile(f"n{i}", rates[i]) for i in range(n)]
    scores = scs(cells[:m])
    return profiles, scores


profiles_st = st.lists(st.integers(0, 3), min_size=0, max_size=8)
cells_st = st.lists(st.integers(0, 4), min_size=1, max_size=8)


@given(profiles_st, cells_st, st.randoms(use_true_random=False))
def test_properties(rates, cells, rnd):
    n, m = len(rates), len(cells)
    profiles, scores = _instance(n, m, rates, cells)
    out = mobility_aware_assignment(profiles, scores)
    # totality
    assert sorted(out) == sorted(p.node_id for p in profiles)
    # load bound
    used = [list(out.values()).count(s.subcarrier) for s in scores]
    assert set(used) <= {n // m, math.ceil(n / m)}
    # monotone matching
    cell_of = {s.subcarrier: s.cell_count for s in scores}
    rate_of = {p.node_id: p.mobility_rate for p in profiles}
    for u, v in itertools.permutations(out, 2):
        if rate_of[u] < rate_of[v]:
            assert cell_of[out[u]] <= cell_of[out[v]]
    # permutation invariance
    shuffled_p, shuffled_s = profiles[:], scores[:]
    rnd.shuffle(shuffled_p)
    rnd.shuffle(shuffled_s)
    assert mobility_aware_assignment(shuffled_p, shuffled_s) == out


@pytest.mark.parametrize("n,m", [(n, m) for n in range(0, 6) for m in range(1, 5)])
def test_matches_brute_force(n, m):
    rates = [(i * 7) % 3 for i in range(n)]
    cells = [(k * 5) % 4 for k in range(m)]
    profiles, scores = _instance(n, m, rates, cells)
    node_keys = [((p.mobility_rate, p.node_id), p.node_id) for p in profiles]
    sc_keys = [((s.cell_count, s.subcarrier.center_freq), s.subcarrier) for s in scores]
    expected = brute_force_assignments(node_keys, sc_keys)
    assert len(expected) == 1
    assert mobility_aware_assignment(profiles, scores) == expected[0]
