import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tangled_phi4.currents import Current, Moment
from tangled_phi4.errors import ContractError
from tangled_phi4.model_core import SingleSiteParams
from tangled_phi4.tangles import (
    BlockClusterEngine,
    PartitionDistribution,
    TangledCurrent,
    build_multigraph,
    canonical,
    enumerate_even_partitions,
    estimate_tangling_measure,
    induced_source_partition,
    is_coarser,
    pairing_event_FB,
    up_sets,
)

P1 = SingleSiteParams(1.0, 0.0)


def test_even_partition_counts(golden):
    for size, count in golden["even_partition_counts"].items():
        assert len(enumerate_even_partitions(int(size))) == count
    for split, count in golden["admissible_counts"].items():
        S, T = map(int, split.split(","))
        assert len(enumerate_even_partitions(S + T, (S, T))) == count


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([2, 4, 6]))
def test_partitions_are_even_and_canonical(size):
    for P in enumerate_even_partitions(size):
        assert all(len(c) % 2 == 0 for c in P)
        assert canonical(P) == P
        assert sorted(i for c in P for i in c) == list(range(size))


def test_coarsening_order():
    whole, p1, p2 = ((0, 1, 2, 3),), ((0, 1), (2, 3)), ((0, 2), (1, 3))
    assert is_coarser(p1, p1)
    assert is_coarser(whole, p1)
    assert not is_coarser(p1, p2) and not is_coarser(p2, p1)


def test_up_sets_are_closed():
    supp = list(enumerate_even_partitions(4))
    ups = up_sets(supp)
    assert frozenset() in ups and frozenset(supp) in ups
    for U in ups:
        for P in U:
            assert all(Q in U for Q in supp if is_coarser(Q, P))


def test_empty_multigraph():
    tc = TangledCurrent(Current(2), {}, {})
    mg = build_multigraph(tc)
    assert mg.edges == [] and mg.vertices == ["ghost"]


def test_double_edge_full_class_connects():
    n = Current.from_dict(2, {(0, 1): 2})
    tc = TangledCurrent(n, {}, {0: ((0, 1),), 1: ((0, 1),)})
    mg = build_multigraph(tc)
    assert mg.blocks_connected(0, 1)
    assert mg.n_components == 2  # the block pair and the idle ghost


def test_tangling_must_cover_block():
    n = Current.from_dict(2, {(0, 1): 2})
    with pytest.raises(ContractError):
        TangledCurrent(n, {}, {0: ((0, 1),)})


def test_pairing_event():
    n = Current.from_dict(2, {(0, 1): 1})
    b = {"b": Moment((1, 1))}
    tc = TangledCurrent(n, b, {0: ((0, 1),), 1: ((0, 1),)})
    assert pairing_event_FB(tc, "b")
    tc0 = TangledCurrent(Current(2), {"a": Moment((1, 1)), "b": Moment((1, 1))}, {0: ((0, 1),), 1: ((0, 1),)})
    assert not pairing_event_FB(tc0, "b")
    assert pairing_event_FB(TangledCurrent(Current(2), {}, {}), "b")


def test_induced_partition():
    assert induced_source_partition(2, [(0, 1)], [0], []) == ()
    assert induced_source_partition(2, [(0, 1)], [1], [0, 1]) == ((0, 1),)
    edges = [(0, 1), (1, 2), (2, 3), (0, 3), (0, 2), (1, 3)]
    assert induced_source_partition(4, edges, [1, 1, 1, 1, 0, 0], [0, 1, 2, 3]) == ((0, 1, 2, 3),)


@pytest.mark.parametrize("key", ["4,2,2,0.4", "5,2,2,0.3", "5,4,0,0.5"])
def test_block_engine_against_bruteforce(golden, key):
    n, S, T, K = key.split(",")
    eng = BlockClusterEngine(float(K), int(n), int(S), int(T))
    parts, w = eng.distribution()
    tot = eng.total()
    got = {json.dumps([list(c) for c in P]): float(x / tot) for P, x in zip(parts, w)}
    want = golden["tangling"][key]
    for P, p in want.items():
        assert got.get(P, 0.0) == pytest.approx(p, rel=1e-10)


def test_single_pairing_is_certain():
    d = estimate_tangling_measure(P1, 8, 2, 0)
    assert d.support == [((0, 1),)] and d.probabilities[0] == pytest.approx(1.0)


def test_positivity_exact():
    d = estimate_tangling_measure(P1, 8, 4, 0)
    assert len(d.support) == 4 and min(d.probabilities) > 0
    assert sum(d.probabilities) == pytest.approx(1.0, abs=1e-12)


def test_worm_agrees_with_exact():
    ex = estimate_tangling_measure(P1, 8, 2, 2)
    mc = estimate_tangling_measure(P1, 8, 2, 2, mode="worm", n_samples=20_000, seed=4)
    for P, p in zip(ex.support, ex.probabilities):
        assert abs(mc.prob(P) - p) <= 4 * mc.err(P) + 1e-3


def test_distribution_json_roundtrip():
    d = estimate_tangling_measure(P1, 8, 4, 0)
    back = PartitionDistribution.from_json(d.to_json())
    assert back.support == d.support
    assert np.allclose(back.probabilities, d.probabilities)
