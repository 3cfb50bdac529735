import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tangled_phi4.currents import (
    Current,
    Moment,
    TruncationPolicy,
    adaptive_expansion,
    current_expansion,
    enumerate_currents,
    tail_bound,
    weight,
)
from tangled_phi4.model_core import InteractionGraph, SingleSiteParams, moment_table
from tangled_phi4.phi4_oracle import CorrelationRequest, correlate_quadrature

P = SingleSiteParams(1.0, 0.0)
T = moment_table(P, 16)
EDGE = InteractionGraph.complete(2)


def test_weights_arithmetic():
    assert weight(Current(2), Moment((0, 0)), EDGE, 0.5, 0.0, T) == 1.0
    one = Current.from_dict(2, {(0, 1): 1})
    assert weight(one, Moment((1, 1)), EDGE, 0.5, 0.0, T) == pytest.approx(0.5 * T.u(2) ** 2, rel=1e-14)
    two = Current.from_dict(2, {(0, 1): 2})
    assert weight(two, Moment((0, 0)), EDGE, 0.5, 0.0, T) == pytest.approx(0.25 / 2 * T.u(2) ** 2, rel=1e-14)


def test_enumeration_by_parity():
    assert sorted(c[(0, 1)] for c in enumerate_currents(EDGE, Moment((0, 0)), TruncationPolicy(2))) == [0, 2]
    assert sorted(c[(0, 1)] for c in enumerate_currents(EDGE, Moment((1, 1)), TruncationPolicy(3))) == [1, 3]


def test_triangle_enumeration_against_bruteforce():
    G = InteractionGraph.complete(3)
    pairs = [(0, 1), (0, 2), (1, 2)]
    brute = set()
    for vals in itertools.product((0, 1), repeat=3):
        deg = [0, 0, 0]
        for (u, v), k in zip(pairs, vals):
            deg[u] += k
            deg[v] += k
        if all(d % 2 == 0 for d in deg):
            brute.add(vals)
    got = {tuple(c[p] for p in pairs) for c in enumerate_currents(G, Moment((0, 0, 0)), TruncationPolicy(1))}
    assert got == brute


def test_expansion_edge_cases(golden):
    one = InteractionGraph(np.zeros((1, 1)))
    r = current_expansion(one, P, 1.0, 0.0, Moment((2,)))
    assert r.value == pytest.approx(golden["single_site"]["u2_g1_a0_gamma"], rel=1e-10)
    r0 = current_expansion(EDGE, P, 0.0, 0.0, Moment((1, 1)))
    assert r0.value == 0.0


def test_two_vertex_against_oracle(golden):
    r = current_expansion(EDGE, P, 0.5, 0.0, Moment((1, 1)), TruncationPolicy(30))
    assert r.value == pytest.approx(golden["two_vertex_g1_a0_bJ05"]["xy_series"], abs=1e-6)
    assert r.tail_bound < 1e-12


def test_tail_bound_monotone_and_zero_edges():
    b = [tail_bound(TruncationPolicy(K), EDGE, 0.5, 0.0, T) for K in (5, 10, 20, 30)]
    assert all(x > y for x, y in zip(b, b[1:]))
    G = InteractionGraph.from_edges(3, [(0, 1, 1.0), (1, 2, 0.0)])
    assert tail_bound(TruncationPolicy(10), G, 0.5, 0.0, T) == pytest.approx(
        tail_bound(TruncationPolicy(10), InteractionGraph.from_edges(2, [(0, 1, 1.0)]), 0.5, 0.0, T), rel=1e-12)


@settings(max_examples=12, deadline=None)
@given(g=st.floats(0.5, 4.0), a=st.floats(-2.0, 2.0), bJ=st.floats(0.0, 1.0), h=st.floats(0.0, 0.5),
       A=st.sampled_from([(1, 1), (2, 0), (2, 2), (1, 0), (3, 1)]))
def test_expansion_matches_quadrature(g, a, bJ, h, A):
    p = SingleSiteParams(g, a)
    # odd totals route the spare parity through the ghost
    r = adaptive_expansion(EDGE, p, bJ, h, Moment(A, ghost=sum(A) % 2), tol=1e-9)
    q = correlate_quadrature(CorrelationRequest(EDGE, p, bJ, h, A))
    assert abs(r.value - q) <= max(1e-6, r.tail_bound)
