import math

import numpy as np
import pytest

from tangled_phi4.currents import Current, Moment
from tangled_phi4.errors import CapacityError
from tangled_phi4.gs_ising import (
    BlockGraph,
    ConnectsF,
    ConstantF,
    CouplingGraph,
    DampedF,
    SourceInjection,
    block_moment,
    classify_W,
    ising_correlation_blocksum,
    ising_correlation_exact,
    ising_switching_check,
    parity_pattern_exact,
    project,
    renormalised_weight,
    sample_current_worm,
    worm_ratio,
)
from tangled_phi4.model_core import InteractionGraph, SingleSiteParams

P1 = SingleSiteParams(1.0, 0.0)
P12 = SingleSiteParams(12.0, 0.0)
EDGE = InteractionGraph.complete(2)


def test_exact_correlations_trivial():
    bg = BlockGraph(EDGE, 3, P1, 0.5)
    assert ising_correlation_exact(bg, []) == 1.0
    assert ising_correlation_exact(bg, [0]) == 0.0


def test_four_state_block(golden):
    bg = BlockGraph(InteractionGraph(np.zeros((1, 1))), 2, P12, calibrated=False)
    assert ising_correlation_exact(bg, [0, 1]) == pytest.approx(golden["gs_four_states"]["corr"], rel=1e-13)
    assert block_moment(P12, 2, 2, calibrated=False) == pytest.approx(golden["gs_four_states"]["block_moment_p2"], rel=1e-13)
    assert block_moment(P12, 2, 1, calibrated=False) == 0.0


def test_blocksum_matches_bruteforce(golden):
    bg = BlockGraph(EDGE, 8, P1, 0.5)
    inj = SourceInjection((1, 1), None, 8)
    assert ising_correlation_blocksum(bg, inj.A_tilde) == pytest.approx(golden["block_corr_N8"], rel=1e-11)
    small = BlockGraph(EDGE, 4, P1, 0.5)
    for S in ([0, 4], [0, 1, 4, 5], [0, 1, 2, 4]):
        assert ising_correlation_blocksum(small, S) == pytest.approx(ising_correlation_exact(small, S), rel=1e-11)


def test_block_moment_converges_for_g1():
    u2 = 0.33798912003364234
    errs = [abs(block_moment(P1, N, 2) - u2) for N in (16, 64, 256)]
    assert errs[0] > errs[1] > errs[2]


def test_parity_partition_functions(golden):
    K = 0.7
    e = CouplingGraph.from_edges(2, [(0, 1, K)])
    assert parity_pattern_exact(e, [0, 1]).Z == pytest.approx(math.sinh(K), rel=1e-14)
    assert parity_pattern_exact(e, []).Z == pytest.approx(math.cosh(K), rel=1e-14)
    tri = CouplingGraph.from_edges(3, [(0, 1, K), (1, 2, K), (0, 2, K)])
    assert parity_pattern_exact(tri, []).Z == pytest.approx(golden["triangle_parity_K07"], rel=1e-14)


def test_worm_histogram_matches_parity_series():
    K = 0.9
    cg = CouplingGraph.from_edges(2, [(0, 1, K)])
    x = sample_current_worm(cg, [], 40_000, seed=5)[:, 0]
    assert np.all(x % 2 == 0)
    n = np.arange(0, 30, 2)
    p = K**n / np.array([math.factorial(int(k)) for k in n])
    p /= p.sum()
    for k, pk in zip(n[:3], p[:3]):
        f = np.mean(x == k)
        # thinned chain: allow a generous 5 binomial sigma
        assert abs(f - pk) <= 5 * math.sqrt(pk * (1 - pk) / len(x)) + 2e-3


def test_worm_parity_and_determinism():
    cg = CouplingGraph.from_edges(2, [(0, 1, 0.4)])
    a = sample_current_worm(cg, [0, 1], 500, seed=1)
    assert np.all(a % 2 == 1)
    assert np.array_equal(a, sample_current_worm(cg, [0, 1], 500, seed=1))


def test_worm_ratio_triangle():
    cg = CouplingGraph.from_edges(3, [(0, 1, 0.5), (1, 2, 0.8), (0, 2, 0.3)])
    exact = ising_correlation_exact(cg, [0, 2])
    r, err = worm_ratio(cg, [], 400_000, seed=2, pairs=[(0, 2)])
    assert abs(r - exact) <= 4 * err + 1e-3


def test_projection_and_classification():
    bg = BlockGraph(EDGE, 3, P1, 0.5)
    n = np.zeros(bg.coupling.n_edges, dtype=int)
    assert project(n, bg) == Current(2)
    ext = np.nonzero(bg.edge_class == 1)[0]
    n[ext[0]] = 3
    assert project(n, bg)[(0, 1)] == 3
    assert classify_W(np.zeros_like(n), bg, [0, 3]) == (True, True)
    src = int(bg.coupling.eu[ext[0]])
    assert classify_W(n, bg, [src])[0] is False
    # a non-source spin touching two external edges
    m = np.zeros_like(n)
    touching = [e for e in ext if bg.coupling.eu[e] == 1][:2]
    m[touching] = 1
    assert classify_W(m, bg, [])[1] is False


def test_projection_parity_audit():
    rng = np.random.default_rng(0)
    bg = BlockGraph(EDGE, 3, P1, 0.5)
    cg = bg.coupling
    for _ in range(50):
        n = rng.integers(0, 3, size=cg.n_edges)
        deg = np.zeros(cg.nv, dtype=int)
        np.add.at(deg, cg.eu, n)
        np.add.at(deg, cg.ev, n)
        odd = (deg % 2).reshape(2, 3).sum(axis=1)
        cur = project(n, bg)
        assert cur[(0, 1)] % 2 == odd[0] % 2 == odd[1] % 2


def test_renormalised_weight_limits():
    one = Current.from_dict(2, {(0, 1): 1})
    assert renormalised_weight(Current(2), Moment((0, 0)), 8, 0.5, EDGE, P1).value == pytest.approx(1.0)
    assert renormalised_weight(one, Moment((0, 0)), 8, 0.5, EDGE, P1).value == 0.0
    seq = [renormalised_weight(one, Moment((1, 1)), N, 0.5, EDGE, P1) for N in (4, 8, 16)]
    gaps = [abs(r.value - r.limit) for r in seq]
    assert gaps[0] > gaps[1] > gaps[2]


def test_switching_identity_small_graphs():
    e = CouplingGraph.from_edges(2, [(0, 1, 0.6)])
    r = ising_switching_check(e, [], [])
    assert r.lhs == pytest.approx(r.rhs, abs=1e-12)
    assert r.lhs == pytest.approx(parity_pattern_exact(e, []).Z ** 2, rel=1e-9)
    r = ising_switching_check(e, [0, 1], [0, 1])
    assert abs(r.lhs - r.rhs) <= 1e-10 + 2 * r.tail
    tri = CouplingGraph.from_edges(3, [(0, 1, 0.5), (1, 2, 0.8), (0, 2, 0.3)])
    for F in (ConstantF(), ConnectsF(0, 2), DampedF(0.3, ConnectsF(0, 1))):
        r = ising_switching_check(tri, [0, 1], [1, 2], F)
        assert abs(r.lhs - r.rhs) <= 1e-10 + 2 * r.tail


def test_switching_capacity():
    big = CouplingGraph.from_edges(6, [(i, j, 0.1) for i in range(6) for j in range(i + 1, 6)])
    with pytest.raises(CapacityError):
        ising_switching_check(big, [], [])
