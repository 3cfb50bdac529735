import json

import numpy as np
import pytest

from tangled_phi4.errors import CapacityError, DomainError
from tangled_phi4.model_core import InteractionGraph, SingleSiteParams
from tangled_phi4.phi4_oracle import Clamp
from tangled_phi4.verifiers import (
    CheckReport,
    exact_verdict,
    inequality_suite,
    ising_switching_suite,
    mc_verdict,
    pairing_and_merging_stats,
    partition_positivity_stats,
    run_manifest,
    verify_domination,
    verify_fkg,
    verify_ginibre,
    verify_griffiths1,
    verify_griffiths2,
    verify_parameter_monotonicity,
    verify_switching_ratio,
    verify_volume_monotonicity,
)

P1 = SingleSiteParams(1.0, 0.0)
EDGE = InteractionGraph.complete(2)
ONE = InteractionGraph(np.zeros((1, 1)))


def test_verdict_rules():
    assert exact_verdict(1.0, 1.0 + 1e-9, "==", 1e-8) == "pass"
    assert exact_verdict(0.9, 1.0, ">=", 1e-8) == "fail"
    assert mc_verdict(1.0, 0.9, 0.01, ">=") == "pass"
    assert mc_verdict(0.95, 0.9, 0.05, ">=") == "inconclusive"
    assert mc_verdict(0.5, 0.9, 0.05, ">=") == "fail"
    assert mc_verdict(0.1, 0.12, 0.05, "==") == "inconclusive"
    with pytest.raises(DomainError):
        exact_verdict(0, 0, "<>", 0)


def test_switching_ratio_trivial_B():
    r = verify_switching_ratio(EDGE, P1, 0.5, 0.0, (1, 1), (0, 0))
    assert r.lhs == pytest.approx(1.0) and r.rhs == pytest.approx(1.0) and r.passed


def test_switching_ratio_values(golden):
    r = verify_switching_ratio(EDGE, P1, 0.5, 0.0, (1, 1), (1, 1), N=8)
    assert r.lhs == pytest.approx(golden["switching_phi4_ratio"], rel=1e-8)
    assert r.rhs == pytest.approx(golden["switching_block_ratio_N8"], rel=1e-10)


def test_switching_ratio_single_block_trend():
    gaps = [abs(r.lhs - r.rhs) for r in
            (verify_switching_ratio(EDGE, P1, 0.0, 0.0, (2, 0), (2, 0), N=N) for N in (8, 32, 128))]
    assert gaps[0] > gaps[1] > gaps[2]


def test_switching_ratio_worm_matches_block_ratio():
    r = verify_switching_ratio(EDGE, P1, 0.5, 0.0, (1, 1), (1, 1), N=8, mode="worm", n_samples=20_000, seed=3,
                               reference="ising")
    assert r.verdict == "pass"


def test_griffiths():
    assert verify_griffiths1(EDGE, P1, 0.5, 0.0, (1, 1)).passed
    r = verify_griffiths2(EDGE, P1, 0.5, 0.0, (1, 0), (0, 1))
    assert r.passed and r.lhs >= 0
    r = verify_griffiths2(EDGE, P1, 0.5, 0.0, (0, 0), (1, 1))
    assert r.lhs == pytest.approx(0.0, abs=1e-14)


def test_volume_monotonicity():
    P3 = InteractionGraph.path(3)
    same = verify_volume_monotonicity(P3, [0, 1, 2], P1, 0.5, 0.0, (1, 1, 0))
    assert same.lhs == pytest.approx(same.rhs, rel=1e-12)
    r = verify_volume_monotonicity(P3, [0, 1], P1, 0.5, 0.0, (1, 1, 0))
    assert r.passed and r.lhs > r.rhs
    r0 = verify_volume_monotonicity(P3, [0, 1], P1, 0.0, 0.0, (2, 0, 0))
    assert r0.lhs == pytest.approx(r0.rhs, rel=1e-10)


@pytest.mark.parametrize("vary,grid,graph,A", [
    ("beta", [0.0, 0.2, 0.5], EDGE, (1, 1)),
    ("a", [-1.0, 0.0, 1.0], ONE, (2,)),
    ("g", [0.5, 1.0, 2.0], ONE, (2,)),
])
def test_parameter_monotonicity(vary, grid, graph, A):
    assert verify_parameter_monotonicity(graph, P1, 0.0, A, vary, grid, 0.5).passed


def test_ginibre():
    P4 = InteractionGraph.path(4)
    A = (0, 1, 1, 0)
    eq = verify_ginibre(P4, P1, 0.5, A, A, {0: 0.0, 3: 0.0}, {0: 0.0, 3: 0.0})
    assert eq.lhs == pytest.approx(0.0, abs=1e-14)
    assert verify_ginibre(P4, P1, 0.5, A, A, {0: 0.0, 3: 0.0}, {0: 0.5, 3: 1.0}).passed
    z = verify_ginibre(P4, P1, 0.5, (0,) * 4, (0,) * 4, {0: 0.0, 3: 0.0}, {0: 0.5, 3: 1.0})
    assert z.lhs == 0.0


def test_fkg_modes():
    assert verify_fkg(EDGE, P1, 0.5, 0.0, Clamp(0), Clamp(1)).passed
    assert verify_fkg(EDGE, P1, 0.5, 0.0, Clamp(0), Clamp(1), mode="mc", sweeps=20_000, seed=1).verdict != "fail"


def test_inequality_suite_small():
    res = inequality_suite(4, seed=1)
    assert set(res) == {"griffiths1", "griffiths2", "fkg", "ginibre", "volume", "beta", "g", "a"}
    assert all(r.verdict == "pass" for reps in res.values() for r in reps)


def test_micrograph_switching_suite():
    reps = ising_switching_suite(10, seed=2)
    assert len(reps) == 10 and all(r.passed for r in reps)


def test_tangling_statistics():
    assert partition_positivity_stats(P1, [8], 4, 0, floor=0.0).passed
    assert partition_positivity_stats(P1, [8], 2, 0, floor=0.0).lhs == pytest.approx(1.0)
    assert pairing_and_merging_stats(P1, [8], 4).passed
    with pytest.raises(CapacityError):
        partition_positivity_stats(P1, [8], 6, 4)


def test_domination_exact():
    r = verify_domination(P1, 8, 2, 2)
    assert r.passed and r.lhs > 0 and r.details["n_up_sets"] == 3


def test_manifest_is_deterministic_json():
    reps = [verify_griffiths2(EDGE, P1, 0.5, 0.0, (1, 0), (0, 1))]
    m1 = json.dumps(run_manifest(reps, ["x"], 1), sort_keys=True)
    reps2 = [verify_griffiths2(EDGE, P1, 0.5, 0.0, (1, 0), (0, 1))]
    assert m1 == json.dumps(run_manifest(reps2, ["x"], 1), sort_keys=True)
    assert "runtime" not in m1
    assert "runtime" in json.dumps(run_manifest(reps, ["x"], 1, timing=True))
    assert isinstance(reps[0], CheckReport)
