import numpy as np
import pytest

from tangled_phi4.model_core import InteractionGraph, SingleSiteParams
from tangled_phi4.phi4_oracle import (
    Clamp,
    Constant,
    CorrelationRequest,
    HalfSpace,
    correlate_mc,
    correlate_quadrature,
    fkg_covariance_quadrature,
    fkg_pair_estimate,
)

P = SingleSiteParams(1.0, 0.0)
ONE = InteractionGraph(np.zeros((1, 1)))
EDGE = InteractionGraph.complete(2)


def test_single_vertex(golden):
    assert correlate_quadrature(CorrelationRequest(ONE, P, 1.0, 0.0, (1,))) == pytest.approx(0.0, abs=1e-14)
    assert correlate_quadrature(CorrelationRequest(ONE, P, 1.0, 0.0, (2,))) == pytest.approx(
        golden["single_site"]["u2_g1_a0_gamma"], rel=1e-10)


def test_two_vertex_against_oracle(golden):
    tv = golden["two_vertex_g1_a0_bJ05"]
    assert correlate_quadrature(CorrelationRequest(EDGE, P, 0.5, 0.0, (1, 1))) == pytest.approx(tv["xy"], rel=1e-9)
    assert correlate_quadrature(CorrelationRequest(EDGE, P, 0.5, 0.0, (2, 2))) == pytest.approx(tv["xxyy"], rel=1e-9)


def test_three_vertex_symmetry():
    G = InteractionGraph.path(3, 0.7)
    r1 = correlate_quadrature(CorrelationRequest(G, P, 1.0, 0.0, (1, 1, 0)))
    r2 = correlate_quadrature(CorrelationRequest(G, P, 1.0, 0.0, (0, 1, 1)))
    assert r1 == pytest.approx(r2, rel=1e-10)


def test_mc_symmetry_and_agreement():
    req = CorrelationRequest(ONE, P, 1.0, 0.0, (1,))
    est = correlate_mc(req, 40_000, seed=3)
    assert abs(est.value) <= 3 * est.stderr
    req2 = CorrelationRequest(EDGE, P, 0.5, 0.0, (1, 1))
    est2 = correlate_mc(req2, 40_000, seed=4)
    assert abs(est2.value - correlate_quadrature(req2)) <= 3 * est2.stderr


def test_mc_determinism():
    req = CorrelationRequest(EDGE, P, 0.5, 0.0, (1, 1))
    assert correlate_mc(req, 5_000, seed=9) == correlate_mc(req, 5_000, seed=9)


def test_fkg_constant_has_zero_covariance():
    fg, f, g = fkg_covariance_quadrature(EDGE, P, 0.5, 0.0, Constant(1.0), Constant(1.0))
    assert fg - f * g == pytest.approx(0.0, abs=1e-14)


def test_fkg_clamps_mc():
    req = CorrelationRequest(EDGE, P, 0.5, 0.0)
    est = fkg_pair_estimate(req, Clamp(0), Clamp(1), 40_000, seed=2)
    assert est.covariance.value >= -3 * est.covariance.stderr


def test_variance_nonnegative():
    f = HalfSpace(0, 0.5)
    fg, fx, gx = fkg_covariance_quadrature(ONE, P, 1.0, 0.0, f, f)
    assert fg - fx * gx >= -1e-12
