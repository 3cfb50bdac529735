import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tangled_phi4 import DomainError, ParameterError
from tangled_phi4.model_core import (
    InteractionGraph,
    ModelSpec,
    SingleSiteParams,
    boundary_profile,
    gs_couplings,
    moment_recursion_residual,
    moment_table,
    raw_moment,
    single_site_moment,
    validate_interaction,
)


def test_normalisation_and_odd_moment():
    p = SingleSiteParams(1.0, 0.0)
    assert single_site_moment(p, 0) == 1.0
    assert raw_moment(p, 1) == 0.0


def test_u2_matches_gamma_ratio(golden):
    assert single_site_moment(SingleSiteParams(1.0, 0.0), 2) == pytest.approx(golden["single_site"]["u2_g1_a0_gamma"], rel=1e-10)
    assert single_site_moment(SingleSiteParams(1.0, 0.0), 4) == pytest.approx(0.25, rel=1e-10)


@pytest.mark.parametrize("key,g,a,k", [("u2_g12_a0", 12, 0, 2), ("u2_g1_am1", 1, -1, 2), ("u2_g2_a1", 2, 1, 2),
                                       ("u6_g05_a15", 0.5, 1.5, 6)])
def test_moments_against_quadrature_oracle(golden, key, g, a, k):
    assert single_site_moment(SingleSiteParams(g, a), k) == pytest.approx(golden["single_site"][key], rel=1e-9)


def test_invalid_params():
    with pytest.raises(ParameterError):
        SingleSiteParams(0.0, 1.0)
    with pytest.raises(DomainError):
        single_site_moment(SingleSiteParams(1.0), 3)


def test_recursion_residual():
    assert abs(moment_recursion_residual(moment_table(SingleSiteParams(1, 0), 16), 0)) < 1e-9
    assert abs(moment_recursion_residual(moment_table(SingleSiteParams(2, -1), 16), 1)) < 1e-9


def test_recursion_residual_detects_perturbation():
    t = moment_table(SingleSiteParams(1, 0), 16)
    # with a=0 the k=0 identity reads u[0] = 4 u[4]; nudge u[4] by 1%
    bad = type(t)(t.params, t.log_u[:2] + (t.log_u[2] + math.log(1.01),) + t.log_u[3:], t.tol)
    assert abs(moment_recursion_residual(bad, 0)) > 1e-3


@settings(max_examples=25, deadline=None)
@given(g=st.floats(0.3, 5.0), a=st.floats(-2.0, 2.0), k=st.integers(0, 5))
def test_recursion_holds_for_random_params(g, a, k):
    t = moment_table(SingleSiteParams(g, a), 2 * k + 8)
    scale = max(t.u(2 * k + 4), 1.0)
    assert abs(moment_recursion_residual(t, k)) <= 1e-8 * scale


@settings(max_examples=20, deadline=None)
@given(g=st.floats(0.3, 5.0), a=st.floats(-2.0, 2.0))
def test_moments_log_convex(g, a):
    u = moment_table(SingleSiteParams(g, a), 12).as_array()
    # Cauchy-Schwarz: u[2k]^2 <= u[2k-2] u[2k+2]
    for k in range(1, len(u) - 1):
        assert u[k] ** 2 <= u[k - 1] * u[k + 1] * (1 + 1e-9)


def test_gs_couplings_arithmetic():
    c = gs_couplings(SingleSiteParams(12, 0), 16)
    assert (c.g_tilde, c.c_N, c.d_N) == pytest.approx((1.0, 0.125, 1 / 16))
    c = gs_couplings(SingleSiteParams(12, 1), 4)
    assert (c.a_tilde, c.d_N) == pytest.approx((1.0, 0.125))
    c = gs_couplings(SingleSiteParams(12 / 16, 0), 16)
    assert (c.g_tilde, c.c_N) == pytest.approx((2.0, 0.25))


def test_gs_calibration_maps_parameters():
    a = gs_couplings(SingleSiteParams(1.0, -0.5), 9, calibrated=True)
    b = gs_couplings(SingleSiteParams(144.0, -1.0), 9)
    assert (a.c_N, a.d_N) == pytest.approx((b.c_N, b.d_N))


def test_validate_interaction():
    assert validate_interaction(InteractionGraph.from_edges(2, [(0, 1, 1.0)])).irreducible
    r = validate_interaction(InteractionGraph.from_edges(2, [(0, 1, -1.0)]))
    assert not r.ferromagnetic and r.negative_pairs == ((0, 1),)
    r = validate_interaction(InteractionGraph.from_edges(3, [(0, 1, 1.0)]))
    assert not r.irreducible and (2,) in r.components


def test_boundary_profile(golden):
    G = InteractionGraph.path(4)
    p1 = boundary_profile(1.0, G, 0)
    assert p1.values[1] == 0.0
    assert p1.values[3] == pytest.approx(golden["boundary_profile_log3"], rel=1e-12)
    assert boundary_profile(16.0, G, 0).values[3] == pytest.approx(2 * golden["boundary_profile_log3"], rel=1e-12)


def test_modelspec_errors_name_field():
    with pytest.raises(ParameterError, match="'g'"):
        ModelSpec.from_dict({"g": -1})
    with pytest.raises(ParameterError, match="'edges'"):
        ModelSpec.from_dict({"g": 1, "vertices": 2, "edges": [[0, 5, 1.0]]})
    spec = ModelSpec.from_dict({"g": 1, "a": 0, "beta": 0.5, "vertices": 2, "edges": [[0, 1, 1.0]], "A": [1, 1]})
    assert spec.graph.n == 2 and np.all(spec.h == 0) and spec.extra == {"A": [1, 1]}
