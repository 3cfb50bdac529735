import math

import numpy as np
import pytest

from tangled_phi4.errors import DivergenceError
from tangled_phi4.model_core import SingleSiteParams
from tangled_phi4.spectral_irb import (
    Exponential,
    NearestNeighbour,
    PowerLaw,
    TorusPhi4,
    TorusSpec,
    cesaro_green,
    green_function,
    green_torus,
    image_sum_oracle,
    irb_check,
    magnetisation_scan,
    step_characteristic,
    torus_kernel,
)

NN = NearestNeighbour()
P1 = SingleSiteParams(1.0, 0.0)


def test_nearest_neighbour_kernel():
    K, tail = torus_kernel(TorusSpec(2, 4, NN))
    assert tail == 0.0
    K = np.asarray(K).reshape(4, 4)
    assert K[1, 0] == K[0, 1] == K[3, 0] == 1.0 and K[1, 1] == 0.0 and K[0, 0] == 0.0


def test_exponential_kernel_tail():
    spec = TorusSpec(1, 16, Exponential(1.5))
    K, tail = torus_kernel(spec)
    ref = image_sum_oracle(spec, 2 * 40)
    assert np.max(np.abs(np.asarray(K) - ref)) <= tail + 1e-15


def test_power_law_kernel_converges():
    spec = TorusSpec(1, 8, PowerLaw(1.0))
    K, tail = torus_kernel(spec)
    assert np.all(np.isfinite(K)) and tail < 0.05


def test_step_characteristic():
    assert step_characteristic(NN, 3, np.zeros(3)) == pytest.approx(1.0)
    assert step_characteristic(NN, 3, np.full(3, np.pi)) == pytest.approx(-1.0)
    assert step_characteristic(NN, 2, np.array([np.pi / 2, 0.0])) == pytest.approx(0.5)


def test_green_limit(golden):
    g, err = green_function(NN, 3, (0, 0, 0), (0, 0, 0))
    assert g == pytest.approx(golden["green_g000_watson"], rel=5e-3)
    assert err < 5e-3
    with pytest.raises(DivergenceError):
        green_function(NN, 1, (0,), (0,))


def test_green_torus_against_direct_sum(golden):
    G, _ = green_torus(NN, 3, 16)
    assert G.flat[0] == pytest.approx(golden["green_torus_L16_d3"], rel=1e-12)


def test_green_symmetric():
    a, _ = green_function(NN, 3, (0, 0, 0), (1, 2, 0))
    b, _ = green_function(NN, 3, (1, 2, 0), (0, 0, 0))
    assert a == pytest.approx(b, rel=1e-12)


def test_cesaro_decreasing():
    seq = cesaro_green(NN, 3, range(0, 7))
    assert seq[0] == pytest.approx(green_function(NN, 3, (0, 0, 0), (0, 0, 0))[0], rel=1e-12)
    assert all(x > y for x, y in zip(seq, seq[1:]))


def test_irb_zero_vector():
    model = TorusPhi4(TorusSpec(3, 4, NN), P1)
    rep = irb_check(model, 0.15, np.zeros((4, 4, 4)), 100, seed=0)
    assert rep.lhs == rep.rhs == 0.0 and rep.passed


def test_irb_small_beta():
    model = TorusPhi4(TorusSpec(3, 8, NN), P1)
    rep = irb_check(model, 0.15, {(0, 0, 0): 1.0}, 4_000, seed=1)
    assert rep.verdict == "pass"
    box = {(i, j, k): 1.0 for i in (0, 1) for j in (0, 1) for k in (0, 1)}
    rep = irb_check(model, 0.15, box, 4_000, seed=2)
    assert rep.verdict == "pass"


def test_magnetisation_scan_contract():
    model = TorusPhi4(TorusSpec(3, 4, NN), P1)
    rows = magnetisation_scan(model, [0.3, 0.0, 0.15], 2_000, seed=3)
    assert [r["beta"] for r in rows] == [0.0, 0.15, 0.3]
    assert rows[0]["mean_abs_m"] < 3 * math.sqrt(0.34 / 64)
    for lo, hi in zip(rows, rows[1:]):
        assert hi["mean_abs_m"] >= lo["mean_abs_m"] - 3 * math.hypot(hi["stderr_mean_abs_m"], lo["stderr_mean_abs_m"])
    assert rows == magnetisation_scan(model, [0.3, 0.0, 0.15], 2_000, seed=3)


def test_binder_crossing_prefers_steepest_change(monkeypatch):
    import tangled_phi4.spectral_irb as si

    small = [3.0, 2.9, 3.0, 2.5, 1.2, 1.0]
    large = [2.9, 3.0, 2.95, 2.8, 1.05, 1.0]
    grid = [0.05 * k for k in range(1, 7)]

    def fake(model, beta_grid, sweeps, seed):
        vals = small if model.spec.L == 4 else large
        return [{"beta": b, "binder": v} for b, v in zip(beta_grid, vals)]

    monkeypatch.setattr(si, "magnetisation_scan", fake)
    bc, _, _ = si.binder_crossing(P1, grid)
    assert 0.2 < bc < 0.25
