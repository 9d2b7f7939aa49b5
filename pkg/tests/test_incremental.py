import numpy as np
import pytest

from ri1d import energy, incremental
from ri1d.errors import UnboundedBelowError
from ri1d.trajectory import Trajectory


def grid(dt, T=2.0):
    return np.linspace(0.0, T, int(round(T / dt)) + 1)


def brute_force(model, x0, times, h=1e-4):
    """Incremental minimization over a uniform state grid of spacing h."""
    zs = np.arange(-model.L, model.L + h / 2, h)
    out = [x0]
    for t in times[1:]:
        F = model.value(t, zs) + np.abs(zs - out[-1])
        out.append(zs[int(np.argmin(F))])
    return np.array(out)


def test_quadratic_play_closed_form(quadratic):
    g = grid(1e-3)
    tr = incremental.solve_energetic(quadratic, 0.0, g)
    assert np.max(np.abs(tr.values - np.maximum(0.0, g - 1.0))) <= 2e-3
    assert not tr.jumps


def test_zero_model_is_constant():
    tr = incremental.solve_energetic(energy.zero_model(), 0.7, grid(1e-2))
    assert np.all(tr.values == 0.7)
    assert set(tr.regimes) == {"stick"}


def test_double_well_maxwell_switch(double_well, fold_time):
    g = grid(1e-2)
    tr = incremental.solve_energetic(double_well, -1.0, g)
    oracle = brute_force(double_well, -1.0, g)
    assert len(tr.jumps) == 1
    assert tr.jumps[0].t < fold_time - 0.1
    k_or = int(np.flatnonzero(np.diff(oracle) > 0.5)[0]) + 1
    assert tr.jumps[0].t == pytest.approx(g[k_or], abs=1e-12)
    assert np.max(np.abs(tr.values - oracle)) <= 2e-4


def test_balance_first_order_and_sign_convention(double_well, quadratic):
    res = []
    for dt in (4e-3, 2e-3, 1e-3):
        tr = incremental.solve_energetic(double_well, -1.0, grid(dt))
        res.append(incremental.check_energy_balance(double_well, tr, 1.0).max_abs)
    assert res[0] / res[1] == pytest.approx(2.0, rel=0.1)
    assert res[1] / res[2] == pytest.approx(2.0, rel=0.1)
    tr = incremental.solve_energetic(quadratic, 0.0, grid(1e-3))
    assert incremental.check_energy_balance(quadratic, tr, 1e-3).passed
    flipped = incremental.check_energy_balance(quadratic, tr, 1e-3, dissipation_sign=-1.0)
    assert flipped.max_abs == pytest.approx(2.0, abs=1e-3)
    assert not flipped.passed


def test_global_stability(double_well, quadratic):
    stuck = Trajectory([0.0, 1.0, 2.0], [-1.0, -1.0, -1.0])
    probe = np.linspace(-2.0, 2.0, 4001)
    rep = incremental.check_global_stability(double_well, stuck, probe, 1e-6)
    assert not rep.passed
    assert rep.time == 2.0
    tr = incremental.solve_energetic(quadratic, 0.0, grid(1e-2))
    assert incremental.check_global_stability(quadratic, tr, np.linspace(-3, 3, 6001), 1e-6).passed


def test_rate_independence():
    """Loading l(s) = s^2 sampled at s = sqrt(t) reproduces the l(t) = t run."""
    lin = energy.SeparablePolynomial([0.0, 0.0, 0.5], [0.0, 1.0], 2.0, 3.0)
    sq = energy.SeparablePolynomial([0.0, 0.0, 0.5], [0.0, 0.0, 1.0], np.sqrt(2.0), 3.0)
    t = grid(1e-2)
    a = incremental.solve_energetic(lin, 0.0, t)
    b = incremental.solve_energetic(sq, 0.0, np.sqrt(t))
    assert np.max(np.abs(a.values - b.values)) <= 1e-6


def test_unbounded_below():
    m = energy.SeparablePolynomial([0.0, 0.0, -1.0], [0.0], 1.0, 3.0)
    with pytest.raises(UnboundedBelowError):
        incremental.solve_energetic(m, 0.0, np.linspace(0.0, 1.0, 5))
