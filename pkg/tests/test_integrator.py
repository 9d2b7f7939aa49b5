import numpy as np
import pytest

from ri1d import energy, integrator, incremental
from ri1d.trajectory import Trajectory


def test_quadratic_play(quad_local):
    assert np.max(np.abs(quad_local.values - np.maximum(0.0, quad_local.times - 1.0))) <= 1e-12
    assert quad_local.times.size == 2001
    kinds = [e.kind for e in quad_local.events]
    assert kinds == ["activation"]
    assert quad_local.events[0].t == pytest.approx(1.0, abs=1e-10)


def test_double_well_fold_and_landing(dw_local):
    tf, xf, z = fold_oracle_values()
    assert len(dw_local.jumps) == 1
    j = dw_local.jumps[0]
    assert j.t == pytest.approx(tf, abs=1e-9)
    assert j.left == pytest.approx(xf, abs=1e-6)
    assert j.right == pytest.approx(z, abs=1e-9)
    assert [e.kind for e in dw_local.events][:3] == ["activation", "fold", "landing"]


def fold_oracle_values():
    from conftest import fold_oracle

    return fold_oracle()


def test_slide_law_and_branch(dw_local, double_well):
    slide = np.array([r == "slide" for r in dw_local.regimes])
    t, x = dw_local.times[slide], dw_local.values[slide]
    j = double_well.jet(t, x)
    ex, exx = j.derivative(0, 1), j.derivative(0, 2)
    assert np.max(np.abs(np.abs(ex) - 1.0)) <= 1e-8
    assert np.all(exx >= 0.0)
    # on the left branch x^3 - x - t = -1 before the fold
    pre = t < 1.38
    assert np.max(np.abs(x[pre] ** 3 - x[pre] - t[pre] + 1.0)) <= 1e-8


def test_jump_energy_inequality(dw_local, double_well):
    for jr in dw_local.jumps:
        drop = double_well.value(jr.t, jr.right) - double_well.value(jr.t, jr.left)
        assert drop <= -abs(jr.right - jr.left) + 1e-9


def test_stiffening_slide():
    m = energy.stiffening_model()
    tr = integrator.solve_local(m, 0.0, dt=1e-3)
    t = tr.times
    exact = np.where(t <= 1.0, 0.0, (t - 1.0) / (1.0 + t / 4.0))
    assert np.max(np.abs(tr.values - exact)) <= 1e-9
    assert tr.values[-1] == pytest.approx(1.0 / 1.5, abs=1e-12)


def test_zero_model_sticks():
    tr = integrator.solve_local(energy.zero_model(), 0.4, dt=1e-2)
    assert np.all(tr.values == 0.4) and not tr.jumps


def test_agrees_with_energetic_on_convex(quadratic):
    g = np.linspace(0, 2, 2001)
    en = incremental.solve_energetic(quadratic, 0.0, g)
    lo = integrator.solve_local(quadratic, 0.0, dt=1e-3)
    assert np.max(np.abs(en.values - lo.values)) <= 2e-3


def test_detect_regime(double_well, quadratic):
    tf, xf, _ = fold_oracle_values()
    assert integrator.detect_regime(quadratic, 0.5, 0.0) == "stick"
    assert integrator.detect_regime(quadratic, 1.5, 0.5) == "slide-"
    assert integrator.detect_regime(double_well, tf, xf) == "fold"
    assert integrator.detect_regime(double_well, 0.0, 2.0) == "unstable"


def test_initial_state_must_be_stable(double_well):
    with pytest.raises(ValueError):
        integrator.solve_local(double_well, 2.0, dt=1e-2)


def test_upper_bound(dw_local, double_well):
    assert integrator.check_upper_bound(double_well, dw_local).passed
    zero = Trajectory([0.0, 1.0, 2.0], [0.0, 0.0, 0.0])
    assert integrator.check_upper_bound(energy.zero_model(), zero).worst == 0.0
    # uphill jump to the far left well after the fold
    x = dw_local.values.copy()
    after = dw_local.times > dw_local.jumps[0].t
    x[after] = -1.9
    bad = Trajectory(dw_local.times, x)
    rep = integrator.check_upper_bound(double_well, bad)
    assert rep.worst > rep.tol and not rep.passed
    sampled = integrator.check_upper_bound(double_well, bad, pairs=5000, seed=1)
    assert sampled.worst <= rep.worst + 1e-12
