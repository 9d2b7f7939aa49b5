import numpy as np
import pytest

from ri1d import energy, hypotheses, incremental, regularity


SLOT = {"Exx": (0, 2), "Ext": (1, 1)}


def residuals_ok(model, entry):
    """Re-evaluate the defining equalities of every point from the raw jet."""
    keys = hypotheses._REFINE[entry.which]
    for p in entry.points:
        j = model.jet(p.t, p.x)
        vals = {"phi": j.derivative(0, 1) - p.sign}
        vals.update({k: j.derivative(*ij) for k, ij in SLOT.items()})
        for k in keys:
            assert abs(vals[k]) <= entry.tol * entry.scales[k], (k, p)
            assert p.residuals[k] <= entry.tol


def test_quadratic_all_hold(quadratic):
    rep = hypotheses.check_hypotheses(quadratic, resolution=64)
    assert {k: e.verdict for k, e in rep.entries.items()} == dict.fromkeys(hypotheses.HYPOTHESES, "holds")
    assert rep.gap.eps == pytest.approx(2.0, abs=1e-6)


def test_double_well_h5_points_and_soundness(double_well):
    e = hypotheses.check_hypothesis(double_well, "H5", resolution=128)
    assert e.verdict == "fails"
    c = 2.0 / (3.0 * np.sqrt(3.0))
    oracle = {(1.0 + c, -1.0 / np.sqrt(3.0)), (1.0 - c, 1.0 / np.sqrt(3.0))}
    got = {(round(p.t, 8), round(p.x, 8)) for p in e.points}
    assert got == {(round(a, 8), round(b, 8)) for a, b in oracle}
    residuals_ok(double_well, e)
    assert hypotheses.check_hypothesis(double_well, "H1", resolution=128).verdict == "holds"


def test_resolution_monotonicity(double_well):
    prev = None
    for r in (32, 64, 128):
        e = hypotheses.check_hypothesis(double_well, "H5", resolution=r)
        assert e.verdict == "fails"
        if prev is not None:
            assert e.count >= prev
        prev = e.count


def test_crossing_model_degenerate_point():
    m = energy.crossing_model()
    h3 = hypotheses.check_hypothesis(m, "H3", resolution=64)
    assert h3.verdict == "holds"
    assert any(abs(p.t - 1.0) < 1e-6 and abs(p.x) < 1e-6 for p in h3.points)
    residuals_ok(m, h3)


def test_gap_oracles(double_well):
    assert np.isinf(hypotheses.estimate_gap(energy.zero_model()).eps)
    box = (0.0, 1.38, -2.0, 2.0)
    times = np.linspace(box[0], box[1], 47)
    g = hypotheses.estimate_gap(double_well, box, time_resolution=47)
    best = np.inf
    for t in times:
        roots = []
        for s in (1.0, -1.0):
            r = np.roots([1.0, 0.0, -1.0, -(t + s)])
            roots += [v.real for v in r if abs(v.imag) < 1e-9 and -2 <= v.real <= 2]
        roots = np.sort(roots)
        best = min(best, np.min(np.diff(roots)))
    assert g.eps == pytest.approx(best, abs=1e-8)
    assert g.eps > 0


def test_gap_bounds_jumps_when_h5_holds(quadratic):
    assert hypotheses.check_hypothesis(quadratic, "H5", resolution=64).verdict == "holds"
    eps = hypotheses.estimate_gap(quadratic).eps
    tr = incremental.solve_energetic(quadratic, 0.0, np.linspace(0, 2, 401))
    assert all(j.size >= eps - 2e-9 for j in regularity.detect_jumps(tr))


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("RI1D_THREADS", "3")
    assert hypotheses.worker_count() == 3
    monkeypatch.delenv("RI1D_THREADS")
    assert hypotheses.worker_count() == 1


def test_threads_do_not_change_results(double_well, monkeypatch):
    a = hypotheses.check_hypothesis(double_well, "H5", resolution=32)
    monkeypatch.setenv("RI1D_THREADS", "4")
    b = hypotheses.check_hypothesis(double_well, "H5", resolution=32)
    assert [(p.t, p.x) for p in a.points] == [(p.t, p.x) for p in b.points]


def test_unknown_hypothesis(quadratic):
    with pytest.raises(ValueError):
        hypotheses.check_hypothesis(quadratic, "H9")
