"""Local (weak) solutions by stick / slide / fold-jump regime switching.

Sliding follows x' = -E_xt / E_xx along a branch E_x = s (s = +-1) with a
classical RK4 predictor and a Newton projection back onto the branch. The
branch is safeguarded by a bracketed root search, so a fold, where E_xx
reaches zero and the branch ceases to exist, is located by bisection in t and
refined by Newton's method on {E_x = s, E_xx = 0}. At a fold the state jumps
in the direction -s to the nearest stable point of the stationary set.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .energy import stationary_roots
from .errors import NoLandingError, StiffSlideError
from .incremental import energy_ledger, energy_scale
from .trajectory import Event, JumpRecord, Trajectory


@dataclass(frozen=True)
class Tolerances:
    slide: float = 1e-9  # |E_x - s| on accepted slide points
    stick: float = 1e-9  # allowed excess of |E_x| over 1 while stuck
    fold: float = 1e-8  # E_xx below this ends a slide branch
    event: float = 1e-10  # bisection width in t for events
    regime: float = 1e-6  # band used by detect_regime


def _partials(model, t, x):
    j = model.jet(t, x)
    return j.derivative(0, 1), j.derivative(0, 2), j.derivative(1, 1)


def detect_regime(model, t, x, tol=1e-6, fold_tol=1e-6):
    """One of ``stick``, ``slide+``, ``slide-``, ``fold`` or ``unstable``."""
    model.check_domain(t, x)
    ex, exx, _ = _partials(model, t, x)
    a = abs(float(ex))
    if a > 1.0 + tol:
        return "unstable"
    if a < 1.0 - tol:
        return "stick"
    if abs(float(exx)) <= fold_tol:
        return "fold"
    if exx > fold_tol:
        return "slide+" if ex > 0 else "slide-"
    return "unstable"


class _Runner:
    def __init__(self, model, tol):
        self.m = model
        self.tol = tol
        self.lo, self.hi = -model.L, model.L

    def ex(self, t, x):
        return float(self.m.dx(t, x))

    def branch_root(self, t, x, s, hint=0.0):
        """Stable root of E_x(t, .) = s reached from x in the direction -s
        before E_xx vanishes. Returns a float, ``None`` when the branch is
        gone, or ``"release"`` when the branch retreated behind x."""
        d = -s
        edge = (self.hi - x) if d > 0 else (x - self.lo)
        if s * (self.ex(t, x) - s) < -self.tol.slide:
            return "release"
        w = min(edge, max(4.0 * abs(hint), 1e-6 * max(1.0, self.m.L)))
        start = 0.0
        while True:
            lam = np.linspace(start, w, 33)
            j = self.m.jet(np.full(lam.shape, t), x + d * lam)
            psi = s * (j.derivative(0, 1) - s)
            exx = j.derivative(0, 2)
            hit = np.flatnonzero(psi <= 0.0)
            bad = np.flatnonzero(exx <= self.tol.fold)
            first_hit = hit[0] if hit.size else lam.size
            first_bad = bad[0] if bad.size else lam.size
            if first_bad <= first_hit and first_bad < lam.size:
                return None
            if first_hit < lam.size:
                if first_hit == 0:
                    return x + d * lam[0]
                f = lambda l: s * (self.ex(t, x + d * l) - s)
                r = brentq(f, lam[first_hit - 1], lam[first_hit], xtol=1e-15, rtol=1e-15)
                return x + d * r
            if w >= edge:
                return None
            start, w = w, min(edge, 4.0 * w)

    def project(self, t, z, s):
        for _ in range(6):
            ex, exx, _ = _partials(self.m, t, z)
            if not exx > self.tol.fold:
                return None
            step = (ex - s) / exx
            z = z - step
            if abs(step) <= 1e-15 * max(1.0, abs(z)):
                break
            if not self.lo <= z <= self.hi:
                return None
        ex, exx, _ = _partials(self.m, t, z)
        if abs(ex - s) <= self.tol.slide and exx > self.tol.fold:
            return float(z)
        return None

    def velocity(self, t, x):
        ex, exx, ext = _partials(self.m, t, x)
        if not exx > self.tol.fold:
            return None
        return float(-ext / exx)

    def rk4(self, t, x, h):
        k1 = self.velocity(t, x)
        if k1 is None:
            return None
        k2 = self.velocity(t + h / 2, x + h * k1 / 2)
        if k2 is None:
            return None
        k3 = self.velocity(t + h / 2, x + h * k2 / 2)
        if k3 is None:
            return None
        k4 = self.velocity(t + h, x + h * k3)
        if k4 is None:
            return None
        return x + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0, k1

    def slide_to(self, t, x, s, t1):
        """State on the branch at t1, ``None`` if the branch is gone, or
        ``"release"`` if it retreated."""
        h = t1 - t
        r = self.rk4(t, x, h)
        if r is not None:
            xp, v0 = r
            if self.lo <= xp <= self.hi:
                z = self.project(t1, xp, s)
                # same branch: progress in the direction -s, no larger than the predictor suggests
                if z is not None and s * (z - x) <= self.tol.slide and abs(z - x) <= 10.0 * abs(xp - x) + 1e-12:
                    return z
        return self.branch_root(t1, x, s, hint=abs(h))

    def fold(self, t0, x0, s, t1):
        """Fold time and abscissa in (t0, t1] for the branch through (t0, x0)."""
        a, b = t0, t1
        xa = x0
        while b - a > self.tol.event:
            c = 0.5 * (a + b)
            r = self.branch_root(c, xa, s)
            if isinstance(r, float):
                a, xa = c, r
            else:
                b = c
        # Newton on {E_x = s, E_xx = 0} in (t, x)
        tn, xn = a, xa
        ok = False
        for _ in range(30):
            j = self.m.jet(tn, xn)
            f1 = j.derivative(0, 1) - s
            f2 = j.derivative(0, 2)
            J = np.array([[j.derivative(1, 1), j.derivative(0, 2)], [j.derivative(1, 2), j.derivative(0, 3)]])
            try:
                step = np.linalg.solve(J, [f1, f2])
            except np.linalg.LinAlgError:
                break
            tn, xn = tn - step[0], xn - step[1]
            if abs(step[0]) < 1e-15 and abs(step[1]) < 1e-15:
                ok = True
                break
            if abs(step[0]) < 1e-14 * max(1.0, abs(tn)) and abs(step[1]) < 1e-14 * max(1.0, abs(xn)):
                ok = True
                break
        if ok and t0 <= tn <= t1 + self.tol.event and abs(tn - a) <= 1e3 * self.tol.event and abs(xn - xa) <= 1e-3:
            return float(min(tn, t1)), float(xn)
        return float(a), float(xa)

    def landing(self, t, x, s, resolution=4001):
        """Nearest stable point in the direction -s past the unstable excursion."""
        d = -s
        edge = self.hi if d > 0 else self.lo
        if abs(edge - x) <= 0:
            raise NoLandingError(f"fold at the box edge at t = {t!r}")
        grid = np.linspace(x, edge, resolution)
        h = s * self.m.dx(np.full(grid.shape, t), grid) - 1.0
        exc = np.flatnonzero(h[1:] > max(1e-12, 10 * self.tol.slide)) + 1
        if exc.size == 0:
            raise StiffSlideError(f"E_xx vanishes at t = {t!r}, x = {x!r} without a fold excursion")
        start = grid[exc[0]]
        a, b = sorted((start, edge))
        xs, ss = stationary_roots(self.m, t, a, b, max(64, int(resolution * abs(b - a) / abs(edge - x))))
        order = np.argsort(d * xs)
        for z, sg in zip(xs[order], ss[order]):
            if d * (z - start) <= 0:
                continue
            _, exx, _ = _partials(self.m, t, z)
            if exx >= -self.tol.fold:
                return float(z)
        raise NoLandingError(f"no stable landing point in the box after the fold at t = {t!r}")

    def release_time(self, t0, x0, s, t1):
        """Time in (t0, t1] after which the branch retreats (loading reversal)."""
        a, b, xa = t0, t1, x0
        while b - a > self.tol.event:
            c = 0.5 * (a + b)
            r = self.branch_root(c, xa, s)
            if isinstance(r, float):
                a, xa = c, r
            else:
                b = c
        return a, xa


def solve_local(model, x0, horizon=None, dt=1e-3, tol=None):
    """Local solution on the grid k * dt, k = 0 .. round(horizon / dt)."""
    tol = Tolerances() if tol is None else tol
    T = model.T if horizon is None else float(horizon)
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("horizon must be a positive multiple of dt")
    grid = np.arange(n + 1) * dt
    grid[-1] = T
    model.check_domain(grid, np.zeros_like(grid))
    model.check_domain(0.0, x0)
    run = _Runner(model, tol)
    if abs(run.ex(0.0, x0)) > 1.0 + tol.stick:
        raise ValueError("initial state violates |E_x(0, x0)| <= 1")

    x = float(x0)
    t = 0.0
    mode, s = "stick", 0
    events, jumps = [], []
    values = np.empty(n + 1)
    values[0] = x
    regimes = ["stick"]

    def start_motion(t, x):
        """Regime after reaching |E_x| = 1 at (t, x): slide, stay stuck, or fold."""
        ex, exx, ext = _partials(model, t, x)
        sg = 1 if ex > 0 else -1
        if exx > tol.fold:
            v = -ext / exx
            if sg * v <= 1e-12 * max(1.0, abs(v)):
                return "slide", sg
            return "stick", 0
        return "fold", sg

    for k in range(1, n + 1):
        t1 = grid[k]
        label = "stick"
        guard = 0
        while t < t1:
            guard += 1
            if guard > 1000:
                raise StiffSlideError(f"too many events in one step near t = {t!r}")
            if mode == "stick":
                f1 = run.ex(t1, x)
                if abs(f1) < 1.0:
                    t = t1
                    break
                g = lambda tau: abs(run.ex(tau, x)) - 1.0
                if g(t) >= 0.0:
                    ta = t
                else:
                    a, b = t, t1
                    while b - a > tol.event:
                        c = 0.5 * (a + b)
                        a, b = (a, c) if g(c) >= 0.0 else (c, b)
                    ta = b
                nxt, sg = start_motion(ta, x)
                if nxt == "stick":
                    if abs(f1) <= 1.0 + tol.stick:
                        t = t1
                        break
                    # tangential touch inside the step; the loading turned back
                    t = t1
                    break
                events.append(Event(ta, "activation", x, x))
                t = ta
                if nxt == "slide":
                    mode, s = "slide", sg
                else:
                    mode, s = "fold", sg
                continue
            if mode == "slide":
                z = run.slide_to(t, x, s, t1)
                if isinstance(z, float):
                    x, t = z, t1
                    label = "slide" if label != "jump" else label
                    break
                if z == "release":
                    tr, xr = run.release_time(t, x, s, t1)
                    events.append(Event(tr, "release", xr, xr))
                    if xr != x:
                        label = "slide" if label != "jump" else label
                    x, t, mode, s = xr, tr + tol.event, "stick", 0
                    continue
                tf, xf = run.fold(t, x, s, t1)
                if xf != x:
                    label = "slide" if label != "jump" else label
                t, x, mode = tf, xf, "fold"
                continue
            if mode == "fold":
                events.append(Event(t, "fold", x, x))
                z = run.landing(t, x, s)
                events.append(Event(t, "landing", x, z))
                jumps.append(JumpRecord(t, x, z))
                label = "jump"
                x = z
                nxt, sg = start_motion(t, x)
                mode, s = ("slide", sg) if nxt == "slide" else ("stick", 0)
                if nxt == "fold":
                    raise StiffSlideError(f"landing at a fold at t = {t!r}")
                continue
        t = t1
        values[k] = x
        regimes.append(label)
    return Trajectory(grid, values, regimes, jumps, events)


@dataclass
class UpperBoundReport:
    worst: float
    t1: float
    t2: float
    tol: float
    scale: float

    @property
    def passed(self):
        return self.worst <= self.tol


def check_upper_bound(model, traj, pairs=None, tol=None, seed=0):
    """Largest E(t2,x2) - E(t1,x1) - int dE/dt + Diss over pairs t1 <= t2.

    With ``pairs=None`` every pair of grid times is covered exactly in one
    pass; otherwise ``pairs`` random pairs are drawn with ``seed``. The
    default tolerance is 1e-3 times the energy scale of the trajectory.
    """
    R, e = energy_ledger(model, traj)
    scale = energy_scale(e)
    tol = 1e-3 * scale if tol is None else float(tol)
    if pairs is None:
        run_min = np.minimum.accumulate(R)
        arg = np.zeros(R.size, int)
        best = 0
        for k in range(R.size):
            if R[k] < R[best]:
                best = k
            arg[k] = best
        gaps = R - run_min
        j = int(np.argmax(gaps))
        i = int(arg[j])
    else:
        rng = np.random.default_rng(seed)
        a = rng.integers(0, R.size, int(pairs))
        b = rng.integers(0, R.size, int(pairs))
        i_all, j_all = np.minimum(a, b), np.maximum(a, b)
        gaps = R[j_all] - R[i_all]
        m = int(np.argmax(gaps))
        i, j = int(i_all[m]), int(j_all[m])
    worst = float(R[j] - R[i])
    return UpperBoundReport(worst, float(traj.times[i]), float(traj.times[j]), tol, scale)
