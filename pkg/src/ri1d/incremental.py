"""Energetic solutions by incremental global minimization, and their audits.

Each step minimizes z -> E(t_k, z) + |z - x_{k-1}| over a search interval:
a coarse scan finds every discrete basin, golden-section search refines the
basins in parallel, and the previous state is always kept as a candidate so
that sticking is reproduced exactly.
"""

from dataclasses import dataclass

import numpy as np

from .errors import UnboundedBelowError
from .trajectory import JumpRecord, Trajectory

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0
MAX_SCAN = 4001
MAX_BASINS = 8


def golden_minimize(f, lo, hi, tol):
    """Golden-section search on many brackets at once.

    ``f`` maps an array of points to values; ``lo`` and ``hi`` are arrays of
    bracket ends. Returns (argmin, min) arrays; the bracket ends compete with
    the interior result.
    """
    lo = np.array(lo, float)
    hi = np.array(hi, float)
    a, b = lo.copy(), hi.copy()
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(200):
        if not np.any(b - a > tol):
            break
        left = fc < fd
        na = np.where(left, a, c)
        nb = np.where(left, d, b)
        new = np.where(left, nb - _INVPHI * (nb - na), na + _INVPHI * (nb - na))
        fnew = f(new)
        c, d, fc, fd = (
            np.where(left, new, d),
            np.where(left, c, new),
            np.where(left, fnew, fd),
            np.where(left, fc, fnew),
        )
        a, b = na, nb
    pts = np.stack([c, d, lo, hi])
    vals = np.stack([fc, fd, f(lo), f(hi)])
    k = np.argmin(vals, axis=0)
    idx = np.arange(lo.size)
    return pts[k, idx], vals[k, idx]


def _basins(zs, F, xp):
    """Brackets around discrete local minima of F on the scan, split at xp."""
    n = zs.size
    interior = np.zeros(n, bool)
    interior[1:-1] = (F[1:-1] <= F[:-2]) & (F[1:-1] <= F[2:])
    interior[0] = F[0] <= F[1]
    interior[-1] = F[-1] <= F[-2]
    idx = np.flatnonzero(interior)
    if idx.size > MAX_BASINS:
        idx = idx[np.argsort(F[idx], kind="stable")[:MAX_BASINS]]
    lo, hi = [], []
    for i in idx:
        a, b = zs[max(i - 1, 0)], zs[min(i + 1, n - 1)]
        if a < xp < b:
            lo += [a, xp]
            hi += [xp, b]
        else:
            lo.append(a)
            hi.append(b)
    return np.array(lo), np.array(hi), idx


def _cluster_best(cand, fval, gap):
    """Best candidate of every group of candidates closer than ``gap``."""
    order = np.argsort(cand, kind="stable")
    c, f = cand[order], fval[order]
    breaks = np.flatnonzero(np.diff(c) > gap) + 1
    out_c, out_f = [], []
    for seg in np.split(np.arange(c.size), breaks):
        i = seg[np.argmin(f[seg])]
        out_c.append(c[i])
        out_f.append(f[i])
    return np.array(out_c), np.array(out_f)


def solve_energetic(model, x0, grid, search=None, tol=1e-6, max_scan=MAX_SCAN, tie_tol=1e-9):
    """Incremental global minimization on the time grid ``grid``.

    The scan spacing is ``max(tol, width / (max_scan - 1))``; each basin is
    refined to ``tol / 10``. Minimizers of distinct basins whose incremental
    energies differ by at most ``tie_tol`` are a tie: the one nearer the
    previous state wins and the tie is recorded.
    """
    grid = np.asarray(grid, float)
    lo, hi = (-model.L, model.L) if search is None else map(float, search)
    model.check_domain(grid, np.zeros_like(grid))
    model.check_domain(np.zeros(2), np.array([lo, hi]))
    if not lo <= x0 <= hi:
        raise ValueError("x0 must lie in the search interval")
    n = int(min(max_scan, max(201, np.ceil((hi - lo) / tol) + 1)))
    zs = np.linspace(lo, hi, n)
    h = zs[1] - zs[0]
    values = np.empty(grid.size)
    values[0] = x0
    regimes = ["stick"]
    jumps, ties = [], []
    xp = float(x0)
    for k in range(1, grid.size):
        t = grid[k]

        def F(z, t=t, xp=xp):
            return model.value(t, z) + np.abs(z - xp)

        Fs = F(zs)
        blo, bhi, idx = _basins(zs, Fs, xp)
        cand, fval = golden_minimize(F, blo, bhi, 0.1 * tol)
        cand = np.concatenate([cand, [xp]])
        fval = np.concatenate([fval, F(np.array([xp]))])
        cand, fval = _cluster_best(cand, fval, 2.0 * h)
        fmin = fval.min()
        near = np.flatnonzero(fval <= fmin + tie_tol)
        pick = near[np.argmin(np.abs(cand[near] - xp))]
        x = float(cand[pick])
        # escape: the optimum sits on an end where the objective still descends outward
        if x - lo < h and model.dx(t, lo) - 1.0 > 0.0 and lo < xp + h:
            raise UnboundedBelowError(f"minimizer left the search interval below {lo!r} at t = {t!r}")
        if hi - x < h and model.dx(t, hi) + 1.0 < 0.0 and hi > xp - h:
            raise UnboundedBelowError(f"minimizer left the search interval above {hi!r} at t = {t!r}")
        far = near[np.abs(cand[near] - x) > 0.0]
        if far.size:
            ties.append((float(t), [x] + sorted({float(c) for c in cand[far]})))
        if abs(x - xp) <= tol:
            x = xp
            regimes.append("stick")
        else:
            a, b = sorted((xp, x))
            inside = (zs > a) & (zs < b)
            fa, fb = F(np.array([xp]))[0], F(np.array([x]))[0]
            if np.any(inside) and Fs[inside].max() > max(fa, fb) + tol:
                regimes.append("jump")
                jumps.append(JumpRecord(float(t), xp, x))
            else:
                regimes.append("slide")
        values[k] = x
        xp = x
    return Trajectory(grid, values, regimes, jumps, ties=ties)


# audits shared with the local integrator


def energy_ledger(model, traj, dissipation_sign=1.0):
    """Prefix sums R_k = E(t_k, x_k) - int_0^{t_k} dE/dt + s * Diss[0, t_k].

    The residual of the energy identity on [t_i, t_j] is R_j - R_i. The
    time integral uses the trapezoid rule on the grid and Diss is the exact
    grid variation. Returns (R, energies).
    """
    t, x = traj.times, traj.values
    model.check_domain(t, x)
    j = model.jet(t, x)
    e = j.value
    et = j.derivative(1, 0)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (et[1:] + et[:-1]) * np.diff(t))])
    diss = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(x)))])
    return e - integral + dissipation_sign * diss, e


def energy_scale(energies):
    return max(1.0, float(np.max(np.abs(energies))))


@dataclass
class BalanceReport:
    residuals: np.ndarray
    max_abs: float
    worst_time: float
    tol: float

    @property
    def passed(self):
        return self.max_abs <= self.tol


def check_energy_balance(model, traj, tol, dissipation_sign=1.0):
    """Energy-dissipation balance on every prefix [0, t_k].

    ``dissipation_sign=-1`` flips the dissipation term; it exists only to
    exercise the sign convention in tests.
    """
    R, _ = energy_ledger(model, traj, dissipation_sign)
    res = R - R[0]
    k = int(np.argmax(np.abs(res)))
    return BalanceReport(res, float(abs(res[k])), float(traj.times[k]), float(tol))


@dataclass
class StabilityReport:
    min_margin: float
    time: float
    probe: float
    tol: float

    @property
    def passed(self):
        return self.min_margin >= -self.tol


def check_global_stability(model, traj, probe, tol, chunk=64):
    """Smallest margin E(t,z) + |z - x(t)| - E(t,x(t)) over grid x probe."""
    probe = np.asarray(probe, float)
    model.check_domain(np.zeros_like(probe), probe)
    model.check_domain(traj.times, traj.values)
    best = (np.inf, np.nan, np.nan)
    for s in range(0, traj.times.size, chunk):
        t = traj.times[s : s + chunk, None]
        x = traj.values[s : s + chunk, None]
        m = model.value(t, probe[None, :]) + np.abs(probe[None, :] - x) - model.value(t, x)
        i, j = np.unravel_index(int(np.argmin(m)), m.shape)
        if m[i, j] < best[0]:
            best = (float(m[i, j]), float(t[i, 0]), float(probe[j]))
    return StabilityReport(best[0], best[1], best[2], float(tol))
