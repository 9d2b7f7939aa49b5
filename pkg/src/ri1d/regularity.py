"""Audits of sampled trajectories: jumps, dissipation, weak stability, point
classes with one-sided derivative laws, and the AC / jump / Cantor split of
the variation.
"""

from dataclasses import dataclass, field

import numpy as np

from .incremental import check_energy_balance, energy_scale
from .integrator import check_upper_bound
from .report import dumps
from .trajectory import JumpRecord, Trajectory

STATE_TOL = 1e-9


# jumps and dissipation


WINDOW = 5


def default_threshold(traj, state_tol=STATE_TOL, factor=5.0, window=WINDOW):
    """Per-step thresholds: ``factor`` times the median |dx| of the ``window``
    steps on each side, floored at 10 * state_tol.

    A local median keeps long stick phases (zero increments) from hiding the
    scale of nearby continuous motion, and keeps a lone step of a staircase
    visible against its flat neighbours.
    """
    dx = np.abs(np.diff(traj.values))
    n = dx.size
    out = np.full(n, 10.0 * state_tol)
    if n < 2:
        return out
    padded = np.concatenate([np.full(window, np.nan), dx, np.full(window, np.nan)])
    win = np.lib.stride_tricks.sliding_window_view(padded, 2 * window + 1).copy()
    win[:, window] = np.nan
    med = np.nanmedian(win, axis=1)
    return np.maximum(out, factor * med)


def _extrapolate(t, x, idx, at):
    """Linear fit through the samples ``idx`` evaluated at time ``at``."""
    if len(idx) == 1:
        return float(x[idx[0]])
    p = np.polyfit(t[idx] - at, x[idx], 1)
    return float(p[1])


def jump_steps(traj, threshold=None):
    """Runs of consecutive steps with |dx| above the threshold, as (first,
    last) sample pairs. ``threshold`` is a number or one value per step."""
    if threshold is None:
        threshold = default_threshold(traj)
    threshold = np.broadcast_to(np.asarray(threshold, float), (max(traj.times.size - 1, 0),))
    if not np.all(threshold > 0):
        raise ValueError("threshold must be positive")
    big = np.abs(np.diff(traj.values)) > threshold
    edges = np.diff(np.concatenate([[0], big.astype(int), [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), ends.tolist()))


def detect_jumps(traj, threshold=None):
    """Jumps of a sampled trajectory.

    Steps with |dx| above ``threshold`` (a number, or per-step values from
    :func:`default_threshold` by default) are merged when adjacent. When the trajectory carries an exact jump
    record inside the run it is used; otherwise the jump sits at the middle
    of the run and its limits come from linear fits through up to three
    samples on each side that do not cross another run.
    """
    t, x = traj.times, traj.values
    runs = jump_steps(traj, threshold)
    known = sorted(traj.jumps, key=lambda j: j.t)
    out = []
    for n, (a, b) in enumerate(runs):
        exact = [j for j in known if t[a] <= j.t <= t[b]]
        if exact:
            # the record of largest size stands for the run
            out.append(max(exact, key=lambda j: j.size))
            continue
        lo = runs[n - 1][1] if n > 0 else 0
        hi = runs[n + 1][0] if n + 1 < len(runs) else t.size - 1
        mid = 0.5 * (t[a] + t[b])
        left = _extrapolate(t, x, list(range(max(lo, a - 2), a + 1)), mid)
        right = _extrapolate(t, x, list(range(b, min(hi, b + 2) + 1)), mid)
        if left == right:
            left, right = float(x[a]), float(x[b])
        out.append(JumpRecord(float(mid), left, right))
    return out


def dissipation(traj, t1, t2):
    """Pointwise variation of the samples with t1 <= t <= t2."""
    t = traj.times
    if t1 > t2:
        raise ValueError("need t1 <= t2")
    slack = 1e-12 * max(1.0, abs(t[-1] - t[0]))
    if t1 < t[0] - slack or t2 > t[-1] + slack:
        raise ValueError("interval outside the sampled span")
    m = (t >= t1 - slack) & (t <= t2 + slack)
    return float(np.sum(np.abs(np.diff(traj.values[m]))))


# weak solutions


@dataclass
class WeakReport:
    stability: float
    stability_time: float
    upper_bound: object
    tol: float

    @property
    def stability_ok(self):
        return self.stability <= self.tol

    @property
    def passed(self):
        return self.stability_ok and self.upper_bound.passed


def verify_weak(model, traj, tol=None, pairs=None, seed=0):
    """Weak local stability at continuity samples plus the upper-bound audit.

    The stability residual is max(|E_x(t, x(t))| - 1) over samples that do
    not sit at a recorded jump time. ``tol`` defaults to 1e-3 times the
    energy scale and applies to both audits.
    """
    model.check_domain(traj.times, traj.values)
    j = model.jet(traj.times, traj.values)
    if tol is None:
        tol = 1e-3 * energy_scale(j.value)
    res = np.abs(j.derivative(0, 1)) - 1.0
    at_jump = np.zeros(traj.times.size, bool)
    for jr in traj.jumps:
        at_jump |= np.abs(traj.times - jr.t) <= 1e-12 * max(1.0, traj.times[-1])
    res = np.where(at_jump, -np.inf, res)
    k = int(np.argmax(res))
    ub = check_upper_bound(model, traj, pairs=pairs, tol=tol, seed=seed)
    return WeakReport(float(max(res[k], 0.0)), float(traj.times[k]), ub, float(tol))


# point classification


@dataclass
class PointClass:
    t: float
    x: float
    label: str
    left: float = None
    right: float = None
    left_exists: bool = False
    right_exists: bool = False
    resolution_limited: bool = False
    predicted_slide: float = None
    slide_residual: float = None
    roots: tuple = None
    eq_residuals: tuple = None
    limit_residual: float = None
    matched: bool = None

    def to_json(self):
        return {k: v for k, v in self.__dict__.items()}


@dataclass
class ClassificationReport:
    points: list
    tol: float
    jumps: list = field(default_factory=list)

    def labels(self, label):
        return [p for p in self.points if p.label == label]

    @property
    def slide_points(self):
        return [p for p in self.points if p.slide_residual is not None]

    def to_json(self):
        return {"tol": self.tol, "points": [p.to_json() for p in self.points]}


def _one_sided(t, x, k, lo, hi, side):
    """Second-order one-sided slopes at sample k with steps h and 2h, and
    the first-order quotients at steps h, 2h, 4h, using samples in [lo, hi].
    Missing stencils give None."""
    def pick(m):
        idx = [k + side * m * i for i in range(3)]
        if min(idx) < lo or max(idx) > hi:
            return None
        tt, xx = t[idx] - t[k], x[idx]
        return float(np.polyval(np.polyder(np.polyfit(tt, xx, 2)), 0.0))

    def quotient(m):
        i = k + side * m
        return None if i < lo or i > hi else float((x[i] - x[k]) / (t[i] - t[k]))

    return pick(1), pick(2), [quotient(m) for m in (1, 2, 4)]


def _side(q1, q2, quots, tol):
    """(estimate, exists, diverges) for one side."""
    if q1 is None or q2 is None:
        return q1, False, False
    exists = abs(q1 - q2) <= tol * max(1.0, abs(q1))
    est = (4.0 * q1 - q2) / 3.0 if exists else q1
    diverges = False
    if all(q is not None for q in quots):
        a, b, c = (abs(q) for q in quots)
        # exact doubling must count despite rounding in the quotients
        g = 2.0 * (1.0 - 1e-9)
        diverges = c > 0 and b >= g * c and a >= g * b
    return est, exists, diverges


def _limit(t, k, neighbours):
    """Slope limit at sample k by linear extrapolation of the existing
    one-sided slopes of the two nearest samples on one side."""
    if len(neighbours) < 2 or not all(side[1] for _, side in neighbours):
        return None
    (i, a), (j, b) = neighbours
    w = (t[k] - t[i]) / (t[j] - t[i])
    return a[0] + w * (b[0] - a[0])


def eq_roots(ett, exxt, exxx):
    """Real roots X of E_xtt + 2 E_xxt X + E_xxx X^2 = 0, ascending."""
    r = np.roots([exxx, 2.0 * exxt, ett]) if (exxx or exxt) else np.array([])
    r = np.real(r[np.abs(np.imag(r)) <= 1e-12 * max(1.0, np.max(np.abs(r)) if r.size else 1.0)])
    return tuple(sorted(float(v) for v in r))


def eq_residual(ett, exxt, exxx, X):
    """Residual of the one-sided slope law relative to its term magnitudes."""
    scale = max(1.0, abs(ett) + 2.0 * abs(exxt * X) + abs(exxx) * X * X)
    return abs(ett + 2.0 * exxt * X + exxx * X * X) / scale


def classify_points(model, traj, tol=1e-4, jumps=None, regime_tol=1e-6, degenerate_tol=1e-6):
    """Classes I1, I2, I3 and J for a sampled trajectory.

    One-sided slopes use second-order three-point stencils with steps h and
    2h that stay inside the jump-free segment; a side exists when the two
    agree within ``tol`` (relative, floor 1) and the reported value is their
    Richardson combination. A side diverges when its first-order quotients
    at steps 4h, 2h, h grow by a factor of at least 2 per refinement.

    - J: one entry per jump, at the jump time.
    - I3: both sides exist and agree, or only one side is available at a
      segment end; samples where a side fails without diverging are I3
      flagged ``resolution_limited``.
    - I2: both sides exist and differ. Where E_xx and E_xt vanish (within
      ``degenerate_tol``) both slopes are tested against the quadratic law
      E_xtt + 2 E_xxt X + E_xxx X^2 = 0; everywhere they are compared with
      the limits of the neighbouring slopes.
    - I1: one side is ~0 and the other diverges.

    On slide samples (|E_x| within ``regime_tol`` of 1 and E_xx > tol)
    the predicted velocity -E_xt / E_xx is attached with the relative
    mismatch of the estimate.
    """
    t, x = traj.times, traj.values
    model.check_domain(t, x)
    n = t.size
    jumps = detect_jumps(traj) if jumps is None else list(jumps)
    # segment boundaries: a jump in the step ending at sample k splits [.., k-1] | [k, ..]
    cuts = sorted({min(max(int(np.searchsorted(t, jr.t, side="left")), 1), n - 1) for jr in jumps})
    seg_lo = np.zeros(n, int)
    seg_hi = np.full(n, n - 1)
    bounds = [0] + cuts + [n]
    for a, b in zip(bounds[:-1], bounds[1:]):
        seg_lo[a:b] = a
        seg_hi[a:b] = b - 1
    jet = model.jet(t, x)
    ex, exx, ext = jet.derivative(0, 1), jet.derivative(0, 2), jet.derivative(1, 1)
    ett, exxt, exxx = jet.derivative(2, 1), jet.derivative(1, 2), jet.derivative(0, 3)
    sides = []
    for k in range(n):
        L = _side(*_one_sided(t, x, k, seg_lo[k], seg_hi[k], -1), tol)
        R = _side(*_one_sided(t, x, k, seg_lo[k], seg_hi[k], +1), tol)
        sides.append((L, R))
    points = []
    for k in range(n):
        (lv, le, ld), (rv, re, rd) = sides[k]
        p = PointClass(float(t[k]), float(x[k]), "I3", lv, rv, le, re)
        have_l = lv is not None
        have_r = rv is not None
        if le and re:
            if abs(lv - rv) > tol * max(1.0, abs(lv), abs(rv)):
                p.label = "I2"
                # limits of the neighbouring slopes on each side
                lim_l = _limit(t, k, [(k - i, sides[k - i][0]) for i in (1, 2) if k - i >= seg_lo[k]])
                lim_r = _limit(t, k, [(k + i, sides[k + i][1]) for i in (1, 2) if k + i <= seg_hi[k]])
                if lim_l is not None and lim_r is not None:
                    p.limit_residual = max(abs(lv - lim_l), abs(rv - lim_r)) / max(1.0, abs(lv), abs(rv))
                if abs(exx[k]) <= degenerate_tol and abs(ext[k]) <= degenerate_tol:
                    p.roots = eq_roots(ett[k], exxt[k], exxx[k])
                    p.eq_residuals = (eq_residual(ett[k], exxt[k], exxx[k], lv), eq_residual(ett[k], exxt[k], exxx[k], rv))
                eq_ok = p.eq_residuals is not None and max(p.eq_residuals) <= tol
                limit_ok = p.limit_residual is not None and p.limit_residual <= tol
                p.matched = bool(eq_ok or limit_ok)
        elif (le and abs(lv) <= tol and rd) or (re and abs(rv) <= tol and ld):
            p.label = "I1"
        elif not (le or re):
            p.resolution_limited = have_l or have_r
        elif (have_l and not le) or (have_r and not re):
            p.resolution_limited = True
        if exx[k] > tol and abs(abs(ex[k]) - 1.0) <= regime_tol:
            p.predicted_slide = float(-ext[k] / exx[k])
            if p.label == "I3" and not p.resolution_limited:
                est = lv if (le and not re) else rv if (re and not le) else 0.5 * (lv + rv)
                p.slide_residual = abs(est - p.predicted_slide) / max(abs(p.predicted_slide), 1e-8)
        points.append(p)
    for jr in jumps:
        points.append(PointClass(float(jr.t), float(jr.left), "J", matched=True))
    points.sort(key=lambda p: (p.t, p.label != "J"))
    return ClassificationReport(points, float(tol), jumps)


# variation split


@dataclass
class SbvSplit:
    total: float
    ac: float
    jump: float
    cantor: float
    ladder: list
    rungs: list
    fraction: float
    jumps: list = field(default_factory=list)

    @property
    def converged(self):
        c = [r["cantor"] for r in self.rungs]
        slack = 1e-9 * max(self.total, 1e-300)
        return all(b <= a + slack for a, b in zip(c[:-1], c[1:]))

    @property
    def is_sbv(self):
        return self.cantor <= self.fraction * self.total

    @property
    def verdict(self):
        return "SBV" if self.is_sbv else "not SBV"

    def to_json(self):
        return {
            "total": self.total,
            "ac": self.ac,
            "jump": self.jump,
            "cantor": self.cantor,
            "fraction": self.fraction,
            "ladder": self.ladder,
            "rungs": self.rungs,
            "converged": self.converged,
            "verdict": self.verdict,
        }


def default_ladder(traj, rungs=3):
    """Interval counts m / p^2, m / p, m for m sample intervals, p being the
    smallest prime factor of m (fewer rungs when m has fewer such factors)."""
    m = traj.times.size - 1
    if m < 2:
        raise ValueError("need at least three samples")
    p = next(q for q in range(2, m + 1) if m % q == 0)
    out = [m]
    while len(out) < rungs and out[0] % p == 0 and out[0] // p >= 1:
        out.insert(0, out[0] // p)
    return out


def sbv_split(traj, ladder=None, fraction=0.1, slope_tol=0.25, persistence=0.9, threshold=None):
    """Split the variation into absolutely continuous, jump and Cantor parts.

    ``ladder`` lists interval counts of uniform subsamplings; each must divide
    the next and the finest must divide the number of sample intervals. At
    every rung after the first:

    - AC part: variation of the jump-free cells whose slope is within
      ``slope_tol`` (relative) of the slope of the enclosing cell one rung
      coarser;
    - jump part: total size of the jumps found by :func:`detect_jumps` on the
      finest rung that persist, i.e. whose cell increment is at least
      ``persistence`` times the increment of every enclosing coarser cell;
    - Cantor part: the remainder of the rung's total variation.

    The verdict is SBV when the finest Cantor part is at most ``fraction``
    of the total.
    """
    t, x = traj.times, traj.values
    m = t.size - 1
    ladder = default_ladder(traj) if ladder is None else [int(r) for r in ladder]
    if len(ladder) < 2 or any(b <= a for a, b in zip(ladder[:-1], ladder[1:])):
        raise ValueError("ladder needs at least two strictly increasing rungs")
    if m % ladder[-1] or any(b % a for a, b in zip(ladder[:-1], ladder[1:])):
        raise ValueError("each rung must divide the next and the sample count")
    sub = []
    for r in ladder:
        idx = np.arange(0, m + 1, m // r)
        sub.append((t[idx], x[idx]))
    # persistent jumps on the finest rung
    ft, fx = sub[-1]
    fine = Trajectory(ft, fx, jumps=list(traj.jumps))
    fjumps = detect_jumps(fine, threshold)
    runs = jump_steps(fine, threshold)
    kept, kept_cells = [], set()
    for jr, (a, b) in zip(fjumps, runs):
        inc = abs(fx[b] - fx[a])
        ok = True
        for r in ladder[:-1]:
            step = ladder[-1] // r
            pa, pb = (a // step) * step, -(-b // step) * step
            if inc < persistence * abs(fx[pb] - fx[pa]):
                ok = False
                break
        if ok:
            kept.append(jr)
            kept_cells.update(range(a, b))
    jump_part = float(sum(j.size for j in kept))
    rungs = []
    for i in range(1, len(ladder)):
        ct, cx = sub[i]
        pt, px = sub[i - 1]
        ratio = ladder[i] // ladder[i - 1]
        d = np.diff(cx)
        slope = d / np.diff(ct)
        parent = np.repeat(np.diff(px) / np.diff(pt), ratio)
        total = float(np.sum(np.abs(d)))
        # fine-rung cells covered by each cell of this rung
        cover = ladder[-1] // ladder[i]
        in_jump = np.array([any(c in kept_cells for c in range(j * cover, (j + 1) * cover)) for j in range(d.size)]) if kept_cells else np.zeros(d.size, bool)
        tiny = np.abs(d) <= 1e-15 * max(1.0, np.max(np.abs(x)))
        close = np.abs(slope - parent) <= slope_tol * np.abs(parent)
        ac = float(np.sum(np.abs(d)[(close | tiny) & ~in_jump]))
        rungs.append({"resolution": ladder[i], "total": total, "ac": ac, "jump": jump_part, "cantor": total - ac - jump_part})
    last = rungs[-1]
    return SbvSplit(last["total"], last["ac"], jump_part, last["cantor"], ladder, rungs, float(fraction), kept)


# report


@dataclass
class AuditReport:
    weak: WeakReport
    jumps: list
    classes: ClassificationReport = None
    balance: object = None
    sbv: SbvSplit = None

    @property
    def passed(self):
        ok = self.weak.passed
        if self.balance is not None:
            ok = ok and self.balance.passed
        return ok

    def to_json(self):
        w = self.weak
        out = {
            "passed": self.passed,
            "stability": {"worst": w.stability, "t": w.stability_time, "tol": w.tol, "passed": w.stability_ok},
            "upper_bound": {
                "worst": w.upper_bound.worst,
                "t1": w.upper_bound.t1,
                "t2": w.upper_bound.t2,
                "tol": w.upper_bound.tol,
                "passed": w.upper_bound.passed,
            },
            "jumps": [{"t": j.t, "left": j.left, "right": j.right, "size": j.size} for j in self.jumps],
        }
        if self.balance is not None:
            b = self.balance
            out["balance"] = {"worst": b.max_abs, "t": b.worst_time, "tol": b.tol, "passed": b.passed}
        if self.classes is not None:
            out["classes"] = self.classes.to_json()["points"]
        if self.sbv is not None:
            out["sbv"] = self.sbv.to_json()
        return out

    def dumps(self):
        return dumps(self.to_json())


def audit(model, traj, tol=None, balance=False, classify=True, sbv=False, ladder=None, fraction=0.1, seed=0):
    """All audits of one trajectory in one report."""
    weak = verify_weak(model, traj, tol, seed=seed)
    jumps = detect_jumps(traj)
    bal = check_energy_balance(model, traj, weak.tol) if balance else None
    classes = classify_points(model, traj, jumps=jumps) if classify else None
    split = sbv_split(traj, ladder, fraction) if sbv else None
    return AuditReport(weak, jumps, classes, bal, split)
