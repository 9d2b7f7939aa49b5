"""Numerical checks of the non-degeneracy hypotheses H1-H5 and of the
stationary-set gap.

Every hypothesis concerns points of the curves E_x = +1 and E_x = -1 where
further partial derivatives vanish. The curves are traced by root isolation
on time slices placed at cell centres of the box. Candidates are then
collected along each traced branch (sign changes and dips of the first
auxiliary quantity, and cells where branches are born or die) and refined by
Gauss-Newton on a square or overdetermined subsystem with exact Jacobians
from the jets. Remaining equalities are checked at the refined point.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .energy import stationary_roots
from .report import dumps

HYPOTHESES = ("H1", "H2", "H3", "H4", "H5")
# quantities are named by jet slot: "phi" is E_x - s, "disc" is E_xxt^2 - E_xtt E_xxx
_REFINE = {
    "H1": ("phi", "Exx"),
    "H2": ("phi", "Exx", "Ext"),
    "H3": ("phi", "Exx", "Ext"),
    "H4": ("phi", "Ext"),
    "H5": ("phi", "Exx"),
}
_CHECK = {
    "H1": ("phi", "Exx", "Exxx"),
    "H2": ("phi", "Exx", "Ext", "disc"),
    "H3": ("phi", "Exx", "Ext"),
    "H4": ("phi", "Ext", "Extt"),
    "H5": ("phi", "Exx"),
}
# finiteness hypotheses versus emptiness hypotheses
FINITE = ("H1", "H2", "H3")
# gradient (d/dt, d/dx) of each refinable quantity, as jet slots
_GRAD = {"phi": ((1, 1), (0, 2)), "Exx": ((1, 2), (0, 3)), "Ext": ((2, 1), (1, 2))}
_SLOT = {"Exx": (0, 2), "Ext": (1, 1), "Exxx": (0, 3), "Extt": (2, 1)}


def worker_count():
    """Worker threads for slice scans, capped by RI1D_THREADS (default 1)."""
    try:
        n = int(os.environ.get("RI1D_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def map_ordered(fn, items):
    """``[fn(i) for i in items]``, run on a thread pool when allowed."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _quantities(model, t, x, s):
    """Dict of every quantity used by the checks at points (t, x) on branch s."""
    j = model.jet(t, x)
    q = {"phi": j.derivative(0, 1) - s}
    for name, (a, b) in _SLOT.items():
        q[name] = j.derivative(a, b)
    q["disc"] = j.derivative(1, 2) ** 2 - j.derivative(2, 1) * j.derivative(0, 3)
    return q, j


@dataclass(frozen=True)
class DegeneratePoint:
    t: float
    x: float
    sign: int
    residuals: dict

    def to_json(self):
        return {"t": self.t, "x": self.x, "sign": self.sign, "residuals": self.residuals}


@dataclass
class HypothesisEntry:
    which: str
    verdict: str
    points: list
    resolution: int
    tol: float
    scales: dict
    candidates: int = 0
    unresolved: int = 0
    growth: list = field(default_factory=list)

    @property
    def count(self):
        return len(self.points)

    def to_json(self):
        return {
            "verdict": self.verdict,
            "resolution": self.resolution,
            "tol": self.tol,
            "scales": self.scales,
            "candidates": self.candidates,
            "unresolved": self.unresolved,
            "growth": [{"resolution": r, "count": c} for r, c in self.growth],
            "points": [p.to_json() for p in self.points],
        }


@dataclass(frozen=True)
class GapEstimate:
    eps: float
    t: float
    pair: tuple

    def to_json(self):
        finite = np.isfinite(self.eps)
        return {
            "eps": self.eps,
            "t": self.t if finite else None,
            "pair": list(self.pair) if finite else None,
        }


@dataclass
class HypothesisReport:
    box: tuple
    entries: dict
    gap: GapEstimate = None

    def to_json(self):
        out = {"box": list(self.box), "hypotheses": {k: e.to_json() for k, e in self.entries.items()}}
        if self.gap is not None:
            out["gap"] = self.gap.to_json()
        return out

    def dumps(self):
        return dumps(self.to_json())


def slice_times(box, resolution):
    t0, t1 = box[0], box[1]
    return t0 + (np.arange(resolution) + 0.5) * (t1 - t0) / resolution


def _scan_slice(model, t, lo, hi, state_resolution):
    x, s = stationary_roots(model, t, lo, hi, state_resolution)
    q, _ = _quantities(model, np.full(x.shape, t), x, s)
    return x, s, q


def _branch_candidates(ts, slices, key):
    """Start points (t, x, s) for refinement along the traced branches.

    Within each sign, consecutive slices with equal root counts are matched
    in order (branches cannot cross at regular points); otherwise each root
    of the sparser slice is matched to the nearest root of the denser one,
    and the cell is also a birth/death cell whose adjacent roots with
    opposite ``key`` signs seed candidates. Sign changes and local dips of
    |key| along matched branches seed candidates as well.
    """
    out = []
    for s in (1, -1):
        xs = [sl[0][sl[1] == s] for sl in slices]
        ks = [sl[2][key][sl[1] == s] for sl in slices]
        links = []  # per cell: list of (k_left, k_right)
        for i in range(len(ts) - 1):
            a, b = xs[i], xs[i + 1]
            if a.size == b.size:
                links.append([(k, k) for k in range(a.size)])
                continue
            dense, dense_k = (b, ks[i + 1]) if b.size > a.size else (a, ks[i])
            sparse = a if b.size > a.size else b
            pairs = []
            for k, v in enumerate(sparse):
                m = int(np.argmin(np.abs(dense - v)))
                pairs.append((k, m) if b.size > a.size else (m, k))
            links.append(pairs)
            tc = 0.5 * (ts[i] + ts[i + 1])
            for k in range(dense.size - 1):
                if dense_k[k] * dense_k[k + 1] <= 0.0:
                    out.append((tc, 0.5 * (dense[k] + dense[k + 1]), s))
        for i, pairs in enumerate(links):
            for ka, kb in pairs:
                va, vb = ks[i][ka], ks[i + 1][kb]
                if va * vb <= 0.0:
                    out.append((0.5 * (ts[i] + ts[i + 1]), 0.5 * (xs[i][ka] + xs[i + 1][kb]), s))
        # dips of |key| along branches matched on both sides
        for i in range(1, len(ts) - 1):
            left = {kb: ka for ka, kb in links[i - 1]}
            right = dict(links[i])
            for k in range(xs[i].size):
                if k in left and k in right:
                    v = abs(ks[i][k])
                    if v <= abs(ks[i - 1][left[k]]) and v < abs(ks[i + 1][right[k]]):
                        out.append((ts[i], xs[i][k], s))
    return out


def _refine(model, which, start, box, scales):
    """Gauss-Newton refinement of the subsystem for ``which`` from ``start``.

    Returns (t, x) or None when the solver fails.
    """
    names = _REFINE[which]
    t0, t1, x0, x1 = box
    s = start[2]
    w = np.array([1.0 / scales[n] for n in names])

    def fun(p):
        q, _ = _quantities(model, p[0], p[1], s)
        return w * np.array([float(q[n]) for n in names])

    def jac(p):
        j = model.jet(p[0], p[1])
        return w[:, None] * np.array([[float(j.derivative(*_GRAD[n][0])), float(j.derivative(*_GRAD[n][1]))] for n in names])

    p0 = np.clip([start[0], start[1]], [t0, x0], [t1, x1])
    try:
        r = least_squares(
            fun, p0, jac=jac, bounds=([t0, x0], [t1, x1]), x_scale=[t1 - t0, x1 - x0],
            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200, method="trf",
        )
    except (ValueError, FloatingPointError):
        return None
    if r.status <= 0 or not np.all(np.isfinite(r.x)):
        return None
    return float(r.x[0]), float(r.x[1])


def _residuals(model, which, t, x, s, scales):
    q, _ = _quantities(model, t, x, s)
    return {n: float(abs(q[n]) / scales[n]) for n in _CHECK[which]}


def _dedupe(points, box, tol):
    # refinement at singular points converges slowly, so merge within sqrt(tol)
    dt = np.sqrt(tol) * (box[1] - box[0])
    dx = np.sqrt(tol) * (box[3] - box[2])
    keep = []
    for p in sorted(points, key=lambda p: max(p.residuals.values())):
        if not any(p.sign == k.sign and abs(p.t - k.t) <= dt and abs(p.x - k.x) <= dx for k in keep):
            keep.append(p)
    return sorted(keep, key=lambda p: (p.t, p.x, p.sign))


def _scales(slices):
    """Magnitude of every checked quantity over the traced curves (at least 1)."""
    out = {"phi": 1.0}
    for name in ("Exx", "Ext", "Exxx", "Extt", "disc"):
        vals = [np.max(np.abs(sl[2][name])) for sl in slices if sl[0].size]
        out[name] = max(1.0, float(max(vals))) if vals else 1.0
    return out


def _locate(model, which, box, resolution, state_resolution, tol):
    t0, t1, x0, x1 = box
    ts = slice_times(box, resolution)
    slices = map_ordered(lambda t: _scan_slice(model, t, x0, x1, state_resolution), ts)
    scales = _scales(slices)
    names = _CHECK[which]
    points = []
    # roots that already satisfy every equality (flat pieces of the curves)
    for t, (x, s, q) in zip(ts, slices):
        for k in range(x.size):
            res = {n: float(abs(q[n][k]) / scales[n]) for n in names}
            if max(res.values()) <= tol:
                points.append(DegeneratePoint(float(t), float(x[k]), int(s[k]), res))
    starts = _branch_candidates(ts, slices, _REFINE[which][1])
    unresolved = 0
    for st in starts:
        r = _refine(model, which, st, box, scales)
        if r is None:
            unresolved += 1
            continue
        res = _residuals(model, which, r[0], r[1], st[2], scales)
        if max(res.values()) <= tol:
            points.append(DegeneratePoint(r[0], r[1], int(st[2]), res))
    return _dedupe(points, box, tol), scales, len(starts), unresolved


def check_hypothesis(model, which, box=None, resolution=256, state_resolution=2001, tol=1e-8):
    """Locate the degenerate points of hypothesis ``which`` on ``box`` and
    give a verdict.

    ``resolution`` is the number of time slices. Residuals are the checked
    quantities divided by their magnitude over the traced curves; a point is
    reported when all are at most ``tol``.

    H4 and H5 require emptiness: "fails" when a point is located. H1-H3
    require finiteness, which a scan cannot refute: "holds" when no point is
    found or the count is unchanged at half the resolution, "inconclusive"
    when the count grows (the growth is reported). Any candidate whose
    refinement fails makes a would-be "holds" inconclusive.
    """
    if which not in HYPOTHESES:
        raise ValueError(f"unknown hypothesis {which!r}")
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    box = tuple(float(v) for v in (model.box if box is None else box))
    model.check_domain(np.array(box[:2]), np.array(box[2:]))
    points, scales, ncand, unresolved = _locate(model, which, box, resolution, state_resolution, tol)
    growth = [(resolution, len(points))]
    if which in FINITE:
        if points and resolution // 2 >= 8:
            coarse, *_ = _locate(model, which, box, resolution // 2, state_resolution, tol)
            growth.insert(0, (resolution // 2, len(coarse)))
            verdict = "holds" if len(coarse) >= len(points) else "inconclusive"
        else:
            verdict = "holds"
    else:
        verdict = "fails" if points else "holds"
    if verdict == "holds" and unresolved:
        verdict = "inconclusive"
    return HypothesisEntry(which, verdict, points, resolution, tol, scales, ncand, unresolved, growth)


def growth_counts(model, which, box=None, resolutions=(64, 128, 256, 512), state_resolution=2001, tol=1e-8):
    """Located-point counts over a ladder of slice resolutions."""
    box = tuple(float(v) for v in (model.box if box is None else box))
    return [(int(r), len(_locate(model, which, box, int(r), state_resolution, tol)[0])) for r in resolutions]


def estimate_gap(model, box=None, time_resolution=201, state_resolution=4001):
    """Smallest spacing between consecutive points of the stationary set
    {x : |E_x(t, x)| = 1} over sampled times.

    Times are ``time_resolution`` equispaced points including the box ends.
    Returns eps = +inf when no sampled time has two stationary points.
    """
    if time_resolution < 2 or state_resolution < 2:
        raise ValueError("resolutions must be >= 2")
    t0, t1, x0, x1 = (float(v) for v in (model.box if box is None else box))
    model.check_domain(np.array([t0, t1]), np.array([x0, x1]))
    ts = np.linspace(t0, t1, int(time_resolution))
    roots = map_ordered(lambda t: stationary_roots(model, t, x0, x1, state_resolution)[0], ts)
    best = GapEstimate(float("inf"), float("nan"), (float("nan"), float("nan")))
    for t, x in zip(ts, roots):
        if x.size < 2:
            continue
        d = np.diff(x)
        k = int(np.argmin(d))
        if d[k] < best.eps:
            best = GapEstimate(float(d[k]), float(t), (float(x[k]), float(x[k + 1])))
    return best


def check_hypotheses(model, box=None, resolution=256, which=HYPOTHESES, state_resolution=2001, tol=1e-8, gap=True):
    """Full report: every requested hypothesis plus the gap estimate."""
    box = tuple(float(v) for v in (model.box if box is None else box))
    entries = {w: check_hypothesis(model, w, box, resolution, state_resolution, tol) for w in which}
    g = estimate_gap(model, box, max(2, resolution), state_resolution) if gap else None
    return HypothesisReport(box, entries, g)
