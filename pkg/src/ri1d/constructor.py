"""Smooth energies for which a prescribed increasing driver is an energetic solution.

Given a non-decreasing, left-continuous piecewise-constant driver u with
levels v_0 < ... < v_n and jump times tau_1 < ... < tau_n, the sign field is

    g(t, x) = sum_k a_k(t) P(x - v_k) - sum_k b_k(t) P(v_k - x)

where P is an exp-based smoothstep of width ``width`` and the time weights
a_k, b_k are telescoping differences of a smoothstep in t of width
``sharpness``. Both weight families are non-negative and sum to one, so
|g| <= 1. At every t, g vanishes exactly on the segment [u(t-), u(t+)],
is positive above it and negative below it, and equals +1 / -1 beyond +M / -M.

The energy is E(t, x) = int_{x0}^{x} (g(t, y) - 1) dy. Because g is a finite
sum of separable terms, the integral is a combination of the antiderivative
of P, tabulated once, and every partial derivative has a closed form.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import BPoly

from .energy import EnergyModel, parse_floats, parse_kv
from .errors import BoundError, ConfigError, QuadratureError
from .jets import Jet3
from .trajectory import JumpRecord, Trajectory

_PSI_FLOOR = 1.0 / 700.0


# smoothstep


def _psi(y):
    """exp(-1/y) for y > 0 (zero below a floor that would underflow) and
    its first three derivatives, stacked on axis 0."""
    y = np.asarray(y, dtype=float)
    m = y > _PSI_FLOOR
    ym = np.where(m, y, 1.0)
    p = np.where(m, np.exp(-1.0 / ym), 0.0)
    return np.stack([p, p / ym**2, p * (1.0 - 2.0 * ym) / ym**4, p * (1.0 - 6.0 * ym + 6.0 * ym**2) / ym**6])


def _psi_jet(Y):
    return Y.compose(*_psi(Y.value))


def smoothstep_derivatives(y):
    """S(y) = psi(y) / (psi(y) + psi(1 - y)) and its first three derivatives.

    S is C-infinity, zero for y <= 0, one for y >= 1, and S(y) + S(1 - y) = 1.
    """
    y = np.asarray(y, dtype=float)
    Y = Jet3.variable_x(y)
    a = _psi_jet(Y)
    b = _psi_jet(1.0 - Y)
    s = a / (a + b)
    return np.stack([s.derivative(0, k) for k in range(4)])


def _psi0(y):
    m = y > _PSI_FLOOR
    return np.where(m, np.exp(-1.0 / np.where(m, y, 1.0)), 0.0)


def smoothstep(y):
    y = np.asarray(y, dtype=float)
    if y.ndim == 0:
        return smoothstep(y[None])[0]
    out = (y >= 1.0).astype(float)
    m = (y > 0.0) & (y < 1.0)
    if np.any(m):
        ym = y[m]
        a = _psi0(ym)
        out[m] = a / (a + _psi0(1.0 - ym))
    return out


@lru_cache(maxsize=1)
def _ramp_table(panels=2048):
    """Piecewise quintic Hermite interpolant of A(s) = int_0^s S on [0, 1]."""
    s = np.linspace(0.0, 1.0, panels + 1)
    estimates = []
    for order in (12, 20):
        nodes, weights = np.polynomial.legendre.leggauss(order)
        a, b = s[:-1, None], s[1:, None]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        estimates.append((smoothstep(mid + half * nodes) * weights).sum(axis=1) * half[:, 0])
    gap = np.max(np.abs(estimates[0] - estimates[1]))
    if not gap <= 1e-15:
        raise QuadratureError(f"panel quadrature disagreement {gap:.3e}")
    values = np.concatenate([[0.0], np.cumsum(estimates[1])])
    if abs(values[-1] - 0.5) > 1e-13:
        raise QuadratureError(f"ramp integral {values[-1]!r} differs from 1/2")
    values[-1] = 0.5
    d = smoothstep_derivatives(s)
    return BPoly.from_derivatives(s, np.stack([values, d[0], d[1]], axis=1))


def ramp(y, width):
    """R(y) = width * A(y / width): zero for y <= 0, y - width/2 for y >= width."""
    z = np.asarray(y, dtype=float) / width
    out = np.where(z >= 1.0, z - 0.5, 0.0)
    m = (z > 0.0) & (z < 1.0)
    if np.any(m):
        out = out.copy()
        out[m] = _ramp_table()(z[m])
    return width * out


# drivers


@dataclass(frozen=True)
class MonotoneDriver:
    """Non-decreasing, left-continuous step function on [0, T].

    ``u(t) = levels[k]`` with ``k = #{i : jump_times[i] < t}``.
    """

    levels: tuple
    jump_times: tuple
    T: float = 1.0
    kind: str = "staircase"
    level: int = 0

    def __post_init__(self):
        v = np.asarray(self.levels, float)
        tau = np.asarray(self.jump_times, float)
        if v.size != tau.size + 1:
            raise ValueError("need one more level than jump times")
        if np.any(np.diff(v) <= 0):
            raise ValueError("levels must be strictly increasing")
        if tau.size and (np.any(np.diff(tau) <= 0) or tau[0] <= 0 or tau[-1] >= self.T):
            raise ValueError("jump times must be strictly increasing inside (0, T)")

    @property
    def v(self):
        return np.asarray(self.levels, float)

    @property
    def tau(self):
        return np.asarray(self.jump_times, float)

    def __call__(self, t):
        return self.v[np.searchsorted(self.tau, t, side="left")]

    def right(self, t):
        return self.v[np.searchsorted(self.tau, t, side="right")]

    def left(self, t):
        return self(t)

    def min_plateau(self):
        edges = np.concatenate([[0.0], self.tau, [self.T]])
        return float(np.min(np.diff(edges)))

    def min_gap(self):
        return float(np.min(np.diff(self.v))) if len(self.levels) > 1 else np.inf

    def check_bound(self, M):
        v = self.v
        if not (1.0 - M <= v[0] + 1e-15 and v[-1] <= M - 1.0 + 1e-15):
            raise BoundError(f"driver range [{v[0]!r}, {v[-1]!r}] violates 1 - M <= u <= M - 1 for M = {M!r}")

    def trajectory(self, times):
        """Samples of u on ``times`` with exact jump records."""
        times = np.asarray(times, float)
        values = self(times)
        inside = (self.tau > times[0]) & (self.tau <= times[-1])
        jumps = [JumpRecord(float(t), float(a), float(b)) for t, a, b in zip(self.tau[inside], self.v[:-1][inside], self.v[1:][inside])]
        regimes = ["stick"] + ["stick" if a == b else "jump" for a, b in zip(values[:-1], values[1:])]
        return Trajectory(times, values, regimes, jumps)

    def to_record(self, prefix=""):
        if self.kind == "cantor":
            return {f"{prefix}type": "cantor", f"{prefix}level": str(self.level)}
        jumps = ",".join(f"{t!r}:{v!r}" for t, v in zip(self.jump_times, self.levels[1:]))
        return {
            f"{prefix}type": "staircase",
            f"{prefix}base": repr(float(self.levels[0])),
            f"{prefix}jumps": jumps,
            f"{prefix}T": repr(float(self.T)),
        }


def staircase_driver(base, jumps, T=1.0):
    """Driver starting at ``base`` with jumps given as ``[(time, new_level), ...]``."""
    jumps = sorted((float(t), float(v)) for t, v in jumps)
    levels = [float(base)]
    times = []
    for t, v in jumps:
        if v < levels[-1]:
            raise ValueError("drivers must be non-decreasing")
        if v > levels[-1]:
            times.append(t)
            levels.append(v)
    return MonotoneDriver(tuple(levels), tuple(times), float(T))


def constant_driver(value=0.0, T=1.0):
    return MonotoneDriver((float(value),), (), float(T))


def cantor_driver(level):
    """Level-k step approximation of the Cantor function on [0, 1].

    The 2^k - 1 removed open intervals up to generation k carry the values
    j / 2^k; each of the 2^k remaining closed intervals of length 3^-k holds
    one jump of size 2^-k at its midpoint.
    """
    if not 1 <= level <= 12:
        raise ValueError("level must satisfy 1 <= k <= 12")
    starts = np.zeros(1)
    for _ in range(level):
        third = (1.0 / 3.0) ** (_ + 1)
        starts = np.concatenate([starts, starts + 2.0 * third])
    starts.sort()
    mids = starts + 0.5 * 3.0**-level
    n = 2**level
    levels = tuple(np.arange(n + 1) / n)
    return MonotoneDriver(levels, tuple(mids), 1.0, "cantor", level)


def driver_from_record(kv, path=None, prefix=""):
    def get(key, default=None):
        if prefix + key in kv:
            return kv[prefix + key]
        if default is None:
            raise ConfigError(f"missing key {prefix + key!r}", path)
        return default, None

    kind, line = get("type")
    try:
        if kind == "cantor":
            value, line = get("level")
            return cantor_driver(int(value))
        if kind in ("staircase", "table"):
            key = "jumps" if kind == "staircase" else "table"
            value, line = get(key, "")
            pairs = []
            for item in value.split(","):
                if item.strip():
                    if ":" not in item:
                        raise ConfigError(f"expected time:level, got {item!r}", path, line)
                    a, b = item.split(":", 1)
                    pairs.append((float(a), float(b)))
            base, line = get("base", "0")
            Tval, line_t = get("T", "1")
            if kind == "table":
                # first sample gives the base level, later samples are jumps
                if not pairs:
                    raise ConfigError("table needs at least one time:level sample", path, line)
                pairs.sort()
                base = pairs[0][1]
                pairs = pairs[1:]
            return staircase_driver(float(base), pairs, float(Tval))
    except ValueError as exc:
        raise ConfigError(str(exc), path, line) from None
    raise ConfigError(f"unknown driver type {kind!r}", path, line)


def load_driver(path):
    with open(path, encoding="utf-8") as fh:
        return driver_from_record(parse_kv(fh.read(), path), path)


def parse_driver_spec(items, path="<args>"):
    """Driver from ``["cantor", "level=5"]``-style command-line tokens."""
    kv = {}
    for i, item in enumerate(items):
        if "=" in item:
            k, v = item.split("=", 1)
            kv[k.strip()] = (v.strip(), i + 1)
        elif "type" not in kv:
            kv["type"] = (item.strip(), i + 1)
        else:
            raise ConfigError(f"unexpected token {item!r}", path, i + 1)
    return driver_from_record(kv, path)


# sign field and energy


def default_sharpness(driver):
    """A quarter of the shortest plateau, capped at 0.01."""
    return min(0.25 * driver.min_plateau(), 0.01)


class SignField:
    """Smooth g(t, x) with g = 0 on [u(t-), u(t+)], sign(g) = sign(x - u) elsewhere."""

    def __init__(self, driver, M, sharpness=None, width=None):
        driver.check_bound(M)
        self.driver = driver
        self.M = float(M)
        self.sharpness = float(default_sharpness(driver) if sharpness is None else sharpness)
        self.width = float(0.01 if width is None else width)
        if not (self.sharpness > 0 and 0 < self.width <= 1.0):
            raise ValueError("need sharpness > 0 and 0 < width <= 1")

    # time weights

    def _weights(self, t):
        """Values of the above/below weights, shape (n+1, *t.shape)."""
        t = np.asarray(t, float)
        if t.ndim and t.size > 1:
            # scans share a few times across many states
            tu, inv = np.unique(t, return_inverse=True)
            if tu.size < t.size:
                a, b = self._weights(tu)
                shape = (-1,) + t.shape
                return a[:, inv.ravel()].reshape(shape), b[:, inv.ravel()].reshape(shape)
        tau = self.driver.tau.reshape((-1,) + (1,) * t.ndim)
        up = smoothstep((t - tau) / self.sharpness)
        dn = smoothstep((tau - t) / self.sharpness)
        one = np.ones((1,) + t.shape)
        zero = np.zeros((1,) + t.shape)
        ue = np.concatenate([one, up, zero])
        qe = np.concatenate([zero, dn, one])
        return qe[1:] - qe[:-1], ue[:-1] - ue[1:]

    def _weight_jets(self, t):
        t = np.asarray(t, float)
        tau = self.driver.tau.reshape((-1,) + (1,) * t.ndim)
        tj = Jet3.variable_t(np.broadcast_to(t, tau.shape[:1] + t.shape))
        s = self.sharpness
        yu = (tj - tau) / s
        yd = (tau - tj) / s
        du = smoothstep_derivatives(yu.value)
        dd = smoothstep_derivatives(yd.value)
        up = yu.compose(*du).coef
        dn = yd.compose(*dd).coef
        shape = (up.shape[0], 1) + t.shape
        one = np.zeros(shape)
        one[0] = 1.0
        zero = np.zeros(shape)
        ue = np.concatenate([one, up, zero], axis=1)
        qe = np.concatenate([zero, dn, one], axis=1)
        return Jet3(qe[:, 1:] - qe[:, :-1]), Jet3(ue[:, :-1] - ue[:, 1:])

    def _levels(self, ndim):
        return self.driver.v.reshape((-1,) + (1,) * ndim)

    def value(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        a, b = self._weights(t)
        v = self._levels(t.ndim)
        w = self.width
        return (a * smoothstep((x - v) / w)).sum(axis=0) - (b * smoothstep((v - x) / w)).sum(axis=0)

    __call__ = value

    def _step_jet(self, Y):
        d = smoothstep_derivatives(Y.value / self.width)
        scale = np.array([1.0, 1.0 / self.width, self.width**-2, self.width**-3])
        return Y.compose(*(d * scale.reshape((4,) + (1,) * Y.value.ndim)))

    def _ramp_jet(self, Y):
        d = smoothstep_derivatives(Y.value / self.width)
        w = self.width
        return Y.compose(ramp(Y.value, w), d[0], d[1] / w, d[2] / w**2)

    def jet(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        a, b = self._weight_jets(t)
        v = self._levels(t.ndim)
        X = Jet3.variable_x(np.broadcast_to(x, v.shape[:1] + x.shape))
        return (a * self._step_jet(X - v)).sum(0) - (b * self._step_jet(v - X)).sum(0)

    def to_record(self):
        rec = {f"driver.{k}": v for k, v in self.driver.to_record().items()}
        rec.update({"M": repr(self.M), "sharpness": repr(self.sharpness), "width": repr(self.width)})
        return rec


def build_sign_field(u, M, sharpness=None, width=None):
    """Sign field for the driver ``u``; raises BoundError unless 1 - M <= u <= M - 1."""
    return SignField(u, M, sharpness, width)


class ConstructedEnergy(EnergyModel):
    """E(t, x) = int_{x0}^{x} (g(t, y) - 1) dy + offset on [0, T] x [-M, M]."""

    family = "constructed"

    def __init__(self, field, x0, offset=0.0):
        super().__init__(field.driver.T, field.M, offset)
        self.field = field
        self.x0 = float(x0)

    def _pieces(self, t, x):
        a, b = self.field._weights(t)
        v = self.field._levels(np.ndim(t))
        w = self.field.width
        above = ramp(x - v, w) - ramp(self.x0 - v, w)
        below = ramp(v - x, w) - ramp(v - self.x0, w)
        return a, b, above, below

    def value(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        a, b, above, below = self._pieces(t, x)
        return (a * above).sum(0) + (b * below).sum(0) - (x - self.x0) + self.offset

    def dx(self, t, x):
        return self.field.value(t, x) - 1.0

    def jet(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        f = self.field
        a, b = f._weight_jets(t)
        v = f._levels(t.ndim)
        w = f.width
        X = Jet3.variable_x(np.broadcast_to(x, v.shape[:1] + x.shape))
        above = f._ramp_jet(X - v) - ramp(self.x0 - v, w)
        below = f._ramp_jet(v - X) - ramp(v - self.x0, w)
        Xs = Jet3.variable_x(x)
        return (a * above).sum(0) + (b * below).sum(0) - (Xs - self.x0) + self.offset

    def reference_value(self, t, x, nodes=20):
        """Composite Gauss-Legendre integral of g - 1 in y, independent of
        the ramp table. Panels break at every level and level +- width, and
        are at most a quarter width long wherever g is not constant."""
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        out = np.empty(t.shape)
        v = self.field.driver.v
        w = self.field.width
        breaks = np.concatenate([v - w, v, v + w])
        gx, gw = np.polynomial.legendre.leggauss(nodes)
        for idx in np.ndindex(t.shape):
            ti, xi = float(t[idx]), float(x[idx])
            lo, hi = sorted((self.x0, xi))
            if hi == lo:
                out[idx] = 0.0
                continue
            edges = np.unique(np.concatenate([[lo, hi], breaks[(breaks > lo) & (breaks < hi)]]))
            parts = []
            for a, b in zip(edges[:-1], edges[1:]):
                busy = np.any((v - w < b) & (v + w > a))
                parts.append(np.linspace(a, b, int(np.ceil((b - a) / (0.25 * w))) + 1) if busy else np.array([a, b]))
            e = np.unique(np.concatenate(parts))
            mid, half = 0.5 * (e[1:] + e[:-1]), 0.5 * (e[1:] - e[:-1])
            y = (mid[:, None] + half[:, None] * gx).ravel()
            vals = self.field.value(np.full_like(y, ti), y) - 1.0
            val = float(np.sum(vals.reshape(mid.size, nodes) * gw * half[:, None]))
            out[idx] = val if xi >= self.x0 else -val
        return out + self.offset

    def fd_scales(self):
        return self.field.sharpness, self.field.width

    def to_record(self):
        rec = {"family": self.family}
        rec.update(self.field.to_record())
        rec.update({"x0": repr(self.x0), "offset": repr(self.offset), "domain.T": repr(self.T), "domain.L": repr(self.L)})
        return rec


def build_energy(g, x0, offset=0.0):
    """Energy whose x-derivative is g - 1, normalized so that E(t, x0) = offset."""
    model = ConstructedEnergy(g, x0, offset)
    _ramp_table()
    return model


def constructed_from_record(kv, path=None):
    driver = driver_from_record(kv, path, prefix="driver.")

    def num(key, default=None):
        if key not in kv:
            if default is None:
                raise ConfigError(f"missing key {key!r}", path)
            return default
        value, line = kv[key]
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"bad value for {key!r}: {value!r}", path, line) from None

    M = num("M")
    field = build_sign_field(driver, M, num("sharpness", default_sharpness(driver)), num("width", 0.01))
    return build_energy(field, num("x0", float(driver.v[0])), num("offset", 0.0))


def construct(driver, M=None, sharpness=None, width=None):
    """Sign field and energy for ``driver`` with x0 = u(0)."""
    if M is None:
        M = max(2.0, 1.0 + max(abs(driver.v[0]), abs(driver.v[-1])))
    field = build_sign_field(driver, M, sharpness, width)
    return build_energy(field, float(driver(0.0)))


# verification


@dataclass
class EnergeticReport:
    left_continuous: bool
    dissipation: float
    dissipation_expected: float
    worst_margin: float
    worst_at: tuple
    uniqueness_margin: float
    uniqueness_at: tuple
    offset: float
    tol: float

    @property
    def dissipation_ok(self):
        return abs(self.dissipation - self.dissipation_expected) <= 1e-12 * max(1.0, self.dissipation_expected)

    @property
    def passed(self):
        return self.left_continuous and self.dissipation_ok and self.worst_margin >= -self.tol


def verify_energetic(model, u, x0, grid, probe=None, tol=1e-6, unique_gap=1e-3):
    """Check that u is an energetic solution for ``model`` started at x0.

    (i) left continuity holds by the driver's evaluation rule; (ii) the grid
    variation of u equals u(T) - u(0); (iii) the minimality margin
    E(t,z) + |z - x0| - E(t,u(t)) - (u(t) - x0) is >= -tol on the probe grid.
    The uniqueness margin is the smallest margin with |z - u(t)| > unique_gap,
    taken over grid times at least one sharpness away from every jump time
    (at a jump time the whole segment [u(t-), u(t+)] minimizes).
    """
    if abs(x0 - float(u(0.0))) > 1e-15:
        raise ValueError("x0 must equal u(0)")
    grid = np.asarray(grid, float)
    if probe is None:
        probe = np.linspace(-model.L, model.L, 10_001)
    probe = np.asarray(probe, float)
    model.check_domain(grid, np.zeros_like(grid))
    model.check_domain(np.zeros_like(probe), probe)
    uvals = u(grid)
    diss = float(np.sum(np.abs(np.diff(uvals))))
    expected = float(u(grid[-1]) - u(grid[0]))
    worst = (np.inf, (np.nan, np.nan))
    uniq = (np.inf, (np.nan, np.nan))
    sharp = getattr(getattr(model, "field", None), "sharpness", 0.0)
    for t, ut in zip(grid, uvals):
        base = model.value(t, ut) + (ut - x0)
        m = model.value(t, probe) + np.abs(probe - x0) - base
        k = int(np.argmin(m))
        if m[k] < worst[0]:
            worst = (float(m[k]), (float(t), float(probe[k])))
        if u.tau.size == 0 or np.min(np.abs(u.tau - t)) >= sharp:
            far = np.abs(probe - ut) > unique_gap
            if np.any(far):
                k = int(np.argmin(np.where(far, m, np.inf)))
                if m[k] < uniq[0]:
                    uniq = (float(m[k]), (float(t), float(probe[k])))
    left = True  # evaluation rule u(t) = levels[#{tau < t}] is left-continuous by construction
    return EnergeticReport(left, diss, expected, worst[0], worst[1], uniq[0], uniq[1], model.offset, tol)


@dataclass
class SignClauseReport:
    violations: int
    checked: int
    max_abs: float
    saturation_error: float

    @property
    def passed(self):
        return self.violations == 0 and self.max_abs <= 1.0 + 1e-15 and self.saturation_error <= 1e-10


def sign_clause_check(field, nt=200, nx=200, grid_tol=None):
    """sign(g) = sign(x - u(t)) where |x - u(t)| exceeds ``grid_tol``, |g| <= 1,
    and g(t, +-M) = +-1, on an nt x nx grid over [0, T] x [-M, M].

    Times within one sharpness of a jump are compared against the whole
    segment [u(t-), u(t+)]: g must vanish inside and keep its sign outside.
    """
    drv = field.driver
    t = np.linspace(0.0, drv.T, nt)
    x = np.linspace(-field.M, field.M, nx)
    if grid_tol is None:
        grid_tol = 1e-3
    tt, xx = np.meshgrid(t, x, indexing="ij")
    g = field.value(tt, xx)
    lo = drv.left(tt)
    hi = drv.right(tt)
    above = xx > hi + grid_tol
    below = xx < lo - grid_tol
    inside = (xx >= lo) & (xx <= hi) & (hi > lo)
    bad = (above & ~(g > 0)) | (below & ~(g < 0)) | (inside & (g != 0))
    checked = int(np.sum(above | below | inside))
    sat = max(float(np.max(np.abs(field.value(t, np.full_like(t, field.M)) - 1.0))), float(np.max(np.abs(field.value(t, np.full_like(t, -field.M)) + 1.0))))
    return SignClauseReport(int(np.sum(bad)), checked, float(np.max(np.abs(g))), sat)
