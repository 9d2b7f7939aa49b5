"""Energy functionals E(t, x) on a box [0, T] x [-L, L].

Every model exposes exact partial derivatives through total order 3 as a
:class:`~ri1d.jets.Jet3`, plus fast vectorized paths for the value and for
the state derivative, which dominate the cost of scans.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import ConfigError, DomainError, NonFiniteError
from .jets import INDEX, SLOT_NAMES, SLOTS, Jet3

ROOT_RTOL = 1e-12
# |E_x - s| at or below this counts as zero when isolating stationary points
ZERO_TOL = 16.0 * np.finfo(float).eps


class EnergyModel:
    """Common interface. Subclasses implement :meth:`jet` and :meth:`reference_value`."""

    family = "abstract"

    def __init__(self, T, L, offset=0.0):
        if not (T > 0 and L > 0):
            raise ValueError("domain needs T > 0 and L > 0")
        self.T = float(T)
        self.L = float(L)
        self.offset = float(offset)

    # domain

    @property
    def box(self):
        return (0.0, self.T, -self.L, self.L)

    def check_domain(self, t, x):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        st = 1e-12 * max(1.0, self.T)
        sx = 1e-12 * max(1.0, self.L)
        if np.any(~np.isfinite(t)) or np.any(~np.isfinite(x)):
            raise DomainError("non-finite evaluation point")
        if np.any(t < -st) or np.any(t > self.T + st):
            bad = t[(t < -st) | (t > self.T + st)].ravel()[0]
            raise DomainError(f"t = {bad!r} outside [0, {self.T!r}]")
        if np.any(np.abs(x) > self.L + sx):
            bad = x[np.abs(x) > self.L + sx].ravel()[0]
            raise DomainError(f"x = {bad!r} outside [-{self.L!r}, {self.L!r}]")
        return t, x

    # evaluation (no domain checks; callers validate)

    def jet(self, t, x):
        raise NotImplementedError

    def value(self, t, x):
        return self.jet(t, x).value

    def dx(self, t, x):
        return self.jet(t, x).derivative(0, 1)

    def reference_value(self, t, x):
        """Value of E by a route independent of the jet arithmetic."""
        raise NotImplementedError

    def fd_scales(self):
        """Length scales in t and x over which the model varies."""
        return 1.0, 1.0

    def to_record(self):
        raise NotImplementedError


def _poly_jet(coeffs, v):
    """Horner evaluation of an ascending coefficient list on a jet."""
    out = Jet3.constant(np.full(v.shape, coeffs[-1], dtype=float))
    for c in coeffs[-2::-1]:
        out = out * v + c
    return out


def _fmt(values):
    return ",".join(repr(float(v)) for v in values)


class SeparablePolynomial(EnergyModel):
    """E(t, x) = W(x) - l(t) x + offset with polynomial W and loading l."""

    family = "separable"

    def __init__(self, W, loading, T, L, offset=0.0):
        super().__init__(T, L, offset)
        self.W = np.trim_zeros(np.asarray(W, dtype=float), "b")
        self.loading = np.trim_zeros(np.asarray(loading, dtype=float), "b")
        if self.W.size == 0:
            self.W = np.zeros(1)
        if self.loading.size == 0:
            self.loading = np.zeros(1)
        self._dW = npoly.polyder(self.W)
        self._dl = npoly.polyder(self.loading)

    def jet(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        X = Jet3.variable_x(x)
        return _poly_jet(self.W, X) - _poly_jet(self.loading, Jet3.variable_t(t)) * X + self.offset

    def value(self, t, x):
        return npoly.polyval(x, self.W) - npoly.polyval(t, self.loading) * x + self.offset

    def dx(self, t, x):
        return npoly.polyval(x, self._dW) - npoly.polyval(t, self.loading) + 0.0 * np.asarray(x)

    def dt(self, t, x):
        return -npoly.polyval(t, self._dl) * x

    def reference_value(self, t, x):
        c = np.zeros((max(2, self.loading.size), max(2, self.W.size)))
        c[0, : self.W.size] += self.W
        c[: self.loading.size, 1] -= self.loading
        c[0, 0] += self.offset
        return npoly.polyval2d(t, x, c)

    def to_record(self):
        return {
            "family": self.family,
            "W.coeffs": _fmt(self.W),
            "loading.coeffs": _fmt(self.loading),
            "domain.T": repr(self.T),
            "domain.L": repr(self.L),
            "offset": repr(self.offset),
        }


class GeneralPolynomial(EnergyModel):
    """E(t, x) = sum C[i, j] t^i x^j + offset."""

    family = "polynomial"

    def __init__(self, coeffs, T, L, offset=0.0):
        super().__init__(T, L, offset)
        c = np.atleast_2d(np.asarray(coeffs, dtype=float))
        self.coeffs = c
        self._cx = npoly.polyder(c, axis=1) if c.shape[1] > 1 else np.zeros((c.shape[0], 1))
        self._ct = npoly.polyder(c, axis=0) if c.shape[0] > 1 else np.zeros((1, c.shape[1]))

    def jet(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        X = Jet3.variable_x(x)
        Tj = Jet3.variable_t(t)
        rows = [_poly_jet(row, X) for row in self.coeffs]
        out = rows[-1]
        for r in rows[-2::-1]:
            out = out * Tj + r
        return out + self.offset

    def value(self, t, x):
        return npoly.polyval2d(*np.broadcast_arrays(t, x), self.coeffs) + self.offset

    def dx(self, t, x):
        return npoly.polyval2d(*np.broadcast_arrays(t, x), self._cx)

    def dt(self, t, x):
        return npoly.polyval2d(*np.broadcast_arrays(t, x), self._ct)

    def reference_value(self, t, x):
        t = np.asarray(t, float)
        x = np.asarray(x, float)
        total = np.zeros(np.broadcast(t, x).shape)
        for i, row in enumerate(self.coeffs):
            for j, c in enumerate(row):
                if c != 0.0:
                    total = total + c * t**i * x**j
        return total + self.offset

    def to_record(self):
        return {
            "family": self.family,
            "E.coeffs": ";".join(_fmt(row) for row in self.coeffs),
            "domain.T": repr(self.T),
            "domain.L": repr(self.L),
            "offset": repr(self.offset),
        }


# built-in suite


def zero_model(T=2.0, L=3.0):
    return SeparablePolynomial([0.0], [0.0], T, L)


def quadratic_model(T=2.0, L=3.0):
    """x^2/2 - t x."""
    return SeparablePolynomial([0.0, 0.0, 0.5], [0.0, 1.0], T, L)


def double_well_model(T=2.0, L=2.0):
    """(x^2 - 1)^2 / 4 - t x."""
    return SeparablePolynomial([0.25, 0.0, -0.5, 0.0, 0.25], [0.0, 1.0], T, L)


def stiffening_model(T=2.0, L=3.0):
    """(1 + t/4) x^2 / 2 - t x: convex, with time-dependent stiffness."""
    c = np.zeros((2, 3))
    c[0, 2] = 0.5
    c[1, 2] = 0.125
    c[1, 1] = -1.0
    return GeneralPolynomial(c, T, L)


def crossing_model(T=2.0, L=3.0):
    """Energy whose x-derivative is -1 + (x - s)(x - 2s) with s = t - 1.

    The two slide lines x = s and x = 2s cross at (1, 0), where the state
    second derivative and the mixed derivative vanish together.
    """
    c = np.zeros((3, 4))
    c[0, 1], c[1, 1], c[2, 1] = 1.0, -4.0, 2.0
    c[0, 2], c[1, 2] = 1.5, -1.5
    c[0, 3] = 1.0 / 3.0
    return GeneralPolynomial(c, T, L)


def builtin_models():
    return {
        "zero": zero_model(),
        "quadratic": quadratic_model(),
        "double_well": double_well_model(),
        "stiffening": stiffening_model(),
    }


# operations


def eval_jet(model, t, x):
    """Value and all partials through order 3 of E at (t, x)."""
    t, x = model.check_domain(t, x)
    j = model.jet(t, x)
    if not j.isfinite():
        raise NonFiniteError(f"non-finite jet coefficient at t={t!r}, x={x!r}")
    return j


@dataclass
class DerivativeReport:
    max_rel_error: dict
    tol: float
    samples: int
    passed: bool = field(init=False)
    worst_slot: str = field(init=False)

    def __post_init__(self):
        self.worst_slot = max(self.max_rel_error, key=self.max_rel_error.get)
        self.passed = all(v <= self.tol for v in self.max_rel_error.values())

    @property
    def failed_slots(self):
        return [k for k, v in self.max_rel_error.items() if v > self.tol]


def _richardson(f, h):
    d1 = (f(h) - f(-h)) / (2.0 * h)
    d2 = (f(h / 2) - f(-h / 2)) / h
    return (4.0 * d2 - d1) / 3.0


def validate_derivatives(model, box=None, samples=100, tol=1e-6, seed=0, rel_step=1e-4):
    """Check every jet slot against Richardson central differences of the
    slot one order below, in t and in x separately.

    The value slot is compared with :meth:`EnergyModel.reference_value`.
    Mixed slots are checked against both stencils. The error for a slot is
    ``|jet - fd|`` divided by the largest of ``|fd|``, a magnitude floor and
    the magnitude of the lower slot divided by the model's feature scale in
    the stencil direction. The floor is one thousandth of the largest
    derivative of the same total order over the samples, after making all
    slots dimensionless with the feature scales. The floors keep the
    roundoff of the difference quotients out of the verdict.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    t0, t1, x0, x1 = model.box if box is None else box
    model.check_domain(np.array([t0, t1]), np.array([x0, x1]))
    st, sx = model.fd_scales()
    ht, hx = rel_step * st, rel_step * sx
    rng = np.random.default_rng(seed)
    t = rng.uniform(t0 + ht, t1 - ht, samples) if t1 - t0 > 2 * ht else np.full(samples, 0.5 * (t0 + t1))
    x = rng.uniform(x0 + hx, x1 - hx, samples) if x1 - x0 > 2 * hx else np.full(samples, 0.5 * (x0 + x1))
    d = eval_jet(model, t, x).derivatives()
    unit = np.array([st**i * sx**j for i, j in SLOTS])
    peak = np.max(np.abs(d), axis=1) * unit
    order = np.array([i + j for i, j in SLOTS])
    scale = np.array([1e-3 * peak[order == o].max() for o in order]) / unit
    errors = {}

    def rel(k, approx, floor=0.0):
        denom = np.maximum(np.maximum(np.abs(approx), scale[k]), np.maximum(floor, 1e-300))
        return float(np.max(np.abs(d[k] - approx) / denom))

    ref = model.reference_value(t, x)
    errors[SLOT_NAMES[0, 0]] = rel(0, ref, np.maximum(np.abs(ref), 1.0))
    for k, (i, j) in enumerate(SLOTS):
        if k == 0:
            continue
        worst = 0.0
        if i >= 1:
            lo = INDEX[i - 1, j]
            fd = _richardson(lambda h: model.jet(t + h, x).derivatives()[lo], ht)
            worst = max(worst, rel(k, fd, np.abs(d[lo]) / st))
        if j >= 1:
            lo = INDEX[i, j - 1]
            fd = _richardson(lambda h: model.jet(t, x + h).derivatives()[lo], hx)
            worst = max(worst, rel(k, fd, np.abs(d[lo]) / sx))
        errors[SLOT_NAMES[i, j]] = worst
    return DerivativeReport(errors, tol, samples)


def _edge(fun, inside, outside, width, zero_tol):
    """Vectorized bisection for the end of the region, around ``inside``,
    where ``fun`` keeps the sign it has at ``inside`` and exceeds ``zero_tol``."""
    a = np.array(inside, dtype=float)
    b = np.array(outside, dtype=float)
    if a.size == 0:
        return a
    ref = np.sign(fun(a))
    for _ in range(200):
        if np.all(np.abs(b - a) <= width):
            break
        mid = 0.5 * (a + b)
        fm = fun(mid)
        keep = (np.sign(fm) == ref) & (np.abs(fm) > zero_tol)
        a = np.where(keep, mid, a)
        b = np.where(keep, b, mid)
    return 0.5 * (a + b)


def sign_change_roots(fun, grid, width, zero_tol=0.0):
    """Roots of ``fun`` on ``grid``.

    Values with ``|fun| <= zero_tol`` count as zero. A root sits at the centre
    of every maximal zero region met by the grid, and of every region between
    adjacent samples of opposite sign; region ends are bisected to ``width``.
    A simple root is its own zero region, so it is returned as usual.
    """
    grid = np.asarray(grid, dtype=float)
    vals = fun(grid)
    zero = np.abs(vals) <= zero_tol
    s = np.where(zero, 0.0, np.sign(vals))
    n = grid.size
    roots = []
    if np.any(zero):
        edges = np.diff(np.concatenate([[0], zero.astype(int), [0]]))
        starts = np.flatnonzero(edges == 1)
        ends = np.flatnonzero(edges == -1) - 1
        left = grid[starts].copy()
        right = grid[ends].copy()
        m = starts > 0
        left[m] = _edge(fun, grid[starts[m] - 1], grid[starts[m]], width, zero_tol)
        m = ends < n - 1
        right[m] = _edge(fun, grid[ends[m] + 1], grid[ends[m]], width, zero_tol)
        roots.extend((0.5 * (left + right)).tolist())
    a = np.flatnonzero((s[:-1] * s[1:]) < 0)
    if a.size:
        left = _edge(fun, grid[a], grid[a + 1], width, zero_tol)
        right = _edge(fun, grid[a + 1], grid[a], width, zero_tol)
        roots.extend((0.5 * (left + right)).tolist())
    return np.sort(np.asarray(roots, dtype=float))


@dataclass(frozen=True)
class StationaryPoint:
    x: float
    sign: int


def stationary_roots(model, t, lo, hi, resolution):
    """Arrays (x, sign) of the roots of |dE/dx(t, .)| = 1 on [lo, hi]."""
    grid = np.linspace(lo, hi, int(resolution))
    width = ROOT_RTOL * abs(hi - lo)
    xs, ss = [], []
    for s in (1.0, -1.0):
        r = sign_change_roots(lambda z, s=s: model.dx(t, z) - s, grid, width, ZERO_TOL)
        xs.append(r)
        ss.append(np.full(r.size, int(s)))
    x = np.concatenate(xs)
    sg = np.concatenate(ss)
    order = np.argsort(x, kind="stable")
    return x[order], sg[order]


def stationary_set(model, t, x_range=None, resolution=2001):
    """Points of [lo, hi] where dE/dx(t, .) = +1 or -1, sorted, tagged with the sign."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    lo, hi = (-model.L, model.L) if x_range is None else x_range
    model.check_domain(np.array([t, t]), np.array([lo, hi]))
    x, s = stationary_roots(model, t, lo, hi, resolution)
    return [StationaryPoint(float(a), int(b)) for a, b in zip(x, s)]


# model description files


def parse_kv(text, path=None):
    """Parse ``key=value`` lines; ``#`` starts a comment. Returns {key: (value, line)}."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {line!r}", path, lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", path, lineno)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", path, lineno)
        out[key] = (value, lineno)
    return out


def parse_floats(value, path=None, line=None, sep=","):
    try:
        return [float(v) for v in value.split(sep) if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {value!r}: {exc}", path, line) from None


def _get(kv, key, path, default=None, cast=float):
    if key not in kv:
        if default is None:
            raise ConfigError(f"missing key {key!r}", path)
        return default
    value, line = kv[key]
    try:
        return cast(value)
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {value!r}", path, line) from None


def model_from_record(kv, path=None):
    """Build a model from parsed key/value pairs."""
    family, line = kv.get("family", (None, None))
    if family is None:
        raise ConfigError("missing key 'family'", path)
    T = _get(kv, "domain.T", path)
    L = _get(kv, "domain.L", path)
    offset = _get(kv, "offset", path, default=0.0)
    if family == "separable":
        wv, wl = kv.get("W.coeffs", ("0", None))
        lv, ll = kv.get("loading.coeffs", ("0", None))
        W = parse_floats(wv, path, wl)
        ld = parse_floats(lv, path, ll)
        return SeparablePolynomial(W, ld, T, L, offset)
    if family == "polynomial":
        if "E.coeffs" not in kv:
            raise ConfigError("missing key 'E.coeffs'", path)
        v, ln = kv["E.coeffs"]
        rows = [parse_floats(r, path, ln) for r in v.split(";")]
        width = max(len(r) for r in rows)
        c = np.zeros((len(rows), width))
        for i, r in enumerate(rows):
            c[i, : len(r)] = r
        return GeneralPolynomial(c, T, L, offset)
    if family == "constructed":
        from .constructor import constructed_from_record

        return constructed_from_record(kv, path)
    raise ConfigError(f"unknown family {family!r}", path, line)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return model_from_record(parse_kv(text, path), path)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None


def dump_model(model):
    return "".join(f"{k}={v}\n" for k, v in model.to_record().items())
