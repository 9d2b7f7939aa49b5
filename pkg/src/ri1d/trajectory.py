"""Sampled trajectories, jump records and their CSV form."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

REGIMES = ("stick", "slide", "jump", "incremental")
EVENT_KINDS = ("activation", "fold", "landing", "release", "jump", "tie")


@dataclass(frozen=True)
class JumpRecord:
    t: float
    left: float
    right: float

    @property
    def size(self):
        return abs(self.right - self.left)


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    x_before: float
    x_after: float


@dataclass
class Trajectory:
    """States ``values[k]`` at ``times[k]``.

    ``regimes[k]`` labels the step that ends at ``times[k]``; the first entry
    describes the initial state. Jump records carry exact one-sided limits
    when the producer knows them.
    """

    times: np.ndarray
    values: np.ndarray
    regimes: list = field(default_factory=list)
    jumps: list = field(default_factory=list)
    events: list = field(default_factory=list)
    ties: list = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if self.times.size and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not self.regimes:
            self.regimes = ["incremental"] * self.times.size
        if len(self.regimes) != self.times.size:
            raise ValueError("one regime label per sample is required")
        for j in self.jumps:
            if not j.right != j.left:
                raise ValueError("jump records need a nonzero size")

    def __len__(self):
        return self.times.size

    def jump_rows(self):
        """Map sample index -> jump record for jumps located in the step ending there."""
        rows = {}
        for j in self.jumps:
            k = int(np.searchsorted(self.times, j.t, side="left"))
            k = min(max(k, 1), self.times.size - 1)
            rows[k] = j
        return rows


def _num(v):
    return format(float(v), ".17g")


def write_trajectory_csv(traj, fh):
    rows = traj.jump_rows()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "x", "regime", "jump_left", "jump_right"])
    for k, (t, x) in enumerate(zip(traj.times, traj.values)):
        j = rows.get(k)
        w.writerow([_num(t), _num(x), traj.regimes[k], _num(j.left) if j else "", _num(j.right) if j else ""])


def write_events_csv(traj, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "kind", "x_before", "x_after"])
    for e in traj.events:
        w.writerow([_num(e.t), e.kind, _num(e.x_before), _num(e.x_after)])


def trajectory_to_csv(traj):
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    return buf.getvalue()


def read_trajectory_csv(fh, path=None):
    """Read the trajectory CSV. Jump times are placed at the midpoint of the
    step whose row carries jump fields."""
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ConfigError("empty trajectory file", path) from None
    if [h.strip() for h in header[:2]] != ["t", "x"]:
        raise ConfigError("header must start with t,x", path, 1)
    times, values, regimes, marks = [], [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        try:
            times.append(float(row[0]))
            values.append(float(row[1]))
        except (ValueError, IndexError):
            raise ConfigError(f"bad row {row!r}", path, lineno) from None
        regimes.append(row[2].strip() if len(row) > 2 and row[2].strip() else "incremental")
        if len(row) > 4 and row[3].strip() and row[4].strip():
            try:
                marks.append((len(times) - 1, float(row[3]), float(row[4])))
            except ValueError:
                raise ConfigError(f"bad jump fields {row!r}", path, lineno) from None
    times = np.asarray(times)
    if times.size and np.any(np.diff(times) <= 0):
        raise ConfigError("times must be strictly increasing", path)
    jumps = []
    for k, a, b in marks:
        if a != b:
            tj = times[k] if k == 0 else 0.5 * (times[k - 1] + times[k])
            jumps.append(JumpRecord(float(tj), a, b))
    return Trajectory(times, np.asarray(values), regimes, jumps)


def load_trajectory(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return read_trajectory_csv(fh, path)
