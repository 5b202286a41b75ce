"""Piecewise-constant multichannel control fields on uniform time grids.

Sample ``u[c, j]`` holds the value of channel ``c`` on ``[t_j, t_{j+1})``.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ControlError",
    "TimeGrid",
    "ControlField",
    "PenaltySchedule",
    "restrict",
    "concat",
    "weighted_l2_penalty",
    "write_csv",
    "read_csv",
    "to_bytes",
    "from_bytes",
    "CONTROL_FORMAT",
]

CONTROL_FORMAT = "ismoc-control/1"
_MAGIC = b"ISMU"
_HEADER = struct.Struct("<4sIIQdd")


class ControlError(ValueError):
    """Invalid grid, shape or concatenation request."""


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    steps: int

    def __post_init__(self):
        if not (np.isfinite(self.t_start) and np.isfinite(self.t_end)):
            raise ControlError("grid endpoints must be finite")
        if not self.t_end > self.t_start:
            raise ControlError(f"need t_end > t_start, got [{self.t_start}, {self.t_end}]")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ControlError(f"steps must be a positive integer, got {self.steps}")
        object.__setattr__(self, "t_start", float(self.t_start))
        object.__setattr__(self, "t_end", float(self.t_end))
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def tau(self) -> float:
        return (self.t_end - self.t_start) / self.steps

    @property
    def span(self) -> float:
        return self.t_end - self.t_start

    def time_at(self, j: int) -> float:
        """Grid point ``t_j``; the endpoints are returned exactly."""
        if j == 0:
            return self.t_start
        if j == self.steps:
            return self.t_end
        return self.t_start + self.span * (j / self.steps)

    @property
    def times(self) -> np.ndarray:
        t = self.t_start + self.span * (np.arange(self.steps + 1) / self.steps)
        t[-1] = self.t_end
        return t

    @property
    def midpoints(self) -> np.ndarray:
        return self.t_start + self.span * ((np.arange(self.steps) + 0.5) / self.steps)

    def sub(self, j0: int, j1: int) -> "TimeGrid":
        """Sub-grid covering ``[t_{j0}, t_{j1}]``."""
        if not 0 <= j0 < j1 <= self.steps:
            raise ControlError(f"invalid sub-grid indices ({j0}, {j1}) for {self.steps} steps")
        return TimeGrid(self.time_at(j0), self.time_at(j1), j1 - j0)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ControlField:
    grid: TimeGrid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[None, :]
        if s.ndim != 2 or s.shape[1] != self.grid.steps or s.shape[0] < 1:
            raise ControlError(
                f"samples of shape {s.shape} do not fit {self.grid.steps} steps"
            )
        if not np.all(np.isfinite(s)):
            raise ControlError("control samples must be finite")
        object.__setattr__(self, "samples", _frozen(s))

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def steps(self) -> int:
        return self.samples.shape[1]

    @classmethod
    def zeros(cls, grid: TimeGrid, channels: int = 1) -> "ControlField":
        return cls(grid, np.zeros((channels, grid.steps)))

    @classmethod
    def from_function(cls, grid: TimeGrid, fn, channels: int = 1) -> "ControlField":
        """Sample ``fn(t)`` at interval midpoints (``fn`` may return ``(C,)`` per t)."""
        vals = np.array([np.broadcast_to(fn(t), (channels,)) for t in grid.midpoints])
        return cls(grid, vals.T)

    def with_samples(self, samples) -> "ControlField":
        return ControlField(self.grid, samples)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ControlField):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.samples, other.samples)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PenaltySchedule:
    """Per-step penalty weights ``alpha(t_j)``."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=np.float64))
        if v.ndim != 1:
            raise ControlError("penalty schedule must be one-dimensional")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ControlError("penalty weights must be finite and nonnegative")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def constant(cls, alpha: float, steps: int) -> "PenaltySchedule":
        return cls(np.full(steps, float(alpha)))

    @classmethod
    def from_function(cls, grid: TimeGrid, fn) -> "PenaltySchedule":
        return cls(np.array([fn(t) for t in grid.midpoints], dtype=np.float64))

    def __len__(self) -> int:
        return self.values.shape[0]

    def scaled(self, factor: float) -> "PenaltySchedule":
        return PenaltySchedule(self.values * factor)

    def slice(self, j0: int, j1: int) -> "PenaltySchedule":
        return PenaltySchedule(self.values[j0:j1])

    def __eq__(self, other) -> bool:
        if not isinstance(other, PenaltySchedule):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None


def restrict(u: ControlField, n: int, decomp) -> ControlField:
    """Restriction of ``u`` to the ``n``-th subinterval of ``decomp``."""
    if u.grid != decomp.grid:
        raise ControlError("control grid does not match the decomposition grid")
    j0, j1 = decomp.index_range(n)
    return ControlField(u.grid.sub(j0, j1), u.samples[:, j0:j1])


def _close(a: float, b: float, scale: float) -> bool:
    return abs(a - b) <= 1e-12 * max(scale, abs(a), abs(b), 1e-300)


def concat(parts: Sequence[ControlField]) -> ControlField:
    """Concatenate abutting fields with equal step and channel count."""
    parts = list(parts)
    if not parts:
        raise ControlError("nothing to concatenate")
    if len(parts) == 1:
        return parts[0]
    first = parts[0]
    for left, right in zip(parts, parts[1:]):
        if right.channels != first.channels:
            raise ControlError("channel count mismatch")
        if not _close(left.grid.tau, right.grid.tau, left.grid.tau):
            raise ControlError(f"time step mismatch: {left.grid.tau} vs {right.grid.tau}")
        if not _close(left.grid.t_end, right.grid.t_start, left.grid.span):
            raise ControlError(
                f"parts do not abut: {left.grid.t_end} vs {right.grid.t_start}"
            )
    grid = TimeGrid(first.grid.t_start, parts[-1].grid.t_end, sum(p.steps for p in parts))
    return ControlField(grid, np.concatenate([p.samples for p in parts], axis=1))


def weighted_l2_penalty(u: ControlField, alpha: PenaltySchedule) -> float:
    """``(1/2) sum_c sum_j alpha_j tau u_{c,j}^2``."""
    if len(alpha) != u.steps:
        raise ControlError(f"penalty schedule has {len(alpha)} entries, field has {u.steps} steps")
    per_step = np.sum(u.samples**2, axis=0)
    return 0.5 * u.grid.tau * float(np.dot(alpha.values, per_step))


# -- file formats -----------------------------------------------------------


def write_csv(u: ControlField, path_or_buf, config: dict | None = None) -> None:
    """Write ``t,u_1,...,u_C`` rows at interval midpoints.

    Leading ``#`` lines carry the format version, the exact grid and an
    optional config echo.
    """
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        fh.write(f"# format: {CONTROL_FORMAT}\n")
        g = u.grid
        fh.write(f"# grid: {json.dumps({'t_start': g.t_start, 't_end': g.t_end, 'steps': g.steps})}\n")
        if config is not None:
            fh.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"u_{c + 1}" for c in range(u.channels)])
        for t, col in zip(g.midpoints, u.samples.T):
            writer.writerow([f"{t:.17g}"] + [f"{x:.17g}" for x in col])
    finally:
        if own:
            fh.close()


def read_csv(path_or_buf) -> ControlField:
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, newline="") if own else path_or_buf
    try:
        text = fh.read()
    finally:
        if own:
            fh.close()
    grid_meta = None
    body = []
    for line in text.splitlines():
        if line.startswith("# grid:"):
            grid_meta = json.loads(line[len("# grid:"):])
        elif line.startswith("#") or not line.strip():
            continue
        else:
            body.append(line)
    rows = list(csv.reader(io.StringIO("\n".join(body))))
    header, data = rows[0], np.array(rows[1:], dtype=np.float64)
    if header[0] != "t" or header[1:] != [f"u_{c + 1}" for c in range(len(header) - 1)]:
        raise ControlError(f"unexpected CSV header {header}")
    if data.ndim != 2 or data.shape[0] == 0:
        raise ControlError("control CSV has no samples")
    if grid_meta is not None:
        grid = TimeGrid(grid_meta["t_start"], grid_meta["t_end"], grid_meta["steps"])
    else:
        mids = data[:, 0]
        tau = (mids[-1] - mids[0]) / max(len(mids) - 1, 1) if len(mids) > 1 else 1.0
        grid = TimeGrid(mids[0] - tau / 2, mids[-1] + tau / 2, len(mids))
    return ControlField(grid, data[:, 1:].T)


def to_bytes(u: ControlField) -> bytes:
    """Binary form: little-endian header then ``C*J`` float64 samples."""
    g = u.grid
    head = _HEADER.pack(_MAGIC, 1, u.channels, g.steps, g.t_start, g.t_end)
    return head + u.samples.astype("<f8").tobytes()


def from_bytes(buf: bytes) -> ControlField:
    magic, version, channels, steps, t0, t1 = _HEADER.unpack_from(buf)
    if magic != _MAGIC or version != 1:
        raise ControlError("not a control-field buffer")
    data = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size)
    if data.size != channels * steps:
        raise ControlError("truncated control-field buffer")
    return ControlField(TimeGrid(t0, t1, steps), data.reshape(channels, steps))
