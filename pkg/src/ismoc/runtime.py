"""Deterministic task execution, timing capture and speedup/efficiency metrics.

Tasks are serialized explicitly on both sides of the pool so that message
sizes and serialization time can be charged to "send" and "receive", even for
in-process execution modes. Results are always merged in task order.
"""

from __future__ import annotations

import csv
import io
import json
import os
import pickle
import threading
import time
import traceback
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

__all__ = [
    "MODES",
    "TaskError",
    "TaskTiming",
    "WorkerPool",
    "execute_iteration",
    "IterationRecord",
    "RunRecord",
    "TargetTime",
    "time_to_target",
    "EfficiencyReport",
    "efficiency_table",
    "format_percent",
    "RECORD_FORMAT",
    "EFFICIENCY_FORMAT",
]

MODES = ("sequential", "thread", "process")
RECORD_FORMAT = "ismoc-run/1"
EFFICIENCY_FORMAT = "ismoc-efficiency/1"
TIMING_KEYS = ("wall", "step_a", "dispatch", "merge")


class TaskError(RuntimeError):
    """A task raised inside a worker; carries the remote traceback."""

    def __init__(self, index: int, message: str, remote_traceback: str = ""):
        super().__init__(f"task {index} failed: {message}")
        self.index = index
        self.remote_traceback = remote_traceback


@dataclass
class TaskTiming:
    index: int
    worker: str
    compute: float
    send: float
    receive: float
    bytes_sent: int
    bytes_received: int


def _worker_id() -> str:
    return f"{os.getpid()}:{threading.get_ident()}"


def _run_blob(blob: bytes, delay: float):
    """Worker side: decode, compute, encode. Returns the result blob and timings."""
    t0 = time.perf_counter()
    try:
        fn, arg = pickle.loads(blob)
        t1 = time.perf_counter()
        if delay > 0:
            time.sleep(delay)
        result = fn(arg)
        t2 = time.perf_counter()
        out = pickle.dumps(("ok", result), protocol=pickle.HIGHEST_PROTOCOL)
    except Exception as exc:  # reported to the coordinator with the traceback
        t1 = t2 = time.perf_counter()
        out = pickle.dumps(("error", f"{type(exc).__name__}: {exc}", traceback.format_exc()))
    t3 = time.perf_counter()
    return out, _worker_id(), t1 - t0, t2 - t1, t3 - t2


class WorkerPool:
    """Fixed-size pool running pure tasks.

    Args:
        workers: pool size ``W >= 1``.
        mode: ``sequential`` (in the caller), ``thread`` or ``process``.
        delay: optional per-task artificial delay in seconds, either a
            number or a callable ``index -> seconds``; used to exercise load
            imbalance and queueing.
    """

    def __init__(self, workers: int = 1, mode: str = "sequential", delay=None):
        if mode not in MODES:
            raise ValueError(f"unknown execution mode {mode!r}; expected one of {MODES}")
        if int(workers) != workers or workers < 1:
            raise ValueError("workers must be a positive integer")
        self.workers = int(workers)
        self.mode = mode
        self._delay = delay
        self._executor = None
        if mode == "thread":
            self._executor = ThreadPoolExecutor(max_workers=self.workers)
        elif mode == "process":
            self._executor = ProcessPoolExecutor(max_workers=self.workers)

    def _delay_for(self, i: int) -> float:
        if self._delay is None:
            return 0.0
        if callable(self._delay):
            return float(self._delay(i))
        return float(self._delay)

    def map(self, fn: Callable, args: Sequence) -> tuple[list, list[TaskTiming], float]:
        """Run ``fn(arg)`` for every arg; returns results in input order,
        per-task timings and the wall-clock of the whole call."""
        start = time.perf_counter()
        blobs, send = [], []
        for a in args:
            t0 = time.perf_counter()
            blobs.append(pickle.dumps((fn, a), protocol=pickle.HIGHEST_PROTOCOL))
            send.append(time.perf_counter() - t0)
        if self._executor is None:
            raw = [_run_blob(b, self._delay_for(i)) for i, b in enumerate(blobs)]
        else:
            futures = [self._executor.submit(_run_blob, b, self._delay_for(i)) for i, b in enumerate(blobs)]
            raw = [f.result() for f in futures]
        results, timings = [], []
        for i, (out, wid, recv_w, comp, send_w) in enumerate(raw):
            t0 = time.perf_counter()
            status, *payload = pickle.loads(out)
            recv_c = time.perf_counter() - t0
            if status != "ok":
                raise TaskError(i, payload[0], payload[1])
            results.append(payload[0])
            timings.append(TaskTiming(
                index=i,
                worker=wid if self.mode != "sequential" else "main",
                compute=comp,
                send=send[i] + send_w,
                receive=recv_w + recv_c,
                bytes_sent=len(blobs[i]),
                bytes_received=len(out),
            ))
        return results, timings, time.perf_counter() - start

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def execute_iteration(fn: Callable, tasks: Sequence, workers: int = 1, mode: str = "sequential",
                      pool: WorkerPool | None = None, delay=None):
    """One round of independent tasks; results come back ordered by index."""
    if pool is not None:
        return pool.map(fn, tasks)
    with WorkerPool(workers, mode, delay) as p:
        return p.map(fn, tasks)


# -- run records ------------------------------------------------------------


@dataclass
class IterationRecord:
    """One outer iteration. ``wall`` is seconds since the start of the run."""

    k: int
    J: float
    err: float | None
    wall: float
    fidelity: float | None = None
    sub_values: list = field(default_factory=list)
    step_a: float = 0.0
    dispatch: float = 0.0
    merge: float = 0.0

    def to_json(self) -> dict:
        return asdict(self)


class RunRecord:
    """Per-iteration values plus per-worker phase accumulators."""

    def __init__(self, config: dict | None = None):
        self.config = dict(config or {})
        self.iterations: list[IterationRecord] = []
        self.phases: dict[str, dict] = {}
        self.events: list[dict] = []
        self.total_wall = 0.0

    def __len__(self) -> int:
        return len(self.iterations)

    def append(self, entry: IterationRecord):
        self.iterations.append(entry)

    def add_timings(self, timings: Sequence[TaskTiming], wall: float):
        """Charge one dispatch round to the workers; idle is the remainder of ``wall``."""
        busy: dict[str, float] = {}
        for t in timings:
            acc = self.phases.setdefault(t.worker, dict(compute=0.0, send=0.0, receive=0.0, idle=0.0,
                                                        tasks=0, bytes_sent=0, bytes_received=0))
            acc["compute"] += t.compute
            acc["send"] += t.send
            acc["receive"] += t.receive
            acc["tasks"] += 1
            acc["bytes_sent"] += t.bytes_sent
            acc["bytes_received"] += t.bytes_received
            busy[t.worker] = busy.get(t.worker, 0.0) + t.compute + t.send + t.receive
        for w, b in busy.items():
            self.phases[w]["idle"] += max(0.0, wall - b)

    @property
    def J(self) -> list[float]:
        return [it.J for it in self.iterations]

    @property
    def errors(self) -> list:
        return [it.err for it in self.iterations]

    def profile(self) -> dict:
        """Per-worker phase totals and shares."""
        out = {}
        for w, acc in sorted(self.phases.items()):
            total = acc["compute"] + acc["send"] + acc["receive"] + acc["idle"]
            shares = {p: (acc[p] / total if total > 0 else 0.0) for p in ("compute", "send", "receive", "idle")}
            out[w] = dict(acc, shares=shares)
        return out

    def log_lines(self, include_timings: bool = True) -> list[str]:
        """JSON-lines iteration log; timings sit under their own ``timing`` key.

        The first line is a header with the format string and config echo.
        """
        lines = [json.dumps({"format": RECORD_FORMAT, "config": self.config}, sort_keys=True)]
        for it in self.iterations:
            d = it.to_json()
            timing = {key: d.pop(key) for key in TIMING_KEYS}
            if include_timings:
                d["timing"] = timing
            lines.append(json.dumps(d, sort_keys=True))
        return lines

    def summary(self) -> dict:
        last = self.iterations[-1] if self.iterations else None
        return {
            "format": RECORD_FORMAT,
            "config": self.config,
            "iterations": len(self.iterations),
            "final_J": None if last is None else last.J,
            "final_err": None if last is None else last.err,
            "total_wall": self.total_wall,
            "events": self.events,
            "profile": self.profile(),
        }


@dataclass(frozen=True)
class TargetTime:
    reached: bool
    time: float | None = None
    iteration: int | None = None

    def __str__(self) -> str:
        return f"{self.time:.6g}s at iteration {self.iteration}" if self.reached else "not reached"


def time_to_target(record, eps: float, j_limit: float, times: Sequence[float] | None = None) -> TargetTime:
    """Wall-clock of the first record entry with ``j_limit - J < eps``.

    ``record`` may be a :class:`RunRecord` or a plain sequence of ``J``
    values, in which case ``times`` supplies the timestamps.
    """
    if isinstance(record, RunRecord):
        js = record.J
        ts = [it.wall for it in record.iterations] if times is None else list(times)
        ks = [it.k for it in record.iterations]
    else:
        js = list(record)
        ts = list(times) if times is not None else list(range(len(js)))
        ks = list(range(len(js)))
    if len(ts) != len(js):
        raise ValueError("need one timestamp per J value")
    for k, jv, t in zip(ks, js, ts):
        if j_limit - jv < eps:
            return TargetTime(True, float(t), k)
    return TargetTime(False)


def format_percent(eff: float) -> str:
    return f"{eff:.1f}%"


@dataclass
class EfficiencyReport:
    """Rows ``(N, t, S, Eff)`` with ``S = t(1)/t(N)`` and ``Eff = 100 S/N``."""

    eps: float | None
    rows: list
    config: dict = field(default_factory=dict)

    def row(self, n: int) -> tuple:
        for r in self.rows:
            if r[0] == n:
                return r
        raise KeyError(n)

    def to_csv(self, path_or_buf=None) -> str:
        buf = io.StringIO()
        buf.write(f"# format: {EFFICIENCY_FORMAT}\n")
        buf.write(f"# eps: {json.dumps(self.eps)}\n")
        buf.write(f"# config: {json.dumps(self.config, sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "t", "S", "Eff"])
        for n, t, s, e in self.rows:
            w.writerow([n] + ["" if x is None else format(x, ".17g") for x in (t, s, e)])
        text = buf.getvalue()
        if path_or_buf is not None:
            if hasattr(path_or_buf, "write"):
                path_or_buf.write(text)
            else:
                with open(path_or_buf, "w", encoding="utf-8") as fh:
                    fh.write(text)
        return text

    def to_table(self) -> str:
        lines = [f"{'N':>4} {'t(s)':>12} {'S':>8} {'Eff':>8}"]
        for n, t, s, e in self.rows:
            if t is None:
                lines.append(f"{n:>4} {'not reached':>12} {'-':>8} {'-':>8}")
            else:
                lines.append(f"{n:>4} {t:>12.4g} {s:>8.3f} {format_percent(e):>8}")
        return "\n".join(lines)


def efficiency_table(records: Mapping, eps: float | None = None, j_limit: float | None = None,
                     config: dict | None = None) -> EfficiencyReport:
    """Speedup and efficiency over ``N``.

    ``records`` maps ``N`` to either a time ``t(eps, N)`` in seconds, a
    :class:`TargetTime`, or a :class:`RunRecord` (then ``eps`` and ``j_limit``
    are required).
    """
    if 1 not in records:
        raise ValueError("efficiency table needs the N=1 baseline")
    times = {}
    for n, rec in records.items():
        if isinstance(rec, RunRecord):
            if eps is None or j_limit is None:
                raise ValueError("eps and j_limit are required to derive times from run records")
            rec = time_to_target(rec, eps, j_limit)
        if isinstance(rec, TargetTime):
            rec = rec.time if rec.reached else None
        times[int(n)] = None if rec is None else float(rec)
    t1 = times[1]
    if t1 is None:
        raise ValueError("the N=1 baseline never reached the target")
    rows = []
    for n in sorted(times):
        t = times[n]
        if t is None:
            rows.append((n, None, None, None))
            continue
        s = t1 / t
        rows.append((n, t, s, 100.0 * s / n))
    return EfficiencyReport(eps, rows, dict(config or {}))
