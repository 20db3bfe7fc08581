"""Dispatch of SAA replications to p workers.

Scheme 1 sorts tasks by score (descending, ties to ascending index) and runs
them in synchronized batches of p. Scheme 2 keeps a shared pool in index order
and hands the next task to whichever worker becomes idle. Both are written
against a small executor protocol so the same policy code drives a real
process pool or a discrete-event simulation with given durations.
"""
from __future__ import annotations

import csv
import heapq
import json
import os
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

from pelletsc.scenario import supply_score

SCHEMES = ("serial", "scheme1", "scheme2")


@dataclass(frozen=True)
class TaskDescriptor:
    index: int
    score: float = 0.0
    cost_hint: float = 1.0
    seed: tuple = ()


@dataclass
class TaskRecord:
    index: int
    worker: int
    start: float
    end: float
    ok: bool = True
    error: str = ""


@dataclass
class SchedulerTrace:
    scheme: str
    workers: int
    records: list = field(default_factory=list)
    batches: list = field(default_factory=list)  # scheme1 only: task indices per batch

    @property
    def makespan(self) -> float:
        if not self.records:
            return 0.0
        return max(r.end for r in self.records) - min(r.start for r in self.records)

    def busy(self) -> list[float]:
        out = [0.0] * self.workers
        for r in self.records:
            out[r.worker] += r.end - r.start
        return out

    def idle(self) -> list[float]:
        span = self.makespan
        return [span - b for b in self.busy()]

    def validate(self, n_tasks: int | None = None) -> list[str]:
        errs = []
        idx = [r.index for r in self.records]
        if len(set(idx)) != len(idx):
            errs.append("task executed more than once")
        if n_tasks is not None and len(idx) != n_tasks:
            errs.append(f"{len(idx)} task records for {n_tasks} tasks")
        for w in range(self.workers):
            mine = sorted((r for r in self.records if r.worker == w), key=lambda r: r.start)
            for a, b in zip(mine, mine[1:]):
                if b.start < a.end - 1e-12:
                    errs.append(f"worker {w} runs tasks {a.index} and {b.index} concurrently")
        return errs

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "workers": self.workers, "makespan": self.makespan,
                "busy": self.busy(), "idle": self.idle(), "batches": self.batches,
                "tasks": [asdict(r) for r in sorted(self.records, key=lambda r: r.index)]}

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def write_gantt_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["task", "worker", "start_ms", "end_ms"])
            for r in sorted(self.records, key=lambda r: (r.start, r.worker)):
                wr.writerow([r.index, r.worker, f"{1000 * r.start:.3f}", f"{1000 * r.end:.3f}"])


def score_replication(scenarios) -> float:
    """Total observed supply over (b, i, t, omega)."""
    return supply_score(scenarios)


# -- executors ---------------------------------------------------------------

class SimulatedExecutor:
    """Discrete-event executor: tasks run in-process, time advances by ``duration(task)``.

    ``fn`` may be None for pure timing studies; results are then None.
    """

    def __init__(self, fn: Callable[[TaskDescriptor], Any] | None, duration: Callable[[TaskDescriptor], float]):
        self.fn = fn
        self.duration = duration
        self.now = 0.0
        self._events: list = []
        self._seq = 0

    def reset(self) -> None:
        self.now = 0.0
        self._events = []

    def _run(self, task):
        return None if self.fn is None else self.fn(task)

    def submit(self, worker: int, task: TaskDescriptor) -> None:
        try:
            res, err = self._run(task), ""
        except Exception as exc:  # recorded as a failed task
            res, err = None, f"{type(exc).__name__}: {exc}"
        d = self.duration(task)
        heapq.heappush(self._events, (self.now + d, worker, self._seq, task, self.now, res, err))
        self._seq += 1

    def wait_any(self):
        end, worker, _, task, start, res, err = heapq.heappop(self._events)
        self.now = max(self.now, end)
        return worker, task, res, err, start, end

    def close(self) -> None:
        pass


class InlineExecutor(SimulatedExecutor):
    """Runs tasks serially in-process and replays measured run times on the virtual clock."""

    def __init__(self, fn: Callable[[TaskDescriptor], Any]):
        super().__init__(fn, duration=lambda task: 0.0)

    def submit(self, worker: int, task: TaskDescriptor) -> None:
        t0 = time.perf_counter()
        try:
            res, err = self.fn(task), ""
        except Exception as exc:
            res, err = None, f"{type(exc).__name__}: {exc}"
        d = time.perf_counter() - t0
        heapq.heappush(self._events, (self.now + d, worker, self._seq, task, self.now, res, err))
        self._seq += 1


class ProcessExecutor:
    """Real process pool; ``fn`` must be picklable."""

    def __init__(self, fn: Callable[[TaskDescriptor], Any], workers: int):
        self.fn = fn
        self.pool = ProcessPoolExecutor(max_workers=workers)
        self.t0 = time.perf_counter()
        self.pending: dict = {}

    def reset(self) -> None:
        self.t0 = time.perf_counter()

    def submit(self, worker: int, task: TaskDescriptor) -> None:
        fut = self.pool.submit(self.fn, task)
        self.pending[fut] = (worker, task, time.perf_counter() - self.t0)

    def wait_any(self):
        done, _ = wait(list(self.pending), return_when=FIRST_COMPLETED)
        fut = min(done, key=lambda f: self.pending[f][0])
        worker, task, start = self.pending.pop(fut)
        end = time.perf_counter() - self.t0
        try:
            res, err = fut.result(), ""
        except Exception as exc:
            res, err = None, f"{type(exc).__name__}: {exc}"
        return worker, task, res, err, start, end

    def close(self) -> None:
        self.pool.shutdown()


# -- policies ----------------------------------------------------------------

def _collect(ex, trace, results, errors):
    worker, task, res, err, start, end = ex.wait_any()
    trace.records.append(TaskRecord(task.index, worker, start, end, not err, err))
    if err:
        errors[task.index] = err
    else:
        results[task.index] = res
    return worker


def _check(tasks, p):
    if p < 1:
        raise ValueError("need at least one worker")
    idx = [t.index for t in tasks]
    if len(set(idx)) != len(idx):
        raise ValueError("task indices must be unique")


def scheme1_order(tasks: Sequence[TaskDescriptor]) -> list[TaskDescriptor]:
    return sorted(tasks, key=lambda t: (-t.score, t.index))


def run_scheme1(tasks: Sequence[TaskDescriptor], p: int, executor):
    """Score-sorted synchronized batches of p tasks."""
    _check(tasks, p)
    ordered = scheme1_order(tasks)
    trace = SchedulerTrace("scheme1", p)
    results, errors = {}, {}
    for b in range(0, len(ordered), p):
        batch = ordered[b:b + p]
        trace.batches.append([t.index for t in batch])
        for w, task in enumerate(batch):
            executor.submit(w, task)
        for _ in batch:
            _collect(executor, trace, results, errors)
    return results, errors, trace


def run_scheme2(tasks: Sequence[TaskDescriptor], p: int, executor):
    """Shared pool in index order; an idle worker pulls the next task at once."""
    _check(tasks, p)
    pool = sorted(tasks, key=lambda t: t.index)
    trace = SchedulerTrace("scheme2", p)
    results, errors = {}, {}
    nxt = 0
    running = 0
    for w in range(min(p, len(pool))):
        executor.submit(w, pool[nxt])
        nxt += 1
        running += 1
    while running:
        w = _collect(executor, trace, results, errors)
        running -= 1
        if nxt < len(pool):
            executor.submit(w, pool[nxt])
            nxt += 1
            running += 1
    return results, errors, trace


def run_serial(tasks: Sequence[TaskDescriptor], executor):
    """One worker, ascending index."""
    _check(tasks, 1)
    trace = SchedulerTrace("serial", 1)
    results, errors = {}, {}
    for task in sorted(tasks, key=lambda t: t.index):
        executor.submit(0, task)
        _collect(executor, trace, results, errors)
    return results, errors, trace


def default_workers(n_tasks: int) -> int:
    return max(1, min(os.cpu_count() or 1, n_tasks))


def dispatch(tasks: Sequence[TaskDescriptor], fn: Callable, scheme: str = "serial",
             workers: int | None = None, executor: str = "inline"):
    """Run ``fn`` over ``tasks`` with the named scheme; returns (results, errors, trace)."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    p = 1 if scheme == "serial" else (workers or default_workers(len(tasks)))
    if executor == "process" and p > 1:
        ex = ProcessExecutor(fn, p)
    elif executor in ("inline", "process"):
        ex = InlineExecutor(fn)
    else:
        raise ValueError(f"unknown executor {executor!r}")
    try:
        if scheme == "serial":
            return run_serial(tasks, ex)
        if scheme == "scheme1":
            return run_scheme1(tasks, p, ex)
        return run_scheme2(tasks, p, ex)
    finally:
        ex.close()
