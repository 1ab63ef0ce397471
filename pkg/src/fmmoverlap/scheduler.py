"""
Task-graph execution of the FMM stages.

``build_dag`` expands the ten-stage dependency graph into per-box task
instances.  ``execute`` runs them on a thread pool pulling from a priority
ready-queue.  Sweep tasks outrank near-field tasks, so near-field work only
fills capacity the sweeps leave idle.  In sequential mode near-field tasks
are held back until every local-to-particle task has finished.
"""
from __future__ import annotations

import heapq
import threading
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .engine import FmmConfig, FmmState, StageReport, stage_tasks
from .quadtree import Quadtree

# stage-level edges, "start" and "end" are the sinks
STAGE_EDGES = frozenset({
    ("start", 1),
    (1, 2), (1, 3), (2, 4), (4, 5), (5, 6), (3, 6), (6, 7), (7, 8),
    (2, 9), (3, 9), (8, 10), (9, 10),
    (10, "end"),
})

SWEEP_STAGES = (4, 5, 6, 7)
NEAR_STAGE = 9


@dataclass(frozen=True)
class Task:
    id: int
    stage: int
    level: int | None
    key: int | None

    @property
    def tag(self) -> str:
        if self.key is None:
            return "-"
        return f"{self.level}:{self.key}"

    def __str__(self):
        return f"stage {self.stage} [{self.tag}]"


@dataclass(eq=False)
class TaskGraph:
    levels: int
    tasks: list
    deps: list
    stage_edges: frozenset = STAGE_EDGES
    dependents: list = field(init=False)

    def __post_init__(self):
        self.dependents = [[] for _ in self.tasks]
        for tid, ds in enumerate(self.deps):
            for d in ds:
                self.dependents[d].append(tid)

    def __len__(self):
        return len(self.tasks)

    def by_stage(self, stage: int) -> list[Task]:
        return [t for t in self.tasks if t.stage == stage]

    def stage_path_exists(self, src, dst) -> bool:
        succ: dict = {}
        for a, b in self.stage_edges:
            succ.setdefault(a, []).append(b)
        seen, todo = {src}, [src]
        while todo:
            node = todo.pop()
            if node == dst:
                return True
            for nxt in succ.get(node, ()):
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
        return False

    def descendants(self, roots) -> set[int]:
        seen, todo = set(), list(roots)
        while todo:
            for nxt in self.dependents[todo.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
        return seen

    def ancestors(self, roots) -> set[int]:
        seen, todo = set(), list(roots)
        while todo:
            for nxt in self.deps[todo.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
        return seen

    def topological_order(self) -> list[int]:
        """Kahn's algorithm; raises if the graph has a cycle."""
        remaining = [len(d) for d in self.deps]
        ready = deque(t for t, n in enumerate(remaining) if n == 0)
        order = []
        while ready:
            tid = ready.popleft()
            order.append(tid)
            for nxt in self.dependents[tid]:
                remaining[nxt] -= 1
                if remaining[nxt] == 0:
                    ready.append(nxt)
        if len(order) != len(self.tasks):
            raise ValueError("task graph has a cycle")
        return order


def build_dag(tree: Quadtree) -> TaskGraph:
    """Per-box task graph for a tree of ``tree.levels`` levels.

    One task per box per stage for stages 4 to 10, single tasks for stages
    1 to 3.  Near-field tasks depend only on binning and the lists.
    """
    L = tree.levels
    tasks: list[Task] = []
    index: dict[tuple, int] = {}
    for stage in range(1, 11):
        for level, key in stage_tasks(L, stage):
            index[(stage, level, key)] = len(tasks)
            tasks.append(Task(len(tasks), stage, level, key))
    deps: list[list[int]] = [[] for _ in tasks]

    def multipole_producer(level, key):
        return index[(4, L, key)] if level == L else index[(5, level, key)]

    def local_producer(level, key):
        # level-2 locals come straight out of m2l
        return index[(6, 2, key)] if level == 2 else index[(7, level, key)]

    t1, t2, t3 = index[(1, None, None)], index[(2, None, None)], index[(3, None, None)]
    deps[t2] = [t1]
    deps[t3] = [t1]
    for task in tasks:
        s, l, k = task.stage, task.level, task.key
        if s == 4:
            deps[task.id] = [t2]
        elif s == 5:
            deps[task.id] = [multipole_producer(l + 1, c) for c in tree.children(l, k)]
        elif s == 6:
            sources = tree.interactions(l)[k]
            deps[task.id] = [t3] + sorted({multipole_producer(l, int(c)) for c in sources})
        elif s == 7:
            deps[task.id] = [index[(6, l, k)], local_producer(l - 1, tree.parent(l, k))]
        elif s == 8:
            deps[task.id] = [local_producer(L, k)]
        elif s == 9:
            deps[task.id] = [t2, t3]
        elif s == 10:
            deps[task.id] = [index[(8, L, k)], index[(9, L, k)]]
    return TaskGraph(L, tasks, [tuple(d) for d in deps])


# -- traces -------------------------------------------------------------------

@dataclass(frozen=True)
class TraceRecord:
    task: int
    stage: int
    tag: str
    worker: int
    start_ns: int
    end_ns: int


@dataclass
class ExecutionTrace:
    records: list = field(default_factory=list)
    workers: int = 1
    mode: str = "sequential"

    def __len__(self):
        return len(self.records)

    def rows(self) -> list[str]:
        return [f"{r.stage},{r.tag},{r.worker},{r.start_ns},{r.end_ns}"
                for r in sorted(self.records, key=lambda r: (r.start_ns, r.worker))]

    def stage_intervals(self, stages) -> list[tuple[int, int]]:
        return [(r.start_ns, r.end_ns) for r in self.records if r.stage in stages]


@dataclass
class TraceVerdict:
    ok: bool
    violations: list
    idle_ns: dict
    near_in_sweep_ns: int

    def __bool__(self):
        return self.ok


def _window(records, stages):
    sel = [r for r in records if r.stage in stages]
    if not sel:
        return None
    return min(r.start_ns for r in sel), max(r.end_ns for r in sel)


def _overlap(a0, a1, b0, b1):
    return max(0, min(a1, b1) - max(a0, b0))


PHASES = {"setup": (1, 2, 3), "sweep": SWEEP_STAGES, "evaluation": (8, 9, 10)}


def validate_trace(graph: TaskGraph, trace: ExecutionTrace) -> TraceVerdict:
    """Check dependency order and worker exclusivity of a finished trace.

    Also reports idle time per worker within each phase window and how much
    near-field time fell inside the sweep window.
    """
    violations = []
    by_task: dict[int, TraceRecord] = {}
    for r in trace.records:
        if r.task in by_task:
            violations.append(f"task {graph.tasks[r.task]} recorded twice")
        by_task[r.task] = r
        if r.end_ns < r.start_ns:
            violations.append(f"task {graph.tasks[r.task]} ends before it starts")
    missing = [t for t in range(len(graph)) if t not in by_task]
    if missing:
        violations.append(f"{len(missing)} tasks never ran, first {graph.tasks[missing[0]]}")

    for tid, rec in by_task.items():
        for d in graph.deps[tid]:
            dep = by_task.get(d)
            if dep is not None and rec.start_ns < dep.end_ns:
                violations.append(
                    f"{graph.tasks[tid]} started at {rec.start_ns} before its "
                    f"dependency {graph.tasks[d]} ended at {dep.end_ns}")

    per_worker: dict[int, list[TraceRecord]] = {}
    for r in trace.records:
        per_worker.setdefault(r.worker, []).append(r)
    for w, recs in per_worker.items():
        recs.sort(key=lambda r: (r.start_ns, r.end_ns))
        for prev, cur in zip(recs, recs[1:]):
            if cur.start_ns < prev.end_ns:
                violations.append(
                    f"worker {w} ran {graph.tasks[cur.task]} starting at "
                    f"{cur.start_ns} while {graph.tasks[prev.task]} was still "
                    f"running until {prev.end_ns}")

    idle: dict[str, dict[int, int]] = {}
    for phase, stages in PHASES.items():
        win = _window(trace.records, stages)
        if win is None:
            continue
        span = win[1] - win[0]
        idle[phase] = {}
        for w in range(trace.workers):
            busy = sum(_overlap(r.start_ns, r.end_ns, *win)
                       for r in per_worker.get(w, ()))
            idle[phase][w] = span - busy

    sweep = _window(trace.records, SWEEP_STAGES)
    near_in_sweep = 0
    if sweep is not None:
        near_in_sweep = sum(_overlap(r.start_ns, r.end_ns, *sweep)
                            for r in trace.records if r.stage == NEAR_STAGE)
    return TraceVerdict(not violations, violations, idle, near_in_sweep)


# -- execution ----------------------------------------------------------------

class SchedulerError(RuntimeError):
    def __init__(self, message, trace: ExecutionTrace):
        super().__init__(message)
        self.trace = trace


def _priority(task: Task) -> tuple:
    # sweep and setup work first, coarse levels (the critical path) before fine
    near = 1 if task.stage == NEAR_STAGE else 0
    level = task.level if task.level is not None else -1
    return (near, level if task.stage in (6, 7) else 0, task.id)


class _Dispatcher:
    """Ready-queue bookkeeping shared by the threaded and simulated runs."""

    def __init__(self, graph: TaskGraph, mode: str, priority=_priority):
        self.graph = graph
        self.mode = mode
        self.priority = priority
        self.remaining = [len(d) for d in graph.deps]
        self.heap: list = []
        self.held: list[int] = []
        self.l2p_left = sum(1 for t in graph.tasks if t.stage == 8)
        self.done = 0
        for tid, n in enumerate(self.remaining):
            if n == 0:
                self._release(tid)

    def _release(self, tid):
        task = self.graph.tasks[tid]
        if self.mode == "sequential" and task.stage == NEAR_STAGE and self.l2p_left:
            self.held.append(tid)
            return
        heapq.heappush(self.heap, (self.priority(task), tid))

    def pop(self) -> int | None:
        if not self.heap:
            return None
        return heapq.heappop(self.heap)[1]

    def complete(self, tid: int):
        self.done += 1
        if self.graph.tasks[tid].stage == 8:
            self.l2p_left -= 1
            if self.l2p_left == 0:
                for h in self.held:
                    heapq.heappush(self.heap, (self.priority(self.graph.tasks[h]), h))
                self.held.clear()
        for nxt in self.graph.dependents[tid]:
            self.remaining[nxt] -= 1
            if self.remaining[nxt] == 0:
                self._release(nxt)

    @property
    def finished(self) -> bool:
        return self.done == len(self.graph)


@dataclass
class ExecutionResult:
    velocities: np.ndarray
    trace: ExecutionTrace
    report: StageReport
    state: FmmState


def execute(graph: TaskGraph, particles, config: FmmConfig | None = None, *,
            mode: str | None = None, workers: int | None = None) -> ExecutionResult:
    """Run every task of ``graph`` on a pool of ``workers`` threads.

    ``mode`` and ``workers`` override the corresponding ``config`` fields.
    Results do not depend on either: each task writes only its own box.
    """
    config = config or FmmConfig(levels=graph.levels)
    mode = mode or config.mode
    workers = workers or config.workers
    if mode not in ("sequential", "overlapped"):
        raise ValueError(f"unknown mode {mode!r}")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if config.levels != graph.levels:
        raise ValueError("graph and config disagree on the number of levels")
    state = FmmState(particles, config)
    report = StageReport(n_particles=len(state.particles), levels=config.levels,
                         order=config.order)
    trace = ExecutionTrace(workers=workers, mode=mode)
    dispatcher = _Dispatcher(graph, mode)
    cond = threading.Condition()
    failure: list[BaseException] = []

    def worker(wid: int):
        while True:
            with cond:
                while True:
                    if failure or dispatcher.finished:
                        cond.notify_all()
                        return
                    tid = dispatcher.pop()
                    if tid is not None:
                        break
                    cond.wait()
            task = graph.tasks[tid]
            t0 = time.monotonic_ns()
            try:
                count = state.run_task(task.stage, task.level, task.key)
            except BaseException as exc:  # noqa: BLE001 - reported with the trace
                with cond:
                    failure.append(exc)
                    cond.notify_all()
                return
            t1 = time.monotonic_ns()
            with cond:
                trace.records.append(
                    TraceRecord(tid, task.stage, task.tag, wid, t0, t1))
                report.add(task.stage, count, (t1 - t0) * 1e-9)
                dispatcher.complete(tid)
                cond.notify_all()

    threads = [threading.Thread(target=worker, args=(w,), daemon=True)
               for w in range(workers)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if failure:
        raise SchedulerError(f"task failed: {failure[0]!r}", trace) from failure[0]
    report.near_pairs = int(state.near_pairs.sum())
    return ExecutionResult(state.total.copy(), trace, report, state)


def simulate_schedule(graph: TaskGraph, workers: int, mode: str = "overlapped",
                      duration=None, rng: np.random.Generator | None = None
                      ) -> ExecutionTrace:
    """Discrete-event list schedule of ``graph`` without running any kernels.

    ``duration(task)`` gives integer task lengths (default 1000 ns).  With an
    ``rng`` the ready-queue ties are broken randomly, which yields a
    different valid schedule per draw.
    """
    if duration is None:
        duration = lambda task: 1000  # noqa: E731
    if rng is not None:
        salt = rng.random(len(graph))

        def priority(task):
            return (1 if task.stage == NEAR_STAGE else 0, salt[task.id], task.id)
    else:
        priority = _priority
    dispatcher = _Dispatcher(graph, mode, priority)
    trace = ExecutionTrace(workers=workers, mode=mode)
    now = 0
    free = list(range(workers))
    running: list[tuple[int, int, int]] = []  # (end, worker, task)
    starts: dict[int, int] = {}
    while not dispatcher.finished:
        while free:
            tid = dispatcher.pop()
            if tid is None:
                break
            w = free.pop(0)
            starts[tid] = now
            heapq.heappush(running, (now + int(duration(graph.tasks[tid])), w, tid))
        if not running:
            raise RuntimeError("schedule stalled with no running task")
        now, w, tid = heapq.heappop(running)
        finished = [(w, tid)]
        while running and running[0][0] == now:
            _, w2, t2 = heapq.heappop(running)
            finished.append((w2, t2))
        for w, tid in finished:
            task = graph.tasks[tid]
            trace.records.append(TraceRecord(tid, task.stage, task.tag, w,
                                             starts[tid], now))
            dispatcher.complete(tid)
            free.append(w)
        free.sort()
    return trace
