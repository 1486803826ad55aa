"""Discrete-event multicore scheduling engine (pure-Python reference path).

The engine owns the clock, the event heap, per-core occupancy and CPU
accounting.  Which task runs where is decided by a policy object through the
hooks in :class:`sfsim.policies.base.Policy`; the policy calls back into
:meth:`Engine.dispatch`, :meth:`Engine.preempt` and friends.

Time is integer microseconds.  Events at equal time are ordered by a creation
counter; request arrivals are always processed before any other event at the
same instant.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

from .workload import CPU, FunctionRequest, coalesce

if TYPE_CHECKING:
    from .policies.base import Policy

# scheduling classes
FILTER = "FILTER"
CFS_POOL = "CFS_POOL"
RT_FIFO = "RT_FIFO"
RT_RR = "RT_RR"
NORMAL = "NORMAL"

# task status
QUEUED = "queued"
RUNNING = "running"
BLOCKED = "blocked_io"
DONE = "done"

# event kinds
_END = 0  # end of the current running interval (segment boundary or slice)
_IODONE = 1
_TIMER = 2

# preemption reasons
SLICE_EXPIRED = "slice_expired"
HIGHER_PRIORITY = "higher_priority"
IO_BLOCK = "io_block"
POLICY_DEMAND = "policy_demand"


class SimulationFault(RuntimeError):
    """Internal consistency violation (policy or engine bug)."""


@dataclass(frozen=True)
class EngineConfig:
    switch_cost_us: int = 0
    count_io_switches: bool = True
    record_timeline: bool = False
    check_invariants: bool = True


class TaskState:
    __slots__ = (
        "id", "index", "req", "segs", "seg_index", "seg_remaining", "remaining_cpu",
        "sched_class", "vruntime", "slice_remaining", "status", "core",
        "n_switches", "n_io_blocks", "first_start", "completion", "cpu_used",
        "run_start", "dispatch_time", "epoch", "class_history", "enqueue_times",
        "initial_qdelay", "rq_core", "rq_stamp", "loc", "worker", "hint",
        "demoted_at", "boost_count", "boost_stamp",
    )

    def __init__(self, index: int, req: FunctionRequest):
        self.id = req.id
        self.index = index
        self.req = req
        self.segs = coalesce(req.segments)
        self.seg_index = 0
        self.seg_remaining = self.segs[0][1]
        self.remaining_cpu = req.total_cpu_us
        self.sched_class = None
        self.vruntime = 0
        self.slice_remaining = None  # None: unbounded
        self.status = QUEUED
        self.core = None
        self.n_switches = 0
        self.n_io_blocks = 0
        self.first_start = None
        self.completion = None
        self.cpu_used = 0
        self.run_start = 0
        self.dispatch_time = 0
        self.epoch = 0
        self.class_history: list[str] = []
        self.enqueue_times: list[int] = []
        self.initial_qdelay = None
        # policy scratch: CFS runqueue membership, SFS location/worker/hints
        self.rq_core = None
        self.rq_stamp = 0
        self.loc = None
        self.worker = None
        self.hint = None
        self.demoted_at = 0
        self.boost_count = 0
        self.boost_stamp = 0

    @property
    def in_cpu_segment(self) -> bool:
        return self.segs[self.seg_index][0] == CPU

    def set_class(self, cls: str) -> None:
        self.sched_class = cls
        if not self.class_history or self.class_history[-1] != cls:
            self.class_history.append(cls)

    def __repr__(self) -> str:
        return f"<Task {self.id} {self.status} {self.sched_class} seg={self.seg_index}>"


class CoreState:
    __slots__ = ("core_id", "running", "busy_us", "overhead_us", "idle_us")

    def __init__(self, core_id: int):
        self.core_id = core_id
        self.running: TaskState | None = None
        self.busy_us = 0
        self.overhead_us = 0
        self.idle_us = 0


@dataclass
class SimResult:
    policy: str
    cores: int
    records: list  # list[RequestRecord]
    core_busy_us: list[int]
    core_idle_us: list[int]
    core_overhead_us: list[int]
    total_switches: int
    total_io_switches: int
    makespan_us: int
    timeline: list[tuple[int, int, int, str]] = field(default_factory=list)
    slice_series: list[tuple[int, int]] = field(default_factory=list)
    fetch_delays: list[tuple[int, int, int]] = field(default_factory=list)
    backend: str = "python"


class Engine:
    def __init__(
        self,
        requests: Sequence[FunctionRequest],
        policy: Policy,
        cores: int,
        config: EngineConfig | None = None,
    ):
        if cores < 1:
            raise ValueError("cores must be >= 1")
        self.config = config or EngineConfig()
        self.requests = list(requests)
        for a, b in zip(self.requests, self.requests[1:]):
            if b.submit_time_us < a.submit_time_us:
                raise ValueError("requests must be sorted by submit time")
        self.policy = policy
        self.n_cores = len(self.requests) if policy.virtual_cores else cores
        self.cores = [CoreState(i) for i in range(self.n_cores)]
        self.tasks = [TaskState(i, r) for i, r in enumerate(self.requests)]
        self.now = 0
        self._events: list = []
        self._seq = 0
        self._next_arrival = 0
        self.n_idle = self.n_cores
        self.unfinished = len(self.tasks)
        self.timeline: list[tuple[int, int, int, str]] = []
        self.total_switches = 0
        self.total_io_switches = 0
        self._switch_cost = self.config.switch_cost_us
        self._record = self.config.record_timeline

    # -- event plumbing -------------------------------------------------

    def _push(self, time: int, kind: int, a, b) -> None:
        self._seq += 1
        heapq.heappush(self._events, (time, self._seq, kind, a, b))

    def schedule_timer(self, time: int, code: int, payload) -> None:
        """Policy-defined timer; delivered to ``policy.on_timer(code, payload)``."""
        if time < self.now:
            raise SimulationFault(f"timer scheduled in the past ({time} < {self.now})")
        self._push(time, _TIMER, code, payload)

    def first_idle_core(self) -> int | None:
        if self.n_idle:
            for c in self.cores:
                if c.running is None:
                    return c.core_id
        return None

    def pending_arrivals(self) -> bool:
        return self._next_arrival < len(self.tasks)

    def _log(self, core: int, task: TaskState, tag: str) -> None:
        if self._record:
            self.timeline.append((self.now, core, task.id, tag))

    # -- operations used by policies -----------------------------------

    def dispatch(self, task: TaskState, core_id: int, slice_us: int | None = None) -> None:
        core = self.cores[core_id]
        if core.running is not None:
            raise SimulationFault(f"core {core_id} busy with {core.running!r}")
        if task.status != QUEUED:
            raise SimulationFault(f"dispatching {task!r}")
        if slice_us is not None and slice_us <= 0:
            raise SimulationFault(f"non-positive slice {slice_us} for {task!r}")
        core.running = task
        self.n_idle -= 1
        task.status = RUNNING
        task.core = core_id
        task.dispatch_time = self.now
        task.run_start = self.now + self._switch_cost
        task.slice_remaining = slice_us
        if task.first_start is None:
            task.first_start = self.now
        self._log(core_id, task, "start")
        self._schedule_end(task)

    def _schedule_end(self, task: TaskState) -> None:
        task.epoch += 1
        if task.in_cpu_segment:
            run = task.seg_remaining
            if task.slice_remaining is not None and task.slice_remaining < run:
                run = task.slice_remaining
        else:
            run = 0
        self._push(task.run_start + run, _END, task, task.epoch)

    def _account(self, task: TaskState, delta: int) -> None:
        if delta > task.seg_remaining:
            raise SimulationFault(f"accounting {delta} beyond segment of {task!r}")
        task.seg_remaining -= delta
        task.remaining_cpu -= delta
        task.vruntime += delta
        task.cpu_used += delta
        if task.slice_remaining is not None:
            task.slice_remaining -= delta
        self.cores[task.core].busy_us += delta

    def sync(self, task: TaskState) -> None:
        """Charge a running task for the CPU it used up to now."""
        if task.status != RUNNING:
            raise SimulationFault(f"sync on {task!r}")
        if self.now > task.run_start:
            if task.in_cpu_segment:
                self._account(task, self.now - task.run_start)
            task.run_start = self.now

    def live_remaining_cpu(self, task: TaskState) -> int:
        if task.status == RUNNING and task.in_cpu_segment and self.now > task.run_start:
            return task.remaining_cpu - (self.now - task.run_start)
        return task.remaining_cpu

    def _release_core(self, task: TaskState) -> int:
        core_id = task.core
        core = self.cores[core_id]
        spent = self.now - task.dispatch_time
        core.overhead_us += min(self._switch_cost, spent)
        core.running = None
        self.n_idle += 1
        task.core = None
        task.epoch += 1
        return core_id

    def preempt(self, task: TaskState, reason: str = POLICY_DEMAND) -> int:
        """Take ``task`` off its core; returns the freed core id."""
        if task.status != RUNNING:
            raise SimulationFault(f"preempting non-running {task!r} ({reason})")
        self.sync(task)
        core_id = self._release_core(task)
        task.status = QUEUED
        task.n_switches += 1
        self.total_switches += 1
        self._log(core_id, task, "preempt")
        return core_id

    def extend(self, task: TaskState, slice_us: int | None) -> None:
        """Grant a fresh slice to the running task without switching."""
        if task.status != RUNNING:
            raise SimulationFault(f"extending non-running {task!r}")
        self.sync(task)
        task.slice_remaining = slice_us
        self._schedule_end(task)

    def set_slice(self, task: TaskState, slice_remaining: int) -> None:
        """Replace the remaining slice of a running task (may expire now)."""
        self.sync(task)
        task.slice_remaining = max(0, slice_remaining)
        self._schedule_end(task)

    # -- main loop ------------------------------------------------------

    def run(self) -> None:
        tasks = self.tasks
        policy = self.policy
        events = self._events
        n = len(tasks)
        check = self.config.check_invariants
        policy.bind(self)
        while True:
            if self._next_arrival < n:
                nxt = tasks[self._next_arrival]
                t_arr = nxt.req.submit_time_us
                if not events or t_arr <= events[0][0]:
                    self.now = t_arr
                    self._next_arrival += 1
                    policy.on_arrival(nxt)
                    if check:
                        self._check()
                    continue
            if not events:
                break
            time, _, kind, a, b = heapq.heappop(events)
            if time < self.now:
                raise SimulationFault("clock moved backwards")
            self.now = time
            if kind == _END:
                if a.epoch != b or a.status != RUNNING:
                    continue
                self._on_end(a)
            elif kind == _IODONE:
                self._on_io_done(a)
            else:
                policy.on_timer(a, b)
            if check:
                self._check()
        if self.unfinished:
            stuck = [t for t in tasks if t.status != DONE][:5]
            raise SimulationFault(f"{self.unfinished} tasks never finished, e.g. {stuck}")
        policy.finish()

    def _check(self) -> None:
        if self.n_idle and self.policy.idle_with_runnable():
            raise SimulationFault(f"work conservation violated at t={self.now}")

    def _on_end(self, task: TaskState) -> None:
        delta = self.now - task.run_start
        if task.in_cpu_segment:
            if delta:
                self._account(task, delta)
            task.run_start = self.now
            if task.seg_remaining > 0:
                self.policy.on_slice_expiry(task, task.core)
                return
            task.seg_index += 1
        if task.seg_index == len(task.segs):
            core_id = self._release_core(task)
            self._complete(task, core_id)
            self.policy.on_complete(task, core_id)
            return
        # next segment is IO: the task sleeps and vacates its core
        core_id = self._release_core(task)
        task.status = BLOCKED
        task.seg_remaining = task.segs[task.seg_index][1]
        task.n_io_blocks += 1
        self.total_io_switches += 1
        if self.config.count_io_switches:
            task.n_switches += 1
            self.total_switches += 1
        self._log(core_id, task, "block")
        self._push(self.now + task.seg_remaining, _IODONE, task, None)
        self.policy.on_block(task, core_id)

    def _on_io_done(self, task: TaskState) -> None:
        task.seg_index += 1
        if task.seg_index == len(task.segs):
            self._complete(task, None)
            self.policy.on_complete(task, None)
            return
        task.seg_remaining = task.segs[task.seg_index][1]
        task.status = QUEUED
        self.policy.on_wake(task)

    def _complete(self, task: TaskState, core_id: int | None) -> None:
        task.status = DONE
        task.completion = self.now
        self.unfinished -= 1
        if core_id is not None:
            self._log(core_id, task, "complete")

    def result(self) -> SimResult:
        from .metrics import RequestRecord

        makespan = max((t.completion for t in self.tasks), default=0)
        records = [
            RequestRecord(
                request_id=t.id,
                group_label=t.req.group_label,
                arrival_us=t.req.submit_time_us,
                first_start_us=t.first_start,
                completion_us=t.completion,
                service_us=t.req.service_us,
                cpu_us=t.cpu_used,
                n_context_switches=t.n_switches,
                n_io_blocks=t.n_io_blocks,
                initial_queuing_delay_us=(
                    t.initial_qdelay if t.initial_qdelay is not None
                    else t.first_start - t.req.submit_time_us
                ),
                dispatch_class_history=tuple(t.class_history),
            )
            for t in self.tasks
        ]
        for c in self.cores:
            c.idle_us = makespan - c.busy_us - c.overhead_us
        extra = self.policy.series()
        return SimResult(
            policy=self.policy.name,
            cores=self.n_cores,
            records=records,
            core_busy_us=[c.busy_us for c in self.cores],
            core_idle_us=[c.idle_us for c in self.cores],
            core_overhead_us=[c.overhead_us for c in self.cores],
            total_switches=self.total_switches,
            total_io_switches=self.total_io_switches,
            makespan_us=makespan,
            timeline=self.timeline,
            slice_series=extra.get("slice_series", []),
            fetch_delays=extra.get("fetch_delays", []),
            backend="python",
        )


def run(
    requests: Sequence[FunctionRequest],
    policy: Policy,
    cores: int,
    engine_config: EngineConfig | None = None,
) -> SimResult:
    """Simulate ``requests`` under ``policy`` on ``cores`` cores."""
    engine = Engine(requests, policy, cores, engine_config)
    engine.run()
    return engine.result()
