"""Reference policies: FIFO, RR, a CFS model, SRTF and IDEAL."""

from __future__ import annotations

import heapq
from collections import deque
from typing import Callable

from ..sim import (
    CFS_POOL, HIGHER_PRIORITY, RT_FIFO, RT_RR, SLICE_EXPIRED,
    Engine, SimulationFault, TaskState,
)
from .base import Policy, PolicyConfig


class FifoPolicy(Policy):
    """Single global arrival-order queue; tasks run until they finish or block."""

    name = "fifo"
    klass = RT_FIFO

    def __init__(self, config: PolicyConfig | None = None):
        self.config = config or PolicyConfig()
        self.queue: deque[TaskState] = deque()

    def _slice(self) -> int | None:
        return None

    def on_arrival(self, task):
        task.set_class(self.klass)
        core = self.engine.first_idle_core()
        if core is None:
            self.queue.append(task)
        else:
            self.engine.dispatch(task, core, self._slice())

    def on_core_free(self, core):
        if self.queue:
            self.engine.dispatch(self.queue.popleft(), core, self._slice())

    def on_slice_expiry(self, task, core):
        raise SimulationFault(f"{self.name}: unexpected slice expiry for {task!r}")

    def idle_with_runnable(self):
        return bool(self.queue)


class RrPolicy(FifoPolicy):
    """Round robin over one global queue with a fixed quantum."""

    name = "rr"
    klass = RT_RR

    def _slice(self):
        return self.config.rr_quantum_us

    def on_slice_expiry(self, task, core):
        if not self.queue:
            self.engine.extend(task, self.config.rr_quantum_us)
            return
        self.engine.preempt(task, SLICE_EXPIRED)
        self.queue.append(task)
        self.engine.dispatch(self.queue.popleft(), core, self._slice())


class CfsModel:
    """Per-core vruntime-ordered runqueues with wakeup placement and idle stealing.

    Runqueues are binary heaps keyed ``(vruntime, id)`` with lazy deletion:
    an entry is live only while its stamp matches the task's ``rq_stamp``.
    ``available(core)`` gates whether CFS may use a core (SFS reserves cores
    for FILTER tasks); ``extra_load(core)`` adds foreign load to placement.
    """

    def __init__(
        self,
        engine: Engine,
        config: PolicyConfig,
        available: Callable[[int], bool] | None = None,
        extra_load: Callable[[int], int] | None = None,
    ):
        n = engine.n_cores
        self.engine = engine
        self.latency = config.cfs_sched_latency_us
        self.min_gran = config.cfs_min_granularity_us
        self.rq: list[list] = [[] for _ in range(n)]
        self.count = [0] * n
        self.curr: list[TaskState | None] = [None] * n
        self.min_vruntime = [0] * n
        self.granted = [0] * n
        self.waiting = 0
        self._stamp = 0
        self.available = available or (lambda k: True)
        self.extra_load = extra_load or (lambda k: 0)

    def slice_for(self, nr: int) -> int:
        return max(self.latency // nr, self.min_gran)

    def load(self, k: int) -> int:
        return self.count[k] + (self.curr[k] is not None) + self.extra_load(k)

    def leftmost(self, k: int):
        heap = self.rq[k]
        while heap:
            entry = heap[0]
            t = entry[3]
            if t.rq_core == k and t.rq_stamp == entry[2]:
                return entry
            heapq.heappop(heap)
        return None

    def update_min_vruntime(self, k: int) -> None:
        cand = None
        c = self.curr[k]
        if c is not None:
            cand = c.vruntime
        lm = self.leftmost(k)
        if lm is not None and (cand is None or lm[0] < cand):
            cand = lm[0]
        if cand is not None and cand > self.min_vruntime[k]:
            self.min_vruntime[k] = cand

    def enqueue(self, task: TaskState, k: int) -> None:
        c = self.curr[k]
        if c is not None:
            self.engine.sync(c)
        self.update_min_vruntime(k)
        if task.vruntime < self.min_vruntime[k]:
            task.vruntime = self.min_vruntime[k]
        self._stamp += 1
        task.rq_core = k
        task.rq_stamp = self._stamp
        heapq.heappush(self.rq[k], (task.vruntime, task.id, self._stamp, task))
        self.count[k] += 1
        self.waiting += 1
        if c is not None:
            # more runnable tasks shrink the running task's slice
            total = self.slice_for(self.count[k] + 1)
            if total < self.granted[k]:
                used = self.granted[k] - c.slice_remaining
                self.granted[k] = total
                self.engine.set_slice(c, total - used)

    def dequeue(self, task: TaskState) -> None:
        k = task.rq_core
        if k is None:
            raise SimulationFault(f"{task!r} is not on a runqueue")
        task.rq_core = None
        self.count[k] -= 1
        self.waiting -= 1

    def pop_left(self, k: int) -> TaskState | None:
        entry = self.leftmost(k)
        if entry is None:
            return None
        heapq.heappop(self.rq[k])
        t = entry[3]
        t.rq_core = None
        self.count[k] -= 1
        self.waiting -= 1
        return t

    def choose_core(self) -> int:
        best, best_load = 0, None
        for k in range(self.engine.n_cores):
            ld = self.load(k)
            if best_load is None or ld < best_load:
                best, best_load = k, ld
        return best

    def place(self, task: TaskState, kick: bool = True) -> int:
        task.set_class(CFS_POOL)
        k = self.choose_core()
        self.enqueue(task, k)
        if kick:
            self.run_core(k)
        return k

    def steal(self, k: int) -> TaskState | None:
        src, src_load = None, -1
        for j in range(self.engine.n_cores):
            if j != k and self.count[j]:
                ld = self.load(j)
                if ld > src_load:
                    src, src_load = j, ld
        if src is None:
            return None
        return self.pop_left(src)

    def run_core(self, k: int) -> None:
        if self.engine.cores[k].running is not None or not self.available(k):
            return
        t = self.pop_left(k) if self.count[k] else self.steal(k)
        if t is not None:
            self._dispatch(t, k)

    def kick_idle(self) -> None:
        if not self.waiting:
            return
        for core in self.engine.cores:
            if core.running is None:
                self.run_core(core.core_id)
                if not self.waiting:
                    return

    def _dispatch(self, t: TaskState, k: int) -> None:
        # t counts as current so min_vruntime never overtakes it; only a task
        # stolen from a core with a lower floor gets raised
        self.curr[k] = t
        self.update_min_vruntime(k)
        if t.vruntime < self.min_vruntime[k]:
            t.vruntime = self.min_vruntime[k]
        s = self.slice_for(self.count[k] + 1)
        self.granted[k] = s
        self.engine.dispatch(t, k, s)

    def on_expiry(self, t: TaskState, k: int) -> None:
        self.update_min_vruntime(k)
        lm = self.leftmost(k)
        if lm is None or (t.vruntime, t.id) < (lm[0], lm[1]):
            s = self.slice_for(self.count[k] + 1)
            self.granted[k] = s
            self.engine.extend(t, s)
            return
        self.engine.preempt(t, SLICE_EXPIRED)
        self.curr[k] = None
        self.enqueue(t, k)
        self.run_core(k)

    def vacate(self, k: int) -> None:
        """The CFS task on ``k`` blocked or finished."""
        self.curr[k] = None
        self.run_core(k)

    def evict(self, k: int) -> TaskState:
        """Higher-priority work claims core ``k``; its CFS task is requeued there."""
        t = self.curr[k]
        self.engine.preempt(t, HIGHER_PRIORITY)
        self.curr[k] = None
        self.enqueue(t, k)
        return t


class CfsPolicy(Policy):
    name = "cfs"

    def __init__(self, config: PolicyConfig | None = None):
        self.config = config or PolicyConfig()

    def bind(self, engine):
        super().bind(engine)
        self.model = CfsModel(engine, self.config)

    def on_arrival(self, task):
        self.model.place(task)

    def on_slice_expiry(self, task, core):
        self.model.on_expiry(task, core)

    def on_core_free(self, core):
        self.model.vacate(core)

    def idle_with_runnable(self):
        return self.model.waiting > 0


class SrtfPolicy(Policy):
    """Preemptive shortest-remaining-CPU-time first over all cores."""

    name = "srtf"
    klass = "SRTF"

    def __init__(self, config: PolicyConfig | None = None):
        self.config = config or PolicyConfig()
        self.waiting: list = []

    def on_arrival(self, task):
        task.set_class(self.klass)
        eng = self.engine
        core = eng.first_idle_core()
        if core is not None:
            eng.dispatch(task, core)
            return
        victim, vkey = None, None
        for c in eng.cores:
            r = c.running
            key = (eng.live_remaining_cpu(r), r.id)
            if vkey is None or key > vkey:
                victim, vkey = r, key
        if (task.remaining_cpu, task.id) < vkey:
            core = eng.preempt(victim, HIGHER_PRIORITY)
            heapq.heappush(self.waiting, (victim.remaining_cpu, victim.id, victim))
            eng.dispatch(task, core)
        else:
            heapq.heappush(self.waiting, (task.remaining_cpu, task.id, task))

    def on_core_free(self, core):
        if self.waiting:
            self.engine.dispatch(heapq.heappop(self.waiting)[2], core)

    def on_slice_expiry(self, task, core):
        raise SimulationFault(f"srtf: unexpected slice expiry for {task!r}")

    def idle_with_runnable(self):
        return bool(self.waiting)


class IdealPolicy(Policy):
    """Infinite resources: each request gets a dedicated virtual core."""

    name = "ideal"
    virtual_cores = True

    def __init__(self, config: PolicyConfig | None = None):
        self.config = config or PolicyConfig()

    def on_arrival(self, task):
        task.set_class("IDEAL")
        self.engine.dispatch(task, task.index)

    def on_core_free(self, core):
        pass

    def on_slice_expiry(self, task, core):
        raise SimulationFault(f"ideal: unexpected slice expiry for {task!r}")
