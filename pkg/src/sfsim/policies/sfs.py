"""Two-level FILTER + CFS scheduling.

Requests enter a global FIFO queue.  One worker per core fetches the head and
runs it at FILTER priority for at most the global slice ``S``; a request that
exhausts ``S`` is demoted to the CFS model, which shares the same cores at
lower priority.  ``S`` tracks the recent mean inter-arrival time times the
core count.  IO blocks are noticed by polling, stale queue entries bypass
FILTER during overload, and demoted work can optionally be boosted back.
"""

from __future__ import annotations

import heapq
from collections import deque

from ..sim import (
    BLOCKED, CFS_POOL, DONE, FILTER, POLICY_DEMAND, QUEUED, RUNNING, SLICE_EXPIRED,
    SimulationFault, TaskState,
)
from .base import Policy, PolicyConfig, SfsConfig
from .baseline import CfsModel

# worker states
FREE = 0
HOLD_RUN = 1  # FILTER task on the core and runnable
HOLD_BLOCKED = 2  # FILTER task asleep on IO, not yet noticed by the worker

# timer codes
T_POLL = 1
T_DEADLINE = 2
T_BOOST = 3

# task locations (every live request is in exactly one)
L_GQ = "gq"
L_FILTER = "filter"
L_CFS = "cfs"
L_IO_WAIT = "io_wait"  # blocked, will return to the global queue
L_DONE = "done"


class TimeSliceController:
    """Global slice ``S`` = floor(mean of the last ``N`` IATs) * cores."""

    def __init__(self, window: int, cores: int, bootstrap_us: int, fixed_us: int | None = None):
        self.window = window
        self.cores = cores
        self.fixed = fixed_us is not None
        self.current_us = fixed_us if self.fixed else bootstrap_us
        self.iat_samples: deque[int] = deque(maxlen=window)
        self.counter = 0
        self._last = None
        self.series: list[tuple[int, int]] = [(0, self.current_us)]

    def observe(self, now: int) -> bool:
        """Record an enqueue at ``now``; True if ``S`` was recomputed."""
        last, self._last = self._last, now
        if last is None:
            return False
        self.iat_samples.append(now - last)
        self.counter += 1
        if self.counter < self.window:
            return False
        self.counter = 0
        if self.fixed:
            return False
        self.current_us = self.recompute()
        self.series.append((now, self.current_us))
        return True

    def recompute(self) -> int:
        mean = sum(self.iat_samples) // len(self.iat_samples)
        return max(1, mean * self.cores)


class GlobalQueue:
    """FIFO of ``(task, enqueue_time, slice_hint)`` awaiting a FILTER worker."""

    def __init__(self):
        self._q: deque = deque()

    def push(self, task: TaskState, now: int, hint: int | None = None) -> None:
        if task.loc == L_GQ:
            raise SimulationFault(f"duplicate enqueue of {task!r}")
        task.loc = L_GQ
        task.enqueue_times.append(now)
        self._q.append((task, now, hint))

    def pop(self):
        return self._q.popleft()

    def __len__(self):
        return len(self._q)

    def __bool__(self):
        return bool(self._q)


class SfsPolicy(Policy):
    name = "sfs"

    def __init__(self, config: PolicyConfig | None = None, sfs: SfsConfig | None = None):
        self.config = config or PolicyConfig()
        self.sfs = sfs or SfsConfig()
        self.sfs.check()
        self.gq = GlobalQueue()
        self.fetch_delays: list[tuple[int, int, int]] = []

    def bind(self, engine):
        super().bind(engine)
        n = engine.n_cores
        cfg = self.sfs
        self.tsc = TimeSliceController(cfg.window_size, n, cfg.bootstrap_slice_us, cfg.fixed_slice_us)
        self.held: list[TaskState | None] = [None] * n
        self.wstate = [FREE] * n
        self.deadline = [0] * n
        self.wdispatch = [0] * n
        self.wepoch = [0] * n
        self.bypassing = [False] * n
        self.threshold_mult = cfg.overload_multiplier
        self.cfs = CfsModel(
            engine, self.config,
            available=lambda k: self.wstate[k] != HOLD_RUN,
            extra_load=lambda k: self.wstate[k] == HOLD_RUN,
        )
        self._demoted: list = []
        self._dstamp = 0
        if cfg.boost:
            engine.schedule_timer(cfg.boost_period_us, T_BOOST, None)

    @property
    def current_slice_us(self) -> int:
        return self.tsc.current_us

    # -- worker side ----------------------------------------------------

    def _release_worker(self, k: int) -> None:
        t = self.held[k]
        if t is not None:
            t.worker = None
        self.held[k] = None
        self.wstate[k] = FREE
        self.wepoch[k] += 1

    def _budget(self, t: TaskState, hint: int | None) -> int:
        if hint:
            return hint
        s = self.tsc.current_us
        if t.boost_count > 1:
            return max(1, int(self.sfs.boosted_slice_factor * s))
        return s

    def _dispatch_filter(self, k: int, t: TaskState, hint: int | None) -> None:
        if self.cfs.curr[k] is not None:
            self.cfs.evict(k)
        budget = self._budget(t, hint)
        t.set_class(FILTER)
        t.loc = L_FILTER
        t.worker = k
        self.held[k] = t
        self.wstate[k] = HOLD_RUN
        self.wdispatch[k] = self.engine.now
        self.wepoch[k] += 1
        self.engine.dispatch(t, k, budget)
        self.deadline[k] = t.run_start + budget

    def _to_cfs(self, t: TaskState, place: bool) -> None:
        t.set_class(CFS_POOL)
        t.loc = L_CFS
        t.demoted_at = self.engine.now
        t.hint = None
        if self.sfs.boost:
            self._dstamp += 1
            t.boost_stamp = self._dstamp
            heapq.heappush(self._demoted, (t.demoted_at, t.id, self._dstamp, t))
        if place:
            self.cfs.place(t, kick=False)

    def _fetch(self, k: int) -> bool:
        """Worker ``k`` is free: pull from the global queue until one FILTER dispatch."""
        gq = self.gq
        now = self.engine.now
        while gq:
            t, enq, hint = gq.pop()
            delay = now - enq
            self.fetch_delays.append((now, t.id, delay))
            if t.initial_qdelay is None:
                t.initial_qdelay = delay
            if self.sfs.hybrid and delay >= self.threshold_mult * self.tsc.current_us:
                self._set_bypass(k, True)
                self._to_cfs(t, place=True)
                continue
            self._set_bypass(k, False)
            self._dispatch_filter(k, t, hint)
            return True
        return False

    def _set_bypass(self, k: int, flag: bool) -> None:
        if self.sfs.global_bypass:
            self.bypassing = [flag] * len(self.bypassing)
        else:
            self.bypassing[k] = flag

    def _worker_free(self, k: int) -> None:
        if not self._fetch(k):
            self.cfs.run_core(k)

    def _fetch_any(self) -> None:
        eng = self.engine
        while self.gq:
            pick = None
            for k in range(eng.n_cores):
                if self.wstate[k] == FREE:
                    if eng.cores[k].running is None:
                        pick = k
                        break
                    if pick is None:
                        pick = k
            if pick is None:
                return
            self._fetch(pick)

    def _settle(self) -> None:
        # queued CFS work may have landed behind a FILTER task while a core idles
        if self.engine.n_idle and self.cfs.waiting:
            self.cfs.kick_idle()

    # -- engine hooks ---------------------------------------------------

    def on_arrival(self, task):
        self.tsc.observe(self.engine.now)
        self.gq.push(task, self.engine.now)
        self._fetch_any()
        self._settle()

    def on_slice_expiry(self, task, core):
        if task.sched_class == FILTER:
            self._demote_running(task, core)
        else:
            self.cfs.on_expiry(task, core)
        self._settle()

    def _demote_running(self, task: TaskState, k: int) -> None:
        if self.held[k] is not task:
            raise SimulationFault(f"FILTER expiry for {task!r} not held by worker {k}")
        self.engine.preempt(task, SLICE_EXPIRED)
        self._release_worker(k)
        dispatched = self._fetch(k)
        self._to_cfs(task, place=True)
        if not dispatched:
            self.cfs.run_core(k)

    def on_block(self, task, core):
        if task.sched_class == FILTER and self.held[core] is task:
            mode = self.sfs.io_mode
            if mode == "instant":
                self._detect(core)
            else:
                self.wstate[core] = HOLD_BLOCKED
                self.wepoch[core] += 1
                ep = self.wepoch[core]
                now = self.engine.now
                if mode == "poll":
                    p = self.sfs.poll_interval_us
                    since = now - self.wdispatch[core]
                    ticks = max(1, -(-since // p))
                    self.engine.schedule_timer(self.wdispatch[core] + ticks * p, T_POLL, (core, ep))
                self.engine.schedule_timer(max(now, self.deadline[core]), T_DEADLINE, (core, ep))
                self.cfs.run_core(core)
        else:
            self.cfs.vacate(core)
        self._settle()

    def _detect(self, k: int) -> None:
        """Worker ``k`` notices its FILTER task sleeping."""
        t = self.held[k]
        left = self.deadline[k] - self.engine.now
        self._release_worker(k)
        if left > 0:
            t.loc = L_IO_WAIT
            t.hint = left
        else:
            self._to_cfs(t, place=False)
        self._worker_free(k)

    def on_timer(self, code, payload):
        if code == T_BOOST:
            self._boost()
            if self.engine.unfinished:
                self.engine.schedule_timer(self.engine.now + self.sfs.boost_period_us, T_BOOST, None)
            self._settle()
            return
        k, ep = payload
        if ep != self.wepoch[k] or self.wstate[k] != HOLD_BLOCKED:
            return
        if code == T_POLL:
            self._detect(k)
        elif code == T_DEADLINE:
            t = self.held[k]
            self._release_worker(k)
            self._to_cfs(t, place=False)
            self._worker_free(k)
        self._settle()

    def on_wake(self, task):
        k = task.worker
        if k is not None and self.held[k] is task:
            # IO finished before the worker noticed: resume at FILTER priority
            left = self.deadline[k] - self.engine.now
            if left > 0:
                if self.cfs.curr[k] is not None:
                    self.cfs.evict(k)
                self.wstate[k] = HOLD_RUN
                self.wepoch[k] += 1
                self.engine.dispatch(task, k, left)
                self.deadline[k] = task.run_start + left
            else:
                self._release_worker(k)
                self._to_cfs(task, place=True)
                self._worker_free(k)
        elif task.loc == L_IO_WAIT:
            hint, task.hint = task.hint, None
            self.gq.push(task, self.engine.now, hint)
            self._fetch_any()
        elif task.loc == L_CFS:
            self.cfs.place(task)
        else:
            raise SimulationFault(f"sfs: unexpected wake of {task!r} at {task.loc}")
        self._settle()

    def on_complete(self, task, core):
        k = task.worker
        task.loc = L_DONE
        if k is not None and self.held[k] is task:
            self._release_worker(k)
            self._worker_free(k)
        elif core is not None:
            self.cfs.vacate(core)
        self._settle()

    def _boost(self) -> None:
        heap = self._demoted
        skipped = []
        victim = None
        while heap:
            entry = heapq.heappop(heap)
            t = entry[3]
            if t.loc != L_CFS or t.boost_stamp != entry[2] or t.status == DONE:
                continue
            if t.status == BLOCKED:
                skipped.append(entry)
                continue
            victim = t
            break
        for e in skipped:
            heapq.heappush(heap, e)
        if victim is None:
            return
        freed = None
        if victim.status == RUNNING:
            freed = victim.core
            self.engine.preempt(victim, POLICY_DEMAND)
            self.cfs.curr[freed] = None
        elif victim.status == QUEUED:
            self.cfs.dequeue(victim)
        victim.boost_count += 1
        self.gq.push(victim, self.engine.now)
        self._fetch_any()
        if freed is not None:
            self.cfs.run_core(freed)

    def idle_with_runnable(self):
        if self.cfs.waiting:
            return True
        if self.gq:
            eng = self.engine
            return any(
                self.wstate[k] == FREE and eng.cores[k].running is None
                for k in range(eng.n_cores)
            )
        return False

    def check_locations(self) -> None:
        """Every unfinished, arrived request sits in exactly one place."""
        eng = self.engine
        in_gq = {t.id for t, _, _ in self.gq._q}
        for t in eng.tasks[: eng._next_arrival]:
            places = [
                t.id in in_gq,
                t.loc == L_FILTER and t.worker is not None and self.held[t.worker] is t,
                t.loc == L_CFS,
                t.loc == L_IO_WAIT and t.status == BLOCKED,
                t.status == DONE,
            ]
            if sum(places) != 1:
                raise SimulationFault(f"{t!r} at {t.loc}: {places}")

    def series(self):
        return {"slice_series": list(self.tsc.series), "fetch_delays": list(self.fetch_delays)}
