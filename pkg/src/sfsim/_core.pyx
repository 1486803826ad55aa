# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled simulation kernel.

Same engine and policy semantics as ``sfsim.sim`` + ``sfsim.policies``,
with C++ containers on the hot path.  Every branch mirrors its Python
counterpart so that both backends produce identical results; the test suite
checks this on random instances.
"""

from libc.stdint cimport int64_t
from libcpp cimport bool as cbool
from libcpp.deque cimport deque
from libcpp.pair cimport pair
from libcpp.queue cimport priority_queue
from libcpp.set cimport set as cset
from libcpp.vector cimport vector
from cython.operator cimport dereference as deref, preincrement as inc

from .sim import SimulationFault
from .workload import coalesce

cdef extern from "_core_support.h":
    cdef cppclass SimEvent:
        int64_t t
        int64_t seq
        int kind
        int a
        int64_t b
        int64_t c
    cdef cppclass GqEntry:
        int task
        int64_t enq
        int64_t hint

ctypedef pair[int64_t, int] Key

cdef int64_t INF = (<int64_t>1) << 62

# policies
cdef enum:
    P_FIFO = 0
    P_RR = 1
    P_CFS = 2
    P_SRTF = 3
    P_IDEAL = 4
    P_SFS = 5

# classes
cdef enum:
    C_NONE = 0
    C_FILTER = 1
    C_CFS = 2
    C_FIFO = 3
    C_RR = 4
    C_SRTF = 5
    C_IDEAL = 6

CLASS_NAMES = (None, "FILTER", "CFS_POOL", "RT_FIFO", "RT_RR", "SRTF", "IDEAL")
POLICY_CODES = {"fifo": P_FIFO, "rr": P_RR, "cfs": P_CFS, "srtf": P_SRTF, "ideal": P_IDEAL, "sfs": P_SFS}

# status
cdef enum:
    S_QUEUED = 0
    S_RUNNING = 1
    S_BLOCKED = 2
    S_DONE = 3

# events
cdef enum:
    E_END = 0
    E_IODONE = 1
    E_TIMER = 2

# SFS worker states, timers, locations
cdef enum:
    W_FREE = 0
    W_RUN = 1
    W_BLOCKED = 2
cdef enum:
    T_POLL = 1
    T_DEADLINE = 2
    T_BOOST = 3
cdef enum:
    L_NONE = 0
    L_GQ = 1
    L_FILTER = 2
    L_CFS = 3
    L_IO_WAIT = 4
    L_DONE = 5
cdef enum:
    IO_POLL = 0
    IO_INSTANT = 1
    IO_OBLIVIOUS = 2


cdef class Kernel:
    cdef int policy
    cdef int n
    cdef int ncores
    cdef int64_t now
    cdef int64_t seq
    cdef int next_arrival
    cdef int n_idle
    cdef int unfinished
    cdef int64_t total_switches
    cdef int64_t total_io_switches
    cdef int64_t switch_cost
    cdef cbool count_io
    cdef cbool record
    cdef cbool check
    cdef public list timeline
    cdef priority_queue[SimEvent] events

    # requests
    cdef vector[int64_t] submit
    cdef vector[int] seg_off
    cdef vector[int] seg_cnt
    cdef vector[int] seg_kind  # 0 cpu, 1 io
    cdef vector[int64_t] seg_len
    cdef vector[int64_t] total_cpu

    # task state
    cdef vector[int] seg_index
    cdef vector[int64_t] seg_remaining
    cdef vector[int64_t] remaining_cpu
    cdef vector[int] klass
    cdef vector[int64_t] vruntime
    cdef vector[int64_t] slice_rem
    cdef vector[int] status
    cdef vector[int] tcore
    cdef vector[int64_t] n_switches
    cdef vector[int64_t] n_io_blocks
    cdef vector[int64_t] first_start
    cdef vector[int64_t] completion
    cdef vector[int64_t] cpu_used
    cdef vector[int64_t] run_start
    cdef vector[int64_t] dispatch_time
    cdef vector[int64_t] epoch
    cdef vector[int64_t] initial_qdelay
    cdef vector[vector[int]] history
    cdef vector[int] rq_core
    cdef vector[int] loc
    cdef vector[int] worker
    cdef vector[int64_t] hint
    cdef vector[int64_t] demoted_at
    cdef vector[int] boost_count
    cdef vector[int64_t] ids
    cdef vector[int] rank  # position of the task's id in id order
    cdef vector[int] by_rank

    # cores
    cdef vector[int] running
    cdef vector[int64_t] busy
    cdef vector[int64_t] overhead

    # policy config
    cdef int64_t latency
    cdef int64_t min_gran
    cdef int64_t quantum

    # fifo / rr / srtf
    cdef deque[int] fq
    cdef cset[Key] srtf_wait

    # cfs model
    cdef vector[cset[Key]] rq
    cdef vector[int] rq_count
    cdef vector[int] curr
    cdef vector[int64_t] minv
    cdef vector[int64_t] granted
    cdef int waiting

    # sfs
    cdef int64_t window
    cdef int64_t bootstrap
    cdef cbool fixed
    cdef int64_t S
    cdef double omult
    cdef cbool hybrid
    cdef cbool global_bypass
    cdef int io_mode
    cdef int64_t poll
    cdef cbool boost
    cdef int64_t boost_period
    cdef double boost_factor
    cdef deque[GqEntry] gq
    cdef deque[int64_t] iat
    cdef int64_t iat_sum
    cdef int64_t tsc_counter
    cdef int64_t tsc_last
    cdef vector[int64_t] s_time
    cdef vector[int64_t] s_value
    cdef vector[int64_t] fd_time
    cdef vector[int] fd_task
    cdef vector[int64_t] fd_delay
    cdef vector[int] held
    cdef vector[int] wstate
    cdef vector[int64_t] deadline
    cdef vector[int64_t] wdispatch
    cdef vector[int64_t] wepoch
    cdef vector[cbool] bypassing
    cdef cset[Key] demoted

    def __init__(self, requests, spec, int cores, engine_config):
        cdef int i, j, is_io
        if cores < 1:
            raise ValueError("cores must be >= 1")
        self.policy = POLICY_CODES[spec.name]
        self.n = len(requests)
        self.ncores = self.n if self.policy == P_IDEAL else cores
        self.switch_cost = engine_config.switch_cost_us
        self.count_io = engine_config.count_io_switches
        self.record = engine_config.record_timeline
        self.check = engine_config.check_invariants
        self.timeline = []
        cfg = spec.config
        self.latency = cfg.cfs_sched_latency_us
        self.min_gran = cfg.cfs_min_granularity_us
        self.quantum = cfg.rr_quantum_us
        s = spec.sfs
        self.window = s.window_size
        self.bootstrap = s.bootstrap_slice_us
        self.fixed = s.fixed_slice_us is not None
        self.S = s.fixed_slice_us if self.fixed else s.bootstrap_slice_us
        self.omult = s.overload_multiplier
        self.hybrid = s.hybrid
        self.global_bypass = s.global_bypass
        self.io_mode = {"poll": IO_POLL, "instant": IO_INSTANT, "oblivious": IO_OBLIVIOUS}[s.io_mode]
        self.poll = s.poll_interval_us
        self.boost = s.boost
        self.boost_period = s.boost_period_us
        self.boost_factor = s.boosted_slice_factor
        self.tsc_last = -1

        prev = None
        for r in requests:
            if prev is not None and r.submit_time_us < prev:
                raise ValueError("requests must be sorted by submit time")
            prev = r.submit_time_us
            self.submit.push_back(r.submit_time_us)
            self.ids.push_back(r.id)
            self.seg_off.push_back(self.seg_kind.size())
            segs = coalesce(r.segments)
            self.seg_cnt.push_back(len(segs))
            tot = 0
            for kind, length in segs:
                is_io = 0 if kind == "cpu" else 1
                self.seg_kind.push_back(is_io)
                self.seg_len.push_back(length)
                if not is_io:
                    tot += length
            self.total_cpu.push_back(tot)

        order = sorted(range(self.n), key=lambda i: requests[i].id)
        self.rank.assign(self.n, 0)
        for j, i in enumerate(order):
            self.rank[i] = j
            self.by_rank.push_back(i)
        self.seg_index.assign(self.n, 0)
        self.seg_remaining.resize(self.n)
        for i in range(self.n):
            self.seg_remaining[i] = self.seg_len[self.seg_off[i]]
        self.remaining_cpu = self.total_cpu
        self.klass.assign(self.n, C_NONE)
        self.vruntime.assign(self.n, 0)
        self.slice_rem.assign(self.n, INF)
        self.status.assign(self.n, S_QUEUED)
        self.tcore.assign(self.n, -1)
        self.n_switches.assign(self.n, 0)
        self.n_io_blocks.assign(self.n, 0)
        self.first_start.assign(self.n, -1)
        self.completion.assign(self.n, -1)
        self.cpu_used.assign(self.n, 0)
        self.run_start.assign(self.n, 0)
        self.dispatch_time.assign(self.n, 0)
        self.epoch.assign(self.n, 0)
        self.initial_qdelay.assign(self.n, -1)
        self.history.resize(self.n)
        self.rq_core.assign(self.n, -1)
        self.loc.assign(self.n, L_NONE)
        self.worker.assign(self.n, -1)
        self.hint.assign(self.n, 0)
        self.demoted_at.assign(self.n, 0)
        self.boost_count.assign(self.n, 0)

        j = self.ncores
        self.running.assign(j, -1)
        self.busy.assign(j, 0)
        self.overhead.assign(j, 0)
        self.rq.resize(j)
        self.rq_count.assign(j, 0)
        self.curr.assign(j, -1)
        self.minv.assign(j, 0)
        self.granted.assign(j, 0)
        self.held.assign(j, -1)
        self.wstate.assign(j, W_FREE)
        self.deadline.assign(j, 0)
        self.wdispatch.assign(j, 0)
        self.wepoch.assign(j, 0)
        self.bypassing.assign(j, False)
        self.n_idle = j
        self.unfinished = self.n
        self.s_time.push_back(0)
        self.s_value.push_back(self.S)

    # ------------------------------------------------------------------
    # engine

    cdef inline void push(self, int64_t t, int kind, int a, int64_t b, int64_t c):
        cdef SimEvent e
        self.seq += 1
        e.t = t
        e.seq = self.seq
        e.kind = kind
        e.a = a
        e.b = b
        e.c = c
        self.events.push(e)

    cdef void schedule_timer(self, int64_t t, int code, int64_t b, int64_t c) except *:
        if t < self.now:
            raise SimulationFault(f"timer scheduled in the past ({t} < {self.now})")
        self.push(t, E_TIMER, code, b, c)

    cdef inline cbool in_cpu(self, int t):
        return self.seg_kind[self.seg_off[t] + self.seg_index[t]] == 0

    cdef void log(self, int core, int t, str tag):
        if self.record:
            self.timeline.append((self.now, core, self.ids[t], tag))

    cdef void set_class(self, int t, int c):
        self.klass[t] = c
        if self.history[t].empty() or self.history[t].back() != c:
            self.history[t].push_back(c)

    cdef int first_idle_core(self):
        cdef int k
        if self.n_idle:
            for k in range(self.ncores):
                if self.running[k] < 0:
                    return k
        return -1

    cdef void dispatch(self, int t, int k, int64_t slice_us) except *:
        if self.running[k] >= 0:
            raise SimulationFault(f"core {k} busy")
        if self.status[t] != S_QUEUED:
            raise SimulationFault(f"dispatching task {self.ids[t]} in status {self.status[t]}")
        if slice_us <= 0:
            raise SimulationFault(f"non-positive slice {slice_us} for task {self.ids[t]}")
        self.running[k] = t
        self.n_idle -= 1
        self.status[t] = S_RUNNING
        self.tcore[t] = k
        self.dispatch_time[t] = self.now
        self.run_start[t] = self.now + self.switch_cost
        self.slice_rem[t] = slice_us
        if self.first_start[t] < 0:
            self.first_start[t] = self.now
        self.log(k, t, "start")
        self.schedule_end(t)

    cdef void schedule_end(self, int t):
        cdef int64_t run
        self.epoch[t] += 1
        if self.in_cpu(t):
            run = self.seg_remaining[t]
            if self.slice_rem[t] < run:
                run = self.slice_rem[t]
        else:
            run = 0
        self.push(self.run_start[t] + run, E_END, t, self.epoch[t], 0)

    cdef void account(self, int t, int64_t delta) except *:
        if delta > self.seg_remaining[t]:
            raise SimulationFault(f"accounting {delta} beyond segment of task {self.ids[t]}")
        self.seg_remaining[t] -= delta
        self.remaining_cpu[t] -= delta
        self.vruntime[t] += delta
        self.cpu_used[t] += delta
        if self.slice_rem[t] < INF:
            self.slice_rem[t] -= delta
        self.busy[self.tcore[t]] += delta

    cdef void sync(self, int t) except *:
        if self.status[t] != S_RUNNING:
            raise SimulationFault(f"sync on task {self.ids[t]}")
        if self.now > self.run_start[t]:
            if self.in_cpu(t):
                self.account(t, self.now - self.run_start[t])
            self.run_start[t] = self.now

    cdef int64_t live_remaining_cpu(self, int t):
        if self.status[t] == S_RUNNING and self.in_cpu(t) and self.now > self.run_start[t]:
            return self.remaining_cpu[t] - (self.now - self.run_start[t])
        return self.remaining_cpu[t]

    cdef int release_core(self, int t):
        cdef int k = self.tcore[t]
        cdef int64_t spent = self.now - self.dispatch_time[t]
        self.overhead[k] += self.switch_cost if self.switch_cost < spent else spent
        self.running[k] = -1
        self.n_idle += 1
        self.tcore[t] = -1
        self.epoch[t] += 1
        return k

    cdef int preempt(self, int t) except -1:
        if self.status[t] != S_RUNNING:
            raise SimulationFault(f"preempting non-running task {self.ids[t]}")
        self.sync(t)
        cdef int k = self.release_core(t)
        self.status[t] = S_QUEUED
        self.n_switches[t] += 1
        self.total_switches += 1
        self.log(k, t, "preempt")
        return k

    cdef void extend(self, int t, int64_t slice_us) except *:
        if self.status[t] != S_RUNNING:
            raise SimulationFault(f"extending non-running task {self.ids[t]}")
        self.sync(t)
        self.slice_rem[t] = slice_us
        self.schedule_end(t)

    cdef void set_slice(self, int t, int64_t rem) except *:
        self.sync(t)
        self.slice_rem[t] = rem if rem > 0 else 0
        self.schedule_end(t)

    def run(self):
        cdef SimEvent e
        cdef int64_t t_arr
        cdef int n = self.n
        if self.policy == P_SFS and self.boost:
            self.schedule_timer(self.boost_period, T_BOOST, 0, 0)
        while True:
            if self.next_arrival < n:
                t_arr = self.submit[self.next_arrival]
                if self.events.empty() or t_arr <= self.events.top().t:
                    self.now = t_arr
                    self.next_arrival += 1
                    self.p_on_arrival(self.next_arrival - 1)
                    if self.check:
                        self.do_check()
                    continue
            if self.events.empty():
                break
            e = self.events.top()
            self.events.pop()
            if e.t < self.now:
                raise SimulationFault("clock moved backwards")
            self.now = e.t
            if e.kind == E_END:
                if self.epoch[e.a] != e.b or self.status[e.a] != S_RUNNING:
                    continue
                self.on_end(e.a)
            elif e.kind == E_IODONE:
                self.on_io_done(e.a)
            else:
                self.p_on_timer(e.a, e.b, e.c)
            if self.check:
                self.do_check()
        if self.unfinished:
            raise SimulationFault(f"{self.unfinished} tasks never finished")

    cdef void do_check(self) except *:
        if self.n_idle and self.p_idle_with_runnable():
            raise SimulationFault(f"work conservation violated at t={self.now}")

    cdef void on_end(self, int t) except *:
        cdef int64_t delta = self.now - self.run_start[t]
        cdef int k
        if self.in_cpu(t):
            if delta:
                self.account(t, delta)
            self.run_start[t] = self.now
            if self.seg_remaining[t] > 0:
                self.p_on_slice_expiry(t, self.tcore[t])
                return
            self.seg_index[t] += 1
        if self.seg_index[t] == self.seg_cnt[t]:
            k = self.release_core(t)
            self.complete(t, k)
            self.p_on_complete(t, k)
            return
        k = self.release_core(t)
        self.status[t] = S_BLOCKED
        self.seg_remaining[t] = self.seg_len[self.seg_off[t] + self.seg_index[t]]
        self.n_io_blocks[t] += 1
        self.total_io_switches += 1
        if self.count_io:
            self.n_switches[t] += 1
            self.total_switches += 1
        self.log(k, t, "block")
        self.push(self.now + self.seg_remaining[t], E_IODONE, t, 0, 0)
        self.p_on_block(t, k)

    cdef void on_io_done(self, int t) except *:
        self.seg_index[t] += 1
        if self.seg_index[t] == self.seg_cnt[t]:
            self.complete(t, -1)
            self.p_on_complete(t, -1)
            return
        self.seg_remaining[t] = self.seg_len[self.seg_off[t] + self.seg_index[t]]
        self.status[t] = S_QUEUED
        self.p_on_wake(t)

    cdef void complete(self, int t, int k):
        self.status[t] = S_DONE
        self.completion[t] = self.now
        self.unfinished -= 1
        if k >= 0:
            self.log(k, t, "complete")

    # ------------------------------------------------------------------
    # policy dispatch

    cdef void p_on_arrival(self, int t) except *:
        cdef int p = self.policy
        if p == P_FIFO or p == P_RR:
            self.fifo_arrival(t)
        elif p == P_CFS:
            self.cfs_place(t, True)
        elif p == P_SRTF:
            self.srtf_arrival(t)
        elif p == P_IDEAL:
            self.set_class(t, C_IDEAL)
            self.dispatch(t, t, INF)
        else:
            self.sfs_arrival(t)

    cdef void p_on_wake(self, int t) except *:
        if self.policy == P_SFS:
            self.sfs_wake(t)
        else:
            self.p_on_arrival(t)

    cdef void p_on_slice_expiry(self, int t, int k) except *:
        cdef int p = self.policy
        if p == P_RR:
            self.rr_expiry(t, k)
        elif p == P_CFS:
            self.cfs_on_expiry(t, k)
        elif p == P_SFS:
            if self.klass[t] == C_FILTER:
                self.sfs_demote_running(t, k)
            else:
                self.cfs_on_expiry(t, k)
            self.sfs_settle()
        else:
            raise SimulationFault(f"unexpected slice expiry for task {self.ids[t]}")

    cdef void p_on_block(self, int t, int k) except *:
        if self.policy == P_SFS:
            self.sfs_block(t, k)
        else:
            self.on_core_free(k)

    cdef void p_on_complete(self, int t, int k) except *:
        if self.policy == P_SFS:
            self.sfs_complete(t, k)
        elif k >= 0:
            self.on_core_free(k)

    cdef void on_core_free(self, int k) except *:
        cdef int p = self.policy
        cdef cset[Key].iterator it
        cdef int t
        if p == P_FIFO or p == P_RR:
            if not self.fq.empty():
                t = self.fq.front()
                self.fq.pop_front()
                self.dispatch(t, k, self.quantum if p == P_RR else INF)
        elif p == P_CFS:
            self.cfs_vacate(k)
        elif p == P_SRTF:
            if not self.srtf_wait.empty():
                it = self.srtf_wait.begin()
                t = self.by_rank[deref(it).second]
                self.srtf_wait.erase(it)
                self.dispatch(t, k, INF)

    cdef void p_on_timer(self, int code, int64_t b, int64_t c) except *:
        if self.policy != P_SFS:
            raise SimulationFault("unexpected timer")
        self.sfs_timer(code, <int>b, c)

    cdef cbool p_idle_with_runnable(self):
        cdef int p = self.policy
        cdef int k
        if p == P_FIFO or p == P_RR:
            return not self.fq.empty()
        if p == P_CFS:
            return self.waiting > 0
        if p == P_SRTF:
            return not self.srtf_wait.empty()
        if p == P_SFS:
            if self.waiting:
                return True
            if not self.gq.empty():
                for k in range(self.ncores):
                    if self.wstate[k] == W_FREE and self.running[k] < 0:
                        return True
        return False

    # ------------------------------------------------------------------
    # FIFO / RR / SRTF

    cdef void fifo_arrival(self, int t) except *:
        self.set_class(t, C_RR if self.policy == P_RR else C_FIFO)
        cdef int k = self.first_idle_core()
        if k < 0:
            self.fq.push_back(t)
        else:
            self.dispatch(t, k, self.quantum if self.policy == P_RR else INF)

    cdef void rr_expiry(self, int t, int k) except *:
        cdef int nxt
        if self.fq.empty():
            self.extend(t, self.quantum)
            return
        self.preempt(t)
        self.fq.push_back(t)
        nxt = self.fq.front()
        self.fq.pop_front()
        self.dispatch(nxt, k, self.quantum)

    cdef void srtf_arrival(self, int t) except *:
        cdef int k, r, victim = -1
        cdef int64_t rem, vrem = -1
        cdef int64_t vid = -1
        self.set_class(t, C_SRTF)
        k = self.first_idle_core()
        if k >= 0:
            self.dispatch(t, k, INF)
            return
        for k in range(self.ncores):
            r = self.running[k]
            rem = self.live_remaining_cpu(r)
            if victim < 0 or rem > vrem or (rem == vrem and self.ids[r] > vid):
                victim = r
                vrem = rem
                vid = self.ids[r]
        if self.remaining_cpu[t] < vrem or (self.remaining_cpu[t] == vrem and self.ids[t] < vid):
            k = self.preempt(victim)
            self.srtf_wait.insert(Key(self.remaining_cpu[victim], self.rank[victim]))
            self.dispatch(t, k, INF)
        else:
            self.srtf_wait.insert(Key(self.remaining_cpu[t], self.rank[t]))

    # ------------------------------------------------------------------
    # CFS model

    cdef inline int64_t slice_for(self, int64_t nr):
        cdef int64_t s = self.latency // nr
        return s if s > self.min_gran else self.min_gran

    cdef inline int cfs_extra(self, int k):
        if self.policy == P_SFS and self.wstate[k] == W_RUN:
            return 1
        return 0

    cdef inline cbool cfs_available(self, int k):
        return not (self.policy == P_SFS and self.wstate[k] == W_RUN)

    cdef inline int cfs_load(self, int k):
        return self.rq_count[k] + (1 if self.curr[k] >= 0 else 0) + self.cfs_extra(k)

    cdef void update_min_vruntime(self, int k):
        cdef int64_t cand = 0
        cdef cbool have = False
        cdef int c = self.curr[k]
        if c >= 0:
            cand = self.vruntime[c]
            have = True
        if not self.rq[k].empty():
            if not have or deref(self.rq[k].begin()).first < cand:
                cand = deref(self.rq[k].begin()).first
                have = True
        if have and cand > self.minv[k]:
            self.minv[k] = cand

    cdef void cfs_enqueue(self, int t, int k) except *:
        cdef int c = self.curr[k]
        cdef int64_t total, used
        if c >= 0:
            self.sync(c)
        self.update_min_vruntime(k)
        if self.vruntime[t] < self.minv[k]:
            self.vruntime[t] = self.minv[k]
        self.rq_core[t] = k
        self.rq[k].insert(Key(self.vruntime[t], self.rank[t]))
        self.rq_count[k] += 1
        self.waiting += 1
        if c >= 0:
            total = self.slice_for(self.rq_count[k] + 1)
            if total < self.granted[k]:
                used = self.granted[k] - self.slice_rem[c]
                self.granted[k] = total
                self.set_slice(c, total - used)

    cdef void cfs_dequeue(self, int t) except *:
        cdef int k = self.rq_core[t]
        if k < 0:
            raise SimulationFault(f"task {self.ids[t]} is not on a runqueue")
        self.rq[k].erase(Key(self.vruntime[t], self.rank[t]))
        self.rq_core[t] = -1
        self.rq_count[k] -= 1
        self.waiting -= 1

    cdef int cfs_pop_left(self, int k):
        cdef cset[Key].iterator it
        cdef int t
        if self.rq[k].empty():
            return -1
        it = self.rq[k].begin()
        t = self.by_rank[deref(it).second]
        self.rq[k].erase(it)
        self.rq_core[t] = -1
        self.rq_count[k] -= 1
        self.waiting -= 1
        return t

    cdef int cfs_choose_core(self):
        cdef int k, best = 0, ld, best_load = -1
        for k in range(self.ncores):
            ld = self.cfs_load(k)
            if best_load < 0 or ld < best_load:
                best = k
                best_load = ld
        return best

    cdef int cfs_place(self, int t, cbool kick) except -1:
        self.set_class(t, C_CFS)
        cdef int k = self.cfs_choose_core()
        self.cfs_enqueue(t, k)
        if kick:
            self.cfs_run_core(k)
        return k

    cdef int cfs_steal(self, int k):
        cdef int j, src = -1, ld, src_load = -1
        for j in range(self.ncores):
            if j != k and self.rq_count[j]:
                ld = self.cfs_load(j)
                if ld > src_load:
                    src = j
                    src_load = ld
        if src < 0:
            return -1
        return self.cfs_pop_left(src)

    cdef void cfs_run_core(self, int k) except *:
        cdef int t
        if self.running[k] >= 0 or not self.cfs_available(k):
            return
        if self.rq_count[k]:
            t = self.cfs_pop_left(k)
        else:
            t = self.cfs_steal(k)
        if t >= 0:
            self.cfs_dispatch(t, k)

    cdef void cfs_kick_idle(self) except *:
        cdef int k
        if not self.waiting:
            return
        for k in range(self.ncores):
            if self.running[k] < 0:
                self.cfs_run_core(k)
                if not self.waiting:
                    return

    cdef void cfs_dispatch(self, int t, int k) except *:
        cdef int64_t s
        # t counts as current so min_vruntime never overtakes it; only a task
        # stolen from a core with a lower floor gets raised
        self.curr[k] = t
        self.update_min_vruntime(k)
        if self.vruntime[t] < self.minv[k]:
            self.vruntime[t] = self.minv[k]
        s = self.slice_for(self.rq_count[k] + 1)
        self.granted[k] = s
        self.dispatch(t, k, s)

    cdef void cfs_on_expiry(self, int t, int k) except *:
        cdef int64_t s
        cdef Key lm
        self.update_min_vruntime(k)
        if not self.rq[k].empty():
            lm = deref(self.rq[k].begin())
        if self.rq[k].empty() or self.vruntime[t] < lm.first or (
            self.vruntime[t] == lm.first and self.rank[t] < lm.second
        ):
            s = self.slice_for(self.rq_count[k] + 1)
            self.granted[k] = s
            self.extend(t, s)
            return
        self.preempt(t)
        self.curr[k] = -1
        self.cfs_enqueue(t, k)
        self.cfs_run_core(k)

    cdef void cfs_vacate(self, int k) except *:
        self.curr[k] = -1
        self.cfs_run_core(k)

    cdef void cfs_evict(self, int k) except *:
        cdef int t = self.curr[k]
        self.preempt(t)
        self.curr[k] = -1
        self.cfs_enqueue(t, k)

    # ------------------------------------------------------------------
    # SFS

    cdef void tsc_observe(self) except *:
        cdef int64_t last = self.tsc_last
        cdef int64_t mean
        self.tsc_last = self.now
        if last < 0:
            return
        self.iat.push_back(self.now - last)
        self.iat_sum += self.now - last
        if <int64_t>self.iat.size() > self.window:
            self.iat_sum -= self.iat.front()
            self.iat.pop_front()
        self.tsc_counter += 1
        if self.tsc_counter < self.window:
            return
        self.tsc_counter = 0
        if self.fixed:
            return
        mean = self.iat_sum // <int64_t>self.iat.size()
        self.S = mean * self.ncores
        if self.S < 1:
            self.S = 1
        self.s_time.push_back(self.now)
        self.s_value.push_back(self.S)

    cdef void gq_push(self, int t, int64_t hint) except *:
        cdef GqEntry e
        if self.loc[t] == L_GQ:
            raise SimulationFault(f"duplicate enqueue of task {self.ids[t]}")
        self.loc[t] = L_GQ
        e.task = t
        e.enq = self.now
        e.hint = hint
        self.gq.push_back(e)

    cdef void release_worker(self, int k):
        cdef int t = self.held[k]
        if t >= 0:
            self.worker[t] = -1
        self.held[k] = -1
        self.wstate[k] = W_FREE
        self.wepoch[k] += 1

    cdef int64_t budget(self, int t, int64_t hint):
        cdef int64_t b
        if hint:
            return hint
        if self.boost_count[t] > 1:
            b = <int64_t>(self.boost_factor * self.S)
            return b if b > 1 else 1
        return self.S

    cdef void dispatch_filter(self, int k, int t, int64_t hint) except *:
        cdef int64_t b
        if self.curr[k] >= 0:
            self.cfs_evict(k)
        b = self.budget(t, hint)
        self.set_class(t, C_FILTER)
        self.loc[t] = L_FILTER
        self.worker[t] = k
        self.held[k] = t
        self.wstate[k] = W_RUN
        self.wdispatch[k] = self.now
        self.wepoch[k] += 1
        self.dispatch(t, k, b)
        self.deadline[k] = self.run_start[t] + b

    cdef void to_cfs(self, int t, cbool place) except *:
        self.set_class(t, C_CFS)
        self.loc[t] = L_CFS
        if self.boost:
            self.demoted.erase(Key(self.demoted_at[t], self.rank[t]))
        self.demoted_at[t] = self.now
        self.hint[t] = 0
        if self.boost:
            self.demoted.insert(Key(self.now, self.rank[t]))
        if place:
            self.cfs_place(t, False)

    cdef void set_bypass(self, int k, cbool flag):
        cdef int j
        if self.global_bypass:
            for j in range(self.ncores):
                self.bypassing[j] = flag
        else:
            self.bypassing[k] = flag

    cdef cbool fetch(self, int k) except *:
        cdef GqEntry e
        cdef int64_t delay
        while not self.gq.empty():
            e = self.gq.front()
            self.gq.pop_front()
            delay = self.now - e.enq
            self.fd_time.push_back(self.now)
            self.fd_task.push_back(e.task)
            self.fd_delay.push_back(delay)
            if self.initial_qdelay[e.task] < 0:
                self.initial_qdelay[e.task] = delay
            if self.hybrid and delay >= self.omult * self.S:
                self.set_bypass(k, True)
                self.to_cfs(e.task, True)
                continue
            self.set_bypass(k, False)
            self.dispatch_filter(k, e.task, e.hint)
            return True
        return False

    cdef void worker_free(self, int k) except *:
        if not self.fetch(k):
            self.cfs_run_core(k)

    cdef void fetch_any(self) except *:
        cdef int k, pick
        while not self.gq.empty():
            pick = -1
            for k in range(self.ncores):
                if self.wstate[k] == W_FREE:
                    if self.running[k] < 0:
                        pick = k
                        break
                    if pick < 0:
                        pick = k
            if pick < 0:
                return
            self.fetch(pick)

    cdef void sfs_settle(self) except *:
        if self.n_idle and self.waiting:
            self.cfs_kick_idle()

    cdef void sfs_arrival(self, int t) except *:
        self.tsc_observe()
        self.gq_push(t, 0)
        self.fetch_any()
        self.sfs_settle()

    cdef void sfs_demote_running(self, int t, int k) except *:
        cdef cbool dispatched
        if self.held[k] != t:
            raise SimulationFault(f"FILTER expiry for task {self.ids[t]} not held by worker {k}")
        self.preempt(t)
        self.release_worker(k)
        dispatched = self.fetch(k)
        self.to_cfs(t, True)
        if not dispatched:
            self.cfs_run_core(k)

    cdef void sfs_block(self, int t, int k) except *:
        cdef int64_t since, ticks, ep
        if self.klass[t] == C_FILTER and self.held[k] == t:
            if self.io_mode == IO_INSTANT:
                self.sfs_detect(k)
            else:
                self.wstate[k] = W_BLOCKED
                self.wepoch[k] += 1
                ep = self.wepoch[k]
                if self.io_mode == IO_POLL:
                    since = self.now - self.wdispatch[k]
                    ticks = (since + self.poll - 1) // self.poll
                    if ticks < 1:
                        ticks = 1
                    self.schedule_timer(self.wdispatch[k] + ticks * self.poll, T_POLL, k, ep)
                self.schedule_timer(
                    self.deadline[k] if self.deadline[k] > self.now else self.now, T_DEADLINE, k, ep
                )
                self.cfs_run_core(k)
        else:
            self.cfs_vacate(k)
        self.sfs_settle()

    cdef void sfs_detect(self, int k) except *:
        cdef int t = self.held[k]
        cdef int64_t left = self.deadline[k] - self.now
        self.release_worker(k)
        if left > 0:
            self.loc[t] = L_IO_WAIT
            self.hint[t] = left
        else:
            self.to_cfs(t, False)
        self.worker_free(k)

    cdef void sfs_timer(self, int code, int k, int64_t ep) except *:
        cdef int t
        if code == T_BOOST:
            self.sfs_boost()
            if self.unfinished:
                self.schedule_timer(self.now + self.boost_period, T_BOOST, 0, 0)
            self.sfs_settle()
            return
        if ep != self.wepoch[k] or self.wstate[k] != W_BLOCKED:
            return
        if code == T_POLL:
            self.sfs_detect(k)
        elif code == T_DEADLINE:
            t = self.held[k]
            self.release_worker(k)
            self.to_cfs(t, False)
            self.worker_free(k)
        self.sfs_settle()

    cdef void sfs_wake(self, int t) except *:
        cdef int k = self.worker[t]
        cdef int64_t left, h
        if k >= 0 and self.held[k] == t:
            left = self.deadline[k] - self.now
            if left > 0:
                if self.curr[k] >= 0:
                    self.cfs_evict(k)
                self.wstate[k] = W_RUN
                self.wepoch[k] += 1
                self.dispatch(t, k, left)
                self.deadline[k] = self.run_start[t] + left
            else:
                self.release_worker(k)
                self.to_cfs(t, True)
                self.worker_free(k)
        elif self.loc[t] == L_IO_WAIT:
            h = self.hint[t]
            self.hint[t] = 0
            self.gq_push(t, h)
            self.fetch_any()
        elif self.loc[t] == L_CFS:
            self.cfs_place(t, True)
        else:
            raise SimulationFault(f"sfs: unexpected wake of task {self.ids[t]}")
        self.sfs_settle()

    cdef void sfs_complete(self, int t, int k) except *:
        cdef int w = self.worker[t]
        if self.boost and self.loc[t] == L_CFS:
            self.demoted.erase(Key(self.demoted_at[t], self.rank[t]))
        self.loc[t] = L_DONE
        if w >= 0 and self.held[w] == t:
            self.release_worker(w)
            self.worker_free(w)
        elif k >= 0:
            self.cfs_vacate(k)
        self.sfs_settle()

    cdef void sfs_boost(self) except *:
        cdef cset[Key].iterator it = self.demoted.begin()
        cdef int victim = -1, t, freed = -1
        while it != self.demoted.end():
            t = self.by_rank[deref(it).second]
            if self.status[t] != S_BLOCKED:
                victim = t
                self.demoted.erase(it)
                break
            inc(it)
        if victim < 0:
            return
        if self.status[victim] == S_RUNNING:
            freed = self.tcore[victim]
            self.preempt(victim)
            self.curr[freed] = -1
        elif self.status[victim] == S_QUEUED:
            self.cfs_dequeue(victim)
        self.boost_count[victim] += 1
        self.gq_push(victim, 0)
        self.fetch_any()
        if freed >= 0:
            self.cfs_run_core(freed)

    # ------------------------------------------------------------------
    # results

    def export(self):
        cdef int i, j
        tasks = []
        for i in range(self.n):
            hist = tuple(CLASS_NAMES[self.history[i][j]] for j in range(self.history[i].size()))
            tasks.append((
                self.first_start[i], self.completion[i], self.cpu_used[i],
                self.n_switches[i], self.n_io_blocks[i],
                self.initial_qdelay[i] if self.initial_qdelay[i] >= 0 else None,
                hist,
            ))
        slice_series = [(self.s_time[i], self.s_value[i]) for i in range(self.s_time.size())]
        fetch_delays = [
            (self.fd_time[i], self.ids[self.fd_task[i]], self.fd_delay[i])
            for i in range(self.fd_time.size())
        ]
        return {
            "tasks": tasks,
            "core_busy_us": [self.busy[i] for i in range(self.ncores)],
            "core_overhead_us": [self.overhead[i] for i in range(self.ncores)],
            "total_switches": self.total_switches,
            "total_io_switches": self.total_io_switches,
            "timeline": self.timeline,
            "slice_series": slice_series if self.policy == P_SFS else [],
            "fetch_delays": fetch_delays,
            "cores": self.ncores,
        }

