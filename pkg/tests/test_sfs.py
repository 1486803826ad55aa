import random

import pytest
from hypothesis import given, strategies as st

from conftest import io, req
from oracles import sliding_slice_series
from sfsim import backend as be
from sfsim.policies import ConfigError, PolicySpec, SfsConfig
from sfsim.policies.sfs import SfsPolicy, TimeSliceController
from sfsim.sim import EngineConfig, run

MS = 1000
TL = EngineConfig(record_timeline=True)


def sfs(**kw):
    return PolicySpec("sfs", sfs=SfsConfig(**kw))


def starts(res, task):
    return [t for t, _, tid, tag in res.timeline if tid == task and tag == "start"]


# -- time slice controller ----------------------------------------------

def test_slice_is_mean_gap_times_cores():
    tsc = TimeSliceController(100, 12, 100 * MS)
    for i in range(100):
        assert not tsc.observe(i * 10 * MS)
        assert tsc.current_us == 100 * MS
    assert tsc.observe(100 * 10 * MS)
    assert tsc.current_us == 120 * MS


def test_halving_gaps_halves_slice():
    tsc = TimeSliceController(10, 12, 100 * MS)
    t = 0
    for _ in range(11):
        tsc.observe(t)
        t += 10 * MS
    assert tsc.current_us == 120 * MS
    t -= 10 * MS
    for _ in range(10):
        t += 5 * MS
        tsc.observe(t)
    assert tsc.current_us == 60 * MS


def test_fixed_slice_never_moves():
    tsc = TimeSliceController(2, 4, 100 * MS, fixed_us=30 * MS)
    for i in range(20):
        tsc.observe(i * 7)
    assert tsc.current_us == 30 * MS and tsc.series == [(0, 30 * MS)]


def test_slice_floored_at_one_microsecond():
    tsc = TimeSliceController(3, 2, 100 * MS)
    for _ in range(4):
        tsc.observe(0)
    assert tsc.current_us == 1


@given(st.lists(st.integers(0, 50 * MS), min_size=1, max_size=60), st.integers(1, 10), st.integers(1, 16))
def test_slice_series_matches_sliding_oracle(gaps, window, cores):
    times, t = [], 0
    for g in gaps:
        t += g
        times.append(t)
    tsc = TimeSliceController(window, cores, 100 * MS)
    for x in times:
        tsc.observe(x)
    assert tsc.series == sliding_slice_series(times, window, cores, 100 * MS)


def test_simulated_slice_series_follows_arrivals(backend):
    rng = random.Random(8)
    t, reqs = 0, []
    for i in range(120):
        t += rng.randint(0, 30 * MS)
        reqs.append(req(i, t, rng.randint(1, 40 * MS)))
    res = be.simulate(reqs, sfs(window_size=7), 3, backend=backend)
    want = sliding_slice_series([r.submit_time_us for r in reqs], 7, 3, 100 * MS)
    assert res.slice_series == want


def test_config_check():
    with pytest.raises(ConfigError):
        SfsConfig(window_size=0).check()
    with pytest.raises(ConfigError):
        SfsConfig(io_mode="sometimes").check()
    with pytest.raises(ConfigError):
        SfsConfig(boosted_slice_factor=1.5).check()


# -- FILTER and demotion ------------------------------------------------

def test_short_request_never_leaves_filter(backend):
    res = be.simulate([req(0, 0, 10 * MS)], sfs(fixed_slice_us=50 * MS), 1, backend=backend)
    assert res.records[0].dispatch_class_history == ("FILTER",)
    assert res.records[0].n_context_switches == 0


def test_long_request_demoted_after_slice(backend):
    res = be.simulate([req(0, 0, 300 * MS)], sfs(fixed_slice_us=50 * MS), 1, TL, backend=backend)
    r = res.records[0]
    assert r.dispatch_class_history == ("FILTER", "CFS_POOL")
    assert r.turnaround_us == 300 * MS
    assert starts(res, 0) == [0, 50 * MS]


def test_new_arrival_preempts_demoted_work(backend):
    reqs = [req(0, 0, 300 * MS), req(1, 100 * MS, 5 * MS)]
    res = be.simulate(reqs, sfs(fixed_slice_us=50 * MS), 1, backend=backend)
    assert res.records[1].first_start_us == 100 * MS
    assert res.records[1].turnaround_us == 5 * MS
    assert res.records[0].completion_us == 305 * MS


def test_fetch_delay_and_overload_bypass(backend):
    # threshold is 3 x 120 ms: the fifth request waits 400 ms and skips FILTER
    reqs = [req(i, 0, 100 * MS) for i in range(5)]
    res = be.simulate(reqs, sfs(fixed_slice_us=120 * MS), 1, backend=backend)
    assert [r.dispatch_class_history for r in res.records] == [("FILTER",)] * 4 + [("CFS_POOL",)]
    assert res.fetch_delays == [(i * 100 * MS, i, i * 100 * MS) for i in range(5)]
    assert [r.initial_queuing_delay_us for r in res.records] == [i * 100 * MS for i in range(5)]
    off = be.simulate(reqs, sfs(fixed_slice_us=120 * MS, hybrid=False), 1, backend=backend)
    assert all(r.dispatch_class_history == ("FILTER",) for r in off.records)


def test_bypass_flag_has_hysteresis():
    pol = SfsPolicy(sfs=SfsConfig(fixed_slice_us=120 * MS))
    run([req(i, 0, 100 * MS) for i in range(5)] + [req(5, 1_000 * MS, 1 * MS)], pol, 1)
    # the late request found an empty queue, which clears bypass mode
    assert pol.bypassing == [False]
    pol = SfsPolicy(sfs=SfsConfig(fixed_slice_us=120 * MS))
    run([req(i, 0, 100 * MS) for i in range(5)], pol, 1)
    assert pol.bypassing == [True]


def test_global_bypass_flags_every_worker():
    # 1 ms slices on 3 cores: the tenth fetch waits 3 ms, the threshold
    pol2 = SfsPolicy(sfs=SfsConfig(fixed_slice_us=1 * MS, global_bypass=True))
    run([req(i, 0, 100 * MS) for i in range(12)], pol2, 3)
    assert pol2.bypassing == [True] * 3


# -- IO handling --------------------------------------------------------

@pytest.mark.parametrize("mode,b_start", [("poll", 4 * MS), ("instant", 1 * MS), ("oblivious", 52 * MS)])
def test_io_detection_modes(backend, mode, b_start):
    reqs = [req(0, 0, 1 * MS, io(50 * MS), 1 * MS), req(1, 0, 20 * MS)]
    res = be.simulate(reqs, sfs(fixed_slice_us=100 * MS, io_mode=mode), 1, backend=backend)
    assert res.records[1].first_start_us == b_start
    assert res.records[0].completion_us == 52 * MS
    assert all(r.dispatch_class_history == ("FILTER",) for r in res.records)


def test_poll_fires_on_interval_grid(backend):
    # blocks 5 ms after dispatch: noticed at the 8 ms poll, not 4 ms
    reqs = [req(0, 0, 5 * MS, io(50 * MS), 1 * MS), req(1, 0, 20 * MS)]
    res = be.simulate(reqs, sfs(fixed_slice_us=100 * MS), 1, backend=backend)
    assert res.records[1].first_start_us == 8 * MS


def test_cfs_runs_while_filter_task_sleeps(backend):
    reqs = [req(0, 0, 100 * MS), req(1, 20 * MS, 1 * MS, io(50 * MS), 1 * MS)]
    res = be.simulate(reqs, sfs(fixed_slice_us=10 * MS), 1, TL, backend=backend)
    assert starts(res, 0) == [0, 10 * MS, 21 * MS, 72 * MS]
    # woken FILTER task comes back through the queue and evicts CFS work
    assert starts(res, 1) == [20 * MS, 71 * MS]
    assert res.records[1].completion_us == 72 * MS


def test_remaining_budget_survives_io(backend):
    reqs = [req(0, 0, 8 * MS, io(50 * MS), 5 * MS)]
    res = be.simulate(reqs, sfs(fixed_slice_us=10 * MS), 1, TL, backend=backend)
    # noticed at the 8 ms poll with 2 ms left; back from IO it gets those 2 ms
    assert starts(res, 0) == [0, 58 * MS, 60 * MS]
    assert res.records[0].dispatch_class_history == ("FILTER", "CFS_POOL")
    res = be.simulate(reqs, sfs(fixed_slice_us=10 * MS, io_mode="oblivious"), 1, TL, backend=backend)
    # the worker sits on the sleeping task until its deadline, then demotes it
    assert starts(res, 0) == [0, 58 * MS]
    assert res.records[0].completion_us == 63 * MS


# -- boosting -----------------------------------------------------------

def test_boost_disabled_means_single_demotion(backend):
    res = be.simulate([req(0, 0, 200 * MS)], sfs(fixed_slice_us=15 * MS), 1, backend=backend)
    assert res.records[0].dispatch_class_history == ("FILTER", "CFS_POOL")


def test_boost_reenters_filter_with_shrinking_budget(backend):
    res = be.simulate([req(0, 0, 200 * MS)], sfs(fixed_slice_us=15 * MS, boost=True), 1, TL, backend=backend)
    hist = res.records[0].dispatch_class_history
    assert hist[:4] == ("FILTER", "CFS_POOL", "FILTER", "CFS_POOL")
    tl = [(t, tag) for t, _, _, tag in res.timeline]
    # demoted at 15, boosted at the 20 ms tick with a full slice,
    # boosted again at 40 ms with half of it
    assert tl[:10] == [
        (0, "start"), (15 * MS, "preempt"), (15 * MS, "start"), (20 * MS, "preempt"),
        (20 * MS, "start"), (35 * MS, "preempt"), (35 * MS, "start"), (40 * MS, "preempt"),
        (40 * MS, "start"), (47500, "preempt"),
    ]
    assert res.records[0].completion_us == 200 * MS


def test_boost_picks_oldest_demotion():
    pol = SfsPolicy(sfs=SfsConfig(fixed_slice_us=10 * MS, boost=True, boost_period_us=25 * MS))
    res = run([req(0, 0, 100 * MS), req(1, 1 * MS, 100 * MS)], pol, 1)
    hist = {r.request_id: r.dispatch_class_history for r in res.records}
    # request 0 was demoted first (10 ms) so the 25 ms boost takes it
    assert hist[0][:3] == ("FILTER", "CFS_POOL", "FILTER")


# -- structural invariant -----------------------------------------------

class Checked(SfsPolicy):
    """Runs the location check after every hook."""

    def _wrap(name):
        def hook(self, *a):
            getattr(SfsPolicy, name)(self, *a)
            self.check_locations()
        return hook

    for _n in ("on_arrival", "on_slice_expiry", "on_block", "on_wake", "on_complete", "on_timer"):
        locals()[_n] = _wrap(_n)
    del _n


@pytest.mark.parametrize("seed", range(12))
@pytest.mark.parametrize("mode", ["poll", "instant", "oblivious"])
def test_every_request_in_exactly_one_place(seed, mode):
    rng = random.Random(seed)
    t, reqs = 0, []
    for i in range(60):
        t += rng.randint(0, 8 * MS)
        segs = [rng.randint(1, 60 * MS)]
        if rng.random() < 0.4:
            segs = [io(rng.randint(1, 30 * MS))] + segs + [io(rng.randint(1, 10 * MS)), rng.randint(1, 5 * MS)]
        reqs.append(req(i, t, *segs))
    cfg = SfsConfig(window_size=rng.choice([1, 5, 20]), io_mode=mode, boost=seed % 2 == 0,
                    global_bypass=seed % 3 == 0)
    res = run(reqs, Checked(sfs=cfg), rng.randint(1, 4))
    assert all(r.completion_us >= r.arrival_us + r.service_us for r in res.records)
