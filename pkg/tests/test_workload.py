import numpy as np
import pytest
from hypothesis import given, strategies as st

from sfsim import backend as be
from sfsim.policies import PolicySpec
from sfsim.workload import (
    CPU, IO, MS, SEC, DurationBucket, IatModel, IoProfile, TraceError, WorkloadError,
    WorkloadSpec, azure_buckets, bucket_mean_us, check_buckets, generate, inject_bursts,
    load_trace, sample_duration, sample_durations, sample_iat, sample_iats, scale_to_load,
    validate_requests, write_trace,
)


def test_azure_buckets_are_valid_and_match_table():
    b = azure_buckets()
    check_buckets(b)
    probs = {(x.lo_us, x.hi_us): x.probability for x in b}
    assert probs[(1, 50 * MS)] == 0.406
    assert probs[(50 * MS, 100 * MS)] == 0.098
    assert probs[(100 * MS, 200 * MS)] == 0.068
    assert probs[(200 * MS, 400 * MS)] == 0.227
    assert probs[(1550 * MS, None)] == 0.157
    assert [x.group_label for x in b] == [1, 2, 3, 4, 5, 6]


@pytest.mark.parametrize("bad", [
    [DurationBucket(1, 10, 0.99, 1)],
    [DurationBucket(1, 10, 0.5, 1), DurationBucket(5, 20, 0.5, 2)],
    [DurationBucket(10, 10, 1.0, 1)],
    [],
])
def test_invalid_bucket_sets(bad):
    with pytest.raises(WorkloadError):
        check_buckets(bad)


def test_table_frequencies_over_1e5_samples():
    rng = np.random.default_rng(7)
    d, labels = sample_durations(rng, azure_buckets(), 100_000)
    assert abs(np.mean(d < 50 * MS) - 0.406) <= 0.01
    for b in azure_buckets():
        assert abs(np.mean(labels == b.group_label) - b.probability) <= 0.01


def test_degenerate_bucket():
    rng = np.random.default_rng(0)
    b = [DurationBucket(100 * MS, 100 * MS + 1, 1.0, 1)]
    assert {sample_duration(rng, b)[0] for _ in range(50)} == {100 * MS}


def test_bucket_means_near_midpoint():
    # Monte-Carlo oracle: per-bucket empirical mean within 2% of the midpoint
    rng = np.random.default_rng(3)
    buckets = azure_buckets()
    d, labels = sample_durations(rng, buckets, 1_000_000)
    for b in buckets:
        hi = b.hi_us if b.bounded else 60 * SEC
        mid = (b.lo_us + hi) / 2
        assert abs(d[labels == b.group_label].mean() - mid) / mid < 0.02


def test_bucket_mean_is_analytic():
    b = [DurationBucket(1, 11, 0.5, 1), DurationBucket(11, None, 0.5, 2)]
    # uniform integers 1..10 -> 5.5 ; 11..20 -> 15.5
    assert bucket_mean_us(b, cap_us=21) == pytest.approx(10.5)


def test_sample_iat_variants():
    rng = np.random.default_rng(0)
    tr = IatModel.trace([5 * MS, 10 * MS, 15 * MS])
    assert sample_iat(rng, tr, 1) == 10 * MS
    assert sample_iat(rng, tr, 4) == 10 * MS  # wraps
    u = IatModel.uniform(4 * MS, 4 * MS)
    assert {sample_iat(rng, u, i) for i in range(20)} == {4 * MS}
    p = sample_iats(np.random.default_rng(1), IatModel.poisson(10 * MS), 100_000)
    assert abs(p.mean() - 10 * MS) / (10 * MS) < 0.02


@pytest.mark.parametrize("model", [
    IatModel.poisson(0), IatModel.uniform(5, 4), IatModel.trace([]), IatModel.trace([1, -1]),
    IatModel("weibull"),
])
def test_invalid_iat_models(model):
    with pytest.raises(WorkloadError):
        model.check()


def test_scale_to_load_rearranges_traffic_intensity():
    one_sec = [DurationBucket(SEC, SEC + 1, 1.0, 1)]
    s = scale_to_load(WorkloadSpec(one_sec, IatModel.poisson(1), cores=12, target_load=1.0))
    assert s.iat.mean() == pytest.approx(SEC / 12)
    s = scale_to_load(WorkloadSpec(one_sec, IatModel.poisson(1), cores=12, target_load=0.5))
    assert s.iat.mean() == pytest.approx(SEC / 6)
    with pytest.raises(WorkloadError):
        scale_to_load(WorkloadSpec(one_sec, IatModel.poisson(1), target_load=0))


@given(
    st.lists(st.floats(0, 1e6), min_size=2, max_size=30).filter(lambda v: sum(v) > 0),
    st.floats(0.1, 3.0),
)
def test_scaling_preserves_trace_shape(values, load):
    # a single multiplicative factor: coefficient of variation is unchanged
    spec = WorkloadSpec(iat=IatModel.trace(values), target_load=load)
    out = np.array(scale_to_load(spec).iat.trace_us)
    inp = np.array(values)
    factor = out.sum() / inp.sum()
    assert np.allclose(out, inp * factor, rtol=1e-9, atol=1e-6)
    if inp.std() > 0:
        assert out.std() / out.mean() == pytest.approx(inp.std() / inp.mean(), rel=1e-9)


def test_uniform_scaling_keeps_family_and_ratio():
    spec = WorkloadSpec(iat=IatModel.uniform(10, 30), target_load=0.7)
    iat = scale_to_load(spec).iat
    assert iat.kind == "uniform" and iat.hi_us / iat.lo_us == pytest.approx(3.0)


def test_scaled_load_measured_under_ideal():
    # realized busy fraction sum(service) / (c * makespan) is close to the target
    spec = scale_to_load(WorkloadSpec(iat=IatModel.poisson(1), n_requests=10_000,
                                      target_load=0.8, cores=12, seed=5))
    reqs = generate(spec)
    res = be.simulate(reqs, PolicySpec("ideal"), 12)
    util = sum(r.total_cpu_us for r in reqs) / (12 * res.makespan_us)
    assert abs(util - 0.8) <= 0.05


def test_generate_cumulative_submits_and_segments():
    spec = WorkloadSpec(iat=IatModel.trace([0, 10 * MS, 10 * MS]), n_requests=3)
    reqs = generate(spec)
    assert [r.submit_time_us for r in reqs] == [0, 10 * MS, 20 * MS]
    assert all(len(r.segments) == 1 and r.segments[0][0] == CPU for r in reqs)

    spec = WorkloadSpec(io=IoProfile(1.0, 10 * MS, 100 * MS), n_requests=500, seed=2)
    for r in generate(spec):
        assert r.segments[0][0] == IO and 10 * MS <= r.segments[0][1] <= 100 * MS
        assert r.segments[1][0] == CPU and len(r.segments) == 2


def test_generate_is_deterministic_and_valid():
    spec = WorkloadSpec(io=IoProfile(0.5), n_requests=2000, seed=11)
    a, b = generate(spec), generate(spec)
    assert a == b
    assert repr(a).encode() == repr(b).encode()
    validate_requests(a)
    assert generate(WorkloadSpec(n_requests=50, seed=12)) != generate(WorkloadSpec(n_requests=50, seed=13))


def test_generate_frozen_prefix():
    # regression guard on the draw order (durations, iats, io flags, io lengths)
    reqs = generate(WorkloadSpec(iat=IatModel.poisson(10 * MS), io=IoProfile(0.5), n_requests=3, seed=0))
    assert [(r.submit_time_us, r.segments, r.group_label) for r in reqs] == [
        (16299, ((CPU, 215048),), 4),
        (23035, ((CPU, 827),), 1),
        (30588, ((CPU, 8764),), 1),
    ]


def test_request_invariants():
    r = generate(WorkloadSpec(io=IoProfile(0.3), n_requests=200, seed=4))
    for x in r:
        assert x.total_cpu_us == sum(n for k, n in x.segments if k == CPU)
        assert x.service_us == x.total_cpu_us + x.total_io_us
        assert all(n > 0 for _, n in x.segments)


def test_load_trace_roundtrip(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("5000\n10000\n")
    assert load_trace(p).trace_us == (5000.0, 10000.0)
    vals = np.random.default_rng(0).integers(0, 50_000, size=10_000)
    write_trace(p, vals)
    m = load_trace(p)
    assert len(m.trace_us) == 10_000
    assert sum(m.trace_us) == int(vals.sum())  # equals the last arrival offset


@pytest.mark.parametrize("text, where", [("", "empty"), ("5\nabc\n", ":2:"), ("5\n-3\n", ":2:"), ("5\n\n6\n", ":2:")])
def test_load_trace_errors(tmp_path, text, where):
    p = tmp_path / "t.txt"
    p.write_text(text)
    with pytest.raises(TraceError, match=where):
        load_trace(p)


def test_load_trace_missing(tmp_path):
    with pytest.raises(TraceError):
        load_trace(tmp_path / "nope.txt")


def test_inject_bursts_compresses_windows():
    base = IatModel.uniform(100, 100)
    out = inject_bursts(base, 60, 5, 4, 10.0)
    v = np.array(out.trace_us)
    assert (v == 10).sum() == 20 and (v == 100).sum() == 40
    assert v[10] == 10 and v[14] == 100


def test_coalesce_merges_same_kind_neighbours():
    from sfsim.workload import coalesce
    assert coalesce((("cpu", 1), ("cpu", 2), ("io", 3), ("io", 4), ("cpu", 5))) == (
        ("cpu", 3), ("io", 7), ("cpu", 5))
    assert coalesce((("io", 1),)) == (("io", 1),)
