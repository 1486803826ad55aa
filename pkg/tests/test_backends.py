import dataclasses
import random

import pytest

from sfsim import backend as be
from sfsim.policies import PolicyConfig, PolicySpec, SfsConfig
from sfsim.sim import EngineConfig
from sfsim.workload import FunctionRequest, WorkloadSpec, generate

needs_compiled = pytest.mark.skipif("compiled" not in be.available(), reason="compiled backend not built")


def random_requests(rng, n):
    t, out = 0, []
    for _ in range(n):
        t += rng.choice([0, 0, rng.randint(0, 50_000)])
        segs = [("cpu", rng.randint(1, 300_000))]
        if rng.random() < 0.4:
            segs = [("io", rng.randint(1, 60_000))] + segs
        if rng.random() < 0.2:
            segs += [("io", rng.randint(1, 30_000)), ("cpu", rng.randint(1, 50_000))]
        out.append((t, tuple(segs)))
    # ids that are neither dense nor in arrival order exercise tie-breaking
    ids = rng.sample(range(5 * n), n)
    return [FunctionRequest(i, t, segs, 1) for i, (t, segs) in zip(ids, out)]


def random_specs(rng):
    pc = PolicyConfig(rr_quantum_us=rng.choice([5_000, 100_000]))
    for name in ("fifo", "rr", "cfs", "srtf", "ideal"):
        yield PolicySpec(name, pc)
    for mode in ("poll", "instant", "oblivious"):
        for boost in (False, True):
            yield PolicySpec("sfs", pc, SfsConfig(
                window_size=rng.choice([1, 5, 100]), io_mode=mode, boost=boost,
                hybrid=rng.random() < 0.7, global_bypass=rng.random() < 0.3,
                poll_interval_us=rng.choice([1_000, 4_000]),
                fixed_slice_us=rng.choice([None, None, 20_000]),
                boost_period_us=rng.choice([3_000, 10_000]),
            ))


def as_dict(res):
    d = dataclasses.asdict(res)
    d.pop("backend")
    return d


@needs_compiled
@pytest.mark.parametrize("seed", range(40))
def test_backends_agree_on_random_instances(seed):
    rng = random.Random(seed)
    reqs = random_requests(rng, rng.randint(1, 40))
    cores = rng.randint(1, 4)
    ec = EngineConfig(switch_cost_us=rng.choice([0, 0, 5]), record_timeline=True,
                      count_io_switches=rng.random() < 0.8)
    for spec in random_specs(rng):
        a = be.simulate(reqs, spec, cores, ec, backend="python")
        b = be.simulate(reqs, spec, cores, ec, backend="compiled")
        assert a.backend == "python" and b.backend == "compiled"
        assert as_dict(a) == as_dict(b), (spec.name, spec.sfs)


@needs_compiled
@pytest.mark.parametrize("name", ["cfs", "sfs", "srtf"])
def test_backends_agree_on_generated_workload(name):
    reqs = generate(WorkloadSpec(n_requests=300, cores=6, seed=3, target_load=0.95))
    a = be.simulate(reqs, PolicySpec(name), 6, backend="python")
    b = be.simulate(reqs, PolicySpec(name), 6, backend="compiled")
    assert as_dict(a) == as_dict(b)


def test_default_prefers_compiled(monkeypatch):
    monkeypatch.delenv("SFSIM_BACKEND", raising=False)
    assert be.default_backend() == be.available()[0]
    assert "python" in be.available()


def test_env_override(monkeypatch):
    monkeypatch.setenv("SFSIM_BACKEND", "python")
    assert be.default_backend() == "python"
    res = be.simulate([FunctionRequest(0, 0, (("cpu", 5),), 1)], PolicySpec("fifo"), 1)
    assert res.backend == "python"
    monkeypatch.setenv("SFSIM_BACKEND", "turbo")
    with pytest.raises(ValueError):
        be.default_backend()


def test_unknown_backend():
    with pytest.raises(ValueError):
        be.simulate([FunctionRequest(0, 0, (("cpu", 5),), 1)], PolicySpec("fifo"), 1, backend="gpu")


def test_missing_extension_is_loud(monkeypatch):
    monkeypatch.setattr(be, "_core", None)
    assert be.available() == ["python"]
    with pytest.raises(RuntimeError):
        be.simulate([FunctionRequest(0, 0, (("cpu", 5),), 1)], PolicySpec("fifo"), 1, backend="compiled")
