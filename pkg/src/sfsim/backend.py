"""Backend selection: the compiled kernel when importable, else pure Python.

Set ``SFSIM_BACKEND=python`` to force the reference engine, or
``SFSIM_BACKEND=compiled`` to fail loudly when the extension is missing.
"""

from __future__ import annotations

import os
from typing import Sequence

from .policies import PolicySpec, make_policy
from .sim import EngineConfig, SimResult, run as run_python
from .workload import FunctionRequest

try:
    from . import _core
except ImportError:  # pragma: no cover - depends on the build
    _core = None

BACKENDS = ("compiled", "python")


def available() -> list[str]:
    return ["compiled", "python"] if _core is not None else ["python"]


def default_backend() -> str:
    env = os.environ.get("SFSIM_BACKEND", "").strip().lower()
    if env:
        if env not in BACKENDS:
            raise ValueError(f"SFSIM_BACKEND must be one of {BACKENDS}, got {env!r}")
        return env
    return "compiled" if _core is not None else "python"


def _run_compiled(requests, spec, cores, engine_config) -> SimResult:
    from .metrics import RequestRecord

    kernel = _core.Kernel(requests, spec, cores, engine_config)
    kernel.run()
    out = kernel.export()
    records = []
    for req, (start, done, cpu, sw, blocks, qd, hist) in zip(requests, out["tasks"]):
        records.append(RequestRecord(
            request_id=req.id,
            group_label=req.group_label,
            arrival_us=req.submit_time_us,
            first_start_us=start,
            completion_us=done,
            service_us=req.service_us,
            cpu_us=cpu,
            n_context_switches=sw,
            n_io_blocks=blocks,
            initial_queuing_delay_us=qd if qd is not None else start - req.submit_time_us,
            dispatch_class_history=hist,
        ))
    makespan = max((r.completion_us for r in records), default=0)
    busy, over = out["core_busy_us"], out["core_overhead_us"]
    return SimResult(
        policy=spec.name,
        cores=out["cores"],
        records=records,
        core_busy_us=busy,
        core_idle_us=[makespan - b - o for b, o in zip(busy, over)],
        core_overhead_us=over,
        total_switches=out["total_switches"],
        total_io_switches=out["total_io_switches"],
        makespan_us=makespan,
        timeline=out["timeline"],
        slice_series=out["slice_series"],
        fetch_delays=out["fetch_delays"],
        backend="compiled",
    )


def simulate(
    requests: Sequence[FunctionRequest],
    spec: PolicySpec,
    cores: int,
    engine_config: EngineConfig | None = None,
    backend: str | None = None,
) -> SimResult:
    """Run one policy over ``requests`` on the chosen backend."""
    spec.check()
    engine_config = engine_config or EngineConfig()
    backend = backend or default_backend()
    if backend == "compiled":
        if _core is None:
            raise RuntimeError("compiled backend requested but sfsim._core is not built")
        return _run_compiled(list(requests), spec, cores, engine_config)
    if backend != "python":
        raise ValueError(f"unknown backend {backend!r}")
    return run_python(requests, make_policy(spec), cores, engine_config)
