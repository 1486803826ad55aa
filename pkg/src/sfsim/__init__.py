"""Discrete-event simulator of multicore scheduling for serverless workloads.

The main entry points are :func:`sfsim.workload.generate` to build a request
list, :func:`sfsim.simulate` to run one policy over it, and
:mod:`sfsim.metrics` to summarize the outcome.
"""

from .backend import available as available_backends, default_backend, simulate
from .policies import PolicyConfig, PolicySpec, SfsConfig
from .sim import EngineConfig, SimResult, SimulationFault
from .workload import FunctionRequest, WorkloadSpec, generate, scale_to_load

__version__ = "0.1.0"

__all__ = [
    "EngineConfig", "FunctionRequest", "PolicyConfig", "PolicySpec", "SfsConfig",
    "SimResult", "SimulationFault", "WorkloadSpec", "available_backends",
    "default_backend", "generate", "scale_to_load", "simulate",
]
