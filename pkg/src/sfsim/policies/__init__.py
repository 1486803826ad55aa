from .base import (
    IO_MODES, POLICY_NAMES, ConfigError, Policy, PolicyConfig, PolicySpec, SfsConfig,
)
from .baseline import CfsModel, CfsPolicy, FifoPolicy, IdealPolicy, RrPolicy, SrtfPolicy
from .sfs import GlobalQueue, SfsPolicy, TimeSliceController

_CLASSES = {
    "fifo": FifoPolicy,
    "rr": RrPolicy,
    "cfs": CfsPolicy,
    "srtf": SrtfPolicy,
    "ideal": IdealPolicy,
}


def make_policy(spec: PolicySpec) -> Policy:
    spec.check()
    if spec.name == "sfs":
        return SfsPolicy(spec.config, spec.sfs)
    return _CLASSES[spec.name](spec.config)


__all__ = [
    "IO_MODES", "POLICY_NAMES", "CfsModel", "CfsPolicy", "ConfigError", "FifoPolicy",
    "GlobalQueue", "IdealPolicy", "Policy", "PolicyConfig", "PolicySpec", "RrPolicy",
    "SfsConfig", "SfsPolicy", "SrtfPolicy", "TimeSliceController", "make_policy",
]
