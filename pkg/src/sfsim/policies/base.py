from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from ..sim import Engine, TaskState


class ConfigError(ValueError):
    """Invalid policy configuration."""


@dataclass(frozen=True)
class PolicyConfig:
    cfs_sched_latency_us: int = 24_000
    cfs_min_granularity_us: int = 3_000
    rr_quantum_us: int = 100_000
    cfs_placement: str = "least_loaded"

    def check(self) -> None:
        if not self.cfs_sched_latency_us >= self.cfs_min_granularity_us > 0:
            raise ConfigError("need cfs_sched_latency_us >= cfs_min_granularity_us > 0")
        if self.rr_quantum_us <= 0:
            raise ConfigError("rr_quantum_us must be > 0")
        if self.cfs_placement != "least_loaded":
            raise ConfigError(f"unknown cfs_placement {self.cfs_placement!r}")


IO_MODES = ("poll", "instant", "oblivious")


@dataclass(frozen=True)
class SfsConfig:
    window_size: int = 100
    bootstrap_slice_us: int = 100_000
    fixed_slice_us: int | None = None  # disables adaptation when set
    overload_multiplier: float = 3.0
    hybrid: bool = True
    global_bypass: bool = False
    io_mode: str = "poll"
    poll_interval_us: int = 4_000
    boost: bool = False
    boost_period_us: int = 10_000
    boosted_slice_factor: float = 0.5

    def check(self) -> None:
        if self.window_size < 1:
            raise ConfigError("window_size must be >= 1")
        if self.bootstrap_slice_us <= 0:
            raise ConfigError("bootstrap_slice_us must be > 0")
        if self.fixed_slice_us is not None and self.fixed_slice_us <= 0:
            raise ConfigError("fixed_slice_us must be > 0")
        if self.overload_multiplier <= 0:
            raise ConfigError("overload_multiplier must be > 0")
        if self.io_mode not in IO_MODES:
            raise ConfigError(f"io_mode must be one of {IO_MODES}")
        if self.poll_interval_us <= 0:
            raise ConfigError("poll_interval_us must be > 0")
        if self.boost and self.boost_period_us <= 0:
            raise ConfigError("boost_period_us must be > 0")
        if not 0 < self.boosted_slice_factor <= 1:
            raise ConfigError("boosted_slice_factor must be in (0, 1]")


POLICY_NAMES = ("fifo", "rr", "cfs", "srtf", "ideal", "sfs")


@dataclass(frozen=True)
class PolicySpec:
    """Backend-neutral description of a policy instance."""

    name: str
    config: PolicyConfig = field(default_factory=PolicyConfig)
    sfs: SfsConfig = field(default_factory=SfsConfig)
    label: str | None = None

    @property
    def display(self) -> str:
        return self.label or self.name

    def check(self) -> None:
        if self.name not in POLICY_NAMES:
            raise ConfigError(f"unknown policy {self.name!r}")
        self.config.check()
        if self.name == "sfs":
            self.sfs.check()


class Policy:
    """Hooks called by the engine.  Subclasses decide dispatches."""

    name = "base"
    virtual_cores = False

    def bind(self, engine: Engine) -> None:
        self.engine = engine

    def on_arrival(self, task: TaskState) -> None:
        raise NotImplementedError

    def on_wake(self, task: TaskState) -> None:
        self.on_arrival(task)

    def on_slice_expiry(self, task: TaskState, core: int) -> None:
        raise NotImplementedError

    def on_block(self, task: TaskState, core: int) -> None:
        self.on_core_free(core)

    def on_complete(self, task: TaskState, core: int | None) -> None:
        if core is not None:
            self.on_core_free(core)

    def on_core_free(self, core: int) -> None:
        raise NotImplementedError

    def on_timer(self, code: int, payload) -> None:
        raise NotImplementedError

    def idle_with_runnable(self) -> bool:
        """True if some idle core could be running a runnable task."""
        return False

    def finish(self) -> None:
        pass

    def series(self) -> dict:
        return {}
