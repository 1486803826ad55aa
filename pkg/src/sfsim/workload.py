"""FaaS workload generation.

Durations are drawn from a bucketed distribution modeled on the Azure
Functions Day-1 statistics, inter-arrival times from a Poisson, uniform or
replayed trace model.  Every time value is an integer number of microseconds
except inside :class:`IatModel`, which keeps floats so that load scaling is a
pure multiplication.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

CPU = "cpu"
IO = "io"

MS = 1_000
SEC = 1_000_000

#: Upper bound used for the open-ended ``>= 1550 ms`` bucket.
DEFAULT_CAP_US = 60 * SEC


class WorkloadError(ValueError):
    """Invalid workload configuration."""


class TraceError(OSError):
    """Unreadable or malformed IAT trace file."""


@dataclass(frozen=True)
class DurationBucket:
    lo_us: int
    hi_us: int | None  # None: unbounded, sampled up to the cap
    probability: float
    group_label: int

    @property
    def bounded(self) -> bool:
        return self.hi_us is not None


def azure_buckets() -> list[DurationBucket]:
    """Duration buckets from the Azure Day-1 breakdown.

    The published rows cover 95.6% of the mass; the remaining 4.4% lies in
    400-1550 ms (each sub-range below 1%) and is kept as one filler bucket.
    """
    return [
        DurationBucket(1, 50 * MS, 0.406, 1),
        DurationBucket(50 * MS, 100 * MS, 0.098, 2),
        DurationBucket(100 * MS, 200 * MS, 0.068, 3),
        DurationBucket(200 * MS, 400 * MS, 0.227, 4),
        DurationBucket(400 * MS, 1550 * MS, 0.044, 5),
        DurationBucket(1550 * MS, None, 0.157, 6),
    ]


def check_buckets(buckets: Sequence[DurationBucket], cap_us: int = DEFAULT_CAP_US) -> None:
    if not buckets:
        raise WorkloadError("bucket list is empty")
    total = math.fsum(b.probability for b in buckets)
    if abs(total - 1.0) > 1e-9:
        raise WorkloadError(f"bucket probabilities sum to {total!r}, expected 1")
    spans = []
    for i, b in enumerate(buckets):
        if not 0.0 <= b.probability <= 1.0:
            raise WorkloadError(f"bucket {i}: probability {b.probability} outside [0, 1]")
        if b.lo_us < 1:
            raise WorkloadError(f"bucket {i}: lo_us must be >= 1")
        hi = b.hi_us if b.bounded else cap_us
        if not b.lo_us < hi:
            raise WorkloadError(f"bucket {i}: empty range [{b.lo_us}, {hi})")
        spans.append((b.lo_us, hi, i))
    spans.sort()
    for (lo1, hi1, i), (lo2, _, j) in zip(spans, spans[1:]):
        if lo2 < hi1:
            raise WorkloadError(f"buckets {i} and {j} overlap")


def bucket_mean_us(buckets: Sequence[DurationBucket], cap_us: int = DEFAULT_CAP_US) -> float:
    """Analytic mean of :func:`sample_duration` (integer-uniform within each bucket)."""
    mean = 0.0
    for b in buckets:
        hi = b.hi_us if b.bounded else cap_us
        mean += b.probability * (b.lo_us + hi - 1) / 2.0
    return mean


def sample_duration(
    rng: np.random.Generator,
    buckets: Sequence[DurationBucket],
    cap_us: int = DEFAULT_CAP_US,
) -> tuple[int, int]:
    """Draw one duration; returns ``(duration_us, group_label)``."""
    probs = np.array([b.probability for b in buckets])
    k = int(rng.choice(len(buckets), p=probs / probs.sum()))
    b = buckets[k]
    hi = b.hi_us if b.bounded else cap_us
    return int(rng.integers(b.lo_us, hi)), b.group_label


def sample_durations(
    rng: np.random.Generator,
    buckets: Sequence[DurationBucket],
    n: int,
    cap_us: int = DEFAULT_CAP_US,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`sample_duration`: arrays of durations and group labels."""
    probs = np.array([b.probability for b in buckets])
    ks = rng.choice(len(buckets), size=n, p=probs / probs.sum())
    lo = np.array([b.lo_us for b in buckets], dtype=np.int64)
    hi = np.array([b.hi_us if b.bounded else cap_us for b in buckets], dtype=np.int64)
    labels = np.array([b.group_label for b in buckets], dtype=np.int64)
    d = rng.integers(lo[ks], hi[ks])
    return d.astype(np.int64), labels[ks]


@dataclass(frozen=True)
class IatModel:
    """Inter-arrival time law.  ``kind`` is ``poisson``, ``uniform`` or ``trace``."""

    kind: str
    mean_us: float = 0.0
    lo_us: float = 0.0
    hi_us: float = 0.0
    trace_us: tuple[float, ...] = ()

    @classmethod
    def poisson(cls, mean_us: float) -> IatModel:
        return cls("poisson", mean_us=float(mean_us))

    @classmethod
    def uniform(cls, lo_us: float, hi_us: float) -> IatModel:
        return cls("uniform", lo_us=float(lo_us), hi_us=float(hi_us))

    @classmethod
    def trace(cls, values: Sequence[float]) -> IatModel:
        return cls("trace", trace_us=tuple(float(v) for v in values))

    def check(self) -> None:
        if self.kind == "poisson":
            if not self.mean_us > 0:
                raise WorkloadError("poisson IAT mean must be > 0")
        elif self.kind == "uniform":
            if not 0 <= self.lo_us <= self.hi_us:
                raise WorkloadError("uniform IAT needs 0 <= lo <= hi")
        elif self.kind == "trace":
            if not self.trace_us:
                raise WorkloadError("IAT trace is empty")
            if min(self.trace_us) < 0:
                raise WorkloadError("IAT trace has negative values")
        else:
            raise WorkloadError(f"unknown IAT model {self.kind!r}")

    def mean(self) -> float:
        if self.kind == "poisson":
            return self.mean_us
        if self.kind == "uniform":
            return (self.lo_us + self.hi_us) / 2.0
        return math.fsum(self.trace_us) / len(self.trace_us)

    def scaled(self, factor: float) -> IatModel:
        if self.kind == "poisson":
            return replace(self, mean_us=self.mean_us * factor)
        if self.kind == "uniform":
            return replace(self, lo_us=self.lo_us * factor, hi_us=self.hi_us * factor)
        return replace(self, trace_us=tuple(v * factor for v in self.trace_us))


def sample_iat(rng: np.random.Generator, model: IatModel, index: int) -> float:
    if model.kind == "poisson":
        return float(rng.exponential(model.mean_us))
    if model.kind == "uniform":
        return float(rng.uniform(model.lo_us, model.hi_us))
    if model.kind == "trace":
        return model.trace_us[index % len(model.trace_us)]
    raise WorkloadError(f"unknown IAT model {model.kind!r}")


def sample_iats(rng: np.random.Generator, model: IatModel, n: int) -> np.ndarray:
    if model.kind == "poisson":
        return rng.exponential(model.mean_us, size=n)
    if model.kind == "uniform":
        return rng.uniform(model.lo_us, model.hi_us, size=n)
    if model.kind == "trace":
        trace = np.asarray(model.trace_us, dtype=float)
        return trace[np.arange(n) % len(trace)]
    raise WorkloadError(f"unknown IAT model {model.kind!r}")


@dataclass(frozen=True)
class IoProfile:
    io_fraction: float = 0.0
    io_lo_us: int = 10 * MS
    io_hi_us: int = 100 * MS

    def check(self) -> None:
        if not 0.0 <= self.io_fraction <= 1.0:
            raise WorkloadError("io_fraction must be in [0, 1]")
        if not 1 <= self.io_lo_us <= self.io_hi_us:
            raise WorkloadError("IO range needs 1 <= io_lo_us <= io_hi_us")


@dataclass(frozen=True)
class WorkloadSpec:
    buckets: tuple[DurationBucket, ...] = field(default_factory=lambda: tuple(azure_buckets()))
    iat: IatModel = field(default_factory=lambda: IatModel.poisson(100 * MS))
    io: IoProfile = field(default_factory=IoProfile)
    n_requests: int = 10_000
    target_load: float = 1.0
    cores: int = 12
    seed: int = 0
    cap_us: int = DEFAULT_CAP_US

    def check(self) -> None:
        check_buckets(self.buckets, self.cap_us)
        self.iat.check()
        self.io.check()
        if self.n_requests < 1:
            raise WorkloadError("n_requests must be >= 1")
        if self.cores < 1:
            raise WorkloadError("cores must be >= 1")
        if not self.target_load > 0:
            raise WorkloadError("target_load must be > 0")


@dataclass(frozen=True)
class FunctionRequest:
    id: int
    submit_time_us: int
    segments: tuple[tuple[str, int], ...]
    group_label: int = 0

    @property
    def total_cpu_us(self) -> int:
        return sum(n for k, n in self.segments if k == CPU)

    @property
    def total_io_us(self) -> int:
        return sum(n for k, n in self.segments if k == IO)

    @property
    def service_us(self) -> int:
        """Contention-free duration: every segment back to back."""
        return sum(n for _, n in self.segments)


def coalesce(segments) -> tuple[tuple[str, int], ...]:
    """Merge neighbouring segments of the same kind so CPU and IO alternate."""
    out: list[tuple[str, int]] = []
    for kind, n in segments:
        if out and out[-1][0] == kind:
            out[-1] = (kind, out[-1][1] + n)
        else:
            out.append((kind, n))
    return tuple(out)


def cpu_request(id: int, submit_us: int, cpu_us: int, group: int = 0) -> FunctionRequest:
    return FunctionRequest(id, submit_us, ((CPU, cpu_us),), group)


def validate_requests(requests: Sequence[FunctionRequest]) -> None:
    prev = None
    for r in requests:
        if not r.segments:
            raise WorkloadError(f"request {r.id}: no segments")
        for kind, n in r.segments:
            if kind not in (CPU, IO):
                raise WorkloadError(f"request {r.id}: unknown segment kind {kind!r}")
            if n <= 0:
                raise WorkloadError(f"request {r.id}: non-positive segment length {n}")
        if r.submit_time_us < 0:
            raise WorkloadError(f"request {r.id}: negative submit time")
        if prev is not None and (r.id <= prev.id or r.submit_time_us < prev.submit_time_us):
            raise WorkloadError(f"request {r.id}: ids/submit times not monotone")
        prev = r


def scale_to_load(spec: WorkloadSpec) -> WorkloadSpec:
    """Rescale the IAT model so that lambda / (c * mu) equals ``target_load``.

    mu comes from the analytic mean CPU duration of the buckets, so the
    result does not depend on the seed.
    """
    if not spec.target_load > 0:
        raise WorkloadError("target_load must be > 0")
    spec.iat.check()
    mean_svc = bucket_mean_us(spec.buckets, spec.cap_us)
    want = mean_svc / (spec.cores * spec.target_load)
    have = spec.iat.mean()
    if have <= 0:
        raise WorkloadError("cannot scale an IAT model with zero mean")
    return replace(spec, iat=spec.iat.scaled(want / have))


def generate(spec: WorkloadSpec) -> list[FunctionRequest]:
    """Deterministic request list for ``spec`` (same spec, same output)."""
    spec.check()
    rng = np.random.default_rng(spec.seed)
    n = spec.n_requests
    durations, labels = sample_durations(rng, spec.buckets, n, spec.cap_us)
    iats = sample_iats(rng, spec.iat, n)
    has_io = rng.random(n) < spec.io.io_fraction
    io_len = rng.integers(spec.io.io_lo_us, spec.io.io_hi_us + 1, size=n)
    submits = np.floor(np.cumsum(iats)).astype(np.int64)

    out = []
    for i in range(n):
        cpu = (CPU, int(durations[i]))
        segs = ((IO, int(io_len[i])), cpu) if has_io[i] else (cpu,)
        out.append(FunctionRequest(i, int(submits[i]), segs, int(labels[i])))
    return out


def inject_bursts(
    model: IatModel,
    n_requests: int,
    n_bursts: int,
    burst_len: int,
    compress: float,
    rng: np.random.Generator | None = None,
) -> IatModel:
    """Expand ``model`` to ``n_requests`` trace IATs and shrink ``n_bursts``
    evenly spaced windows of ``burst_len`` IATs by ``compress``."""
    rng = rng or np.random.default_rng(0)
    iats = sample_iats(rng, model, n_requests).astype(float)
    stride = n_requests // (n_bursts + 1)
    for b in range(1, n_bursts + 1):
        start = b * stride
        iats[start : start + burst_len] /= compress
    return IatModel.trace(iats.tolist())


def load_trace(path: str | Path) -> IatModel:
    """Read an IAT trace: one non-negative integer (microseconds) per line."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise TraceError(f"{path}: {exc.strerror or exc}") from exc
    values = []
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s:
            raise TraceError(f"{path}:{lineno}: empty line")
        try:
            v = int(s)
        except ValueError:
            raise TraceError(f"{path}:{lineno}: not an integer: {s!r}") from None
        if v < 0:
            raise TraceError(f"{path}:{lineno}: negative IAT {v}")
        values.append(v)
    if not values:
        raise TraceError(f"{path}: trace is empty")
    return IatModel.trace(values)


def write_trace(path: str | Path, iats_us: Sequence[int]) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in iats_us))
