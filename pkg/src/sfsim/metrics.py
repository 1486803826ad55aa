"""Per-request outcomes and aggregate statistics."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class RequestRecord:
    request_id: int
    group_label: int
    arrival_us: int
    first_start_us: int
    completion_us: int
    service_us: int  # IDEAL turnaround: all CPU and IO segments back to back
    cpu_us: int
    n_context_switches: int
    n_io_blocks: int
    initial_queuing_delay_us: int
    dispatch_class_history: tuple[str, ...] = ()

    @property
    def turnaround_us(self) -> int:
        return self.completion_us - self.arrival_us

    @property
    def wait_us(self) -> int:
        return self.turnaround_us - self.service_us

    @property
    def rte(self) -> float:
        return rte(self)

    def check(self) -> None:
        if not self.arrival_us <= self.first_start_us <= self.completion_us:
            raise ReportError(f"request {self.request_id}: times out of order")
        if self.wait_us < 0:
            raise ReportError(f"request {self.request_id}: negative wait")


def rte(record: RequestRecord) -> float:
    """Service time over turnaround; 1.0 means the request never waited."""
    ta = record.completion_us - record.arrival_us
    if ta <= 0:
        raise ReportError(f"request {record.request_id}: non-positive turnaround")
    return record.service_us / ta


def percentile(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    if not len(values):
        raise ReportError("percentile of empty data")
    if not 0 <= p <= 100:
        raise ReportError(f"percentile {p} outside [0, 100]")
    s = sorted(values)
    rank = max(1, math.ceil(p / 100.0 * len(s)))
    return s[rank - 1]


def cdf(values: Sequence[float], grid: Sequence[float] | None = None) -> list[tuple[float, float]]:
    """Empirical CDF evaluated on ``grid`` (default: the distinct values)."""
    if not len(values):
        raise ReportError("CDF of empty data")
    s = sorted(values)
    n = len(s)
    if grid is None:
        grid = sorted(set(s))
    out = []
    j = 0
    for x in sorted(grid):
        while j < n and s[j] <= x:
            j += 1
        out.append((x, j / n))
    return out


def switch_ratio(
    records_a: Sequence[RequestRecord], records_b: Sequence[RequestRecord]
) -> dict[int, float]:
    """Per request: switches under A over max(1, switches under B)."""
    a = {r.request_id: r.n_context_switches for r in records_a}
    b = {r.request_id: r.n_context_switches for r in records_b}
    if a.keys() != b.keys():
        raise ReportError("switch_ratio needs the same request ids on both sides")
    return {i: a[i] / max(1, b[i]) for i in sorted(a)}


PERCENTILES = (50, 75, 90, 99, 99.9)
RTE_GRID = tuple(round(0.05 * i, 2) for i in range(21))


def turnaround_grid_us() -> list[int]:
    """Log grid from 1 ms to 1000 s, ten points per decade."""
    return [int(round(1000 * 10 ** (i / 10))) for i in range(61)]


def _pct_table(values: Sequence[float]) -> dict[str, float]:
    return {f"p{p:g}": percentile(values, p) for p in PERCENTILES}


def summarize(records: Sequence[RequestRecord], slice_series: Iterable = ()) -> dict:
    """SummaryReport fields for one policy run, JSON-ready with stable keys."""
    if not records:
        raise ReportError("no records")
    ta = [r.turnaround_us for r in records]
    rtes = [rte(r) for r in records]
    qd = [r.initial_queuing_delay_us for r in records]
    sw = [r.n_context_switches for r in records]
    groups: dict[int, list[int]] = {}
    for r in records:
        groups.setdefault(r.group_label, []).append(r.turnaround_us)
    return {
        "n_requests": len(records),
        "turnaround_us": {
            "mean": sum(ta) / len(ta),
            "percentiles": _pct_table(ta),
            "cdf": [[x, f] for x, f in cdf(ta, turnaround_grid_us())],
        },
        "rte": {
            "mean": sum(rtes) / len(rtes),
            "percentiles": _pct_table(rtes),
            "cdf": [[x, f] for x, f in cdf(rtes, RTE_GRID)],
        },
        "group_median_turnaround_us": {
            str(g): percentile(v, 50) for g, v in sorted(groups.items())
        },
        "context_switches": {
            "total": sum(sw),
            "per_request_mean": sum(sw) / len(sw),
        },
        "queuing_delay_us": {
            "mean": sum(qd) / len(qd),
            "percentiles": _pct_table(qd),
        },
        "slice_timeline_us": [list(p) for p in slice_series],
    }


def compare(results: dict[str, Sequence[RequestRecord]], baseline: str | None = None) -> dict:
    """Cross-policy comparison; switch ratios are baseline over each policy."""
    out: dict = {"policies": {}}
    for name, recs in results.items():
        ta = [r.turnaround_us for r in recs]
        rtes = [rte(r) for r in recs]
        out["policies"][name] = {
            "turnaround_percentiles_us": _pct_table(ta),
            "turnaround_cdf": [[x, f] for x, f in cdf(ta, turnaround_grid_us())],
            "rte_cdf": [[x, f] for x, f in cdf(rtes, RTE_GRID)],
            "mean_turnaround_us": sum(ta) / len(ta),
        }
    if baseline is not None and baseline in results:
        ratios = {}
        for name, recs in results.items():
            if name == baseline:
                continue
            r = list(switch_ratio(results[baseline], recs).values())
            ratios[name] = {
                "percentiles": _pct_table(r),
                "cdf": [[x, f] for x, f in cdf(r)],
            }
        out["switch_ratio_baseline"] = baseline
        out["switch_ratios"] = ratios
    return out


CSV_HEADER = (
    "request_id", "group", "arrival_us", "start_us", "completion_us",
    "service_us", "wait_us", "switches", "rte",
)


def records_csv(records: Sequence[RequestRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([
            r.request_id, r.group_label, r.arrival_us, r.first_start_us, r.completion_us,
            r.service_us, r.wait_us, r.n_context_switches, f"{rte(r):.9f}",
        ])
    return buf.getvalue()


def read_records_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    for row in rows:
        for k in CSV_HEADER:
            row[k] = float(row[k]) if k == "rte" else int(row[k])
    return rows


def timeline_csv(timeline: Sequence[tuple[int, int, int, str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("time_us", "core", "task", "event"))
    w.writerows(timeline)
    return buf.getvalue()


def series_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
