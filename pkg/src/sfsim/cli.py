"""Command-line scenario runner.

    sfsim CONFIG [--seed N] [--cores N] [--load RHO] [--policies sfs,cfs]
                 [--output-dir DIR] [--timeline] [--print-summary] [--validate]

Exit status: 0 success, 1 configuration error, 2 runtime fault.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import metrics
from .backend import BACKENDS, simulate
from .config import ScenarioConfig, ScenarioError, load_scenario, validate
from .sim import SimulationFault

log = logging.getLogger("sfsim")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAULT = 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sfsim", description="Run a FaaS scheduling scenario.")
    p.add_argument("config", help="scenario JSON file")
    p.add_argument("--seed", type=int, help="override workload.seed (base seed)")
    p.add_argument("--cores", type=int, help="override workload.cores")
    p.add_argument("--load", type=float, help="override workload.target_load")
    p.add_argument("--policies", help="comma-separated policy names, replaces the config list")
    p.add_argument("--baseline", help="override the switch-ratio baseline label")
    p.add_argument("--repeat", type=int, help="override repeat")
    p.add_argument("--output-dir", help="override output_dir")
    p.add_argument("--timeline", action="store_true", help="also write per-run timeline CSVs")
    p.add_argument("--print-summary", action="store_true", help="print a summary table to stdout")
    p.add_argument("--validate", action="store_true", help="only validate the config")
    p.add_argument("--backend", choices=BACKENDS, help="simulation backend (default: fastest available)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _overrides(args) -> dict:
    out = {}
    if args.seed is not None:
        out["workload.seed"] = args.seed
    if args.cores is not None:
        out["workload.cores"] = args.cores
    if args.load is not None:
        out["workload.target_load"] = args.load
    if args.repeat is not None:
        out["repeat"] = args.repeat
    if args.output_dir is not None:
        out["output_dir"] = args.output_dir
    if args.baseline is not None:
        out["baseline"] = args.baseline
    if args.policies is not None:
        out["policies"] = [s.strip() for s in args.policies.split(",") if s.strip()]
    return out


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def run_scenario(cfg: ScenarioConfig, timeline: bool = False, backend: str | None = None) -> dict:
    """Run every (policy, repetition) and write the report files.

    Returns ``{rep: {label: SimResult}}``.
    """
    out_dir = cfg.output_dir
    engine = replace(cfg.engine, record_timeline=timeline)
    all_results = {}
    comparisons = []
    for rep in range(cfg.repeat):
        wspec = cfg.workload_for(rep)
        requests = cfg.requests_for(rep)
        results = {}
        for spec in cfg.policies:
            label = spec.display
            log.info("rep %d seed %d: running %s on %d requests", rep, wspec.seed, label, len(requests))
            res = simulate(requests, spec, wspec.cores, engine, backend=backend)
            results[label] = res
            stem = out_dir / f"{label}.rep{rep}"
            if "csv" in cfg.formats:
                _write(stem.with_name(stem.name + ".requests.csv"), metrics.records_csv(res.records))
                if spec.name == "sfs":
                    _write(
                        stem.with_name(stem.name + ".slice.csv"),
                        metrics.series_csv(("time_us", "slice_us"), res.slice_series),
                    )
                    _write(
                        stem.with_name(stem.name + ".fetch_delay.csv"),
                        metrics.series_csv(("time_us", "request_id", "delay_us"), res.fetch_delays),
                    )
                if timeline:
                    _write(stem.with_name(stem.name + ".timeline.csv"), metrics.timeline_csv(res.timeline))
            if "json" in cfg.formats:
                summary = metrics.summarize(res.records, res.slice_series)
                summary["policy"] = label
                summary["seed"] = wspec.seed
                summary["total_switches"] = res.total_switches
                summary["total_io_switches"] = res.total_io_switches
                summary["makespan_us"] = res.makespan_us
                _write(stem.with_name(stem.name + ".summary.json"), metrics.dumps(summary))
        comp = metrics.compare({k: v.records for k, v in results.items()}, cfg.baseline)
        comp["seed"] = wspec.seed
        comparisons.append(comp)
        all_results[rep] = results
    if "json" in cfg.formats:
        _write(out_dir / "comparison.json", metrics.dumps({"repetitions": comparisons}))
    return all_results


def _summary_table(all_results: dict) -> str:
    lines = [f"{'rep':>3} {'policy':<16} {'p50_ms':>10} {'p99_ms':>12} {'mean_rte':>9} {'switches':>9}"]
    for rep, results in all_results.items():
        for label, res in results.items():
            ta = [r.turnaround_us for r in res.records]
            rte = sum(r.rte for r in res.records) / len(res.records)
            lines.append(
                f"{rep:>3} {label:<16} {metrics.percentile(ta, 50) / 1000:>10.1f} "
                f"{metrics.percentile(ta, 99) / 1000:>12.1f} {rte:>9.3f} {res.total_switches:>9}"
            )
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    if args.validate:
        diags = validate(args.config)
        for d in diags:
            print(d, file=sys.stderr)
        return EXIT_CONFIG if diags else EXIT_OK

    overrides = _overrides(args)
    try:
        cfg = load_scenario(
            args.config, overrides,
            loose_baseline=args.policies is not None and args.baseline is None,
        )
    except ScenarioError as exc:
        for d in exc.diagnostics:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        probe = cfg.output_dir / ".sfsim-write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"config error: output_dir: cannot write to {cfg.output_dir} ({exc})", file=sys.stderr)
        return EXIT_CONFIG

    try:
        all_results = run_scenario(cfg, timeline=args.timeline, backend=args.backend)
    except SimulationFault as exc:
        print(f"simulation fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except Exception as exc:  # anything else is an internal fault too
        log.exception("unexpected failure")
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    if args.print_summary:
        print(_summary_table(all_results))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
