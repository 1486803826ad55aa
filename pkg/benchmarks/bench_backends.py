"""Compare the compiled kernel with the pure-Python engine.

Runs each policy over the same generated workload on both backends, checks
that the per-request records agree, and reports wall time and speedup.

    python3 benchmarks/bench_backends.py --requests 2000 --policies cfs,sfs,srtf
"""

import argparse
import statistics
import sys
import time

from sfsim import PolicySpec, WorkloadSpec, available_backends, generate, scale_to_load, simulate
from sfsim.workload import IatModel


def timed(requests, spec, cores, backend, repeat):
    times, res = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = simulate(requests, spec, cores, backend=backend)
        times.append(time.perf_counter() - t0)
    return min(times), res


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--requests", type=int, default=2000)
    p.add_argument("--cores", type=int, default=12)
    p.add_argument("--load", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--policies", default="fifo,rr,cfs,srtf,sfs")
    p.add_argument("--repeat", type=int, default=1, help="best-of-N timing")
    args = p.parse_args(argv)

    if "compiled" not in available_backends():
        print("compiled backend not built; only the Python engine is available", file=sys.stderr)
        return 1
    spec = scale_to_load(WorkloadSpec(
        iat=IatModel.poisson(1000), n_requests=args.requests,
        target_load=args.load, cores=args.cores, seed=args.seed,
    ))
    requests = generate(spec)
    print(f"{args.requests} requests, {args.cores} cores, load {args.load}")
    print(f"{'policy':<8} {'python_s':>10} {'compiled_s':>11} {'speedup':>8}  records")
    speedups = []
    for name in args.policies.split(","):
        ps = PolicySpec(name.strip())
        tp, rp = timed(requests, ps, args.cores, "python", args.repeat)
        tc, rc = timed(requests, ps, args.cores, "compiled", args.repeat)
        same = rp.records == rc.records and rp.core_busy_us == rc.core_busy_us
        speedups.append(tp / tc)
        print(f"{name:<8} {tp:>10.3f} {tc:>11.3f} {tp / tc:>7.1f}x  {'identical' if same else 'DIFFER'}")
        if not same:
            return 1
    print(f"geometric-mean speedup {statistics.geometric_mean(speedups):.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
