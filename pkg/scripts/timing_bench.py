"""Per-party wall time per cycle, per backend.

Replays the benchmark loop under every backend and prints mean per-cycle
wall time for sensor, cloud, and actuator, plus the total.  Absolute
numbers are host-dependent, so nothing here lands in a CSV; the quantity
of interest is the ordering (the exp/log cipher beats Paillier by orders
of magnitude once keys are realistically sized).

Usage: python scripts/timing_bench.py [--key-bits 1024] [--cycles 200]
"""

import argparse
import random
import sys

import numpy as np

from encmpc.config import RunConfig
from encmpc.paillier import keygen
from encmpc.protocol import BACKENDS, make_parties, run_cycle
from encmpc.simulation import benchmark_scenario, run_closed_loop


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--key-bits", type=int, default=1024)
    ap.add_argument("--cycles", type=int, default=200)
    args = ap.parse_args(argv)

    scenario = benchmark_scenario()
    controller = scenario.synthesize_controller()
    keypair = keygen(args.key_bits, random.Random(1))
    x = np.asarray(scenario.x0, dtype=float)

    print(f"{args.cycles} cycles each, L={args.key_bits}, state {x.tolist()}")
    print(f"{'backend':13s} {'sensor':>10s} {'cloud':>10s} "
          f"{'actuator':>10s} {'total':>10s}")
    totals = {}
    for backend in BACKENDS:
        cfg = RunConfig(backend=backend, key_bits=args.key_bits)
        sensor, cloud, actuator, _ = make_parties(
            controller, backend, cfg,
            keypair=keypair if backend == "paillier" else None)
        sums = {"sensor": 0.0, "cloud": 0.0, "actuator": 0.0, "total": 0.0}
        for k in range(args.cycles):
            _, metrics = run_cycle(x, sensor, cloud, actuator, k)
            for part in sums:
                sums[part] += metrics.wall_time[part]
        means = {part: sums[part] / args.cycles for part in sums}
        totals[backend] = means["total"]
        print(f"{backend:13s} " + " ".join(
            f"{means[part] * 1e3:9.4f}ms" for part in
            ("sensor", "cloud", "actuator", "total")))

    faster = totals["qe"] < totals["paillier"]
    print(f"qe/paillier total ratio: {totals['qe'] / totals['paillier']:.4f} "
          f"({'qe faster' if faster else 'ORDERING VIOLATED'})")
    return 0 if faster else 1


if __name__ == "__main__":
    sys.exit(main())
