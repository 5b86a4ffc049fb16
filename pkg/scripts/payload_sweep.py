"""Payload bits per cycle versus accuracy target, per backend.

Sweeps the accuracy target epsilon_q and reports what each encrypted
backend puts on the wire for one benchmark cycle: the exp/log cipher at
full 64-bit lanes, its quantized variant at the matched word width, and
Paillier at several key sizes.  Every row is measured off a real cycle,
not recomputed from the closed forms (the protocol tests already pin
those equal).

Usage: python scripts/payload_sweep.py [--out out/payload_sweep.csv]
"""

import argparse
import math
import random
import sys
from pathlib import Path

import numpy as np

from encmpc.config import RunConfig
from encmpc.mpqp import _fmt_17g
from encmpc.paillier import keygen
from encmpc.protocol import make_parties, run_cycle
from encmpc.simulation import benchmark_scenario

EPS_EXPONENTS = (4, 6, 8, 10, 12, 16, 20, 24)
KEY_BITS = (1024, 2048)


def one_cycle_payload(controller, backend, cfg, x, keypair=None):
    sensor, cloud, actuator, _ = make_parties(controller, backend, cfg,
                                              keypair=keypair)
    _, metrics = run_cycle(x, sensor, cloud, actuator, 0)
    return metrics.payload_bits["total"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/payload_sweep.csv")
    args = ap.parse_args(argv)

    scenario = benchmark_scenario()
    controller = scenario.synthesize_controller()
    x = np.asarray(scenario.x0, dtype=float)
    keypairs = {L: keygen(L, random.Random(1)) for L in KEY_BITS}

    header = ["epsilon_q", "w", "qe_bits", "qe_quantized_bits"]
    header += [f"paillier_bits_L{L}" for L in KEY_BITS]
    rows = []
    for exp in EPS_EXPONENTS:
        eps = 2.0 ** -exp
        cfg = RunConfig(epsilon_q=eps, key_bits=KEY_BITS[0])
        row = {
            "epsilon_q": _fmt_17g(eps),
            "w": cfg.w,
            "qe_bits": one_cycle_payload(controller, "qe", cfg, x),
            "qe_quantized_bits": one_cycle_payload(
                controller, "qe_quantized", cfg, x),
        }
        for L in KEY_BITS:
            cfg_l = RunConfig(epsilon_q=eps, key_bits=L)
            row[f"paillier_bits_L{L}"] = one_cycle_payload(
                controller, "paillier", cfg_l, x, keypair=keypairs[L])
        rows.append(row)
        ratio = row["qe_bits"] / row[f"paillier_bits_L{KEY_BITS[-1]}"]
        print(f"eps=2^-{exp:<3d} w={row['w']:<3d} qe={row['qe_bits']:<6d} "
              f"quantized={row['qe_quantized_bits']:<6d} "
              + " ".join(f"paillier(L={L})={row[f'paillier_bits_L{L}']}"
                         for L in KEY_BITS)
              + f"  qe/paillier={ratio:.4f}")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines += [",".join(str(r[c]) for c in header) for r in rows]
    with open(out, "w", newline="") as fh:
        fh.write("\r\n".join(lines) + "\r\n")
    print(f"-> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
