"""Eavesdropping table: least-squares adversary versus every backend.

Runs the identification probe scenario once per backend under a wiretap,
then scores the adversary's rollout across the four noise settings.
Bigger numbers mean the adversary did worse, so encrypted columns should
dominate the plaintext column by a wide factor in every row.

Usage: python scripts/attack_table.py [--trials 200] [--seed 3]
                                      [--out out/attack.csv]
"""

import argparse
import random
import sys
from pathlib import Path

from encmpc.attack import (attack_table_csv, default_settings,
                           gather_observations, run_attack_table, NOISE_KINDS)
from encmpc.config import RunConfig
from encmpc.paillier import keygen
from encmpc.simulation import attack_scenario

BACKENDS = ("plaintext", "paillier", "qe", "qe_quantized")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--key-bits", type=int, default=512)
    ap.add_argument("--out", default="out/attack.csv")
    args = ap.parse_args(argv)

    scenario = attack_scenario()
    controller = scenario.synthesize_controller()
    cfg = RunConfig(key_bits=args.key_bits, seed_attack=args.seed,
                    attack_trials=args.trials)
    keypair = keygen(args.key_bits, random.Random(cfg.seed_keys))
    observations = gather_observations(scenario, controller, cfg, BACKENDS,
                                       keypair=keypair)
    table = run_attack_table(observations,
                             default_settings(trials=args.trials), args.seed)

    width = max(len(b) for b in BACKENDS)
    print(f"{args.trials} trials per cell, seed {args.seed}")
    print("noise     " + " ".join(f"{b:>{width}}" for b in BACKENDS)
          + "   min encrypted/plaintext")
    ok = True
    for kind in NOISE_KINDS:
        plain = table[(kind, "plaintext")]
        cells = " ".join(f"{table[(kind, b)]:{width}.3e}" for b in BACKENDS)
        ratio = min(table[(kind, b)] / plain for b in BACKENDS[1:])
        ok = ok and ratio >= 5.0
        print(f"{kind:9s} {cells}   {ratio:8.1f}x")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        fh.write(attack_table_csv(table, BACKENDS))
    print(f"-> {out}" + ("" if ok else "  (separation below 5x!)"))
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
