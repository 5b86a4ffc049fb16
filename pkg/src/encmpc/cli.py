"""Command-line workbench: synthesize, run, bench, attack.

Every command is driven by one RunConfig assembled from defaults, an
optional JSON config file, and command-line overrides (flags win).  All
randomness is seeded from the config, so rerunning a command with the
same inputs reproduces its CSV outputs byte for byte; wall-clock
measurements therefore go to stdout, never into a CSV.

Exit codes: 0 success, 1 runtime fault, 2 configuration error.
"""

import argparse
import json
import math
import random
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

from .attack import (attack_table_csv, default_settings, gather_observations,
                     run_attack_table, NOISE_KINDS)
from .config import ConfigError, RunConfig
from .mpqp import PwaController, _fmt_17g
from .paillier import keygen
from .protocol import BACKENDS
from .simulation import (attack_scenario, benchmark_scenario, input_mismatch,
                         load_scenario, run_closed_loop, tracking_rmse,
                         trajectory_csv)

# Table V column order
ATTACK_BACKENDS = ("plaintext", "paillier", "qe", "qe_quantized")

CONFIG_FIELDS = tuple(f.name for f in dataclass_fields(RunConfig))


def _load_json(path):
    """json.load with the parse location attached to any failure."""
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: "
            f"{exc.msg}") from exc


def runconfig_from_dict(data):
    unknown = sorted(set(data) - set(CONFIG_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config fields: {unknown}")
    extra = dict(data.get("extra", {}))
    explicit = tuple(k for k in ("delta", "w") if k in data)
    if explicit:
        extra.setdefault("explicit", explicit)
    kwargs = {k: v for k, v in data.items() if k != "extra"}
    return RunConfig(extra=extra, **kwargs)


def build_config(args):
    """Merge defaults, config file, and flags; flags win.

    Returns (config, set_keys) where set_keys records which fields were
    given explicitly rather than defaulted.
    """
    data = {}
    if args.config:
        data = _load_json(args.config)
        if not isinstance(data, dict):
            raise ConfigError(f"{args.config}: config must be a JSON object")
    overrides = {
        "seed_keys": args.seed_keys,
        "seed_quant": args.seed_quant,
        "seed_attack": args.seed_attack,
        "backend": args.backend,
        "out_dir": args.out,
        "epsilon_q": args.epsilon_q,
    }
    for key, val in overrides.items():
        if val is not None:
            data[key] = val
    cfg = runconfig_from_dict(data)
    if cfg.backend not in BACKENDS:
        raise ConfigError(f"unknown backend {cfg.backend!r}; "
                          f"choose from {', '.join(BACKENDS)}")
    return cfg, frozenset(data)


def config_with(cfg, **updates):
    """A new RunConfig equal to cfg with some fields replaced.

    Rebuilt from scratch so epsilon_q rederivation in __post_init__ sees
    the new values.
    """
    data = {name: getattr(cfg, name) for name in CONFIG_FIELDS
            if name != "extra"}
    data.update(updates)
    extra = dict(cfg.extra)
    explicit = set(extra.get("explicit", ())) | ({"delta", "w"} & set(updates))
    if explicit:
        extra["explicit"] = tuple(sorted(explicit))
    return RunConfig(extra=extra, **data)


def resolve_scenario(cfg, default):
    if cfg.scenario_path:
        with open(cfg.scenario_path) as fh:
            text = fh.read()
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{cfg.scenario_path}: malformed JSON at line {exc.lineno} "
                f"column {exc.colno}: {exc.msg}") from exc
        from .simulation import scenario_from_dict
        return scenario_from_dict(payload)
    return default()


def _controller_path(cfg):
    return Path(cfg.out_dir) / "controller.json"


def _write_text(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def cmd_synthesize(cfg):
    scenario = resolve_scenario(cfg, benchmark_scenario)
    controller = scenario.synthesize_controller()
    path = _controller_path(cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    controller.save(path)
    radii = sorted(reg.cheb_radius for reg in controller.regions)
    mid = radii[len(radii) // 2]
    print(f"scenario {scenario.name}: {controller.nregions} regions -> {path}")
    print(f"chebyshev radii: min {_fmt_17g(radii[0])} "
          f"median {_fmt_17g(mid)} max {_fmt_17g(radii[-1])}")
    return 0


def cmd_run(cfg):
    scenario = resolve_scenario(cfg, benchmark_scenario)
    path = _controller_path(cfg)
    if not path.exists():
        raise ConfigError(f"controller file {path} not found; "
                          f"run `encmpc synthesize` first")
    controller = PwaController.load(path)
    traj = run_closed_loop(scenario, cfg.backend, cfg, controller=controller)
    out = Path(cfg.out_dir) / f"trajectory_{cfg.backend}.csv"
    _write_text(out, trajectory_csv(traj))
    if traj.records:
        mis_mean, mis_max = input_mismatch(traj)
        print(f"backend {cfg.backend}: {len(traj.records)} steps, "
              f"tracking rmse {tracking_rmse(traj):.6g}, "
              f"mismatch mean {mis_mean:.3e} max {mis_max:.3e} -> {out}")
    else:
        print(f"backend {cfg.backend}: no completed steps -> {out}")
    if traj.fault:
        print(f"fault at step {traj.fault_k}: {traj.fault}", file=sys.stderr)
        return 1
    return 0


def _coerce(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def parse_sweep(spec):
    """Parse "field=v1,v2;field2=v3" into a list of override dicts.

    The empty spec is the single empty point.  Clauses cross-multiply in
    the order given, so row order is deterministic.
    """
    points = [{}]
    if not spec:
        return points
    for clause in spec.split(";"):
        clause = clause.strip()
        if not clause:
            continue
        name, sep, values = clause.partition("=")
        name = name.strip()
        if not sep or not name:
            raise ConfigError(f"bad sweep clause {clause!r}; "
                              f"expected field=value[,value...]")
        if name != "backend" and name not in CONFIG_FIELDS:
            raise ConfigError(f"unknown sweep field {name!r}")
        vals = [_coerce(v.strip()) for v in values.split(",") if v.strip()]
        if not vals:
            raise ConfigError(f"sweep clause {clause!r} lists no values")
        points = [dict(pt, **{name: v}) for pt in points for v in vals]
    return points


BENCH_COLUMNS = (
    "backend", "steps", "key_bits", "p_bits", "w_b", "w", "rho", "gamma",
    "delta", "epsilon_q", "rmse", "mismatch_max",
    "payload_s_to_c", "payload_c_to_a", "payload_total",
    "enc", "con", "dec", "sums", "he_enc", "he_dec", "he_add", "he_mul",
    "cost_he", "cost_qe",
)


def _bench_row(cfg, traj):
    if traj.records:
        met = traj.metrics[0]
        counts = met.counts
        payload = met.payload_bits
        cost = met.model_cost
        _, mis_max = input_mismatch(traj)
    else:
        counts = {}
        payload = {}
        cost = {}
        mis_max = float("inf")
    vals = {
        "backend": traj.backend,
        "steps": len(traj.records),
        "key_bits": cfg.key_bits,
        "p_bits": cfg.p_bits,
        "w_b": cfg.w_b,
        "w": cfg.w,
        "rho": cfg.rho,
        "gamma": cfg.gamma,
        "delta": cfg.delta,
        "epsilon_q": "" if cfg.epsilon_q is None else _fmt_17g(cfg.epsilon_q),
        "rmse": _fmt_17g(tracking_rmse(traj)),
        "mismatch_max": _fmt_17g(mis_max),
        "payload_s_to_c": payload.get("s_to_c", 0),
        "payload_c_to_a": payload.get("c_to_a", 0),
        "payload_total": payload.get("total", 0),
        "cost_he": cost.get("C_HE", 0),
        "cost_qe": cost.get("C_QE", 0),
    }
    for key in ("enc", "con", "dec", "sums", "he_enc", "he_dec",
                "he_add", "he_mul"):
        vals[key] = counts.get(key, 0)
    return ",".join(str(vals[col]) for col in BENCH_COLUMNS)


def _mean_wall(traj, part):
    if not traj.metrics:
        return float("nan")
    return sum(met.wall_time[part] for met in traj.metrics) / len(traj.metrics)


def cmd_bench(cfg, sweep_spec, backend_pinned):
    scenario = resolve_scenario(cfg, benchmark_scenario)
    path = _controller_path(cfg)
    if path.exists():
        controller = PwaController.load(path)
    else:
        controller = scenario.synthesize_controller()
    points = parse_sweep(sweep_spec)
    keypairs = {}
    lines = [",".join(BENCH_COLUMNS)]
    for point in points:
        point_cfg = config_with(cfg, **{k: v for k, v in point.items()
                                        if k != "backend"})
        if "backend" in point:
            backends = (point["backend"],)
        elif backend_pinned:
            backends = (cfg.backend,)
        else:
            backends = BACKENDS
        for backend in backends:
            if backend not in BACKENDS:
                raise ConfigError(f"unknown backend {backend!r}")
            keypair = None
            if backend == "paillier":
                bits = point_cfg.key_bits
                if bits not in keypairs:
                    keypairs[bits] = keygen(bits,
                                            random.Random(point_cfg.seed_keys))
                keypair = keypairs[bits]
            traj = run_closed_loop(scenario, backend, point_cfg,
                                   controller=controller, keypair=keypair)
            lines.append(_bench_row(point_cfg, traj))
            print(f"timing {backend} (L={point_cfg.key_bits} "
                  f"p={point_cfg.p_bits}): per-cycle mean "
                  f"sensor {_mean_wall(traj, 'sensor'):.3e}s "
                  f"cloud {_mean_wall(traj, 'cloud'):.3e}s "
                  f"actuator {_mean_wall(traj, 'actuator'):.3e}s "
                  f"total {_mean_wall(traj, 'total'):.3e}s"
                  + (f" [fault at {traj.fault_k}: {traj.fault}]"
                     if traj.fault else ""))
    out = Path(cfg.out_dir) / "bench.csv"
    _write_text(out, "\r\n".join(lines) + "\r\n")
    print(f"{len(lines) - 1} rows -> {out} "
          f"(wall times on stdout only: CSVs stay byte-reproducible)")
    return 0


def cmd_attack(cfg):
    scenario = resolve_scenario(cfg, attack_scenario)
    controller = scenario.synthesize_controller()
    keypair = keygen(cfg.key_bits, random.Random(cfg.seed_keys))
    observations = gather_observations(scenario, controller, cfg,
                                       ATTACK_BACKENDS, keypair=keypair)
    settings = default_settings(trials=cfg.attack_trials)
    table = run_attack_table(observations, settings, cfg.seed_attack)
    out = Path(cfg.out_dir) / "attack.csv"
    _write_text(out, attack_table_csv(table, ATTACK_BACKENDS))
    width = max(len(b) for b in ATTACK_BACKENDS)
    print(f"scenario {scenario.name}, {cfg.attack_trials} trials per cell")
    header = "noise     " + " ".join(f"{b:>{width}}" for b in ATTACK_BACKENDS)
    print(header)
    for kind in NOISE_KINDS:
        cells = []
        for backend in ATTACK_BACKENDS:
            val = table[(kind, backend)]
            cells.append(f"{'undefined' if math.isnan(val) else f'{val:.3e}':>{width}}")
        print(f"{kind:9s} " + " ".join(cells))
    print(f"-> {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="encmpc",
        description="Explicit MPC synthesis and encrypted evaluation workbench")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="JSON run configuration")
    common.add_argument("--seed-keys", type=int, metavar="N",
                        help="key material seed")
    common.add_argument("--seed-quant", type=int, metavar="N",
                        help="stochastic quantizer seed")
    common.add_argument("--seed-attack", type=int, metavar="N",
                        help="adversary noise seed")
    common.add_argument("--backend", metavar="NAME",
                        help="one of " + ", ".join(BACKENDS))
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--epsilon-q", type=float, metavar="FLOAT",
                        help="accuracy target; derives delta, w, p")
    common.add_argument("--sweep", metavar="SPEC", default="",
                        help="bench grid, e.g. 'key_bits=1024,2048;w=8,12'")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synthesize", parents=[common],
                   help="enumerate critical regions, write controller.json")
    sub.add_parser("run", parents=[common],
                   help="closed-loop run, write trajectory CSV")
    sub.add_parser("bench", parents=[common],
                   help="payload/count/cost table over a parameter sweep")
    sub.add_parser("attack", parents=[common],
                   help="least-squares eavesdropping table")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg, set_keys = build_config(args)
        if args.command == "synthesize":
            return cmd_synthesize(cfg)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "bench":
            return cmd_bench(cfg, args.sweep, "backend" in set_keys)
        if args.command == "attack":
            return cmd_attack(cfg)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime fault, not a config problem
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
