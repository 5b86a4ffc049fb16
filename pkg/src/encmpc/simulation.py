"""Closed-loop simulation of an LTI plant under any protocol backend.

A scenario bundles the plant, the MPC design, an initial state, and a
piecewise-constant output reference.  Tracking is realized in regulation
form: for each reference value r the steady-state pair (x_ss, u_ss) with
C_out x_ss = r is computed from the square system [[A-I, B], [C_out, 0]],
the controller runs on the shifted state x - x_ss, and u_ss is added back
to the applied input.

Every step also evaluates the plaintext PWA law on the same shifted
state, so trajectories carry a per-step input-mismatch column against
the exact law.  A failed point location or a ciphertext leaving its
representable range stops the loop and records the fault instead of
raising.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, RunConfig
from .mpqp import (
    LtiSystem,
    MpcSpec,
    PwaController,
    StateNotCovered,
    _fmt_17g,
    synthesize,
)
from .polyhedra import box
from .protocol import EavesdropLog, make_parties, run_cycle
from .qe_cipher import CiphertextError, MagnitudeError, RangeError


def step_plant(sys, x, u):
    """One plant update x+ = A x + B u."""
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    return sys.A @ x + sys.B @ u


@dataclass
class Scenario:
    """Plant, MPC design, and reference program for one experiment."""

    name: str
    A: np.ndarray
    B: np.ndarray
    C_out: np.ndarray
    horizon: int
    Q: np.ndarray
    R: np.ndarray
    u_lo: np.ndarray
    u_hi: np.ndarray
    x_lo: np.ndarray
    x_hi: np.ndarray
    x0: np.ndarray
    T: int = 60
    r_steps: tuple = ((0, 0.0),)  # (start step, reference value) pairs

    def __post_init__(self):
        for name in ("A", "B", "C_out", "Q", "R"):
            setattr(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        for name in ("u_lo", "u_hi", "x_lo", "x_hi", "x0"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).ravel())

    def system(self):
        return LtiSystem(self.A, self.B, C_out=self.C_out)

    def mpc_spec(self):
        return MpcSpec(
            horizon=self.horizon,
            Q=self.Q,
            R=self.R,
            U=box(self.u_lo, self.u_hi),
            X=box(self.x_lo, self.x_hi),
        )

    def synthesize_controller(self):
        return synthesize(self.system(), self.mpc_spec())

    def reference(self, k):
        """Reference output value active at step k."""
        r = self.r_steps[0][1]
        for start, val in self.r_steps:
            if k >= start:
                r = val
        return np.atleast_1d(np.asarray(r, dtype=float))

    def steady_state(self, r):
        """(x_ss, u_ss) with x_ss = A x_ss + B u_ss and C_out x_ss = r."""
        n = self.A.shape[0]
        m = self.B.shape[1]
        p = self.C_out.shape[0]
        M = np.zeros((n + p, n + m))
        M[:n, :n] = self.A - np.eye(n)
        M[:n, n:] = self.B
        M[n:, :n] = self.C_out
        rhs = np.concatenate([np.zeros(n), np.atleast_1d(r)])
        sol, res, rank, _ = np.linalg.lstsq(M, rhs, rcond=None)
        if np.linalg.norm(M @ sol - rhs) > 1e-9:
            raise ConfigError(f"no steady state for reference {r}")
        return sol[:n], sol[n:]


def benchmark_scenario():
    """Double-integrator regulation benchmark with a stepped reference."""
    return Scenario(
        name="double-integrator",
        A=[[1.0, 1.0], [0.0, 1.0]],
        B=[[0.5], [1.0]],
        C_out=[[1.0, 0.0]],
        horizon=5,
        Q=np.diag([1.0, 0.1]),
        R=[[0.5]],
        u_lo=[-1.0],
        u_hi=[1.0],
        x_lo=[-5.0, -5.0],
        x_hi=[5.0, 5.0],
        x0=[-3.0, 0.5],
        T=60,
        r_steps=((0, 0.0), (20, 1.5), (40, -1.0)),
    )


def attack_scenario():
    """Strictly stable plant used for the eavesdropping experiment.

    Identification rollouts re-inject the recorded inputs open loop, so
    a marginally stable plant (the double integrator) amplifies any fit
    error exponentially and even the plaintext adversary diverges once
    its observations carry noise.  A contractive plant keeps the honest
    baseline meaningful: the plaintext adversary stays accurate under
    every noise setting and the confidentiality gap measures the
    encryption, not the plant's instability.
    """
    return Scenario(
        name="attack-probe",
        A=[[0.9, 0.2], [-0.15, 0.8]],
        B=[[0.1], [0.7]],
        C_out=[[1.0, 0.0]],
        horizon=5,
        Q=np.diag([1.0, 1.0]),
        R=[[0.5]],
        u_lo=[-1.0],
        u_hi=[1.0],
        x_lo=[-5.0, -5.0],
        x_hi=[5.0, 5.0],
        x0=[2.5, -1.0],
        T=60,
        r_steps=((0, 0.0),),
    )


def scenario_to_dict(sc):
    return {
        "name": sc.name,
        "A": sc.A.tolist(),
        "B": sc.B.tolist(),
        "C_out": sc.C_out.tolist(),
        "horizon": sc.horizon,
        "Q": sc.Q.tolist(),
        "R": sc.R.tolist(),
        "u_lo": sc.u_lo.tolist(),
        "u_hi": sc.u_hi.tolist(),
        "x_lo": sc.x_lo.tolist(),
        "x_hi": sc.x_hi.tolist(),
        "x0": sc.x0.tolist(),
        "T": sc.T,
        "r_steps": [[int(k), float(v)] for k, v in sc.r_steps],
    }


def scenario_from_dict(d):
    required = {"name", "A", "B", "C_out", "horizon", "Q", "R",
                "u_lo", "u_hi", "x_lo", "x_hi", "x0"}
    missing = required - set(d)
    if missing:
        raise ConfigError(f"scenario missing fields: {sorted(missing)}")
    return Scenario(
        name=d["name"], A=d["A"], B=d["B"], C_out=d["C_out"],
        horizon=int(d["horizon"]), Q=d["Q"], R=d["R"],
        u_lo=d["u_lo"], u_hi=d["u_hi"], x_lo=d["x_lo"], x_hi=d["x_hi"],
        x0=d["x0"], T=int(d.get("T", 60)),
        r_steps=tuple((int(k), float(v)) for k, v in d.get("r_steps", [[0, 0.0]])),
    )


def load_scenario(path):
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))


@dataclass
class StepRecord:
    k: int
    x: np.ndarray
    sigma: int
    u: np.ndarray
    u_plain: np.ndarray
    y: np.ndarray
    r: np.ndarray
    payload_bits: int


@dataclass
class Trajectory:
    backend: str
    records: list = field(default_factory=list)
    metrics: list = field(default_factory=list)
    fault: str = ""
    fault_k: int = -1

    def __len__(self):
        return len(self.records)


def run_closed_loop(scenario, backend, cfg=None, controller=None,
                    keypair=None, log=None, T=None, dither=None):
    """Simulate the plant under one backend; returns a Trajectory.

    The plaintext law is evaluated in parallel each step for the
    mismatch column.  Faults (state outside the partition, ciphertext
    out of representable range) stop the loop and are recorded.

    dither, if given, is a (T, m) probing sequence added to the applied
    input at the plant (identification experiments need the input to
    carry excitation that is not a function of the state).  It shifts
    the encrypted and plaintext laws identically, so the mismatch
    column is unaffected.
    """
    cfg = cfg if cfg is not None else RunConfig(backend=backend)
    if controller is None:
        controller = scenario.synthesize_controller()
    sys = scenario.system()
    sensor, cloud, actuator, cost = make_parties(
        controller, backend, cfg, keypair=keypair)
    T = T if T is not None else (cfg.steps if cfg.steps else scenario.T)

    traj = Trajectory(backend=backend)
    x = np.asarray(scenario.x0, dtype=float).ravel()
    for k in range(T):
        r = scenario.reference(k)
        x_ss, u_ss = scenario.steady_state(r)
        x_shift = x - x_ss
        try:
            u_tilde, metrics = run_cycle(x_shift, sensor, cloud, actuator,
                                         k, log=log, cost=cost)
            u_plain_tilde, _ = controller.evaluate(x_shift)
        except (StateNotCovered, RangeError, MagnitudeError,
                CiphertextError) as exc:
            traj.fault = f"{type(exc).__name__}: {exc}"
            traj.fault_k = k
            break
        u = u_tilde + u_ss
        u_plain = u_plain_tilde + u_ss
        if dither is not None:
            u = u + dither[k]
            u_plain = u_plain + dither[k]
        y = sys.C_out @ x
        traj.records.append(StepRecord(
            k=k, x=x.copy(), sigma=metrics.sigma, u=u, u_plain=u_plain,
            y=y, r=r, payload_bits=metrics.payload_bits["total"]))
        traj.metrics.append(metrics)
        x = step_plant(sys, x, u)
    return traj


def tracking_rmse(traj):
    """RMSE of the tracking error y - r over recorded steps.

    A faulted trajectory scores +inf: dying early must not look like
    good tracking.
    """
    if not traj.records:
        return float("inf")
    if traj.fault:
        return float("inf")
    err = np.array([rec.y - rec.r for rec in traj.records])
    return float(np.sqrt(np.mean(err**2)))


def input_mismatch(traj):
    """(mean, max) over steps of the max-abs gap to the plaintext law."""
    if not traj.records:
        raise ValueError("empty trajectory")
    gaps = np.array([np.abs(rec.u - rec.u_plain).max() for rec in traj.records])
    return float(gaps.mean()), float(gaps.max())


def _csv_quote(text):
    return '"' + str(text).replace('"', '""') + '"'


def trajectory_csv(traj):
    """Deterministic CSV text (%.17g floats, RFC-4180 line ends).

    A faulted run ends with one extra row recording the fault step and
    the quoted diagnostic.
    """
    if not traj.records:
        lines = ["k"]
        if traj.fault:
            lines.append(f"{traj.fault_k},{_csv_quote(traj.fault)}")
        return "\r\n".join(lines) + "\r\n"
    first = traj.records[0]
    n = first.x.size
    m = first.u.size
    p = first.y.size
    cols = (["k"] + [f"x{i}" for i in range(n)] + ["sigma"]
            + [f"u{j}" for j in range(m)] + [f"u_plain{j}" for j in range(m)]
            + [f"y{i}" for i in range(p)] + [f"r{i}" for i in range(p)]
            + ["payload_bits"])
    lines = [",".join(cols)]
    for rec in traj.records:
        vals = ([str(rec.k)] + [_fmt_17g(v) for v in rec.x] + [str(rec.sigma)]
                + [_fmt_17g(v) for v in rec.u] + [_fmt_17g(v) for v in rec.u_plain]
                + [_fmt_17g(v) for v in rec.y] + [_fmt_17g(v) for v in rec.r]
                + [str(rec.payload_bits)])
        lines.append(",".join(vals))
    if traj.fault:
        lines.append(f"{traj.fault_k},{_csv_quote(traj.fault)}")
    return "\r\n".join(lines) + "\r\n"
