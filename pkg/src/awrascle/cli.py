"""Command-line driver: ``run``, ``sweep``, ``compare`` and ``check``.

Exit codes: 0 ok, 1 invariant failure, 2 configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.integrate import trapezoid

from . import diagnostics as dg
from . import spectral as sp
from .config import ConfigError, RunConfig, expand_sweep, load_config
from .initial import make_initial, perturb
from .model import DomainError, Params
from .snapshot import SnapshotError, is_snapshot, read_snapshot, write_snapshot
from .solver import SolverError, State, run

log = logging.getLogger("awrascle")

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

MASS_RTOL = 1e-10
ENERGY_TOL = 1e-8
COINCIDENCE_TOL = 1e-10


class InvariantFailure(RuntimeError):
    pass


# ----------------------------------------------------------------------------
# invariant checks


class InvariantMonitor:
    """Observer wrapper that records diagnostics and checks run invariants."""

    def __init__(self, params: Params, strict: bool = False):
        self.params = params
        self.strict = strict
        self.failures: list[str] = []
        self.records: list[dg.DiagnosticsRecord] = []

    def _fail(self, message):
        self.failures.append(message)
        if self.strict:
            raise InvariantFailure(message)

    def __call__(self, state, params):
        rec = dg.record(state, params)
        if rec.flagged:
            self._fail(f"t={rec.t:.6g}: non-finite diagnostics")
        if self.records:
            first, prev = self.records[0], self.records[-1]
            if rec.floor_activations == 0:
                drift = abs(rec.mass - first.mass) / first.mass
                if drift > MASS_RTOL:
                    self._fail(f"t={rec.t:.6g}: mass drift {drift:.3e} > {MASS_RTOL:g}")
            rise = rec.momentum_energy - prev.momentum_energy
            if rise > ENERGY_TOL * max(1.0, first.momentum_energy):
                self._fail(f"t={rec.t:.6g}: momentum energy increased by {rise:.3e}")
        if rec.min_rho <= 0:
            self._fail(f"t={rec.t:.6g}: non-positive density {rec.min_rho:.3e}")
        self.records.append(rec)
        return rec


def write_diagnostics(path, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(records[0].header())
        for r in records:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in r.row()])


def _snapshot_writer(directory, every):
    os.makedirs(directory, exist_ok=True)
    counter = {"tick": 0}

    def observer(state, params):
        tick = counter["tick"]
        counter["tick"] += 1
        if every and tick % every == 0:
            write_snapshot(os.path.join(directory, f"snapshot_{tick:06d}.armv"), state)

    return observer


def _metadata(config: RunConfig, initial: State, extra=None) -> dict:
    meta = {
        "params": dataclasses.asdict(config.params),
        "initial": config.initial,
        "initial_options": {k: (list(v) if isinstance(v, tuple) else v) for k, v in config.initial_options.items()},
        "seed": config.seed,
        "cadence": config.cadence,
        "gamma_is_one": config.params.gamma_is_one,
        "initial_energy": dg.total_energy(initial),
    }
    meta.update(extra or {})
    return meta


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=float)


# ----------------------------------------------------------------------------
# run


def initial_state(config: RunConfig) -> State:
    return make_initial(config.initial, config.params, seed=config.seed, **config.initial_options)


def execute(config: RunConfig, out: str, strict: bool = False) -> dict:
    """Run one configuration and write its artifacts into ``out``."""
    os.makedirs(out, exist_ok=True)
    params = config.params
    state0 = initial_state(config)
    monitor = InvariantMonitor(params, strict)
    observers = [monitor]
    if config.snapshot_every:
        observers.append(_snapshot_writer(os.path.join(out, "snapshots"), config.snapshot_every))
    write_snapshot(os.path.join(out, "initial.armv"), state0)
    traj = run(state0, params, observers, cadence=config.cadence)
    write_snapshot(os.path.join(out, "final.armv"), traj.final)
    write_diagnostics(os.path.join(out, "diagnostics.csv"), monitor.records)
    recs = monitor.records
    times = [r.t for r in recs]
    summary = {
        "label": config.label,
        "status": "ok" if not monitor.failures else "invariant_failure",
        "failures": monitor.failures,
        "steps": traj.steps,
        "floor_activations": traj.final.floor_activations,
        "terminal_mass": recs[-1].mass,
        "terminal_internal_energy": recs[-1].internal_energy,
        "integrated_q_dissipation": float(trapezoid([r.q_dissipation for r in recs], times)) if len(recs) > 1 else 0.0,
        "max_momentum_energy": max(r.momentum_energy for r in recs),
    }
    if traj.final.floor_activations:
        log.warning("density floor was activated %d times", traj.final.floor_activations)
    _write_json(os.path.join(out, "metadata.json"), _metadata(config, state0, {"summary": summary}))
    return summary


def cmd_run(args) -> int:
    config = _load(args)
    out = args.out or config.directory
    summary = execute(config, out, args.strict)
    for f in summary["failures"]:
        print(f"FAIL {f}", file=sys.stderr)
    print(f"run finished: {summary['steps']} steps, status {summary['status']}, output in {out}")
    return EXIT_OK if not summary["failures"] else EXIT_INVARIANT


# ----------------------------------------------------------------------------
# sweep


SUMMARY_COLUMNS = (
    "label",
    "status",
    "terminal_mass",
    "terminal_internal_energy",
    "integrated_q_dissipation",
    "max_momentum_energy",
    "floor_activations",
)


def _sweep_task(job):
    config, out, strict = job
    try:
        return execute(config, out, strict)
    except InvariantFailure as exc:
        return {"label": config.label, "status": "invariant_failure", "failures": [str(exc)]}
    except (SolverError, DomainError, ValueError) as exc:
        return {"label": config.label, "status": "runtime_failure", "failures": [str(exc)]}


def uniformity(summaries, columns=("terminal_mass", "terminal_internal_energy", "integrated_q_dissipation")):
    """Relative spread ``(max - min) / max|.|`` of each summary column."""
    out = {}
    for c in columns:
        vals = np.array([s[c] for s in summaries if c in s], dtype=float)
        if vals.size:
            scale = np.abs(vals).max()
            out[c] = float((vals.max() - vals.min()) / scale) if scale > 0 else 0.0
    return out


def cmd_sweep(args) -> int:
    config = _load(args)
    out = args.out or config.directory
    configs = expand_sweep(config)
    jobs = [(c, os.path.join(out, c.label or "base"), args.strict) for c in configs]
    workers = min(len(jobs), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_sweep_task, jobs))
    else:
        summaries = [_sweep_task(j) for j in jobs]
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            writer.writerow([s.get(c, "") for c in SUMMARY_COLUMNS])
    spread = uniformity([s for s in summaries if s["status"] == "ok"])
    _write_json(os.path.join(out, "summary.json"), {"runs": summaries, "relative_spread": spread})
    for s in summaries:
        print(f"{s['label'] or 'base'}: {s['status']}")
    for c, v in spread.items():
        print(f"relative spread of {c}: {v:.3e}")
    statuses = {s["status"] for s in summaries}
    if "runtime_failure" in statuses:
        return EXIT_RUNTIME
    return EXIT_INVARIANT if "invariant_failure" in statuses else EXIT_OK


# ----------------------------------------------------------------------------
# compare


def restrict(state: State, points: int) -> State:
    """Spectral restriction of ``state`` to a coarser grid of ``points`` per axis."""
    fine = state.points
    if fine == points:
        return state
    if fine % points:
        raise ValueError(f"incompatible grids: reference has {fine} points, run has {points}")
    return state.at(rho=sp.resample(state.rho, points), w=np.stack([sp.resample(c, points) for c in state.w]))


def reference_from(path: str, config: RunConfig):
    """Reference provider: a stored steady snapshot or a second configuration."""
    params = config.params
    points = params.grid_points
    if is_snapshot(path):
        ref = read_snapshot(path)
        if ref.dim != params.dim:
            raise ValueError(f"incompatible grids: reference dim {ref.dim}, run dim {params.dim}")
        fixed = restrict(ref, points)
        return "snapshot", (lambda t: fixed.at(t=t))
    ref_cfg = load_config(path)
    ref_params = dataclasses.replace(ref_cfg.params, dt=params.dt, t_end=params.t_end)
    if ref_params.dim != params.dim:
        raise ValueError(f"incompatible grids: reference dim {ref_params.dim}, run dim {params.dim}")
    if ref_params.grid_points % points:
        raise ValueError(f"incompatible grids: reference has {ref_params.grid_points} points, run has {points}")
    ref_cfg = dataclasses.replace(ref_cfg, params=ref_params)
    states = run(initial_state(ref_cfg), ref_params, [lambda s, p: restrict(s, points)], cadence=config.cadence)
    by_time = list(states.records[0])
    return "config", (lambda t, _it=iter(by_time): _next_at(_it, t))


def _next_at(it, t):
    s = next(it)
    if not math.isclose(s.t, t, rel_tol=1e-9, abs_tol=1e-12):
        raise RuntimeError(f"reference sample at t={s.t} does not match run time {t}")
    return s


REPORT_COLUMNS = ("t", "rel_energy", "q_rel_dissipation") + tuple(f"T{i}" for i in range(1, 8)) + (
    "gronwall_ratio",
    "kinetic",
    "bregman",
)


def compare(config: RunConfig, ref_path: str, amplitude: float = 0.0, margin: float = 0.1):
    params = config.params
    kind, reference = reference_from(ref_path, config)
    state0 = initial_state(config)
    if amplitude:
        state0 = perturb(state0, amplitude, params)
    reports = []

    def observer(state, p):
        rep = dg.relative_energy(state, reference(state.t), p)
        reports.append(rep)
        return rep

    run(state0, params, [observer], cadence=config.cadence)
    e0 = reports[0].rel_energy
    reports = [r.with_ratio(e0) for r in reports]
    result = dg.gronwall_check(reports, margin=margin, tol=COINCIDENCE_TOL)
    return kind, reports, result


def cmd_compare(args) -> int:
    config = _load(args)
    out = args.out or config.directory
    os.makedirs(out, exist_ok=True)
    kind, reports, result = compare(config, args.ref, args.perturb, args.margin)
    with open(os.path.join(out, "relative_energy.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for r in reports:
            writer.writerow(
                [repr(v) for v in (r.t, r.rel_energy, r.q_rel_dissipation, *r.remainder_terms, r.gronwall_ratio, r.kinetic, r.bregman)]
            )
    _write_json(
        os.path.join(out, "gronwall.json"),
        {"reference": kind, "perturbation": args.perturb, **dataclasses.asdict(result)},
    )
    verdict = "pass" if result.passed else "FAIL"
    print(f"gronwall check ({result.mode}): rate {result.rate:.4g}, {verdict}")
    return EXIT_OK if result.passed else EXIT_INVARIANT


# ----------------------------------------------------------------------------
# check


def cmd_check(args) -> int:
    rows = []
    for path in args.snapshots:
        state = read_snapshot(path)
        params = Params(gamma=state.gamma, grid_points=state.points, dt=1.0, t_end=1.0, dim=state.dim, n_modes=1)
        rec = dg.record(state, params)
        rows.append((path, rec))
    stream = open(os.path.join(args.out, "check.csv"), "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(stream)
        writer.writerow(["file"] + rows[0][1].header())
        for path, rec in rows:
            writer.writerow([path] + [repr(v) if isinstance(v, float) else v for v in rec.row()])
    finally:
        if stream is not sys.stdout:
            stream.close()
    bad = [p for p, r in rows if r.flagged or r.min_rho <= 0]
    for p in bad:
        print(f"FAIL {p}: invalid density or non-finite diagnostics", file=sys.stderr)
    return EXIT_INVARIANT if bad else EXIT_OK


# ----------------------------------------------------------------------------


def _load(args) -> RunConfig:
    config = load_config(args.config)
    if args.cadence is not None:
        if args.cadence < 1:
            raise ConfigError("--cadence must be >= 1")
        config = dataclasses.replace(config, cadence=args.cadence)
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="awrascle", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="DIR", help="output directory (default: the config's directory)")
    common.add_argument("--cadence", type=int, metavar="N", help="observer cadence in steps")
    common.add_argument("--strict", action="store_true", help="abort on the first invariant failure")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="integrate one configuration")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="run every point of the [sweep] cross product")
    p.add_argument("config")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", parents=[common], help="relative energy against a reference")
    p.add_argument("config")
    p.add_argument("--ref", required=True, help="reference snapshot (held steady) or reference config")
    p.add_argument("--perturb", type=float, default=0.0, metavar="A", help="perturbation amplitude")
    p.add_argument("--margin", type=float, default=0.1, help="rate margin of the exponential envelope")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("check", parents=[common], help="recompute diagnostics from snapshots")
    p.add_argument("snapshots", nargs="+")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantFailure as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        # bad generator options, rejected initial data, incompatible grids
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, SnapshotError, OSError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
