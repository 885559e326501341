"""Command-line front end.

Every command writes its artifacts into ``--out`` and embeds the scenario hash.
JSON is written with sorted keys and repr floats, so identical inputs give
byte-identical files.

Exit codes: 0 success, 2 invalid input or failed validation, 3 I/O failure,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .complete_info import GridConfig, ValueGrid, isaacs_gap, hamiltonian_table, solve_value, value_residual
from .dynamics import ControlSequence, HorizonExhausted, hitting_bound, hitting_time, simulate
from .extended import AtomMap, diagnostic_report, dpp_residual
from .game_model import GameSpec, load_scenario, scenario_hash, validate_spec
from .incomplete import game_value
from .measures import DiscreteMeasure, transport_plan, w2_distance

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class NumericalFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# helpers


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive(values: list[float], name: str) -> list[float]:
    if not values or any(not v > 0 for v in values):
        raise ValueError(f"--{name} must be positive")
    return values


def _threads(args) -> int:
    if args.threads is not None:
        k = args.threads
    else:
        env = os.environ.get("ISG_THREADS", "1")
        try:
            k = int(env)
        except ValueError:
            raise ValueError(f"ISG_THREADS must be an integer, got {env!r}") from None
    if k < 1:
        raise ValueError("thread count must be >= 1")
    return k


def _header(args, spec: GameSpec | None) -> dict:
    return {
        "command": args.command,
        "scenario": None if spec is None else spec.name,
        "scenario_hash": None if spec is None else scenario_hash(spec),
    }


def _write_json(path: Path, payload: dict) -> None:
    try:
        text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=False)
    except ValueError as exc:
        raise NumericalFailure(f"non-finite value in {path.name}: {exc}") from None
    path.write_text(text + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_measure(path: str, spec: GameSpec | None) -> DiscreteMeasure:
    mu = DiscreteMeasure.load(path)
    if spec is not None and mu.dim != spec.dim:
        raise ValueError(f"measure in {path} has dimension {mu.dim}, scenario has {spec.dim}")
    return mu


def _value_grid(args, spec: GameSpec, default_h: float) -> ValueGrid:
    if args.value:
        return ValueGrid.load(args.value)
    h = args.grid_h if args.grid_h is not None else default_h
    _positive([h], "grid-h")
    if args.grid is None:
        raise ValueError("need --grid (or --value) to build the complete-information value")
    return solve_value(spec, GridConfig(tuple(args.grid), args.grid_lo, args.grid_hi), h, tol=args.tol)


def _controls(indices: list[int], step: float, n_steps: int) -> ControlSequence:
    # the last listed index is held for as long as needed
    values = list(indices[:n_steps]) + [indices[-1]] * max(0, n_steps - len(indices))
    return ControlSequence(step, values)


def _ladder(worker, jobs: list[tuple], threads: int) -> list:
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            return list(pool.map(worker, jobs))
    return [worker(job) for job in jobs]


def _value_job(job):
    ref, V, mu, h, eps = job
    return game_value(load_scenario(ref), mu, V, h, eps).to_dict()


def _dpp_job(job):
    ref, phi, mu, V, h, eps = job
    return dpp_residual(load_scenario(ref), phi, mu, V, h, eps)


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    spec = load_scenario(args.scenario)
    report = validate_spec(spec, args.samples, args.seed)
    _write_json(_out_dir(args) / "validation.json", {**_header(args, spec), **report.to_dict()})
    return EXIT_OK if report.ok else EXIT_INVALID


def _trajectory_inputs(args, spec: GameSpec):
    z0 = np.asarray(args.z0, dtype=float)
    if z0.shape != (spec.dim,):
        raise ValueError(f"--z0 needs {spec.dim} coordinates")
    h = _positive([args.h[0]], "h")[0]
    if len(args.h) > 1:
        raise ValueError("this command takes a single --h")
    T_end = getattr(args, "T_end", 0.0)
    if T_end < 0:
        raise ValueError("--T-end must be nonnegative")
    need = max(math.ceil(T_end / h - 1e-12), math.ceil(hitting_bound(spec, (z0, z0)) / h) + 1)
    useq = _controls(args.u, h, need)
    vseq = _controls(args.v, h, need)
    return z0, h, T_end, useq, vseq


def cmd_simulate(args) -> int:
    spec = load_scenario(args.scenario)
    z0, h, T_end, useq, vseq = _trajectory_inputs(args, spec)
    traj = simulate(spec, z0, useq, vseq, T_end)
    hit = hitting_time(spec, z0, useq, vseq)
    out = _out_dir(args)
    traj.to_csv(out / "trajectory.csv")
    _write_json(out / "hitting.json", {**_header(args, spec), "h": h, "T_end": T_end,
                                       "z0": z0.tolist(), **hit.to_dict()})
    return EXIT_OK


def cmd_hitting(args) -> int:
    spec = load_scenario(args.scenario)
    z0, h, _, useq, vseq = _trajectory_inputs(args, spec)
    hit = hitting_time(spec, z0, useq, vseq)
    _write_json(_out_dir(args) / "hitting.json", {**_header(args, spec), "h": h, "z0": z0.tolist(),
                                                  **hit.to_dict()})
    return EXIT_OK


def cmd_value_grid(args) -> int:
    spec = load_scenario(args.scenario)
    if args.grid is None:
        raise ValueError("--grid is required")
    h = _positive(args.h, "h")[0]
    _positive([args.tol], "tol")
    V = solve_value(spec, GridConfig(tuple(args.grid), args.grid_lo, args.grid_hi), h,
                    tol=args.tol, order=args.order)
    out = _out_dir(args)
    V.to_csv(out / "value_grid.csv")
    V.save(out / "grid")
    residual = value_residual(spec, V, samples=args.samples, seed=args.seed)
    _write_json(out / "value_residual.json", {
        **_header(args, spec), "h": h, "tol": args.tol, "order": args.order,
        "shape": list(V.shape), "lo": V.lo.tolist(), "hi": V.hi.tolist(),
        "iterations": V.iterations, "last_change": V.last_change,
        "residual": residual, "residual_samples": args.samples, "seed": args.seed,
    })
    return EXIT_OK


def cmd_value_measure(args) -> int:
    spec = load_scenario(args.scenario)
    hs = _positive(args.h, "h")
    mu = _load_measure(args.measure, spec)
    V = _value_grid(args, spec, min(hs))
    results = _ladder(_value_job, [(args.scenario, V, mu, h, args.eps) for h in hs], _threads(args))
    _write_json(_out_dir(args) / "value_measure.json", {
        **_header(args, spec), "measure": mu.to_dict(), "eps": args.eps, "grid_h": V.h,
        "h": hs, "results": results,
        "upper": [r["upper"] for r in results], "lower": [r["lower"] for r in results],
        "gap": [r["upper"] - r["lower"] for r in results],
    })
    return EXIT_OK


def cmd_isaacs(args) -> int:
    spec = load_scenario(args.scenario)
    if args.samples < 1:
        raise ValueError("--samples must be >= 1")
    rng = np.random.default_rng(args.seed)
    z = spec.Z_lo + rng.random((args.samples, spec.dim)) * (spec.Z_hi - spec.Z_lo)
    if args.p is not None:
        p = np.broadcast_to(np.asarray(args.p, dtype=float), z.shape)
        if len(args.p) != spec.dim:
            raise ValueError(f"--p needs {spec.dim} coordinates")
    else:
        p = rng.uniform(-1.0, 1.0, z.shape)
    table = hamiltonian_table(spec, z, p)
    upper = table.max(axis=-1).min(axis=-1)
    lower = table.min(axis=-2).max(axis=-1)
    k = int(np.argmax(upper - lower))
    _write_json(_out_dir(args) / "isaacs.json", {
        **_header(args, spec), "samples": args.samples, "seed": args.seed,
        "gap": isaacs_gap(spec, z, p),
        "witness": {"z": z[k].tolist(), "p": np.asarray(p[k]).tolist(),
                    "upper": float(upper[k]), "lower": float(lower[k])},
    })
    return EXIT_OK


def cmd_dpp(args) -> int:
    spec = load_scenario(args.scenario)
    hs = _positive(args.h, "h")
    mu = _load_measure(args.measure, spec)
    if args.phi:
        phi = AtomMap(json.loads(Path(args.phi).read_text())["images"])
    else:
        phi = AtomMap.identity(mu)
    # values are computed on a finer step than any rung of the ladder
    V = _value_grid(args, spec, 0.5 * min(hs))
    dpp = _ladder(_dpp_job, [(args.scenario, phi, mu, V, h, args.eps) for h in hs], _threads(args))
    report = diagnostic_report(spec, phi, mu, V, hs, fd_eps=args.fd_eps, eps=args.eps, dpp=dpp)
    _write_json(_out_dir(args) / "dpp.json", {**_header(args, spec), "measure": mu.to_dict(),
                                              "eps": args.eps, "grid_h": V.h, **report})
    return EXIT_OK


def cmd_w2(args) -> int:
    spec = load_scenario(args.scenario) if args.scenario else None
    mu = _load_measure(args.measure, spec)
    nu = _load_measure(args.measure2, spec)
    _write_json(_out_dir(args) / "w2.json", {
        **_header(args, spec), "w2": w2_distance(mu, nu), "plan": transport_plan(mu, nu).tolist(),
        "measure": mu.to_dict(), "measure2": nu.to_dict(),
    })
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isg", description="Signal-revelation differential games.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_required=True):
        p.add_argument("--scenario", required=scenario_required, help="builtin name or scenario JSON path")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None, help="worker cap (default: $ISG_THREADS or 1)")

    def grid_opts(p):
        p.add_argument("--grid", type=_ints, default=None, help="nodes per axis, e.g. 161,9")
        p.add_argument("--grid-lo", type=_floats, default=None, help="box lower corner (default Z padded)")
        p.add_argument("--grid-hi", type=_floats, default=None, help="box upper corner")
        p.add_argument("--tol", type=float, default=1e-8, help="value-iteration stopping tolerance")

    def value_source(p):
        grid_opts(p)
        p.add_argument("--grid-h", type=float, default=None, help="time step of the grid solve")
        p.add_argument("--value", default=None, help="saved grid (path without suffix) instead of solving")

    def traj_opts(p, with_T):
        p.add_argument("--z0", type=_floats, required=True, help="x_1,...,x_n,y")
        p.add_argument("--h", type=_floats, default=[0.01])
        p.add_argument("--u", type=_ints, default=[0], help="u indices per step; the last one is held")
        p.add_argument("--v", type=_ints, default=[0], help="v indices per step; the last one is held")
        if with_T:
            p.add_argument("--T-end", type=float, default=1.0)

    p = sub.add_parser("validate", help="spot-check the standing assumptions")
    common(p)
    p.add_argument("--samples", type=int, default=256)
    p.set_defaults(run=cmd_validate)

    p = sub.add_parser("simulate", help="trajectory CSV and hitting JSON")
    common(p)
    traj_opts(p, True)
    p.set_defaults(run=cmd_simulate)

    p = sub.add_parser("hitting", help="hitting time JSON")
    common(p)
    traj_opts(p, False)
    p.set_defaults(run=cmd_hitting)

    p = sub.add_parser("value-grid", help="complete-information value on a grid")
    common(p)
    grid_opts(p)
    p.add_argument("--h", type=_floats, default=[0.05])
    p.add_argument("--order", choices=("upper", "lower"), default="upper")
    p.add_argument("--samples", type=int, default=1000, help="off-grid residual samples")
    p.set_defaults(run=cmd_value_grid)

    p = sub.add_parser("value-measure", help="upper/lower values of an initial law over an h ladder")
    common(p)
    value_source(p)
    p.add_argument("--measure", required=True)
    p.add_argument("--h", type=_floats, default=[0.05])
    p.add_argument("--eps", type=float, default=1e-6)
    p.set_defaults(run=cmd_value_measure)

    p = sub.add_parser("isaacs-check", help="largest H+ - H- over sampled (z, p)")
    common(p)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--p", type=_floats, default=None, help="fixed covector instead of random ones")
    p.set_defaults(run=cmd_isaacs)

    p = sub.add_parser("dpp-check", help="DPP ladder and HJI residual for an atom map")
    common(p)
    value_source(p)
    p.add_argument("--measure", required=True)
    p.add_argument("--phi", default=None, help='JSON {"images": [...]} (default: identity)')
    p.add_argument("--h", type=_floats, default=[0.2, 0.1, 0.05])
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--fd-eps", type=float, default=1e-3)
    p.set_defaults(run=cmd_dpp)

    p = sub.add_parser("w2", help="Wasserstein-2 distance between two measure files")
    common(p, scenario_required=False)
    p.add_argument("--measure", required=True)
    p.add_argument("--measure2", required=True)
    p.set_defaults(run=cmd_w2)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except OSError as exc:
        print(f"isg: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalFailure, FloatingPointError, HorizonExhausted) as exc:
        print(f"isg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, IndexError) as exc:
        print(f"isg: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
