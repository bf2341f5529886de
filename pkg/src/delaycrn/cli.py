"""Command line interface.

Exit codes: 0 success/certified, 1 check failed, 2 usage or parse error,
3 numerical failure.  Errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .dde import ConfigError, History, SimConfig, SimulationError, Trajectory, simulate
from .equilibria import (
    EquilibriumError,
    NotComplexBalancedError,
    check_complex_balance,
    equilibrium_set_residual,
    point_on_equilibrium_set,
    solve_class_equilibrium,
)
from .kinetics import TransformError
from .lyapunov import decrease_report, v_krasovskii, v_point
from .modelfile import ModelFile, ModelFileError, history_from_spec, parse_model
from .network import Network, NetworkError, complex_label, stoich_bases

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(ValueError):
    pass


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data


def parse_vector(text: str, n: int, what: str) -> np.ndarray:
    try:
        v = np.array([float(s) for s in text.split(",")])
    except ValueError:
        raise UsageError(f"{what}: malformed number in {text!r}") from None
    if v.shape != (n,):
        raise UsageError(f"{what}: expected {n} comma-separated values, got {v.size}")
    return v


def _emit(payload) -> None:
    print(json.dumps(payload, indent=2))


def _reference(args, model: ModelFile, net: Network) -> np.ndarray:
    if getattr(args, "reference", None):
        return parse_vector(args.reference, net.n_species, "--reference")
    if model.reference is None:
        raise UsageError("no --reference given and the model has no metadata.reference")
    return model.reference


def _history(text: str, model: ModelFile, net: Network) -> History:
    if text in model.histories:
        return model.history(text, net)
    x = parse_vector(text, net.n_species, "--history")
    if np.any(x <= 0):
        raise UsageError("--history: values must be positive")
    return history_from_spec({"constant": x.tolist()}, net)


def _load(args):
    model = parse_model(args.model)
    return model, model.network()


def _sim_config(args, net: Network) -> SimConfig:
    dt = args.dt
    if dt is None:
        positive = net.delays[net.delays > 0]
        dt = min(1e-2, float(positive.min())) if positive.size else 1e-2
    return SimConfig(t_end=args.t_end, dt=dt)


def _trajectory_rows(net: Network, traj: Trajectory, every: int = 1):
    idx = np.arange(0, traj.mesh.size, max(1, every))
    if idx[-1] != traj.mesh.size - 1:
        idx = np.append(idx, traj.mesh.size - 1)
    return ["t"] + net.species_names, np.column_stack([traj.mesh[idx], traj.states[idx]])


# Commands ------------------------------------------------------------------


def cmd_validate(args) -> int:
    model, net = _load(args)
    basis = stoich_bases(net)
    _emit({
        "model": str(args.model),
        "name": model.name,
        "N": net.n_species,
        "L": net.n_complexes,
        "M": net.n_reactions,
        "species": net.species_names,
        "complexes": [complex_label(net, k) for k in range(net.n_complexes)],
        "dim_S": basis.rank,
        "S_basis": basis.s_basis.tolist(),
        "S_perp_basis": basis.s_perp_basis.tolist(),
        "delays": net.delays.tolist(),
    })
    return EXIT_OK


def cmd_balance(args) -> int:
    model, net = _load(args)
    x = parse_vector(args.at, net.n_species, "--at")
    report = check_complex_balance(net, x, args.tol)
    payload = report.to_dict([complex_label(net, k) for k in range(net.n_complexes)])
    payload["x"] = x.tolist()
    _emit(payload)
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_equilibrium(args) -> int:
    model, net = _load(args)
    ref = _reference(args, model, net)
    theta = _history(args.history, model, net)
    result = solve_class_equilibrium(net, ref, theta)
    payload = result.to_dict(net.species_names)
    payload["equilibrium_set_residual"] = equilibrium_set_residual(net, ref, result.x)
    _emit(payload)
    return EXIT_OK


def cmd_simulate(args) -> int:
    model, net = _load(args)
    theta = _history(args.history, model, net)
    traj = simulate(net, theta, _sim_config(args, net))
    header, rows = _trajectory_rows(net, traj, args.every)
    if args.out:
        write_csv(args.out, header, rows)
    _emit({"t_final": traj.t_final, "steps": int(traj.mesh.size - 1), "final": traj.states[-1].tolist(),
           "out": args.out})
    return EXIT_OK


def cmd_lyapunov(args) -> int:
    model, net = _load(args)
    theta = _history(args.history, model, net) if args.history else None
    if args.traj:
        header, data = read_csv(args.traj)
        if header != ["t"] + net.species_names:
            raise UsageError(f"--traj: header {header} does not match species {net.species_names}")
        if theta is None:
            theta = history_from_spec({"constant": data[0, 1:].tolist()}, net)
        traj = Trajectory.from_states(net, theta, data[:, 0], data[:, 1:])
    else:
        if theta is None or args.t_end is None:
            raise UsageError("give --traj, or --history with --t-end to simulate")
        traj = simulate(net, theta, _sim_config(args, net))
    if args.relative_to_class:
        ref = solve_class_equilibrium(net, _reference(args, model, net), theta).x
    else:
        ref = _reference(args, model, net)
    report = decrease_report(net, traj, ref, args.stride)
    if args.out:
        write_csv(args.out, ["t", "V"], np.column_stack([report.times, report.values]))
    payload = report.to_dict()
    payload["reference"] = ref.tolist()
    _emit(payload)
    return EXIT_OK if report.passed else EXIT_FAILED


def parse_grid(text: str, n: int) -> list[np.ndarray]:
    parts = text.split(",")
    if len(parts) == 1:
        parts = parts * n
    if len(parts) != n:
        raise UsageError(f"--grid: expected 1 or {n} 'lo:hi:count' entries")
    axes = []
    for part in parts:
        try:
            lo, hi, count = part.split(":")
            lo, hi, count = float(lo), float(hi), int(count)
        except ValueError:
            raise UsageError(f"--grid: malformed entry {part!r}, expected lo:hi:count") from None
        if lo <= 0 or hi < lo or count < 1:
            raise UsageError(f"--grid: entry {part!r} must satisfy 0 < lo <= hi and count >= 1")
        axes.append(np.linspace(lo, hi, count))
    return axes


def _thread_count() -> int:
    env = os.environ.get("CRN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"CRN_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def cmd_phase(args) -> int:
    model, net = _load(args)
    ref = _reference(args, model, net)
    axes = parse_grid(args.grid, net.n_species)
    points = np.array(np.meshgrid(*axes, indexing="ij")).reshape(net.n_species, -1).T
    cfg = _sim_config(args, net)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    basis = stoich_bases(net)
    names = net.species_names

    def run(i):
        theta = history_from_spec({"constant": points[i].tolist()}, net)
        traj = simulate(net, theta, cfg)
        header, rows = _trajectory_rows(net, traj, args.every)
        write_csv(out / f"traj_{i:03d}.csv", header, rows)
        eq = solve_class_equilibrium(net, ref, theta, basis)
        return eq.x, float(np.max(np.abs(traj.states[-1] - eq.x)))

    with ThreadPoolExecutor(max_workers=min(_thread_count(), len(points))) as pool:
        results = list(pool.map(run, range(len(points))))

    eq_rows = [[i, *points[i], *x] for i, (x, _) in enumerate(results)]
    write_csv(out / "equilibria.csv", ["index"] + [f"{n}_0" for n in names] + names, eq_rows)
    locus = equilibrium_locus(net, ref, basis, args.locus_points)
    write_csv(out / "locus.csv", ["direction", "s"] + names, locus)
    residuals = [equilibrium_set_residual(net, ref, x, basis) for x, _ in results]
    residuals += [equilibrium_set_residual(net, ref, row[2:], basis) for row in locus]
    _emit({
        "trajectories": len(points),
        "out": str(out),
        "max_final_distance_to_class_equilibrium": max(d for _, d in results),
        "max_equilibrium_set_residual": max(residuals),
    })
    return EXIT_OK


def equilibrium_locus(net: Network, ref, basis, count: int = 121, span: float = 3.0):
    """Points gamma^{-1}(gamma(ref) e^{s v}) along each S-perp basis vector v."""
    rows = []
    for d, v in enumerate(basis.s_perp_basis):
        for s in np.linspace(-span, span, count):
            try:
                x = point_on_equilibrium_set(net, ref, s * v, basis)
            except TransformError:
                continue
            rows.append([d, s, *x])
    return np.array(rows).reshape(len(rows), 2 + net.n_species)


def parse_plane(text: str) -> tuple[float, int]:
    opts = {}
    for part in text.split(","):
        key, _, value = part.partition("=")
        opts[key.strip()] = value.strip()
    try:
        total = float(opts.pop("total", "1"))
        n = int(opts.pop("n", "40"))
    except ValueError:
        raise UsageError(f"--plane: malformed spec {text!r}") from None
    if opts:
        raise UsageError(f"--plane: unknown keys {sorted(opts)}")
    if total <= 0 or n < 3:
        raise UsageError("--plane: need total > 0 and n >= 3")
    return total, n


def cmd_contour(args) -> int:
    model, net = _load(args)
    if net.n_species != 3:
        raise UsageError("contour works on three-species models (slice x1 + x2 + x3 = total)")
    ref = _reference(args, model, net)
    total, n = parse_plane(args.plane)
    basis = stoich_bases(net)
    centroid = np.full(3, total / 3)
    # the plane's undelayed class equilibrium is the common reference point
    plane_eq = solve_class_equilibrium(net.without_delays(), ref, centroid).x
    delayed_eq = solve_class_equilibrium(net, ref, centroid, basis).x
    tau = max(net.max_delay, 1.0)
    rows = []
    for i in range(1, n):
        for j in range(1, n - i):
            x = np.array([total * i / n, total * j / n, total * (n - i - j) / n])
            rows.append([x[0], x[1], v_point(net, x, plane_eq), v_krasovskii(net, History.constant(x, -tau), plane_eq)])
    write_csv(args.out, ["x1", "x2", "V_point", "V_LK"], rows)
    eq_path = Path(args.out).with_name(Path(args.out).stem + "_equilibria.csv")
    write_csv(eq_path, ["kind"] + net.species_names, [[0, *plane_eq], [1, *delayed_eq]])
    _emit({
        "out": str(args.out),
        "equilibria": str(eq_path),
        "points": len(rows),
        "plane_equilibrium": plane_eq.tolist(),
        "delayed_equilibrium_of_centroid": delayed_eq.tolist(),
        "max_equilibrium_set_residual": max(
            equilibrium_set_residual(net, ref, plane_eq, basis), equilibrium_set_residual(net, ref, delayed_eq, basis)
        ),
    })
    return EXIT_OK


# Parser --------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="delaycrn", description="Delayed reaction networks with product-form kinetics.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("model", help="model JSON file or bundled model name")
        p.set_defaults(func=func)
        return p

    def sim_opts(p, required=True):
        p.add_argument("--t-end", type=float, required=required)
        p.add_argument("--dt", type=float, default=None, help="step (default min(0.01, smallest delay))")

    add("validate", cmd_validate, "parse the model and print a summary")

    p = add("balance", cmd_balance, "check complex balance at a state")
    p.add_argument("--at", required=True, help="comma-separated state")
    p.add_argument("--tol", type=float, default=1e-10)

    p = add("equilibrium", cmd_equilibrium, "equilibrium of the delayed compatibility class")
    p.add_argument("--reference", help="complex balanced equilibrium (default: metadata.reference)")
    p.add_argument("--history", required=True, help="history name or comma-separated constant state")

    p = add("simulate", cmd_simulate, "integrate the delay equations")
    p.add_argument("--history", required=True)
    sim_opts(p)
    p.add_argument("--every", type=int, default=1, help="write every k-th mesh point")
    p.add_argument("--out")

    p = add("lyapunov", cmd_lyapunov, "certify Krasovskii decrease along a trajectory")
    p.add_argument("--reference")
    p.add_argument("--traj", help="trajectory CSV written by 'simulate' (unthinned)")
    p.add_argument("--history")
    sim_opts(p, required=False)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--relative-to-class", action="store_true",
                   help="measure V from the class equilibrium of the history instead of the reference")
    p.add_argument("--out")

    p = add("phase", cmd_phase, "trajectories from a grid of constant histories")
    p.add_argument("--reference")
    p.add_argument("--grid", required=True, help="lo:hi:count per species (comma-separated) or one for all")
    sim_opts(p)
    p.add_argument("--every", type=int, default=1)
    p.add_argument("--locus-points", type=int, default=121)
    p.add_argument("--out", required=True, help="output directory")

    p = add("contour", cmd_contour, "Lyapunov values on the slice x1 + x2 + x3 = total")
    p.add_argument("--reference")
    p.add_argument("--plane", default="total=1,n=40", help="total=<sum>,n=<divisions>")
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (UsageError, ModelFileError, ConfigError) as exc:
        code = EXIT_USAGE
        err = exc
    except (NotComplexBalancedError, NetworkError, TransformError) as exc:
        code = EXIT_USAGE
        err = exc
    except (EquilibriumError, SimulationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        code = EXIT_NUMERIC
        err = exc
    print(json.dumps({"error": type(err).__name__, "message": str(err), "exit_code": code}), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
