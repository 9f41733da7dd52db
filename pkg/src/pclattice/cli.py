"""Command-line entry point: ``pclattice <command> [options]``.

Every command resolves its settings as built-in defaults, overridden by a JSON
``--config`` file, overridden by flags.  Each output CSV is written next to a
JSON manifest holding the resolved settings and checksums; passing that
manifest back as ``--config`` repeats the run.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .equilibria import classify_stability, equilibrium_branches, fold_points
from .errors import DivergenceError, InconclusiveError, MissingBranchError, ModelError, TrackingError
from .export import RunManifest, write_csv, write_json, write_trajectory
from .lattice import (
    Closure,
    InputSignal,
    Method,
    Simulation,
    Topology,
    TopologyKind,
    make_rest_initial,
    make_step_initial,
)
from .model import make_params
from .parallel import default_jobs
from .thresholds import (
    ThresholdOptions,
    combined_regime_map,
    s0_threshold_curve,
    tau_threshold_curve,
)
from .waves import SpeedOptions, estimate_speed, sign_map

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGENCE = 3
EXIT_INCONCLUSIVE = 4

MAX_CELLS = 10_000

COMMON = {
    "theta": 0.5, "mu": 16.0, "p": 0.1, "q": 0.4,
    "dt": 0.05, "t_end": None, "layers": None, "method": "rk4", "jobs": None, "out": "out",
}

COMMAND_DEFAULTS = {
    "equilibria": {"theta_min": 0.0, "theta_max": 1.0, "theta_steps": 101},
    "simulate": {"topology": "bi-infinite", "initial": None, "input": "none", "s0": None, "tau": None,
                 "sample_every": 20, "guard": 10, "closure": None, "t_end": 200.0},
    "speed": {"direction": "both", "t_end": 200.0, "layers": 200, "sample_every": 20, "guard": 10},
    "sign-map": {"theta_values": None, "q_values": None, "p_values": None, "t_end": 200.0, "layers": 200,
                 "sample_every": 20, "guard": 10},
    "s0-threshold": {"q_values": "0.1:0.6:6", "topology": "bottom-up", "s0_max": 5.0, "t_end": 1000.0,
                     "layers": 200},
    "tau-threshold": {"q_values": "0.35,0.5,0.65", "topology": "bottom-up", "tau_max": 500.0,
                      "t_end": 1000.0, "layers": 200},
    "combined": {"q_values": "0.1:0.9:9", "s0_levels": "1.0", "s0_max": 5.0, "t_end": 1000.0, "layers": 200},
}


class UsageError(Exception):
    pass


def parse_grid(spec) -> list[float]:
    """Grid from a list, ``"a,b,c"`` or ``"start:stop:num"`` (inclusive linspace)."""
    if spec is None:
        return []
    if isinstance(spec, (int, float)):
        return [float(spec)]
    if isinstance(spec, (list, tuple)):
        return [float(v) for v in spec]
    text = str(spec).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"grid {text!r} must be start:stop:num")
        start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
        if num < 1:
            raise UsageError("grid needs at least one point")
        return [float(v) for v in np.linspace(start, stop, num)]
    return [float(v) for v in text.split(",") if v.strip()]


def load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    # a manifest carries the resolved settings under "config"
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve_config(command: str, file_values: dict, flag_values: dict) -> dict:
    """defaults < config file < flags, restricted to the keys the command knows."""
    config = dict(COMMON)
    config.update(COMMAND_DEFAULTS[command])
    unknown = set(file_values) - set(config) - {"command"}
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
    config.update({k: v for k, v in file_values.items() if k != "command"})
    config.update({k: v for k, v in flag_values.items() if k in config})
    return config


def _add_common(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON config file (or a previous manifest)")
    p.add_argument("--out", default=S, help="output directory")
    p.add_argument("--theta", type=float, default=S)
    p.add_argument("--mu", type=float, default=S)
    p.add_argument("--p", type=float, default=S)
    p.add_argument("--q", type=float, default=S)
    p.add_argument("--dt", type=float, default=S)
    p.add_argument("--t-end", dest="t_end", type=float, default=S)
    p.add_argument("--layers", type=int, default=S, metavar="J")
    p.add_argument("--method", choices=[m.value for m in Method], default=S)
    p.add_argument("--jobs", type=int, default=S, metavar="N")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="pclattice", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("equilibria", help="branch table over a theta grid")
    _add_common(p)
    p.add_argument("--theta-min", type=float, default=S)
    p.add_argument("--theta-max", type=float, default=S)
    p.add_argument("--theta-steps", type=int, default=S)

    p = sub.add_parser("simulate", help="single integration, trajectory CSV")
    _add_common(p)
    p.add_argument("--topology", choices=[k.value for k in TopologyKind], default=S)
    p.add_argument("--initial", choices=["u->d", "d->u", "rest"], default=S)
    p.add_argument("--input", choices=["none", "constant", "flashed"], default=S)
    p.add_argument("--s0", type=float, default=S)
    p.add_argument("--tau", type=float, default=S)
    p.add_argument("--sample-every", type=int, default=S)
    p.add_argument("--guard", type=int, default=S)
    p.add_argument("--closure", choices=[c.value for c in Closure], default=S)

    p = sub.add_parser("speed", help="front speeds from step data")
    _add_common(p)
    p.add_argument("--direction", choices=["u->d", "d->u", "both"], default=S)
    p.add_argument("--sample-every", type=int, default=S)
    p.add_argument("--guard", type=int, default=S)

    p = sub.add_parser("sign-map", help="speed signs over a two-parameter grid")
    _add_common(p)
    for axis in ("theta", "q", "p"):
        p.add_argument(f"--{axis}-values", default=S, help="a,b,c or start:stop:num")
    p.add_argument("--sample-every", type=int, default=S)
    p.add_argument("--guard", type=int, default=S)

    p = sub.add_parser("s0-threshold", help="activity threshold s0* along q")
    _add_common(p)
    p.add_argument("--q-values", default=S)
    p.add_argument("--topology", choices=["bottom-up", "top-down"], default=S)
    p.add_argument("--s0-max", type=float, default=S)

    p = sub.add_parser("tau-threshold", help="flash-duration threshold tau* along q")
    _add_common(p)
    p.add_argument("--q-values", default=S)
    p.add_argument("--topology", choices=["bottom-up", "top-down"], default=S)
    p.add_argument("--tau-max", type=float, default=S)

    p = sub.add_parser("combined", help="joint bottom-up/top-down regime map")
    _add_common(p)
    p.add_argument("--q-values", default=S)
    p.add_argument("--s0-levels", default=S)
    p.add_argument("--s0-max", type=float, default=S)
    return parser


def _params(cfg: dict, relaxed: bool = False):
    return make_params(cfg["theta"], cfg["mu"], cfg["p"], cfg["q"], relaxed=relaxed)


def _jobs(cfg: dict) -> int:
    return default_jobs() if cfg["jobs"] is None else int(cfg["jobs"])


def _speed_options(cfg: dict) -> SpeedOptions:
    return SpeedOptions(extent=int(cfg["layers"]), t_end=float(cfg["t_end"]), dt=float(cfg["dt"]),
                        sample_every=int(cfg["sample_every"]), method=Method(cfg["method"]),
                        guard=int(cfg["guard"]))


def _threshold_options(cfg: dict) -> ThresholdOptions:
    extra = {}
    if "s0_max" in cfg:
        extra["s0_max"] = float(cfg["s0_max"])
    if "tau_max" in cfg:
        extra["tau_max"] = float(cfg["tau_max"])
    return ThresholdOptions(extent=int(cfg["layers"]), t_end=float(cfg["t_end"]), dt=float(cfg["dt"]),
                            method=Method(cfg["method"]), **extra)


def _finish(out: Path, name: str, command: str, cfg: dict, t0: float, extra: dict | None = None,
            outputs=()) -> None:
    manifest = RunManifest(command, cfg, __version__, {"wall_seconds": time.perf_counter() - t0}, extra=extra or {})
    for path in outputs:
        manifest.add_output(path)
    manifest.write(out / f"{name}.manifest.json")


def cmd_equilibria(cfg: dict) -> int:
    t0 = time.perf_counter()
    out = Path(cfg["out"])
    lo = max(0.0, float(cfg["theta_min"]))
    hi = min(1.0, float(cfg["theta_max"]))
    thetas = np.linspace(lo, hi, int(cfg["theta_steps"]))
    rows = []
    for theta in thetas:
        params = make_params(float(theta), cfg["mu"], cfg["p"], cfg["q"], relaxed=True)
        b = equilibrium_branches(params)
        row = {"theta": float(theta), "x_d": b.x_d, "x_m": b.x_m, "x_u": b.x_u, "bistable": b.complete}
        for label in ("d", "m", "u"):
            try:
                row[f"stability_{label}"] = classify_stability(label, params).value
            except MissingBranchError:
                row[f"stability_{label}"] = ""
        rows.append(row)
    header = ["theta", "x_d", "x_m", "x_u", "stability_d", "stability_m", "stability_u", "bistable"]
    path = write_csv(out / "equilibria.csv", header, rows)
    xs, xS, ts, tS = fold_points(cfg["mu"])
    _finish(out, "equilibria", "equilibria", cfg, t0,
            {"fold": {"x_star": xs, "x_sup_star": xS, "theta_star": ts, "theta_sup_star": tS}}, [path])
    return EXIT_OK


def _topology_from(cfg: dict) -> Topology:
    kind = TopologyKind(cfg["topology"])
    default_extent = 200 if kind is TopologyKind.BI_INFINITE else 300
    extent = int(cfg["layers"] or default_extent)
    return Topology(kind, extent, cfg["closure"], int(cfg["guard"]))


def _signal_from(cfg: dict, params) -> InputSignal:
    kind = cfg["input"]
    if kind == "none":
        return InputSignal.none()
    if cfg["s0"] is None:
        raise UsageError(f"--input {kind} needs --s0")
    if kind == "constant":
        return InputSignal.constant(cfg["s0"])
    if cfg["tau"] is None:
        raise UsageError("--input flashed needs --tau")
    return InputSignal.flashed(cfg["s0"], cfg["tau"], params)


def cmd_simulate(cfg: dict) -> int:
    t0 = time.perf_counter()
    out = Path(cfg["out"])
    params = _params(cfg)
    topo = _topology_from(cfg)
    initial_kind = cfg["initial"] or ("u->d" if topo.kind is TopologyKind.BI_INFINITE else "rest")
    cfg = {**cfg, "initial": initial_kind, "layers": topo.extent, "closure": topo.closure.value}
    initial = make_rest_initial(params, topo) if initial_kind == "rest" else make_step_initial(initial_kind, params, topo)
    signal = _signal_from(cfg, params)
    sim = Simulation(initial, topo, signal, params, float(cfg["dt"]), cfg["method"])
    traj = sim.run(float(cfg["t_end"]), int(cfg["sample_every"]))
    path = write_trajectory(out / "trajectory.csv", traj)
    side = write_json(out / "trajectory.json", traj.sidecar())
    _finish(out, "simulate", "simulate", cfg, t0, {"guard_triggered": traj.guard_triggered}, [path, side])
    if traj.guard_triggered:
        print("warning: a front reached the truncation guard", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_speed(cfg: dict) -> int:
    t0 = time.perf_counter()
    out = Path(cfg["out"])
    params = _params(cfg)
    opts = _speed_options(cfg)
    directions = ["u->d", "d->u"] if cfg["direction"] == "both" else [cfg["direction"]]
    rows = []
    for d in directions:
        est = estimate_speed(d, params, opts)
        rows.append({"direction": d, "c": est.c, "fit_residual": est.fit_residual,
                     "displacement": est.displacement, "pinned": est.pinned, "sign": est.sign,
                     "extent": est.extent, "t_end": est.t_end})
    header = ["direction", "c", "fit_residual", "displacement", "pinned", "sign", "extent", "t_end"]
    path = write_csv(out / "speed.csv", header, rows)
    _finish(out, "speed", "speed", cfg, t0, outputs=[path])
    return EXIT_OK


def cmd_sign_map(cfg: dict) -> int:
    t0 = time.perf_counter()
    out = Path(cfg["out"])
    grids = {axis: parse_grid(cfg[f"{axis}_values"]) for axis in ("theta", "q", "p")
             if cfg[f"{axis}_values"] is not None}
    if len(grids) != 2:
        raise UsageError("sign-map needs exactly two of --theta-values, --q-values, --p-values")
    n_cells = math.prod(len(v) for v in grids.values())
    if n_cells > MAX_CELLS:
        raise UsageError(f"grid has {n_cells} cells, limit is {MAX_CELLS}")
    fixed = {k: float(cfg[k]) for k in ("theta", "q", "p", "mu") if k not in grids}
    smap = sign_map(grids, fixed, options=_speed_options(cfg), jobs=_jobs(cfg))
    header = ["theta", "q"] + (["p"] if "p" in grids else []) + ["c_ud", "c_du", "sign_ud", "sign_du", "flags"]
    path = write_csv(out / "sign_map.csv", header, smap.rows())
    _finish(out, "sign_map", "sign-map", cfg, t0, {"axes": list(smap.axes), "fixed": fixed}, [path])
    return EXIT_OK


def _notes(results, qs) -> dict:
    notes = {}
    for q, r in zip(qs, results):
        for key in ("error", "reason"):
            if key in r.evidence:
                notes[repr(q)] = r.evidence[key]
    return notes


def cmd_s0_threshold(cfg: dict) -> int:
    t0 = time.perf_counter()
    out = Path(cfg["out"])
    _params(cfg)
    qs = parse_grid(cfg["q_values"])
    results = s0_threshold_curve(qs, cfg["theta"], cfg["mu"], cfg["p"], cfg["topology"],
                                 _threshold_options(cfg), _jobs(cfg))
    rows = [[q, cfg["theta"], r.value, r.marker] for q, r in zip(qs, results)]
    path = write_csv(out / "s0_threshold.csv", ["q", "theta", "s0_star", "marker"], rows)
    _finish(out, "s0_threshold", "s0-threshold", cfg, t0, {"cell_notes": _notes(results, qs)}, [path])
    return EXIT_OK


def cmd_tau_threshold(cfg: dict) -> int:
    t0 = time.perf_counter()
    out = Path(cfg["out"])
    _params(cfg)
    qs = parse_grid(cfg["q_values"])
    results = tau_threshold_curve(qs, cfg["theta"], cfg["mu"], cfg["p"], cfg["topology"],
                                  _threshold_options(cfg), _jobs(cfg))
    rows = [[cfg["theta"], q, r.value, r.marker] for q, r in zip(qs, results)]
    path = write_csv(out / "tau_threshold.csv", ["theta", "q", "tau_star", "marker"], rows)
    _finish(out, "tau_threshold", "tau-threshold", cfg, t0, {"cell_notes": _notes(results, qs)}, [path])
    return EXIT_OK


def cmd_combined(cfg: dict) -> int:
    t0 = time.perf_counter()
    out = Path(cfg["out"])
    _params(cfg)
    qs = parse_grid(cfg["q_values"])
    levels = parse_grid(cfg["s0_levels"])
    cells = combined_regime_map(qs, levels, cfg["theta"], cfg["mu"], cfg["p"], _threshold_options(cfg), _jobs(cfg))
    header = ["q", "s0", "label", "s0_star_bottom_up", "marker_bottom_up", "s0_star_top_down", "marker_top_down"]
    rows = [[c.q, c.s0, c.label, c.s0_star_bottom_up.value, c.s0_star_bottom_up.marker,
             c.s0_star_top_down.value, c.s0_star_top_down.marker] for c in cells]
    path = write_csv(out / "combined.csv", header, rows)
    _finish(out, "combined", "combined", cfg, t0, {"labels": sorted({c.label for c in cells})}, [path])
    return EXIT_OK


COMMANDS = {
    "equilibria": cmd_equilibria,
    "simulate": cmd_simulate,
    "speed": cmd_speed,
    "sign-map": cmd_sign_map,
    "s0-threshold": cmd_s0_threshold,
    "tau-threshold": cmd_tau_threshold,
    "combined": cmd_combined,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    try:
        file_values = load_config(args.pop("config")) if "config" in args else {}
        cfg = resolve_config(command, file_values, args)
        return COMMANDS[command](cfg)
    except UsageError as exc:
        print(f"pclattice {command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"pclattice {command}: divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (InconclusiveError, TrackingError) as exc:
        print(f"pclattice {command}: inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (ModelError, ValueError) as exc:
        print(f"pclattice {command}: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
