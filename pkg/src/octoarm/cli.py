"""Command line entry point: one subcommand per experiment family.

Every run writes the resolved scenario (``scenario.ini``), its CSV tables,
matching figures and a ``report.json`` listing exactly the files it wrote.
Exit status: 0 when the verdict passes, 2 when it fails, 1 on any error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from . import plotting
from .config import Scenario, load_scenario
from .errors import OctoArmError
from .loop import LoopSettings, run_loop

COMMANDS = {
    "rest-shape": "rest_shape",
    "reach": "reach",
    "sense": "sense",
    "sensorimotor": "sensorimotor",
    "stats": "stats",
    "mc-oracle": "mc_oracle",
}

# pass/fail limits, in arm lengths
SENSE_LIMITS = {"I": 1e-2, "II": 0.25}
STATS_LIMITS = {"I": dict(mean=1e-2, max=5e-2), "II": dict(mean_low=0.05, mean=0.4), "III": dict(mean=1e-2)}
LOOP_DEADLINE = 2.0
LOOP_MAX_ERROR = 0.25
ORACLE_TOLERANCE = 1e-4


class Outputs:
    """Tracks every file a run creates so the report lists only those."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name):
        return self.root / name

    def add(self, *paths):
        for p in paths:
            if p is not None:
                self.files.append(Path(p).name)
        return paths[0] if len(paths) == 1 else paths

    def rows(self, name, rows, fieldnames=None):
        return self.add(ex.write_rows(self.path(name), rows, fieldnames))


def loop_settings(sc: Scenario, control=None) -> LoopSettings:
    s, c, se, r = sc["scenario"], sc["control"], sc["sensing"], sc["rod"]
    return LoopSettings(
        target=tuple(s["target"]), control=control or c["mode"], inextensible=r["inextensible"], drag=r["drag"],
        chi=c["chi"], dt=s["dt"], sense_dt=se["sense_dt"], duration=s["duration"], epsilon=c["epsilon"],
        hold=c["hold"], stop_on_reach=c["stop_on_reach"], noise=s["noise"], seed=s["seed"],
        n_units=se["n_units"], mode=se["ring_mode"], concentration_field=se["field"],
        diffusivity=se["diffusivity"], mu=se["mu"], log_stride=s["log_stride"],
        initial_voltages=sc.initial_voltages(), exact_transverse=sc["muscles"]["exact_transverse"])


def _loop_outputs(out: Outputs, result, target, length):
    out.add(result.write_csv(out.path("log.csv")))
    out.add(result.write_snapshots(out.path("snapshots.csv"), length))
    units = []
    if result.sensors is not None:
        S = result.sensors
        units = [{k: float(S[k][i]) for k in ("s", "rho", "alpha", "rho_hat", "alpha_hat", "theta", "theta_hat",
                                              "mu_hat")} for i in range(len(S["s"]))]
        out.rows("units.csv", units)
    out.add(*ex.emit_plots_data(result.rows, units, out.root, "panel"))
    times = [r["t"] for r in result.rows]
    out.add(plotting.plot_snapshots(result.snapshots, times, target, out.path("arm.png"), length))
    out.add(plotting.plot_traces(result.rows, ["rho_closest", "cos_alpha_tip"], out.path("distance.png")))
    if units:
        out.add(plotting.plot_traces(result.rows, ["sensing_error"], out.path("sensing_error.png")))
        out.add(plotting.plot_polar(units, out.path("polar.png")))


def cmd_rest_shape(sc: Scenario, out: Outputs):
    rs = sc["rest_shape"]
    grid = ex.run_rest_shape_grid(rs["top_base"], rs["top_tip"], sc["cable"]["bottom_voltages"],
                                  rs["b_sweep"], rs["b_sweep_voltages"], sc.cable_params(), sc.rod_params(),
                                  sc.muscle_specs())
    out.rows("rest_shapes.csv", grid.rows)
    nodes = [{"label": k, "node": i, "x": x, "y": y} for k, pos in grid.shapes.items() for i, (x, y) in enumerate(pos)]
    out.rows("rest_shape_nodes.csv", nodes, ["label", "node", "x", "y"])
    out.add(plotting.plot_shapes({k: v for k, v in grid.shapes.items() if k.startswith("grid")},
                                 out.path("rest_shapes_grid.png"), "top-muscle voltage grid"))
    out.add(plotting.plot_shapes({k: v for k, v in grid.shapes.items() if k.startswith("b_")},
                                 out.path("rest_shapes_adaptation.png"), "adaptation sweep"))
    failed = sum(1 for r in grid.rows if r["error"])
    metrics = dict(grid.trends, failed_cells=failed)
    return all(grid.trends.values()) and failed == 0, metrics


def cmd_reach(sc: Scenario, out: Outputs):
    case = sc["scenario"]["case"] or "I"
    st = loop_settings(sc)
    outcome = ex.run_reach(case, st, sc.rod_params(), sc.cable_params(), sc.muscle_specs())
    _loop_outputs(out, outcome.result, st.target, sc["rod"]["length"])
    return outcome.passed, outcome.metrics


def cmd_sensorimotor(sc: Scenario, out: Outputs):
    st = loop_settings(sc)
    res = run_loop(st, sc.rod_params(), sc.cable_params(), sc.consensus_params(), sc.muscle_specs())
    ok, metrics = ex.reach_verdict("I", res, st.epsilon, deadline=LOOP_DEADLINE, max_error=LOOP_MAX_ERROR)
    _loop_outputs(out, res, st.target, sc["rod"]["length"])
    return ok, metrics


def _sensing_inputs(sc: Scenario):
    se = sc["sensing"]
    rod, state = ex.sensing_arm(se["arm_shape"], se["bend"], sc.rod_params())
    return ex.sensor_layout(state, rod, se["n_units"])


def cmd_sense(sc: Scenario, out: Outputs):
    s, se = sc["scenario"], sc["sensing"]
    pos, kap, theta = _sensing_inputs(sc)
    res = ex.run_sense(pos, kap, s["target"], s["seed"], s["duration"], s["dt"], se["assumptions"],
                       se["ring_mode"], s["noise"], se["mu"], sc.consensus_params(),
                       log_stride=s["log_stride"], theta_true=theta)
    out.rows("trace.csv", res.trace)
    out.rows("units.csv", res.units)
    out.add(*ex.emit_plots_data(res.trace, res.units, out.root, "panel"))
    out.add(plotting.plot_traces(res.trace, ["E_prop", "E_chemo"], out.path("energies.png"), log=True))
    out.add(plotting.plot_traces(res.trace, ["sensing_error"], out.path("sensing_error.png")))
    out.add(plotting.plot_polar(res.units, out.path("polar.png")))
    err = float(res.errors[0])
    metrics = {"sensing_error": err, "E_prop": res.trace[-1]["E_prop"], "E_chemo": res.trace[-1]["E_chemo"]}
    limit = SENSE_LIMITS.get(s["case"] or ("II" if se["arm_shape"] == "bent" else "I"))
    return bool(err <= limit), metrics


def cmd_stats(sc: Scenario, out: Outputs):
    s, se, st = sc["scenario"], sc["sensing"], sc["stats"]
    rows, summary = ex.run_sense_stats(se["arm_shape"], st["x_range"], st["y_range"], st["nx"], st["ny"],
                                       se["assumptions"], s["seed"], s["duration"], s["dt"], se["bend"],
                                       se["ring_mode"], sc.consensus_params(), sc.rod_params())
    out.rows("stats.csv", rows)
    out.rows("stats_summary.csv", [summary])
    out.add(plotting.plot_stats(rows, out.path("stats.png")))
    lim = STATS_LIMITS.get(s["case"] or "I")
    ok = summary["failed"] == 0 and summary["mean"] <= lim["mean"]
    ok = ok and summary["max"] <= lim.get("max", np.inf) and summary["mean"] >= lim.get("mean_low", -np.inf)
    return bool(ok), summary


def cmd_mc_oracle(sc: Scenario, out: Outputs):
    m = sc["mc_oracle"]
    rows, dev = ex.run_mc_oracle(m["zeta0"], m["phi0"], m["chi"], m["dt"], m["length"])
    out.rows("pursuit.csv", rows)
    out.add(plotting.plot_pursuit(rows, out.path("pursuit.png")))
    return dev <= ORACLE_TOLERANCE, {"max_deviation": dev}


HANDLERS = {"rest_shape": cmd_rest_shape, "reach": cmd_reach, "sense": cmd_sense,
            "sensorimotor": cmd_sensorimotor, "stats": cmd_stats, "mc_oracle": cmd_mc_oracle}


def build_parser():
    parser = argparse.ArgumentParser(prog="octoarm", description="Planar soft-arm sensorimotor simulator.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="scenario file (sectioned key = value)")
        p.add_argument("--seed", type=int, help="master seed; overrides the scenario")
        p.add_argument("--out", type=Path, default=None, help="output directory (default: runs/<command>)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a scenario key, e.g. control.chi=150 (repeatable)")
    return parser


def run(args) -> int:
    kind = COMMANDS[args.command]
    overrides = [f"scenario.kind={kind}"] + list(args.override)
    if args.seed is not None:
        overrides.append(f"scenario.seed={args.seed}")
    sc = load_scenario(args.config, overrides)
    out = Outputs(args.out or Path("runs") / args.command)
    (out.path("scenario.ini")).write_text(sc.echo())
    out.add(out.path("scenario.ini"))
    start = time.time()
    with np.errstate(over="ignore"):
        passed, metrics = HANDLERS[kind](sc, out)
    report = {
        "command": args.command,
        "scenario_hash": sc.digest(),
        "verdict": "pass" if passed else "fail",
        "metrics": {k: _plain(v) for k, v in metrics.items()},
        "wall_time_s": round(time.time() - start, 3),
        "files": out.files + ["report.json"],
    }
    out.path("report.json").write_text(json.dumps(report, indent=2))
    print(f"{args.command}: {report['verdict']}  ({out.root})")
    for k, v in report["metrics"].items():
        print(f"  {k} = {v}")
    return 0 if passed else 2


def _plain(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return None if not np.isfinite(v) else v


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (OctoArmError, OSError) as exc:
        print(f"octoarm: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
