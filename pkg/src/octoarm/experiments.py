"""Experiment drivers: rest shapes, reaching cases, sensing cases and sweeps, pursuit oracle."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import cable as cab
from .controller import integrate_bearing_ode, mc_unicycle_oracle, rest_shape
from .environment import distance_bearing, steady_concentration
from .errors import OctoArmError
from .loop import CH_CONCENTRATION, CH_CURVATURE, CH_INIT, LoopResult, LoopSettings, run_loop
from .muscles import LM_BOTTOM, LM_TOP
from .rod import Deformations, Rod, RodParameters, RodState, integrate_kinematics
from .sensing import (ConsensusParams, SensingArray, SensorReadings, corrupt, noise_stream,
                      random_initial_estimates, unit_arclengths)


def write_rows(path, rows: Sequence[dict], fieldnames=None):
    path = Path(path)
    fieldnames = fieldnames or (list(rows[0]) if rows else [])
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        w.writerows(rows)
    return path


def _target_rng(seed, index):
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(CH_INIT, index))
    return np.random.Generator(np.random.Philox(ss))


# -- rest shapes ---------------------------------------------------------------

@dataclass
class RestShapeGrid:
    rows: List[dict]
    shapes: Dict[str, np.ndarray]          # label -> (N+1, 2) centreline in L
    trends: Dict[str, bool]


def _shape_metrics(deform: Deformations, rod: Rod):
    positions, angles = integrate_kinematics(deform, rod.params)
    L = rod.params.length
    k = deform.kappa * L
    q = max(1, len(k) // 10)
    return positions / L, {
        "base_curvature": float(np.mean(k[:q])),
        "tip_curvature": float(np.mean(k[-q:])),
        "tip_angle": float(angles[-1]),
        "tip_x": float(positions[-1, 0] / L),
        "tip_y": float(positions[-1, 1] / L),
    }


def run_rest_shape_grid(top_base=(30, 40, 50, 60), top_tip=(60, 80, 100, 120), bottom=(40.0, 0.0),
                        b_sweep=(0.0, 0.5, 1.0, 1.5, 2.0), b_voltages=(40.0, 80.0),
                        cable_params: cab.CableParams = None, rod_params: RodParameters = None,
                        specs=None) -> RestShapeGrid:
    """Static rest shapes over a grid of top-muscle end voltages, plus an adaptation sweep.

    A failing cell is recorded with its error message and the grid continues.
    """
    cable_params = cable_params or cab.CableParams()
    rod = Rod(rod_params or RodParameters(), inextensible=True)
    rows, shapes = [], {}

    def cell(label, boundary, params, extra):
        row = dict(label=label, **extra)
        try:
            deform, _ = rest_shape(boundary, params, rod, specs)
            pos, metrics = _shape_metrics(deform, rod)
            row.update(metrics, error="")
            shapes[label] = pos
        except OctoArmError as exc:
            row.update(base_curvature=np.nan, tip_curvature=np.nan, tip_angle=np.nan,
                       tip_x=np.nan, tip_y=np.nan, error=str(exc))
        rows.append(row)
        return row

    grid = np.full((len(top_base), len(top_tip), 2), np.nan)
    for i, v0 in enumerate(top_base):
        for j, vL in enumerate(top_tip):
            r = cell(f"grid_{v0:g}_{vL:g}", {LM_TOP: (v0, vL), LM_BOTTOM: bottom}, cable_params,
                     dict(sweep="grid", top_base=v0, top_tip=vL, b=cable_params.adaptation_gain))
            grid[i, j] = r["base_curvature"], r["tip_curvature"]
    swept = []
    for b in b_sweep:
        params = cab.CableParams(cable_params.tau, cable_params.adaptation_time, cable_params.length_constant, b)
        r = cell(f"b_{b:g}", {LM_TOP: b_voltages, LM_BOTTOM: bottom}, params,
                 dict(sweep="b", top_base=b_voltages[0], top_tip=b_voltages[1], b=b))
        swept.append(abs(r["tip_angle"]))
    trends = {
        # signed towards the top side; the grid starts below the bottom-muscle base voltage
        "base_curvature_increases_with_top_base": bool(np.all(np.diff(grid[:, :, 0], axis=0) > 0)),
        "tip_curvature_increases_with_top_tip": bool(np.all(np.diff(np.abs(grid[:, :, 1]), axis=1) > 0)),
        "curl_decreases_with_b": bool(np.all(np.diff(swept) < 0)),
    }
    return RestShapeGrid(rows, shapes, trends)


# -- reaching -------------------------------------------------------------------

@dataclass
class ReachOutcome:
    case: str
    result: LoopResult
    passed: bool
    metrics: Dict[str, float]


def reach_verdict(case, result: LoopResult, epsilon=0.05, settle=0.5, deadline=None, max_error=None):
    """Pass/fail for a reaching run.

    Reaching cases need an epsilon-reach that holds for every logged sample
    afterwards; the pointing case needs cos(alpha(L)) >= 1 - epsilon over the
    final ``settle`` seconds.  ``deadline`` and ``max_error`` add the closed-loop
    requirements (reach time and final sensing error).
    """
    rows = result.rows
    t = np.array([r["t"] for r in rows])
    rho = np.array([r["rho_closest"] for r in rows])
    cos_tip = np.array([r["cos_alpha_tip"] for r in rows])
    metrics = {"final_distance": result.final_distance, "tip_cos_bearing": result.tip_cos_bearing,
               "reach_time": result.reach_time if result.reach_time is not None else np.nan}
    if case == "II":
        tail = cos_tip[t >= t[-1] - settle]
        metrics["min_cos_tail"] = float(tail.min())
        return bool(tail.min() >= 1 - epsilon), metrics
    inside = rho <= epsilon
    first = int(np.argmax(inside)) if inside.any() else None
    stays = first is not None and bool(inside[first:].all())
    ok = bool(result.reached and stays)
    metrics["stays_inside"] = float(stays)
    if deadline is not None:
        ok = ok and result.reach_time is not None and result.reach_time <= deadline
    if max_error is not None:
        err = result.final_sensing_error
        metrics["final_sensing_error"] = np.nan if err is None else err
        ok = ok and err is not None and err <= max_error
    return ok, metrics


def run_reach(case, settings: LoopSettings, rod_params=None, cable_params=None, specs=None) -> ReachOutcome:
    result = run_loop(settings, rod_params, cable_params, specs=specs)
    passed, metrics = reach_verdict(case, result, settings.epsilon)
    return ReachOutcome(case, result, passed, metrics)


# -- sensing on a static arm ----------------------------------------------------------

def sensor_layout(state: RodState, rod: Rod, n_units=21):
    """Sensor positions and curvature readings (both in arm lengths) and true tangent angles."""
    N = rod.N
    L = rod.params.length
    nodes = np.rint(unit_arclengths(n_units) * N).astype(int)
    kappa = rod.deformations(state).kappa
    return (state.positions[nodes] / L, kappa[np.clip(nodes, 1, N - 1) - 1] * L,
            state.angles[np.minimum(nodes, N - 1)])


def sensing_arm(shape="straight", bend=-2.0, rod_params: RodParameters = None):
    """Static arm for the sensing experiments: straight, or uniformly bent.

    ``bend`` is the total turning angle over the arm; negative curls downward.
    """
    rod = Rod(rod_params or RodParameters(), inextensible=True)
    N = rod.N
    kappa = np.zeros(N - 1) if shape == "straight" else np.full(N - 1, bend / rod.params.length)
    return rod, rod.state_from_deformations(Deformations(np.ones(N), np.zeros(N), kappa))


@dataclass
class SenseResult:
    targets: np.ndarray            # (B, 2)
    errors: np.ndarray             # (B,) final E^r in L
    estimates: np.ndarray          # (B, n, 2)
    array: SensingArray
    trace: List[dict] = field(default_factory=list)   # time series for batch member 0
    units: List[dict] = field(default_factory=list)   # final per-unit table for batch member 0


def run_sense(positions, kappa, targets, seed=0, duration=1.0, dt=1e-5, assumptions="free", mode="A",
              noise=0.0, mu=2.0, params: ConsensusParams = None, log_stride=1000, theta_true=None, index_offset=0):
    """Consensus sensing on a static arm for one or many targets (batched).

    ``assumptions="known"`` uses the true sensor positions in the chemosensing
    flow and pins every intensity estimate to ``mu``.  Initial estimates for
    target ``b`` are drawn from the stream keyed by ``index_offset + b``.
    """
    params = params or ConsensusParams()
    positions = np.asarray(positions, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    B, n = len(targets), len(positions)
    th, al, mh = np.empty((B, n)), np.empty((B, n)), np.empty((B, n))
    for b in range(B):
        th[b], al[b], mh[b] = random_initial_estimates(_target_rng(seed, index_offset + b), (n,), mu)
    known = assumptions == "known"
    if known:
        mh[:] = mu
    arr = SensingArray(th, al, mh, unit_arclengths(n)[1], params, mode=mode, pin_mu=known,
                       exact_positions=np.broadcast_to(positions, (B, n, 2)) if known else None)
    d = targets[:, None, :] - positions[None]
    c_true = steady_concentration(np.maximum(np.hypot(d[..., 0], d[..., 1]), 1e-6), mu)
    k_true = np.broadcast_to(np.asarray(kappa, dtype=float), (B, n))
    nc, nk = noise_stream(seed, CH_CONCENTRATION), noise_stream(seed, CH_CURVATURE)
    steps = int(round(duration / dt))
    trace = []
    readings = SensorReadings(c_true, k_true)
    for k in range(steps + 1):
        if noise:
            readings = SensorReadings(corrupt(c_true, noise, nc), corrupt(k_true, noise, nk))
        if k % log_stride == 0 or k == steps:
            est = arr.estimates(positions, c_true)
            ep, ec = arr.energies(SensorReadings(c_true, k_true), positions)
            trace.append({"t": k * dt, "E_prop": float(np.ravel(ep)[0]), "E_chemo": float(np.ravel(ec)[0]),
                          "sensing_error": float(np.mean(np.hypot(*(est[0] - targets[0]).T))),
                          "mu_mean": float(arr.mu[0].mean())})
        if k == steps:
            break
        arr.step(readings, dt)
    est = arr.estimates(positions, c_true)
    errors = np.mean(np.hypot(est[..., 0] - targets[:, None, 0], est[..., 1] - targets[:, None, 1]), axis=-1)
    units = []
    theta_true = np.zeros(n) if theta_true is None else np.asarray(theta_true)
    rho, alpha, _ = distance_bearing(positions, theta_true, targets[0])
    s_units = unit_arclengths(n)
    for i in range(n):
        units.append({"unit": i, "s": s_units[i], "theta_hat": arr.theta[0, i], "theta": theta_true[i],
                      "alpha_hat": arr.alpha[0, i], "alpha": alpha[i], "mu_hat": arr.mu[0, i],
                      "rho_hat": float(np.exp(-arr.mu[0, i] * c_true[0, i])), "rho": rho[i],
                      "est_x": est[0, i, 0], "est_y": est[0, i, 1]})
    return SenseResult(targets, errors, est, arr, trace, units)


def target_grid(x_range, y_range, nx, ny):
    X, Y = np.meshgrid(np.linspace(*x_range, nx), np.linspace(*y_range, ny), indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=-1)


def run_sense_stats(shape="straight", x_range=(0.0, 1.0), y_range=(0.0, 1.0), nx=11, ny=11,
                    assumptions="free", seed=0, duration=1.0, dt=1e-5, bend=-2.0, mode="A",
                    params: ConsensusParams = None, rod_params=None, chunk=64):
    """Final sensing error over a grid of targets; returns (rows, summary).

    Targets are processed in batches; initial estimates depend only on
    ``(seed, target index)`` so results do not depend on the batching.
    """
    rod, state = sensing_arm(shape, bend, rod_params)
    pos, kap, th = sensor_layout(state, rod)
    targets = target_grid(x_range, y_range, nx, ny)
    errors = np.full(len(targets), np.nan)
    for start in range(0, len(targets), chunk):
        sl = slice(start, start + chunk)
        try:
            res = run_sense(pos, kap, targets[sl], seed, duration, dt, assumptions, mode, params=params,
                            log_stride=10 ** 9, index_offset=start)
            errors[sl] = res.errors
        except OctoArmError:
            pass    # left as NaN and counted as failed
    rows = [{"index": i, "target_x": x, "target_y": y, "error": e, "failed": int(not np.isfinite(e))}
            for i, ((x, y), e) in enumerate(zip(targets, errors))]
    ok = np.isfinite(errors)
    summary = {"count": int(ok.sum()), "failed": int((~ok).sum()),
               "mean": float(errors[ok].mean()) if ok.any() else np.nan,
               "min": float(errors[ok].min()) if ok.any() else np.nan,
               "max": float(errors[ok].max()) if ok.any() else np.nan}
    return rows, summary


# -- pursuit oracle cross-check ----------------------------------------------------

def run_mc_oracle(zeta0=0.8, phi0=1.0, chi=3.0, dt=1e-5, length=1.0):
    """Unicycle pursuit (forward Euler) against the arm-side range/bearing integration (RK4).

    With unit speed, arc length plays the role of time and the curvature law
    ``chi * sin(alpha)`` is the pursuit turning rate, so both sides solve the same
    equations on the same grid.  Returns (rows, max deviation).
    """
    oracle = mc_unicycle_oracle(zeta0, phi0, chi, dt, length)
    steps = len(oracle.t) - 1
    s, rho, alpha, hit = integrate_bearing_ode(zeta0, phi0, steps * dt, steps,
                                               curvature=lambda s_, r, a: chi * np.sin(a))
    m = min(len(oracle.t), hit if hit is not None else len(s))
    dev = max(np.max(np.abs(oracle.zeta[:m] - rho[:m])), np.max(np.abs(oracle.phi[:m] - alpha[:m])))
    stride = max(1, m // 1000)
    rows = [{"s": s[k], "zeta": oracle.zeta[k], "phi": oracle.phi[k], "rho": rho[k], "alpha": alpha[k]}
            for k in range(0, m, stride)]
    return rows, float(dev)


# -- plot-ready tables -----------------------------------------------------------------

PANEL_COLUMNS = {
    "energy": ["t", "E_prop", "E_chemo"],
    "error": ["t", "sensing_error", "rho_closest"],
    "polar": ["s", "rho", "alpha", "rho_hat", "alpha_hat"],
}


def emit_plots_data(rows: Sequence[dict], units: Sequence[dict] = (), out_dir=".", prefix="run"):
    """Split a run log into one CSV per figure panel; returns the written paths.

    Columns missing from the log are skipped, so the same call serves the
    reaching runs (no estimates) and the sensing runs (no arm distance).
    """
    out_dir = Path(out_dir)
    paths = []
    for panel in ("energy", "error"):
        cols = [c for c in PANEL_COLUMNS[panel] if rows and c in rows[0]]
        if len(cols) > 1:
            paths.append(write_rows(out_dir / f"{prefix}_{panel}.csv",
                                    [{c: r[c] for c in cols} for r in rows], cols))
    if units:
        cols = PANEL_COLUMNS["polar"]
        paths.append(write_rows(out_dir / f"{prefix}_polar.csv", [{c: u[c] for c in cols} for u in units], cols))
    return paths
