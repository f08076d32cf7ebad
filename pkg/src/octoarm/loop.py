"""Closed-loop simulation: environment, sensing, cables and rod stepped together."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import cable as cab
from .controller import (DEFAULT_INITIAL_VOLTAGES, arm_target_geometry, closest_point, muscle_currents,
                         rest_shape)
from .environment import DiffusionField, distance_bearing, steady_concentration
from .errors import DomainError, NumericalBlowup
from .muscles import KINDS, LM_BOTTOM, LM_TOP, TM, MuscleLoad, default_muscles
from .rod import Rod, RodParameters, RodState
from .sensing import (ConsensusParams, SensingArray, SensorReadings, corrupt, noise_stream,
                      random_initial_estimates, sensing_error, unit_arclengths)

CH_CONCENTRATION = 0
CH_CURVATURE = 1
CH_INIT = 2


def interpolate_estimates(alpha_units, rho_units, s_units, s):
    """Piecewise-linear fields from per-unit bearing and range estimates."""
    a = np.interp(s, s_units, alpha_units)
    r = np.interp(s, s_units, rho_units)
    return a, r


def estimate_closest(rho_field, s):
    return closest_point(rho_field, s)[1]


def certainty_equivalence_currents(alpha_field, s_hat, s, chi, inextensible=False):
    return muscle_currents(alpha_field, s, s_hat, chi, inextensible)


@dataclass
class LoopSettings:
    target: tuple = (0.5, 0.6)          # in arm lengths
    control: str = "estimate"           # "estimate" or "truth"
    inextensible: bool = True
    drag: bool = True
    chi: float = 200.0
    dt: float = 1e-5                    # rod and cable step
    sense_dt: float = 1e-5              # consensus step, divides dt
    duration: float = 2.0
    epsilon: float = 0.05               # in arm lengths
    hold: float = 0.1                   # seconds inside epsilon before stopping
    stop_on_reach: bool = True
    noise: float = 0.0
    seed: int = 0
    n_units: int = 21
    mode: str = "A"
    position_sums: str = "approx"       # "approx" (local, from estimates) or "exact" (true sensor positions)
    concentration_field: str = "steady"  # or "diffusion"
    diffusivity: float = 0.1
    mu: float = 2.0
    log_stride: int = 100
    initial_voltages: dict = field(default_factory=lambda: dict(DEFAULT_INITIAL_VOLTAGES))
    exact_transverse: bool = False

    def __post_init__(self):
        if self.control not in ("estimate", "truth"):
            raise DomainError("control must be 'estimate' or 'truth'")
        if not (self.dt > 0 and self.sense_dt > 0 and self.duration > 0):
            raise DomainError("time steps and duration must be positive")
        ratio = self.dt / self.sense_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise DomainError("sense_dt must divide dt")
        if self.position_sums not in ("approx", "exact"):
            raise DomainError("position_sums must be 'approx' or 'exact'")


@dataclass
class LoopResult:
    rows: List[Dict[str, float]]
    snapshots: np.ndarray          # (K, N+1, 2) node positions at logged rows
    final_state: RodState
    reached: bool
    reach_time: Optional[float]
    final_distance: float          # min over nodes, in L
    final_sensing_error: Optional[float]
    tip_cos_bearing: float
    steps: int
    notes: List[str] = field(default_factory=list)
    sensors: Optional[Dict[str, np.ndarray]] = None   # final per-unit estimates and truth

    def write_csv(self, path):
        path = Path(path)
        if not self.rows:
            return path
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(self.rows[0]))
            w.writeheader()
            w.writerows(self.rows)
        return path

    def write_snapshots(self, path, length=1.0):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "node", "x", "y"])
            for row, snap in zip(self.rows, self.snapshots):
                for k, (x, y) in enumerate(snap / length):
                    w.writerow([row["t"], k, x, y])
        return path


def initial_arm(rod: Rod, voltages=None, cable_params=None):
    deform, V = rest_shape(voltages or DEFAULT_INITIAL_VOLTAGES, cable_params, Rod(rod.params, inextensible=True))
    return rod.state_from_deformations(deform), V


def _sensor_nodes(n_units, N):
    s = unit_arclengths(n_units)
    return np.rint(s * N).astype(int)


def _sensor_curvature(kappa, nodes, N):
    # interior-node curvature nearest to each sensor
    idx = np.clip(nodes, 1, N - 1) - 1
    return kappa[idx]


def run_loop(settings: LoopSettings, rod_params: RodParameters = None, cable_params: cab.CableParams = None,
             consensus: ConsensusParams = None, specs=None, callback=None) -> LoopResult:
    """Co-step sensing, control, cables and rod until epsilon-reach or the time limit."""
    st = settings
    rod_params = rod_params or RodParameters()
    cable_params = cable_params or cab.CableParams()
    consensus = consensus or ConsensusParams()
    specs = specs or default_muscles()
    L = rod_params.length
    rod = Rod(rod_params, inextensible=st.inextensible, drag=st.drag)
    g = rod.geometry
    N = g.N
    target = np.asarray(st.target, dtype=float) * L
    if np.hypot(*target) == 0:
        raise DomainError("target coincides with the arm base")

    state, V0 = initial_arm(rod, st.initial_voltages, cable_params)
    V = np.stack([V0.get(k, np.zeros(N)) for k in KINDS])
    cstate = cab.initial_state(V, cable_params)

    nodes = _sensor_nodes(st.n_units, N)
    s_units = unit_arclengths(st.n_units)
    spacing = s_units[1]
    sensing = None
    fieldsim = None
    if st.control == "estimate":
        rng = noise_stream(st.seed, CH_INIT)
        th, al, mu = random_initial_estimates(rng, (st.n_units,), st.mu)
        sensing = SensingArray(th, al, mu, spacing, consensus, mode=st.mode)
        n_noise = noise_stream(st.seed, CH_CONCENTRATION)
        k_noise = noise_stream(st.seed, CH_CURVATURE)
        if st.concentration_field == "diffusion":
            fieldsim = DiffusionField(target, mu=st.mu, diffusivity=st.diffusivity, length_scale=L,
                                      half_width=1.5 * L, spacing=0.05 * L)
    n_sense = int(round(st.dt / st.sense_dt))
    n_steps = int(round(st.duration / st.dt))

    rows, snaps = [], []
    reached_since = None
    reach_time = None
    err = None
    step = 0
    for step in range(n_steps + 1):
        t = step * st.dt
        geo = arm_target_geometry(state, target, g)
        readings = None
        if sensing is not None:
            pos_u = state.positions[nodes]
            rho_u = np.hypot(*(target - pos_u).T) / L
            if fieldsim is not None:
                c_true = fieldsim.sample(pos_u)
            else:
                c_true = steady_concentration(np.maximum(rho_u, 1e-6), st.mu)
            kap_u = _sensor_curvature(rod.deformations(state).kappa, nodes, N) * L
            readings = SensorReadings(corrupt(c_true, st.noise, n_noise), corrupt(kap_u, st.noise, k_noise))
            if st.position_sums == "exact":
                sensing.exact_positions = pos_u / L
            est = sensing.estimates(pos_u / L, readings.concentration)
            err = float(sensing_error(est, target / L))

        inside = geo.reach_distance <= st.epsilon * L
        if inside and reached_since is None:
            reached_since = t
        elif not inside:
            reached_since = None

        if step % st.log_stride == 0 or step == n_steps:
            row = {"t": t, "tip_x": state.positions[-1, 0] / L, "tip_y": state.positions[-1, 1] / L,
                   "rho_closest": geo.reach_distance / L, "s_bar": geo.s_bar / L,
                   "cos_alpha_tip": float(np.cos(geo.alpha[-1]))}
            if sensing is not None:
                ep, ec = sensing.energies(readings, pos_u / L)
                row.update({"sensing_error": err, "E_prop": float(ep), "E_chemo": float(ec),
                            "mu_mean": float(sensing.mu.mean())})
            for i, k in enumerate(KINDS):
                row[f"u_max_{k}"] = float(cab.activation(cstate.V[i]).max())
            rows.append(row)
            snaps.append(state.positions.copy())
            if callback is not None:
                callback(t, state, sensing)

        if step == n_steps:
            break
        if st.stop_on_reach and reached_since is not None and t - reached_since >= st.hold:
            reach_time = reached_since
            break

        # sensing, then control, then cables, then the rod
        if sensing is not None:
            for _ in range(n_sense):
                sensing.step(readings, st.sense_dt)
            rho_hat = np.exp(-sensing.mu * readings.concentration)
            a_f, r_f = interpolate_estimates(sensing.alpha, rho_hat, s_units, g.s_elements / L)
            s_hat = estimate_closest(r_f, g.s_elements)
            I = certainty_equivalence_currents(a_f, s_hat, g.s_elements, st.chi, st.inextensible)
        else:
            I = muscle_currents(geo.alpha, g.s_elements, geo.s_bar, st.chi, st.inextensible)
        current = np.stack([I[k] for k in KINDS])
        cstate = cab.step_cable(cstate, current, cab.SEALED, cable_params, st.dt, g.ds, step)
        u = {k: cab.activation(cstate.V[i]) for i, k in enumerate(KINDS)}
        if st.inextensible:
            u[TM] = np.zeros(N)
        load = MuscleLoad(specs, g, u, st.exact_transverse)
        state = rod.step(state, st.dt, load, step)
        if fieldsim is not None:
            fieldsim.step(st.dt)

    if reach_time is None and reached_since is not None:
        reach_time = reached_since
    geo = arm_target_geometry(state, target, g)
    sensors = None
    if sensing is not None:
        pos_u = state.positions[nodes] / L
        rho_true, alpha_true, _ = distance_bearing(pos_u, state.angles[np.minimum(nodes, N - 1)], target / L)
        sensors = {"s": s_units, "theta_hat": sensing.theta.copy(), "alpha_hat": sensing.alpha.copy(),
                   "mu_hat": sensing.mu.copy(), "rho_hat": np.exp(-sensing.mu * readings.concentration),
                   "rho": rho_true, "alpha": alpha_true,
                   "theta": state.angles[np.minimum(nodes, N - 1)].copy()}
    return LoopResult(rows, np.array(snaps), state, reach_time is not None, reach_time,
                      geo.reach_distance / L, err, float(np.cos(geo.alpha[-1])), step, sensors=sensors)
