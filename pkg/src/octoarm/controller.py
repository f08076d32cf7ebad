"""Feedback current law, arm/target geometry, static equilibria and the pursuit oracle."""
from __future__ import annotations

from typing import Callable, Dict, Mapping, NamedTuple, Optional

import numpy as np
from scipy.optimize import root

from . import cable as cab
from .environment import distance_bearing, wrap_angle
from .errors import ConvergenceError, DomainError
from .muscles import (LM_BOTTOM, LM_TOP, TM, MuscleLoad, default_muscles, element_curvature,
                      muscle_stresses, total_stress)
from .rod import Deformations, Rod, RodGeometry, RodParameters, RodState, integrate_kinematics


def closest_point(rho, s=None):
    """Index and arc-length of the minimum of a sampled range profile (first on ties)."""
    rho = np.asarray(rho, dtype=float)
    if rho.size == 0:
        raise DomainError("empty range profile")
    k = int(np.argmin(rho))
    return k, (float(s[k]) if s is not None else k)


def muscle_currents(alpha, s, s_bar, chi, inextensible=False) -> Dict[str, np.ndarray]:
    """Sign-split bearing law, active only up to the closest point."""
    alpha = np.asarray(alpha, dtype=float)
    gate = (np.asarray(s, dtype=float) <= s_bar).astype(float)
    sa = np.sin(alpha)
    top = chi * np.where(sa >= 0, sa, 0.0) * gate
    bottom = -chi * np.where(sa <= 0, sa, 0.0) * gate
    tm = np.zeros_like(alpha) if inextensible else chi * np.cos(alpha) ** 2 * gate
    return {LM_TOP: top, LM_BOTTOM: bottom, TM: tm}


class ArmTargetGeometry(NamedTuple):
    rho: np.ndarray        # per element midpoint
    alpha: np.ndarray      # per element midpoint
    s_bar: float
    closest: int
    reach_distance: float  # min over nodes


def arm_target_geometry(state: RodState, target, geometry: RodGeometry) -> ArmTargetGeometry:
    mid = 0.5 * (state.positions[:-1] + state.positions[1:])
    rho, alpha, _ = distance_bearing(mid, state.angles, target)
    k, s_bar = closest_point(rho, geometry.s_elements)
    node_rho = np.hypot(*(np.asarray(target) - state.positions).T)
    return ArmTargetGeometry(rho, alpha, s_bar, k, float(node_rho.min()))


def feedback_currents(state: RodState, target, geometry: RodGeometry, chi, inextensible=False):
    g = arm_target_geometry(state, target, geometry)
    return muscle_currents(g.alpha, geometry.s_elements, g.s_bar, chi, inextensible), g


# -- relative geometry along the arm ------------------------------------------------

def _bearing_rhs(rho, alpha, nu1, nu2, kappa):
    d_rho = -(nu1 * np.cos(alpha) + nu2 * np.sin(alpha))
    d_alpha = -kappa + (nu1 * np.sin(alpha) - nu2 * np.cos(alpha)) / rho
    return d_rho, d_alpha


def integrate_bearing_ode(rho0, alpha0, length, steps, curvature: Callable = None, nu1=1.0, nu2=0.0):
    """RK4 for the range/bearing equations on a uniform arc-length grid.

    ``curvature(s, rho, alpha)`` closes the loop (e.g. ``chi * sin(alpha)``); it
    defaults to zero.  Integration stops early if the range reaches zero, and the
    returned ``hit`` is the index of the first degenerate sample (or None).
    """
    h = length / steps
    kap = curvature or (lambda s, r, a: 0.0)
    rho = np.full(steps + 1, np.nan)
    alpha = np.full(steps + 1, np.nan)
    rho[0], alpha[0] = rho0, alpha0
    hit = None
    for k in range(steps):
        s, r, a = k * h, rho[k], alpha[k]

        def f(s_, r_, a_):
            return _bearing_rhs(r_, a_, nu1, nu2, kap(s_, r_, a_))

        k1 = f(s, r, a)
        k2 = f(s + h / 2, r + h / 2 * k1[0], a + h / 2 * k1[1])
        k3 = f(s + h / 2, r + h / 2 * k2[0], a + h / 2 * k2[1])
        k4 = f(s + h, r + h * k3[0], a + h * k3[1])
        rn = r + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        an = a + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if not (rn > 0 and np.isfinite(an)):
            hit = k + 1
            break
        rho[k + 1], alpha[k + 1] = rn, an
    return np.linspace(0.0, length, steps + 1), rho, alpha, hit


def sensory_kinematics_integrate(deform: Deformations, target, params: RodParameters, substeps=4):
    """Range and bearing at the nodes, integrated from the clamped base.

    Stretch and shear are constant on each element; the discrete curvature acts as
    an angle jump at each interior node.  Returns ``(rho, alpha, hit)`` where ``hit``
    is the first node index at which the range collapsed (None otherwise).
    """
    target = np.asarray(target, dtype=float)
    rho0 = float(np.hypot(*target))
    if rho0 <= 0:
        raise DomainError("target coincides with the arm base")
    alpha0 = float(np.arctan2(target[1], target[0]))
    N = len(deform.nu1)
    ds = params.ds
    h = ds / substeps
    rho = np.full(N + 1, np.nan)
    alpha = np.full(N + 1, np.nan)
    rho[0], alpha[0] = rho0, alpha0
    r, a = rho0, alpha0
    for e in range(N):
        n1, n2 = deform.nu1[e], deform.nu2[e]
        for _ in range(substeps):
            k1 = _bearing_rhs(r, a, n1, n2, 0.0)
            k2 = _bearing_rhs(r + h / 2 * k1[0], a + h / 2 * k1[1], n1, n2, 0.0)
            k3 = _bearing_rhs(r + h / 2 * k2[0], a + h / 2 * k2[1], n1, n2, 0.0)
            k4 = _bearing_rhs(r + h * k3[0], a + h * k3[1], n1, n2, 0.0)
            r = r + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            a = a + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            if not r > 0:
                return rho, alpha, e + 1
        if e < N - 1:
            a -= deform.kappa[e] * ds
        rho[e + 1], alpha[e + 1] = r, wrap_angle(a)
    return rho, alpha, None


# -- statics ----------------------------------------------------------------------

def _static_residual_inextensible(kappa, u, specs, geometry, exact_transverse):
    N = geometry.N
    d = Deformations(np.ones(N), np.zeros(N), kappa)
    act = total_stress(muscle_stresses(u, specs, d, geometry, exact_transverse), geometry)
    return geometry.EI * kappa + act.couple


def static_deformations(u: Mapping[str, np.ndarray], rod: Rod, specs=None, guess: Deformations = None,
                        exact_transverse=False, tol=1e-12) -> Deformations:
    """Deformations balancing passive and muscle stresses for frozen activations."""
    g = rod.geometry
    N = g.N
    specs = specs or default_muscles()
    if guess is None:
        guess = Deformations(np.ones(N), np.zeros(N), np.zeros(N - 1))
    if rod.inextensible:
        u = {k: v for k, v in u.items() if k != TM}
        sol = root(_static_residual_inextensible, np.asarray(guess.kappa, float),
                   args=(u, specs, g, exact_transverse), method="hybr", tol=tol)
        res = _static_residual_inextensible(sol.x, u, specs, g, exact_transverse)
        _check_static(res, g, sol)
        return Deformations(np.ones(N), np.zeros(N), sol.x)

    def residual(x):
        nu1, kappa = x[:N], x[N:]
        d = Deformations(nu1, np.zeros(N), kappa)
        act = total_stress(muscle_stresses(u, specs, d, g, exact_transverse), g)
        # axial force balance scaled by EA so both blocks are O(strain)
        r1 = (g.EA * (nu1 - 1.0) + act.force[:, 0]) / g.EA
        r2 = (g.EI * kappa + act.couple) / g.EI
        return np.concatenate([r1, r2])

    x0 = np.concatenate([guess.nu1, guess.kappa])
    sol = root(residual, x0, method="hybr", tol=tol)
    nu1, kappa = sol.x[:N], sol.x[N:]
    if np.any(nu1 <= 0) or np.max(np.abs(residual(sol.x))) > 1e-8:
        raise ConvergenceError("extensible statics did not converge", [float(np.max(np.abs(residual(sol.x))))])
    return Deformations(nu1, np.zeros(N), kappa)


def _check_static(res, g, sol):
    scale = np.max(g.EI) * 1e-6 + 1e-300
    if not np.all(np.isfinite(res)) or np.max(np.abs(res)) > scale:
        raise ConvergenceError("static curvature solve did not converge", [float(np.max(np.abs(res)))])


def rest_voltages(boundary: Mapping[str, tuple], cable_params: cab.CableParams, geometry: RodGeometry):
    """Analytic fixed-end rest voltages on the element grid for each listed muscle."""
    return {k: cab.rest_voltage_analytic(v0, vL, cable_params, geometry.s_elements, geometry.params.length)
            for k, (v0, vL) in boundary.items()}


def rest_shape(boundary: Mapping[str, tuple], cable_params: cab.CableParams = None, rod: Rod = None,
               specs=None):
    """Static shape under fixed-end cable voltages; returns (deformations, voltages)."""
    cable_params = cable_params or cab.CableParams()
    rod = rod or Rod(inextensible=True)
    V = rest_voltages(boundary, cable_params, rod.geometry)
    u = {k: cab.activation(v) for k, v in V.items()}
    return static_deformations(u, rod, specs), V


DEFAULT_INITIAL_VOLTAGES = {LM_TOP: (60.0, 80.0), LM_BOTTOM: (40.0, 0.0)}


class Equilibrium(NamedTuple):
    deform: Deformations
    positions: np.ndarray
    angles: np.ndarray
    rho: np.ndarray       # nodes
    alpha: np.ndarray     # nodes
    s_bar: float
    iterations: int
    history: list


def _element_bearing(positions, angles, target):
    mid = 0.5 * (positions[:-1] + positions[1:])
    rho, alpha, _ = distance_bearing(mid, angles, target)
    return rho, alpha


def equilibrium_solve(target, rod: Rod = None, cable_params: cab.CableParams = None, chi=200.0,
                      specs=None, omega=0.1, tol=1e-8, max_iter=10000, guess: Deformations = None,
                      exact_transverse=False) -> Equilibrium:
    """Damped fixed-point iteration for the closed-loop static arm.

    Each sweep: geometry -> currents -> sealed-end cable statics -> activations ->
    statics for frozen activations, then relax the deformations toward the result.
    """
    rod = rod or Rod(inextensible=True)
    cable_params = cable_params or cab.CableParams()
    specs = specs or default_muscles()
    g = rod.geometry
    params = rod.params
    target = np.asarray(target, dtype=float)
    if np.hypot(*target) == 0:
        raise DomainError("target coincides with the arm base")
    N = g.N
    d = guess or Deformations(np.ones(N), np.zeros(N), np.zeros(N - 1))
    history = []
    V_guess = None
    for it in range(1, max_iter + 1):
        pos, ang = integrate_kinematics(d, params)
        rho_e, alpha_e = _element_bearing(pos, ang, target)
        _, s_bar = closest_point(rho_e, g.s_elements)
        I = muscle_currents(alpha_e, g.s_elements, s_bar, chi, rod.inextensible)
        kinds = list(I)
        V = cab.solve_cable_static(np.stack([I[k] for k in kinds]), cable_params, g.ds, guess=V_guess)
        V_guess = V
        u = {k: cab.activation(V[i]) for i, k in enumerate(kinds)}
        new = static_deformations(u, rod, specs, guess=d, exact_transverse=exact_transverse)
        step = max(np.max(np.abs(new.nu1 - d.nu1)), np.max(np.abs(new.nu2 - d.nu2)),
                   np.max(np.abs(new.kappa - d.kappa)) * params.length)
        d = Deformations(*((1 - omega) * np.asarray(a) + omega * np.asarray(b) for a, b in zip(d, new)))
        history.append(float(omega * step))
        if omega * step < tol:
            pos, ang = integrate_kinematics(d, params)
            rho, alpha, _ = sensory_kinematics_integrate(d, target, params)
            rho_e, _ = _element_bearing(pos, ang, target)
            return Equilibrium(d, pos, ang, rho, alpha, closest_point(rho_e, g.s_elements)[1], it, history)
    raise ConvergenceError(f"equilibrium iteration did not converge in {max_iter} sweeps", history)


# -- pursuit analogy ------------------------------------------------------------

class PursuitTrajectory(NamedTuple):
    t: np.ndarray
    zeta: np.ndarray
    phi: np.ndarray
    captured: bool


def mc_unicycle_oracle(zeta0, phi0, chi, dt, T, speed=1.0, target_speed=0.0, target_heading=0.0,
                       capture_radius=0.0) -> PursuitTrajectory:
    """Forward Euler on the range/bearing form of a unicycle under motion-camouflage steering.

    ``target_heading`` is the target's velocity bearing, held constant.
    """
    if not zeta0 > 0:
        raise DomainError("initial range must be positive")
    if not (dt > 0 and T > 0 and speed > 0):
        raise DomainError("dt, T and speed must be positive")
    n = int(round(T / dt))
    zeta = np.empty(n + 1)
    phi = np.empty(n + 1)
    zeta[0], phi[0] = zeta0, phi0
    psi = target_heading
    ratio = target_speed / speed
    captured = False
    k = 0
    for k in range(n):
        w = chi * (np.sin(phi[k]) + ratio * np.sin(psi))
        dz = -speed * np.cos(phi[k]) - target_speed * np.cos(psi)
        dp = -w + (speed * np.sin(phi[k]) + target_speed * np.sin(psi)) / zeta[k]
        zeta[k + 1] = zeta[k] + dt * dz
        phi[k + 1] = phi[k] + dt * dp
        if zeta[k + 1] <= capture_radius:
            captured = True
            k += 1
            break
    else:
        k = n
    t = np.arange(k + 1) * dt
    return PursuitTrajectory(t, zeta[:k + 1], phi[:k + 1], captured)
