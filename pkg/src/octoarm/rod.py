"""Planar Cosserat rod on a staggered grid.

Layout: ``N`` elements, ``N + 1`` nodes.  Positions and translational momenta
live on nodes, angles, stretch/shear and angular momenta live on elements, and
curvature and bending couples live on the ``N - 1`` interior nodes.  The base
node and the first element are clamped.

The discrete internal forces are exact gradients of the discrete stored energy,
so with frozen (conservative) muscle loads and no drag the only energy sink is
the damping term.

Two stepping modes:

* extensible: position Verlet on ``(r, theta)`` with the damping term taken at
  the new velocity (unconditionally stable for the very light rotational
  inertia of the thin tip).
* inextensible: node spacing is slaved to the angles, ``r_{k+1} - r_k =
  ds * a(theta_k)``, so stretch and shear stay exactly at ``(1, 0)``.  The angle
  equations carry the full translational inertia of the chain and are stepped
  with the same half-drift / kick / half-drift pattern.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from .errors import DomainError, NumericalBlowup


@dataclass(frozen=True)
class RodParameters:
    length: float = 0.2
    base_radius: float = 0.01
    tip_radius: float = 0.001
    density: float = 1042.0
    damping: float = 0.01
    youngs_modulus: float = 1.0e4
    shear_modulus: float = 1.0e4 / 3.0
    water_density: float = 1022.0
    drag_tangential: float = 0.155
    drag_perpendicular: float = 5.065
    elements: int = 100
    # "inertial": the angular damping per length is damping * I / A, so both
    # damping rates scale like the matching inertias.  "literal": damping * 1.
    rotational_damping: str = "inertial"

    def __post_init__(self):
        for name in ("length", "base_radius", "tip_radius", "density", "damping",
                     "youngs_modulus", "shear_modulus", "water_density",
                     "drag_tangential", "drag_perpendicular"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if not self.tip_radius < self.base_radius:
            raise DomainError("tip_radius must be smaller than base_radius")
        if int(self.elements) != self.elements or self.elements < 2:
            raise DomainError("elements must be an integer >= 2")
        if self.rotational_damping not in ("inertial", "literal"):
            raise DomainError("rotational_damping must be 'inertial' or 'literal'")

    @property
    def ds(self) -> float:
        return self.length / self.elements


def radius_profile(params: RodParameters, s):
    """Linear taper from ``base_radius`` at s=0 to ``tip_radius`` at s=L."""
    s = np.asarray(s, dtype=float)
    L = params.length
    tol = 1e-12 * L
    if np.any(s < -tol) or np.any(s > L + tol):
        raise DomainError(f"arc-length outside [0, {L}]")
    s = np.clip(s, 0.0, L)
    r = (s / L) * params.tip_radius + ((L - s) / L) * params.base_radius
    return float(r) if r.ndim == 0 else r


def cross_section_area(radius):
    return np.pi * np.asarray(radius) ** 2


def second_moment(area):
    return np.asarray(area) ** 2 / (4.0 * np.pi)


class Deformations(NamedTuple):
    nu1: np.ndarray    # (N,)
    nu2: np.ndarray    # (N,)
    kappa: np.ndarray  # (N-1,)


class ActiveStress(NamedTuple):
    """Muscle loads: material-frame force per element and couple per interior node."""
    force: np.ndarray   # (N, 2)
    couple: np.ndarray  # (N-1,)


ActiveLoad = Union[None, ActiveStress, Callable[[Deformations], ActiveStress]]


@dataclass
class RodState:
    positions: np.ndarray          # (N+1, 2)
    angles: np.ndarray             # (N,)
    momentum: np.ndarray           # (N+1, 2)
    angular_momentum: np.ndarray   # (N,)
    time: float = 0.0

    def copy(self) -> "RodState":
        return RodState(self.positions.copy(), self.angles.copy(), self.momentum.copy(),
                        self.angular_momentum.copy(), self.time)


@dataclass
class RodGeometry:
    """Per-element and per-node section properties, computed once."""
    params: RodParameters
    s_nodes: np.ndarray = field(init=False)
    s_elements: np.ndarray = field(init=False)
    radius: np.ndarray = field(init=False)
    area: np.ndarray = field(init=False)
    inertia: np.ndarray = field(init=False)
    node_inertia: np.ndarray = field(init=False)
    node_length: np.ndarray = field(init=False)
    mass: np.ndarray = field(init=False)
    rot_inertia: np.ndarray = field(init=False)

    def __post_init__(self):
        p = self.params
        N, ds = p.elements, p.ds
        self.s_nodes = np.linspace(0.0, p.length, N + 1)
        self.s_elements = (np.arange(N) + 0.5) * ds
        self.radius = radius_profile(p, self.s_elements)
        self.area = cross_section_area(self.radius)
        self.inertia = second_moment(self.area)
        self.node_inertia = second_moment(cross_section_area(radius_profile(p, self.s_nodes[1:-1])))
        # Voronoi length of each node; the base node is clamped but gets a mass anyway.
        self.node_length = np.full(N + 1, ds)
        self.node_length[0] = self.node_length[-1] = 0.5 * ds
        half = 0.5 * ds * p.density * self.area
        self.mass = np.zeros(N + 1)
        self.mass[:-1] += half
        self.mass[1:] += half
        self.rot_inertia = p.density * self.inertia * ds
        scale = self.inertia / self.area if p.rotational_damping == "inertial" else np.ones(N)
        self.rot_damping = p.damping * ds * scale

    @property
    def N(self) -> int:
        return self.params.elements

    @property
    def ds(self) -> float:
        return self.params.ds

    @property
    def EA(self):
        return self.params.youngs_modulus * self.area

    @property
    def GA(self):
        return self.params.shear_modulus * self.area

    @property
    def EI(self):
        return self.params.youngs_modulus * self.node_inertia


def directors(angles):
    c, s = np.cos(angles), np.sin(angles)
    return np.stack([c, s], axis=-1), np.stack([-s, c], axis=-1)


def compute_deformations(state: RodState, params: RodParameters) -> Deformations:
    return _deformations(state.positions, state.angles, params.ds)


def _deformations(positions, angles, ds) -> Deformations:
    d = np.diff(positions, axis=0)
    c, s = np.cos(angles), np.sin(angles)
    nu1 = (c * d[:, 0] + s * d[:, 1]) / ds
    nu2 = (-s * d[:, 0] + c * d[:, 1]) / ds
    kappa = np.diff(angles) / ds
    return Deformations(nu1, nu2, kappa)


def integrate_kinematics(deform: Deformations, params: RodParameters):
    """Rebuild (positions, angles) from deformations, starting at the clamped base."""
    ds = params.ds
    kappa = np.asarray(deform.kappa, dtype=float)
    angles = np.concatenate([[0.0], np.cumsum(kappa * ds)])
    a, b = directors(angles)
    step = ds * (np.asarray(deform.nu1)[:, None] * a + np.asarray(deform.nu2)[:, None] * b)
    positions = np.vstack([np.zeros((1, 2)), np.cumsum(step, axis=0)])
    return positions, angles


def passive_stresses(deform: Deformations, params: RodParameters, geometry: RodGeometry = None):
    """Material-frame force per element and bending couple per interior node."""
    g = geometry or RodGeometry(params)
    n = np.stack([g.EA * (deform.nu1 - 1.0), g.GA * deform.nu2], axis=-1)
    m = g.EI * deform.kappa
    return n, m


def node_velocities(state: RodState, geometry: RodGeometry):
    v = np.zeros_like(state.momentum)
    v[1:] = state.momentum[1:] / geometry.mass[1:, None]
    return v


def drag_force(state: RodState, params: RodParameters, geometry: RodGeometry = None):
    """Quadratic fluid drag per unit length on each element (lab frame)."""
    g = geometry or RodGeometry(params)
    return _drag(node_velocities(state, g), state.angles, g)


def _drag(v_nodes, angles, g: RodGeometry):
    p = g.params
    v = 0.5 * (v_nodes[:-1] + v_nodes[1:])
    a, b = directors(angles)
    v1 = np.einsum("ij,ij->i", v, a)
    v2 = np.einsum("ij,ij->i", v, b)
    coef = -0.5 * p.water_density
    f1 = coef * (2.0 * np.pi * g.radius) * p.drag_tangential * v1 * np.abs(v1)
    f2 = coef * (2.0 * g.radius) * p.drag_perpendicular * v2 * np.abs(v2)
    return f1[:, None] * a + f2[:, None] * b


def _element_to_nodes(f_elem, ds):
    out = np.zeros((f_elem.shape[0] + 1, 2))
    out[:-1] += 0.5 * ds * f_elem
    out[1:] += 0.5 * ds * f_elem
    return out


def _resolve_active(active: ActiveLoad, deform: Deformations, N: int) -> ActiveStress:
    if active is None:
        return ActiveStress(np.zeros((N, 2)), np.zeros(N - 1))
    if callable(active):
        return active(deform)
    return active


class Rod:
    """Discretized arm with its section properties and stepping mode."""

    def __init__(self, params: RodParameters = None, inextensible: bool = False, drag: bool = True):
        self.params = params or RodParameters()
        self.geometry = RodGeometry(self.params)
        self.inextensible = inextensible
        self.drag = drag
        g = self.geometry
        # tail sums for the reduced (angle-only) mass and damping matrices
        self._tail_mass = np.cumsum(g.mass[::-1])[::-1]
        damp_w = self.params.damping * g.node_length
        damp_w[0] = 0.0
        self._tail_damp = np.cumsum(damp_w[::-1])[::-1]

    # -- construction ----------------------------------------------------
    @property
    def N(self):
        return self.params.elements

    def rest_state(self) -> RodState:
        return self.state_from_deformations(
            Deformations(np.ones(self.N), np.zeros(self.N), np.zeros(self.N - 1)))

    def state_from_deformations(self, deform: Deformations) -> RodState:
        positions, angles = integrate_kinematics(deform, self.params)
        return RodState(positions, angles, np.zeros((self.N + 1, 2)), np.zeros(self.N))

    def deformations(self, state: RodState) -> Deformations:
        return _deformations(state.positions, state.angles, self.params.ds)

    # -- loads -------------------------------------------------------------
    def internal_loads(self, positions, angles, active: ActiveLoad = None):
        """Node forces and element torques from elastic plus muscle stresses."""
        g = self.geometry
        ds = g.ds
        deform = _deformations(positions, angles, ds)
        n, m = passive_stresses(deform, self.params, g)
        act = _resolve_active(active, deform, self.N)
        n = n + act.force
        m = m + act.couple
        a, b = directors(angles)
        n_lab = n[:, :1] * a + n[:, 1:] * b
        forces = np.zeros((self.N + 1, 2))
        forces[:-1] += n_lab
        forces[1:] -= n_lab
        m_pad = np.concatenate([[0.0], m, [0.0]])
        torques = np.diff(m_pad) + ds * (deform.nu1 * n[:, 1] - deform.nu2 * n[:, 0])
        return forces, torques, deform

    # -- stepping ------------------------------------------------------------
    def step(self, state: RodState, dt: float, active: ActiveLoad = None, step_index=None) -> RodState:
        if not dt > 0:
            raise DomainError("dt must be positive")
        if self.inextensible:
            new = self._step_inextensible(state, dt, active)
        else:
            new = self._step_extensible(state, dt, active)
        if not (np.all(np.isfinite(new.positions)) and np.all(np.isfinite(new.angles))
                and np.all(np.isfinite(new.momentum))):
            raise NumericalBlowup("rod", step_index, {"time": state.time})
        return new

    def _step_extensible(self, state, dt, active):
        g = self.geometry
        xi = self.params.damping
        m = g.mass[1:, None]
        J = g.rot_inertia[1:]
        r = state.positions.copy()
        th = state.angles.copy()
        p = state.momentum.copy()
        q = state.angular_momentum.copy()

        r[1:] += 0.5 * dt * p[1:] / m
        th[1:] += 0.5 * dt * q[1:] / J
        forces, torques, _ = self.internal_loads(r, th, active)
        if self.drag:
            v = np.zeros_like(p)
            v[1:] = p[1:] / m
            forces += _element_to_nodes(_drag(v, th, g), g.ds)
        lin = dt * xi * g.node_length[1:, None] / m
        p[1:] = (p[1:] + dt * forces[1:]) / (1.0 + lin)
        q[1:] = (q[1:] + dt * torques[1:]) / (1.0 + dt * g.rot_damping[1:] / J)
        r[1:] += 0.5 * dt * p[1:] / m
        th[1:] += 0.5 * dt * q[1:] / J
        p[0] = 0.0
        q[0] = 0.0
        r[0] = 0.0
        th[0] = 0.0
        return RodState(r, th, p, q, state.time + dt)

    def _reduced_rates(self, angles, omega):
        """Node velocities implied by angle rates when spacing is slaved to angles."""
        _, b = directors(angles)
        v = np.zeros((self.N + 1, 2))
        v[1:] = np.cumsum(self.params.ds * b * omega[:, None], axis=0)
        return v

    def _step_inextensible(self, state, dt, active):
        g = self.geometry
        ds = g.ds
        J = g.rot_inertia
        omega = state.angular_momentum / J
        omega[0] = 0.0

        th = state.angles + 0.5 * dt * omega
        th[0] = 0.0
        a, b = directors(th)
        pos = np.vstack([np.zeros((1, 2)), np.cumsum(ds * a, axis=0)])
        _, torques, _ = self.internal_loads(pos, th, active)

        v = self._reduced_rates(th, omega)
        ext = np.zeros((self.N + 1, 2))
        if self.drag:
            ext += _element_to_nodes(_drag(v, th, g), ds)
        # centripetal part of node acceleration, kept explicit
        cen = np.zeros((self.N + 1, 2))
        cen[1:] = -np.cumsum(ds * a * (omega ** 2)[:, None], axis=0)
        load = ext - g.mass[:, None] * cen
        tail = np.cumsum(load[::-1], axis=0)[::-1]  # sum over nodes k >= index
        # element e moves nodes e+1..N
        gen = ds * np.einsum("ij,ij->i", b, tail[1:]) + torques

        f = slice(1, None)
        c, s = np.cos(th[f]), np.sin(th[f])
        cosd = np.outer(c, c) + np.outer(s, s)
        idx = np.arange(1, self.N)
        kmax = np.maximum.outer(idx, idx) + 1
        M = ds * ds * cosd * self._tail_mass[kmax]
        M[np.diag_indices_from(M)] += J[f]
        C = ds * ds * cosd * self._tail_damp[kmax]
        C[np.diag_indices_from(C)] += g.rot_damping[f]
        lhs = M + dt * C
        rhs = M @ omega[f] + dt * gen[f]
        omega_new = np.zeros(self.N)
        omega_new[f] = np.linalg.solve(lhs, rhs)

        th_new = th + 0.5 * dt * omega_new
        th_new[0] = 0.0
        a1, _ = directors(th_new)
        pos_new = np.vstack([np.zeros((1, 2)), np.cumsum(ds * a1, axis=0)])
        v_new = self._reduced_rates(th_new, omega_new)
        p_new = g.mass[:, None] * v_new
        p_new[0] = 0.0
        return RodState(pos_new, th_new, p_new, J * omega_new, state.time + dt)

    # -- energy --------------------------------------------------------------
    def kinetic_energy(self, state: RodState) -> float:
        g = self.geometry
        t = 0.5 * np.sum(state.momentum[1:] ** 2 / g.mass[1:, None])
        t += 0.5 * np.sum(state.angular_momentum[1:] ** 2 / g.rot_inertia[1:])
        return float(t)

    def elastic_energy(self, state: RodState) -> float:
        g = self.geometry
        d = self.deformations(state)
        w = 0.5 * g.EA * (d.nu1 - 1.0) ** 2 + 0.5 * g.GA * d.nu2 ** 2
        return float(g.ds * (np.sum(w) + np.sum(0.5 * g.EI * d.kappa ** 2)))

    def energy(self, state: RodState, active_energy: Optional[Callable[[Deformations], float]] = None) -> float:
        h = self.kinetic_energy(state) + self.elastic_energy(state)
        if active_energy is not None:
            h += float(active_energy(self.deformations(state)))
        return h


def step_dynamics(state: RodState, active: ActiveLoad, params: RodParameters, dt: float,
                  inextensible: bool = False, drag: bool = True) -> RodState:
    """One step for callers that do not keep a :class:`Rod` around."""
    return Rod(params, inextensible=inextensible, drag=drag).step(state, dt, active)


def total_energy(state: RodState, params: RodParameters,
                 active_energy: Optional[Callable[[Deformations], float]] = None) -> float:
    return Rod(params).energy(state, active_energy)


def with_elements(params: RodParameters, elements: int) -> RodParameters:
    return replace(params, elements=elements)
