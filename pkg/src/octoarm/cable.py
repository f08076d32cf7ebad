"""Cable-equation nerve model for each muscle and the voltage-to-activation map.

Voltages live at the rod element midpoints.  The second derivative uses a
five-point fourth-order stencil; two ghost cells per end carry the boundary
condition (even reflection for sealed ends, quartic extrapolation through the
clamped face value for fixed voltages).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, DomainError, NumericalBlowup


@dataclass(frozen=True)
class CableParams:
    tau: float = 0.04
    adaptation_time: float = 0.4
    length_constant: float = 0.02
    adaptation_gain: float = 1.0

    def __post_init__(self):
        for name in ("tau", "adaptation_time", "length_constant"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if not self.adaptation_gain >= 0:
            raise DomainError("adaptation_gain must be >= 0")


@dataclass(frozen=True)
class Dirichlet:
    v0: Union[float, np.ndarray]
    vL: Union[float, np.ndarray]


@dataclass(frozen=True)
class Neumann:
    pass


SEALED = Neumann()


class CableState(NamedTuple):
    V: np.ndarray
    W: np.ndarray


def relu(v):
    return np.maximum(v, 0.0)


_SIGMOID_SLOPE = np.arctanh(0.98) / 40.0


def activation(v):
    """Sigmoid through (0, 0.01), (40, 0.5), (80, 0.99); defined on all reals."""
    out = 0.5 * (1.0 + np.tanh((np.asarray(v, dtype=float) - 40.0) * _SIGMOID_SLOPE))
    return float(out) if np.ndim(out) == 0 else out


def _lagrange_weights(nodes, x):
    nodes = np.asarray(nodes, dtype=float)
    w = np.ones(len(nodes))
    for j in range(len(nodes)):
        for k in range(len(nodes)):
            if k != j:
                w[j] *= (x - nodes[k]) / (nodes[j] - nodes[k])
    return w


# ghost cells at -1/2 h and -3/2 h from the face value and the first four cells
_FIT = [0.0, 0.5, 1.5, 2.5, 3.5]
_G1 = _lagrange_weights(_FIT, -0.5)
_G2 = _lagrange_weights(_FIT, -1.5)
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def _pad(V, bc):
    V = np.asarray(V, dtype=float)
    if isinstance(bc, Neumann):
        left = V[..., 1::-1]
        right = V[..., :-3:-1]
    elif isinstance(bc, Dirichlet):
        v0 = np.asarray(bc.v0, dtype=float)[..., None]
        vL = np.asarray(bc.vL, dtype=float)[..., None]
        lo = np.concatenate([np.broadcast_to(v0, V.shape[:-1] + (1,)), V[..., :4]], axis=-1)
        hi = np.concatenate([np.broadcast_to(vL, V.shape[:-1] + (1,)), V[..., :-5:-1]], axis=-1)
        left = np.stack([lo @ _G2, lo @ _G1], axis=-1)
        right = np.stack([hi @ _G1, hi @ _G2], axis=-1)
    else:
        raise DomainError(f"unknown boundary condition {bc!r}")
    return np.concatenate([left, V, right], axis=-1)


def second_derivative(V, ds, bc):
    P = _pad(V, bc)
    n = P.shape[-1] - 4
    out = sum(_D2[k] * P[..., k:k + n] for k in range(5))
    return out / (ds * ds)


def second_derivative_matrix(n, ds, bc):
    """Dense matrix form of ``second_derivative`` plus the constant boundary part."""
    zero_bc = bc if isinstance(bc, Neumann) else Dirichlet(0.0, 0.0)
    D = np.column_stack([second_derivative(e, ds, zero_bc) for e in np.eye(n)])
    const = second_derivative(np.zeros(n), ds, bc)
    return D, const


def initial_state(V, params: CableParams) -> CableState:
    V = np.array(V, dtype=float)
    return CableState(V, params.adaptation_gain * relu(V))


def cable_rhs(state: CableState, current, bc, params: CableParams, ds):
    V, W = state
    lam2 = params.length_constant ** 2
    dV = (lam2 * second_derivative(V, ds, bc) - V - W + current) / params.tau
    dW = (-W + params.adaptation_gain * relu(V)) / params.adaptation_time
    return dV, dW


def step_cable(state: CableState, current, bc, params: CableParams, dt, ds, step_index=None) -> CableState:
    """One classical Runge-Kutta step of the voltage/adaptation pair."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    V, W = state
    k1 = cable_rhs(state, current, bc, params, ds)
    k2 = cable_rhs(CableState(V + 0.5 * dt * k1[0], W + 0.5 * dt * k1[1]), current, bc, params, ds)
    k3 = cable_rhs(CableState(V + 0.5 * dt * k2[0], W + 0.5 * dt * k2[1]), current, bc, params, ds)
    k4 = cable_rhs(CableState(V + dt * k3[0], W + dt * k3[1]), current, bc, params, ds)
    Vn = V + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    Wn = W + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    if not (np.all(np.isfinite(Vn)) and np.all(np.isfinite(Wn))):
        raise NumericalBlowup("cable", step_index)
    return CableState(Vn, Wn)


def relax_to_steady(state, current, bc, params, ds, dt=1e-4, tol=1e-9, max_steps=200000):
    """Integrate until the voltage stops changing; returns (state, steps).

    The rate test is relative to the voltage scale and kept well above the
    per-step roundoff of V, so it cannot stall.
    """
    for k in range(max_steps):
        new = step_cable(state, current, bc, params, dt, ds, k)
        change = np.max(np.abs(new.V - state.V)) + np.max(np.abs(new.W - state.W))
        state = new
        if change < tol * dt * max(1.0, np.max(np.abs(new.V))):
            return state, k + 1
    raise ConvergenceError("cable did not reach steady state")


def cable_lyapunov(state: CableState, current, params: CableParams, ds, weight=None):
    """Quadratic distance to the uniform fixed point of a constant current.

    Used as an empirical decay check; ``weight`` scales the adaptation part.
    """
    V, W = state
    I0 = float(np.mean(current))
    b = params.adaptation_gain
    v_star = I0 / (1.0 + b) if I0 >= 0 else I0
    w_star = b * max(v_star, 0.0)
    k = params.adaptation_time / params.tau if weight is None else weight
    dv = V - v_star
    return float(ds * np.sum(0.5 * dv ** 2 + 0.5 * k * (W - w_star) ** 2 / max(b, 1e-12) * min(b, 1.0)))


# -- analytic rest state -------------------------------------------------------

def _decay_length(sign, params: CableParams):
    lam = params.length_constant
    return lam / np.sqrt(1.0 + params.adaptation_gain) if sign > 0 else lam


def _bridge(s, a, b, v_a, v_b, lh):
    """Solution of lh^2 V'' = V on [a, b] with V(a)=v_a, V(b)=v_b."""
    return (v_a * np.sinh((b - s) / lh) + v_b * np.sinh((s - a) / lh)) / np.sinh((b - a) / lh)


def zero_crossing(v0, vL, params: CableParams, length):
    """Arc-length where the rest voltage changes sign (ends of opposite sign)."""
    if not v0 * vL < 0:
        raise DomainError("zero crossing needs boundary voltages of opposite sign")
    l1 = _decay_length(np.sign(v0), params)
    l2 = _decay_length(np.sign(vL), params)

    def slope_gap(x):
        return v0 / (l1 * np.sinh(x / l1)) + vL / (l2 * np.sinh((length - x) / l2))

    eps = 1e-12 * length
    return brentq(slope_gap, eps, length - eps, xtol=1e-15 * length, rtol=4 * np.finfo(float).eps,
                  maxiter=500)


def rest_voltage_analytic(v0, vL, params: CableParams, s, length):
    """Closed-form solution of lam^2 V'' - V - b relu(V) = 0 with fixed end voltages."""
    s = np.asarray(s, dtype=float)
    if v0 * vL >= 0:
        if v0 == 0 and vL == 0:
            return np.zeros_like(s)
        sign = 1.0 if (v0 > 0 or vL > 0) else -1.0
        return _bridge(s, 0.0, length, v0, vL, _decay_length(sign, params))
    sc = zero_crossing(v0, vL, params, length)
    l1 = _decay_length(np.sign(v0), params)
    l2 = _decay_length(np.sign(vL), params)
    left = _bridge(np.minimum(s, sc), 0.0, sc, v0, 0.0, l1)
    right = _bridge(np.maximum(s, sc), sc, length, 0.0, vL, l2)
    return np.where(s <= sc, left, right)


# -- statics with injected current --------------------------------------------

def solve_cable_static(current, params: CableParams, ds, bc=SEALED, tol=1e-8, max_iter=50, guess=None):
    """Solve lam^2 V'' - V - b relu(V) + I = 0 by semismooth Newton.

    The residual is piecewise linear in V, so Newton terminates once the sign
    pattern of V stops changing.  Works on a batch of currents shaped (..., N).
    """
    current = np.asarray(current, dtype=float)
    n = current.shape[-1]
    D, const = second_derivative_matrix(n, ds, bc)
    lam2 = params.length_constant ** 2
    b = params.adaptation_gain
    A0 = lam2 * D - np.eye(n)
    flat = current.reshape(-1, n)
    out = np.empty_like(flat)
    for row, I in enumerate(flat):
        V = np.array(guess, dtype=float).reshape(-1, n)[row] if guess is not None else I / (1.0 + b)
        for _ in range(max_iter):
            active = V > 0
            A = A0 - b * np.diag(active.astype(float))
            V_new = np.linalg.solve(A, -(I + lam2 * const))
            done = np.array_equal(V_new > 0, active) or np.max(np.abs(V_new - V)) < tol
            V = V_new
            if done:
                break
        res = lam2 * (D @ V + const) - V - b * relu(V) + I
        if np.max(np.abs(res)) > max(tol, 1e-10 * (1 + np.max(np.abs(I)))):
            raise ConvergenceError("static cable solve did not converge", [float(np.max(np.abs(res)))])
        out[row] = V
    return out.reshape(current.shape)
