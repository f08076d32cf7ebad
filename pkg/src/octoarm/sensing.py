"""Neural rings and the neighbour-consensus estimator for shape, bearing and intensity.

All lengths here are in units of the arm length: sensor positions, ranges,
spacing and curvature are passed already divided (or multiplied) by L.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np

from .environment import wrap_angle
from .errors import DomainError, NoBumpError, NumericalBlowup

TWO_PI = 2.0 * np.pi


# -- synaptic response and ring kernel ------------------------------------------------

def synaptic_response(v):
    """Firing rate 6.34 * ln(1 + exp(10 (v + 0.5)))**0.8, overflow-safe."""
    x = np.logaddexp(0.0, 10.0 * (np.asarray(v, dtype=float) + 0.5))
    out = 6.34 * x ** 0.8
    return float(out) if np.ndim(out) == 0 else out


def synaptic_inverse(rate):
    """Exact inverse of :func:`synaptic_response` for positive rates."""
    rate = np.asarray(rate, dtype=float)
    if np.any(rate <= 0):
        raise DomainError("synaptic inverse needs a positive rate")
    y = (rate / 6.34) ** 1.25
    # log(expm1(y)) without overflow for large y
    x = np.where(y > 30, y + np.log1p(-np.exp(-np.minimum(y, 700))), np.log(np.expm1(np.minimum(y, 30))))
    out = x / 10.0 - 0.5
    return float(out) if out.ndim == 0 else out


def desired_rate(phi):
    return 2.53 + 34.8 * np.exp(8.08 * (np.cos(phi) - 1.0))


class RingKernel(NamedTuple):
    phi: np.ndarray          # grid, (n,)
    W: np.ndarray            # weight on the grid
    dW: np.ndarray           # its derivative
    coeffs: np.ndarray       # complex coefficients for modes -M..M
    modes: np.ndarray
    V_desired: np.ndarray
    conv: np.ndarray         # (n, n) matrix: (conv @ f)[k] ~ integral of W(phi_k - p) f(p) dp
    conv_d: np.ndarray       # same for dW
    bump: np.ndarray         # relaxed bump centred at 0

    @property
    def dphi(self):
        return TWO_PI / len(self.phi)


def build_weight_kernel(n_grid=100, n_modes=5, regularization=0.01, relax=True) -> RingKernel:
    """Band-limited kernel whose convolution maps the desired rate profile to its voltage.

    Coefficients of f_desired and V_desired = h^-1(f_desired) use the normalized
    series convention c_n = mean(f * exp(-i n phi)), so the convolution integral
    of W with f has coefficients 2 pi W_n f_n.  The kernel is scaled so that this
    reproduces V_desired up to the regularization.
    """
    if n_grid < 2 * n_modes + 1:
        raise DomainError("ring grid too coarse for the requested modes")
    phi = np.arange(n_grid) * TWO_PI / n_grid
    f = desired_rate(phi)
    V = synaptic_inverse(f)
    modes = np.arange(-n_modes, n_modes + 1)
    basis = np.exp(-1j * np.outer(modes, phi))
    f_hat = basis @ f / n_grid
    V_hat = basis @ V / n_grid
    W_hat = V_hat * np.conj(f_hat) / (regularization + np.abs(f_hat) ** 2) / TWO_PI

    def series(x, deriv=False):
        e = np.exp(1j * np.multiply.outer(x, modes))
        c = W_hat * (1j * modes) if deriv else W_hat
        return (e @ c).real

    W = series(phi)
    dW = series(phi, deriv=True)
    diff = np.subtract.outer(phi, phi)
    dphi = TWO_PI / n_grid
    conv = series(diff) * dphi
    conv_d = series(diff, deriv=True) * dphi
    k = RingKernel(phi, W, dW, W_hat, modes, V, conv, conv_d, V.copy())
    if relax:
        k = k._replace(bump=_relax_bump(k))
    return k


def _relax_bump(kernel: RingKernel, tau=0.01, tol=1e-13, max_steps=200000):
    V = kernel.V_desired.copy()
    dt = 0.05 * tau
    for _ in range(max_steps):
        dV = (-V + kernel.conv @ synaptic_response(V)) / tau
        V = V + dt * dV
        if np.max(np.abs(dV)) * dt < tol:
            break
    return V


@lru_cache(maxsize=4)
def default_kernel(n_grid=100) -> RingKernel:
    return build_weight_kernel(n_grid)


def rotate_profile(profile, angle):
    """Band-limited rotation: returns P(phi - angle) for each angle (broadcasts)."""
    profile = np.asarray(profile, dtype=float)
    n = profile.shape[-1]
    k = np.fft.fftfreq(n, 1.0 / n)
    spec = np.fft.fft(profile)
    angle = np.asarray(angle, dtype=float)[..., None]
    return np.fft.ifft(spec * np.exp(-1j * k * angle), axis=-1).real


def ring_rhs(V, gamma, kernel: RingKernel, tau):
    H = synaptic_response(V)
    drive = H @ kernel.conv.T + np.asarray(gamma, dtype=float)[..., None] * (H @ kernel.conv_d.T)
    return (-V + drive) / tau


def step_ring(V, gamma, dt, kernel: RingKernel = None, tau=0.01, step_index=None):
    """One Euler step of the ring integro-differential equation (batched over rings)."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    kernel = kernel or default_kernel()
    out = V + dt * ring_rhs(V, gamma, kernel, tau)
    if not np.all(np.isfinite(out)):
        raise NumericalBlowup("neural ring", step_index)
    return out


def decode_peak(V, flat_tol=1e-9):
    """Bump location in [0, 2 pi) by argmax plus a three-point parabola."""
    V = np.asarray(V, dtype=float)
    n = V.shape[-1]
    if np.any(V.max(axis=-1) - V.min(axis=-1) < flat_tol):
        raise NoBumpError("ring profile is flat")
    k = np.argmax(V, axis=-1)
    y0 = np.take_along_axis(V, k[..., None], -1)[..., 0]
    ym = np.take_along_axis(V, ((k - 1) % n)[..., None], -1)[..., 0]
    yp = np.take_along_axis(V, ((k + 1) % n)[..., None], -1)[..., 0]
    den = ym - 2.0 * y0 + yp
    off = np.where(den < 0, 0.5 * (ym - yp) / np.where(den < 0, den, -1.0), 0.0)
    out = np.mod((k + off) * TWO_PI / n, TWO_PI)
    return float(out) if out.ndim == 0 else out


# -- estimates and energies --------------------------------------------------------

@dataclass(frozen=True)
class ConsensusParams:
    k_theta: float = 5.0e4
    k_r: float = 4.0e4
    k_mu: float = 4.0e4
    tau: float = 0.01

    def __post_init__(self):
        for name in ("k_theta", "k_r", "k_mu", "tau"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")


def unit_arclengths(n_units=21, length=1.0):
    if n_units < 2:
        raise DomainError("need at least two sensing units")
    return np.linspace(0.0, length, n_units)


def target_estimate(position, theta, alpha, mu, c):
    """Each unit's guess of the target: own position plus inferred range along theta+alpha."""
    rho = np.exp(-np.asarray(mu) * np.asarray(c))
    ang = np.asarray(theta) + np.asarray(alpha)
    return np.asarray(position) + rho[..., None] * np.stack([np.cos(ang), np.sin(ang)], axis=-1)


def sensing_error(estimates, target):
    d = np.asarray(estimates) - np.asarray(target)[..., None, :]
    return np.mean(np.linalg.norm(d, axis=-1), axis=-1)


def midpoint_curvature(kappa):
    kappa = np.asarray(kappa, dtype=float)
    kb = kappa.copy()
    kb[..., 1:] = 0.5 * (kappa[..., 1:] + kappa[..., :-1])
    return kb


def _prop_residual(theta, kappa_bar, ds):
    prev = np.concatenate([np.zeros(theta.shape[:-1] + (1,)), theta[..., :-1]], axis=-1)
    step = kappa_bar * ds
    step[..., 0] = 0.0
    return theta - prev - step


def proprio_energy(theta, kappa, ds, k_theta, midpoint=True):
    kb = midpoint_curvature(kappa) if midpoint else np.asarray(kappa, dtype=float)
    x = _prop_residual(np.asarray(theta, dtype=float), kb, ds)
    return 0.5 * k_theta * np.sum(1.0 - np.cos(x), axis=-1)


def proprio_gradient(theta, kappa, ds, k_theta, tau=1.0, midpoint=True):
    """Returns (energy, tau * dE/dtheta)."""
    theta = np.asarray(theta, dtype=float)
    kb = midpoint_curvature(kappa) if midpoint else np.asarray(kappa, dtype=float)
    x = _prop_residual(theta, kb, ds)
    s = np.sin(x)
    g = s.copy()
    g[..., :-1] -= s[..., 1:]
    energy = 0.5 * k_theta * np.sum(1.0 - np.cos(x), axis=-1)
    return energy, tau * 0.5 * k_theta * g


def proprio_target(kappa, ds, midpoint=True):
    """Discrete shape angles that zero the proprioceptive energy."""
    kb = midpoint_curvature(kappa) if midpoint else np.asarray(kappa, dtype=float)
    step = kb * ds
    step[..., 0] = 0.0
    return np.cumsum(step, axis=-1)


def _neighbor_sum(x):
    """sum over chain neighbours j of x_j, on the unit axis (-1 for scalars, -2 for vectors)."""
    out = np.zeros_like(x)
    out[..., 1:, :] += x[..., :-1, :]
    out[..., :-1, :] += x[..., 1:, :]
    return out


def _degree(n):
    d = np.full(n, 2.0)
    d[0] = d[-1] = 1.0
    return d


def exact_position_sums(positions):
    """sum_j (r_i - r_j) over chain neighbours, from known sensor positions."""
    p = np.asarray(positions, dtype=float)
    return _degree(p.shape[-2])[:, None] * p - _neighbor_sum(p)


def approx_position_sums(theta, kappa, ds):
    """Local stand-in for the neighbour position sums, from shape estimates and curvature."""
    theta = np.asarray(theta, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    out = np.stack([s, -c], axis=-1) * (kappa * ds * ds)[..., None]
    out[..., 0, :] = -ds * np.stack([c[..., 0], s[..., 0]], axis=-1)
    out[..., -1, :] = ds * np.stack([c[..., -1], s[..., -1]], axis=-1)
    return out


def chemo_energy(theta, alpha, mu, c, positions, k_r, k_mu):
    """Half the sum over ordered neighbour pairs of k_r |r_i - r_j|^2 + k_mu (mu_i - mu_j)^2."""
    est = target_estimate(positions, theta, alpha, mu, c)
    d = np.diff(est, axis=-2)
    dm = np.diff(np.asarray(mu, dtype=float), axis=-1)
    # each edge appears twice in the ordered double sum
    return np.sum(k_r * np.sum(d * d, axis=-1), axis=-1) + np.sum(k_mu * dm * dm, axis=-1)


class ChemoGradient(NamedTuple):
    grad_alpha: np.ndarray   # each unit's derivative of its own neighbourhood energy
    grad_mu: np.ndarray
    gamma_alpha: np.ndarray  # ring input, tau * grad_alpha - gamma_theta
    dmu_dt: np.ndarray


def chemo_gradient(theta, alpha, mu, c, position_sums, params: ConsensusParams, gamma_theta=None):
    """Gradient of each unit's local energy 1/2 sum_{j in N_i} (k_r |r_i - r_j|^2 + k_mu (mu_i - mu_j)^2).

    ``position_sums`` is sum_j (r_i - r_j) (exact or approximated).  The local
    gradient is half the gradient of :func:`chemo_energy`.
    """
    theta = np.asarray(theta, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    mu = np.asarray(mu, dtype=float)
    c = np.asarray(c, dtype=float)
    n = theta.shape[-1]
    deg = _degree(n)
    rho = np.exp(-mu * c)
    ang = theta + alpha
    u = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    perp = np.stack([-np.sin(ang), np.cos(ang)], axis=-1)
    ru = rho[..., None] * u
    D = np.asarray(position_sums) + deg[:, None] * ru - _neighbor_sum(ru)
    g_alpha = params.k_r * rho * np.sum(perp * D, axis=-1)
    mu_pad = mu[..., :, None]
    mu_sum = deg * mu - _neighbor_sum(mu_pad)[..., 0]
    g_mu = -params.k_r * c * rho * np.sum(u * D, axis=-1) + params.k_mu * mu_sum
    gth = np.zeros_like(theta) if gamma_theta is None else np.asarray(gamma_theta)
    return ChemoGradient(g_alpha, g_mu, params.tau * g_alpha - gth, -g_mu)


# -- consensus dynamics ----------------------------------------------------------

class SensorReadings(NamedTuple):
    concentration: np.ndarray   # (..., N)
    curvature: np.ndarray       # (..., N), in 1/L


def random_initial_estimates(rng: np.random.Generator, shape, mu_true=2.0):
    theta = rng.uniform(-0.1 * np.pi, 0.1 * np.pi, shape)
    theta[..., 0] = 0.0
    alpha = rng.uniform(0.0, np.pi, shape)
    mu = rng.uniform(0.5 * mu_true, 1.5 * mu_true, shape)
    return theta, alpha, mu


def stable_substeps(dt, rho_hat, c, params: ConsensusParams, safety=1.5):
    """Euler sub-steps keeping the linearized flow inside the stability disc.

    Computed per batch member (leading axes), so a target's step never depends
    on which other targets share its batch.
    """
    rho_hat = np.asarray(rho_hat, dtype=float)
    if rho_hat.size == 0:
        return 1
    rmax = np.max(rho_hat, axis=-1)
    crmax = np.max(np.abs(np.asarray(c, dtype=float)) * rho_hat, axis=-1)
    lam = np.maximum(np.maximum(2.0 * params.k_theta, 4.0 * params.k_r * rmax * rmax + 2.0 * params.k_theta),
                     4.0 * params.k_r * crmax * crmax + 4.0 * params.k_mu)
    n = np.maximum(1, np.ceil(dt * lam / safety)).astype(int)
    return int(n) if n.ndim == 0 else n


class SensingArray:
    """A chain of sensing units advanced together; leading array axes are a batch.

    ``mode="A"`` integrates the estimate ODEs directly; ``mode="B"`` moves ring
    bumps and reads the estimates back by peak decoding.
    """

    def __init__(self, theta, alpha, mu, spacing, params: ConsensusParams = None, mode="A",
                 pin_mu=False, kernel: RingKernel = None, exact_positions=None):
        self.params = params or ConsensusParams()
        self.theta = np.array(theta, dtype=float)
        self.theta[..., 0] = 0.0
        self.alpha = np.array(alpha, dtype=float)
        self.mu = np.array(mu, dtype=float)
        self.spacing = float(spacing)
        self.mode = mode.upper()
        if self.mode not in ("A", "B"):
            raise DomainError(f"unknown sensing mode {mode!r}")
        self.pin_mu = pin_mu
        self.exact_positions = exact_positions
        self.time = 0.0
        self.steps = 0
        if self.mode == "B":
            self.kernel = kernel or default_kernel()
            self.ring_theta = rotate_profile(self.kernel.bump, self.theta)
            self.ring_alpha = rotate_profile(self.kernel.bump, self.alpha)

    @property
    def n_units(self):
        return self.theta.shape[-1]

    def position_sums(self, kappa):
        if self.exact_positions is not None:
            return exact_position_sums(self.exact_positions)
        return approx_position_sums(self.theta, kappa, self.spacing)

    def rates(self, readings: SensorReadings):
        """(dtheta/dt, dalpha/dt, dmu/dt) at the current estimates."""
        p = self.params
        _, gth = proprio_gradient(self.theta, readings.curvature, self.spacing, p.k_theta, p.tau)
        gth[..., 0] = 0.0
        cg = chemo_gradient(self.theta, self.alpha, self.mu, readings.concentration,
                            self.position_sums(readings.curvature), p, gth)
        dmu = np.zeros_like(self.mu) if self.pin_mu else cg.dmu_dt
        return -gth / p.tau, -cg.gamma_alpha / p.tau, dmu

    def step(self, readings: SensorReadings, dt):
        rho = np.exp(-self.mu * readings.concentration)
        n = np.asarray(stable_substeps(dt, rho, readings.concentration, self.params))
        if self.mode == "A":
            h = (dt / n)[..., None]
            for k in range(int(n.max())):
                # members that finished their own sub-steps hold still
                hk = np.where((k < n)[..., None], h, 0.0)
                dth, dal, dmu = self.rates(readings)
                self.theta = self.theta + hk * dth
                self.alpha = self.alpha + hk * dal
                self.mu = self.mu + hk * dmu
        else:
            m = int(n.max())
            for _ in range(m):
                self._ring_step(readings, dt / m)
        self.theta[..., 0] = 0.0
        self.time += dt
        self.steps += 1
        if not (np.all(np.isfinite(self.theta)) and np.all(np.isfinite(self.alpha))
                and np.all(np.isfinite(self.mu))):
            raise NumericalBlowup("consensus", self.steps)
        return self

    def _ring_step(self, readings, h):
        p = self.params
        dth, dal, dmu = self.rates(readings)
        g_th, g_al = -p.tau * dth, -p.tau * dal
        # keep each bump shift below a tenth of a grid cell per ring update
        speed = max(np.max(np.abs(dth)), np.max(np.abs(dal)), 1e-300)
        m = max(1, int(np.ceil(speed * h / (0.1 * self.kernel.dphi))))
        for _ in range(m):
            self.ring_theta = step_ring(self.ring_theta, g_th, h / m, self.kernel, p.tau)
            self.ring_alpha = step_ring(self.ring_alpha, g_al, h / m, self.kernel, p.tau)
        self.theta = self.theta + wrap_angle(decode_peak(self.ring_theta) - self.theta)
        self.alpha = self.alpha + wrap_angle(decode_peak(self.ring_alpha) - self.alpha)
        self.mu = self.mu + h * dmu

    def estimates(self, positions, concentration):
        return target_estimate(positions, self.theta, self.alpha, self.mu, concentration)

    def energies(self, readings: SensorReadings, positions):
        p = self.params
        ep = proprio_energy(self.theta, readings.curvature, self.spacing, p.k_theta)
        ec = chemo_energy(self.theta, self.alpha, self.mu, readings.concentration, positions, p.k_r, p.k_mu)
        return ep, ec


def noise_stream(seed, channel):
    """Counter-based generator for one noise channel; channels never share draws."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(channel,))
    return np.random.Generator(np.random.Philox(ss))


def corrupt(values, level, rng: Optional[np.random.Generator]):
    values = np.asarray(values, dtype=float)
    if not level or rng is None:
        return values
    return values * (1.0 + level * rng.standard_normal(values.shape))
