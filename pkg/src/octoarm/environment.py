"""Target geometry and the chemical field around a point source."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


def wrap_angle(x):
    """Map angles into (-pi, pi]."""
    w = np.mod(np.asarray(x, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2.0 * np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def distance_bearing(position, angle, target):
    """Range and material-frame bearing from a point of the arm to the target.

    Returns ``(rho, alpha, degenerate)``; ``degenerate`` marks points sitting on
    the target, where the bearing is reported as 0.
    """
    position = np.asarray(position, dtype=float)
    d = np.asarray(target, dtype=float) - position
    rho = np.hypot(d[..., 0], d[..., 1])
    degenerate = rho == 0
    alpha = wrap_angle(np.arctan2(d[..., 1], d[..., 0]) - np.asarray(angle, dtype=float))
    alpha = np.where(degenerate, 0.0, alpha)
    if np.ndim(rho) == 0:
        return float(rho), float(alpha), bool(degenerate)
    return rho, alpha, degenerate


def steady_concentration(rho, mu):
    """Steady log profile; ``rho`` is measured in arm lengths."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise DomainError("steady concentration is singular at the source")
    out = -np.log(rho) / mu
    return float(out) if out.ndim == 0 else out


def range_from_concentration(c, mu):
    """Inverse of the steady profile: distance in arm lengths."""
    out = np.exp(-np.asarray(mu, dtype=float) * np.asarray(c, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class DiffusionField:
    """Explicit five-point diffusion on a square box centred on the arm base.

    The outer ring of nodes is pinned to the steady log profile.  Lengths are in
    metres; the log profile uses distances divided by ``length_scale``.
    """
    target: np.ndarray
    mu: float = 2.0
    diffusivity: float = 0.1
    length_scale: float = 0.2
    half_width: float = 0.3
    spacing: float = 0.01
    c: np.ndarray = field(default=None, repr=False)
    out_of_domain: int = 0

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=float)
        if not (self.mu > 0 and self.diffusivity > 0 and self.spacing > 0):
            raise DomainError("mu, diffusivity and spacing must be positive")
        n = int(round(2 * self.half_width / self.spacing)) + 1
        self.x = np.linspace(-self.half_width, self.half_width, n)
        self.y = self.x.copy()
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        rho = np.hypot(X - self.target[0], Y - self.target[1]) / self.length_scale
        rho = np.maximum(rho, 0.5 * self.spacing / self.length_scale)
        self._steady = -np.log(rho) / self.mu
        if self.c is None:
            self.c = self._steady.copy()
        self._src = (int(np.argmin(np.abs(self.x - self.target[0]))),
                     int(np.argmin(np.abs(self.y - self.target[1]))))
        self._pin_boundary()

    @classmethod
    def cold(cls, target, **kw):
        """Field starting from zero in the interior."""
        f = cls(target, **kw)
        f.c[1:-1, 1:-1] = 0.0
        return f

    @property
    def stable_dt(self):
        return self.spacing ** 2 / (4.0 * self.diffusivity)

    @property
    def source_rate(self):
        return 2.0 * np.pi * self.diffusivity / self.mu

    def _pin_boundary(self):
        for sl in (np.s_[0, :], np.s_[-1, :], np.s_[:, 0], np.s_[:, -1]):
            self.c[sl] = self._steady[sl]

    def step(self, dt):
        if dt > self.stable_dt * (1 + 1e-12):
            raise DomainError(f"dt={dt} exceeds the explicit stability bound {self.stable_dt}")
        c = self.c
        lap = np.zeros_like(c)
        lap[1:-1, 1:-1] = (c[2:, 1:-1] + c[:-2, 1:-1] + c[1:-1, 2:] + c[1:-1, :-2]
                           - 4.0 * c[1:-1, 1:-1]) / self.spacing ** 2
        c = c + dt * self.diffusivity * lap
        i, j = self._src
        if 0 < i < len(self.x) - 1 and 0 < j < len(self.y) - 1:
            c[i, j] += dt * self.source_rate / self.spacing ** 2
        self.c = c
        self._pin_boundary()
        return self

    def interior_mass(self):
        return float(np.sum(self.c[1:-1, 1:-1]) * self.spacing ** 2)

    def sample(self, points):
        """Bilinear interpolation; points outside the box are clamped and counted."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = self.x[0], self.x[-1]
        outside = np.any((pts < lo) | (pts > hi), axis=1)
        self.out_of_domain += int(np.sum(outside))
        pts = np.clip(pts, lo, hi)
        fx = (pts[:, 0] - lo) / self.spacing
        fy = (pts[:, 1] - lo) / self.spacing
        i = np.clip(np.floor(fx).astype(int), 0, len(self.x) - 2)
        j = np.clip(np.floor(fy).astype(int), 0, len(self.y) - 2)
        tx, ty = fx - i, fy - j
        c = self.c
        val = ((1 - tx) * (1 - ty) * c[i, j] + tx * (1 - ty) * c[i + 1, j]
               + (1 - tx) * ty * c[i, j + 1] + tx * ty * c[i + 1, j + 1])
        return val if np.ndim(points) > 1 else float(val[0])


def sample_concentration(field_: DiffusionField, position):
    return field_.sample(position)
