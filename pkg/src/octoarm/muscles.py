"""Longitudinal and transverse muscles: geometry, Hill force-length law, loads on the rod."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Mapping

import numpy as np
from numpy.polynomial import Polynomial

from .errors import DomainError
from .rod import ActiveStress, Deformations, RodGeometry

LM_TOP = "LM_top"
LM_BOTTOM = "LM_bottom"
TM = "TM"
KINDS = (LM_TOP, LM_BOTTOM, TM)


@dataclass(frozen=True)
class MuscleSpec:
    kind: str
    offset_ratio: float     # signed offset along b, as a fraction of the local radius
    tangent_sign: float     # +1 pulls along a, -1 pushes (transverse)
    max_stress: float       # Pa
    area_fraction: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown muscle kind {self.kind!r}")
        if not self.max_stress > 0:
            raise DomainError("max_stress must be positive")
        if not 0 < self.area_fraction <= 1:
            raise DomainError("area_fraction must lie in (0, 1]")


def default_muscles(lm_stress=1.0e4, tm_stress=2.5e4, lm_offset=5.0 / 8.0,
                    lm_fraction=1.0 / 8.0, tm_fraction=1.0 / 4.0):
    return (
        MuscleSpec(LM_TOP, +lm_offset, 1.0, lm_stress, lm_fraction),
        MuscleSpec(LM_BOTTOM, -lm_offset, 1.0, lm_stress, lm_fraction),
        MuscleSpec(TM, 0.0, -1.0, tm_stress, tm_fraction),
    )


class MuscleActivations(dict):
    """Mapping muscle kind -> activation array on the elements, values in [0, 1]."""

    def __init__(self, values: Mapping[str, np.ndarray], n_elements: int = None):
        super().__init__()
        for kind, u in values.items():
            if kind not in KINDS:
                raise DomainError(f"unknown muscle kind {kind!r}")
            u = np.asarray(u, dtype=float)
            if n_elements is not None:
                u = np.broadcast_to(u, (n_elements,)).copy()
            if np.any(u < 0) or np.any(u > 1) or not np.all(np.isfinite(u)):
                raise DomainError(f"activation for {kind} must lie in [0, 1]")
            self[kind] = u

    @classmethod
    def zeros(cls, n_elements: int):
        return cls({k: np.zeros(n_elements) for k in KINDS})


_CUBIC = Polynomial([-6.44, 18.01, -13.64, 3.06])
_CUBIC_INT = _CUBIC.integ()
_ROOTS = np.sort(_CUBIC.roots().real)


def force_length(length):
    """Normalized active force; the fitted cubic clamped at zero."""
    length = np.asarray(length, dtype=float)
    out = np.maximum(_CUBIC(length), 0.0)
    return float(out) if out.ndim == 0 else out


def _positive_part_antiderivative(x):
    # integral of max(cubic, 0) from 0 to x, for the three real roots r0 < r1 < r2
    r0, r1, r2 = _ROOTS
    x = np.asarray(x, dtype=float)
    lobe = _CUBIC_INT(r1) - _CUBIC_INT(r0)
    out = np.where(x <= r0, 0.0, 0.0)
    out = np.where((x > r0) & (x <= r1), _CUBIC_INT(np.clip(x, r0, r1)) - _CUBIC_INT(r0), out)
    out = np.where((x > r1) & (x <= r2), lobe, out)
    out = np.where(x > r2, lobe + _CUBIC_INT(np.maximum(x, r2)) - _CUBIC_INT(r2), out)
    return out


def force_length_integral(length):
    """Integral of ``force_length`` from 1 to ``length`` (stored energy of the fibre)."""
    return _positive_part_antiderivative(length) - _positive_part_antiderivative(1.0)


def element_curvature(kappa):
    """Curvature averaged onto elements; the missing end values count as zero."""
    k = np.concatenate([[0.0], np.asarray(kappa, dtype=float), [0.0]])
    return 0.5 * (k[:-1] + k[1:])


def muscle_offset(spec: MuscleSpec, geometry: RodGeometry):
    return spec.offset_ratio * geometry.radius


def muscle_length(spec: MuscleSpec, deform: Deformations, geometry: RodGeometry,
                  exact_transverse: bool = False):
    if spec.kind == TM:
        if exact_transverse:
            return 1.0 / np.asarray(deform.nu1)
        return 2.0 - np.asarray(deform.nu1)
    return np.asarray(deform.nu1) - muscle_offset(spec, geometry) * element_curvature(deform.kappa)


def max_force(spec: MuscleSpec, geometry: RodGeometry):
    return spec.max_stress * spec.area_fraction * geometry.area


def muscle_stresses(u: Mapping[str, np.ndarray], specs: Iterable[MuscleSpec],
                    deform: Deformations, geometry: RodGeometry,
                    exact_transverse: bool = False) -> Dict[str, ActiveStress]:
    """Per-muscle force (material frame, per element) and couple (per interior node)."""
    out = {}
    N = geometry.N
    for spec in specs:
        act = u.get(spec.kind)
        if act is None:
            continue
        ell = muscle_length(spec, deform, geometry, exact_transverse)
        tension = np.asarray(act) * max_force(spec, geometry) * force_length(ell)
        force = np.zeros((N, 2))
        force[:, 0] = spec.tangent_sign * tension
        # couple x1*n2 - x2*n1 with x = x2 b and n = n1 a
        elem_couple = -muscle_offset(spec, geometry) * force[:, 0]
        out[spec.kind] = ActiveStress(force, 0.5 * (elem_couple[:-1] + elem_couple[1:]))
    return out


def total_stress(per_muscle: Mapping[str, ActiveStress], geometry: RodGeometry) -> ActiveStress:
    N = geometry.N
    f = np.zeros((N, 2))
    m = np.zeros(N - 1)
    for s in per_muscle.values():
        f += s.force
        m += s.couple
    return ActiveStress(f, m)


def muscle_energy(u: Mapping[str, np.ndarray], specs: Iterable[MuscleSpec],
                  deform: Deformations, geometry: RodGeometry) -> float:
    """Stored energy whose gradient reproduces the (linearized) muscle loads."""
    w = 0.0
    for spec in specs:
        act = u.get(spec.kind)
        if act is None:
            continue
        ell = muscle_length(spec, deform, geometry)
        w += np.sum(np.asarray(act) * max_force(spec, geometry) * force_length_integral(ell))
    return float(geometry.ds * w)


class MuscleLoad:
    """Callable handed to the rod stepper so muscle loads follow the half-step shape."""

    def __init__(self, specs, geometry: RodGeometry, activations: Mapping[str, np.ndarray],
                 exact_transverse: bool = False):
        self.specs = tuple(specs)
        self.geometry = geometry
        self.activations = activations
        self.exact_transverse = exact_transverse

    def __call__(self, deform: Deformations) -> ActiveStress:
        per = muscle_stresses(self.activations, self.specs, deform, self.geometry,
                              self.exact_transverse)
        return total_stress(per, self.geometry)

    def energy(self, deform: Deformations) -> float:
        return muscle_energy(self.activations, self.specs, deform, self.geometry)
