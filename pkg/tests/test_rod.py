import numpy as np
import pytest

from octoarm.errors import DomainError, NumericalBlowup
from octoarm.muscles import LM_TOP, MuscleLoad, default_muscles
from octoarm.rod import (ActiveStress, Deformations, Rod, RodGeometry, RodParameters, RodState,
                         compute_deformations, drag_force, integrate_kinematics, passive_stresses,
                         radius_profile, total_energy, with_elements)

P = RodParameters()
L = P.length
N = P.elements


def test_radius_profile_examples():
    assert radius_profile(P, 0.0) == pytest.approx(0.01)
    assert radius_profile(P, L) == pytest.approx(0.001)
    assert radius_profile(P, L / 2) == pytest.approx(0.0055)


def test_radius_profile_rejects_outside():
    with pytest.raises(DomainError):
        radius_profile(P, -0.01)
    with pytest.raises(DomainError):
        radius_profile(P, 1.1 * L)


@pytest.mark.parametrize("kw", [dict(length=0.0), dict(tip_radius=0.02), dict(elements=1),
                                dict(damping=-1.0), dict(rotational_damping="other")])
def test_parameters_validated(kw):
    with pytest.raises(DomainError):
        RodParameters(**kw)


def test_deformations_straight_rest():
    d = Rod().deformations(Rod().rest_state())
    assert np.allclose(d.nu1, 1.0) and np.allclose(d.nu2, 0.0) and np.allclose(d.kappa, 0.0)


def test_deformations_uniform_stretch():
    st = Rod().rest_state()
    st.positions *= 2.0
    assert np.allclose(compute_deformations(st, P).nu1, 2.0)


def test_deformations_circular_arc():
    R = 0.1
    # sample the arc at nodes; element angle is the chord direction
    phi = np.linspace(0.0, L / R, N + 1)
    pos = np.stack([R * np.sin(phi), R * (1 - np.cos(phi))], axis=-1)
    chord = np.diff(pos, axis=0)
    ang = np.arctan2(chord[:, 1], chord[:, 0])
    st = RodState(pos, ang, np.zeros((N + 1, 2)), np.zeros(N))
    d = compute_deformations(st, P)
    assert np.allclose(d.kappa, 1.0 / R, rtol=1e-10)
    assert np.max(np.abs(d.nu1 - 1.0)) < (P.ds / R) ** 2


def test_passive_stresses_rest_is_zero():
    n, m = passive_stresses(Deformations(np.ones(N), np.zeros(N), np.zeros(N - 1)), P)
    assert np.all(n == 0) and np.all(m == 0)


def test_passive_axial_force_base():
    g = RodGeometry(P)
    nu1 = np.ones(N)
    nu1[0] = 1.1
    n, _ = passive_stresses(Deformations(nu1, np.zeros(N), np.zeros(N - 1)), P, g)
    expected = P.youngs_modulus * np.pi * g.radius[0] ** 2 * 0.1
    assert n[0, 0] == pytest.approx(expected, rel=1e-12)
    # the element sits half a cell from the base, so the section is within 1% of the base section
    assert n[0, 0] == pytest.approx(0.3142, rel=1e-2)


def test_passive_bending_couple_base():
    g = RodGeometry(P)
    kappa = np.zeros(N - 1)
    kappa[0] = 1.0
    _, m = passive_stresses(Deformations(np.ones(N), np.zeros(N), kappa), P, g)
    A = np.pi * radius_profile(P, P.ds) ** 2
    assert m[0] == pytest.approx(P.youngs_modulus * A * A / (4 * np.pi), rel=1e-12)
    assert m[0] == pytest.approx(7.85e-5, rel=5e-2)


def test_drag_zero_velocity():
    assert np.all(drag_force(Rod().rest_state(), P) == 0)


def test_drag_tangential_base_element():
    st = Rod().rest_state()
    st.momentum[:] = RodGeometry(P).mass[:, None] * np.array([0.1, 0.0])
    st.momentum[0] = 0.0
    g = RodGeometry(P)
    f = drag_force(st, P, g)
    # element 1 has both end nodes moving at 0.1 m/s
    expected = 0.5 * 1022 * 2 * np.pi * g.radius[1] * 0.155 * 0.01
    assert f[1, 0] == pytest.approx(-expected, rel=1e-12)
    assert f[1, 1] == pytest.approx(0.0, abs=1e-15)
    assert expected == pytest.approx(0.0498, rel=2e-2)


def test_drag_opposes_velocity():
    rng = np.random.default_rng(3)
    st = Rod().rest_state()
    st.angles = rng.uniform(-1, 1, N)
    st.angles[0] = 0
    st.momentum = rng.normal(size=(N + 1, 2)) * 1e-4
    st.momentum[0] = 0
    g = RodGeometry(P)
    f = drag_force(st, P, g)
    v = np.zeros_like(st.momentum)
    v[1:] = st.momentum[1:] / g.mass[1:, None]
    vm = 0.5 * (v[:-1] + v[1:])
    a = np.stack([np.cos(st.angles), np.sin(st.angles)], -1)
    b = np.stack([-np.sin(st.angles), np.cos(st.angles)], -1)
    for e in (a, b):
        assert np.all(np.sum(f * e, -1) * np.sum(vm * e, -1) <= 0)


def test_integrate_kinematics_examples():
    pos, ang = integrate_kinematics(Deformations(np.ones(N), np.zeros(N), np.zeros(N - 1)), P)
    assert np.allclose(pos[-1], [L, 0]) and np.allclose(ang, 0)
    k = np.full(N - 1, np.pi / (2 * L))
    _, ang = integrate_kinematics(Deformations(np.ones(N), np.zeros(N), k), P)
    # N - 1 interior joints carry the bend, the last element sits one cell short of the tip
    assert ang[-1] == pytest.approx(np.pi / 2 * (N - 1) / N, rel=1e-12)
    pos, _ = integrate_kinematics(Deformations(np.full(N, 1.5), np.zeros(N), np.zeros(N - 1)), P)
    assert np.allclose(pos[-1], [1.5 * L, 0])


def test_integrate_then_deformations_round_trip():
    rng = np.random.default_rng(0)
    d = Deformations(1 + 0.1 * rng.random(N), 0.05 * rng.normal(size=N), rng.normal(size=N - 1))
    pos, ang = integrate_kinematics(d, P)
    back = compute_deformations(RodState(pos, ang, np.zeros((N + 1, 2)), np.zeros(N)), P)
    for a, b in zip(d, back):
        assert np.allclose(a, b, atol=1e-12)


def test_energy_rest_and_translation():
    rod = Rod()
    st = rod.rest_state()
    assert total_energy(st, P) == pytest.approx(0.0, abs=1e-25)
    st.momentum[1:] = [1e-4, -2e-4]
    m = rod.geometry.mass[1:]
    assert rod.energy(st) == pytest.approx(np.sum(2.5e-8 / m), rel=1e-12)


@pytest.mark.parametrize("inextensible", [False, True])
def test_rest_state_is_equilibrium(inextensible):
    rod = Rod(inextensible=inextensible)
    st = rod.rest_state()
    new = st
    for k in range(50):
        new = rod.step(new, 1e-5, None, k)
    assert np.max(np.abs(new.positions - st.positions)) < 1e-15
    assert np.max(np.abs(new.angles)) == 0.0


@pytest.mark.parametrize("inextensible", [False, True])
def test_top_muscle_bends_toward_top(inextensible):
    rod = Rod(inextensible=inextensible)
    load = MuscleLoad(default_muscles(), rod.geometry, {LM_TOP: np.full(N, 0.5)})
    st = rod.rest_state()
    for k in range(2000):
        st = rod.step(st, 1e-5, load, k)
    assert st.positions[-1, 1] > 1e-4
    assert np.all(st.positions[0] == 0) and st.angles[0] == 0


def test_inextensible_constraints_exact():
    rod = Rod(inextensible=True)
    load = MuscleLoad(default_muscles(), rod.geometry, {LM_TOP: np.linspace(1, 0, N)})
    st = rod.rest_state()
    for k in range(500):
        st = rod.step(st, 1e-5, load, k)
    d = rod.deformations(st)
    assert np.max(np.abs(d.nu1 - 1)) <= 1e-10 and np.max(np.abs(d.nu2)) <= 1e-10


def test_blowup_reports_step():
    rod = Rod()
    bad = ActiveStress(np.full((N, 2), np.nan), np.zeros(N - 1))
    with pytest.raises(NumericalBlowup) as exc:
        rod.step(rod.rest_state(), 1e-5, bad, 17)
    assert exc.value.step == 17


def test_damped_free_oscillation_energy_decreases():
    rod = Rod(drag=False)
    st = rod.rest_state()
    st.positions[1:, 1] = 0.02 * (rod.geometry.s_nodes[1:] / L) ** 2
    st.angles[1:] = np.arctan2(np.diff(st.positions[:, 1]), np.diff(st.positions[:, 0]))[1:]
    H = [rod.energy(st)]
    for k in range(3000):
        st = rod.step(st, 1e-5, None, k)
        H.append(rod.energy(st))
    H = np.array(H)
    assert np.all(np.diff(H) <= 1e-9 * H[0])
    assert H[-1] < H[0]


def test_with_elements():
    assert with_elements(P, 50).elements == 50
