import numpy as np
import pytest

from octoarm import cable as cab
from octoarm.controller import (closest_point, equilibrium_solve, feedback_currents, integrate_bearing_ode,
                                mc_unicycle_oracle, muscle_currents, sensory_kinematics_integrate,
                                _element_bearing)
from octoarm.environment import distance_bearing, wrap_angle
from octoarm.errors import DomainError
from octoarm.experiments import run_mc_oracle
from octoarm.muscles import LM_BOTTOM, LM_TOP, TM, default_muscles, muscle_stresses, total_stress
from octoarm.rod import Deformations, Rod, RodParameters, integrate_kinematics

P = RodParameters()
L = P.length
N = P.elements


def test_closest_point_cases():
    s = np.linspace(0, L, 11)
    assert closest_point(np.linspace(1, 0.1, 11), s)[1] == pytest.approx(L)
    rho = np.abs(s - s[4]) + 0.01
    assert closest_point(rho, s) == (4, s[4])
    assert closest_point(np.ones(11), s)[1] == 0.0
    with pytest.raises(DomainError):
        closest_point([])


def test_muscle_current_examples():
    s = np.array([0.0, 0.1])
    I = muscle_currents(np.array([np.pi / 2, np.pi / 2]), s, 0.05, 200.0)
    assert I[LM_TOP][0] == pytest.approx(200) and I[LM_BOTTOM][0] == 0
    assert I[TM][0] == pytest.approx(0, abs=1e-25)
    assert all(I[k][1] == 0 for k in I)
    I = muscle_currents(np.zeros(2), s, 1.0, 200.0)
    assert I[LM_TOP][0] == 0 and I[LM_BOTTOM][0] == 0 and I[TM][0] == 200
    I = muscle_currents(np.array([-np.pi / 2]), np.zeros(1), 1.0, 200.0, inextensible=True)
    assert I[LM_BOTTOM][0] == pytest.approx(200) and I[TM][0] == 0


def test_sign_split_and_gate():
    rng = np.random.default_rng(0)
    alpha = rng.uniform(-np.pi, np.pi, 500)
    s = np.sort(rng.uniform(0, L, 500))
    I = muscle_currents(alpha, s, 0.11, 200.0)
    assert np.all(I[LM_TOP] * I[LM_BOTTOM] == 0)
    assert all(np.all(v[s > 0.11] == 0) for v in I.values())
    assert all(np.all(v >= 0) for v in I.values())


def test_feedback_gate_in_a_bent_arm():
    rod = Rod(inextensible=True)
    st = rod.state_from_deformations(Deformations(np.ones(N), np.zeros(N), np.full(N - 1, 8.0)))
    I, g = feedback_currents(st, np.array([0.1, 0.08]), rod.geometry, 200.0)
    past = rod.geometry.s_elements > g.s_bar
    assert past.any() and all(np.all(v[past] == 0) for v in I.values())


def test_straight_arm_axis_target():
    d = Deformations(np.ones(N), np.zeros(N), np.zeros(N - 1))
    rho, alpha, hit = sensory_kinematics_integrate(d, [1.5 * L, 0.0], P)
    nodes = np.arange(N + 1) * P.ds
    assert hit is None
    assert np.allclose(alpha, 0, atol=1e-14) and np.allclose(rho, 1.5 * L - nodes, atol=1e-14)


def test_perpendicular_target_at_base():
    d = Deformations(np.ones(N), np.zeros(N), np.zeros(N - 1))
    rho, alpha, _ = sensory_kinematics_integrate(d, [0.0, 0.5 * L], P)
    assert alpha[0] == pytest.approx(np.pi / 2)
    # range is stationary at the base: first step changes it only at second order
    assert abs(rho[1] - rho[0]) < P.ds ** 2 / rho[0]


def test_degenerate_range_flagged():
    d = Deformations(np.ones(N), np.zeros(N), np.zeros(N - 1))
    _, _, hit = sensory_kinematics_integrate(d, [0.5 * L, 0.0], P)
    assert hit == N // 2 or hit == N // 2 + 1
    with pytest.raises(DomainError):
        sensory_kinematics_integrate(d, [0.0, 0.0], P)


@pytest.mark.parametrize("n", [50, 100, 200])
def test_integration_matches_pointwise_geometry(n):
    p = RodParameters(elements=n)
    s = (np.arange(n) + 0.5) / n
    kappa_fn = lambda x: 6.0 * np.sin(2 * x) + 3.0
    d = Deformations(1.0 + 0.05 * s, 0.02 * np.cos(3 * s), kappa_fn(np.arange(1, n) / n))
    target = np.array([0.12, 0.15])
    rho, alpha, hit = sensory_kinematics_integrate(d, target, p)
    pos, ang = integrate_kinematics(d, p)
    r_pt, a_pt, _ = distance_bearing(pos, np.append(ang, ang[-1]), target)
    # bearing at node k is measured in the frame of the element leaving it
    assert hit is None
    assert np.max(np.abs(rho - r_pt)) < 1e-9
    assert np.max(np.abs(wrap_angle(alpha - a_pt))) < 1e-8


@pytest.fixture(scope="module")
def equilibria():
    return {
        "I": equilibrium_solve(np.array([0.75 * L, 0.375 * L]), rod=Rod(inextensible=True)),
        "II": equilibrium_solve(np.array([1.0 * L, 0.5 * L]), rod=Rod(inextensible=True)),
    }


def test_equilibrium_reaches_target_in_range(equilibria):
    eq = equilibria["I"]
    assert np.min(eq.rho) <= 0.05 * L
    assert eq.history[-1] < 1e-8


def test_equilibrium_points_at_target_out_of_range(equilibria):
    assert np.cos(equilibria["II"].alpha[-1]) >= 0.95


def test_equilibrium_residual(equilibria):
    eq = equilibria["I"]
    rod = Rod(inextensible=True)
    g = rod.geometry
    target = np.array([0.75 * L, 0.375 * L])
    rho_e, alpha_e = _element_bearing(eq.positions, eq.angles, target)
    s_bar = closest_point(rho_e, g.s_elements)[1]
    I = muscle_currents(alpha_e, g.s_elements, s_bar, 200.0, inextensible=True)
    kinds = list(I)
    V = cab.solve_cable_static(np.stack([I[k] for k in kinds]), cab.CableParams(), g.ds)
    u = {k: cab.activation(V[i]) for i, k in enumerate(kinds) if k != TM}
    act = total_stress(muscle_stresses(u, default_muscles(), eq.deform, g), g)
    res = g.EI * eq.deform.kappa + act.couple
    assert np.max(np.abs(res)) <= 1e-6 * np.max(np.abs(act.couple))


def test_equilibrium_axis_target_is_straight():
    eq = equilibrium_solve(np.array([1.3 * L, 0.0]), rod=Rod(inextensible=True))
    assert np.max(np.abs(eq.deform.kappa)) < 1e-9


def test_equilibrium_rejects_base_target():
    with pytest.raises(DomainError):
        equilibrium_solve(np.zeros(2))


def test_pursuit_head_on_capture():
    tr = mc_unicycle_oracle(1.0, 0.0, 50.0, 1e-3, 2.0, capture_radius=1e-9)
    assert tr.captured and tr.t[-1] == pytest.approx(1.0, abs=2e-3)
    assert np.allclose(np.diff(tr.zeta), -1e-3) and np.all(tr.phi == 0)


def test_pursuit_aligns_under_strong_gain():
    tr = mc_unicycle_oracle(2.0, 1.2, 200.0, 1e-4, 1.0)
    c = np.cos(tr.phi)
    after = c[tr.t > 0.05]
    assert np.all(np.diff(after) >= -1e-12) and after[-1] > 0.999


def test_pursuit_matches_arm_geometry():
    _, dev = run_mc_oracle(0.8, 0.6, 20.0, 1e-5, 0.5)
    assert dev <= 1e-4


def test_bearing_ode_closed_loop_vs_oracle_step_refinement():
    # the oracle is first order, so halving dt roughly halves the gap
    _, rho, _, _ = integrate_bearing_ode(0.8, 0.6, 0.5, 5000, lambda s, r, a: 20.0 * np.sin(a))
    gaps = []
    for dt in (1e-3, 5e-4):
        tr = mc_unicycle_oracle(0.8, 0.6, 20.0, dt, 0.5)
        stride = int(round(dt / 1e-4))
        gaps.append(np.max(np.abs(tr.zeta - rho[::stride][:len(tr.zeta)])))
    assert gaps[1] < 0.6 * gaps[0]


def test_oracle_validates():
    with pytest.raises(DomainError):
        mc_unicycle_oracle(0.0, 0.0, 1.0, 1e-3, 1.0)
