import numpy as np
import pytest

from octoarm.controller import arm_target_geometry, closest_point, muscle_currents
from octoarm.errors import DomainError
from octoarm.loop import (LoopSettings, certainty_equivalence_currents, estimate_closest, initial_arm,
                          interpolate_estimates, run_loop)
from octoarm.muscles import LM_BOTTOM, LM_TOP, TM
from octoarm.rod import Rod

S_UNITS = np.linspace(0, 1, 21)


def test_interpolation_cases():
    rng = np.random.default_rng(0)
    a = rng.normal(size=21)
    r = rng.random(21)
    af, rf = interpolate_estimates(a, r, S_UNITS, S_UNITS)
    assert np.array_equal(af, a) and np.array_equal(rf, r)
    a = np.zeros(21)
    a[4] = 1.0
    af, _ = interpolate_estimates(a, r, S_UNITS, np.array([0.5 * (S_UNITS[3] + S_UNITS[4])]))
    assert af[0] == pytest.approx(0.5)
    af, rf = interpolate_estimates(np.full(21, 0.7), np.full(21, 0.2), S_UNITS, np.linspace(0, 1, 100))
    assert np.all(af == 0.7) and np.all(rf == 0.2)


def test_estimate_closest_cases():
    s = np.linspace(0, 1, 11)
    assert estimate_closest(np.linspace(1, 0.1, 11), s) == 1.0
    assert estimate_closest(np.abs(s - 0.3) + 0.1, s) == pytest.approx(0.3)
    assert estimate_closest(np.ones(11), s) == 0.0


def test_certainty_equivalence_on_truth_is_the_controller():
    rod = Rod(inextensible=True)
    state, _ = initial_arm(rod)
    target = np.array([0.1, 0.12])
    geo = arm_target_geometry(state, target, rod.geometry)
    s = rod.geometry.s_elements
    a = certainty_equivalence_currents(geo.alpha, geo.s_bar, s, 200.0, True)
    b = muscle_currents(geo.alpha, s, geo.s_bar, 200.0, True)
    assert all(np.array_equal(a[k], b[k]) for k in b)


def test_certainty_equivalence_cases():
    s = np.linspace(0, 0.2, 100)
    I = certainty_equivalence_currents(np.full(100, np.pi / 2), 0.1, s, 200.0)
    up = s <= 0.1
    assert np.allclose(I[LM_TOP][up], 200) and np.all(I[LM_BOTTOM] == 0)
    assert np.all(I[LM_TOP][~up] == 0)
    I = certainty_equivalence_currents(np.zeros(100), 0.0, s, 200.0)
    assert all(np.all(v[1:] == 0) for v in I.values())
    assert I[TM][0] == 200


def test_settings_validated():
    with pytest.raises(DomainError):
        LoopSettings(control="guess")
    with pytest.raises(DomainError):
        LoopSettings(dt=1e-4, sense_dt=3e-5)
    with pytest.raises(DomainError):
        LoopSettings(position_sums="nearby")
    with pytest.raises(DomainError):
        run_loop(LoopSettings(target=(0.0, 0.0), dt=1e-4, sense_dt=1e-4, duration=1e-3))


def short(**kw):
    base = dict(target=(0.5, 0.6), dt=1e-4, sense_dt=1e-4, duration=0.02, log_stride=20, noise=0.05, seed=4)
    base.update(kw)
    return LoopSettings(**base)


def test_same_seed_same_log():
    a = run_loop(short())
    b = run_loop(short())
    assert a.rows == b.rows
    assert np.array_equal(a.snapshots, b.snapshots)
    c = run_loop(short(seed=5))
    assert c.rows != a.rows


def test_zero_gain_never_reaches():
    res = run_loop(short(chi=0.0, duration=0.3, noise=0.0, control="truth"))
    assert not res.reached
    d = [r["rho_closest"] for r in res.rows]
    assert min(d) > 0.05
    # passive arm relaxes from its bent start without homing in
    assert res.final_distance > 0.5 * d[0]


def test_log_has_sensing_channels():
    res = run_loop(short())
    row = res.rows[-1]
    for key in ("t", "tip_x", "tip_y", "rho_closest", "sensing_error", "E_prop", "E_chemo", "mu_mean",
                "u_max_LM_top"):
        assert key in row
    assert set(res.sensors) >= {"theta_hat", "alpha_hat", "mu_hat", "rho_hat", "rho", "alpha", "theta"}


def test_ground_truth_control_reaches_quickly():
    res = run_loop(short(control="truth", duration=1.5, noise=0.0, target=(0.75, 0.375)))
    assert res.reached and res.reach_time < 1.5
    assert res.final_distance <= 0.05
