import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from octoarm.environment import (DiffusionField, distance_bearing, range_from_concentration,
                                 sample_concentration, steady_concentration, wrap_angle)
from octoarm.errors import DomainError


def test_distance_bearing_examples():
    assert distance_bearing([0, 0], 0.0, [1, 0])[:2] == pytest.approx((1, 0))
    assert distance_bearing([0, 0], 0.0, [0, 1])[:2] == pytest.approx((1, np.pi / 2))
    assert distance_bearing([0, 0], np.pi / 2, [0, 1])[:2] == pytest.approx((1, 0))


def test_distance_bearing_degenerate():
    rho, alpha, degenerate = distance_bearing([0.3, 0.2], 1.0, [0.3, 0.2])
    assert rho == 0 and alpha == 0 and degenerate


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-50, 50), st.floats(-5, 5), st.floats(-5, 5))
def test_bearing_wrapped_and_consistent(x, y, theta, tx, ty):
    rho, alpha, deg = distance_bearing([x, y], theta, [tx, ty])
    assert -np.pi < alpha <= np.pi
    if not deg and rho > 1e-9:
        # rotating the tangent by alpha points at the target
        d = np.array([tx - x, ty - y]) / rho
        assert np.allclose([np.cos(theta + alpha), np.sin(theta + alpha)], d, atol=1e-9)


def test_wrap_angle_edges():
    assert wrap_angle(np.pi) == pytest.approx(np.pi)
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert wrap_angle(3 * np.pi / 2) == pytest.approx(-np.pi / 2)


def test_steady_concentration_examples():
    assert steady_concentration(1.0, 2.0) == 0.0
    assert range_from_concentration(0.5, 2.0) == pytest.approx(np.exp(-1.0))
    r = np.linspace(0.01, 3, 300)
    assert np.all(np.diff(steady_concentration(r, 2.0)) < 0)
    assert np.allclose(range_from_concentration(steady_concentration(r, 1.7), 1.7), r)
    with pytest.raises(DomainError):
        steady_concentration(0.0, 2.0)


def field(**kw):
    return DiffusionField(np.array([0.1, 0.12]), spacing=0.01, half_width=0.3, **kw)


def test_uniform_field_without_source_unchanged():
    class NoSource(DiffusionField):
        @property
        def source_rate(self):
            return 0.0
    f = NoSource(np.array([0.1, 0.1]), spacing=0.01, half_width=0.3)
    f._steady[:] = 0.7
    f.c[:] = 0.7
    for _ in range(10):
        f.step(f.stable_dt)
    assert np.all(f.c == 0.7)


def test_stability_bound_enforced():
    f = field()
    with pytest.raises(DomainError):
        f.step(1.01 * f.stable_dt)


def test_mass_audit():
    f = DiffusionField.cold(np.array([0.1, 0.12]), spacing=0.01, half_width=0.3)
    dt = f.stable_dt
    h = f.spacing
    for _ in range(5):
        c = f.c.copy()
        before = f.interior_mass()
        f.step(dt)
        # flux through the pinned ring, from each interior cell next to it
        flux = (np.sum(c[0, 1:-1] - c[1, 1:-1]) + np.sum(c[-1, 1:-1] - c[-2, 1:-1])
                + np.sum(c[1:-1, 0] - c[1:-1, 1]) + np.sum(c[1:-1, -1] - c[1:-1, -2]))
        expected = dt * f.source_rate + dt * f.diffusivity * flux
        assert f.interior_mass() - before == pytest.approx(expected, rel=1e-10, abs=1e-14)


def test_source_only_adds_its_rate_before_boundary_losses():
    f = DiffusionField.cold(np.array([0.0, 0.0]), spacing=0.01, half_width=0.3)
    f.c[:] = 0.0
    f._steady[:] = 0.0
    before = f.interior_mass()
    f.step(f.stable_dt)
    assert f.interior_mass() - before == pytest.approx(f.stable_dt * f.source_rate, rel=1e-12)


def test_long_run_approaches_log_profile():
    L = 0.2
    f = DiffusionField.cold(np.array([0.0, 0.0]), mu=2.0, diffusivity=0.1, length_scale=L,
                            half_width=1.5 * L, spacing=0.05 * L)
    dt = f.stable_dt
    for _ in range(20000):
        f.step(dt)
    X, Y = np.meshgrid(f.x, f.y, indexing="ij")
    r = np.hypot(X, Y) / L
    ring = (r > 0.3) & (r < 1.2)
    exact = -np.log(r[ring]) / 2.0
    assert np.max(np.abs(f.c[ring] - exact)) < 0.02


def test_sampling():
    f = field()
    assert f.sample(np.array([f.x[7], f.y[9]])) == pytest.approx(f.c[7, 9])
    f.c[3:5, 3:5] = 1.25
    mid = np.array([0.5 * (f.x[3] + f.x[4]), 0.5 * (f.y[3] + f.y[4])])
    assert sample_concentration(f, mid) == pytest.approx(1.25)
    X, Y = np.meshgrid(f.x, f.y, indexing="ij")
    f.c = 3.0 * X - 0.5 * Y
    pts = np.random.default_rng(0).uniform(-0.29, 0.29, (50, 2))
    assert np.allclose(f.sample(pts), 3.0 * pts[:, 0] - 0.5 * pts[:, 1])


def test_sampling_outside_is_clamped_and_counted():
    f = field()
    f.sample(np.array([[5.0, 0.0], [0.0, 0.0]]))
    assert f.out_of_domain == 1
