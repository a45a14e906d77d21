import math

import numpy as np
import pytest

from robindc.mesh import BoundaryKind, interface_tangent_normal
from robindc.problems import (PROBLEMS, example_dirichlet, example_neumann, example_viscosity,
                              example_zero, get_problem)

REAL = [example_neumann, example_viscosity, example_dirichlet]
H = 1e-5


def fd_grad(f, x, y, t, h=H):
    return ((f(x + h, y, t) - f(x - h, y, t)) / (2 * h),
            (f(x, y + h, t) - f(x, y - h, t)) / (2 * h))


def fd_lap(f, x, y, t, h=1e-4):
    # fourth-order stencil keeps truncation and rounding both near 1e-9
    def d2(g):
        return (-g(2 * h) + 16 * g(h) - 30 * g(0) + 16 * g(-h) - g(-2 * h)) / (12 * h * h)
    return d2(lambda s: f(x + s, y, t)) + d2(lambda s: f(x, y + s, t))


def fd_dt(f, x, y, t, h=H):
    return (f(x, y, t + h) - f(x, y, t - h)) / (2 * h)


def interface_samples(p, rng, k=100):
    x = rng.random(k)
    return x, p.interface.y_at(x), rng.random(k) * p.T


@pytest.mark.parametrize("make", REAL)
def test_continuity_and_flux_balance(make, rng):
    p = make()
    x, y, t = interface_samples(p, rng)
    np.testing.assert_allclose(p.u(x, y, t), p.w(x, y, t), atol=1e-12)
    n_f = interface_tangent_normal(p.interface).normal
    gu = np.array(p.grad_u(x, y, t))
    gw = np.array(p.grad_w(x, y, t))
    balance = p.nu_s * (gw.T @ -n_f) + p.nu_f * (gu.T @ n_f)
    np.testing.assert_allclose(balance, 0.0, atol=1e-10)


@pytest.mark.parametrize("make", REAL)
def test_hand_derivatives_match_finite_differences(make, rng):
    p = make()
    x, y, t = rng.random(100), rng.random(100), rng.random(100) * p.T
    for f, g, dt in ((p.u, p.grad_u, p.dt_u), (p.w, p.grad_w, p.dt_w)):
        np.testing.assert_allclose(np.array(g(x, y, t)), np.array(fd_grad(f, x, y, t)), atol=1e-7)
        np.testing.assert_allclose(dt(x, y, t), fd_dt(f, x, y, t), atol=1e-6)


@pytest.mark.parametrize("make", REAL)
def test_forcing_is_the_heat_residual(make, rng):
    p = make()
    x, y, t = rng.random(100), rng.random(100), rng.random(100) * p.T
    r1 = p.dt_u(x, y, t) - p.nu_f * fd_lap(p.u, x, y, t)
    r2 = p.dt_w(x, y, t) - p.nu_s * fd_lap(p.w, x, y, t)
    np.testing.assert_allclose(p.g1(x, y, t), r1, atol=1e-5)
    np.testing.assert_allclose(p.g2(x, y, t), r2, atol=1e-5)


def test_viscosity_forcing_spot_check():
    p = example_viscosity()
    x, y, t = 0.3, 0.2, 0.1
    expected = fd_dt(p.u, x, y, t) - p.nu_f * fd_lap(p.u, x, y, t)
    assert p.g1(x, y, t) == pytest.approx(expected, rel=1e-8)


def test_neumann_example_parameters():
    p = example_neumann()
    assert (p.nu_f, p.nu_s, p.alpha, p.T) == (1.0, 1.0, 4.0, 0.25)
    assert (p.interface.y0, p.interface.y1) == (0.25, 0.75)
    assert p.bc is BoundaryKind.NEUMANN_SIDES and not p.has_forcing
    assert p.u(0.5, 0.5, 0.0) == pytest.approx(0.0, abs=1e-16)
    assert not np.any(p.g1(np.array([0.2]), np.array([0.7]), 0.1))


def test_viscosity_example_parameters():
    p = example_viscosity()
    assert (p.nu_f, p.nu_s, p.alpha, p.T) == (2.0, 1.0, 4.0, 0.25)
    assert p.interface.is_horizontal and p.interface.y0 == 0.75
    assert p.has_forcing and (p.nu_f / p.nu_s).is_integer()
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(p.u(x, 0.75, 0.1), 0, atol=1e-15)
    np.testing.assert_allclose(p.w(x, 0.75, 0.1), 0, atol=1e-15)
    # w vanishes on the top side, u on the bottom side
    np.testing.assert_allclose(p.w(x, 1.0, 0.1), 0, atol=1e-14)
    np.testing.assert_allclose(p.u(x, 0.0, 0.1), 0, atol=1e-14)


def test_dirichlet_example():
    p = example_dirichlet()
    assert p.bc is BoundaryKind.DIRICHLET_SIDES and not p.has_forcing
    s = np.linspace(0, 1, 13)
    for x, y in ((s, 0 * s), (s, 0 * s + 1), (0 * s, s), (0 * s + 1, s)):
        np.testing.assert_allclose(p.u(x, y, 0.1), 0, atol=1e-15)
    # flux at the interface midpoint against finite differences
    t = 0.05
    n_f = np.array([-1, 2]) / math.sqrt(5)
    fd = np.array(fd_grad(p.u, 0.5, 0.5, t)) @ n_f
    assert p.flux(0.5, 0.5, t) == pytest.approx(fd, abs=1e-8)


def test_side_flux_is_b_times_vertical_derivative():
    p = example_dirichlet()
    tn = interface_tangent_normal(p.interface)
    x = np.linspace(0, 1, 9)
    y = p.interface.y_at(x)
    expect = tn.b * p.grad_u(x, y, 0.1)[1]
    np.testing.assert_allclose(p.side_flux(x, y, 0.1), expect)
    assert p.multiplier_target(True) == p.side_flux
    assert p.multiplier_target(False) == p.flux


@pytest.mark.parametrize("make", [example_neumann, example_dirichlet])
def test_decay(make):
    p = make()
    xs, ys = np.meshgrid(np.linspace(0, 1, 41), np.linspace(0, 1, 41))
    norms = [np.linalg.norm(p.u(xs, ys, t)) for t in np.linspace(0, p.T, 20)]
    assert np.all(np.diff(norms) < 0)


def test_labels():
    for label in ("neumann-slanted", "two-viscosity", "dirichlet-slanted"):
        assert get_problem(label).label == label
    assert set(PROBLEMS) >= {"neumann-slanted", "two-viscosity", "dirichlet-slanted"}
    with pytest.raises(ValueError):
        get_problem("no-such-problem")


def test_zero_problem():
    p = example_zero()
    assert not np.any(p.u(np.ones(3), np.ones(3), 0.1))
    assert not np.any(p.flux(np.ones(3), np.ones(3), 0.1))
    assert p.with_alpha(2).alpha == 2.0
