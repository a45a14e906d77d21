"""Manufactured solutions for the coupled heat problem.

Every field is a closure ``f(x, y, t)`` vectorised over numpy arrays.
Gradients and time derivatives are written out by hand.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import BoundaryKind, InterfaceSpec, interface_tangent_normal

Field = Callable[[np.ndarray, np.ndarray, float], np.ndarray]
PI = np.pi


def _zero(x, y, t):
    return np.zeros(np.broadcast(x, y).shape)


@dataclass(frozen=True)
class ProblemSpec:
    label: str
    interface: InterfaceSpec
    bc: BoundaryKind
    nu_f: float
    nu_s: float
    alpha: float
    T: float
    u: Field
    w: Field
    grad_u: Callable
    grad_w: Callable
    dt_u: Field
    dt_w: Field
    g1: Field = _zero
    g2: Field = _zero
    has_forcing: bool = False

    def flux(self, x, y, t):
        """``nu_f grad u . n_f`` on the interface."""
        n_f = interface_tangent_normal(self.interface).normal
        gx, gy = self.grad_u(x, y, t)
        return self.nu_f * (gx * n_f[0] + gy * n_f[1])

    def side_flux(self, x, y, t):
        """``b nu grad u . s``, the quantity carried by the multiplier of the modified scheme."""
        tn = interface_tangent_normal(self.interface)
        _, gy = self.grad_u(x, y, t)
        return tn.b * self.nu_f * gy * tn.side[1]

    def multiplier_target(self, modified: bool = False) -> Field:
        return self.side_flux if modified else self.flux

    def with_alpha(self, alpha: float) -> "ProblemSpec":
        from dataclasses import replace
        return replace(self, alpha=float(alpha))


def example_neumann() -> ProblemSpec:
    """Slanted interface, Neumann sides, ``u = w = exp(-2 pi^2 t) cos(pi x) sin(pi y)``."""

    def u(x, y, t):
        return np.exp(-2 * PI**2 * t) * np.cos(PI * x) * np.sin(PI * y)

    def grad(x, y, t):
        e = np.exp(-2 * PI**2 * t)
        return (-PI * e * np.sin(PI * x) * np.sin(PI * y),
                PI * e * np.cos(PI * x) * np.cos(PI * y))

    def dt(x, y, t):
        return -2 * PI**2 * u(x, y, t)

    return ProblemSpec("neumann-slanted", InterfaceSpec.slanted(0.25, 0.75),
                       BoundaryKind.NEUMANN_SIDES, 1.0, 1.0, 4.0, 0.25,
                       u, u, grad, grad, dt, dt)


def example_viscosity(nu_f: float = 2.0, nu_s: float = 1.0) -> ProblemSpec:
    """Horizontal interface ``y = 0.75`` with ``nu_f != nu_s`` and nonzero forcing."""
    r = nu_f / nu_s
    kf = 4 * PI
    ks = 4 * PI * r

    def u(x, y, t):
        return np.exp(-2 * PI**2 * t) * np.cos(PI * x) * np.sin(kf * (y - 0.75))

    def w(x, y, t):
        return np.exp(-2 * PI**2 * t) * np.cos(PI * x) * np.sin(ks * (y - 0.75))

    def grad_u(x, y, t):
        e = np.exp(-2 * PI**2 * t)
        return (-PI * e * np.sin(PI * x) * np.sin(kf * (y - 0.75)),
                kf * e * np.cos(PI * x) * np.cos(kf * (y - 0.75)))

    def grad_w(x, y, t):
        e = np.exp(-2 * PI**2 * t)
        return (-PI * e * np.sin(PI * x) * np.sin(ks * (y - 0.75)),
                ks * e * np.cos(PI * x) * np.cos(ks * (y - 0.75)))

    def dt_u(x, y, t):
        return -2 * PI**2 * u(x, y, t)

    def dt_w(x, y, t):
        return -2 * PI**2 * w(x, y, t)

    # u and w are Laplacian eigenfunctions: -lap u = (pi^2 + kf^2) u
    def g1(x, y, t):
        return (-2 * PI**2 + nu_f * (PI**2 + kf**2)) * u(x, y, t)

    def g2(x, y, t):
        return (-2 * PI**2 + nu_s * (PI**2 + ks**2)) * w(x, y, t)

    return ProblemSpec("two-viscosity", InterfaceSpec.horizontal(0.75),
                       BoundaryKind.NEUMANN_SIDES, nu_f, nu_s, 4.0, 0.25,
                       u, w, grad_u, grad_w, dt_u, dt_w, g1, g2, has_forcing=True)


def example_dirichlet() -> ProblemSpec:
    """Slanted interface, Dirichlet data on the whole outer boundary."""

    def u(x, y, t):
        return np.exp(-2 * PI**2 * t) * np.sin(PI * x) * np.sin(PI * y)

    def grad(x, y, t):
        e = np.exp(-2 * PI**2 * t)
        return (PI * e * np.cos(PI * x) * np.sin(PI * y),
                PI * e * np.sin(PI * x) * np.cos(PI * y))

    def dt(x, y, t):
        return -2 * PI**2 * u(x, y, t)

    return ProblemSpec("dirichlet-slanted", InterfaceSpec.slanted(0.25, 0.75),
                       BoundaryKind.DIRICHLET_SIDES, 1.0, 1.0, 4.0, 0.25,
                       u, u, grad, grad, dt, dt)


def example_zero(interface: InterfaceSpec | None = None,
                 bc: BoundaryKind = BoundaryKind.NEUMANN_SIDES) -> ProblemSpec:
    """The trivial solution ``u = w = 0``; every error and diagnostic must vanish."""

    def grad(x, y, t):
        z = _zero(x, y, t)
        return z, z

    return ProblemSpec("zero", interface or InterfaceSpec.slanted(0.25, 0.75), bc,
                       1.0, 1.0, 4.0, 0.25, _zero, _zero, grad, grad, _zero, _zero)


PROBLEMS = {
    "neumann-slanted": example_neumann,
    "two-viscosity": example_viscosity,
    "dirichlet-slanted": example_dirichlet,
    "zero": example_zero,
}


def get_problem(label: str) -> ProblemSpec:
    try:
        return PROBLEMS[label]()
    except KeyError:
        raise ValueError(f"unknown problem {label!r}; choose from {sorted(PROBLEMS)}") from None
