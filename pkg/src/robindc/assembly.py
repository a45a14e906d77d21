"""P1 finite-element operators on the fluid/solid subdomains and on the interface."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import DIRICHLET_F, DIRICHLET_S, FLUID, SOLID, Mesh
from .sparse import csr

_P1_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0

# edge midpoints of the reference triangle; exact for quadratics
_MID_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])

_GAUSS3 = (np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)]), np.array([5.0, 8.0, 5.0]) / 9.0)


@dataclass(frozen=True, eq=False)
class DofMap:
    """Numbering of the unknowns of one subdomain.

    ``dof_of_vertex[v]`` is the DOF of mesh vertex ``v`` or ``-1``.
    ``interface_dofs[k]`` is the DOF sitting on interface vertex number
    ``interface_positions[k]`` (position along the interface, 0..n).
    ``trace`` is the sparse (n+1) x ndof restriction onto interface values.
    """

    subdomain: int
    dof_of_vertex: np.ndarray
    vertices: np.ndarray
    interface_dofs: np.ndarray
    interface_positions: np.ndarray
    trace: sp.csr_matrix

    @property
    def ndof(self) -> int:
        return len(self.vertices)

    @property
    def n_interface(self) -> int:
        return self.trace.shape[0]


def build_dofmap(mesh: Mesh, subdomain: int, eliminate_dirichlet: bool = True) -> DofMap:
    """DOFs of ``subdomain``: its vertices, minus Dirichlet-tagged ones if requested."""
    verts = mesh.subdomain_vertices(subdomain)
    if eliminate_dirichlet:
        tag = DIRICHLET_F if subdomain == FLUID else DIRICHLET_S
        keep = ~mesh.has_tag(tag)[verts]
        verts = verts[keep]
    dof_of_vertex = np.full(len(mesh.vertices), -1, dtype=np.int64)
    dof_of_vertex[verts] = np.arange(len(verts))
    iv_dofs = dof_of_vertex[mesh.interface_vertices]
    positions = np.flatnonzero(iv_dofs >= 0)
    idofs = iv_dofs[positions]
    trace = sp.csr_matrix((np.ones(len(idofs)), (positions, idofs)),
                          shape=(len(mesh.interface_vertices), len(verts)))
    return DofMap(subdomain, dof_of_vertex, verts, idofs, positions, trace)


def _gradients(mesh: Mesh, subdomain: int):
    tri = mesh.triangles[mesh.subdomain == subdomain]
    p = mesh.vertices[tri]  # (nt, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    # gradients of barycentric coordinates: rows of inv(J)^T applied to reference gradients
    g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
    g0 = -g1 - g2
    return tri, np.stack([g0, g1, g2], axis=1), 0.5 * det


def _scatter(dofmap: DofMap, tri, local):
    """Sum element matrices ``local[e]`` (3x3) into a DOF-indexed CSR matrix."""
    dofs = dofmap.dof_of_vertex[tri]
    rows = np.repeat(dofs, 3, axis=1).ravel()
    cols = np.tile(dofs, (1, 3)).ravel()
    vals = local.ravel()
    keep = (rows >= 0) & (cols >= 0)
    n = dofmap.ndof
    return csr(sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)))


def assemble_mass(mesh: Mesh, dofmap: DofMap) -> sp.csr_matrix:
    """Consistent mass matrix ``(phi_j, phi_i)`` over the subdomain of ``dofmap``."""
    tri, _, area = _gradients(mesh, dofmap.subdomain)
    local = area[:, None, None] * _P1_MASS[None]
    return _scatter(dofmap, tri, local)


def assemble_stiffness(mesh: Mesh, dofmap: DofMap, nu: float = 1.0) -> sp.csr_matrix:
    """``nu * (grad phi_j, grad phi_i)`` over the subdomain of ``dofmap``."""
    if not nu > 0:
        raise ValueError(f"diffusivity must be positive, got {nu}")
    tri, grads, area = _gradients(mesh, dofmap.subdomain)
    local = nu * area[:, None, None] * np.einsum("eid,ejd->eij", grads, grads)
    K = _scatter(dofmap, tri, local)
    # enforce exact symmetry against summation-order rounding
    return csr(0.5 * (K + K.T))


class LoadAssembler:
    """Precomputed three-edge-midpoint quadrature for ``(f(., t), phi_i)``.

    The geometry is fixed, so a load vector is one sparse product with the
    values of ``f`` at the quadrature points.
    """

    def __init__(self, mesh: Mesh, dofmap: DofMap):
        tri, _, area = _gradients(mesh, dofmap.subdomain)
        p = mesh.vertices[tri]
        nt = len(tri)
        self.points = np.concatenate([np.einsum("k,ekd->ed", bary, p) for bary in _MID_BARY])
        dofs = dofmap.dof_of_vertex[tri]
        rows, cols, vals = [], [], []
        for q, bary in enumerate(_MID_BARY):
            for k in range(3):
                if bary[k] == 0.0:
                    continue
                keep = dofs[:, k] >= 0
                rows.append(dofs[keep, k])
                cols.append(q * nt + np.flatnonzero(keep))
                vals.append(bary[k] * area[keep] / 3.0)
        self.weights = csr(sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                         shape=(dofmap.ndof, 3 * nt)))

    def __call__(self, f, t: float = 0.0) -> np.ndarray:
        x, y = self.points.T
        fq = np.broadcast_to(np.asarray(f(x, y, t), dtype=float), (len(x),))
        return self.weights @ fq


def assemble_load(mesh: Mesh, dofmap: DofMap, f, t: float = 0.0) -> np.ndarray:
    """``(f(., t), phi_i)`` by the three-edge-midpoint rule."""
    return LoadAssembler(mesh, dofmap)(f, t)


@dataclass(frozen=True, eq=False)
class InterfaceOperator:
    """Operators on the P1 trace space of the interface (n+1 nodes, ordered by x).

    ``mass[i, j] = <phi_j, phi_i>`` and ``tangential[i, j] = <d phi_j / d tau, phi_i>``.
    """

    mass: sp.csr_matrix
    tangential: sp.csr_matrix
    points: np.ndarray
    edge_lengths: np.ndarray

    @property
    def size(self) -> int:
        return self.mass.shape[0]


def assemble_interface(mesh: Mesh) -> InterfaceOperator:
    iv = mesh.interface_vertices
    pts = mesh.vertices[iv]
    y_line = mesh.spec.y_at(pts[:, 0])
    if np.abs(pts[:, 1] - y_line).max() > 1e-12:
        raise ValueError("mesh interface vertices do not lie on the interface line")
    if np.any(np.diff(pts[:, 0]) <= 0):
        raise ValueError("interface vertices must be strictly increasing in x")
    seg = np.diff(pts, axis=0)
    ell = np.hypot(seg[:, 0], seg[:, 1])
    m = len(iv)
    e0 = np.arange(m - 1)
    e1 = e0 + 1
    rows = np.concatenate([e0, e0, e1, e1])
    cols = np.concatenate([e0, e1, e0, e1])
    mvals = np.concatenate([2 * ell, ell, ell, 2 * ell]) / 6.0
    # each edge is traversed along +tau, so d phi / d tau = -1/ell at the left node, +1/ell at the right
    half = 0.5 * np.ones(m - 1)
    tvals = np.concatenate([-half, half, -half, half])
    mass = csr(sp.coo_matrix((mvals, (rows, cols)), shape=(m, m)))
    mass = csr(0.5 * (mass + mass.T))
    tang = csr(sp.coo_matrix((tvals, (rows, cols)), shape=(m, m)))
    return InterfaceOperator(mass, tang, pts, ell)


def interface_load(iface: InterfaceOperator, g, t: float = 0.0) -> np.ndarray:
    """``<g(., t), phi_i>`` on the interface by 3-point Gauss on each edge."""
    pts = iface.points
    out = np.zeros(iface.size)
    xg, wg = _GAUSS3
    for xi, wi in zip(xg, wg):
        s = 0.5 * (1.0 + xi)
        q = (1 - s) * pts[:-1] + s * pts[1:]
        gq = np.broadcast_to(np.asarray(g(q[:, 0], q[:, 1], t), dtype=float), (len(q),))
        w = 0.5 * wi * iface.edge_lengths * gq
        out[:-1] += w * (1 - s)
        out[1:] += w * s
    return out


def lift_trace(dofmap: DofMap, interface_values) -> np.ndarray:
    """Place interface values on the interface DOFs; zero elsewhere."""
    v = np.asarray(interface_values, dtype=float)
    if v.shape[0] != dofmap.n_interface:
        raise ValueError(f"expected {dofmap.n_interface} interface values, got {v.shape[0]}")
    return dofmap.trace.T @ v


def restrict_trace(dofmap: DofMap, values) -> np.ndarray:
    """Trace of a subdomain field on all interface vertices (zero on eliminated ones)."""
    v = np.asarray(values, dtype=float)
    if v.shape[0] != dofmap.ndof:
        raise ValueError(f"expected {dofmap.ndof} subdomain values, got {v.shape[0]}")
    return dofmap.trace @ v


def interpolate(mesh: Mesh, dofmap: DofMap, f, t: float = 0.0) -> np.ndarray:
    x, y = mesh.vertices[dofmap.vertices].T
    return np.broadcast_to(np.asarray(f(x, y, t), dtype=float), (dofmap.ndof,)).copy()
