"""Structured triangulations of the unit square that conform to a straight interface.

The fluid subdomain lies below the interface and the solid subdomain above it.
A uniform ``n x n`` grid is stretched column by column so that one grid row
lands exactly on the interface line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

FLUID = 0
SOLID = 1

# vertex tags
INTERIOR_F = "InteriorF"
INTERIOR_S = "InteriorS"
DIRICHLET_F = "DirichletF"
DIRICHLET_S = "DirichletS"
NEUMANN_F = "NeumannF"
NEUMANN_S = "NeumannS"
INTERFACE = "Interface"


class BoundaryKind(str, Enum):
    """Which parts of the outer boundary carry homogeneous Dirichlet data.

    ``NEUMANN_SIDES``: bottom and top are Dirichlet, left and right are Neumann.
    ``DIRICHLET_SIDES``: the whole outer boundary is Dirichlet.
    ``NEUMANN_ALL``: no Dirichlet boundary at all (used for conservation checks).
    """

    NEUMANN_SIDES = "neumann-sides"
    DIRICHLET_SIDES = "dirichlet-sides"
    NEUMANN_ALL = "neumann-all"


@dataclass(frozen=True)
class InterfaceSpec:
    """Straight interface from ``(0, y0)`` to ``(1, y1)``.

    Use :meth:`horizontal` for the line ``y = c``.
    """

    y0: float
    y1: float

    def __post_init__(self):
        for y in (self.y0, self.y1):
            if not 0.0 < y < 1.0:
                raise ValueError(f"interface intercepts must lie in (0, 1), got {y}")

    @classmethod
    def horizontal(cls, c: float) -> "InterfaceSpec":
        return cls(c, c)

    @classmethod
    def slanted(cls, y0: float, y1: float) -> "InterfaceSpec":
        return cls(y0, y1)

    @property
    def is_horizontal(self) -> bool:
        return self.y0 == self.y1

    def y_at(self, x):
        return self.y0 + (self.y1 - self.y0) * np.asarray(x, dtype=float)

    @property
    def length(self) -> float:
        return math.hypot(1.0, self.y1 - self.y0)


@dataclass(frozen=True)
class TangentNormal:
    tangent: np.ndarray
    normal: np.ndarray
    a: float
    b: float
    side: np.ndarray


def interface_tangent_normal(spec: InterfaceSpec) -> TangentNormal:
    """Unit tangent (increasing x), fluid outward normal and the split ``n_f = a tau + b s``.

    ``s = (0, 1)`` is the tangent of the vertical sides of the square.
    """
    slope = spec.y1 - spec.y0
    length = math.hypot(1.0, slope)
    tau = np.array([1.0, slope]) / length
    # rotate tau by +90 degrees: points upward, from fluid into solid
    n_f = np.array([-tau[1], tau[0]])
    s = np.array([0.0, 1.0])
    # n_f = a*tau + b*s  ->  2x2 system with columns tau, s
    a, b = np.linalg.solve(np.column_stack([tau, s]), n_f)
    return TangentNormal(tau, n_f, float(a), float(b), s)


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    subdomain: np.ndarray
    vertex_tags: tuple
    interface_vertices: np.ndarray
    h: float
    n: int
    spec: InterfaceSpec
    bc: BoundaryKind
    interface_row: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def interface_edges(self) -> np.ndarray:
        iv = self.interface_vertices
        return np.column_stack([iv[:-1], iv[1:]])

    def triangle_areas(self, subdomain=None) -> np.ndarray:
        tri = self.triangles if subdomain is None else self.triangles[self.subdomain == subdomain]
        p = self.vertices
        d1 = p[tri[:, 1]] - p[tri[:, 0]]
        d2 = p[tri[:, 2]] - p[tri[:, 0]]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def has_tag(self, tag: str) -> np.ndarray:
        return np.array([tag in t for t in self.vertex_tags], dtype=bool)

    def subdomain_vertices(self, subdomain: int) -> np.ndarray:
        """Sorted vertex indices touched by triangles of ``subdomain``."""
        return np.unique(self.triangles[self.subdomain == subdomain])

    def dump(self) -> str:
        """Plain-text dump, one ``vertex x y`` or ``tri i j k sub`` line per entity."""
        lines = [f"vertex {x!r} {y!r}" for x, y in self.vertices]
        names = {FLUID: "fluid", SOLID: "solid"}
        lines += [f"tri {i} {j} {k} {names[int(s)]}"
                  for (i, j, k), s in zip(self.triangles, self.subdomain)]
        return "\n".join(lines) + "\n"


def interface_row_index(n: int, spec: InterfaceSpec) -> int:
    return min(max(math.ceil(n * 0.5 * (spec.y0 + spec.y1)), 1), n - 1)


def build_mesh(n: int, spec: InterfaceSpec, bc: BoundaryKind | str = BoundaryKind.NEUMANN_SIDES) -> Mesh:
    """Triangulate the unit square with ``n`` subdivisions per side, conforming to ``spec``.

    Vertex ``(i, j)`` (column ``i``, row ``j``) has index ``j*(n+1) + i``.  Rows
    below the interface row are spread uniformly over ``[0, y_sigma(x_i)]`` and
    rows above over ``[y_sigma(x_i), 1]``.  Every quad is split along its
    bottom-left to top-right diagonal.
    """
    if int(n) != n or n < 2:
        raise ValueError(f"need at least 2 subdivisions per side, got {n}")
    n = int(n)
    bc = BoundaryKind(bc)
    js = interface_row_index(n, spec)
    if not 0 < js < n:
        raise ValueError("interface row collapses a layer to zero thickness")

    x = np.arange(n + 1) / n
    y_sig = spec.y_at(x)
    if np.any(y_sig <= 0.0) or np.any(y_sig >= 1.0):
        raise ValueError("interface must separate the bottom side from the top side")

    X = np.empty((n + 1, n + 1))
    Y = np.empty((n + 1, n + 1))
    X[:] = x[None, :]
    rows = np.arange(n + 1)[:, None]
    below = rows / js * y_sig[None, :]
    above = y_sig[None, :] + (rows - js) / (n - js) * (1.0 - y_sig[None, :])
    Y[:] = np.where(rows <= js, below, above)
    Y[js, :] = y_sig
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    ii, jj = np.meshgrid(np.arange(n), np.arange(n))
    ii = ii.ravel()
    jj = jj.ravel()
    v00 = jj * (n + 1) + ii
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([v00, v10, v11])
    triangles[1::2] = np.column_stack([v00, v11, v01])
    subdomain = np.repeat(np.where(jj < js, FLUID, SOLID), 2).astype(np.int8)

    tags = _tag_vertices(n, js, bc)
    interface_vertices = js * (n + 1) + np.arange(n + 1)
    return Mesh(vertices, triangles, subdomain, tags, interface_vertices,
                1.0 / n, n, spec, bc, js)


def _tag_vertices(n: int, js: int, bc: BoundaryKind) -> tuple:
    tags = []
    for j in range(n + 1):
        for i in range(n + 1):
            t = set()
            side = i == 0 or i == n
            if j == js:
                t.add(INTERFACE)
                if side:
                    if bc is BoundaryKind.DIRICHLET_SIDES:
                        t |= {DIRICHLET_F, DIRICHLET_S}
                    else:
                        t |= {NEUMANN_F, NEUMANN_S}
            elif j < js:
                if j == 0:
                    t.add(NEUMANN_F if bc is BoundaryKind.NEUMANN_ALL else DIRICHLET_F)
                if side:
                    t.add(DIRICHLET_F if bc is BoundaryKind.DIRICHLET_SIDES else NEUMANN_F)
                if not t:
                    t.add(INTERIOR_F)
            else:
                if j == n:
                    t.add(NEUMANN_S if bc is BoundaryKind.NEUMANN_ALL else DIRICHLET_S)
                if side:
                    t.add(DIRICHLET_S if bc is BoundaryKind.DIRICHLET_SIDES else NEUMANN_S)
                if not t:
                    t.add(INTERIOR_S)
            tags.append(frozenset(t))
    return tuple(tags)
