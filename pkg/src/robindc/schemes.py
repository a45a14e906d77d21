"""Loosely coupled Robin-Robin time stepping with one defect-correction pass.

Each step solves the solid, then the fluid, then updates the interface
multiplier explicitly.  The multiplier lives in the P1 trace space of the
interface, so its update is nodewise and it can be eliminated from the fluid
solve by substitution.  The step matrices never change in time and are
factored once per :class:`StepOperators`.

Schemes
-------
``prediction``           first-order Robin-Robin splitting
``correction``           prediction + one correction pass, second order
``modified-prediction``  the Dirichlet-sides variant with ``n_f = a tau + b s``
``modified-correction``  its corrected counterpart
``monolithic``           implicit Euler on the fully coupled system (reference)
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly as asm
from .mesh import FLUID, SOLID, Mesh, build_mesh, interface_tangent_normal
from .problems import ProblemSpec
from .sparse import CholeskyFactor, LUFactor, PCGSolver, csr

log = logging.getLogger(__name__)

SCHEMES = ("prediction", "correction", "modified-prediction", "modified-correction", "monolithic")

# above this many unknowns per subdomain the SPD solves switch to PCG
DIRECT_LIMIT = 2_000_000


@dataclass(frozen=True, eq=False)
class CoupledState:
    t: float
    w: np.ndarray
    u: np.ndarray
    lam: np.ndarray


class Discretization:
    """P1 spaces, volume and interface operators and loads for one mesh and time step."""

    def __init__(self, mesh: Mesh, problem: ProblemSpec, dt: float):
        if dt <= 0:
            raise ValueError(f"time step must be positive, got {dt}")
        self.mesh = mesh
        self.problem = problem
        self.dt = float(dt)
        self.nu_f = problem.nu_f
        self.nu_s = problem.nu_s
        self.dof_f = asm.build_dofmap(mesh, FLUID)
        self.dof_s = asm.build_dofmap(mesh, SOLID)
        self.M_f = asm.assemble_mass(mesh, self.dof_f)
        self.M_s = asm.assemble_mass(mesh, self.dof_s)
        self.K_f = asm.assemble_stiffness(mesh, self.dof_f, self.nu_f)
        self.K_s = asm.assemble_stiffness(mesh, self.dof_s, self.nu_s)
        self.iface = asm.assemble_interface(mesh)
        self.P_f = self.dof_f.trace
        self.P_s = self.dof_s.trace
        self._loads: dict = {}

    def loads(self, t: float):
        """Fluid and solid load vectors at time ``t`` (zero for unforced problems)."""
        if not self.problem.has_forcing:
            return np.zeros(self.dof_f.ndof), np.zeros(self.dof_s.ndof)
        key = round(t / self.dt)
        if key not in self._loads:
            if len(self._loads) > 3:
                self._loads.pop(next(iter(self._loads)))
            if not hasattr(self, "_load_f"):
                self._load_f = asm.LoadAssembler(self.mesh, self.dof_f)
                self._load_s = asm.LoadAssembler(self.mesh, self.dof_s)
            self._loads[key] = (self._load_f(self.problem.g1, t), self._load_s(self.problem.g2, t))
        return self._loads[key]


class StepOperators(Discretization):
    """Factored step matrices of the split schemes for one ``(mesh, dt, alpha, nu)`` tuple.

    ``a`` and ``b`` are the coefficients of ``n_f = a tau + b s``; the
    unmodified schemes use ``a = 0, b = 1``.
    """

    def __init__(self, mesh: Mesh, problem: ProblemSpec, dt: float, alpha: float | None = None,
                 a: float = 0.0, b: float = 1.0, solver: str = "auto"):
        super().__init__(mesh, problem, dt)
        self.alpha = float(problem.alpha if alpha is None else alpha)
        self.a = float(a)
        self.b = float(b)
        M = self.iface.mass
        G = self.iface.tangential
        self.B_f = csr(self.P_f.T @ M @ self.P_f)
        self.B_s = csr(self.P_s.T @ M @ self.P_s)
        self.G_f = csr(self.P_f.T @ G @ self.P_f)
        self.G_s = csr(self.P_s.T @ G @ self.P_s)

        A_s = self.M_s / self.dt + self.K_s + self.b * self.alpha * self.B_s
        A_f = self.M_f / self.dt + self.K_f + self.alpha * self.B_f
        if self.a != 0.0:
            A_s = A_s + self.a * self.nu_s * self.G_s
            A_f = A_f - self.a * self.nu_f * self.G_f
        self.A_s = csr(A_s)
        self.A_f = csr(A_f)
        self.n_factorizations = 0
        self.solve_s = self._factor(self.A_s, solver)
        self.solve_f = self._factor(self.A_f, solver)

    @property
    def symmetric(self) -> bool:
        return self.a == 0.0

    def _factor(self, A, solver):
        self.n_factorizations += 1
        if not self.symmetric:
            return LUFactor(A).solve
        if solver == "pcg" or (solver == "auto" and A.shape[0] > DIRECT_LIMIT):
            return PCGSolver(A).solve
        return CholeskyFactor(A).solve


def _advance(ops: StepOperators, state: CoupledState, load_f, load_s,
             extra_f=None, extra_s=None, extra_lam=None) -> CoupledState:
    """One split step; the ``extra_*`` terms are the correction right-hand sides."""
    dt, alpha, M = ops.dt, ops.alpha, ops.iface.mass
    rhs_s = ops.M_s @ state.w / dt + ops.P_s.T @ (M @ (ops.b * alpha * (ops.P_f @ state.u) - state.lam)) + load_s
    if extra_s is not None:
        rhs_s = rhs_s + extra_s
    w = ops.solve_s(rhs_s)
    tr_w = ops.P_s @ w

    lam_base = state.lam if extra_lam is None else state.lam + extra_lam
    rhs_f = ops.M_f @ state.u / dt + ops.P_f.T @ (M @ (lam_base + alpha * tr_w)) + load_f
    if extra_f is not None:
        rhs_f = rhs_f + extra_f
    u = ops.solve_f(rhs_f)
    lam = lam_base - alpha * (ops.P_f @ u - tr_w)
    return CoupledState(state.t + dt, w, u, lam)


def prediction_step(ops: StepOperators, state: CoupledState) -> CoupledState:
    """Robin-Robin step: solid solve, fluid solve, explicit multiplier update."""
    load_f, load_s = ops.loads(state.t + ops.dt)
    return _advance(ops, state, load_f, load_s)


def correction_rhs(ops: StepOperators, pred_n: CoupledState, pred_np1: CoupledState):
    """Extra right-hand sides ``(solid, fluid, multiplier)`` built from two prediction levels."""
    if pred_n is None or pred_np1 is None:
        raise ValueError("correction needs the prediction states at t_n and t_{n+1}")
    M = ops.iface.mass
    a, b, alpha = ops.a, ops.b, ops.alpha
    w0, w0n = pred_np1.w, pred_n.w
    u0, u0n = pred_np1.u, pred_n.u
    lam0, lam0n = pred_np1.lam, pred_n.lam
    w0h = 0.5 * (w0 + w0n)
    u0h = 0.5 * (u0 + u0n)
    lam0h = 0.5 * (lam0 + lam0n)

    extra_s = (ops.K_s @ w0 + b * alpha * (ops.B_s @ (w0 - w0n)) + ops.P_s.T @ (M @ lam0n)
               - ops.K_s @ w0h - ops.P_s.T @ (M @ lam0h))
    extra_f = (ops.K_f @ u0 - ops.P_f.T @ (M @ lam0)
               - ops.K_f @ u0h + ops.P_f.T @ (M @ lam0h))
    if a != 0.0:
        extra_s = extra_s + a * ops.nu_s * (ops.G_s @ (w0 - w0h))
        extra_f = extra_f - a * ops.nu_f * (ops.G_f @ (u0 - u0h))
    return extra_s, extra_f, lam0 - lam0n


def correction_step(ops: StepOperators, pred_n: CoupledState, pred_np1: CoupledState,
                    corr_n: CoupledState, augment: bool = True) -> CoupledState:
    """Defect-correction step: same matrices as the prediction, augmented right-hand sides.

    Forcing enters as the average of the loads at ``t_n`` and ``t_{n+1}``.
    With ``augment=False`` this is exactly :func:`prediction_step`.
    """
    if not augment:
        return prediction_step(ops, corr_n)
    extra_s, extra_f, extra_lam = correction_rhs(ops, pred_n, pred_np1)
    if ops.problem.has_forcing:
        lf0, ls0 = ops.loads(corr_n.t)
        lf1, ls1 = ops.loads(corr_n.t + ops.dt)
        load_f, load_s = 0.5 * (lf0 + lf1), 0.5 * (ls0 + ls1)
    else:
        load_f, load_s = ops.loads(corr_n.t + ops.dt)
    return _advance(ops, corr_n, load_f, load_s, extra_f, extra_s, extra_lam)


def _check_modified(ops: StepOperators):
    if ops.nu_f != ops.nu_s:
        raise ValueError("the modified scheme needs nu_f == nu_s")


def modified_prediction_step(ops: StepOperators, state: CoupledState) -> CoupledState:
    _check_modified(ops)
    return prediction_step(ops, state)


def modified_correction_step(ops: StepOperators, pred_n, pred_np1, corr_n) -> CoupledState:
    _check_modified(ops)
    return correction_step(ops, pred_n, pred_np1, corr_n)


def modified_operators(mesh: Mesh, problem: ProblemSpec, dt: float, alpha: float | None = None,
                       solver: str = "auto") -> StepOperators:
    if problem.nu_f != problem.nu_s:
        raise ValueError("the modified scheme needs nu_f == nu_s")
    tn = interface_tangent_normal(problem.interface)
    return StepOperators(mesh, problem, dt, alpha, a=tn.a, b=tn.b, solver=solver)


class MonolithicOperators(Discretization):
    """Implicit Euler for the coupled system with the multiplier as an unknown.

    Multiplier unknowns sit on the interface vertices that are free in both
    subdomains; on eliminated (Dirichlet) endpoints the multiplier is zero.
    """

    def __init__(self, mesh: Mesh, problem: ProblemSpec, dt: float):
        super().__init__(mesh, problem, dt)
        m = self.iface.size
        free_f = np.zeros(m, bool)
        free_f[self.dof_f.interface_positions] = True
        free_s = np.zeros(m, bool)
        free_s[self.dof_s.interface_positions] = True
        self.active = np.flatnonzero(free_f & free_s)
        na = len(self.active)
        self.Q = sp.csr_matrix((np.ones(na), (np.arange(na), self.active)), shape=(na, m))
        M = self.iface.mass
        C_s = csr(self.P_s.T @ M @ self.Q.T)   # <lam, z>
        C_f = csr(self.P_f.T @ M @ self.Q.T)   # <lam, v>
        self.A = sp.bmat([[self.M_s / self.dt + self.K_s, None, C_s],
                          [None, self.M_f / self.dt + self.K_f, -C_f],
                          [-C_s.T, C_f.T, None]], format="csc")
        try:
            self._lu = spla.splu(self.A)
        except RuntimeError as exc:
            raise np.linalg.LinAlgError(f"monolithic system is singular: {exc}") from None
        self.sizes = (self.dof_s.ndof, self.dof_f.ndof, na)


def monolithic_step(ops: MonolithicOperators, state: CoupledState) -> CoupledState:
    ns, nf, nl = ops.sizes
    load_f, load_s = ops.loads(state.t + ops.dt)
    rhs = np.concatenate([ops.M_s @ state.w / ops.dt + load_s,
                          ops.M_f @ state.u / ops.dt + load_f,
                          np.zeros(nl)])
    x = ops._lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise np.linalg.LinAlgError("monolithic solve produced non-finite values")
    lam = ops.Q.T @ x[ns + nf:]
    return CoupledState(state.t + ops.dt, x[:ns], x[ns:ns + nf], lam)


def initial_state(mesh: Mesh, problem: ProblemSpec, dof_f, dof_s, iface, modified: bool = False) -> CoupledState:
    """Nodal interpolants of the initial data and the L2(interface) projection of the initial flux."""
    w = asm.interpolate(mesh, dof_s, problem.w, 0.0)
    u = asm.interpolate(mesh, dof_f, problem.u, 0.0)
    rhs = asm.interface_load(iface, problem.multiplier_target(modified), 0.0)
    lam = spla.spsolve(iface.mass.tocsc(), rhs)
    return CoupledState(0.0, w, u, np.atleast_1d(lam))


def step_count(T: float, dt: float) -> int:
    N = T / dt
    if abs(N - round(N)) > 1e-9 * max(1.0, abs(N)):
        raise ValueError(f"T/dt = {N} is not an integer")
    return int(round(N))


@dataclass
class Trajectory:
    scheme: str
    mesh: Mesh
    ops: object
    prediction: list = field(default_factory=list)
    correction: list | None = None

    @property
    def final(self) -> CoupledState:
        return (self.correction or self.prediction)[-1]


def make_operators(scheme: str, mesh: Mesh, problem: ProblemSpec, dt: float,
                   alpha: float | None = None, solver: str = "auto"):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if scheme == "monolithic":
        if alpha is not None:
            problem = problem.with_alpha(alpha)
        return MonolithicOperators(mesh, problem, dt)
    if scheme.startswith("modified"):
        return modified_operators(mesh, problem, dt, alpha, solver)
    return StepOperators(mesh, problem, dt, alpha, solver=solver)


def run_trajectory(scheme: str, problem: ProblemSpec, dt: float, T: float | None = None,
                   mesh: Mesh | None = None, alpha: float | None = None, keep: str = "all",
                   observer: Callable | None = None, solver: str = "auto",
                   ops=None) -> Trajectory:
    """Advance ``scheme`` from t = 0 to ``T`` (default ``problem.T``).

    The mesh defaults to ``h = dt``.  For correction schemes the prediction
    trajectory is advanced in lockstep.  ``keep="last2"`` retains only the
    two most recent states of each trajectory; ``observer(pred_n, pred_np1,
    corr_n, corr_np1)`` is called after every step (``corr_*`` are ``None``
    for non-correction schemes).  Prebuilt ``ops`` (from :func:`make_operators`)
    may be passed in; their mesh then takes precedence.
    """
    T = problem.T if T is None else T
    N = step_count(T, dt)
    if ops is not None:
        mesh = ops.mesh
    if mesh is None:
        n = round(1.0 / dt)
        if abs(n * dt - 1.0) > 1e-9:
            raise ValueError(f"h = dt needs 1/dt integral, got dt = {dt}")
        mesh = build_mesh(n, problem.interface, problem.bc)
    if ops is None:
        ops = make_operators(scheme, mesh, problem, dt, alpha, solver)
    elif ops.dt != dt:
        raise ValueError(f"operators were built for dt = {ops.dt}, not {dt}")
    modified = scheme.startswith("modified")
    if isinstance(ops, MonolithicOperators):
        init = initial_state(mesh, problem, ops.dof_f, ops.dof_s, ops.iface)
        init = CoupledState(0.0, init.w, init.u, ops.Q.T @ (ops.Q @ init.lam))
        step = monolithic_step
    else:
        init = initial_state(mesh, problem, ops.dof_f, ops.dof_s, ops.iface, modified)
        step = prediction_step
    corrected = scheme.endswith("correction")
    traj = Trajectory(scheme, mesh, ops, [init], [init] if corrected else None)

    pred, corr = init, init
    for _ in range(N):
        pred_next = step(ops, pred)
        corr_next = correction_step(ops, pred, pred_next, corr) if corrected else None
        if observer is not None:
            observer(pred, pred_next, corr if corrected else None, corr_next)
        traj.prediction.append(pred_next)
        if corrected:
            traj.correction.append(corr_next)
        if keep == "last2":
            del traj.prediction[:-2]
            if corrected:
                del traj.correction[:-2]
        pred, corr = pred_next, corr_next
    log.debug("%s: %d steps on n=%d", scheme, N, mesh.n)
    return traj


def state_norms(ops, state: CoupledState) -> tuple[float, float, float]:
    """L2 norms of ``w``, ``u`` and the multiplier."""
    nw = math.sqrt(max(state.w @ (ops.M_s @ state.w), 0.0))
    nu = math.sqrt(max(state.u @ (ops.M_f @ state.u), 0.0))
    nl = math.sqrt(max(state.lam @ (ops.iface.mass @ state.lam), 0.0))
    return nw, nu, nl
