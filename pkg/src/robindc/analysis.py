"""Error norms, convergence rates and prediction-step diagnostics.

All errors are measured against the nodal interpolant of the exact solution,
using the assembled mass/stiffness matrices as quadratic forms.  Subdomain
norms include the Dirichlet vertices (where both fields vanish).
"""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import assembly as asm
from .mesh import FLUID, SOLID, BoundaryKind, build_mesh
from .problems import ProblemSpec
from .schemes import SCHEMES, CoupledState, make_operators, run_trajectory

log = logging.getLogger(__name__)


class ErrorNorms:
    """Quadratic forms on the full (non-eliminated) P1 spaces of a discretization."""

    def __init__(self, ops, problem: ProblemSpec, modified: bool = False):
        mesh = ops.mesh
        self.ops = ops
        self.problem = problem
        self.full_f = asm.build_dofmap(mesh, FLUID, eliminate_dirichlet=False)
        self.full_s = asm.build_dofmap(mesh, SOLID, eliminate_dirichlet=False)
        self.M_f = asm.assemble_mass(mesh, self.full_f)
        self.M_s = asm.assemble_mass(mesh, self.full_s)
        self.K_f = asm.assemble_stiffness(mesh, self.full_f, 1.0)
        self.K_s = asm.assemble_stiffness(mesh, self.full_s, 1.0)
        self.M_sigma = ops.iface.mass
        self._emb_f = self.full_f.dof_of_vertex[ops.dof_f.vertices]
        self._emb_s = self.full_s.dof_of_vertex[ops.dof_s.vertices]
        self._x, self._y = ops.iface.points.T
        self.target = problem.multiplier_target(modified)
        self._exact_cache: dict = {}

    def _exact(self, t: float):
        key = round(t / self.ops.dt)
        if key not in self._exact_cache:
            if len(self._exact_cache) > 4:
                self._exact_cache.pop(next(iter(self._exact_cache)))
            mesh = self.ops.mesh
            self._exact_cache[key] = (asm.interpolate(mesh, self.full_f, self.problem.u, t),
                                      asm.interpolate(mesh, self.full_s, self.problem.w, t),
                                      np.asarray(self.target(self._x, self._y, t), dtype=float)
                                      * np.ones_like(self._x))
        return self._exact_cache[key]

    def errors(self, state: CoupledState):
        """``(U, W, Lambda)``: exact minus discrete, on the full spaces."""
        u_ex, w_ex, l_ex = self._exact(state.t)
        U = u_ex.copy()
        U[self._emb_f] -= state.u
        W = w_ex.copy()
        W[self._emb_s] -= state.w
        return U, W, l_ex - state.lam

    @staticmethod
    def _q(A, v) -> float:
        return math.sqrt(max(float(v @ (A @ v)), 0.0))

    def l2_f(self, v):
        return self._q(self.M_f, v)

    def l2_s(self, v):
        return self._q(self.M_s, v)

    def h1_f(self, v):
        return self._q(self.K_f, v)

    def h1_s(self, v):
        return self._q(self.K_s, v)

    def l2_sigma(self, v):
        return self._q(self.M_sigma, v)

    def trace_f(self, v):
        return self.full_f.trace @ v

    def trace_s(self, v):
        return self.full_s.trace @ v


@dataclass
class ErrorRecord:
    dt: float
    e_u1: float
    e_w1: float
    e_du1: float
    e_lambda: float
    e_1lambda: float
    e_u0: float
    e_w0: float
    e_du0: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{f.name} = {v} is not a finite non-negative number")


def error_record(norms: ErrorNorms, pred_N: CoupledState, pred_prev: CoupledState,
                 corr_N: CoupledState | None = None) -> ErrorRecord:
    """Final-time errors; the multiplier errors always refer to the prediction multiplier."""
    corr_N = pred_N if corr_N is None else corr_N
    U1, W1, _ = norms.errors(corr_N)
    U0, W0, L0 = norms.errors(pred_N)
    _, _, L0_prev = norms.errors(pred_prev)
    return ErrorRecord(dt=norms.ops.dt,
                       e_u1=norms.l2_f(U1), e_w1=norms.l2_s(W1), e_du1=norms.h1_f(U1),
                       e_lambda=norms.l2_sigma(L0), e_1lambda=norms.l2_sigma(L0 - L0_prev),
                       e_u0=norms.l2_f(U0), e_w0=norms.l2_s(W0), e_du0=norms.h1_f(U0))


def error_norms(traj, problem: ProblemSpec) -> ErrorRecord:
    """Errors of a finished trajectory (see :func:`robindc.schemes.run_trajectory`)."""
    norms = ErrorNorms(traj.ops, problem, traj.scheme.startswith("modified"))
    corr = traj.correction[-1] if traj.correction else None
    return error_record(norms, traj.prediction[-1], traj.prediction[-2], corr)


@dataclass
class DiagnosticSeries:
    """Per-step time differences of the prediction error.

    Index ``n`` refers to the difference between levels ``n+1`` and ``n``.
    ``second_difference[n]`` (defined from ``n = 1``) is
    ``nu_f |grad(U^{n+1} - 2U^n + U^{n-1})|^2 / dt^4``.
    """

    dt: float
    nu_f: float
    nu_s: float
    du_l2: list = field(default_factory=list)
    dw_l2: list = field(default_factory=list)
    du_grad: list = field(default_factory=list)
    dw_grad: list = field(default_factory=list)
    dlam: list = field(default_factory=list)
    second_difference: list = field(default_factory=list)

    @property
    def difference_energy(self) -> float:
        """max|dW|^2 + max|dU|^2 + dt sum(nu_f |grad dU|^2 + nu_s |grad dW|^2)."""
        if not self.du_l2:
            return 0.0
        du, dw = np.array(self.du_l2), np.array(self.dw_l2)
        gu, gw = np.array(self.du_grad), np.array(self.dw_grad)
        return float(dw.max() ** 2 + du.max() ** 2
                     + self.dt * np.sum(self.nu_f * gu**2 + self.nu_s * gw**2))

    @property
    def second_difference_sum(self) -> float:
        return float(self.dt * np.sum(self.second_difference))

    @property
    def multiplier_difference_sum(self) -> float:
        """dt sum |Lambda^{n+1} - Lambda^n|^2 on the interface."""
        return float(self.dt * np.sum(np.square(self.dlam)))

    @property
    def max_gradient_difference(self) -> float:
        """max_n |grad(U^{n+1} - U^n)| over the fluid domain."""
        return float(max(self.du_grad, default=0.0))

    @property
    def max_l2_difference(self) -> float:
        return float(max(self.du_l2, default=0.0))

    def summary(self) -> dict:
        return {"max_du_l2": self.max_l2_difference,
                "max_dw_l2": float(max(self.dw_l2, default=0.0)),
                "max_du_grad": self.max_gradient_difference,
                "difference_energy": self.difference_energy,
                "second_difference_sum": self.second_difference_sum,
                "multiplier_difference_sum": self.multiplier_difference_sum}


class PredictionDiagnostics:
    """Streaming accumulator for :class:`DiagnosticSeries`; feed consecutive prediction states."""

    def __init__(self, norms: ErrorNorms):
        self.norms = norms
        p = norms.problem
        self.series = DiagnosticSeries(norms.ops.dt, p.nu_f, p.nu_s)
        self._prev_dU = None

    def update(self, pred_n: CoupledState, pred_np1: CoupledState):
        nm, s = self.norms, self.series
        U0, W0, L0 = nm.errors(pred_n)
        U1, W1, L1 = nm.errors(pred_np1)
        dU, dW = U1 - U0, W1 - W0
        s.du_l2.append(nm.l2_f(dU))
        s.dw_l2.append(nm.l2_s(dW))
        s.du_grad.append(nm.h1_f(dU))
        s.dw_grad.append(nm.h1_s(dW))
        s.dlam.append(nm.l2_sigma(L1 - L0))
        if self._prev_dU is not None:
            s.second_difference.append(s.nu_f * nm.h1_f(dU - self._prev_dU) ** 2 / s.dt**4)
        self._prev_dU = dU


def prediction_diagnostics(traj, problem: ProblemSpec) -> DiagnosticSeries:
    """Time-difference diagnostics of a stored prediction trajectory."""
    acc = PredictionDiagnostics(ErrorNorms(traj.ops, problem, traj.scheme.startswith("modified")))
    for a, b in zip(traj.prediction[:-1], traj.prediction[1:]):
        acc.update(a, b)
    return acc.series


def energy_Z(norms: ErrorNorms, U, W, Lam, dt: float, alpha: float) -> float:
    """Discrete energy of a correction error triple."""
    tu = norms.trace_f(U)
    return (0.5 * norms.l2_s(W) ** 2 + 0.5 * norms.l2_f(U) ** 2
            + 0.5 * dt * alpha * norms.l2_sigma(tu) ** 2
            + 0.5 * dt / alpha * norms.l2_sigma(Lam) ** 2)


def energy_S(norms: ErrorNorms, U_n, W_n, L_n, U, W, L, dt: float, alpha: float) -> float:
    """Discrete dissipation between two consecutive correction error triples."""
    p = norms.problem
    jump = norms.trace_f(U_n - U) + (L_n - L) / alpha
    return (dt * (p.nu_f * norms.h1_f(U) ** 2 + p.nu_s * norms.h1_s(W) ** 2)
            + 0.5 * (norms.l2_s(W - W_n) ** 2 + norms.l2_f(U - U_n) ** 2)
            + 0.5 * alpha * dt * norms.l2_sigma(jump) ** 2)


@dataclass
class EnergySeries:
    Z: list = field(default_factory=list)
    S: list = field(default_factory=list)
    residual: list = field(default_factory=list)


class EnergyTracker:
    """Streams ``Z^n``, ``S^n`` and the residual of the one-step energy balance.

    The residual is what is left of ``Z^{n+1} + S^{n+1} - Z^n`` after removing
    every right-hand-side term that involves only discrete errors; it holds
    the consistency functional of the exact solution and is monitored only.
    """

    def __init__(self, norms: ErrorNorms, alpha: float):
        self.norms = norms
        self.alpha = alpha
        self.dt = norms.ops.dt
        self.series = EnergySeries()

    def start(self, corr0: CoupledState):
        U, W, L = self.norms.errors(corr0)
        self.series.Z.append(energy_Z(self.norms, U, W, L, self.dt, self.alpha))

    def update(self, pred_n, pred_np1, corr_n, corr_np1):
        nm, dt, alpha, p = self.norms, self.dt, self.alpha, self.norms.problem
        if not self.series.Z:
            self.start(corr_n)
        U1n, W1n, L1n = nm.errors(corr_n)
        U1, W1, L1 = nm.errors(corr_np1)
        U0n, W0n, L0n = nm.errors(pred_n)
        U0, W0, L0 = nm.errors(pred_np1)
        Z = energy_Z(nm, U1, W1, L1, dt, alpha)
        S = energy_S(nm, U1n, W1n, L1n, U1, W1, L1, dt, alpha)
        dL0 = L0 - L0n
        M = nm.M_sigma
        tW1, tU1, tU1n = nm.trace_s(W1), nm.trace_f(U1), nm.trace_f(U1n)
        F = -tW1 @ (M @ (-dL0)) + (tU1n - tU1) @ (M @ (-dL0))
        dW0, dU0 = W0 - W0n, U0 - U0n
        R1 = (0.5 * p.nu_s * (dW0 @ (nm.K_s @ W1)) + alpha * (nm.trace_s(dW0) @ (M @ tW1))
              - 0.5 * (dL0 @ (M @ tW1)))
        R2 = 0.5 * p.nu_f * (dU0 @ (nm.K_f @ U1)) - 0.5 * (dL0 @ (M @ tU1))
        rest = dt / alpha * (L1 @ (M @ dL0))
        self.series.residual.append(Z + S - self.series.Z[-1] - dt * F - dt * (R1 + R2) - rest)
        self.series.Z.append(Z)
        self.series.S.append(S)


def energy_series(traj, problem: ProblemSpec, alpha: float | None = None) -> EnergySeries:
    if not traj.correction:
        raise ValueError("energy series needs a correction trajectory")
    alpha = traj.ops.alpha if alpha is None else alpha
    tracker = EnergyTracker(ErrorNorms(traj.ops, problem), alpha)
    tracker.start(traj.correction[0])
    P, C = traj.prediction, traj.correction
    for n in range(len(C) - 1):
        tracker.update(P[n], P[n + 1], C[n], C[n + 1])
    return tracker.series


def rates(errors) -> list:
    """``log2(e_{k-1} / e_k)`` for consecutive levels; ``None`` for the first level."""
    out = [None]
    for prev, cur in zip(errors[:-1], errors[1:]):
        if prev is None or cur is None or prev <= 0 or cur <= 0:
            out.append(None)
        else:
            out.append(math.log2(prev / cur))
    return out


def fitted_rate(levels, values) -> float | None:
    """Least-squares slope of ``-log2(value)`` against the level index ``k`` (dt = 2^-k).

    ``None`` when a value is zero or missing, so no rate is defined.
    """
    if any(v is None or not v > 0 for v in values):
        return None
    k = np.asarray(levels, dtype=float)
    v = -np.log2(np.asarray(values, dtype=float))
    return float(np.polyfit(k, v, 1)[0])


TABLE_COLUMNS = ("e_u1", "e_w1", "e_lambda", "e_1lambda", "e_du1")
_MD_HEADER = {"e_u1": "e_u1", "e_w1": "e_w1", "e_lambda": "e_λ", "e_1lambda": "e_1,λ", "e_du1": "e_du1"}


@dataclass
class LevelResult:
    level: int
    record: ErrorRecord | None = None
    diagnostics: DiagnosticSeries | None = None
    energy: EnergySeries | None = None
    error: str | None = None


@dataclass
class ConvergenceReport:
    problem: str
    scheme: str
    levels: list
    results: list

    def column(self, name: str) -> list:
        return [getattr(r.record, name) if r.record else None for r in self.results]

    def rates(self, name: str) -> list:
        return rates(self.column(name))

    @property
    def failures(self) -> list:
        return [(r.level, r.error) for r in self.results if r.error]

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        head = ["dt"]
        for c in TABLE_COLUMNS:
            head += [c, "rate"]
        wr.writerow(head)
        cols = {c: (self.column(c), self.rates(c)) for c in TABLE_COLUMNS}
        for i, r in enumerate(self.results):
            row = [f"{0.5 ** r.level:.10g}"]
            for c in TABLE_COLUMNS:
                e, rt = cols[c][0][i], cols[c][1][i]
                row += ["" if e is None else f"{e:.10g}", "" if rt is None else f"{rt:.10g}"]
            wr.writerow(row)
        return buf.getvalue()

    def to_markdown(self) -> str:
        head = "| Δt | " + " | ".join(f"{_MD_HEADER[c]} | rates" for c in TABLE_COLUMNS) + " |"
        sep = "|" + "---|" * (1 + 2 * len(TABLE_COLUMNS))
        lines = [head, sep]
        cols = {c: (self.column(c), self.rates(c)) for c in TABLE_COLUMNS}
        for i, r in enumerate(self.results):
            cells = [f"(1/2)^{r.level}"]
            for c in TABLE_COLUMNS:
                e, rt = cols[c][0][i], cols[c][1][i]
                cells.append("failed" if e is None else f"{e:.2e}")
                cells.append("--" if rt is None else f"{rt:.2f}")
            lines.append("| " + " | ".join(cells) + " |")
        for level, err in self.failures:
            lines.append(f"\nlevel {level} failed: {err}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"problem": self.problem, "scheme": self.scheme, "levels": list(self.levels),
                "records": [asdict(r.record) if r.record else None for r in self.results],
                "rates": {c: self.rates(c) for c in TABLE_COLUMNS + ("e_u0", "e_w0", "e_du0")},
                "failures": self.failures}


def check_scheme(problem: ProblemSpec, scheme: str):
    """Reject scheme/problem combinations that are not defined."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if scheme.startswith("modified"):
        if problem.bc != BoundaryKind.DIRICHLET_SIDES:
            raise ValueError("the modified schemes are defined for Dirichlet sides only")
        if problem.nu_f != problem.nu_s:
            raise ValueError("the modified schemes need nu_f == nu_s")


def run_level(problem: ProblemSpec, scheme: str, level: int, alpha: float | None = None,
              diagnostics: bool = False, energy: bool = False, solver: str = "auto") -> LevelResult:
    """Run one refinement level with ``dt = h = 2^-level`` and collect its errors.

    Failures (singular systems, non-finite values) are reported in the result
    rather than raised.
    """
    dt = 0.5 ** level
    modified = scheme.startswith("modified")
    try:
        mesh = build_mesh(2 ** level, problem.interface, problem.bc)
        ops = make_operators(scheme, mesh, problem, dt, alpha, solver)
        norms = ErrorNorms(ops, problem, modified)
        diag = PredictionDiagnostics(norms) if diagnostics else None
        tracker = None
        if energy and scheme == "correction":
            tracker = EnergyTracker(norms, ops.alpha)

        def observer(pred_n, pred_np1, corr_n, corr_np1):
            if diag is not None:
                diag.update(pred_n, pred_np1)
            if tracker is not None:
                tracker.update(pred_n, pred_np1, corr_n, corr_np1)

        traj = run_trajectory(scheme, problem, dt, alpha=alpha, keep="last2",
                              observer=observer, solver=solver, ops=ops)
        corr = traj.correction[-1] if traj.correction else None
        record = error_record(norms, traj.prediction[-1], traj.prediction[-2], corr)
    except (np.linalg.LinAlgError, FloatingPointError, ValueError, RuntimeError) as exc:
        log.warning("level %d failed: %s", level, exc)
        return LevelResult(level, error=f"{type(exc).__name__}: {exc}")
    return LevelResult(level, record,
                       diag.series if diag is not None else None,
                       tracker.series if tracker is not None else None)


def convergence_study(problem: ProblemSpec, scheme: str, levels, alpha: float | None = None,
                      threads: int = 1, diagnostics: bool = False, energy: bool = False,
                      solver: str = "auto") -> ConvergenceReport:
    """Run every level (``dt = h = 2^-k``) and tabulate errors and rates."""
    levels = list(levels)
    if len(levels) < 2:
        raise ValueError("a convergence study needs at least two levels")
    if any(b <= a for a, b in zip(levels[:-1], levels[1:])):
        raise ValueError("levels must be strictly increasing")
    check_scheme(problem, scheme)

    def one(k):
        return run_level(problem, scheme, k, alpha, diagnostics, energy, solver)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, levels))
    else:
        results = [one(k) for k in levels]
    return ConvergenceReport(problem.label, scheme, levels, results)


@dataclass(frozen=True)
class RateRule:
    """Observed rates of ``column`` over the ``pairs`` finest level pairs must lie in ``[lo, hi]``."""

    label: str
    column: str
    lo: float = -math.inf
    hi: float = math.inf
    pairs: int = 1

    def check(self, report: ConvergenceReport) -> tuple[bool, str]:
        r = report.rates(self.column)[1:][-self.pairs:]
        ok = len(r) == self.pairs and all(x is not None and self.lo <= x <= self.hi for x in r)
        shown = ", ".join("--" if x is None else f"{x:.2f}" for x in r)
        return ok, f"{self.column} rates [{shown}] in [{self.lo}, {self.hi}]"


def _band(label, cols, lo, hi, pairs=1):
    return [RateRule(label, c, lo, hi, pairs) for c in cols]


RATE_RULES = {
    ("neumann-slanted", "correction"):
        _band("neumann-second-order", ("e_u1", "e_w1", "e_du1", "e_1lambda"), 1.8, 2.3, 3)
        + _band("neumann-multiplier", ("e_lambda",), 0.9, 1.4, 3),
    ("two-viscosity", "correction"):
        _band("viscosity-second-order", ("e_u1", "e_w1", "e_du1"), 1.9, 2.1)
        + _band("viscosity-multiplier", ("e_lambda",), 0.9, 1.1)
        + _band("viscosity-multiplier-difference", ("e_1lambda",), 1.8, 2.2)
        + _band("viscosity-prediction-first-order", ("e_u0",), 0.8, 1.2, 2),
    ("two-viscosity", "prediction"):
        _band("viscosity-prediction-first-order", ("e_u0",), 0.8, 1.2, 2),
    ("dirichlet-slanted", "correction"):
        _band("dirichlet-endpoint-degradation", ("e_lambda",), hi=0.7, pairs=2, lo=-math.inf)
        + _band("dirichlet-gradient-degradation", ("e_du1",), hi=1.5, lo=-math.inf),
    ("dirichlet-slanted", "modified-correction"):
        _band("dirichlet-modified-second-order", ("e_u1", "e_du1"), 1.9, math.inf)
        + _band("dirichlet-modified-multiplier-difference", ("e_1lambda",), 1.9, 2.3),
}


def acceptance_checks(report: ConvergenceReport) -> list:
    """``(label, passed, detail)`` for every rate rule registered for this problem and scheme."""
    rules = RATE_RULES.get((report.problem, report.scheme), [])
    return [(rule.label,) + rule.check(report) for rule in rules]
