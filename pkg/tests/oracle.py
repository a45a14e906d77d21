"""Dense block-system oracles for the split schemes (test helper)."""
import numpy as np


def dense(A):
    return A.toarray() if hasattr(A, "toarray") else np.asarray(A)


def block_step(ops, wn, un, lamn, load_f, load_s, extra_s=0.0, extra_f=0.0, extra_lam=0.0):
    """Solve the coupled (w, u, lambda) equations of one split step as a single dense system.

    Solid:      (M_s/dt + K_s + b alpha B_s + a nu G_s) w
                    = M_s wn/dt + P_s^T M (b alpha P_f un - lamn) + load_s + extra_s
    Fluid:      (M_f/dt + K_f - a nu G_f) u - P_f^T M lam = M_f un/dt + load_f + extra_f
    Multiplier: M (lam - lamn - extra_lam + alpha (P_f u - P_s w)) = 0
    """
    dt, al, a, b = ops.dt, ops.alpha, ops.a, ops.b
    Ms, Mf, Ks, Kf = map(dense, (ops.M_s, ops.M_f, ops.K_s, ops.K_f))
    M, G = dense(ops.iface.mass), dense(ops.iface.tangential)
    Ps, Pf = dense(ops.P_s), dense(ops.P_f)
    ns, nf, m = Ms.shape[0], Mf.shape[0], M.shape[0]
    A = np.zeros((ns + nf + m, ns + nf + m))
    S, F, L = slice(0, ns), slice(ns, ns + nf), slice(ns + nf, None)
    A[S, S] = Ms / dt + Ks + b * al * Ps.T @ M @ Ps + a * ops.nu_s * Ps.T @ G @ Ps
    A[F, F] = Mf / dt + Kf - a * ops.nu_f * Pf.T @ G @ Pf
    A[F, L] = -Pf.T @ M
    A[L, S] = -al * M @ Ps
    A[L, F] = al * M @ Pf
    A[L, L] = M
    rhs = np.concatenate([Ms @ wn / dt + Ps.T @ M @ (b * al * Pf @ un - lamn) + load_s + extra_s,
                          Mf @ un / dt + load_f + extra_f,
                          M @ (lamn + extra_lam)])
    x = np.linalg.solve(A, rhs)
    return x[S], x[F], x[L]


def correction_extras(ops, p0, p1):
    """Correction right-hand-side terms, written out from the dense matrices."""
    al, a, b = ops.alpha, ops.a, ops.b
    Ks, Kf = dense(ops.K_s), dense(ops.K_f)
    M, G = dense(ops.iface.mass), dense(ops.iface.tangential)
    Ps, Pf = dense(ops.P_s), dense(ops.P_f)
    wh, uh, lh = (p0.w + p1.w) / 2, (p0.u + p1.u) / 2, (p0.lam + p1.lam) / 2
    es = (Ks @ p1.w + b * al * Ps.T @ M @ Ps @ (p1.w - p0.w) + Ps.T @ M @ p0.lam
          - Ks @ wh - Ps.T @ M @ lh + a * ops.nu_s * Ps.T @ G @ Ps @ (p1.w - wh))
    ef = (Kf @ p1.u - Pf.T @ M @ p1.lam - Kf @ uh + Pf.T @ M @ lh
          - a * ops.nu_f * Pf.T @ G @ Pf @ (p1.u - uh))
    return es, ef, p1.lam - p0.lam
