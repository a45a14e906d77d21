"""Sparse matrices and reusable direct factorizations.

Matrices are ``scipy.sparse.csr_matrix`` objects in canonical form (sorted
column indices, no duplicate entries).  The symmetric positive definite step
operators are factored once with :func:`factorize` and the factor is reused
for every time step.
"""
from __future__ import annotations

import threading

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class NotSPDError(np.linalg.LinAlgError):
    """Raised when a Cholesky factorization meets a non-positive pivot."""


_counter_lock = threading.Lock()
_factorizations = 0


def factorization_count() -> int:
    """Number of factorizations performed in this process so far."""
    return _factorizations


def _bump():
    global _factorizations
    with _counter_lock:
        _factorizations += 1


def csr(A) -> sp.csr_matrix:
    """Return ``A`` as a canonical CSR matrix."""
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    return A


def is_symmetric(A) -> bool:
    """Exact (entrywise) symmetry test."""
    A = csr(A)
    D = A - A.T
    D.eliminate_zeros()
    return D.nnz == 0


def spmv(A, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {A.shape}, vector {x.shape}")
    return A @ x


class CholeskyFactor:
    """``A[p][:, p] = L @ L.T`` for a symmetric positive definite ``A``.

    The numeric work is done by SuperLU in symmetric mode with no pivoting,
    which yields ``L D L^T`` on a symmetric fill-reducing ordering; the
    Cholesky factor is ``L sqrt(D)``.
    """

    def __init__(self, A, ordering: str = "mmd"):
        A = csr(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        if not is_symmetric(A):
            raise NotSPDError("matrix is not symmetric")
        permc = {"mmd": "MMD_AT_PLUS_A", "natural": "NATURAL"}[ordering]
        try:
            lu = spla.splu(A.tocsc(), permc_spec=permc, diag_pivot_thresh=0.0,
                           options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise NotSPDError(f"factorization failed: {exc}") from None
        if not np.array_equal(lu.perm_r, lu.perm_c):
            raise NotSPDError("row pivoting occurred; matrix is not SPD")
        pivots = lu.U.diagonal()
        if np.any(pivots <= 0.0) or not np.all(np.isfinite(pivots)):
            raise NotSPDError(f"non-positive pivot {pivots.min():.3e}")
        _bump()
        self._lu = lu
        self._pivots = pivots
        self.shape = A.shape

    @property
    def perm(self) -> np.ndarray:
        """``perm[k]`` is the original index placed at position ``k``."""
        return np.argsort(self._lu.perm_c)

    @property
    def L(self) -> sp.csc_matrix:
        return (self._lu.L @ sp.diags(np.sqrt(self._pivots))).tocsc()

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.shape[0]:
            raise ValueError(f"rhs has length {rhs.shape[0]}, expected {self.shape[0]}")
        return self._lu.solve(rhs)


class LUFactor:
    """Sparse LU for the nonsymmetric operators; same ``solve`` surface as :class:`CholeskyFactor`."""

    def __init__(self, A):
        A = csr(A)
        self._lu = spla.splu(A.tocsc())
        _bump()
        self.shape = A.shape

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.shape[0]:
            raise ValueError(f"rhs has length {rhs.shape[0]}, expected {self.shape[0]}")
        return self._lu.solve(rhs)


class PCGSolver:
    """Jacobi-preconditioned conjugate gradients, for systems too large to factor."""

    def __init__(self, A, rtol: float = 1e-12, maxiter: int | None = None):
        self.A = csr(A)
        self.shape = self.A.shape
        d = self.A.diagonal()
        if np.any(d <= 0.0):
            raise NotSPDError("non-positive diagonal entry")
        self._inv_diag = 1.0 / d
        self.rtol = rtol
        self.maxiter = 10 * self.shape[0] if maxiter is None else maxiter

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.shape[0]:
            raise ValueError(f"rhs has length {rhs.shape[0]}, expected {self.shape[0]}")
        if not np.any(rhs):
            return np.zeros_like(rhs)
        M = spla.LinearOperator(self.shape, matvec=lambda r: self._inv_diag * r)
        x, info = spla.cg(self.A, rhs, rtol=self.rtol, atol=0.0, maxiter=self.maxiter, M=M)
        if info != 0:
            raise np.linalg.LinAlgError(f"CG did not converge (info={info})")
        return x


def factorize(A, ordering: str = "mmd") -> CholeskyFactor:
    return CholeskyFactor(A, ordering=ordering)


def solve(factor, rhs) -> np.ndarray:
    return factor.solve(rhs)
