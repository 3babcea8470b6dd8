"""Solving the CEM system: complex-symmetric PCG, transfer matrix, Schur complement.

The block system [[A, -B], [-B^T, C]] annihilates (1_N, 1_L) exactly, so the
Schur complement S = C - B^T A^{-1} B is singular with S @ 1 = 0.  Electrode
potentials are fixed by the ground sum(U) = 0, realised through the grounded
inverse G = (S + 1 1^T / L)^{-1}: for any current pattern with sum(i) = 0,
U = G i solves S U = i and has zero mean.  R = T G throughout.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import kernels

log = logging.getLogger(__name__)

DENSE_LIMIT = 20000
KIRCHHOFF_TOL = 1e-12


class SolverError(RuntimeError):
    pass


class KirchhoffError(ValueError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    rtol: float = 1e-10
    max_iter: int = 5000
    preconditioner: str = "diagonal"
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.rtol < 1:
            raise ValueError("rtol must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.preconditioner not in ("diagonal", "none"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass(frozen=True)
class SolveInfo:
    iterations: int
    residual: float


def _prepared(A):
    A = sp.csr_matrix(A, dtype=complex)
    A.sort_indices()
    return (np.ascontiguousarray(A.indptr, dtype=np.int32),
            np.ascontiguousarray(A.indices, dtype=np.int32),
            np.ascontiguousarray(A.data, dtype=np.complex128), A.shape[0], A.diagonal())


def _minv(diag, opts):
    if opts.preconditioner == "none":
        return np.ones(len(diag), dtype=complex)
    if np.any(diag == 0):
        raise SolverError("zero on the diagonal; diagonal preconditioner undefined")
    return np.ascontiguousarray(1.0 / diag)


def pcg_solve(A, b, opts: SolveOptions | None = None, return_info: bool = False):
    """Solve A x = b for complex-symmetric A (A == A.T) by preconditioned COCG."""
    opts = opts or SolveOptions()
    indptr, indices, data, n, diag = _prepared(A)
    b = np.ascontiguousarray(np.asarray(b, dtype=complex).reshape(-1))
    if len(b) != n:
        raise ValueError(f"rhs has length {len(b)}, matrix is {n} x {n}")
    if not np.all(np.isfinite(b)):
        raise ValueError("rhs is not finite")
    x, it, res = kernels.cocg(indptr, indices, data, b, _minv(diag, opts),
                              float(opts.rtol), int(opts.max_iter))
    if not res <= opts.rtol:
        raise SolverError(f"PCG did not converge: {it} iterations, "
                          f"relative residual {res:.3e} > {opts.rtol:.1e}")
    x = np.asarray(x)
    info = SolveInfo(int(it), float(res))
    return (x, info) if return_info else x


def solve_columns(A, rhs, opts: SolveOptions | None = None):
    """Solve A X = rhs column by column; returns ``(X, [SolveInfo, ...])``."""
    opts = opts or SolveOptions()
    rhs = np.asarray(rhs, dtype=complex)
    if rhs.ndim == 1:
        rhs = rhs[:, None]
    prepared = _prepared(A)
    indptr, indices, data, n, diag = prepared
    minv = _minv(diag, opts)

    def one(j):
        b = np.ascontiguousarray(rhs[:, j])
        x, it, res = kernels.cocg(indptr, indices, data, b, minv,
                                  float(opts.rtol), int(opts.max_iter))
        if not res <= opts.rtol:
            raise SolverError(f"PCG did not converge for column {j}: {it} iterations, "
                              f"relative residual {res:.3e} > {opts.rtol:.1e}")
        return np.asarray(x), SolveInfo(int(it), float(res))

    cols = range(rhs.shape[1])
    if opts.threads > 1 and rhs.shape[1] > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as pool:
            results = list(pool.map(one, cols))
    else:
        results = [one(j) for j in cols]
    X = np.column_stack([r[0] for r in results]) if results else np.zeros((n, 0), complex)
    return X, [r[1] for r in results]


def grounded_inverse(S: np.ndarray) -> np.ndarray:
    """(S + 1 1^T / L)^{-1}; maps Kirchhoff patterns to zero-mean voltages."""
    L = S.shape[0]
    Sg = S + np.full((L, L), 1.0 / L)
    cond = np.linalg.cond(Sg)
    if not np.isfinite(cond) or cond > 1e14:
        raise SolverError(f"grounded Schur complement is singular (condition estimate {cond:.3e})")
    lu = sla.lu_factor(Sg)
    return sla.lu_solve(lu, np.eye(L, dtype=complex))


@dataclass(frozen=True, eq=False)
class ResistanceMatrix:
    R: np.ndarray  # N x L, ohm
    T: np.ndarray  # N x L transfer matrix A^{-1} B
    S: np.ndarray  # L x L Schur complement C - B^T T
    G: np.ndarray  # L x L grounded inverse of S
    key: str
    stats: list = field(default_factory=list)


def resistance_matrix(sys, opts: SolveOptions | None = None) -> ResistanceMatrix:
    opts = opts or SolveOptions()
    if sys.n_electrodes < 2:
        raise SolverError("need at least two electrodes")
    T, stats = solve_columns(sys.A, sys.B, opts)
    S = sys.C - sys.B.T @ T
    G = grounded_inverse(S)
    log.debug("resistance matrix: iterations per column %s", [s.iterations for s in stats])
    return ResistanceMatrix(T @ G, T, S, G, sys.key, stats)


def check_kirchhoff(i) -> np.ndarray:
    i = np.asarray(i, dtype=complex).reshape(-1)
    scale = np.linalg.norm(i)
    if abs(i.sum()) > KIRCHHOFF_TOL * scale:
        raise KirchhoffError(f"currents sum to {i.sum():.3e}, not zero")
    return i


def dense_direct_oracle(sys, i):
    """Monolithic dense solve of the grounded block system.

    Solves [[A, -B, 0], [-B^T, C, 1], [0, 1^T, 0]] (u; U; lam) = (0; i; 0) by
    LU with partial pivoting; the bordering row imposes sum(U) = 0.
    Returns ``(u, U)``.
    """
    n, L = sys.n_nodes, sys.n_electrodes
    if n > DENSE_LIMIT:
        raise SolverError(f"dense oracle limited to {DENSE_LIMIT} nodes, mesh has {n}")
    i = check_kirchhoff(i)
    if len(i) != L:
        raise ValueError(f"pattern has {len(i)} entries for {L} electrodes")
    K = np.zeros((n + L + 1, n + L + 1), dtype=complex)
    K[:n + L, :n + L] = sys.block_matrix()
    K[n:n + L, -1] = 1.0
    K[-1, n:n + L] = 1.0
    rhs = np.zeros(n + L + 1, dtype=complex)
    rhs[n:n + L] = i
    try:
        lu = sla.lu_factor(K, check_finite=False)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SolverError(f"dense block system is singular: {exc}") from exc
    if np.any(np.diag(lu[0]) == 0):
        raise SolverError("dense block system is singular")
    sol = sla.lu_solve(lu, rhs, check_finite=False)
    return sol[:n], sol[n:n + L]


def electrode_voltages(rm: ResistanceMatrix, sys, i) -> np.ndarray:
    """U = C^{-1}(i + B^T R i), shifted to zero mean."""
    i = check_kirchhoff(i)
    u = rm.R @ i
    U = (i + sys.B.T @ u) / sys.c_diag
    return U - U.mean()
