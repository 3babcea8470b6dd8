"""Derivatives of the CEM operators with respect to one electrode impedance.

With A = A_vol + sum M_l/(Z_l|e_l|), B = B_area diag(1/Z), C = diag(1/Z):

    dA/dZ_l = -M_l / (Z_l^2 |e_l|)
    dB/dZ_l = -B_area[:, l] e_l^T / Z_l^2
    dC/dZ_l = -e_l e_l^T / Z_l^2
    dS/dZ_l = dC - dB^T T - T^T dB + T^T dA T
    dR/dZ_l = -A^{-1} dA R + A^{-1} dB G - R dS G

All matrices are complex symmetric, so transposes (never conjugates) appear.
Every expression is analytic in Z_l; along real perturbations dZ = dRc the
directional derivative equals the complex one.  G is the grounded inverse of
S and the constant grounding term has zero derivative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .solver import ResistanceMatrix, SolveOptions, solve_columns


class BasePointError(ValueError):
    """Resistance matrix and system come from different (mesh, zeta, Z)."""


def _check_index(sys, ell):
    if not 0 <= ell < sys.n_electrodes:
        raise IndexError(f"electrode index {ell} out of range for {sys.n_electrodes} electrodes")


def dA_dZ(sys, ell: int) -> sp.csr_matrix:
    _check_index(sys, ell)
    z = sys.Z.Z[ell]
    return sp.csr_matrix(sys.masses[ell] * (-1.0 / (z * z * sys.areas[ell])))


def dB_dZ(sys, ell: int) -> np.ndarray:
    _check_index(sys, ell)
    z = sys.Z.Z[ell]
    out = np.zeros(sys.B.shape, dtype=complex)
    out[:, ell] = -sys.B_area[:, ell] / (z * z)
    return out


def dC_dZ(sys, ell: int) -> np.ndarray:
    _check_index(sys, ell)
    z = sys.Z.Z[ell]
    out = np.zeros((sys.n_electrodes, sys.n_electrodes), dtype=complex)
    out[ell, ell] = -1.0 / (z * z)
    return out


def _check_base(rm, sys):
    if rm.key != sys.key:
        raise BasePointError(
            f"resistance matrix was computed for base point {rm.key}, system is {sys.key}")


def dS_dZ(rm: ResistanceMatrix, sys, ell: int) -> np.ndarray:
    _check_base(rm, sys)
    dA = dA_dZ(sys, ell)
    dB = dB_dZ(sys, ell)
    T = rm.T
    dBtT = dB.T @ T
    # dA is supported on the patch nodes only
    nodes = np.unique(sys.masses[ell].nonzero()[0])
    Tp = T[nodes]
    TdAT = Tp.T @ (dA[nodes][:, nodes] @ Tp)
    return dC_dZ(sys, ell) - dBtT - dBtT.T + TdAT


@dataclass(frozen=True, eq=False)
class ImpedanceJacobian:
    """dR/dZ_l for the selected electrodes at base impedances ``Z0``."""

    derivatives: dict  # electrode index -> N x L complex
    Z0: np.ndarray
    key: str

    def __post_init__(self):
        for ell, d in self.derivatives.items():
            if not np.all(np.isfinite(d)):
                raise ValueError(f"non-finite derivative for electrode {ell}")

    @property
    def electrodes(self):
        return sorted(self.derivatives)


def dR_dZ(rm: ResistanceMatrix, sys, ell: int, opts: SolveOptions | None = None) -> np.ndarray:
    """Analytic dR/dZ_l.

    The A^{-1} solves exploit the patch-local support of dA: when the patch
    has fewer nodes than there are electrodes, A^{-1} is applied to the patch
    unit vectors instead of to the columns of dA R.  A^{-1} dB needs no solve
    because A^{-1} B_area[:, l] = Z_l T[:, l].
    """
    _check_base(rm, sys)
    _check_index(sys, ell)
    opts = opts or SolveOptions()
    z = sys.Z.Z[ell]
    dA = dA_dZ(sys, ell)
    nodes = np.unique(sys.masses[ell].nonzero()[0])
    local = dA[nodes] @ rm.R  # rows of dA R that can be nonzero
    if len(nodes) < rm.R.shape[1]:
        E = np.zeros((sys.n_nodes, len(nodes)), dtype=complex)
        E[nodes, np.arange(len(nodes))] = 1.0
        W, _ = solve_columns(sys.A, E, opts)
        term_a = -(W @ local)
    else:
        rhs = np.zeros(rm.R.shape, dtype=complex)
        rhs[nodes] = local
        X, _ = solve_columns(sys.A, rhs, opts)
        term_a = -X
    # A^{-1} dB = -(Z_l / Z_l^2) T[:, l] e_l^T
    term_b = np.outer(-rm.T[:, ell] / z, rm.G[ell])
    term_s = -rm.R @ (dS_dZ(rm, sys, ell) @ rm.G)
    return term_a + term_b + term_s


def impedance_jacobian(rm: ResistanceMatrix, sys, electrodes,
                       opts: SolveOptions | None = None) -> ImpedanceJacobian:
    derivs = {int(ell): dR_dZ(rm, sys, int(ell), opts) for ell in electrodes}
    return ImpedanceJacobian(derivs, sys.Z.Z.copy(), rm.key)


def linearized_R(rm: ResistanceMatrix, jac: ImpedanceJacobian, dZ: dict) -> np.ndarray:
    """R(Z + dZ) ~ R(Z) + sum_l dR/dZ_l dZ_l for real contact-resistance changes."""
    if jac.key != rm.key:
        raise BasePointError("jacobian and resistance matrix have different base points")
    out = rm.R.copy()
    for ell, dz in dZ.items():
        dz = complex(dz)
        if dz.imag != 0.0:
            raise ValueError("only real impedance perturbations are supported")
        if ell not in jac.derivatives:
            raise KeyError(f"no derivative computed for electrode {ell}")
        if dz != 0:
            out = out + jac.derivatives[ell] * dz.real
    return out
