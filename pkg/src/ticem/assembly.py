"""Assembly of the complete-electrode-model blocks A, B, C.

    A = A_vol + sum_l M_l / (Z_l |e_l|)      (N x N, 1/ohm)
    B = B_area @ diag(1/Z)                    (N x L, 1/ohm)
    C = diag(1/Z)                             (L x L, 1/ohm)

A_vol is the admittivity-weighted P1 stiffness, M_l the P1 boundary mass
matrix of patch l and B_area[:, l] = (1/|e_l|) * integral of psi_i over e_l.
None of these factors depend on Z, so a new impedance vector only needs the
cheap boundary terms to be recombined.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .electrode import ImpedanceVector
from .mesh import MeshError, check_patches, tet_gradients, triangle_areas

MM_PER_M = 1e3


class AssemblyError(ValueError):
    pass


def _csr(m) -> sp.csr_matrix:
    m = sp.csr_matrix(m)
    m.sum_duplicates()
    m.sort_indices()
    return m


def stiffness_pattern(tets, n):
    """CSR pattern of the node graph plus scatter positions of every local entry."""
    rows = np.repeat(tets, 4, axis=1).reshape(-1)
    cols = np.tile(tets, (1, 4)).reshape(-1)
    keys = rows * n + cols
    uniq = np.unique(keys)
    pos = np.searchsorted(uniq, keys).reshape(len(tets), 16).astype(np.int64)
    r = uniq // n
    indices = (uniq % n).astype(np.int32)
    indptr = np.zeros(n + 1, dtype=np.int32)
    np.cumsum(np.bincount(r, minlength=n), out=indptr[1:])
    return indptr, indices, pos


def assemble_volume(mesh, zeta_s_per_m) -> sp.csr_matrix:
    """Admittivity-weighted P1 stiffness with zeta converted from S/m to S/mm."""
    grads, vol = tet_gradients(mesh.nodes, mesh.tets)
    indptr, indices, pos = stiffness_pattern(mesh.tets, mesh.n_nodes)
    zeta = np.ascontiguousarray(np.asarray(zeta_s_per_m, dtype=complex) / MM_PER_M)
    data = kernels.scatter_stiffness(np.ascontiguousarray(grads), np.ascontiguousarray(vol),
                                     zeta, pos, len(indices))
    n = mesh.n_nodes
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


def boundary_mass(nodes, tris, n) -> sp.csr_matrix:
    """Exact P1 mass on triangles: area/12 * (1 + delta_ij)."""
    area = triangle_areas(nodes, tris)
    local = np.full((3, 3), 1.0) + np.eye(3)
    vals = (area[:, None, None] / 12.0 * local).reshape(-1)
    rows = np.repeat(tris, 3, axis=1).reshape(-1)
    cols = np.tile(tris, (1, 3)).reshape(-1)
    return _csr(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))


def boundary_load(nodes, tris, n) -> np.ndarray:
    """Integral of each basis function over the triangles (area/3 per vertex)."""
    area = triangle_areas(nodes, tris)
    out = np.zeros(n)
    np.add.at(out, tris.reshape(-1), np.repeat(area / 3.0, 3))
    return out


def content_key(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class CemSystem:
    mesh: object
    field: object
    Z: ImpedanceVector
    A_vol: sp.csr_matrix
    masses: tuple  # per electrode, N x N real
    B_area: np.ndarray  # N x L real, dimensionless
    areas: np.ndarray  # L, mm^2
    A: sp.csr_matrix
    B: np.ndarray  # N x L complex
    c_diag: np.ndarray  # L complex
    key: str

    @property
    def n_nodes(self) -> int:
        return self.A.shape[0]

    @property
    def n_electrodes(self) -> int:
        return len(self.areas)

    @property
    def labels(self):
        return [p.label for p in self.mesh.patches]

    @property
    def C(self) -> np.ndarray:
        return np.diag(self.c_diag)

    def with_impedances(self, Z) -> "CemSystem":
        """Recombine the boundary terms for new impedances, reusing every factor."""
        Z = Z if isinstance(Z, ImpedanceVector) else ImpedanceVector(Z)
        return _combine(self.mesh, self.field, Z, self.A_vol, self.masses,
                        self.B_area, self.areas)

    def block_matrix(self) -> np.ndarray:
        """Dense (N+L) x (N+L) matrix [[A, -B], [-B^T, C]]."""
        n, L = self.n_nodes, self.n_electrodes
        K = np.zeros((n + L, n + L), dtype=complex)
        K[:n, :n] = self.A.toarray()
        K[:n, n:] = -self.B
        K[n:, :n] = -self.B.T
        K[n:, n:] = self.C
        return K


def _combine(mesh, field, Z, A_vol, masses, B_area, areas) -> CemSystem:
    if len(Z) != len(areas):
        raise AssemblyError(f"{len(Z)} impedances for {len(areas)} electrodes")
    A = A_vol.copy()
    for z, area, m in zip(Z.Z, areas, masses):
        A = A + m * (1.0 / (z * area))
    A = _csr(A)
    B = B_area * (1.0 / Z.Z)[None, :]
    key = content_key(mesh.nodes, mesh.tets, field.zeta, Z.Z,
                      *[p.tri_indices for p in mesh.patches])
    return CemSystem(mesh, field, Z, A_vol, tuple(masses), B_area, np.asarray(areas),
                     A, B, 1.0 / Z.Z, key)


def assemble(mesh, field, Z, patches=None) -> CemSystem:
    """Assemble A, B, C and keep the impedance-independent factors.

    ``patches`` defaults to ``mesh.patches``; passing them attaches them.
    """
    if patches is not None:
        mesh = mesh.with_patches(patches)
    if not mesh.patches:
        raise AssemblyError("no electrode patches")
    Z = Z if isinstance(Z, ImpedanceVector) else ImpedanceVector(Z)
    if len(Z) != len(mesh.patches):
        raise AssemblyError(f"{len(Z)} impedances for {len(mesh.patches)} electrodes")
    if len(field.zeta) != mesh.n_tets:
        raise AssemblyError("admittivity field was not built on this mesh")
    check_patches(mesh, mesh.patches)
    try:
        A_vol = assemble_volume(mesh, field.zeta)
    except MeshError as exc:
        raise AssemblyError(str(exc)) from exc
    n = mesh.n_nodes
    masses, cols, areas = [], [], []
    for p in mesh.patches:
        tris = mesh.boundary_tris[p.tri_indices]
        area = float(triangle_areas(mesh.nodes, tris).sum())
        if not area > 0:
            raise AssemblyError(f"electrode {p.label!r} has zero area")
        masses.append(boundary_mass(mesh.nodes, tris, n))
        cols.append(boundary_load(mesh.nodes, tris, n) / area)
        areas.append(area)
    B_area = np.column_stack(cols)
    return _combine(mesh, field, Z, A_vol, masses, B_area, np.array(areas))


def verify_factorization(sys: CemSystem, Z=None) -> float:
    """max|A - A_vol - sum M_l/(Z_l|e_l|)| / max|A|."""
    Z = sys.Z if Z is None else (Z if isinstance(Z, ImpedanceVector) else ImpedanceVector(Z))
    R = sys.A - sys.A_vol
    for z, area, m in zip(Z.Z, sys.areas, sys.masses):
        R = R - m * (1.0 / (z * area))
    num = np.max(np.abs(R.data)) if R.nnz else 0.0
    return float(num / np.max(np.abs(sys.A.data)))


# -- coordinate text format ---------------------------------------------------

def write_coo(path, matrix, name="matrix") -> None:
    """Write ``row col re im`` lines (0-based) after a ``# name rows cols nnz`` header."""
    if sp.issparse(matrix):
        m = sp.coo_matrix(matrix)
        m.sum_duplicates()
        order = np.lexsort((m.col, m.row))
        rows, cols, vals = m.row[order], m.col[order], np.asarray(m.data, dtype=complex)[order]
        shape = m.shape
    else:
        a = np.atleast_2d(np.asarray(matrix, dtype=complex))
        rows, cols = np.nonzero(a != 0)
        vals = a[rows, cols]
        shape = a.shape
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"# {name} {shape[0]} {shape[1]} {len(vals)}\n")
        for r, c, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
            fh.write(f"{r} {c} {v.real!r} {v.imag!r}\n")


def read_coo(path, dense=False):
    with open(path, encoding="ascii") as fh:
        head = fh.readline().split()
        if len(head) != 5 or head[0] != "#":
            raise ValueError(f"{path}: bad coordinate-format header")
        nr, nc, nnz = int(head[2]), int(head[3]), int(head[4])
        rows, cols, vals = [], [], []
        for line in fh:
            r, c, re, im = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(complex(float(re), float(im)))
    if len(vals) != nnz:
        raise ValueError(f"{path}: expected {nnz} entries, found {len(vals)}")
    m = sp.coo_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(nr, nc))
    return m.toarray() if dense else _csr(m)
