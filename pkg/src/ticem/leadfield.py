"""Conductance density, lead fields and volume current densities.

Units: D in S/mm^2 and L = D R in 1/mm^2; J = L i is in mA/mm^2 for i in mA.
Fields are element-wise constant (one complex 3-vector per tet).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .assembly import MM_PER_M
from .mesh import tet_gradients
from .solver import KIRCHHOFF_TOL, KirchhoffError


@dataclass(frozen=True, eq=False)
class CurrentPattern:
    """Electrode currents (mA) grouped into sources that each run at one frequency."""

    amplitudes: np.ndarray
    pairs: tuple = ()
    frequencies: tuple = ()

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        object.__setattr__(self, "amplitudes", a)
        pairs = tuple(tuple(int(e) for e in p) for p in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "frequencies", tuple(float(f) for f in self.frequencies))
        _check_sum(a, "pattern")
        if len(self.frequencies) != len(pairs):
            raise ValueError("one frequency per pair is required")
        if any(f <= 0 for f in self.frequencies):
            raise ValueError("pair frequencies must be positive")
        used = [e for p in pairs for e in p]
        if len(set(used)) != len(used):
            raise ValueError("an electrode appears in more than one pair")
        for k, p in enumerate(pairs):
            _check_sum(a[list(p)], f"pair {k}")

    def __len__(self):
        return len(self.amplitudes)

    @property
    def beat(self) -> float:
        if len(self.frequencies) < 2:
            return 0.0
        return abs(self.frequencies[1] - self.frequencies[0])

    def pair_amplitudes(self, k: int) -> np.ndarray:
        """Full-length amplitude vector with only pair ``k`` driven."""
        out = np.zeros_like(self.amplitudes)
        idx = list(self.pairs[k])
        out[idx] = self.amplitudes[idx]
        return out


def _check_sum(a, what):
    if abs(a.sum()) > KIRCHHOFF_TOL * np.linalg.norm(a):
        raise KirchhoffError(f"{what} violates Kirchhoff's current law (sum {a.sum():.3e})")


def two_pair_pattern(a: float, b: float, f1: float = 1000.0, f2: float = 1010.0) -> CurrentPattern:
    """(-a, a, -b, b) mA with electrodes (0, 1) and (2, 3) forming the pairs."""
    return CurrentPattern(np.array([-a, a, -b, b]), ((0, 1), (2, 3)), (f1, f2))


def conductance_density(mesh, field) -> sp.csr_matrix:
    """Sparse (3M x N) map from nodal potential to -zeta grad u per tet."""
    grads, _ = tet_gradients(mesh.nodes, mesh.tets)
    zeta = np.asarray(field.zeta, dtype=complex) / MM_PER_M
    m = mesh.n_tets
    vals = -zeta[:, None, None] * grads  # (M, 4, 3)
    rows = (3 * np.arange(m)[:, None, None] + np.arange(3)[None, None, :]).repeat(4, axis=1)
    cols = np.broadcast_to(mesh.tets[:, :, None], (m, 4, 3))
    D = sp.coo_matrix((vals.reshape(-1), (rows.reshape(-1), cols.reshape(-1))),
                      shape=(3 * m, mesh.n_nodes)).tocsr()
    D.sort_indices()
    return D


@dataclass(frozen=True, eq=False)
class LeadField:
    matrix: np.ndarray  # (3M, L) complex, 1/mm^2
    frequency: float = 0.0

    @property
    def n_tets(self) -> int:
        return self.matrix.shape[0] // 3

    def tet_blocks(self) -> np.ndarray:
        """(M, 3, L) view."""
        return self.matrix.reshape(self.n_tets, 3, -1)

    def column_norms(self) -> np.ndarray:
        return np.linalg.norm(self.matrix, axis=0)


def lead_field(D, rm, frequency: float = 0.0) -> LeadField:
    R = rm.R if hasattr(rm, "R") else np.asarray(rm)
    if D.shape[1] != R.shape[0]:
        raise ValueError(f"D has {D.shape[1]} columns but R has {R.shape[0]} rows")
    return LeadField(np.asarray(D @ R), frequency)


@dataclass(frozen=True, eq=False)
class VolumeCurrentField:
    J: np.ndarray  # (M, 3) complex, mA/mm^2
    provenance: dict = field(default_factory=dict)

    def magnitude(self) -> np.ndarray:
        return np.linalg.norm(self.J, axis=1)


def volume_current(L: LeadField, i, provenance: dict | None = None) -> VolumeCurrentField:
    amps = i.amplitudes if isinstance(i, CurrentPattern) else np.asarray(i, dtype=complex)
    amps = np.asarray(amps, dtype=complex).reshape(-1)
    _check_sum(amps, "pattern")
    if len(amps) != L.matrix.shape[1]:
        raise ValueError(f"pattern has {len(amps)} entries, lead field {L.matrix.shape[1]} columns")
    J = (L.matrix @ amps).reshape(-1, 3)
    return VolumeCurrentField(J, dict(provenance or {}))


def pair_currents(leads: Sequence[LeadField], pattern: CurrentPattern):
    """Volume currents of each pair, each taken from the lead field at its frequency."""
    if len(leads) != len(pattern.pairs):
        raise ValueError("one lead field per pair is required")
    return [volume_current(lf, pattern.pair_amplitudes(k), {"pair": k, "frequency": lf.frequency})
            for k, lf in enumerate(leads)]
