"""Tissue admittivity: zeta = sigma + i*omega*eps0*eps_r per compartment."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

EPS0 = 8.854e-12  # F/m

SKIN, SKULL, CSF, GM, WM = 1, 2, 3, 4, 5
COMPARTMENT_NAMES = {SKIN: "skin", SKULL: "skull", CSF: "csf", GM: "gm", WM: "wm"}

# (compartment, f [Hz], sigma [S/m], eps_r)
_DEFAULT_ROWS = [
    (SKIN, 100.0, 2.0000e-4, 1135.9),
    (SKULL, 100.0, 2.0059e-2, 5852.8),
    (CSF, 100.0, 2.0, 102.0),
    (GM, 100.0, 8.9018e-2, 3906100.0),
    (WM, 100.0, 5.8093e-2, 1667700.0),
    (SKIN, 1000.0, 2.0006e-4, 1135.6),
    (SKULL, 1000.0, 2.0157e-2, 2702.4),
    (CSF, 1000.0, 2.0, 102.0),
    (GM, 1000.0, 9.8805e-2, 164060.0),
    (WM, 1000.0, 6.2574e-2, 69811.0),
    (SKIN, 10000.0, 2.0408e-4, 1133.6),
    (SKULL, 10000.0, 2.0430e-2, 521.64),
    (CSF, 10000.0, 2.0, 102.0),
    (GM, 10000.0, 1.1487e-1, 22241.0),
    (WM, 10000.0, 6.9481e-2, 12468.0),
    (SKIN, 100000.0, 4.5128e-4, 1119.2),
    (SKULL, 100000.0, 2.0791e-2, 227.64),
    (CSF, 100000.0, 2.0, 102.0),
    (GM, 100000.0, 1.3366e-1, 3221.8),
    (WM, 100000.0, 8.1845e-2, 2107.6),
]


class MaterialError(ValueError):
    pass


class TissueTable:
    """Conductivity and relative permittivity tabulated per compartment and frequency."""

    def __init__(self, rows):
        data: dict = {}
        for comp, f, sigma, eps_r in rows:
            comp, f, sigma, eps_r = int(comp), float(f), float(sigma), float(eps_r)
            if not (sigma > 0 and eps_r > 0 and f > 0):
                raise MaterialError(f"nonpositive entry for compartment {comp} at {f} Hz")
            data.setdefault(comp, []).append((f, sigma, eps_r))
        self._data = {}
        for comp, entries in data.items():
            freqs = [e[0] for e in entries]
            if any(b <= a for a, b in zip(freqs[:-1], freqs[1:])):
                raise MaterialError(f"frequencies for compartment {comp} not strictly increasing")
            self._data[comp] = np.array(entries)

    @classmethod
    def default(cls) -> "TissueTable":
        return cls(_DEFAULT_ROWS)

    @classmethod
    def from_csv(cls, path) -> "TissueTable":
        """Read ``compartment,f_hz,sigma_S_per_m,eps_r`` rows (header required)."""
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = [(r["compartment"], r["f_hz"], r["sigma_S_per_m"], r["eps_r"]) for r in reader]
        return cls(rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["compartment", "f_hz", "sigma_S_per_m", "eps_r"])
            for comp, f, sigma, eps_r in self.rows():
                w.writerow([comp, repr(f), repr(sigma), repr(eps_r)])

    def rows(self):
        out = []
        for comp in sorted(self._data):
            for f, s, e in self._data[comp].tolist():
                out.append((comp, f, s, e))
        return out

    @property
    def compartments(self):
        return sorted(self._data)

    def lookup(self, compartment: int, f: float):
        """(sigma, eps_r) at frequency ``f``, log-log interpolated between rows."""
        try:
            tab = self._data[int(compartment)]
        except KeyError:
            raise MaterialError(f"unknown compartment {compartment}") from None
        freqs = tab[:, 0]
        exact = np.flatnonzero(freqs == f)
        if len(exact):
            return float(tab[exact[0], 1]), float(tab[exact[0], 2])
        if not freqs[0] <= f <= freqs[-1]:
            raise MaterialError(
                f"frequency {f} Hz outside tabulated range [{freqs[0]}, {freqs[-1]}] "
                f"for compartment {compartment}")
        lf = math.log(f)
        lfs = np.log(freqs)
        sigma = math.exp(np.interp(lf, lfs, np.log(tab[:, 1])))
        eps_r = math.exp(np.interp(lf, lfs, np.log(tab[:, 2])))
        return sigma, eps_r


def admittivity_at(table: TissueTable, compartment: int, f: float,
                   with_permittivity: bool = True) -> complex:
    """Complex admittivity in S/m."""
    sigma, eps_r = table.lookup(compartment, f)
    if not with_permittivity:
        return complex(sigma, 0.0)
    return complex(sigma, 2.0 * math.pi * f * EPS0 * eps_r)


@dataclass(frozen=True, eq=False)
class AdmittivityField:
    omega: float  # rad/s
    zeta: np.ndarray  # (M,) complex, S/m
    with_permittivity: bool = True

    @property
    def frequency(self) -> float:
        return self.omega / (2.0 * math.pi)


def build_admittivity_field(mesh, table: TissueTable, f: float,
                            with_permittivity: bool = True) -> AdmittivityField:
    comps = np.unique(mesh.compartment)
    values = {}
    for c in comps.tolist():
        try:
            values[c] = admittivity_at(table, c, f, with_permittivity)
        except MaterialError as exc:
            tet = int(np.flatnonzero(mesh.compartment == c)[0])
            raise MaterialError(f"tet {tet}: {exc}") from exc
    zeta = np.array([values[c] for c in mesh.compartment.tolist()], dtype=complex)
    return AdmittivityField(2.0 * math.pi * f, zeta, with_permittivity)
