"""Double-layer electrode impedance and contact-resistance perturbations."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


class ElectrodeError(ValueError):
    pass


@dataclass(frozen=True)
class ElectrodeModel:
    """Contact resistance in series with a parallel double-layer RC.

    ``capacitor_sign`` selects the capacitor impedance convention:
    -1 gives ``-i/(omega*Cdl)`` (admittance ``1/Rdl + i*omega*Cdl``), +1 the
    conjugate.  Only the sign of Im(Z) changes; |Z| is identical.
    """

    Rc: float = 270.0
    Rdl: float = 1.0e4
    Cdl: float = 1.0e-7
    f: float = 1000.0
    capacitor_sign: int = -1

    def __post_init__(self):
        for name in ("Rc", "Rdl", "Cdl", "f"):
            if not getattr(self, name) > 0:
                raise ElectrodeError(f"{name} must be positive, got {getattr(self, name)}")
        if self.capacitor_sign not in (-1, 1):
            raise ElectrodeError("capacitor_sign must be -1 or +1")


def impedance_of_f(m: ElectrodeModel) -> complex:
    omega = 2.0 * math.pi * m.f
    admittance = 1.0 / m.Rdl - m.capacitor_sign * 1j * omega * m.Cdl
    return 1.0 / admittance + m.Rc


def perturb_contact(m: ElectrodeModel, dRc: float):
    """Return ``(new_model, dZ)`` for a contact-resistance change ``dRc``."""
    new_rc = m.Rc + dRc
    if not new_rc > 0:
        raise ElectrodeError(f"perturbed contact resistance {new_rc} is not positive")
    new = replace(m, Rc=new_rc)
    return new, impedance_of_f(new) - impedance_of_f(m)


@dataclass(frozen=True, eq=False)
class ImpedanceVector:
    """Per-electrode impedances Z in ohm, ordered like the mesh patches."""

    Z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.Z, dtype=complex).reshape(-1)
        if np.any(z.real <= 0):
            raise ElectrodeError("every electrode impedance needs a positive real part")
        object.__setattr__(self, "Z", z)

    def __len__(self):
        return len(self.Z)

    @classmethod
    def from_models(cls, models) -> "ImpedanceVector":
        return cls(np.array([impedance_of_f(m) for m in models]))

    def effective(self, areas) -> np.ndarray:
        """Effective contact impedance Z*|e| (ohm mm^2)."""
        return self.Z * np.asarray(areas, dtype=float)

    def perturbed(self, index: int, dZ: complex) -> "ImpedanceVector":
        z = self.Z.copy()
        z[index] += dZ
        return ImpedanceVector(z)
