"""Stabilised relative and absolute field differences on a dB scale.

Amplitude convention: delta = 10**(dB/20), so -35 dB is 1.78 % and -18 dB
is 12.59 % of the maximum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DB_FLOOR = -200.0


class MetricError(ValueError):
    pass


def delta_from_db(db: float) -> float:
    if not db < 0:
        raise MetricError(f"dynamic range must be negative dB, got {db}")
    return 10.0 ** (db / 20.0)


def _magnitude(g):
    g = np.asarray(g)
    return np.abs(g) if g.ndim == 1 else np.linalg.norm(g.reshape(len(g), -1), axis=1)


def rel_diff(g1, g2, db: float) -> np.ndarray:
    """|g1 - g2| / max(|g2|, delta * max|g2|) per tet.

    1-D inputs are scalars per tet; (M, k) inputs are vectors per tet and
    |.| is the Euclidean norm.
    """
    g1, g2 = np.asarray(g1), np.asarray(g2)
    if g1.shape != g2.shape:
        raise MetricError(f"shape mismatch {g1.shape} vs {g2.shape}")
    delta = delta_from_db(db)
    m2 = _magnitude(g2)
    peak = m2.max() if m2.size else 0.0
    if not peak > 0:
        raise MetricError("reference field is identically zero")
    # normalise by the peak first so tiny reference fields do not overflow
    return (_magnitude(g1 - g2) / peak) / np.maximum(m2 / peak, delta)


def abs_diff(g1, g2) -> np.ndarray:
    """| |g1| - |g2| | per tet."""
    g1, g2 = np.asarray(g1), np.asarray(g2)
    if g1.shape != g2.shape:
        raise MetricError(f"shape mismatch {g1.shape} vs {g2.shape}")
    return np.abs(_magnitude(g1) - _magnitude(g2))


def to_db(x, ref: float, floor: float = DB_FLOOR):
    """20 log10(x / ref), clamped below at ``floor`` (so x = 0 maps to ``floor``)."""
    if not ref > 0:
        raise MetricError("reference must be positive")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise MetricError("to_db needs nonnegative input")
    with np.errstate(divide="ignore"):
        out = 20.0 * np.log10(x / ref)
    out = np.maximum(out, floor)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class DiffReport:
    name: str
    rel: np.ndarray
    abs: np.ndarray
    db: float
    delta: float
    max_rel: float
    max_abs: float
    norm1: float
    norm2: float

    def summary(self) -> dict:
        return {"name": self.name, "db": self.db, "delta": self.delta,
                "max_rel": self.max_rel, "mean_rel": float(self.rel.mean()),
                "max_abs": self.max_abs, "mean_abs": float(self.abs.mean()),
                "norm1": self.norm1, "norm2": self.norm2}


def diff_report(name: str, g1, g2, db: float) -> DiffReport:
    rel = rel_diff(g1, g2, db)
    ab = abs_diff(g1, g2)
    n1 = float(np.linalg.norm(np.asarray(g1)))
    n2 = float(np.linalg.norm(np.asarray(g2)))
    return DiffReport(name, rel, ab, db, delta_from_db(db), float(rel.max()),
                      float(ab.max()), n1, n2)


def lead_field_norm(matrix) -> float:
    """Largest column 2-norm, used when a single lead-field size is reported."""
    return float(np.max(np.linalg.norm(np.asarray(matrix), axis=0)))

