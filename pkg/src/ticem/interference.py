"""Amplitude-modulation envelopes of two interfering carriers.

Carriers are w_k(t) = A_k sin(2 pi f_k t + theta_k), frequencies in Hz.
The envelope of w_1 +/- w_2 is

    sqrt(A_1^2 + A_2^2 +/- 2 A_1 A_2 cos(2 pi (f_1 - f_2) t + theta_1 - theta_2)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .leadfield import CurrentPattern, pair_currents


@dataclass(frozen=True)
class SinusoidPair:
    A1: float
    A2: float
    f1: float
    f2: float
    theta1: float = 0.0
    theta2: float = 0.0

    def __post_init__(self):
        if self.A1 < 0 or self.A2 < 0:
            raise ValueError("amplitudes must be nonnegative")

    @property
    def beat(self) -> float:
        return abs(self.f1 - self.f2)

    def carriers(self, t):
        t = np.asarray(t, dtype=float)
        w1 = self.A1 * np.sin(2 * math.pi * self.f1 * t + self.theta1)
        w2 = self.A2 * np.sin(2 * math.pi * self.f2 * t + self.theta2)
        return w1, w2


def analytic_envelope(p: SinusoidPair, t, sign: str = "sum"):
    if sign not in ("sum", "diff"):
        raise ValueError("sign must be 'sum' or 'diff'")
    s = 1.0 if sign == "sum" else -1.0
    phase = 2 * math.pi * (p.f1 - p.f2) * np.asarray(t, dtype=float) + (p.theta1 - p.theta2)
    sq = p.A1 ** 2 + p.A2 ** 2 + s * 2 * p.A1 * p.A2 * np.cos(phase)
    return np.sqrt(np.maximum(sq, 0.0))


def synthesize(p: SinusoidPair, t) -> dict:
    """Carrier signals with their sum, difference and envelopes at times ``t``."""
    t = np.asarray(t, dtype=float)
    w1, w2 = p.carriers(t)
    return {
        "t": t,
        "w1": w1,
        "w2": w2,
        "sum": w1 + w2,
        "diff": w1 - w2,
        "env_sum": analytic_envelope(p, t, "sum"),
        "env_diff": analytic_envelope(p, t, "diff"),
    }


def real_vectors(J, method: str = "major_axis") -> np.ndarray:
    """Reduce complex per-tet vectors to real ones before taking magnitudes.

    ``major_axis`` rotates each vector by the phase that maximises its real
    part, i.e. returns the major semi-axis of the polarisation ellipse; real
    inputs come back unchanged up to sign.  ``modulus`` takes the component
    moduli.
    """
    J = np.asarray(J)
    if not np.iscomplexobj(J):
        return J.astype(float)
    if method == "modulus":
        return np.abs(J)
    if method != "major_axis":
        raise ValueError(f"unknown reduction {method!r}")
    phi = 0.5 * np.angle(np.sum(J * J, axis=-1))
    return np.real(J * np.exp(-1j * phi)[..., None])


@dataclass(frozen=True, eq=False)
class EnvelopeField:
    values: np.ndarray  # (M,) mA/mm^2
    provenance: dict = field(default_factory=dict)

    def argmax(self):
        if not np.any(self.values > 0):
            return None
        return int(np.argmax(self.values))


def interference_field(J1, J2, reduction: str = "major_axis") -> EnvelopeField:
    """Per tet | |J1 + J2| - |J1 - J2| |.

    Evaluated as 4 |J1 . J2| / (|J1 + J2| + |J1 - J2|), which is the same
    quantity (|a+b|^2 - |a-b|^2 = 4 a.b) without the cancellation that the
    plain difference suffers when one field is much weaker than the other.
    """
    a = getattr(J1, "J", J1)
    b = getattr(J2, "J", J2)
    if np.shape(a) != np.shape(b):
        raise ValueError(f"field shapes differ: {np.shape(a)} vs {np.shape(b)}")
    a = real_vectors(a, reduction)
    b = real_vectors(b, reduction)
    den = np.linalg.norm(a + b, axis=-1) + np.linalg.norm(a - b, axis=-1)
    num = 4.0 * np.abs(np.sum(a * b, axis=-1))
    val = np.divide(num, den, out=np.zeros_like(den), where=den > 0)
    return EnvelopeField(val, {"reduction": reduction})


@dataclass(frozen=True, eq=False)
class SteeringResult:
    splits: list  # (a, b) in mA
    fields: list  # EnvelopeField per split
    argmax: list  # tet index or None
    coords: np.ndarray  # (n_splits, 3), NaN where the field vanishes
    max_values: np.ndarray
    monotone: bool

    def rows(self):
        for (a, b), t, c, v in zip(self.splits, self.argmax, self.coords, self.max_values):
            yield a, b, t, c, v


def steering_scan(mesh, leads: Sequence, total: float, splits: Sequence[float],
                  axis=(1.0, 0.0, 0.0), frequencies=(1000.0, 1010.0),
                  reduction: str = "major_axis") -> SteeringResult:
    """Envelope maxima while moving current from pair 2 to pair 1 at fixed total.

    ``splits`` are pair-1 currents a; pair 2 carries ``total - a``.  Drift is
    measured as the argmax centroid projected on ``axis``; ``monotone`` is
    True when that projection is monotone in a.
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    cen = mesh.tet_centroids()
    pairs, fields, arg, coords, vmax = [], [], [], [], []
    for a in splits:
        a = float(a)
        b = float(total) - a
        if a < 0 or b < 0:
            raise ValueError(f"invalid split {a}/{b} for total {total}")
        pattern = CurrentPattern(np.array([-a, a, -b, b]), ((0, 1), (2, 3)), frequencies)
        J1, J2 = pair_currents(leads, pattern)
        env = interference_field(J1, J2, reduction)
        t = env.argmax()
        pairs.append((a, b))
        fields.append(env)
        arg.append(t)
        coords.append(cen[t] if t is not None else np.full(3, np.nan))
        vmax.append(float(env.values.max()))
    coords = np.array(coords)
    proj = coords @ axis
    ok = proj[np.isfinite(proj)]
    d = np.diff(ok)
    monotone = bool(np.all(d >= 0) or np.all(d <= 0))
    return SteeringResult(pairs, fields, arg, coords, np.array(vmax), monotone)
