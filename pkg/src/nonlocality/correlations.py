"""Correlation functions of the relative angle between two measurement axes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .boxes import ConditionalBox, box_from_correlations

QUARTER = math.pi / 4
THREE_QUARTERS = 3 * math.pi / 4


class CorrelationModel(str, Enum):
    CLASSICAL_LINEAR = "classical"
    QUANTUM_COSINE = "quantum"
    SUPERQUANTUM = "superquantum"

    @classmethod
    def from_name(cls, name: str) -> "CorrelationModel":
        try:
            return cls(name.strip().lower())
        except ValueError:
            known = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown correlation model {name!r} (known: {known})") from None


def reduce_angle(theta):
    """Map any finite angle to the relative angle in [0, pi]."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("angle must be finite")
    t = np.abs(np.mod(theta, 2 * math.pi))
    t = np.minimum(t, 2 * math.pi - t)
    return t if t.ndim else float(t)


def _classical(t):
    return 1 - 2 * t / math.pi


def _superquantum(t):
    t = np.asarray(t, dtype=float)
    # centred on pi/2 so E(pi/2) is exactly zero
    out = -np.sin(2 * t - math.pi)
    out = np.where(t <= QUARTER, 1.0, out)
    out = np.where(t >= THREE_QUARTERS, -1.0, out)
    return out


def eval_correlation(model: CorrelationModel | str, theta):
    """E(theta) for ``model``; works elementwise on arrays.

    The superquantum model is flat at +1 up to pi/4, follows sin(2 theta)
    down to -1 at 3pi/4, and stays at -1 after that.
    """
    model = CorrelationModel(model)
    t = reduce_angle(theta)
    if model is CorrelationModel.CLASSICAL_LINEAR:
        out = _classical(t)
    elif model is CorrelationModel.QUANTUM_COSINE:
        out = np.cos(t)
    else:
        out = _superquantum(t)
    out = np.asarray(out, dtype=float)
    return out if out.ndim else float(out)


def antisymmetry_residual(model: CorrelationModel | str, grid_size: int) -> float:
    """max |E(pi - theta) + E(theta)| over a uniform grid on [0, pi]."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    theta = np.linspace(0.0, math.pi, grid_size)
    return float(np.max(np.abs(eval_correlation(model, math.pi - theta) + eval_correlation(model, theta))))


@dataclass(frozen=True)
class AxisConfiguration:
    """Coplanar axis directions (radians) for a', b, a, b', in that order."""

    a_prime: float
    b: float
    a: float
    b_prime: float

    def __post_init__(self):
        for name in ("a_prime", "b", "a", "b_prime"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"axis angle {name} must be finite")
            object.__setattr__(self, name, v)

    @classmethod
    def evenly_spaced(cls, spacing: float = QUARTER, start: float = 0.0) -> "AxisConfiguration":
        """a', b, a, b' at successive multiples of ``spacing``."""
        return cls(start, start + spacing, start + 2 * spacing, start + 3 * spacing)

    @classmethod
    def from_relative(cls, alpha1: float, alpha2: float, alpha3: float) -> "AxisConfiguration":
        """Build from the gaps a'->b, b->a, a->b'."""
        return cls(0.0, alpha1, alpha1 + alpha2, alpha1 + alpha2 + alpha3)

    def relative_angles(self) -> dict:
        """Reduced angles keyed by setting pair (x, y); x=0 is a, x=1 is a'."""
        alice = (self.a, self.a_prime)
        bob = (self.b, self.b_prime)
        return {(x, y): reduce_angle(bob[y] - alice[x]) for x in range(2) for y in range(2)}


def box_at_angles(model: CorrelationModel | str, axes: AxisConfiguration) -> ConditionalBox:
    rel = axes.relative_angles()
    es = [eval_correlation(model, rel[k]) for k in ((0, 0), (0, 1), (1, 0), (1, 1))]
    return box_from_correlations(*es)
