"""CHSH evaluation, the 2 / 2*sqrt(2) / 4 bound hierarchy and local-polytope membership."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import linprog, nnls

from .boxes import (
    EXACT_TOL,
    ConditionalBox,
    correlators,
    deterministic_box,
    require_valid,
)
from .correlations import AxisConfiguration, CorrelationModel, box_at_angles, eval_correlation

CLASSICAL_BOUND = 2.0
QUANTUM_BOUND = 2 * math.sqrt(2)
NO_SIGNALING_BOUND = 4.0

# coefficients on (E(A,B), E(A,B'), E(A',B), E(A',B'))
CHSH_COEFFICIENTS = (1, 1, 1, -1)


class BoundClass(str, Enum):
    LOCAL = "Local"
    QUANTUM_ONLY = "QuantumOnly"
    SUPERQUANTUM_ONLY = "SuperquantumOnly"
    IMPOSSIBLE = "Impossible"


@dataclass(frozen=True)
class ChshVariant:
    """One of the eight relabelings of the CHSH expression."""

    coefficients: tuple
    value: float

    @property
    def label(self) -> str:
        names = ("E00", "E01", "E10", "E11")
        return " ".join(f"{'+' if c > 0 else '-'}{n}" for c, n in zip(self.coefficients, names))


def chsh_variants():
    """The eight sign patterns: one minus sign in four positions, times an overall sign."""
    out = []
    for overall in (1, -1):
        for minus_at in range(4):
            out.append(tuple(overall * (-1 if i == minus_at else 1) for i in range(4)))
    return out


def chsh_value(e_ab: float, e_ab_prime: float, e_a_prime_b: float, e_a_prime_b_prime: float) -> float:
    """E(A,B) + E(A,B') + E(A',B) - E(A',B')."""
    es = (e_ab, e_ab_prime, e_a_prime_b, e_a_prime_b_prime)
    for e in es:
        if not math.isfinite(e) or abs(e) > 1 + EXACT_TOL:
            raise ValueError(f"correlator {e!r} outside [-1, 1]")
    return e_ab + e_ab_prime + e_a_prime_b - e_a_prime_b_prime


def chsh_of_box(box: ConditionalBox) -> float:
    e00, e01, e10, e11 = correlators(box)
    return e00 + e01 + e10 - e11


def chsh_from_model(model: CorrelationModel | str, axes: AxisConfiguration | None = None) -> float:
    """CHSH of the box the model produces at ``axes`` (default: pi/4 spacing)."""
    if axes is None:
        axes = AxisConfiguration.evenly_spaced()
    return chsh_of_box(box_at_angles(model, axes))


def classify(s: float, tol: float = EXACT_TOL) -> BoundClass:
    """Place a CHSH value in the bound hierarchy.

    Each class includes its upper boundary; ``tol`` only absorbs rounding,
    so classify(2 + 1e-9) is already QuantumOnly.
    """
    if not math.isfinite(s):
        raise ValueError("CHSH value must be finite")
    m = abs(s)
    if m <= CLASSICAL_BOUND + tol:
        return BoundClass.LOCAL
    if m <= QUANTUM_BOUND + tol:
        return BoundClass.QUANTUM_ONLY
    if m <= NO_SIGNALING_BOUND + tol:
        return BoundClass.SUPERQUANTUM_ONLY
    return BoundClass.IMPOSSIBLE


def deterministic_vertices() -> list[ConditionalBox]:
    """All 16 deterministic boxes, ordered f-major: index = 4 * f + g."""
    return [deterministic_box(f, g) for f, g in itertools.product(range(4), repeat=2)]


@dataclass(frozen=True)
class LocalityCertificate:
    is_local: bool
    # 16 weights over deterministic_vertices(), present iff local
    weights: tuple | None
    # most violated CHSH relabeling, present iff nonlocal
    violated_inequality: ChshVariant | None
    residual: float
    tol: float

    def recombine(self) -> ConditionalBox:
        if self.weights is None:
            raise ValueError("nonlocal certificate has no decomposition")
        return ConditionalBox(np.tensordot(np.array(self.weights), _vertex_stack(), axes=1))

    def weights_by_response(self) -> dict:
        """Nonzero weights keyed by ``(f, g)`` response-function pair."""
        if self.weights is None:
            return {}
        return {divmod(k, 4): w for k, w in enumerate(self.weights) if w > 0}


def _vertex_stack() -> np.ndarray:
    return np.stack([v.probs for v in deterministic_vertices()])


def most_violated_variant(box: ConditionalBox) -> ChshVariant:
    es = np.array(correlators(box))
    best = None
    for coeffs in chsh_variants():
        v = float(np.dot(coeffs, es))
        if best is None or v > best.value:
            best = ChshVariant(coeffs, v)
    return best


# HiGHS defaults (1e-7) are looser than the membership tolerances used here
_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def _clean_weights(w: np.ndarray) -> np.ndarray:
    w = np.clip(w, 0.0, None)
    w /= w.sum()
    w[w < 1e-15] = 0.0
    return w


def is_local(box: ConditionalBox, tol: float = 1e-9) -> LocalityCertificate:
    """Decide whether ``box`` is a convex combination of deterministic boxes.

    Solves min s subject to |V w - p| <= s entrywise, w >= 0, sum(w) = 1 and
    accepts when s <= tol and the cleaned weights recombine to within tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    require_valid(box, max(tol, EXACT_TOL))
    verts = _vertex_stack().reshape(16, 16).T  # columns are vertices
    p = box.probs.ravel()
    n = verts.shape[1]
    c = np.zeros(n + 1)
    c[-1] = 1.0
    slack = -np.ones((16, 1))
    a_ub = np.block([[verts, slack], [-verts, slack]])
    b_ub = np.concatenate([p, -p])
    a_eq = np.concatenate([np.ones(n), [0.0]])[None, :]
    res = linprog(
        c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=(0, None), method="highs", options=_LP_OPTIONS
    )

    if res.status == 0 and res.x[-1] <= tol:
        w = _clean_weights(res.x[:n])
        residual = float(np.max(np.abs(verts @ w - p)))
        if residual > tol:
            # solver tolerance leaked into the weights; re-fit on the exact system
            w = _clean_weights(nnls(np.vstack([verts, np.ones(n)]), np.append(p, 1.0))[0])
            residual = float(np.max(np.abs(verts @ w - p)))
        if residual <= tol:
            return LocalityCertificate(True, tuple(float(v) for v in w), None, residual, tol)
    residual = float(res.x[-1]) if res.status == 0 else math.inf
    return LocalityCertificate(False, None, most_violated_variant(box), residual, tol)


@dataclass(frozen=True)
class AxisSearchResult:
    axes: AxisConfiguration
    relative_angles: tuple
    value: float


# gains below this are rounding noise and must not break ties
_REFINE_EPS = 1e-14


def _chsh_relative(model, a1, a2, a3):
    return (
        eval_correlation(model, a2)
        + eval_correlation(model, a3)
        + eval_correlation(model, a1)
        - eval_correlation(model, a1 + a2 + a3)
    )


def max_chsh_over_axes(
    model: CorrelationModel | str,
    grid_step: float = math.pi / 180,
    final_step: float = 1e-6,
) -> AxisSearchResult:
    """Maximize CHSH over coplanar axis layouts a', b, a, b'.

    The three gaps a'->b, b->a, a->b' range over [0, pi].  A full grid pass
    is followed by a compass search whose step halves down to ``final_step``.
    Ties go to the lexicographically smallest gap triple.
    """
    model = CorrelationModel(model)
    n = int(round(math.pi / grid_step)) + 1
    ks = np.arange(3 * n - 2)
    table = eval_correlation(model, ks * grid_step)
    e = table[:n]
    i, j, k = np.ogrid[:n, :n, :n]
    values = e[i] + e[j] + e[k] - table[i + j + k]
    flat = int(np.argmax(values >= values.max() - _REFINE_EPS))
    best = np.array(np.unravel_index(flat, values.shape), dtype=float) * grid_step
    best_value = float(_chsh_relative(model, *best))

    step = grid_step
    while step >= final_step:
        improved = False
        for axis in range(3):
            for direction in (-1.0, 1.0):
                cand = best.copy()
                cand[axis] = min(max(cand[axis] + direction * step, 0.0), math.pi)
                v = float(_chsh_relative(model, *cand))
                if v > best_value + _REFINE_EPS:
                    best, best_value, improved = cand, v, True
        if not improved:
            step /= 2
    triple = tuple(float(a) for a in best)
    return AxisSearchResult(AxisConfiguration.from_relative(*triple), triple, best_value)
