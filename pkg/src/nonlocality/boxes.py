"""Two-party, two-input, two-output conditional probability boxes.

A box stores p(a, b | x, y) as a read-only ``(2, 2, 2, 2)`` array indexed
``[x, y, ia, ib]``.  Inputs are bits; outcome indices map to values through
``OUTCOMES``, so index 0 is the +1 outcome and index 1 is the -1 outcome.
Alice's inputs x = 0, 1 stand for A, A'; Bob's y = 0, 1 for B, B'.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

OUTCOMES = (1, -1)
EXACT_TOL = 1e-12
FILE_TOL = 1e-9
NO_SIGNALING_TOL = 1e-9

# a*b for every (ia, ib) index pair
_SIGN = np.array([[1.0, -1.0], [-1.0, 1.0]])


class InvalidBoxError(ValueError):
    """Raised when an operation needs a valid box and gets something else."""


class Party(str, Enum):
    ALICE = "alice"
    BOB = "bob"


def outcome_index(value: int) -> int:
    if value == 1:
        return 0
    if value == -1:
        return 1
    raise ValueError(f"outcome must be +1 or -1, got {value!r}")


@dataclass(frozen=True, eq=False)
class ConditionalBox:
    """Immutable table of joint conditional probabilities p(a, b | x, y).

    Construction only checks the shape; use :func:`validate_box` to check
    nonnegativity and normalization.
    """

    probs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.probs, dtype=float, copy=True)
        if arr.shape != (2, 2, 2, 2):
            raise ValueError(f"box table must have shape (2, 2, 2, 2), got {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "probs", arr)

    def p(self, a: int, b: int, x: int, y: int) -> float:
        return float(self.probs[x, y, outcome_index(a), outcome_index(b)])

    def records(self):
        """Yield ``(x, y, a, b, p)`` in file order."""
        for x, y, ia, ib in itertools.product(range(2), repeat=4):
            yield x, y, OUTCOMES[ia], OUTCOMES[ib], float(self.probs[x, y, ia, ib])

    def allclose(self, other: "ConditionalBox", tol: float = EXACT_TOL) -> bool:
        return bool(np.max(np.abs(self.probs - other.probs)) <= tol)

    def __eq__(self, other):
        if not isinstance(other, ConditionalBox):
            return NotImplemented
        return bool(np.array_equal(self.probs, other.probs))

    def __hash__(self):
        return hash(self.probs.tobytes())

    def __repr__(self):
        return f"ConditionalBox({self.probs.tolist()!r})"


@dataclass(frozen=True)
class MarginalDistribution:
    p_plus: float
    p_minus: float

    def __post_init__(self):
        if self.p_plus < 0 or self.p_minus < 0 or abs(self.p_plus + self.p_minus - 1) > EXACT_TOL:
            raise ValueError(f"not a distribution: ({self.p_plus}, {self.p_minus})")


@dataclass(frozen=True)
class Violation:
    kind: str  # "negative" or "normalization"
    setting: tuple
    magnitude: float


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple = field(default_factory=tuple)

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.valid


@dataclass(frozen=True)
class NoSignalingReport:
    holds: bool
    worst_violation: float
    # (party, local input, remote inputs compared)
    witness: tuple
    tol: float


def validate_box(box: ConditionalBox, tol: float = EXACT_TOL) -> ValidationResult:
    """Check nonnegativity and per-setting normalization.

    Returns every violated constraint with its magnitude instead of raising.
    """
    violations = []
    probs = box.probs
    if not np.all(np.isfinite(probs)):
        for idx in zip(*np.nonzero(~np.isfinite(probs))):
            violations.append(Violation("non-finite", tuple(int(i) for i in idx), float("inf")))
        return ValidationResult(tuple(violations))
    for x, y, ia, ib in itertools.product(range(2), repeat=4):
        v = probs[x, y, ia, ib]
        if v < 0:
            violations.append(Violation("negative", (x, y, OUTCOMES[ia], OUTCOMES[ib]), float(-v)))
    for x, y in itertools.product(range(2), repeat=2):
        err = abs(float(probs[x, y].sum()) - 1.0)
        if err > tol:
            violations.append(Violation("normalization", (x, y), err))
    return ValidationResult(tuple(violations))


def require_valid(box: ConditionalBox, tol: float = EXACT_TOL) -> None:
    result = validate_box(box, tol)
    if not result.valid:
        worst = max(result.violations, key=lambda v: v.magnitude)
        raise InvalidBoxError(
            f"invalid box: {len(result.violations)} violated constraint(s), worst "
            f"{worst.kind} at {worst.setting} by {worst.magnitude:.3g}"
        )


def _marginal_plus(probs: np.ndarray, party: Party, local_input: int, remote_input: int) -> float:
    if party is Party.ALICE:
        return float(probs[local_input, remote_input, 0, :].sum())
    return float(probs[remote_input, local_input, :, 0].sum())


def marginal(
    box: ConditionalBox, party: Party | str, local_input: int, remote_input: int, tol: float = EXACT_TOL
) -> MarginalDistribution:
    """One party's outcome distribution for a given setting pair."""
    require_valid(box, tol)
    party = Party(party)
    if party is Party.ALICE:
        table = box.probs[local_input, remote_input].sum(axis=1)
    else:
        table = box.probs[remote_input, local_input].sum(axis=0)
    p_plus, p_minus = float(table[0]), float(table[1])
    # renormalize file-precision boxes so the value type's own check passes
    total = p_plus + p_minus
    return MarginalDistribution(p_plus / total, p_minus / total)


def check_no_signaling(
    box: ConditionalBox, tol: float = NO_SIGNALING_TOL, validity_tol: float = EXACT_TOL
) -> NoSignalingReport:
    """Compare each party's marginals across the two remote inputs."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    require_valid(box, validity_tol)
    worst, witness = -1.0, None
    for party in Party:
        for local in range(2):
            d = abs(_marginal_plus(box.probs, party, local, 0) - _marginal_plus(box.probs, party, local, 1))
            if d > worst:
                worst, witness = d, (party.value, local, (0, 1))
    return NoSignalingReport(holds=worst <= tol, worst_violation=worst, witness=witness, tol=tol)


def correlator(box: ConditionalBox, x: int, y: int) -> float:
    """E(x, y) = sum of a*b*p(a, b | x, y)."""
    return float((_SIGN * box.probs[x, y]).sum())


def correlators(box: ConditionalBox) -> tuple[float, float, float, float]:
    """(E00, E01, E10, E11), i.e. E(A,B), E(A,B'), E(A',B), E(A',B')."""
    return tuple(correlator(box, x, y) for x, y in itertools.product(range(2), repeat=2))


def box_from_correlations(e00: float, e01: float, e10: float, e11: float) -> ConditionalBox:
    """Symmetric box with uniform marginals and the given correlators.

    Per setting, p(+1,+1) = p(-1,-1) = (1 + E)/4 and p(+1,-1) = p(-1,+1) = (1 - E)/4.
    """
    es = np.array([[e00, e01], [e10, e11]], dtype=float)
    if not np.all(np.isfinite(es)) or np.any(np.abs(es) > 1):
        raise ValueError(f"correlators must lie in [-1, 1], got {es.ravel().tolist()}")
    same = (1 + es) / 4
    diff = (1 - es) / 4
    probs = np.empty((2, 2, 2, 2))
    probs[:, :, 0, 0] = same
    probs[:, :, 1, 1] = same
    probs[:, :, 0, 1] = diff
    probs[:, :, 1, 0] = diff
    return ConditionalBox(probs)


def mix(box_a: ConditionalBox, box_b: ConditionalBox, w: float) -> ConditionalBox:
    """w * box_a + (1 - w) * box_b, entrywise."""
    if not 0 <= w <= 1:
        raise ValueError(f"mixing weight must lie in [0, 1], got {w}")
    require_valid(box_a)
    require_valid(box_b)
    if w == 1:
        return box_a
    if w == 0:
        return box_b
    return ConditionalBox(w * box_a.probs + (1 - w) * box_b.probs)


def product_box(alice: np.ndarray, bob: np.ndarray) -> ConditionalBox:
    """p(a|x) q(b|y) from ``alice[x, ia]`` and ``bob[y, ib]``."""
    alice = np.asarray(alice, dtype=float)
    bob = np.asarray(bob, dtype=float)
    return ConditionalBox(np.einsum("xa,yb->xyab", alice, bob))


def response_value(index: int, setting: int) -> int:
    """Outcome of response function ``index`` (0..3) on input ``setting``.

    Bit ``1 - setting`` of the index selects the sign for that input, so
    index 0 is constant +1, 1 answers (+1, -1), 2 answers (-1, +1) and 3 is
    constant -1.
    """
    if not 0 <= index < 4:
        raise ValueError(f"response index must be in 0..3, got {index}")
    bit = (index >> (1 - setting)) & 1
    return OUTCOMES[bit]


def deterministic_box(f: int, g: int) -> ConditionalBox:
    """p(a, b | x, y) = [a = f(x)] [b = g(y)]."""
    alice = np.zeros((2, 2))
    bob = np.zeros((2, 2))
    for s in range(2):
        alice[s, outcome_index(response_value(f, s))] = 1
        bob[s, outcome_index(response_value(g, s))] = 1
    return product_box(alice, bob)


def pr_box() -> ConditionalBox:
    return box_from_correlations(1, 1, 1, -1)


def uniform_box() -> ConditionalBox:
    return ConditionalBox(np.full((2, 2, 2, 2), 0.25))
