"""Jamming of nonlocal correlations by a third party in 1+1D Minkowski space.

Units have c = 1.  Forward light cones are closed: lightlike points count
as inside.  Event coordinates may be ints, floats, Fractions or numpy
arrays; with exact inputs every predicate here is exact.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .boxes import (
    NO_SIGNALING_TOL,
    ConditionalBox,
    Party,
    _marginal_plus,
    check_no_signaling,
    correlator,
    require_valid,
)
from .sampler import (
    BATCH_ROUNDS,
    ExperimentPlan,
    Tally,
    chsh_estimate,
    draw_outcome_index,
    estimate_correlators,
    outcome_cdf,
    round_words,
    to_unit,
    two_proportion_z,
)


class IntervalClass(str, Enum):
    TIMELIKE = "timelike"
    LIGHTLIKE = "lightlike"
    SPACELIKE = "spacelike"


@dataclass(frozen=True)
class SpacetimeEvent:
    t: object
    x: object

    def __post_init__(self):
        if not (np.all(np.isfinite(np.asarray(self.t, dtype=float))) and np.all(np.isfinite(np.asarray(self.x, dtype=float)))):
            raise ValueError(f"event coordinates must be finite, got t={self.t!r}, x={self.x!r}")

    @property
    def u(self):
        """Retarded light-cone coordinate t - x."""
        return self.t - self.x

    @property
    def v(self):
        """Advanced light-cone coordinate t + x."""
        return self.t + self.x


def _vmax(a, b):
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.maximum(a, b)
    return max(a, b)


def interval_class(e1: SpacetimeEvent, e2: SpacetimeEvent) -> IntervalClass:
    dt = abs(e2.t - e1.t)
    dx = abs(e2.x - e1.x)
    if dt > dx:
        return IntervalClass.TIMELIKE
    if dt == dx:
        return IntervalClass.LIGHTLIKE
    return IntervalClass.SPACELIKE


def in_forward_cone(p: SpacetimeEvent, apex: SpacetimeEvent):
    """t_p - t_apex >= |x_p - x_apex|."""
    return (p.t - apex.t) >= abs(p.x - apex.x)


def forward_cone_intersection_apex(a: SpacetimeEvent, b: SpacetimeEvent) -> SpacetimeEvent:
    """Apex of the cone equal to (forward cone of a) & (forward cone of b).

    A forward cone is the quadrant u >= u0, v >= v0 in light-cone
    coordinates, so the intersection is the quadrant at the componentwise
    maximum.  For x_a <= x_b and a, b not timelike this is
    ((t_a + t_b + x_b - x_a) / 2, (x_a + x_b + t_b - t_a) / 2); for timelike
    pairs it is the later event.
    """
    u = _vmax(a.u, b.u)
    v = _vmax(a.v, b.v)
    return SpacetimeEvent((u + v) / 2, (v - u) / 2)


def binary_condition(a: SpacetimeEvent, b: SpacetimeEvent, j: SpacetimeEvent):
    """The overlap of the forward cones of a and b lies inside j's forward cone."""
    return in_forward_cone(forward_cone_intersection_apex(a, b), j)


def marginal_discrepancy(box_1: ConditionalBox, box_2: ConditionalBox) -> float:
    """Largest single-party marginal difference over party, local and remote input."""
    worst = 0.0
    for party in Party:
        for local in range(2):
            for remote in range(2):
                d = abs(_marginal_plus(box_1.probs, party, local, remote) - _marginal_plus(box_2.probs, party, local, remote))
                worst = max(worst, d)
    return worst


def unary_condition(box_on: ConditionalBox, box_off: ConditionalBox, tol: float = NO_SIGNALING_TOL) -> bool:
    """Neither party can tell the two boxes apart from their own outcomes."""
    require_valid(box_on)
    require_valid(box_off)
    return marginal_discrepancy(box_on, box_off) <= tol


@dataclass(frozen=True)
class JammingScenario:
    event_a: SpacetimeEvent
    event_b: SpacetimeEvent
    event_j: SpacetimeEvent
    box_off: ConditionalBox
    box_on: ConditionalBox

    def __post_init__(self):
        for name in ("box_off", "box_on"):
            box = getattr(self, name)
            require_valid(box)
            report = check_no_signaling(box)
            if not report.holds:
                raise ValueError(f"{name} is signaling (worst violation {report.worst_violation:.3g})")


@dataclass(frozen=True)
class ConditionReport:
    spacelike_ok: bool
    unary_ok: bool
    binary_ok: bool
    intervals: dict = field(default_factory=dict)
    marginal_discrepancy: float = 0.0
    warnings: tuple = ()

    @property
    def admissible(self) -> bool:
        return self.spacelike_ok and self.unary_ok and self.binary_ok

    @property
    def failed(self) -> list[str]:
        names = [("spacelike", self.spacelike_ok), ("unary", self.unary_ok), ("binary", self.binary_ok)]
        return [n for n, ok in names if not ok]


class InadmissibleScenarioError(ValueError):
    def __init__(self, report: ConditionReport):
        self.report = report
        super().__init__(f"inadmissible jamming scenario; failed: {', '.join(report.failed)}")


def check_scenario(s: JammingScenario, tol: float = NO_SIGNALING_TOL) -> ConditionReport:
    """Evaluate spacelike separation, the unary condition and the binary condition.

    A-B must be strictly spacelike.  A lightlike A-J or B-J pair is accepted
    with a warning.
    """
    intervals = {
        "A-B": interval_class(s.event_a, s.event_b),
        "A-J": interval_class(s.event_a, s.event_j),
        "B-J": interval_class(s.event_b, s.event_j),
    }
    notes = []
    spacelike_ok = intervals["A-B"] is IntervalClass.SPACELIKE
    for pair in ("A-J", "B-J"):
        cls = intervals[pair]
        if cls is IntervalClass.LIGHTLIKE:
            notes.append(f"{pair} separation is lightlike, not strictly spacelike")
        elif cls is not IntervalClass.SPACELIKE:
            spacelike_ok = False
    for note in notes:
        warnings.warn(note, stacklevel=2)
    disc = marginal_discrepancy(s.box_on, s.box_off)
    return ConditionReport(
        spacelike_ok=spacelike_ok,
        unary_ok=disc <= tol,
        binary_ok=bool(binary_condition(s.event_a, s.event_b, s.event_j)),
        intervals={k: v.value for k, v in intervals.items()},
        marginal_discrepancy=disc,
        warnings=tuple(notes),
    )


@dataclass(frozen=True)
class ButtonSchedule:
    kind: str  # "all", "none", "alternate" or "bernoulli"
    p: float = 0.5

    def __post_init__(self):
        if self.kind not in ("all", "none", "alternate", "bernoulli"):
            raise ValueError(f"unknown button schedule {self.kind!r}")
        if not 0 <= self.p <= 1:
            raise ValueError("bernoulli probability must lie in [0, 1]")

    @classmethod
    def parse(cls, text: str) -> "ButtonSchedule":
        """``all``, ``none``, ``alternate`` or ``bernoulli:P``."""
        text = text.strip().lower()
        if text.startswith("bernoulli"):
            _, _, rest = text.partition(":")
            try:
                return cls("bernoulli", float(rest) if rest else 0.5)
            except ValueError:
                raise ValueError(f"bad bernoulli schedule {text!r}") from None
        return cls(text)

    def __str__(self):
        return f"bernoulli:{self.p!r}" if self.kind == "bernoulli" else self.kind

    def pressed(self, words: np.ndarray, start: int) -> np.ndarray:
        n = words.shape[0]
        if self.kind == "all":
            return np.ones(n, dtype=bool)
        if self.kind == "none":
            return np.zeros(n, dtype=bool)
        if self.kind == "alternate":
            # pressed on odd rounds
            return (np.arange(start, start + n) % 2) == 1
        return to_unit(words[:, 3]) < self.p


@dataclass(frozen=True, eq=False)
class JammingTranscript:
    x: np.ndarray
    y: np.ndarray
    a: np.ndarray
    b: np.ndarray
    pressed: np.ndarray

    @property
    def rounds(self) -> int:
        return int(self.x.size)

    def alice_view(self) -> tuple[np.ndarray, np.ndarray]:
        return self.x, self.a

    def bob_view(self) -> tuple[np.ndarray, np.ndarray]:
        return self.y, self.b

    def tally(self, pressed: bool | None = None) -> Tally:
        mask = slice(None) if pressed is None else (self.pressed == pressed)
        ia = (self.a[mask] == -1).astype(np.intp)
        ib = (self.b[mask] == -1).astype(np.intp)
        return Tally.from_rounds(self.x[mask], self.y[mask], ia, ib)

    def unary_z_scores(self) -> dict:
        """z of P(+1) between pressed and unpressed rounds, per (party, local input)."""
        out = {}
        for party, inputs, outs in (
            (Party.ALICE, self.x, self.a),
            (Party.BOB, self.y, self.b),
        ):
            for local in range(2):
                on = (inputs == local) & self.pressed
                off = (inputs == local) & ~self.pressed
                n_on, n_off = int(on.sum()), int(off.sum())
                if n_on == 0 or n_off == 0:
                    out[(party.value, local)] = math.nan
                    continue
                k_on = int((outs[on] == 1).sum())
                k_off = int((outs[off] == 1).sum())
                out[(party.value, local)] = two_proportion_z(k_on, n_on, k_off, n_off)
        return out

    def chsh_by_button(self) -> dict:
        """{pressed: (CHSH estimate, combined standard error)} for each subset.

        A subset missing any setting pair maps to ``None``.
        """
        out = {}
        for flag in (True, False):
            est = estimate_correlators(self.tally(flag))
            out[flag] = None if any(e is None for e in est.values()) else chsh_estimate(est)
        return out


def _coerce_buttons(button_schedule, rounds: int):
    if isinstance(button_schedule, str):
        return ButtonSchedule.parse(button_schedule)
    if isinstance(button_schedule, ButtonSchedule):
        return button_schedule
    arr = np.asarray(button_schedule, dtype=bool)
    if arr.shape != (rounds,):
        raise ValueError(f"button schedule must have one entry per round ({rounds}), got shape {arr.shape}")
    return arr


def simulate_jamming(
    s: JammingScenario,
    plan: ExperimentPlan,
    button_schedule="bernoulli:0.5",
    tol: float = NO_SIGNALING_TOL,
) -> JammingTranscript:
    """Run ``plan`` drawing from box_on in pressed rounds and box_off otherwise.

    ``button_schedule`` is a schedule name, a :class:`ButtonSchedule`, or one
    boolean per round.  Inadmissible scenarios raise
    :class:`InadmissibleScenarioError`.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = check_scenario(s, tol)
    if not report.admissible:
        raise InadmissibleScenarioError(report)
    buttons = _coerce_buttons(button_schedule, plan.rounds)
    cdfs = np.stack([outcome_cdf(s.box_off), outcome_cdf(s.box_on)])

    xs, ys, ks, ps = [], [], [], []
    for start in range(0, plan.rounds, BATCH_ROUNDS):
        n = min(BATCH_ROUNDS, plan.rounds - start)
        words = round_words(plan.seed, start, n)
        x, y = plan.schedule.settings(words, start)
        if isinstance(buttons, ButtonSchedule):
            pressed = buttons.pressed(words, start)
        else:
            pressed = buttons[start : start + n]
        k = draw_outcome_index(cdfs[pressed.astype(np.intp), x, y], to_unit(words[:, 2]))
        xs.append(x)
        ys.append(y)
        ks.append(k)
        ps.append(pressed)
    k = np.concatenate(ks)
    values = np.array([1, -1], dtype=np.int8)
    return JammingTranscript(
        x=np.concatenate(xs).astype(np.int8),
        y=np.concatenate(ys).astype(np.int8),
        a=values[k // 2],
        b=values[k % 2],
        pressed=np.concatenate(ps),
    )


def jammed_correlators(s: JammingScenario) -> dict:
    """Exact correlators with and without the button, keyed by pressed flag."""
    return {
        flag: tuple(correlator(box, x, y) for x in range(2) for y in range(2))
        for flag, box in ((True, s.box_on), (False, s.box_off))
    }
