"""Seeded Monte Carlo measurement rounds on a box.

Round ``i`` of a run with seed ``s`` draws its randomness from block ``i`` of
a Philox4x64 stream keyed by ``s``.  Each block yields four 64-bit words:

    word 0  Alice's input (uniform schedule)
    word 1  Bob's input (uniform schedule)
    word 2  outcome pair, by inverse CDF over (+1,+1), (+1,-1), (-1,+1), (-1,-1)
    word 3  jamming button (Bernoulli schedules)

Any partition of the rounds into batches therefore gives the same draws.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .boxes import OUTCOMES, ConditionalBox, Party, require_valid

BATCH_ROUNDS = 1 << 18
MIN_ROUNDS_PER_SETTING = 100
_OUTCOME_VALUES = np.array(OUTCOMES, dtype=np.int8)


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def round_words(seed: int, start: int, count: int) -> np.ndarray:
    """Random words for rounds ``start .. start + count - 1``, shape (count, 4)."""
    bitgen = np.random.Philox(key=_check_seed(seed), counter=[start, 0, 0, 0])
    return bitgen.random_raw(4 * count).reshape(count, 4)


def to_unit(words: np.ndarray) -> np.ndarray:
    """Uniform doubles in [0, 1) from the top 53 bits."""
    return (words >> np.uint64(11)).astype(np.float64) * 2.0**-53


def outcome_cdf(box: ConditionalBox) -> np.ndarray:
    """Cumulative outcome-pair probabilities, shape (2, 2, 4)."""
    return np.cumsum(box.probs.reshape(2, 2, 4), axis=-1)


def draw_outcome_index(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw; ``cdf_rows`` has one 4-entry row per draw."""
    idx = (cdf_rows[..., :3] <= u[..., None]).sum(axis=-1)
    return idx


class RoundStream:
    """Round-indexed random source; each call consumes one round."""

    def __init__(self, seed: int, counter: int = 0):
        self.seed = _check_seed(seed)
        self.counter = counter

    def next_block(self) -> np.ndarray:
        block = round_words(self.seed, self.counter, 1)[0]
        self.counter += 1
        return block


def sample_round(box: ConditionalBox, x: int, y: int, rng: RoundStream) -> tuple[int, int]:
    """Draw one outcome pair from p(., . | x, y)."""
    require_valid(box)
    block = rng.next_block()
    u = to_unit(block[2:3])
    k = int(draw_outcome_index(outcome_cdf(box)[x, y][None, :], u)[0])
    ia, ib = divmod(k, 2)
    return OUTCOMES[ia], OUTCOMES[ib]


@dataclass(frozen=True)
class SettingSchedule:
    kind: str  # "uniform", "fixed" or "round-robin"
    setting: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "fixed", "round-robin"):
            raise ValueError(f"unknown setting schedule {self.kind!r}")
        if self.kind == "fixed":
            if self.setting is None or any(s not in (0, 1) for s in self.setting) or len(self.setting) != 2:
                raise ValueError("fixed schedule needs a setting pair of bits")

    @classmethod
    def parse(cls, text: str) -> "SettingSchedule":
        """``uniform``, ``round-robin`` or ``fixed:X,Y``."""
        text = text.strip().lower()
        if text in ("uniform", "uniform-random", "random"):
            return cls("uniform")
        if text in ("round-robin", "roundrobin"):
            return cls("round-robin")
        if text.startswith("fixed"):
            _, _, rest = text.partition(":")
            try:
                x, y = (int(v) for v in rest.replace("(", "").replace(")", "").split(","))
            except ValueError:
                raise ValueError(f"bad fixed schedule {text!r}; expected fixed:X,Y") from None
            return cls("fixed", (x, y))
        raise ValueError(f"unknown setting schedule {text!r}")

    def __str__(self):
        if self.kind == "fixed":
            return f"fixed:{self.setting[0]},{self.setting[1]}"
        return self.kind

    def settings(self, words: np.ndarray, start: int) -> tuple[np.ndarray, np.ndarray]:
        n = words.shape[0]
        if self.kind == "uniform":
            return (words[:, 0] >> np.uint64(63)).astype(np.intp), (words[:, 1] >> np.uint64(63)).astype(np.intp)
        if self.kind == "fixed":
            return np.full(n, self.setting[0], dtype=np.intp), np.full(n, self.setting[1], dtype=np.intp)
        k = (np.arange(start, start + n) % 4).astype(np.intp)
        return k // 2, k % 2


@dataclass(frozen=True)
class ExperimentPlan:
    rounds: int
    schedule: SettingSchedule = SettingSchedule("uniform")
    seed: int = 0

    def __post_init__(self):
        if int(self.rounds) < 1:
            raise ValueError("rounds must be at least 1")
        _check_seed(self.seed)
        if isinstance(self.schedule, str):
            object.__setattr__(self, "schedule", SettingSchedule.parse(self.schedule))


@dataclass(frozen=True, eq=False)
class Tally:
    """Outcome counts indexed ``[x, y, ia, ib]``."""

    counts: np.ndarray

    def __post_init__(self):
        arr = np.array(self.counts, dtype=np.int64, copy=True)
        if arr.shape != (2, 2, 2, 2) or np.any(arr < 0):
            raise ValueError("tally counts must be a nonnegative (2, 2, 2, 2) table")
        arr.flags.writeable = False
        object.__setattr__(self, "counts", arr)

    @classmethod
    def empty(cls) -> "Tally":
        return cls(np.zeros((2, 2, 2, 2), dtype=np.int64))

    @property
    def rounds_per_setting(self) -> np.ndarray:
        return self.counts.sum(axis=(2, 3))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "Tally") -> "Tally":
        return Tally(self.counts + other.counts)

    def __eq__(self, other):
        if not isinstance(other, Tally):
            return NotImplemented
        return bool(np.array_equal(self.counts, other.counts))

    def __hash__(self):
        return hash(self.counts.tobytes())

    @classmethod
    def from_rounds(cls, x, y, ia, ib) -> "Tally":
        flat = ((np.asarray(x) * 2 + np.asarray(y)) * 2 + np.asarray(ia)) * 2 + np.asarray(ib)
        return cls(np.bincount(flat, minlength=16).reshape(2, 2, 2, 2))


def _run_batch(box: ConditionalBox, plan: ExperimentPlan, start: int, count: int) -> Tally:
    words = round_words(plan.seed, start, count)
    x, y = plan.schedule.settings(words, start)
    k = draw_outcome_index(outcome_cdf(box)[x, y], to_unit(words[:, 2]))
    return Tally.from_rounds(x, y, k // 2, k % 2)


def run_experiment(
    box: ConditionalBox, plan: ExperimentPlan, workers: int = 1, batch_rounds: int = BATCH_ROUNDS
) -> Tally:
    """Sample ``plan.rounds`` rounds; the tally depends only on (box, plan)."""
    require_valid(box)
    starts = range(0, plan.rounds, batch_rounds)
    jobs = [(s, min(batch_rounds, plan.rounds - s)) for s in starts]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda j: _run_batch(box, plan, *j), jobs))
    else:
        parts = [_run_batch(box, plan, *j) for j in jobs]
    total = Tally.empty()
    for part in parts:
        total = total + part
    return total


@dataclass(frozen=True)
class CorrelatorEstimate:
    estimate: float
    standard_error: float
    rounds: int


def estimate_correlators(tally: Tally) -> dict:
    """Sample mean of a*b per setting with its standard error.

    Keys are (x, y); settings with no rounds map to ``None``.
    """
    out = {}
    for x, y in itertools.product(range(2), repeat=2):
        c = tally.counts[x, y]
        n = int(c.sum())
        if n == 0:
            out[(x, y)] = None
            continue
        mean = float(c[0, 0] + c[1, 1] - c[0, 1] - c[1, 0]) / n
        if n > 1:
            var = max(n / (n - 1) * (1.0 - mean * mean), 0.0)
            se = math.sqrt(var / n)
        else:
            se = math.nan
        out[(x, y)] = CorrelatorEstimate(mean, se, n)
    return out


def chsh_estimate(estimates: dict) -> tuple[float, float]:
    """CHSH value and combined standard error from per-setting estimates."""
    missing = [k for k, v in estimates.items() if v is None]
    if missing:
        raise ValueError(f"settings without rounds: {missing}")
    signs = {(0, 0): 1, (0, 1): 1, (1, 0): 1, (1, 1): -1}
    value = sum(signs[k] * estimates[k].estimate for k in signs)
    se = math.sqrt(sum(estimates[k].standard_error ** 2 for k in signs))
    return value, se


def two_proportion_z(k1: int, n1: int, k2: int, n2: int) -> float:
    """Pooled two-proportion z statistic; 0 when the pooled variance vanishes."""
    p1, p2 = k1 / n1, k2 / n2
    pooled = (k1 + k2) / (n1 + n2)
    var = pooled * (1 - pooled) * (1 / n1 + 1 / n2)
    if var <= 0:
        return 0.0
    return (p1 - p2) / math.sqrt(var)


@dataclass(frozen=True)
class EmpiricalNoSignalingReport:
    # keyed by (party, local input)
    z_scores: dict
    max_abs_z: float
    # settings (x, y) with fewer than MIN_ROUNDS_PER_SETTING rounds
    insufficient: tuple

    def holds(self, threshold: float = 5.0) -> bool:
        return self.max_abs_z < threshold


def _plus_counts(counts: np.ndarray, party: Party, local: int, remote: int) -> tuple[int, int]:
    if party is Party.ALICE:
        c = counts[local, remote]
        return int(c[0].sum()), int(c.sum())
    c = counts[remote, local]
    return int(c[:, 0].sum()), int(c.sum())


def empirical_no_signaling(tally: Tally) -> EmpiricalNoSignalingReport:
    """Two-proportion z-test of each marginal across the two remote inputs."""
    per_setting = tally.rounds_per_setting
    if np.any(per_setting == 0):
        raise ValueError("every setting pair needs at least one round")
    insufficient = tuple(
        (x, y) for x, y in itertools.product(range(2), repeat=2) if per_setting[x, y] < MIN_ROUNDS_PER_SETTING
    )
    z = {}
    for party in Party:
        for local in range(2):
            k0, n0 = _plus_counts(tally.counts, party, local, 0)
            k1, n1 = _plus_counts(tally.counts, party, local, 1)
            z[(party.value, local)] = two_proportion_z(k0, n0, k1, n1)
    return EmpiricalNoSignalingReport(z, max(abs(v) for v in z.values()), insufficient)
