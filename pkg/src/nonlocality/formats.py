"""Text and structured (JSON) file formats.

Box text format: 16 whitespace-separated records ``x y a b p`` with
x, y in {0, 1} and a, b in {+1, -1}; ``#`` starts a comment.

Box structured format::

    {"format": "conditional-box",
     "probabilities": {"0,0": {"+1,+1": 0.5, "+1,-1": 0.0, ...}, ...}}

Floats are written with ``repr`` so both formats round-trip exactly.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import re
from fractions import Fraction
from pathlib import Path

import numpy as np

from .bell import LocalityCertificate
from .boxes import OUTCOMES, ConditionalBox, deterministic_box, outcome_index, pr_box, uniform_box
from .correlations import AxisConfiguration, CorrelationModel, box_at_angles
from .jamming import SpacetimeEvent
from .sampler import Tally

BOX_FORMAT = "conditional-box"
TALLY_FORMAT = "tally"
CERTIFICATE_FORMAT = "locality-certificate"


class FormatError(ValueError):
    """Input could not be parsed."""


def _sign(v: int) -> str:
    return f"{v:+d}"


def _setting_key(x: int, y: int) -> str:
    return f"{x},{y}"


def _outcome_key(a: int, b: int) -> str:
    return f"{_sign(a)},{_sign(b)}"


def builtin_box(name: str) -> ConditionalBox:
    """``pr``, ``uniform``, ``quantum-2sqrt2`` or ``det-FG`` with F, G in 0..3."""
    key = name.strip().lower()
    if key == "pr":
        return pr_box()
    if key == "uniform":
        return uniform_box()
    if key == "quantum-2sqrt2":
        return box_at_angles(CorrelationModel.QUANTUM_COSINE, AxisConfiguration.evenly_spaced())
    m = re.fullmatch(r"det-([0-3])([0-3])", key)
    if m:
        return deterministic_box(int(m.group(1)), int(m.group(2)))
    raise KeyError(name)


def builtin_names() -> list[str]:
    return ["pr", "uniform", "quantum-2sqrt2"] + [f"det-{f}{g}" for f, g in itertools.product(range(4), repeat=2)]


def parse_box_text(text: str) -> ConditionalBox:
    probs = np.full((2, 2, 2, 2), np.nan)
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            raise FormatError(f"line {lineno}: expected 'x y a b p', got {raw.strip()!r}")
        try:
            x, y, a, b = (int(f) for f in fields[:4])
            p = float(fields[4])
        except ValueError:
            raise FormatError(f"line {lineno}: cannot parse {raw.strip()!r}") from None
        if x not in (0, 1) or y not in (0, 1) or a not in OUTCOMES or b not in OUTCOMES:
            raise FormatError(f"line {lineno}: inputs must be 0/1 and outcomes +1/-1")
        if not math.isfinite(p):
            raise FormatError(f"line {lineno}: probability must be finite")
        key = (x, y, a, b)
        if key in seen:
            raise FormatError(f"line {lineno}: duplicate record for {key}")
        seen.add(key)
        probs[x, y, outcome_index(a), outcome_index(b)] = p
    if len(seen) != 16:
        raise FormatError(f"expected 16 records, found {len(seen)}")
    return ConditionalBox(probs)


def format_box_text(box: ConditionalBox) -> str:
    lines = ["# x y a b p"]
    lines += [f"{x} {y} {_sign(a)} {_sign(b)} {p!r}" for x, y, a, b, p in box.records()]
    return "\n".join(lines) + "\n"


def box_to_structured(box: ConditionalBox) -> dict:
    probabilities = {}
    for x, y, a, b, p in box.records():
        probabilities.setdefault(_setting_key(x, y), {})[_outcome_key(a, b)] = p
    return {"format": BOX_FORMAT, "outcomes": list(OUTCOMES), "probabilities": probabilities}


def box_from_structured(doc: dict) -> ConditionalBox:
    if not isinstance(doc, dict) or doc.get("format", BOX_FORMAT) != BOX_FORMAT:
        raise FormatError("not a conditional-box document")
    table = doc.get("probabilities")
    if not isinstance(table, dict):
        raise FormatError("missing 'probabilities' map")
    probs = np.empty((2, 2, 2, 2))
    try:
        for x, y in itertools.product(range(2), repeat=2):
            row = table[_setting_key(x, y)]
            if len(row) != 4:
                raise FormatError(f"setting {x},{y} must list exactly 4 outcome pairs")
            for a, b in itertools.product(OUTCOMES, repeat=2):
                p = row[_outcome_key(a, b)]
                if isinstance(p, bool) or not isinstance(p, (int, float)) or not math.isfinite(p):
                    raise FormatError(f"bad probability {p!r} at {x},{y} {a},{b}")
                probs[x, y, outcome_index(a), outcome_index(b)] = p
    except (KeyError, TypeError) as exc:
        raise FormatError(f"incomplete box table: missing {exc}") from None
    if len(table) != 4:
        raise FormatError("box table must have exactly 4 settings")
    return ConditionalBox(probs)


def parse_box(text: str) -> ConditionalBox:
    """Parse either box format, detected from the first character."""
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc}") from None
        return box_from_structured(doc)
    return parse_box_text(text)


def dumps_structured(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_box(ref: str, base: Path | None = None) -> ConditionalBox:
    """Load a box from a built-in name or a file path."""
    try:
        return builtin_box(ref)
    except KeyError:
        pass
    path = Path(ref)
    if base is not None and not path.is_absolute():
        path = base / path
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read box {ref!r}: {exc.strerror or exc}") from None
    return parse_box(text)


def tally_to_csv(tally: Tally) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", "y", "a", "b", "count"])
    for x, y, ia, ib in itertools.product(range(2), repeat=4):
        writer.writerow([x, y, OUTCOMES[ia], OUTCOMES[ib], int(tally.counts[x, y, ia, ib])])
    return buf.getvalue()


def tally_from_csv(text: str) -> Tally:
    counts = np.zeros((2, 2, 2, 2), dtype=np.int64)
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != ["x", "y", "a", "b", "count"]:
        raise FormatError(f"unexpected CSV header {reader.fieldnames}")
    for row in reader:
        try:
            x, y, a, b, n = (int(row[k]) for k in ("x", "y", "a", "b", "count"))
            counts[x, y, outcome_index(a), outcome_index(b)] += n
        except (ValueError, IndexError):
            raise FormatError(f"bad tally row {row}") from None
    return Tally(counts)


def tally_to_structured(tally: Tally) -> dict:
    counts = {}
    for x, y, ia, ib in itertools.product(range(2), repeat=4):
        counts.setdefault(_setting_key(x, y), {})[_outcome_key(OUTCOMES[ia], OUTCOMES[ib])] = int(
            tally.counts[x, y, ia, ib]
        )
    return {"format": TALLY_FORMAT, "counts": counts, "total": tally.total}


def certificate_to_structured(cert: LocalityCertificate) -> dict:
    doc = {
        "format": CERTIFICATE_FORMAT,
        "is_local": cert.is_local,
        "tol": cert.tol,
        "residual": cert.residual,
    }
    if cert.is_local:
        doc["weights"] = [
            {"f": f, "g": g, "weight": w} for (f, g), w in sorted(cert.weights_by_response().items())
        ]
    else:
        v = cert.violated_inequality
        doc["violated_inequality"] = {
            "coefficients": list(v.coefficients),
            "label": v.label,
            "value": v.value,
        }
    return doc


_PI_RE = re.compile(r"^([+-]?\d*)\s*\*?\s*(?:pi|π)\s*(?:/\s*(\d+))?$")


def parse_angle(text: str) -> float:
    """Radians from ``pi/4``, ``3pi/4``, ``-pi``, ``2*pi/3`` or a decimal."""
    s = text.strip().lower()
    m = _PI_RE.match(s)
    if m:
        num = m.group(1)
        if num in ("", "+"):
            num = "1"
        elif num == "-":
            num = "-1"
        den = int(m.group(2) or 1)
        if den == 0:
            raise ValueError(f"zero denominator in angle {text!r}")
        frac = Fraction(int(num), den)
        return frac.numerator * math.pi / frac.denominator
    try:
        value = float(s)
    except ValueError:
        raise ValueError(f"cannot parse angle {text!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"angle must be finite: {text!r}")
    return value


def _event(record) -> SpacetimeEvent:
    try:
        return SpacetimeEvent(float(record["t"]), float(record["x"]))
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"event needs numeric 't' and 'x': {record!r}") from None


def parse_scenario(doc: dict, base: Path | None = None) -> dict:
    """Read a jamming scenario document.

    ``events`` is either a map ``{"A": {"t": .., "x": ..}, ...}`` or a list of
    ``{"label": "A", "t": .., "x": ..}`` records.  Boxes are built-in names or
    paths (relative to ``base``).  Returns a dict with ``events``,
    ``box_off``, ``box_on`` and any of ``rounds``, ``seed``,
    ``button_schedule``, ``settings``.
    """
    if not isinstance(doc, dict):
        raise FormatError("scenario must be a JSON object")
    raw = doc.get("events")
    if isinstance(raw, list):
        try:
            raw = {r["label"]: r for r in raw}
        except (KeyError, TypeError):
            raise FormatError("event records need a 'label'") from None
    if not isinstance(raw, dict) or not {"A", "B", "J"} <= set(raw):
        raise FormatError("scenario needs events A, B and J")
    out = {
        "events": {k: _event(raw[k]) for k in ("A", "B", "J")},
        "box_off": load_box(str(doc.get("box_off", "pr")), base),
        "box_on": load_box(str(doc.get("box_on", "uniform")), base),
    }
    for key in ("rounds", "seed", "button_schedule", "settings"):
        if key in doc:
            out[key] = doc[key]
    return out


def load_scenario(path: str | Path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise FormatError(f"cannot read scenario {str(path)!r}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid scenario JSON: {exc}") from None
    return parse_scenario(doc, path.parent)
