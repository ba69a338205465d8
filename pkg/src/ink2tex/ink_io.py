"""Ink and vocabulary parsing/serialization.

Two ink formats are supported: a minimal InkML subset (trace coordinates
plus one truth annotation) and a plain text point format, one
``x y stroke_id`` record per line with an optional final ``#label ...``
line. No numerics happen here.
"""

from __future__ import annotations

import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

from .errors import EmptyInkError, InkFormatError, InkParseError, VocabularyError

logger = logging.getLogger(__name__)

SOS_INDEX = 0
EOS_INDEX = 1
UNK_INDEX = 2
SOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"
UNK_TOKEN = "<unk>"
RESERVED_TOKENS = (SOS_TOKEN, EOS_TOKEN, UNK_TOKEN)


@dataclass(frozen=True)
class TrajectoryPoint:
    """One pen sample: device coordinates plus the stroke it belongs to."""

    x: float
    y: float
    stroke_id: int


@dataclass
class Ink:
    """An ordered pen trajectory with optional ground-truth token label."""

    points: list[TrajectoryPoint]
    label: list[str] | None = None

    def __post_init__(self) -> None:
        if not self.points:
            raise EmptyInkError("ink must contain at least one point")
        prev = self.points[0].stroke_id
        for i, p in enumerate(self.points):
            if not (_is_finite(p.x) and _is_finite(p.y)):
                raise InkFormatError(f"non-finite coordinate at point {i}")
            if p.stroke_id < prev:
                raise InkFormatError(
                    f"stroke_id decreased from {prev} to {p.stroke_id} at point {i}"
                )
            prev = p.stroke_id

    def __len__(self) -> int:
        return len(self.points)

    @property
    def stroke_count(self) -> int:
        return self.points[-1].stroke_id + 1

    def strokes(self) -> list[list[TrajectoryPoint]]:
        """Points grouped by stroke, in order."""
        groups: list[list[TrajectoryPoint]] = [[] for _ in range(self.stroke_count)]
        for p in self.points:
            groups[p.stroke_id].append(p)
        return groups


@dataclass
class Vocabulary:
    """Bijective token/index mapping with three fixed reserved slots.

    Index 0 is start-of-sequence, 1 end-of-sequence, 2 unknown; content
    tokens follow in file order. ``len(vocab)`` is K, counting reserved.
    """

    tokens: list[str]
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._index = {}
        for i, tok in enumerate(self.tokens):
            if tok in self._index:
                raise VocabularyError(f"duplicate token {tok!r} at indices "
                                      f"{self._index[tok]} and {i}")
            self._index[tok] = i
        if self.tokens[:3] != list(RESERVED_TOKENS):
            raise VocabularyError(
                f"reserved tokens must occupy indices 0..2, got {self.tokens[:3]!r}"
            )

    @classmethod
    def from_content_tokens(cls, content: list[str]) -> "Vocabulary":
        return cls(list(RESERVED_TOKENS) + list(content))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise VocabularyError(f"token {token!r} not in vocabulary") from None

    def index_or_unk(self, token: str) -> int:
        return self._index.get(token, UNK_INDEX)

    def token(self, idx: int) -> str:
        if not 0 <= idx < len(self.tokens):
            raise VocabularyError(f"index {idx} out of range for K={len(self.tokens)}")
        return self.tokens[idx]

    def encode_label(self, label: list[str]) -> list[int]:
        """Map label tokens to indices; unknown tokens become UNK with a warning."""
        out = []
        for tok in label:
            idx = self._index.get(tok)
            if idx is None:
                logger.warning("unknown label token %r mapped to %s", tok, UNK_TOKEN)
                idx = UNK_INDEX
            out.append(idx)
        return out

    def decode(self, indices: list[int]) -> list[str]:
        return [self.token(i) for i in indices]

    def content_text(self) -> str:
        """Serialize content tokens, one per line (the vocabulary file format)."""
        return "".join(tok + "\n" for tok in self.tokens[3:])


def _is_finite(v: float) -> bool:
    return v == v and v not in (float("inf"), float("-inf"))


def _local_name(tag: str) -> str:
    # InkML files carry an xmlns; match on the local element name.
    return tag.rsplit("}", 1)[-1]


def _byte_offset(data: bytes, line: int, column: int) -> int:
    lines = data.split(b"\n")
    return sum(len(ln) + 1 for ln in lines[: line - 1]) + column


def parse_inkml(data: bytes) -> Ink:
    """Parse the InkML subset: ``trace`` coordinates and one truth annotation.

    Stroke ids are the 0-based ordinals of the enclosing traces. Timestamps
    (a third number per coordinate group) are ignored.
    """
    if not data.strip():
        raise EmptyInkError("empty InkML input")
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        line, column = exc.position
        offset = _byte_offset(data, line, column)
        raise InkParseError(
            f"malformed XML at byte offset {offset} (line {line}, column {column}): "
            f"{exc.msg if hasattr(exc, 'msg') else exc}"
        ) from exc

    points: list[TrajectoryPoint] = []
    label: list[str] | None = None
    trace_ordinal = 0
    for elem in root.iter():
        name = _local_name(elem.tag)
        if name == "trace":
            trace_name = elem.get("id") or elem.get(
                "{http://www.w3.org/XML/1998/namespace}id"
            ) or f"#{trace_ordinal}"
            points.extend(_parse_trace(elem.text or "", trace_name, trace_ordinal))
            trace_ordinal += 1
        elif name == "annotation" and elem.get("type") == "truth" and label is None:
            label = (elem.text or "").split()
    if trace_ordinal == 0:
        raise EmptyInkError("InkML input contains no trace elements")
    return Ink(points, label=label or None)


def _parse_trace(text: str, trace_name: str, ordinal: int) -> list[TrajectoryPoint]:
    points = []
    for group in text.split(","):
        fields = group.split()
        if not fields:
            continue
        if len(fields) not in (2, 3):  # third field, when present, is a timestamp
            raise InkFormatError(
                f"trace {trace_name}: coordinate group {group.strip()!r} has "
                f"{len(fields)} fields, expected 'x y'"
            )
        try:
            x, y = float(fields[0]), float(fields[1])
        except ValueError:
            raise InkFormatError(
                f"trace {trace_name}: non-numeric coordinate in {group.strip()!r}"
            ) from None
        points.append(TrajectoryPoint(x, y, ordinal))
    if not points:
        raise InkFormatError(f"trace {trace_name} contains no coordinates")
    return points


def parse_points(text: str) -> Ink:
    """Parse the plain point format: ``x y stroke_id`` lines, optional label.

    Stroke ids must be non-decreasing and are remapped to dense 0-based
    ordinals so every parsed ink starts at stroke 0.
    """
    points: list[TrajectoryPoint] = []
    label: list[str] | None = None
    prev_raw: int | None = None
    stroke_id = -1
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#label"):
            if label is not None:
                raise InkFormatError(f"line {lineno}: duplicate #label line")
            label = line[len("#label"):].split()
            continue
        if label is not None:
            raise InkFormatError(f"line {lineno}: point record after #label line")
        fields = line.split()
        if len(fields) != 3:
            raise InkFormatError(
                f"line {lineno}: expected 'x y stroke_id', got {len(fields)} fields"
            )
        try:
            x, y = float(fields[0]), float(fields[1])
            raw_stroke = int(fields[2])
        except ValueError:
            raise InkFormatError(f"line {lineno}: non-numeric field in {line!r}") from None
        if raw_stroke < 0:
            raise InkFormatError(f"line {lineno}: negative stroke_id {raw_stroke}")
        if prev_raw is not None and raw_stroke < prev_raw:
            raise InkFormatError(
                f"line {lineno}: stroke_id decreased from {prev_raw} to {raw_stroke}"
            )
        if raw_stroke != prev_raw:
            stroke_id += 1
            prev_raw = raw_stroke
        points.append(TrajectoryPoint(x, y, stroke_id))
    if not points:
        raise EmptyInkError("point input contains no records")
    return Ink(points, label=label)


def serialize_points(ink: Ink) -> str:
    """Serialize to the plain point format (17 significant digits, LF endings)."""
    lines = [f"{p.x:.17g} {p.y:.17g} {p.stroke_id}" for p in ink.points]
    if ink.label is not None:
        lines.append("#label " + " ".join(ink.label))
    return "\n".join(lines) + "\n"


def load_vocabulary(text: str) -> Vocabulary:
    """Load a vocabulary file: one token per line, reserved tokens implicit."""
    content: list[str] = []
    seen: dict[str, int] = {}
    reserved = {tok: i for i, tok in enumerate(RESERVED_TOKENS)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        token = line.strip()
        if not token:
            continue
        if token in reserved:
            raise VocabularyError(
                f"token {token!r} on line {lineno} collides with reserved index "
                f"{reserved[token]}"
            )
        if token in seen:
            raise VocabularyError(
                f"duplicate token {token!r} on lines {seen[token]} and {lineno}"
            )
        seen[token] = lineno
        content.append(token)
    return Vocabulary.from_content_tokens(content)
