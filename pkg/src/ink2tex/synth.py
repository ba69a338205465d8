"""Deterministic synthetic handwriting: small LaTeX expressions laid out
from hand-authored stroke templates.

Five spatial relations are realized geometrically: horizontal appending,
superscript (up-right, scaled 0.6), subscript (down-right, scaled 0.6),
vertical stacking (fractions), and inside-nesting (radicals). Structure
tokens (^ _ { }) are label-only; every other symbol draws one or more
polyline strokes. Output is fully determined by the seed.

Coordinates here put y upward; downstream normalization only translates
and scales, so "above" stays above in the features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .ink_io import Ink, TrajectoryPoint, Vocabulary

# Polyline prototypes in a roughly unit box, y up. Tuples of strokes.
STROKE_TEMPLATES: dict[str, tuple[tuple[tuple[float, float], ...], ...]] = {
    "x": (((0.0, 1.0), (1.0, 0.0), (1.0, 1.0), (0.0, 0.0)),),
    "e": (((0.1, 0.55), (0.9, 0.55), (0.85, 0.85), (0.5, 1.0), (0.1, 0.7),
           (0.05, 0.3), (0.45, 0.0), (0.9, 0.1)),),
    "0": (((0.5, 1.0), (0.12, 0.78), (0.0, 0.5), (0.12, 0.22), (0.5, 0.0),
           (0.88, 0.22), (1.0, 0.5), (0.88, 0.78), (0.5, 1.0)),),
    "1": (((0.35, 0.8), (0.55, 1.0), (0.55, 0.0)),),
    "2": (((0.1, 0.8), (0.45, 1.0), (0.85, 0.8), (0.1, 0.0), (0.9, 0.0)),),
    "3": (((0.1, 0.9), (0.5, 1.0), (0.9, 0.72), (0.5, 0.5), (0.9, 0.28),
           (0.5, 0.0), (0.1, 0.1)),),
    "+": (((0.0, 0.5), (1.0, 0.5)), ((0.5, 1.0), (0.5, 0.0))),
    "-": (((0.0, 0.5), (1.0, 0.5)),),
    "\\frac": (((0.0, 0.5), (1.0, 0.5)),),
    "\\sqrt": (((0.0, 0.45), (0.18, 0.0), (0.4, 1.0), (1.0, 1.0)),),
}

STRUCTURE_TOKENS = ("^", "_", "{", "}")
TERMINAL_TOKENS = ("x", "e", "0", "1", "2", "3")
OPERATOR_TOKENS = ("+", "-")


@dataclass(frozen=True)
class SynthSpec:
    """Generator settings: symbol inventory, nesting depth, and seed."""

    symbols: tuple[str, ...] = TERMINAL_TOKENS + OPERATOR_TOKENS + STRUCTURE_TOKENS
    depth: int = 1
    seed: int = 0
    templates: dict[str, tuple] = field(default_factory=lambda: STROKE_TEMPLATES)

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        for tok in self.symbols:
            if tok in STRUCTURE_TOKENS:
                continue
            if tok not in self.templates:
                raise DataError(f"symbol {tok!r} has no stroke template")

    def terminals(self) -> list[str]:
        return [t for t in self.symbols if t in TERMINAL_TOKENS]

    def operators(self) -> list[str]:
        return [t for t in self.symbols if t in OPERATOR_TOKENS]

    def _has(self, *tokens: str) -> bool:
        return all(t in self.symbols for t in tokens)

    def scripts(self) -> list[str]:
        out = []
        if self._has("^", "{", "}"):
            out.append("^")
        if self._has("_", "{", "}"):
            out.append("_")
        return out

    def layouts(self) -> list[str]:
        out = []
        if self._has("\\frac", "{", "}"):
            out.append("\\frac")
        if self._has("\\sqrt", "{", "}"):
            out.append("\\sqrt")
        return out


@dataclass
class Fragment:
    """A laid-out sub-expression: strokes in shared coordinates plus label."""

    strokes: list[np.ndarray]
    label: list[str]

    def bounds(self) -> tuple[float, float, float, float]:
        pts = np.vstack(self.strokes)
        return (pts[:, 0].min(), pts[:, 0].max(),
                pts[:, 1].min(), pts[:, 1].max())

    def shifted(self, dx: float, dy: float, scale: float = 1.0) -> "Fragment":
        return Fragment([s * scale + np.array([dx, dy]) for s in self.strokes],
                        list(self.label))


def _symbol_fragment(spec: SynthSpec, token: str) -> Fragment:
    try:
        template = spec.templates[token]
    except KeyError:
        raise DataError(f"symbol {token!r} has no stroke template") from None
    return Fragment([np.array(stroke, dtype=np.float64) for stroke in template],
                    [token])


def _append_horizontal(left: Fragment, right: Fragment, gap: float = 0.25) -> Fragment:
    """Place ``right`` after ``left`` with a gap, baselines shared."""
    _, left_max_x, _, _ = left.bounds()
    right_min_x = right.bounds()[0]
    moved = right.shifted(left_max_x + gap - right_min_x, 0.0)
    return Fragment(left.strokes + moved.strokes, left.label + moved.label)


def _attach_script(base: Fragment, script: Fragment, kind: str) -> Fragment:
    """Superscript/subscript: scale 0.6, shift up-right or down-right.

    A superscript sits entirely strictly above the base's vertical midpoint
    (and a subscript strictly below), which is what makes the relation
    recoverable from geometry alone.
    """
    bx0, bx1, by0, by1 = base.bounds()
    mid = 0.5 * (by0 + by1)
    height = by1 - by0
    scaled = Fragment([s * 0.6 for s in script.strokes], script.label)
    sx0, _, sy0, sy1 = scaled.bounds()
    dx = bx1 + 0.12 - sx0
    if kind == "^":
        dy = mid + 0.15 * max(height, 1.0) - sy0
    else:
        dy = mid - 0.15 * max(height, 1.0) - sy1
    moved = scaled.shifted(dx, dy)
    label = base.label + [kind, "{"] + moved.label + ["}"]
    return Fragment(base.strokes + moved.strokes, label)


def _stack_fraction(num: Fragment, den: Fragment, spec: SynthSpec) -> Fragment:
    """Vertical relation: numerator above a stretched bar, denominator below."""
    nx0, nx1, ny0, _ = num.bounds()
    dx0, dx1, _, dy1 = den.bounds()
    width = max(nx1 - nx0, dx1 - dx0) + 0.3
    bar = _symbol_fragment(spec, "\\frac")
    bar = Fragment([s * np.array([width, 1.0]) for s in bar.strokes], bar.label)
    _, _, bar_y, _ = bar.bounds()
    num_moved = num.shifted(0.15 - nx0, bar_y + 0.25 - ny0)
    den_moved = den.shifted(0.15 - dx0, bar_y - 0.25 - dy1)
    label = (["\\frac", "{"] + num_moved.label + ["}", "{"]
             + den_moved.label + ["}"])
    return Fragment(bar.strokes + num_moved.strokes + den_moved.strokes, label)


def _nest_inside(content: Fragment, spec: SynthSpec) -> Fragment:
    """Inside relation: content nested within a stretched radical sign."""
    cx0, cx1, cy0, cy1 = content.bounds()
    width = (cx1 - cx0) + 0.9
    height = max(cy1 - cy0, 1.0) + 0.35
    radical = _symbol_fragment(spec, "\\sqrt")
    radical = Fragment([s * np.array([width, height]) for s in radical.strokes],
                       radical.label)
    moved = content.shifted(0.55 - cx0, 0.1 - cy0)
    label = ["\\sqrt", "{"] + moved.label + ["}"]
    return Fragment(radical.strokes + moved.strokes, label)


def _gen_atom(spec: SynthSpec, rng: np.random.Generator, depth: int) -> Fragment:
    layouts = spec.layouts()
    if depth > 0 and layouts and rng.random() < 0.3:
        kind = layouts[int(rng.integers(len(layouts)))]
        if kind == "\\frac":
            return _stack_fraction(_gen_expr(spec, rng, depth - 1),
                                   _gen_expr(spec, rng, depth - 1), spec)
        return _nest_inside(_gen_expr(spec, rng, depth - 1), spec)
    terminals = spec.terminals()
    if not terminals:
        raise DataError("symbol set contains no drawable terminals")
    return _symbol_fragment(spec, terminals[int(rng.integers(len(terminals)))])


def _gen_term(spec: SynthSpec, rng: np.random.Generator, depth: int) -> Fragment:
    base = _gen_atom(spec, rng, depth)
    scripts = spec.scripts()
    if depth > 0 and scripts and rng.random() < 0.5:
        kind = scripts[int(rng.integers(len(scripts)))]
        exponent = _gen_atom(spec, rng, depth - 1)
        return _attach_script(base, exponent, kind)
    return base


def _gen_expr(spec: SynthSpec, rng: np.random.Generator, depth: int) -> Fragment:
    operators = spec.operators()
    n_terms = int(rng.integers(1, 4)) if operators else 1
    expr = _gen_term(spec, rng, depth)
    for _ in range(n_terms - 1):
        op = _symbol_fragment(spec, operators[int(rng.integers(len(operators)))])
        expr = _append_horizontal(expr, op)
        expr = _append_horizontal(expr, _gen_term(spec, rng, depth))
    return expr


def _fragment_to_ink(fragment: Fragment) -> Ink:
    points: list[TrajectoryPoint] = []
    for stroke_id, stroke in enumerate(fragment.strokes):
        for x, y in stroke:
            points.append(TrajectoryPoint(float(x), float(y), stroke_id))
    return Ink(points, label=list(fragment.label))


def generate(spec: SynthSpec, count: int) -> list[Ink]:
    """Generate ``count`` labeled expressions, deterministic under the seed."""
    if count < 1:
        raise DataError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(spec.seed)
    out = []
    for _ in range(count):
        if spec.depth == 0:
            fragment = _gen_atom(spec, rng, 0)
        else:
            fragment = _gen_expr(spec, rng, spec.depth)
        out.append(_fragment_to_ink(fragment))
    return out


def vocabulary_for(spec: SynthSpec) -> Vocabulary:
    """Vocabulary whose content tokens are the spec's symbols, in order."""
    return Vocabulary.from_content_tokens(list(spec.symbols))
