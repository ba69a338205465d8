"""Trajectory normalization, resampling, and 8-d feature extraction.

The pipeline is normalize -> resample -> extract_features. Each point of
the resampled ink yields the feature row
``[x, y, dx, dy, d2x, d2y, pen_down, pen_up]`` where the deltas look one
and two points ahead (zero-filled at the end) and exactly one pen flag is
set per row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, InkFormatError
from .ink_io import Ink, TrajectoryPoint

NORM_HEIGHT = 100.0
DEFAULT_SPACING = 6.25  # NORM_HEIGHT / 16

FEATURE_DIM = 8


@dataclass
class FeatureSequence:
    """N x 8 feature matrix, one row per resampled trajectory point."""

    rows: np.ndarray

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[1] != FEATURE_DIM:
            raise DataError(f"feature matrix must be N x {FEATURE_DIM}, "
                            f"got {self.rows.shape}")
        if not np.isfinite(self.rows).all():
            raise DataError("feature matrix contains non-finite entries")
        flags = self.rows[:, 6] + self.rows[:, 7]
        if not (np.isin(self.rows[:, 6], (0.0, 1.0)).all()
                and np.isin(self.rows[:, 7], (0.0, 1.0)).all()
                and (flags == 1.0).all()):
            raise DataError("exactly one pen flag must be set per row")

    def __len__(self) -> int:
        return self.rows.shape[0]


def _arrays(ink: Ink) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xs = np.array([p.x for p in ink.points], dtype=np.float64)
    ys = np.array([p.y for p in ink.points], dtype=np.float64)
    ss = np.array([p.stroke_id for p in ink.points], dtype=np.int64)
    return xs, ys, ss


def _rebuild(xs: np.ndarray, ys: np.ndarray, ss: np.ndarray, label) -> Ink:
    points = [TrajectoryPoint(float(x), float(y), int(s))
              for x, y, s in zip(xs, ys, ss)]
    return Ink(points, label=label)


def normalize(ink: Ink) -> Ink:
    """Scale the whole expression to y-extent NORM_HEIGHT, min corner at (0,0).

    Aspect ratio is preserved. A zero y-extent falls back to scaling by the
    x-extent; if both extents are zero only the translation applies.
    """
    xs, ys, ss = _arrays(ink)
    x_extent = float(xs.max() - xs.min())
    y_extent = float(ys.max() - ys.min())
    if y_extent > 0.0:
        scale = NORM_HEIGHT / y_extent
    elif x_extent > 0.0:
        scale = NORM_HEIGHT / x_extent
    else:
        scale = 1.0
    return _rebuild((xs - xs.min()) * scale, (ys - ys.min()) * scale, ss, ink.label)


def resample(ink: Ink, spacing: float = DEFAULT_SPACING) -> Ink:
    """Resample each stroke at uniform arc-length intervals of `spacing`.

    First and last original points of every stroke are retained;
    single-point strokes pass through unchanged.
    """
    if spacing <= 0:
        raise InkFormatError(f"spacing must be positive, got {spacing}")
    out_x: list[float] = []
    out_y: list[float] = []
    out_s: list[int] = []
    for sid, stroke in enumerate(ink.strokes()):
        xs = np.array([p.x for p in stroke])
        ys = np.array([p.y for p in stroke])
        if len(stroke) == 1:
            rx, ry = xs, ys
        else:
            rx, ry = _resample_polyline(xs, ys, spacing)
        out_x.extend(rx)
        out_y.extend(ry)
        out_s.extend([sid] * len(rx))
    return _rebuild(np.array(out_x), np.array(out_y), np.array(out_s), ink.label)


def _resample_polyline(xs: np.ndarray, ys: np.ndarray,
                       spacing: float) -> tuple[np.ndarray, np.ndarray]:
    seg = np.hypot(np.diff(xs), np.diff(ys))
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    total = float(cum[-1])
    if total == 0.0:
        return xs[[0, -1]], ys[[0, -1]]
    # Targets strictly inside (0, total), then the exact endpoints.
    n_inner = int(np.ceil(total / spacing - 1e-9)) - 1
    targets = spacing * np.arange(1, n_inner + 1)
    rx = np.interp(targets, cum, xs)
    ry = np.interp(targets, cum, ys)
    return (np.concatenate(([xs[0]], rx, [xs[-1]])),
            np.concatenate(([ys[0]], ry, [ys[-1]])))


def extract_features(ink: Ink) -> FeatureSequence:
    """Build the N x 8 feature matrix for a normalized, resampled ink."""
    xs, ys, ss = _arrays(ink)
    n = len(xs)
    rows = np.zeros((n, FEATURE_DIM), dtype=np.float64)
    rows[:, 0] = xs
    rows[:, 1] = ys
    rows[:-1, 2] = np.diff(xs)
    rows[:-1, 3] = np.diff(ys)
    if n > 2:
        rows[:-2, 4] = xs[2:] - xs[:-2]
        rows[:-2, 5] = ys[2:] - ys[:-2]
    pen_down = np.zeros(n)
    pen_down[:-1] = (ss[1:] == ss[:-1]).astype(np.float64)
    rows[:, 6] = pen_down
    rows[:, 7] = 1.0 - pen_down
    return FeatureSequence(rows)


def features_from_ink(ink: Ink, spacing: float = DEFAULT_SPACING) -> FeatureSequence:
    """Full preprocessing chain: normalize, resample, extract features."""
    return extract_features(resample(normalize(ink), spacing))


def format_features(fs: FeatureSequence) -> str:
    """Feature-dump format: one row per line, 8 space-separated decimals."""
    return "".join(" ".join(f"{v:.17g}" for v in row) + "\n" for row in fs.rows)


def parse_features(text: str) -> FeatureSequence:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != FEATURE_DIM:
            raise InkFormatError(
                f"line {lineno}: expected {FEATURE_DIM} values, got {len(fields)}"
            )
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise InkFormatError(f"line {lineno}: non-numeric value") from None
    if not rows:
        raise InkFormatError("feature dump contains no rows")
    return FeatureSequence(np.array(rows))
