"""Recovery-curve data model and CSV loading.

A recovery curve is a sequence of ``(time, level)`` observations for one
infrastructure system after a disruption: ``level`` is the restored fraction
in ``[0, 1]`` and is non-decreasing in time.  Curves come in two frames:

* :class:`RecoveryCurve` — physical times (days or hours since the event).
* :class:`NormalizedCurve` — times divided by the completion time ``D`` of
  the curve, so the horizontal axis is ``tau in [0, 1]``.

Both are immutable; loaders and transforms return new objects.
"""

from __future__ import annotations

import io
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .errors import ParseError, RangeError

__all__ = [
    "RecoveryCurve",
    "NormalizedCurve",
    "load_empirical_curve",
    "normalize_times",
    "truncate_at_level",
]

TIME_UNITS = ("days", "hours")

_HEADER = ("time", "level")


def _validate_points(times: npt.NDArray[np.float64], levels: npt.NDArray[np.float64]) -> None:
    if times.size < 2:
        raise RangeError(f"a curve needs at least 2 points, got {times.size}")
    if not np.all(np.isfinite(times)) or not np.all(np.isfinite(levels)):
        raise RangeError("curve points must be finite")
    if times[0] < 0.0:
        raise RangeError(f"times must be nonnegative, first is {times[0]}")
    bad_t = np.nonzero(np.diff(times) <= 0.0)[0]
    if bad_t.size:
        raise RangeError(
            "times must be strictly increasing; offending indices "
            f"{[int(i) + 1 for i in bad_t]}"
        )
    bad_range = np.nonzero((levels < 0.0) | (levels > 1.0))[0]
    if bad_range.size:
        raise RangeError(
            f"levels must lie in [0, 1]; offending indices {[int(i) for i in bad_range]}"
        )
    bad_l = np.nonzero(np.diff(levels) < 0.0)[0]
    if bad_l.size:
        raise RangeError(
            "levels must be non-decreasing; offending indices "
            f"{[int(i) + 1 for i in bad_l]}"
        )


@dataclass(frozen=True)
class RecoveryCurve:
    """Observed recovery trajectory in physical time.

    ``points`` are ``(time, level)`` pairs with strictly increasing
    nonnegative times and non-decreasing levels in ``[0, 1]``.
    """

    points: tuple[tuple[float, float], ...]
    time_unit: str = "days"
    label: str = ""

    def __post_init__(self) -> None:
        if self.time_unit not in TIME_UNITS:
            raise RangeError(f"time_unit must be one of {TIME_UNITS}, got {self.time_unit!r}")
        pts = tuple((float(t), float(l)) for t, l in self.points)
        object.__setattr__(self, "points", pts)
        _validate_points(self.times, self.levels)

    @property
    def times(self) -> npt.NDArray[np.float64]:
        return np.array([p[0] for p in self.points], dtype=float)

    @property
    def levels(self) -> npt.NDArray[np.float64]:
        return np.array([p[1] for p in self.points], dtype=float)

    def to_csv(self) -> str:
        """CSV round-trippable through :func:`load_empirical_curve`."""
        lines = ["time,level"]
        lines += [f"{t!r},{l!r}" for t, l in self.points]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class NormalizedCurve:
    """Recovery trajectory on the normalized time axis ``tau = time / D``."""

    points: tuple[tuple[float, float], ...]
    D: float
    time_unit: str = "days"
    label: str = ""

    def __post_init__(self) -> None:
        if self.time_unit not in TIME_UNITS:
            raise RangeError(f"time_unit must be one of {TIME_UNITS}, got {self.time_unit!r}")
        if not (self.D > 0.0 and np.isfinite(self.D)):
            raise RangeError(f"D must be a positive finite duration, got {self.D}")
        pts = tuple((float(t), float(l)) for t, l in self.points)
        object.__setattr__(self, "points", pts)
        _validate_points(self.taus, self.levels)
        if self.taus[-1] > 1.0:
            raise RangeError(
                f"normalized times must lie in [0, 1]; last tau is {self.taus[-1]}"
            )

    @property
    def taus(self) -> npt.NDArray[np.float64]:
        return np.array([p[0] for p in self.points], dtype=float)

    @property
    def levels(self) -> npt.NDArray[np.float64]:
        return np.array([p[1] for p in self.points], dtype=float)


def load_empirical_curve(
    source: bytes | str | io.IOBase,
    time_unit: str = "days",
    label: str = "",
) -> RecoveryCurve:
    """Parse a ``time,level`` CSV byte stream into a :class:`RecoveryCurve`.

    ``source`` may be bytes, a text string, or a (binary or text) file-like
    object.  Lines starting with ``#`` and blank lines are ignored.  The
    header row must be exactly ``time,level``.  Rows are sorted by time
    before validation, so files need not be pre-sorted.  Malformed rows
    raise a parse error naming the 1-based line number.
    """
    if hasattr(source, "read"):
        raw = source.read()
    else:
        raw = source
    if isinstance(raw, bytes):
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"curve CSV is not valid UTF-8: {exc}") from None
    else:
        text = raw

    rows: list[tuple[float, float]] = []
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = [f.strip() for f in stripped.split(",")]
        if not header_seen:
            if tuple(f.lower() for f in fields) != _HEADER:
                raise ParseError(
                    f"line {lineno}: expected header 'time,level', got {stripped!r}"
                )
            header_seen = True
            continue
        if len(fields) != 2:
            raise ParseError(f"line {lineno}: expected 2 fields, got {len(fields)}")
        try:
            rows.append((float(fields[0]), float(fields[1])))
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric value in {stripped!r}") from None
    if not header_seen:
        raise ParseError("curve CSV has no header row")
    if len(rows) < 2:
        raise RangeError(f"a curve needs at least 2 points, got {len(rows)}")
    rows.sort(key=lambda p: p[0])
    return RecoveryCurve(points=tuple(rows), time_unit=time_unit, label=label)


def normalize_times(
    curve_or_times: RecoveryCurve | Sequence[float], D: float
) -> NormalizedCurve | list[float]:
    """Rescale a time axis by the completion time ``D``.

    Accepts either a :class:`RecoveryCurve` (returning a
    :class:`NormalizedCurve`) or a plain sequence of times (returning the
    list of ``tau = time / D``).  Every time must be ``<= D`` (truncate
    first if the record extends past the completion of interest); a tiny
    overshoot from truncation arithmetic (1 part in 1e9) is snapped to
    ``tau = 1``.
    """
    if not (D > 0.0 and np.isfinite(D)):
        raise RangeError(f"D must be a positive finite duration, got {D}")

    def scale(times: np.ndarray, what: str) -> np.ndarray:
        taus = times / D
        over = taus > 1.0
        if np.any(taus > 1.0 + 1e-9):
            worst = float(times[int(np.argmax(taus))])
            raise RangeError(
                f"{what} time {worst:g} exceeds D={D:g}; truncate before normalizing",
                code="normalization_error",
            )
        taus[over] = 1.0
        return taus

    if isinstance(curve_or_times, RecoveryCurve):
        curve = curve_or_times
        taus = scale(curve.times.copy(), "curve")
        pts = tuple(zip(taus.tolist(), curve.levels.tolist()))
        return NormalizedCurve(
            points=pts, D=float(D), time_unit=curve.time_unit, label=curve.label
        )
    times = np.asarray(list(curve_or_times), dtype=float)
    if times.ndim != 1:
        raise RangeError(f"times must be a flat sequence, got shape {times.shape}")
    return scale(times, "input").tolist()


def truncate_at_level(curve: RecoveryCurve, top_level: float) -> RecoveryCurve:
    """Cut a curve at the first crossing of ``top_level``.

    Points with level ``<= top_level`` are kept; if the curve continues past
    the threshold, the exact crossing time is linearly interpolated and
    appended as the final ``(time, top_level)`` point.  A curve that never
    reaches ``top_level`` cannot be truncated and raises a range error.
    """
    if not (0.0 < top_level <= 1.0):
        raise RangeError(f"top_level must lie in (0, 1], got {top_level}")
    levels = curve.levels
    times = curve.times
    if levels[-1] < top_level:
        raise RangeError(
            f"curve peaks at level {levels[-1]}, below top_level={top_level}; "
            "cannot locate the completion time"
        )
    keep = levels <= top_level
    kept = [(float(t), float(l)) for t, l in zip(times[keep], levels[keep])]
    if kept and kept[-1][1] == top_level:
        pass  # exact hit, nothing to interpolate
    else:
        j = int(np.argmax(levels > top_level))  # first point above the threshold
        if j == 0:
            raise RangeError(
                f"first recorded level {levels[0]} already exceeds top_level={top_level}"
            )
        t0, l0 = times[j - 1], levels[j - 1]
        t1, l1 = times[j], levels[j]
        t_star = t0 + (top_level - l0) / (l1 - l0) * (t1 - t0)
        kept.append((float(t_star), float(top_level)))
    if len(kept) < 2:
        raise RangeError(
            f"truncation at top_level={top_level} leaves fewer than 2 points"
        )
    return RecoveryCurve(points=tuple(kept), time_unit=curve.time_unit, label=curve.label)
