"""Bundled synthetic reference curves.

Three restoration shapes ship with the package so experiments and the test
suite run without external data: a mid-speed S-curve, a fast-start concave
curve, and a slow-start late-ramp curve.  They are synthetic stand-ins with
realistic shapes, not digitized records of any real event; users supply
their own ``time,level`` CSVs for real studies.

Experiment configs may reference them as ``ref:<name>`` curve sources.
"""

from __future__ import annotations

from importlib import resources

from .curves import RecoveryCurve, load_empirical_curve
from .errors import InputError

__all__ = ["REFERENCE_CURVE_NAMES", "reference_curve", "resolve_curve_source"]

REFERENCE_CURVE_NAMES = ("logistic", "faststart", "slowstart")


def reference_curve(name: str) -> RecoveryCurve:
    """Load a bundled curve by name (see :data:`REFERENCE_CURVE_NAMES`)."""
    if name not in REFERENCE_CURVE_NAMES:
        raise InputError(
            f"unknown reference curve {name!r}; available: "
            f"{', '.join(REFERENCE_CURVE_NAMES)}",
            code="unknown_reference",
        )
    data = resources.files("recovr.data").joinpath(f"{name}.csv").read_bytes()
    return load_empirical_curve(data, time_unit="days", label=f"ref:{name}")


def resolve_curve_source(source: str) -> RecoveryCurve:
    """Load ``ref:<name>`` as a bundled curve, anything else as a CSV path."""
    if source.startswith("ref:"):
        return reference_curve(source[4:])
    try:
        with open(source, "rb") as fh:
            return load_empirical_curve(fh, label=source)
    except OSError as exc:
        raise InputError(f"cannot read curve file {source}: {exc}",
                         code="curve_file_error") from None
