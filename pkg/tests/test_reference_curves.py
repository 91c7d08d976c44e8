"""Tests for the bundled synthetic reference curves."""

from __future__ import annotations

import numpy as np
import pytest

from recovr.curves import truncate_at_level
from recovr.errors import InputError
from recovr.reference_curves import (
    REFERENCE_CURVE_NAMES,
    reference_curve,
    resolve_curve_source,
)


class TestBundledCurves:
    def test_three_shapes_ship(self):
        assert REFERENCE_CURVE_NAMES == ("logistic", "faststart", "slowstart")

    @pytest.mark.parametrize("name", REFERENCE_CURVE_NAMES)
    def test_loads_as_valid_curve(self, name):
        curve = reference_curve(name)
        assert curve.label == f"ref:{name}"
        assert np.all(np.diff(curve.times) > 0)
        assert np.all(np.diff(curve.levels) >= 0)
        assert curve.levels[0] > 0.0
        assert curve.levels[-1] <= 1.0

    @pytest.mark.parametrize("name", REFERENCE_CURVE_NAMES)
    def test_reaches_default_top_level(self, name):
        # experiments truncate at the default 0.9 elicitation ceiling
        truncated = truncate_at_level(reference_curve(name), 0.9)
        assert truncated.levels[-1] == pytest.approx(0.9)

    def test_shapes_are_actually_different(self):
        def tau_at_half(name):
            curve = reference_curve(name)
            t50 = np.interp(0.5, curve.levels, curve.times)
            t90 = np.interp(0.9, curve.levels, curve.times)
            return t50 / t90

        fast = tau_at_half("faststart")
        mid = tau_at_half("logistic")
        slow = tau_at_half("slowstart")
        assert fast < mid < slow


class TestResolution:
    def test_ref_prefix_resolves(self):
        a = resolve_curve_source("ref:logistic")
        b = reference_curve("logistic")
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.levels, b.levels)

    def test_unknown_reference_name(self):
        with pytest.raises(InputError) as exc_info:
            resolve_curve_source("ref:mystery")
        assert exc_info.value.code == "unknown_reference"

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError) as exc_info:
            resolve_curve_source(str(tmp_path / "nope.csv"))
        assert exc_info.value.code == "curve_file_error"

    def test_path_resolves_to_csv(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("time,level\n1,0.2\n5,0.9\n")
        curve = resolve_curve_source(str(path))
        assert list(curve.levels) == [0.2, 0.9]
        assert curve.label == str(path)
