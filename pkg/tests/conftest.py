"""Shared test fixtures and the global fit audit.

Every posterior produced anywhere in the run — direct calls, elicited
fits, experiment replications, service fits — is re-validated on a fresh
1000-point grid the moment it is created: the mean curve and every
retained coefficient sample must be non-decreasing and stay within
[-1e-8, 1+1e-8].  Violations are collected (not raised) so the audit
test can report them all at once; a session-finish hook backstops fits
produced after that test has already run.
"""

from __future__ import annotations

import threading

import matplotlib

matplotlib.use("Agg")

import numpy as np

import recovr
import recovr.fitting
import recovr.gpr
from recovr.gpr import HatBasis

#: evaluation grid size the audit re-checks every fit on
AUDIT_GRID_SIZE = 1000
#: constraint slack, plus headroom for float evaluation of the basis
MONOTONE_TOL = 1e-8 + 1e-12
BOUND_TOL = 1e-8 + 1e-12

_AUDIT_GRID = np.linspace(0.0, 1.0, AUDIT_GRID_SIZE)


class FitAudit:
    """Counts fits and records constraint violations at 1000 grid points."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.count = 0
        self.violations: list[str] = []

    def record(self, summary) -> None:
        cs = summary.constraints
        if not (cs.monotone or cs.bounded):
            return  # deliberately unconstrained fit: nothing to audit
        phi = HatBasis(summary.knots).design(_AUDIT_GRID)
        problems = []
        curves = {"mean": None}
        if summary.samples is not None:
            sampled = np.asarray(summary.samples) @ phi.T
            curves = {"samples": sampled, "mean": sampled.mean(axis=0)}
        else:
            curves = {"mode": phi @ np.asarray(summary.mode)}
        for name, curve in curves.items():
            if curve is None:
                continue
            arr = np.atleast_2d(curve)
            if cs.monotone and float(np.diff(arr, axis=1).min()) < -MONOTONE_TOL:
                problems.append(f"{name} not non-decreasing")
            if cs.bounded and (float(arr.min()) < cs.lower - BOUND_TOL
                               or float(arr.max()) > cs.upper + BOUND_TOL):
                problems.append(f"{name} escapes [{cs.lower}, {cs.upper}]")
        with self._lock:
            self.count += 1
            if problems:
                self.violations.append(
                    f"fit #{self.count} ({len(summary.knots)} knots): "
                    + "; ".join(problems)
                )


FIT_AUDIT = FitAudit()

#: one summary line per acceptance check, echoed after the test summary
ACCEPTANCE_LINES: list[str] = []

_real_predict = recovr.gpr.predict


def _auditing_predict(*args, **kwargs):
    summary = _real_predict(*args, **kwargs)
    FIT_AUDIT.record(summary)
    return summary


def pytest_configure(config):
    recovr.gpr.predict = _auditing_predict
    recovr.fitting.predict = _auditing_predict
    recovr.predict = _auditing_predict


def pytest_unconfigure(config):
    recovr.gpr.predict = _real_predict
    recovr.fitting.predict = _real_predict
    recovr.predict = _real_predict


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            ok = line.split(" — ", 1)[0].endswith("PASS")
            terminalreporter.write_line(line, green=ok, red=not ok)


def pytest_sessionfinish(session, exitstatus):
    # Backstop for fits produced after the audit test already ran.
    if FIT_AUDIT.violations:
        rep = session.config.pluginmanager.get_plugin("terminalreporter")
        if rep is not None:
            rep.write_line("")
            rep.write_line(
                f"FIT AUDIT: {len(FIT_AUDIT.violations)} constraint "
                f"violation(s) across {FIT_AUDIT.count} fits:", red=True,
            )
            for v in FIT_AUDIT.violations:
                rep.write_line(f"  {v}", red=True)
        session.exitstatus = 1
