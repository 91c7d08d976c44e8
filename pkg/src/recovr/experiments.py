"""Replicated end-to-end experiments: simulate, fit, score, sweep.

One replication (a) fits a surrogate to an empirical curve, (b) simulates an
expert panel with a replication-specific random substream, (c) normalizes
and aggregates the panel, (d) fits the constrained GP, and (e) scores RMSE
against the empirical points at levels the experts were never asked about,
with times normalized by the empirical curve's own time to the top level.

Sweeps vary expert count, noise variance, or elicitation levels, one cell
per setting, with everything else held fixed.  Replication ``r`` of every
cell derives its streams from ``(base_seed, stage, r)``, so cells share
their panel randomness where shapes allow (common random numbers), which
stabilizes cross-cell comparisons.  Reports are deterministic functions of
the config, byte-identical under any parallelism (results land in indexed
slots; wall-clock runtime is kept out of the canonical serialization).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .curves import RecoveryCurve, truncate_at_level
from .elicitation import (
    ElicitationScheme,
    aggregate,
    estimate_noise,
    normalize_panel,
)
from .errors import EvaluationError, InsufficientDataError, RangeError, RecovrError
from .experts import NoiseSpec, fit_surrogate, simulate_panel
from .fitting import FitSettings, fit_elicited
from .reference_curves import resolve_curve_source

__all__ = [
    "ExperimentConfig",
    "ReplicationOutcome",
    "run_replication",
    "replicate",
    "CellReport",
    "ExperimentReport",
    "summarize",
    "sweep_experts",
    "sweep_noise",
    "sweep_levels",
    "run_single",
    "parse_sweep_config",
    "run_sweep_from_config",
]

#: stream tags: replication r of any cell draws its panel from
#: (base_seed, STAGE_PANEL, r) and its sampler from (base_seed, STAGE_SAMPLER, r)
STAGE_PANEL = 11
STAGE_SAMPLER = 23

#: judged different from every elicited level by more than this -> test point
LEVEL_MATCH_TOL = 1e-9


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one replication depends on."""

    curve_source: str
    scheme: ElicitationScheme = field(default_factory=ElicitationScheme)
    noise: NoiseSpec = field(default_factory=lambda: NoiseSpec(0.1, 0.1))
    n_experts: int = 5
    knot_count: int = 30
    n_replications: int = 100
    n_samples: int = 1000
    base_seed: int = 0
    surrogate_degree: int = 4
    noise_policy: str = "pooled"
    kernel_kind: str = "matern52"
    anchor: bool = True
    across_noise_per_level: bool = False

    def __post_init__(self) -> None:
        if self.n_replications < 1:
            raise RangeError(f"n_replications must be >= 1, got {self.n_replications}")
        if self.n_experts < 1:
            raise RangeError(f"n_experts must be >= 1, got {self.n_experts}")
        if self.noise_policy not in ("pooled", "ml"):
            raise RangeError(f"noise_policy must be 'pooled' or 'ml', got {self.noise_policy!r}")

    def to_dict(self) -> dict:
        return {
            "curve_source": self.curve_source,
            "scheme": self.scheme.to_dict(),
            "noise": {"var_within": self.noise.var_within,
                      "var_across": self.noise.var_across},
            "n_experts": self.n_experts,
            "knot_count": self.knot_count,
            "n_replications": self.n_replications,
            "n_samples": self.n_samples,
            "base_seed": self.base_seed,
            "surrogate_degree": self.surrogate_degree,
            "noise_policy": self.noise_policy,
            "kernel_kind": self.kernel_kind,
            "anchor": self.anchor,
            "across_noise_per_level": self.across_noise_per_level,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if "curve_source" not in data:
            raise RangeError("config needs a curve_source")
        noise = data.get("noise", {"var_within": 0.1, "var_across": 0.1})
        return cls(
            curve_source=str(data["curve_source"]),
            scheme=ElicitationScheme.from_dict(data.get("scheme", {})),
            noise=NoiseSpec(var_within=float(noise["var_within"]),
                            var_across=float(noise["var_across"])),
            n_experts=int(data.get("n_experts", 5)),
            knot_count=int(data.get("knot_count", 30)),
            n_replications=int(data.get("n_replications", 100)),
            n_samples=int(data.get("n_samples", 1000)),
            base_seed=int(data.get("base_seed", 0)),
            surrogate_degree=int(data.get("surrogate_degree", 4)),
            noise_policy=data.get("noise_policy", "pooled"),
            kernel_kind=data.get("kernel_kind", "matern52"),
            anchor=bool(data.get("anchor", True)),
            across_noise_per_level=bool(data.get("across_noise_per_level", False)),
        )


@lru_cache(maxsize=32)
def _load_curve(source: str) -> RecoveryCurve:
    return resolve_curve_source(source)


@dataclass(frozen=True)
class ReplicationOutcome:
    """One replication's score plus the metadata reports aggregate."""

    rmse: float
    n_test_points: int
    noise_source: str
    sigma_tau: float | None
    attempts: int
    n_experts: int

    @property
    def rejection_rate(self) -> float:
        """Fraction of simulated paths thrown away by the monotone filter."""
        return (self.attempts - self.n_experts) / self.attempts


def _stage(label: str, exc: RecovrError) -> RecovrError:
    exc.args = (f"[{label}] {exc.args[0]}",) + exc.args[1:]
    return exc


def replicate(config: ExperimentConfig, replication_index: int) -> ReplicationOutcome:
    """Run one full replication; deterministic in (config, index)."""
    if replication_index < 0:
        raise RangeError(f"replication_index must be >= 0, got {replication_index}")
    scheme = config.scheme
    curve = _load_curve(config.curve_source)
    try:
        truncated = truncate_at_level(curve, scheme.top_level)
    except RecovrError as exc:
        raise _stage("truncate", exc)
    d_true = truncated.times[-1]
    try:
        surrogate = fit_surrogate(curve, config.surrogate_degree)
    except RecovrError as exc:
        raise _stage("surrogate", exc)

    panel_seq = np.random.SeedSequence(
        (config.base_seed, STAGE_PANEL, replication_index))
    try:
        panel = simulate_panel(
            surrogate, config.n_experts, scheme.levels, config.noise,
            scheme.top_level, seed=panel_seq,
            across_noise_per_level=config.across_noise_per_level,
        )
    except RecovrError as exc:
        raise _stage("panel", exc)

    try:
        if scheme.d_policy == "consensus":
            consensus = float(np.median([p.D for p in panel]))
            normalized = normalize_panel(panel, "consensus", consensus)
        else:
            normalized = normalize_panel(panel, "per_expert")
        agg = aggregate(normalized, scheme.aggregator)
        sigma_tau = estimate_noise(normalized) if len(normalized) >= 2 else None
    except RecovrError as exc:
        raise _stage("aggregate", exc)

    # single-expert cells cannot estimate a spread; fall back to ML noise
    noise_policy = config.noise_policy
    if noise_policy == "pooled" and sigma_tau is None:
        noise_policy = "ml"

    taus_all = truncated.times / d_true
    levels_all = truncated.levels
    elicited = np.asarray(scheme.levels)
    keep = np.array([
        bool(np.all(np.abs(elicited - lv) > LEVEL_MATCH_TOL))
        for lv in levels_all
    ])
    test_taus = taus_all[keep]
    test_levels = levels_all[keep]
    if test_taus.size == 0:
        raise EvaluationError(
            "no test points: every empirical level coincides with an "
            "elicited level"
        )

    settings = FitSettings(
        knot_count=config.knot_count,
        noise_policy=noise_policy,
        anchor=config.anchor,
        kernel_kind=config.kernel_kind,
        n_samples=config.n_samples,
    )
    grid = np.unique(np.concatenate([[0.0, 1.0], test_taus]))
    sampler_rng = np.random.default_rng(np.random.SeedSequence(
        (config.base_seed, STAGE_SAMPLER, replication_index)))
    try:
        outcome = fit_elicited(agg.points, sigma_tau, scheme.top_level,
                               settings, seed=sampler_rng, grid=grid)
    except RecovrError as exc:
        raise _stage("fit", exc)

    pos = np.searchsorted(grid, test_taus)
    pred = outcome.summary.mean[pos]
    rmse = float(np.sqrt(np.mean((pred - test_levels) ** 2)))
    attempts = sum(p.attempts for p in panel)
    return ReplicationOutcome(
        rmse=rmse,
        n_test_points=int(test_taus.size),
        noise_source=outcome.noise_source,
        sigma_tau=None if sigma_tau is None else float(sigma_tau),
        attempts=attempts,
        n_experts=config.n_experts,
    )


def run_replication(config: ExperimentConfig, replication_index: int) -> float:
    """RMSE of one replication (see :func:`replicate` for the details)."""
    return replicate(config, replication_index).rmse


def summarize(rmses) -> tuple[float, float, float]:
    """Mean and 95% normal-approximation CI: mean +/- 1.96 sd / sqrt(n)."""
    arr = np.asarray(list(rmses), dtype=float)
    if arr.size == 0:
        raise InsufficientDataError("cannot summarize an empty list")
    mean = float(arr.mean())
    if arr.size == 1:
        return mean, mean, mean
    half = 1.96 * float(arr.std(ddof=1)) / float(np.sqrt(arr.size))
    return mean, mean - half, mean + half


@dataclass(frozen=True)
class CellReport:
    """Per-cell sweep results across replications."""

    label: str
    overrides: dict
    rmses: tuple[float, ...]
    mean_rmse: float
    ci_lower: float
    ci_upper: float
    rejection_rate: float
    noise_source: str

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "overrides": self.overrides,
            "rmses": list(self.rmses),
            "mean_rmse": self.mean_rmse,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "rejection_rate": self.rejection_rate,
            "noise_source": self.noise_source,
        }


@dataclass(frozen=True)
class ExperimentReport:
    """Sweep results: one cell per setting plus the config echo.

    ``runtime_seconds`` is measured wall-clock time; it is intentionally
    excluded from :meth:`to_dict` so serialized reports are byte-identical
    across reruns and parallelism settings.
    """

    kind: str
    config: dict
    cells: tuple[CellReport, ...]
    runtime_seconds: float | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": self.config,
            "cells": [c.to_dict() for c in self.cells],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        """Flat ``cell,replication,rmse`` table."""
        lines = ["cell,replication,rmse"]
        for cell in self.cells:
            for i, rmse in enumerate(cell.rmses):
                lines.append(f"{cell.label},{i},{rmse!r}")
        return "\n".join(lines) + "\n"


def _run_cells(
    cells: list[tuple[str, dict, ExperimentConfig]],
    kind: str,
    base_config: ExperimentConfig,
    n_jobs: int = 1,
) -> ExperimentReport:
    n_reps = base_config.n_replications
    slots: list[list[ReplicationOutcome | None]] = [
        [None] * n_reps for _ in cells
    ]
    tasks = [(ci, ri) for ci in range(len(cells)) for ri in range(n_reps)]
    if n_jobs <= 1:
        for ci, ri in tasks:
            slots[ci][ri] = replicate(cells[ci][2], ri)
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            futures = {
                pool.submit(replicate, cells[ci][2], ri): (ci, ri)
                for ci, ri in tasks
            }
            for fut, (ci, ri) in futures.items():
                slots[ci][ri] = fut.result()
    reports = []
    for (label, overrides, _), outcomes in zip(cells, slots):
        rmses = tuple(o.rmse for o in outcomes)
        mean, lo, hi = summarize(rmses)
        attempts = sum(o.attempts for o in outcomes)
        accepted = sum(o.n_experts for o in outcomes)
        reports.append(CellReport(
            label=label,
            overrides=overrides,
            rmses=rmses,
            mean_rmse=mean,
            ci_lower=lo,
            ci_upper=hi,
            rejection_rate=(attempts - accepted) / attempts,
            noise_source=outcomes[0].noise_source,
        ))
    return ExperimentReport(kind=kind, config=base_config.to_dict(),
                            cells=tuple(reports))


def sweep_experts(config: ExperimentConfig, counts, n_jobs: int = 1) -> ExperimentReport:
    """One cell per expert count; everything else fixed."""
    counts = [int(c) for c in counts]
    if not counts:
        raise RangeError("counts must be nonempty")
    cells = [
        (f"experts={c}", {"n_experts": c}, replace(config, n_experts=c))
        for c in counts
    ]
    return _run_cells(cells, "experts", config, n_jobs)


def sweep_noise(config: ExperimentConfig, variances, n_jobs: int = 1) -> ExperimentReport:
    """One cell per noise variance, applied to both layers equally."""
    variances = [float(v) for v in variances]
    if not variances:
        raise RangeError("variances must be nonempty")
    cells = [
        (f"var={v:g}", {"var_within": v, "var_across": v},
         replace(config, noise=NoiseSpec(v, v)))
        for v in variances
    ]
    return _run_cells(cells, "noise", config, n_jobs)


def sweep_levels(config: ExperimentConfig, counts, spacings,
                 n_jobs: int = 1) -> ExperimentReport:
    """Grid over level counts x spacing rules."""
    counts = [int(c) for c in counts]
    spacings = list(spacings)
    if not counts or not spacings:
        raise RangeError("counts and spacings must be nonempty")
    cells = []
    for spacing in spacings:
        for c in counts:
            scheme = ElicitationScheme.from_spacing(
                c, spacing,
                top_level=config.scheme.top_level,
                d_policy=config.scheme.d_policy,
                aggregator=config.scheme.aggregator,
            )
            cells.append((
                f"levels={c},{spacing}",
                {"level_count": c, "spacing": spacing},
                replace(config, scheme=scheme),
            ))
    return _run_cells(cells, "levels", config, n_jobs)


def run_single(config: ExperimentConfig, n_jobs: int = 1) -> ExperimentReport:
    """All replications of a single cell (degenerate sweep)."""
    cells = [("all", {}, config)]
    return _run_cells(cells, "single", config, n_jobs)


def parse_sweep_config(data: dict) -> tuple[ExperimentConfig, str, dict]:
    """Split a sweep config file into (base config, sweep kind, sweep args)."""
    if not isinstance(data, dict):
        raise RangeError("sweep config must be a JSON object")
    kind = data.get("sweep", "single")
    sweep_args: dict = {}
    if kind == "experts":
        if "counts" not in data:
            raise RangeError("experts sweep needs 'counts'")
        sweep_args["counts"] = [int(c) for c in data["counts"]]
    elif kind == "noise":
        if "variances" not in data:
            raise RangeError("noise sweep needs 'variances'")
        sweep_args["variances"] = [float(v) for v in data["variances"]]
    elif kind == "levels":
        if "counts" not in data:
            raise RangeError("levels sweep needs 'counts'")
        sweep_args["counts"] = [int(c) for c in data["counts"]]
        sweep_args["spacings"] = [str(s) for s in data.get(
            "spacings", ["custom", "equal"])]
    elif kind != "single":
        raise RangeError(
            f"sweep must be one of experts/noise/levels/single, got {kind!r}"
        )
    base = {k: v for k, v in data.items()
            if k not in ("sweep", "counts", "variances", "spacings")}
    return ExperimentConfig.from_dict(base), kind, sweep_args


def run_sweep_from_config(data: dict, n_jobs: int = 1) -> ExperimentReport:
    """Run the sweep described by a parsed config-file dict."""
    config, kind, args = parse_sweep_config(data)
    if kind == "experts":
        return sweep_experts(config, args["counts"], n_jobs)
    if kind == "noise":
        return sweep_noise(config, args["variances"], n_jobs)
    if kind == "levels":
        return sweep_levels(config, args["counts"], args["spacings"], n_jobs)
    return run_single(config, n_jobs)
