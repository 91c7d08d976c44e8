"""From elicited expert panels to GPR training data.

This module owns everything between raw expert answers and the regression
inputs: normalization of times by completion estimates, per-level
aggregation across experts (mean / median / performance-weighted),
across-expert noise estimation, Cooke's classical-model weights, and the
Delphi consensus state machine for the completion time D.
"""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, replace

import numpy as np
import numpy.typing as npt
from scipy.stats import chi2

from .errors import (
    AlignmentError,
    InputError,
    InsufficientDataError,
    ParseError,
    RangeError,
    StateError,
)
from .experts import ExpertPath

__all__ = [
    "ElicitationScheme",
    "make_levels",
    "NormalizedExpertPath",
    "normalize_panel",
    "AggregatedData",
    "aggregate",
    "aggregate_sparse",
    "estimate_noise",
    "estimate_noise_sparse",
    "CookeAssessment",
    "CookeWeights",
    "cooke_weights",
    "DelphiSession",
    "delphi_step",
    "delphi_spread",
    "CUSTOM_LEVEL_SETS",
    "DEFAULT_LEVELS",
    "DELPHI_TOLERANCE",
]

#: fixed "intuitive" level sets for custom spacing, by level count
CUSTOM_LEVEL_SETS: dict[int, tuple[float, ...]] = {
    2: (0.1, 0.9),
    3: (0.1, 0.5, 0.9),
    4: (0.1, 0.3, 0.7, 0.9),
    5: (0.1, 0.3, 0.5, 0.7, 0.9),
    6: (0.1, 0.3, 0.5, 0.7, 0.8, 0.9),
}

DEFAULT_LEVELS = CUSTOM_LEVEL_SETS[5]

#: default Delphi relative-spread threshold for consensus
DELPHI_TOLERANCE = 0.15

SPACINGS = ("custom", "equal")
D_POLICIES = ("per_expert", "consensus")
AGGREGATORS = ("mean", "median", "cooke")


def make_levels(level_count: int, spacing: str) -> tuple[float, ...]:
    """Elicitation levels for a given count and spacing rule.

    ``equal`` places ``level_count`` points uniformly on [0.1, 0.9]
    (e.g. 4 -> 0.1, 0.36667, 0.63333, 0.9); ``custom`` uses the fixed sets
    in :data:`CUSTOM_LEVEL_SETS` and supports counts 2-6 only.
    """
    if spacing not in SPACINGS:
        raise RangeError(f"spacing must be one of {SPACINGS}, got {spacing!r}")
    if level_count < 2:
        raise RangeError(f"level_count must be >= 2, got {level_count}")
    if spacing == "equal":
        return tuple(np.linspace(0.1, 0.9, level_count).tolist())
    if level_count not in CUSTOM_LEVEL_SETS:
        raise InputError(
            f"custom spacing supports counts {sorted(CUSTOM_LEVEL_SETS)}, "
            f"got {level_count}",
            code="unsupported_count",
        )
    return CUSTOM_LEVEL_SETS[level_count]


@dataclass(frozen=True)
class ElicitationScheme:
    """How a workshop elicits data: levels, D policy, aggregator."""

    levels: tuple[float, ...] = DEFAULT_LEVELS
    spacing: str = "custom"
    top_level: float = 0.9
    d_policy: str = "per_expert"
    aggregator: str = "mean"

    def __post_init__(self) -> None:
        if self.spacing not in SPACINGS:
            raise RangeError(f"spacing must be one of {SPACINGS}, got {self.spacing!r}")
        if self.d_policy not in D_POLICIES:
            raise RangeError(f"d_policy must be one of {D_POLICIES}, got {self.d_policy!r}")
        if self.aggregator not in AGGREGATORS:
            raise RangeError(
                f"aggregator must be one of {AGGREGATORS}, got {self.aggregator!r}"
            )
        if not (0.0 < self.top_level <= 1.0):
            raise RangeError(f"top_level must lie in (0, 1], got {self.top_level}")
        lv = tuple(float(v) for v in self.levels)
        if len(lv) < 1:
            raise RangeError("scheme needs at least one level")
        if any(b - a <= 0.0 for a, b in zip(lv, lv[1:])):
            raise RangeError("levels must be strictly increasing")
        if lv[0] <= 0.0 or lv[-1] > self.top_level + 1e-12:
            raise RangeError(
                f"levels must lie within (0, top_level={self.top_level}]"
            )
        if self.spacing == "equal":
            expected = np.linspace(0.1, 0.9, len(lv))
            if not np.allclose(lv, expected, rtol=0.0, atol=1e-12):
                raise RangeError(
                    "equal spacing requires levels uniform on [0.1, 0.9]"
                )
        object.__setattr__(self, "levels", lv)

    @property
    def level_count(self) -> int:
        return len(self.levels)

    @classmethod
    def from_spacing(cls, level_count: int, spacing: str, **kwargs) -> "ElicitationScheme":
        return cls(levels=make_levels(level_count, spacing), spacing=spacing, **kwargs)

    def to_dict(self) -> dict:
        return {
            "levels": list(self.levels),
            "spacing": self.spacing,
            "level_count": self.level_count,
            "top_level": self.top_level,
            "d_policy": self.d_policy,
            "aggregator": self.aggregator,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ElicitationScheme":
        if "levels" in data and data["levels"] is not None:
            levels = tuple(float(v) for v in data["levels"])
        else:
            levels = make_levels(int(data.get("level_count", 5)),
                                 data.get("spacing", "custom"))
        return cls(
            levels=levels,
            spacing=data.get("spacing", "custom"),
            top_level=float(data.get("top_level", 0.9)),
            d_policy=data.get("d_policy", "per_expert"),
            aggregator=data.get("aggregator", "mean"),
        )


@dataclass(frozen=True)
class NormalizedExpertPath:
    """An expert's path on the tau = time / D axis."""

    levels: tuple[float, ...]
    taus: tuple[float, ...]
    expert_id: str
    D_used: float

    def __post_init__(self) -> None:
        if len(self.levels) != len(self.taus):
            raise RangeError("levels and taus differ in length")
        t = np.asarray(self.taus)
        if np.any(t <= 0.0) or np.any(t > 1.0 + 1e-12):
            raise RangeError(
                f"normalized times must lie in (0, 1] for {self.expert_id}"
            )
        if np.any(np.diff(t) <= 0.0):
            raise RangeError(f"taus must be strictly increasing for {self.expert_id}")


def normalize_panel(
    panel: list[ExpertPath],
    d_policy: str = "per_expert",
    consensus_D: float | None = None,
) -> list[NormalizedExpertPath]:
    """Normalize each expert's times by D (their own, or the consensus).

    Under ``consensus`` policy every path must fit inside ``consensus_D``;
    a path reaching past it raises a normalization error naming the expert.
    """
    if d_policy not in D_POLICIES:
        raise RangeError(f"d_policy must be one of {D_POLICIES}, got {d_policy!r}")
    if d_policy == "consensus":
        if consensus_D is None:
            raise RangeError("consensus policy requires consensus_D")
        if not (consensus_D > 0.0 and np.isfinite(consensus_D)):
            raise RangeError(f"consensus_D must be positive, got {consensus_D}")
    out = []
    for path in panel:
        d = path.D if d_policy == "per_expert" else float(consensus_D)
        times = np.asarray(path.times)
        if times.size and times[-1] > d * (1.0 + 1e-12):
            raise InputError(
                f"consensus_D={d} is earlier than {path.expert_id}'s last "
                f"elicited time {times[-1]}",
                code="normalization_error",
            )
        taus = np.minimum(times / d, 1.0)
        out.append(NormalizedExpertPath(
            levels=path.levels,
            taus=tuple(taus.tolist()),
            expert_id=path.expert_id,
            D_used=d,
        ))
    return out


@dataclass(frozen=True)
class AggregatedData:
    """Across-expert training points and spread on the tau axis."""

    points: tuple[tuple[float, float], ...]  # (tau, level)
    sigma_tau: float
    n_experts: int
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.sigma_tau < 0.0:
            raise RangeError(f"sigma_tau must be >= 0, got {self.sigma_tau}")
        taus = np.array([p[0] for p in self.points])
        if np.any(np.diff(taus) < 0.0):
            raise RangeError("aggregated taus must be non-decreasing")
        w = np.asarray(self.weights)
        if w.size and abs(float(w.sum()) - 1.0) > 1e-9:
            raise RangeError(f"weights must sum to 1, got {w.sum()}")

    @property
    def taus(self) -> npt.NDArray[np.float64]:
        return np.array([p[0] for p in self.points])

    @property
    def levels(self) -> npt.NDArray[np.float64]:
        return np.array([p[1] for p in self.points])

    def to_dict(self) -> dict:
        return {
            "points": [list(p) for p in self.points],
            "sigma_tau": self.sigma_tau,
            "n_experts": self.n_experts,
            "weights": list(self.weights),
        }


def _check_weights(weights, n: int) -> npt.NDArray[np.float64]:
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != n:
        raise RangeError(f"expected {n} weights, got {w.size}")
    if np.any(w < 0.0) or not np.all(np.isfinite(w)):
        raise RangeError("weights must be nonnegative and finite")
    total = float(w.sum())
    if total <= 0.0:
        raise RangeError("weights must not all be zero")
    return w / total


def _aligned_tau_matrix(panel: list[NormalizedExpertPath]) -> tuple[
    npt.NDArray[np.float64], npt.NDArray[np.float64]
]:
    if not panel:
        raise InsufficientDataError("empty panel")
    levels = np.asarray(panel[0].levels, dtype=float)
    for p in panel[1:]:
        other = np.asarray(p.levels, dtype=float)
        if other.shape != levels.shape or not np.allclose(other, levels, rtol=0.0, atol=1e-12):
            raise AlignmentError(
                f"expert {p.expert_id} has levels {other.tolist()} but the "
                f"panel leads with {levels.tolist()}"
            )
    taus = np.array([p.taus for p in panel], dtype=float)  # experts x levels
    return taus, levels


def aggregate(
    panel: list[NormalizedExpertPath],
    aggregator: str = "mean",
    weights=None,
) -> AggregatedData:
    """Combine aligned expert paths into one training path per level.

    ``mean`` takes the (optionally weighted) mean tau per level; ``median``
    takes the unweighted median (weights are ignored by design).  Either
    way ``sigma_tau`` is the square root of the across-level average of the
    per-level weighted variance around the weighted mean.
    """
    if aggregator not in ("mean", "median"):
        raise RangeError(
            "aggregate() accepts 'mean' or 'median'; Cooke weighting is "
            "applied by passing cooke_weights(...) as weights to 'mean'"
        )
    taus, levels = _aligned_tau_matrix(panel)
    n = taus.shape[0]
    w = _check_weights(weights, n)
    center = w @ taus  # weighted mean per level
    if aggregator == "mean":
        agg = center
    else:
        agg = np.median(taus, axis=0)
    var_per_level = w @ (taus - center) ** 2
    sigma = float(np.sqrt(np.mean(var_per_level)))
    pts = tuple(zip(agg.tolist(), levels.tolist()))
    return AggregatedData(points=pts, sigma_tau=sigma, n_experts=n,
                          weights=tuple(w.tolist()))


def aggregate_sparse(
    estimates: dict[str, dict[float, float]],
    weights: dict[str, float] | None = None,
    aggregator: str = "mean",
) -> tuple[tuple[tuple[float, float], ...], dict[float, int]]:
    """Per-level aggregation over ragged (skip-allowed) tau estimates.

    ``estimates`` maps expert_id -> {level: tau}.  Each level is aggregated
    over exactly the experts who estimated it.  Returns the aggregated
    ``(tau, level)`` points sorted by level and a per-level contributor
    count.  Used by the workshop service where experts may skip levels.
    """
    if aggregator not in ("mean", "median"):
        raise RangeError(f"aggregator must be 'mean' or 'median', got {aggregator!r}")
    by_level: dict[float, list[tuple[float, float]]] = {}
    for expert_id, level_map in estimates.items():
        w = 1.0 if weights is None else float(weights.get(expert_id, 0.0))
        for level, tau in level_map.items():
            by_level.setdefault(float(level), []).append((float(tau), w))
    points = []
    counts: dict[float, int] = {}
    for level in sorted(by_level):
        pairs = by_level[level]
        taus = np.array([t for t, _ in pairs])
        ws = np.array([w for _, w in pairs])
        if float(ws.sum()) <= 0.0:
            raise RangeError(f"all contributors to level {level} have zero weight")
        if aggregator == "mean":
            tau = float(ws @ taus / ws.sum())
        else:
            tau = float(np.median(taus))
        points.append((tau, level))
        counts[level] = len(pairs)
    if not points:
        raise InsufficientDataError("no estimates to aggregate")
    return tuple(points), counts


def estimate_noise(panel: list[NormalizedExpertPath]) -> float:
    """Pooled across-expert spread on the tau axis (a single constant).

    The square root of the mean over levels of the per-level unbiased
    across-expert variance.  Needs at least two experts.
    """
    if len(panel) < 2:
        raise InsufficientDataError(
            f"noise estimation needs >= 2 experts, got {len(panel)}",
            code="insufficient_experts",
        )
    taus, _ = _aligned_tau_matrix(panel)
    var_per_level = np.var(taus, axis=0, ddof=1)
    return float(np.sqrt(np.mean(var_per_level)))


def estimate_noise_sparse(estimates: dict[str, dict[float, float]]) -> float | None:
    """Pooled unbiased variance over levels with >= 2 contributors.

    Returns ``None`` when no level has two contributors (noise must then be
    ML-fitted instead).
    """
    by_level: dict[float, list[float]] = {}
    for level_map in estimates.values():
        for level, tau in level_map.items():
            by_level.setdefault(float(level), []).append(float(tau))
    variances = [
        float(np.var(np.asarray(taus), ddof=1))
        for taus in by_level.values()
        if len(taus) >= 2
    ]
    if not variances:
        return None
    return float(np.sqrt(np.mean(variances)))


# ---------------------------------------------------------------------------
# Cooke's classical model


@dataclass(frozen=True)
class CookeAssessment:
    """Seed-question quantile answers (5/50/95%) and known realizations.

    ``quantiles[i, q, :]`` are expert ``i``'s three quantiles for question
    ``q``, strictly increasing.  The intrinsic range of a question is the
    envelope of every expert's quantiles and the realization, extended by
    ``intrinsic_range_overshoot`` of its width on each side.
    """

    expert_ids: tuple[str, ...]
    question_ids: tuple[str, ...]
    quantiles: npt.NDArray[np.float64]  # experts x questions x 3
    realizations: npt.NDArray[np.float64]
    intrinsic_range_overshoot: float = 0.1

    def __post_init__(self) -> None:
        q = np.asarray(self.quantiles, dtype=float)
        r = np.asarray(self.realizations, dtype=float)
        ne, nq = len(self.expert_ids), len(self.question_ids)
        if nq < 1:
            raise InsufficientDataError("at least one calibration question required")
        if ne < 1:
            raise InsufficientDataError("at least one expert required")
        if q.shape != (ne, nq, 3):
            raise RangeError(
                f"quantiles shape {q.shape} does not match "
                f"({ne} experts, {nq} questions, 3)"
            )
        if r.shape != (nq,):
            raise RangeError(f"realizations shape {r.shape} != ({nq},)")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(r))):
            raise RangeError("quantiles and realizations must be finite")
        if np.any(np.diff(q, axis=2) <= 0.0):
            bad = np.argwhere(np.diff(q, axis=2) <= 0.0)
            e, qq, _ = bad[0]
            raise RangeError(
                f"quantiles must be strictly increasing; expert "
                f"{self.expert_ids[e]} question {self.question_ids[qq]}"
            )
        if not (0.0 <= self.intrinsic_range_overshoot < 1.0):
            raise RangeError(
                f"intrinsic_range_overshoot must lie in [0, 1), got "
                f"{self.intrinsic_range_overshoot}"
            )
        q = q.copy()
        r = r.copy()
        q.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "quantiles", q)
        object.__setattr__(self, "realizations", r)
        object.__setattr__(self, "expert_ids", tuple(self.expert_ids))
        object.__setattr__(self, "question_ids", tuple(self.question_ids))

    @classmethod
    def from_csv(cls, source: bytes | str | io.IOBase,
                 intrinsic_range_overshoot: float = 0.1) -> "CookeAssessment":
        """Load from ``expert_id,question_id,q05,q50,q95,realization`` rows.

        Every expert must answer every question; a question's realization
        must be consistent across its rows.
        """
        if hasattr(source, "read"):
            raw = source.read()
        else:
            raw = source
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        reader = csv.reader(io.StringIO(raw))
        rows = []
        header = None
        for lineno, fields in enumerate(reader, start=1):
            if not fields or (len(fields) == 1 and not fields[0].strip()):
                continue
            if fields[0].strip().startswith("#"):
                continue
            if header is None:
                header = [f.strip().lower() for f in fields]
                expected = ["expert_id", "question_id", "q05", "q50", "q95", "realization"]
                if header != expected:
                    raise ParseError(
                        f"line {lineno}: expected header {','.join(expected)}"
                    )
                continue
            if len(fields) != 6:
                raise ParseError(f"line {lineno}: expected 6 fields, got {len(fields)}")
            try:
                rows.append((
                    fields[0].strip(), fields[1].strip(),
                    float(fields[2]), float(fields[3]), float(fields[4]),
                    float(fields[5]),
                ))
            except ValueError:
                raise ParseError(f"line {lineno}: non-numeric value") from None
        if header is None or not rows:
            raise ParseError("assessment CSV has no data rows")
        experts = sorted({r[0] for r in rows})
        questions = sorted({r[1] for r in rows})
        e_idx = {e: i for i, e in enumerate(experts)}
        q_idx = {q: i for i, q in enumerate(questions)}
        quantiles = np.full((len(experts), len(questions), 3), np.nan)
        realizations = np.full(len(questions), np.nan)
        for expert, question, q05, q50, q95, real in rows:
            quantiles[e_idx[expert], q_idx[question]] = (q05, q50, q95)
            prev = realizations[q_idx[question]]
            if not np.isnan(prev) and prev != real:
                raise ParseError(
                    f"question {question} has conflicting realizations "
                    f"{prev} and {real}"
                )
            realizations[q_idx[question]] = real
        if np.any(np.isnan(quantiles)):
            missing = np.argwhere(np.isnan(quantiles[:, :, 0]))
            e, q = missing[0]
            raise ParseError(
                f"expert {experts[e]} is missing question {questions[q]}"
            )
        return cls(
            expert_ids=tuple(experts),
            question_ids=tuple(questions),
            quantiles=quantiles,
            realizations=realizations,
            intrinsic_range_overshoot=intrinsic_range_overshoot,
        )


#: theoretical bin mass for (below q05, q05-q50, q50-q95, above q95)
COOKE_BIN_P = (0.05, 0.45, 0.45, 0.05)


@dataclass(frozen=True)
class CookeWeights:
    weights: tuple[float, ...]
    calibration: tuple[float, ...]
    information: tuple[float, ...]
    fallback_equal: bool


def calibration_score(hit_counts, n_questions: int) -> float:
    """Chi-squared(3) survival at ``2 N KL(s || p)`` for observed bin hits."""
    s = np.asarray(hit_counts, dtype=float) / n_questions
    p = np.asarray(COOKE_BIN_P)
    mask = s > 0.0
    kl = float(np.sum(s[mask] * np.log(s[mask] / p[mask])))
    return float(chi2.sf(2.0 * n_questions * kl, df=3))


def cooke_weights(assessment: CookeAssessment, cutoff: float = 0.0) -> CookeWeights:
    """Performance-based weights from calibration and information scores.

    Calibration: hit proportions over the four inter-quantile bins versus
    p = (0.05, 0.45, 0.45, 0.05), scored by the chi-squared(3) survival
    function at 2*N*KL.  A realization exactly equal to a quantile counts
    toward the lower bin.  Information: mean over questions of the KL
    divergence of the expert's implied piecewise-uniform density from the
    uniform density on the question's intrinsic range.  Raw weight =
    calibration * information, zeroed below ``cutoff``, normalized to sum
    one; all-zero raw weights fall back to equal weights with a flag.
    """
    q = assessment.quantiles
    r = assessment.realizations
    ne, nq, _ = q.shape
    over = assessment.intrinsic_range_overshoot

    # intrinsic range per question: envelope of all quantiles + realization
    lo = np.minimum(q[:, :, 0].min(axis=0), r)
    hi = np.maximum(q[:, :, 2].max(axis=0), r)
    width = hi - lo
    if np.any(width <= 0.0):
        # all experts and the realization coincide exactly; information is
        # undefined on a zero-width range
        raise RangeError("a question has zero intrinsic range")
    lo_star = lo - over * width
    hi_star = hi + over * width

    calibrations = []
    informations = []
    p = np.asarray(COOKE_BIN_P)
    for e in range(ne):
        hits = np.zeros(4)
        info_sum = 0.0
        for k in range(nq):
            q05, q50, q95 = q[e, k]
            x = r[k]
            if x <= q05:
                hits[0] += 1
            elif x <= q50:
                hits[1] += 1
            elif x <= q95:
                hits[2] += 1
            else:
                hits[3] += 1
            edges = np.array([lo_star[k], q05, q50, q95, hi_star[k]])
            widths = np.diff(edges)
            total = hi_star[k] - lo_star[k]
            # KL(expert || uniform) over the continuous densities
            info_sum += float(np.sum(p * np.log(p * total / widths)))
        calibrations.append(calibration_score(hits, nq))
        informations.append(info_sum / nq)

    raw = np.array([
        c * i if c >= cutoff else 0.0
        for c, i in zip(calibrations, informations)
    ])
    raw = np.maximum(raw, 0.0)
    total = float(raw.sum())
    if total <= 0.0:
        weights = np.full(ne, 1.0 / ne)
        fallback = True
    else:
        weights = raw / total
        fallback = False
    return CookeWeights(
        weights=tuple(weights.tolist()),
        calibration=tuple(float(c) for c in calibrations),
        information=tuple(float(i) for i in informations),
        fallback_equal=fallback,
    )


# ---------------------------------------------------------------------------
# Delphi consensus on D


def delphi_spread(estimates: dict[str, float]) -> float:
    """Relative spread (max - min) / median of a round's D values."""
    values = list(estimates.values())
    med = statistics.median(values)
    if med <= 0.0:
        raise RangeError("Delphi estimates must be positive")
    return (max(values) - min(values)) / med


@dataclass(frozen=True)
class DelphiSession:
    """Value-typed Delphi state: completed rounds and the stop rule.

    ``status`` derives from the last completed round: ``collecting`` before
    any round, ``consensus`` once the relative spread is within tolerance,
    ``feedback`` otherwise (experts see min/median/max and revise).
    ``round`` is the active round number (the consensus round itself once
    reached).
    """

    roster: tuple[str, ...]
    tolerance: float = DELPHI_TOLERANCE
    history: tuple[tuple[tuple[str, float], ...], ...] = ()

    def __post_init__(self) -> None:
        if not (self.tolerance > 0.0 and np.isfinite(self.tolerance)):
            raise RangeError(f"tolerance must be positive, got {self.tolerance}")
        if len(set(self.roster)) != len(self.roster):
            raise RangeError("duplicate expert ids in roster")

    @property
    def estimates(self) -> dict[str, float]:
        """Latest completed round's estimates (empty before round 1)."""
        return dict(self.history[-1]) if self.history else {}

    @property
    def status(self) -> str:
        if not self.history:
            return "collecting"
        return "consensus" if delphi_spread(self.estimates) <= self.tolerance else "feedback"

    @property
    def round(self) -> int:
        n = len(self.history)
        return n if self.status == "consensus" else n + 1

    @property
    def consensus_D(self) -> float | None:
        if self.status != "consensus":
            return None
        return float(statistics.median(self.estimates.values()))

    def feedback_stats(self) -> dict | None:
        """Anonymized min/median/max/spread of the latest round."""
        if not self.history:
            return None
        values = list(self.estimates.values())
        return {
            "min": float(min(values)),
            "median": float(statistics.median(values)),
            "max": float(max(values)),
            "spread": float(delphi_spread(self.estimates)),
        }

    def to_dict(self) -> dict:
        return {
            "roster": list(self.roster),
            "tolerance": self.tolerance,
            "round": self.round,
            "status": self.status,
            "history": [dict(r) for r in self.history],
            "consensus_D": self.consensus_D,
        }


def delphi_step(session: DelphiSession, new_estimates: dict[str, float]) -> DelphiSession:
    """Complete one Delphi round with everyone's (possibly revised) D.

    Requires the session not yet at consensus and an estimate from every
    enrolled expert.  Returns the new session value; consensus is reached
    when the relative spread falls within tolerance.
    """
    if session.status == "consensus":
        raise StateError("session already reached consensus")
    missing = [e for e in session.roster if e not in new_estimates]
    if missing:
        raise InputError(
            f"round incomplete; missing estimates from {missing}",
            code="incomplete_round",
        )
    unknown = [e for e in new_estimates if e not in session.roster]
    if unknown:
        raise InputError(f"estimates from unenrolled experts {unknown}")
    for expert, value in new_estimates.items():
        if not (value > 0.0 and np.isfinite(value)):
            raise RangeError(f"D must be positive, got {value} from {expert}")
    round_entry = tuple(sorted((str(k), float(v)) for k, v in new_estimates.items()))
    return replace(session, history=session.history + (round_entry,))
