"""Simulated expert panels: surrogate regression plus two-layer noise.

A past event's empirical curve stands in for an expert's mental model: a
polynomial ``g(level)`` fitted by least squares to ``log(time)`` is the
surrogate.  A simulated expert's elicited time at each level is

    time_i = exp(g(level_i) + eps1_i + eps2)

with ``eps1_i ~ N(0, var_within)`` independent per level (within-expert
scatter) and ``eps2 ~ N(0, var_across)`` drawn once per expert (systematic
optimism/pessimism shared across the whole path).  The expert's completion
estimate uses the same shared term: ``D = exp(g(top_level) + eps1_D + eps2)``
with a fresh within-noise draw.

A raw draw is accepted only if the times are strictly increasing and
``D >= `` the last time; otherwise the entire path (both noise layers) is
redrawn, up to a budget of 10,000 attempts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .curves import RecoveryCurve
from .errors import ConditioningError, RangeError, RejectionBudgetError
from .rng import child_sequence

__all__ = [
    "SurrogateModel",
    "NoiseSpec",
    "ExpertPath",
    "fit_surrogate",
    "simulate_expert_path",
    "simulate_panel",
    "panel_to_json",
    "panel_from_json",
    "REJECTION_BUDGET",
]

REJECTION_BUDGET = 10_000


@dataclass(frozen=True)
class SurrogateModel:
    """Polynomial map from recovery level to (log) time.

    ``coefficients`` are ascending powers; ``log_scale=True`` means the
    polynomial predicts ``log(time)`` (the form the simulator requires),
    ``False`` means raw time (kept for side-by-side comparison only).
    """

    coefficients: tuple[float, ...]
    degree: int
    fit_rmse: float
    log_scale: bool = True

    def __post_init__(self) -> None:
        if self.degree < 1:
            raise RangeError(f"degree must be >= 1, got {self.degree}")
        if len(self.coefficients) != self.degree + 1:
            raise RangeError(
                f"expected {self.degree + 1} coefficients, got {len(self.coefficients)}"
            )
        if not all(np.isfinite(self.coefficients)):
            raise ConditioningError("surrogate coefficients are not finite")

    def __call__(self, level) -> npt.NDArray[np.float64] | float:
        """Evaluate the polynomial (log-time if ``log_scale``)."""
        out = np.polynomial.polynomial.polyval(np.asarray(level, dtype=float),
                                               np.asarray(self.coefficients))
        return out if np.ndim(out) else float(out)

    def time(self, level) -> npt.NDArray[np.float64] | float:
        """Predicted time in physical units at ``level``."""
        v = self(level)
        return np.exp(v) if self.log_scale else v


@dataclass(frozen=True)
class NoiseSpec:
    """Variances of the two noise layers on the log-time scale."""

    var_within: float
    var_across: float

    def __post_init__(self) -> None:
        for name, v in (("var_within", self.var_within), ("var_across", self.var_across)):
            if not (v >= 0.0 and np.isfinite(v)):
                raise RangeError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class ExpertPath:
    """One expert's elicited times at the scheme levels, plus their D.

    ``attempts`` records how many joint redraws the simulator needed before
    this path passed the monotonicity filter (1 = accepted first try).  It
    is simulation metadata, not elicited data, and stays out of the wire
    format.
    """

    levels: tuple[float, ...]
    times: tuple[float, ...]
    D: float
    expert_id: str = "expert-0"
    attempts: int = 1

    def __post_init__(self) -> None:
        if len(self.levels) != len(self.times):
            raise RangeError(
                f"levels ({len(self.levels)}) and times ({len(self.times)}) differ in length"
            )
        t = np.asarray(self.times)
        if t.size and (np.any(t <= 0.0) or not np.all(np.isfinite(t))):
            raise RangeError("times must be positive and finite")
        if np.any(np.diff(t) <= 0.0):
            raise RangeError(f"times must be strictly increasing for {self.expert_id}")
        if not (self.D > 0.0 and np.isfinite(self.D)):
            raise RangeError(f"D must be positive, got {self.D}")
        if t.size and self.D < t[-1]:
            raise RangeError(
                f"D={self.D} is earlier than the last elicited time {t[-1]} "
                f"for {self.expert_id}"
            )
        if self.attempts < 1:
            raise RangeError(f"attempts must be >= 1, got {self.attempts}")


def fit_surrogate(curve: RecoveryCurve, degree: int = 4, log_scale: bool = True) -> SurrogateModel:
    """Least-squares polynomial of (log) time on recovery level.

    Requires at least ``degree + 1`` points and, when ``log_scale``,
    strictly positive times.
    """
    if degree < 1:
        raise RangeError(f"degree must be >= 1, got {degree}")
    times = curve.times
    levels = curve.levels
    if times.size < degree + 1:
        raise RangeError(
            f"need at least degree+1={degree + 1} points, got {times.size}"
        )
    if log_scale and np.any(times <= 0.0):
        raise RangeError("times must be positive to fit on the log scale")
    y = np.log(times) if log_scale else times
    # domain=[] keeps coefficients in the plain power basis
    poly, info = np.polynomial.Polynomial.fit(levels, y, deg=degree, domain=[], full=True)
    rank = int(info[1])
    if rank < degree + 1:
        raise ConditioningError(
            f"rank-deficient polynomial design (rank {rank} < {degree + 1}); "
            "lower the degree or supply more distinct levels"
        )
    resid = y - poly(levels)
    rmse = float(np.sqrt(np.mean(resid**2)))
    return SurrogateModel(
        coefficients=tuple(float(c) for c in poly.coef),
        degree=degree,
        fit_rmse=rmse,
        log_scale=log_scale,
    )


def _validate_levels(levels, top_level: float) -> npt.NDArray[np.float64]:
    lv = np.asarray(levels, dtype=float).ravel()
    if not (0.0 < top_level <= 1.0):
        raise RangeError(f"top_level must lie in (0, 1], got {top_level}")
    if lv.size < 1:
        raise RangeError("need at least one elicitation level")
    if np.any(np.diff(lv) <= 0.0):
        raise RangeError("levels must be strictly increasing")
    if lv[0] <= 0.0 or lv[-1] > top_level + 1e-12:
        raise RangeError(
            f"levels must lie within (0, top_level={top_level}], got "
            f"[{lv[0]}, {lv[-1]}]"
        )
    return lv


def simulate_expert_path(
    surrogate: SurrogateModel,
    levels,
    noise: NoiseSpec,
    top_level: float = 0.9,
    seed: int | np.random.SeedSequence | np.random.Generator = 0,
    expert_id: str = "expert-0",
    across_noise_per_level: bool = False,
) -> ExpertPath:
    """One simulated expert: noisy times at ``levels`` plus a D estimate.

    Per attempt the draws are, in order: ``eps2`` (one value, or one per
    level plus one for D when ``across_noise_per_level``), the per-level
    ``eps1`` vector, and ``eps1_D``.  The attempt is accepted when the times
    are strictly increasing and ``D >= `` the last time; otherwise all noise
    is redrawn.  Raises a rejection-budget error after 10,000 attempts.
    """
    if not surrogate.log_scale:
        raise RangeError("simulation requires a log-scale surrogate")
    lv = _validate_levels(levels, top_level)
    if isinstance(seed, np.random.Generator):
        rng = seed
    elif isinstance(seed, np.random.SeedSequence):
        rng = np.random.default_rng(seed)
    else:
        # bare integer: identical to stream 0 of a panel with this seed
        rng = np.random.default_rng(child_sequence(int(seed), 0))
    sd1 = float(np.sqrt(noise.var_within))
    sd2 = float(np.sqrt(noise.var_across))
    g_levels = np.asarray(surrogate(lv), dtype=float)
    g_top = float(surrogate(top_level))

    for attempt in range(1, REJECTION_BUDGET + 1):
        if across_noise_per_level:
            eps2 = rng.normal(0.0, sd2, size=lv.size)
            eps2_d = float(rng.normal(0.0, sd2))
        else:
            eps2 = float(rng.normal(0.0, sd2))
            eps2_d = eps2
        eps1 = rng.normal(0.0, sd1, size=lv.size)
        eps1_d = float(rng.normal(0.0, sd1))
        times = np.exp(g_levels + eps1 + eps2)
        D = float(np.exp(g_top + eps1_d + eps2_d))
        if np.all(np.diff(times) > 0.0) and D >= times[-1]:
            return ExpertPath(
                levels=tuple(lv.tolist()),
                times=tuple(times.tolist()),
                D=D,
                expert_id=expert_id,
                attempts=attempt,
            )
    raise RejectionBudgetError(
        f"no monotone path in {REJECTION_BUDGET} attempts for {expert_id} "
        f"(acceptance rate estimate 0/{REJECTION_BUDGET}; the surrogate may be "
        "non-monotone over the requested levels)",
        attempts=REJECTION_BUDGET,
        accepted=0,
    )


def simulate_panel(
    surrogate: SurrogateModel,
    n_experts: int,
    levels,
    noise: NoiseSpec,
    top_level: float = 0.9,
    seed: int = 0,
    across_noise_per_level: bool = False,
) -> list[ExpertPath]:
    """``n_experts`` independent paths from per-expert derived RNG streams.

    Expert ``i`` uses spawn child ``i`` of the seed's stream, so the panel
    is reproducible and stream ``i`` does not depend on ``n_experts`` (a
    3-expert panel is a prefix of the 10-expert panel with the same seed).
    """
    if n_experts < 1:
        raise RangeError(f"n_experts must be >= 1, got {n_experts}")
    if isinstance(seed, np.random.SeedSequence):
        children = seed.spawn(n_experts)
    else:
        children = np.random.SeedSequence((int(seed),)).spawn(n_experts)
    return [
        simulate_expert_path(
            surrogate, levels, noise, top_level,
            seed=children[i], expert_id=f"expert-{i}",
            across_noise_per_level=across_noise_per_level,
        )
        for i in range(n_experts)
    ]


def panel_to_json(panel: list[ExpertPath]) -> list[dict]:
    """Wire format: one object per expert with day-unit arrays."""
    return [
        {
            "expert_id": p.expert_id,
            "levels": list(p.levels),
            "times_days": list(p.times),
            "D_days": p.D,
        }
        for p in panel
    ]


def panel_from_json(data: list[dict]) -> list[ExpertPath]:
    return [
        ExpertPath(
            levels=tuple(float(v) for v in item["levels"]),
            times=tuple(float(v) for v in item["times_days"]),
            D=float(item["D_days"]),
            expert_id=str(item["expert_id"]),
        )
        for item in data
    ]
