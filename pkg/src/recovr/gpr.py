"""Shape-constrained Gaussian process regression on a hat-function basis.

The latent recovery function on normalized time ``tau in [0, 1]`` is
approximated by a piecewise-linear expansion

    f(tau) = sum_j  xi_j * phi_j(tau)

over hat functions ``phi_j`` centered at knots ``0 = t_0 < ... < t_m = 1``.
Because ``f`` interpolates its coefficients linearly, knot-level constraints
imply the same constraints pointwise everywhere:

* ``xi_{j+1} >= xi_j``            ->  ``f`` non-decreasing on [0, 1]
* ``lower <= xi_j <= upper``      ->  ``lower <= f <= upper`` on [0, 1]

The coefficient prior is the kernel Gram matrix on the knots; conditioning
on training pairs ``(tau_i, level_i)`` with observation noise gives a
Gaussian with precision

    A = Gram^-1 + Phi' Phi / noise,    b = Phi' y / noise

truncated to the constraint polytope.  The posterior mode is the convex QP
``argmin 0.5 xi'A xi - b'xi`` over the polytope; posterior samples come from
Gibbs sampling the truncated Gaussian started at the mode (burn-in
``100 * (m+1)`` scans, thinning ``m+1`` scans per retained vector).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
import scipy.linalg
from scipy.optimize import isotonic_regression

from .errors import (
    ConvergenceError,
    InfeasibleError,
    NumericalError,
    ParseError,
    RangeError,
)
from .kernels import KernelParams, chol_with_jitter, gram_matrix
from .qp import solve_qp
from .rng import substream
from .tmvn import sample_tmvn_gibbs

__all__ = [
    "HatBasis",
    "uniform_basis",
    "ConstraintSet",
    "ConstrainedGpModel",
    "build_model",
    "posterior_mode",
    "sample_posterior",
    "predict",
    "PosteriorSummary",
    "DEFAULT_KNOT_COUNT",
    "DEFAULT_GRID_SIZE",
]

DEFAULT_KNOT_COUNT = 30
DEFAULT_GRID_SIZE = 201

#: observation-noise floor inside the posterior assembly (a literal zero
#: would make Phi'Phi/noise undefined; noise-free fits pass 1e-10 anyway)
NOISE_FLOOR = 1e-12

#: feasibility tolerance granted to samples/curves in validation
FEAS_TOL = 1e-8
#: tolerance for "mean lies inside the bands"
BAND_TOL = 1e-9
#: QP stationarity acceptance threshold (relative residual)
KKT_TOL = 1e-6


@dataclass(frozen=True)
class HatBasis:
    """Piecewise-linear (hat) basis on knots spanning [0, 1]."""

    knots: tuple[float, ...]

    def __post_init__(self) -> None:
        k = np.asarray(self.knots, dtype=float)
        if k.size < 2:
            raise RangeError(f"need at least 2 knots, got {k.size}")
        if k[0] != 0.0 or k[-1] != 1.0:
            raise RangeError(f"knots must span [0, 1], got [{k[0]}, {k[-1]}]")
        if np.any(np.diff(k) <= 0.0):
            raise RangeError("knots must be strictly increasing")
        object.__setattr__(self, "knots", tuple(float(v) for v in k))

    @property
    def size(self) -> int:
        return len(self.knots)

    def design(self, xs) -> npt.NDArray[np.float64]:
        """Design matrix ``Phi[i, j] = phi_j(xs[i])``; rows sum to 1."""
        xs = np.asarray(xs, dtype=float).ravel()
        if xs.size and (xs.min() < -1e-12 or xs.max() > 1.0 + 1e-12):
            raise RangeError(
                f"evaluation points must lie in [0, 1], got range "
                f"[{xs.min()}, {xs.max()}]"
            )
        xs = np.clip(xs, 0.0, 1.0)
        k = np.asarray(self.knots)
        idx = np.clip(np.searchsorted(k, xs, side="right") - 1, 0, k.size - 2)
        w = (xs - k[idx]) / (k[idx + 1] - k[idx])
        out = np.zeros((xs.size, k.size))
        rows = np.arange(xs.size)
        out[rows, idx] = 1.0 - w
        out[rows, idx + 1] = w
        return out


def uniform_basis(knot_count: int = DEFAULT_KNOT_COUNT) -> HatBasis:
    """Hat basis on ``knot_count`` equally spaced knots over [0, 1]."""
    if knot_count < 2:
        raise RangeError(f"knot_count must be >= 2, got {knot_count}")
    return HatBasis(knots=tuple(np.linspace(0.0, 1.0, knot_count).tolist()))


@dataclass(frozen=True)
class ConstraintSet:
    """Which shape constraints to impose on the coefficients."""

    monotone: bool = True
    bounded: bool = True
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self) -> None:
        if self.bounded and not self.lower < self.upper:
            raise InfeasibleError(
                f"empty box: lower={self.lower} >= upper={self.upper}"
            )

    @property
    def any(self) -> bool:
        return self.monotone or self.bounded

    @classmethod
    def none(cls) -> "ConstraintSet":
        return cls(monotone=False, bounded=False)

    def matrix(self, d: int) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
        """Rows of ``G x >= h``: monotone diffs first, then lower, then upper."""
        rows: list[npt.NDArray[np.float64]] = []
        rhs: list[float] = []
        if self.monotone:
            for j in range(d - 1):
                r = np.zeros(d)
                r[j] = -1.0
                r[j + 1] = 1.0
                rows.append(r)
                rhs.append(0.0)
        if self.bounded:
            for j in range(d):
                r = np.zeros(d)
                r[j] = 1.0
                rows.append(r)
                rhs.append(self.lower)
            for j in range(d):
                r = np.zeros(d)
                r[j] = -1.0
                rows.append(r)
                rhs.append(-self.upper)
        if not rows:
            return np.zeros((0, d)), np.zeros(0)
        return np.vstack(rows), np.asarray(rhs)

    def project(self, x: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        """A feasible point near ``x`` (isotonic projection, then clip)."""
        v = np.asarray(x, dtype=float).copy()
        if self.monotone:
            v = isotonic_regression(v).x.copy()
        if self.bounded:
            v = np.clip(v, self.lower, self.upper)  # preserves monotonicity
        return v


@dataclass(frozen=True)
class ConstrainedGpModel:
    """Hat basis + kernel prior + constraint set, with the prior Gram cached."""

    basis: HatBasis
    params: KernelParams
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    gram: npt.NDArray[np.float64] = field(init=False, repr=False, compare=False)
    gram_inv: npt.NDArray[np.float64] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        knots = np.asarray(self.basis.knots)
        gram = gram_matrix(self.params, knots)
        L, _ = chol_with_jitter(gram)
        gram_inv = scipy.linalg.cho_solve((L, True), np.eye(knots.size))
        gram_inv = 0.5 * (gram_inv + gram_inv.T)
        for arr in (gram, gram_inv):
            arr.flags.writeable = False
        object.__setattr__(self, "gram", gram)
        object.__setattr__(self, "gram_inv", gram_inv)

    @property
    def prior_gram(self) -> npt.NDArray[np.float64]:
        """Prior covariance of the knot coefficients (alias of ``gram``)."""
        return self.gram


def build_model(
    knot_count: int = DEFAULT_KNOT_COUNT,
    params: KernelParams | None = None,
    constraints: ConstraintSet | None = None,
) -> ConstrainedGpModel:
    """Convenience constructor on a uniform knot grid."""
    if params is None:
        params = KernelParams(variance=1.0, length_scale=0.3, noise_variance=1e-4)
    if constraints is None:
        constraints = ConstraintSet()
    return ConstrainedGpModel(basis=uniform_basis(knot_count), params=params,
                              constraints=constraints)


def _as_train(train) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    arr = np.asarray(train, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
        raise RangeError(f"training data must be nonempty (tau, level) pairs, got shape {arr.shape}")
    taus, levels = arr[:, 0], arr[:, 1]
    if np.any(taus < -1e-12) or np.any(taus > 1.0 + 1e-12):
        raise RangeError("training taus must lie in [0, 1]")
    return np.clip(taus, 0.0, 1.0), levels


def _posterior_moments(
    model: ConstrainedGpModel, train
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """Precision ``A``, linear term ``b`` and unconstrained mean of the
    coefficient posterior."""
    taus, levels = _as_train(train)
    noise = max(model.params.noise_variance, NOISE_FLOOR)
    if model.params.noise_variance <= 0.0 and np.unique(taus).size != taus.size:
        raise RangeError("zero-noise fits require distinct training taus")
    phi = model.basis.design(taus)
    A = model.gram_inv + (phi.T @ phi) / noise
    A = 0.5 * (A + A.T)
    b = phi.T @ levels / noise
    L, _ = chol_with_jitter(A)
    mu = scipy.linalg.cho_solve((L, True), b)
    return A, b, mu


def posterior_mode(model: ConstrainedGpModel, train) -> npt.NDArray[np.float64]:
    """Mode of the constrained coefficient posterior (convex QP)."""
    A, b, mu = _posterior_moments(model, train)
    cs = model.constraints
    if not cs.any:
        return mu
    d = mu.size
    G, h = cs.matrix(d)
    x0 = cs.project(mu)
    result = solve_qp(A, b, G, h, x0, max_iter=10 * d)
    if result.kkt_residual > KKT_TOL:
        raise ConvergenceError(
            f"QP returned KKT residual {result.kkt_residual:.3e} > {KKT_TOL:g}"
        )
    return result.x


def sample_posterior(
    model: ConstrainedGpModel,
    train,
    n_samples: int,
    seed: int | np.random.Generator = 0,
) -> npt.NDArray[np.float64]:
    """Gibbs samples from the constrained coefficient posterior.

    The chain starts at the posterior mode, burns in ``100 * d`` full scans
    and keeps one vector every ``d`` scans.  An integer ``seed`` fully
    determines the output; a ``Generator`` may be passed instead to continue
    an existing stream.
    """
    A, b, mu = _posterior_moments(model, train)
    cs = model.constraints
    mode = posterior_mode(model, train) if cs.any else mu
    rng = seed if isinstance(seed, np.random.Generator) else substream(int(seed))
    return sample_tmvn_gibbs(
        A, mu, mode, n_samples, rng,
        lower=cs.lower if cs.bounded else -math.inf,
        upper=cs.upper if cs.bounded else math.inf,
        monotone=cs.monotone, bounded=cs.bounded,
    )


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior mode, pointwise mean and 95% band on an evaluation grid.

    ``mode`` holds the posterior-mode coefficient at each knot; ``mean``,
    ``lower95`` and ``upper95`` are pointwise over ``grid``.  Construction
    validates the shape guarantees: every retained sample and the mean curve
    respects the constraints (within 1e-8), and the mean lies inside the
    band (within 1e-9).
    """

    grid: npt.NDArray[np.float64]
    mean: npt.NDArray[np.float64]
    lower95: npt.NDArray[np.float64]
    upper95: npt.NDArray[np.float64]
    mode: npt.NDArray[np.float64]
    knots: tuple[float, ...]
    params: KernelParams
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    samples: npt.NDArray[np.float64] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        mean = np.asarray(self.mean, dtype=float)
        lower = np.asarray(self.lower95, dtype=float)
        upper = np.asarray(self.upper95, dtype=float)
        mode = np.asarray(self.mode, dtype=float)
        if not (grid.shape == mean.shape == lower.shape == upper.shape):
            raise RangeError("grid, mean and bands must have matching shapes")
        if grid.size < 2 or np.any(np.diff(grid) <= 0.0):
            raise RangeError("grid must be strictly increasing with >= 2 points")
        if grid[0] < -1e-12 or grid[-1] > 1.0 + 1e-12:
            raise RangeError("grid must lie in [0, 1]")
        if mode.size != len(self.knots):
            raise RangeError("mode length must match knot count")
        if np.any(mean < lower - BAND_TOL) or np.any(mean > upper + BAND_TOL):
            raise NumericalError("mean curve escapes its own 95% band")
        cs = self.constraints
        for name, curve in (("mean", mean), ("mode", mode)):
            if cs.monotone and np.any(np.diff(curve) < -FEAS_TOL):
                raise NumericalError(f"{name} curve is not non-decreasing")
            if cs.bounded and (np.any(curve < cs.lower - FEAS_TOL)
                               or np.any(curve > cs.upper + FEAS_TOL)):
                raise NumericalError(f"{name} curve escapes [{cs.lower}, {cs.upper}]")
        if self.samples is not None:
            s = np.asarray(self.samples, dtype=float)
            if cs.monotone and np.any(np.diff(s, axis=1) < -FEAS_TOL):
                raise NumericalError("a posterior sample is not non-decreasing")
            if cs.bounded and (np.any(s < cs.lower - FEAS_TOL)
                               or np.any(s > cs.upper + FEAS_TOL)):
                raise NumericalError("a posterior sample escapes the bounds")
        for arr in (grid, mean, lower, upper, mode):
            arr.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "lower95", lower)
        object.__setattr__(self, "upper95", upper)
        object.__setattr__(self, "mode", mode)

    def band_width_at(self, tau: float) -> float:
        """Upper minus lower band at the grid point nearest ``tau``."""
        i = int(np.argmin(np.abs(self.grid - tau)))
        return float(self.upper95[i] - self.lower95[i])

    def to_dict(self) -> dict:
        """JSON-ready dict (samples are not serialized)."""
        p = self.params
        return {
            "grid": self.grid.tolist(),
            "mean": self.mean.tolist(),
            "lower95": self.lower95.tolist(),
            "upper95": self.upper95.tolist(),
            "mode": self.mode.tolist(),
            "knots": list(self.knots),
            "params": {
                "variance": p.variance,
                "length_scale": p.length_scale,
                "noise_variance": p.noise_variance,
                "kind": p.kind,
            },
            "constraints": {
                "monotone": self.constraints.monotone,
                "bounded": self.constraints.bounded,
                "lower": self.constraints.lower,
                "upper": self.constraints.upper,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PosteriorSummary":
        if not isinstance(data, dict):
            raise ParseError(
                f"summary must be a JSON object, got {type(data).__name__}"
            )
        required = ("grid", "mean", "lower95", "upper95", "mode", "knots",
                    "params")
        missing = [k for k in required if k not in data]
        if missing:
            raise ParseError(
                f"summary is missing fields: {', '.join(missing)}"
            )
        p = data["params"]
        for k in ("variance", "length_scale", "noise_variance"):
            if k not in p:
                raise ParseError(f"summary params are missing {k!r}")
        c = data.get("constraints", {})
        return cls(
            grid=np.asarray(data["grid"], dtype=float),
            mean=np.asarray(data["mean"], dtype=float),
            lower95=np.asarray(data["lower95"], dtype=float),
            upper95=np.asarray(data["upper95"], dtype=float),
            mode=np.asarray(data["mode"], dtype=float),
            knots=tuple(float(k) for k in data["knots"]),
            params=KernelParams(
                variance=p["variance"], length_scale=p["length_scale"],
                noise_variance=p["noise_variance"], kind=p.get("kind", "se"),
            ),
            constraints=ConstraintSet(
                monotone=c.get("monotone", True), bounded=c.get("bounded", True),
                lower=c.get("lower", 0.0), upper=c.get("upper", 1.0),
            ),
        )


def predict(
    model: ConstrainedGpModel,
    train,
    grid: npt.NDArray[np.float64] | None = None,
    n_samples: int = 1000,
    seed: int | np.random.Generator = 0,
) -> PosteriorSummary:
    """Posterior summary on a grid (default 201 equally spaced points).

    The mean curve is the sample average over ``n_samples`` Gibbs draws;
    the band is the pointwise empirical 2.5/97.5 percentile.
    """
    if grid is None:
        grid = np.linspace(0.0, 1.0, DEFAULT_GRID_SIZE)
    grid = np.asarray(grid, dtype=float).ravel()
    cs = model.constraints
    A, b, mu = _posterior_moments(model, train)
    mode = posterior_mode(model, train) if cs.any else mu
    rng = seed if isinstance(seed, np.random.Generator) else substream(int(seed))
    samples = sample_tmvn_gibbs(
        A, mu, mode, n_samples, rng,
        lower=cs.lower if cs.bounded else -math.inf,
        upper=cs.upper if cs.bounded else math.inf,
        monotone=cs.monotone, bounded=cs.bounded,
    )
    phi = model.basis.design(grid)
    curves = samples @ phi.T
    mean = curves.mean(axis=0)
    lower = np.quantile(curves, 0.025, axis=0)
    upper = np.quantile(curves, 0.975, axis=0)
    return PosteriorSummary(
        grid=grid, mean=mean, lower95=lower, upper95=upper, mode=mode,
        knots=model.basis.knots, params=model.params, constraints=cs,
        samples=samples,
    )
