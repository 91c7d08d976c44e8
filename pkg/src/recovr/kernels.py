"""Covariance kernels and marginal-likelihood hyperparameter fitting.

The default kernel is the squared exponential

    k(x, x') = variance * exp(-(x - x')**2 / (2 * length_scale**2))

with an optional Matern-5/2 alternative selected by ``KernelParams.kind``.
``noise_variance`` travels with the kernel parameters but is consumed by the
likelihood and posterior assembly, never by ``kernel_eval`` itself.

Hyperparameters are fitted by maximizing the Gaussian-process log marginal
likelihood with multi-start Nelder-Mead in log-parameter space.  The whole
procedure is deterministic: a fixed start grid, deterministic optimizer,
ties broken by the lowest start index.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np
import numpy.typing as npt
import scipy.linalg
import scipy.optimize

from .errors import ConditioningError, InsufficientDataError, RangeError

__all__ = [
    "KernelParams",
    "kernel_eval",
    "gram_matrix",
    "log_marginal_likelihood",
    "fit_hyperparameters",
    "default_init_grid",
]

KERNEL_KINDS = ("se", "matern52")

#: Cholesky jitter ladder: escalate by 10x from 1e-10, give up past 1e-6.
JITTER_START = 1e-10
JITTER_MAX = 1e-6


@dataclass(frozen=True)
class KernelParams:
    """Kernel hyperparameters: signal variance, length scale, noise variance."""

    variance: float
    length_scale: float
    noise_variance: float = 0.0
    kind: str = "se"

    def __post_init__(self) -> None:
        if self.kind not in KERNEL_KINDS:
            raise RangeError(f"kind must be one of {KERNEL_KINDS}, got {self.kind!r}")
        if not (self.variance > 0.0 and math.isfinite(self.variance)):
            raise RangeError(f"variance must be positive, got {self.variance}")
        if not (self.length_scale > 0.0 and math.isfinite(self.length_scale)):
            raise RangeError(f"length_scale must be positive, got {self.length_scale}")
        if not (self.noise_variance >= 0.0 and math.isfinite(self.noise_variance)):
            raise RangeError(f"noise_variance must be >= 0, got {self.noise_variance}")


def kernel_eval(params: KernelParams, x, xp) -> npt.NDArray[np.float64] | float:
    """Evaluate the noise-free kernel; broadcasts over array inputs."""
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    d = x - xp
    if params.kind == "se":
        out = params.variance * np.exp(-(d * d) / (2.0 * params.length_scale**2))
    else:  # matern52
        r = np.abs(d) * (math.sqrt(5.0) / params.length_scale)
        out = params.variance * (1.0 + r + r * r / 3.0) * np.exp(-r)
    return out if out.ndim else float(out)


def gram_matrix(params: KernelParams, xs, ys=None) -> npt.NDArray[np.float64]:
    """Kernel matrix ``K[i, j] = k(xs[i], ys[j])`` (``ys`` defaults to ``xs``)."""
    xs = np.asarray(xs, dtype=float).ravel()
    ys = xs if ys is None else np.asarray(ys, dtype=float).ravel()
    return np.asarray(kernel_eval(params, xs[:, None], ys[None, :]), dtype=float)


def chol_with_jitter(mat: npt.NDArray[np.float64]) -> tuple[npt.NDArray[np.float64], float]:
    """Lower Cholesky factor, escalating diagonal jitter 1e-10 -> 1e-6.

    Returns ``(L, jitter_used)``; raises a conditioning error if the matrix
    is not positive definite even at the jitter cap.
    """
    jitter = 0.0
    eye = np.eye(mat.shape[0])
    while True:
        try:
            return np.linalg.cholesky(mat + jitter * eye), jitter
        except np.linalg.LinAlgError:
            if jitter == 0.0:
                jitter = JITTER_START
            elif jitter >= JITTER_MAX:
                raise ConditioningError(
                    f"matrix not positive definite even with jitter {jitter:g}"
                ) from None
            else:
                jitter *= 10.0


def _as_train(train) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    arr = np.asarray(train, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise RangeError(f"training data must be (x, y) pairs, got shape {arr.shape}")
    return arr[:, 0], arr[:, 1]


def log_marginal_likelihood(params: KernelParams, xs, ys) -> float:
    """GP log marginal likelihood of ``ys`` at inputs ``xs`` under ``params``."""
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if xs.size != ys.size:
        raise RangeError(f"xs and ys length mismatch: {xs.size} vs {ys.size}")
    n = xs.size
    K = gram_matrix(params, xs) + params.noise_variance * np.eye(n)
    L, _ = chol_with_jitter(K)
    alpha = scipy.linalg.cho_solve((L, True), ys)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return float(-0.5 * ys @ alpha - 0.5 * logdet - 0.5 * n * math.log(2.0 * math.pi))


def default_init_grid(fix_noise: float | None = None) -> list[KernelParams]:
    """Deterministic multi-start grid for the hyperparameter search."""
    variances = (0.25, 1.0)
    length_scales = (0.1, 0.3, 1.0)
    noises = (1e-4, 1e-2) if fix_noise is None else (float(fix_noise),)
    return [
        KernelParams(variance=v, length_scale=l, noise_variance=s)
        for v, l, s in itertools.product(variances, length_scales, noises)
    ]


def fit_hyperparameters(
    train,
    init_grid: list[KernelParams] | None = None,
    fix_noise: float | None = None,
    kind: str = "se",
    max_length_scale: float | None = None,
) -> KernelParams:
    """Maximize the log marginal likelihood over kernel hyperparameters.

    ``train`` is a sequence of ``(x, y)`` pairs (at least 3).  Each start in
    ``init_grid`` (default :func:`default_init_grid`) is refined with
    Nelder-Mead in log-parameter space; a start whose objective is not
    finite anywhere it looks simply scores ``-inf``.  The best final
    likelihood wins, ties going to the lowest start index.  With
    ``fix_noise`` set, the noise variance is pinned and only (variance,
    length_scale) are optimized.  ``max_length_scale`` restricts the search
    to length scales at or below the bound (restricted MLE); starts above
    the bound are moved just inside it.
    """
    xs, ys = _as_train(train)
    if xs.size < 3:
        raise InsufficientDataError(
            f"hyperparameter fitting needs at least 3 points, got {xs.size}"
        )
    if max_length_scale is not None and max_length_scale <= 0.0:
        raise RangeError(
            f"max_length_scale must be positive, got {max_length_scale}"
        )
    if init_grid is None:
        init_grid = default_init_grid(fix_noise)
    if max_length_scale is not None:
        init_grid = [
            replace(p, length_scale=min(p.length_scale, 0.9 * max_length_scale))
            for p in init_grid
        ]

    def unpack(z: npt.NDArray[np.float64]) -> KernelParams | None:
        vals = np.exp(z)
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0.0) or np.any(vals > 1e12):
            return None
        if fix_noise is None:
            v, l, s = vals
        else:
            v, l = vals
            s = fix_noise
        if max_length_scale is not None and l > max_length_scale:
            return None
        try:
            return KernelParams(variance=v, length_scale=l, noise_variance=s, kind=kind)
        except RangeError:
            return None

    def objective(z: npt.NDArray[np.float64]) -> float:
        p = unpack(z)
        if p is None:
            return np.inf
        try:
            lml = log_marginal_likelihood(p, xs, ys)
        except ConditioningError:
            return np.inf
        return -lml if math.isfinite(lml) else np.inf

    best: tuple[float, int, KernelParams] | None = None
    for idx, start in enumerate(init_grid):
        if fix_noise is None:
            z0 = np.log([start.variance, start.length_scale, max(start.noise_variance, 1e-8)])
        else:
            z0 = np.log([start.variance, start.length_scale])
        res = scipy.optimize.minimize(
            objective, z0, method="Nelder-Mead",
            options={"xatol": 1e-6, "fatol": 1e-9, "maxiter": 400 * z0.size},
        )
        p = unpack(res.x)
        if p is None or not math.isfinite(res.fun):
            continue
        score = -float(res.fun)
        # strict > keeps the lowest start index on ties
        if best is None or score > best[0]:
            best = (score, idx, p)
    if best is None:
        raise ConditioningError("hyperparameter search failed from every start")
    return replace(best[2], kind=kind)
