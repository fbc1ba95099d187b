"""Gaussian process surrogate over embedded manifold coordinates.

The covariance between two manifold points is a squared-exponential kernel
evaluated on their ambient embeddings, which restricts to a valid positive
semi-definite kernel on the manifold.  The posterior uses the standard
zero-mean equations backed by a Cholesky factor of the noise-regularized
Gram matrix, with an escalating jitter fallback for the near-singular
matrices that duplicate proposals produce.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .manifolds import (
    InvalidInputError,
    ManifoldKind,
    ManifoldPoint,
    embed,
    flatten_ambient,
)

logger = logging.getLogger(__name__)

# Jitter escalation: start small, multiply by 10 until the Cholesky succeeds.
JITTER_INITIAL = 1e-10
JITTER_MAX = 1e-4


class IllConditionedModelError(RuntimeError):
    """Gram matrix could not be factorized even at maximum jitter."""


class FittingFailedError(RuntimeError):
    """No hyperparameter candidate produced a factorizable model."""


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential kernel hyperparameters.

    lengthscale: distance scale in the embedding space.
    amplitude:   prior variance of the objective (kernel value at distance 0).
    noise:       observation noise variance added to the Gram diagonal.
    """

    lengthscale: float
    amplitude: float
    noise: float

    def __post_init__(self):
        if not (self.lengthscale > 0.0 and math.isfinite(self.lengthscale)):
            raise InvalidInputError(f"lengthscale must be positive, got {self.lengthscale}")
        if not (self.amplitude > 0.0 and math.isfinite(self.amplitude)):
            raise InvalidInputError(f"amplitude must be positive, got {self.amplitude}")
        if not (self.noise >= 0.0 and math.isfinite(self.noise)):
            raise InvalidInputError(f"noise must be nonnegative, got {self.noise}")


@dataclass(frozen=True)
class KernelBounds:
    """Box bounds for hyperparameter fitting, one (low, high) pair per field."""

    lengthscale: tuple[float, float]
    amplitude: tuple[float, float]
    noise: tuple[float, float]

    def __post_init__(self):
        for name, (lo, hi) in (
            ("lengthscale", self.lengthscale),
            ("amplitude", self.amplitude),
            ("noise", self.noise),
        ):
            if not (0.0 < lo <= hi):
                raise InvalidInputError(f"invalid {name} bounds ({lo}, {hi})")

    def clip(self, params: KernelParams) -> KernelParams:
        return KernelParams(
            lengthscale=min(max(params.lengthscale, self.lengthscale[0]), self.lengthscale[1]),
            amplitude=min(max(params.amplitude, self.amplitude[0]), self.amplitude[1]),
            noise=min(max(params.noise, self.noise[0]), self.noise[1]),
        )


@dataclass(frozen=True, eq=False)
class GpDataset:
    """Evaluated points with cached flat embeddings.

    Immutable; ``append`` returns a new dataset.  All points must share one
    manifold kind and all values must be finite.
    """

    points: tuple[ManifoldPoint, ...]
    embedded: np.ndarray  # (n, D) flat embedding coordinates
    values: np.ndarray  # (n,)

    @classmethod
    def from_points(
        cls, points: Sequence[ManifoldPoint], values: Iterable[float]
    ) -> "GpDataset":
        points = tuple(points)
        values_arr = np.asarray(list(values), dtype=float)
        if len(points) == 0:
            raise InvalidInputError("dataset requires at least one point")
        if values_arr.shape != (len(points),):
            raise InvalidInputError(
                f"{len(points)} points but {values_arr.shape} values"
            )
        if not np.all(np.isfinite(values_arr)):
            raise InvalidInputError("dataset values contain non-finite entries")
        kind = points[0].kind
        for pt in points[1:]:
            if pt.kind != kind:
                raise InvalidInputError(f"mixed manifold kinds: {kind} vs {pt.kind}")
        emb = np.stack([flatten_ambient(kind, embed(pt)) for pt in points])
        return cls(points=points, embedded=emb, values=values_arr)

    def append(self, point: ManifoldPoint, value: float) -> "GpDataset":
        if point.kind != self.kind:
            raise InvalidInputError(f"kind mismatch: {self.kind} vs {point.kind}")
        if not math.isfinite(value):
            raise InvalidInputError(f"non-finite value {value!r}")
        row = flatten_ambient(point.kind, embed(point))[None, :]
        return GpDataset(
            points=self.points + (point,),
            embedded=np.concatenate([self.embedded, row]),
            values=np.append(self.values, value),
        )

    @property
    def kind(self) -> ManifoldKind:
        return self.points[0].kind

    def __len__(self) -> int:
        return len(self.points)


def kernel_eval(params: KernelParams, x: ManifoldPoint, z: ManifoldPoint) -> float:
    """Covariance between two points: amplitude * exp(-d(x,z)^2 / (2 l^2))
    with d the embedded Euclidean distance."""
    if x.kind != z.kind:
        raise InvalidInputError(f"kind mismatch: {x.kind} vs {z.kind}")
    sq = float(np.sum((embed(x) - embed(z)) ** 2))
    return params.amplitude * math.exp(-sq / (2.0 * params.lengthscale**2))


def _cross_kernel(params: KernelParams, embedded: np.ndarray, w: np.ndarray) -> np.ndarray:
    diff = embedded - w
    sq = np.einsum("ij,ij->i", diff, diff)
    return params.amplitude * np.exp(-sq / (2.0 * params.lengthscale**2))


def gram_matrix(params: KernelParams, data: GpDataset) -> np.ndarray:
    """Kernel matrix of the dataset plus noise on the diagonal."""
    e = data.embedded
    sq_norms = np.einsum("ij,ij->i", e, e)
    sq = sq_norms[:, None] + sq_norms[None, :] - 2.0 * (e @ e.T)
    np.clip(sq, 0.0, None, out=sq)
    k = params.amplitude * np.exp(-sq / (2.0 * params.lengthscale**2))
    k = 0.5 * (k + k.T)
    return k + params.noise * np.eye(len(data))


def _cholesky_with_jitter(gram: np.ndarray, amplitude: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, escalating diagonal jitter on failure."""
    try:
        return np.linalg.cholesky(gram), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_INITIAL * amplitude
    eye = np.eye(gram.shape[0])
    while jitter <= JITTER_MAX * amplitude:
        try:
            chol = np.linalg.cholesky(gram + jitter * eye)
            logger.debug("Gram factorization needed jitter %.3g", jitter)
            return chol, jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise IllConditionedModelError(
        f"Cholesky failed up to jitter {JITTER_MAX * amplitude:g}"
    )


@dataclass(frozen=True, eq=False)
class GpModel:
    """Immutable fitted surrogate: hyperparameters, data, and solver state.

    ``gram_inv`` caches the inverse of the regularized Gram matrix (built
    from the Cholesky factor) so that the acquisition's inner loop costs one
    matrix-vector product per query instead of triangular solves.
    """

    params: KernelParams
    data: GpDataset
    chol: np.ndarray  # lower triangular
    alpha: np.ndarray  # (K + noise I)^{-1} y
    gram_inv: np.ndarray
    jitter: float

    @classmethod
    def build(cls, params: KernelParams, data: GpDataset) -> "GpModel":
        gram = gram_matrix(params, data)
        chol, jitter = _cholesky_with_jitter(gram, params.amplitude)
        alpha = solve_triangular(
            chol.T, solve_triangular(chol, data.values, lower=True), lower=False
        )
        chol_inv = solve_triangular(
            chol, np.eye(chol.shape[0]), lower=True, check_finite=False
        )
        gram_inv = chol_inv.T @ chol_inv
        return cls(
            params=params,
            data=data,
            chol=chol,
            alpha=alpha,
            gram_inv=gram_inv,
            jitter=jitter,
        )


def _posterior_flat(model: GpModel, w: np.ndarray) -> tuple[float, float]:
    """Posterior mean and variance at flat embedding coordinates w.

    Defined for any ambient location, on or off the embedded manifold; the
    finite-difference checks rely on off-manifold evaluations.
    """
    k = _cross_kernel(model.params, model.data.embedded, w)
    mean = float(k @ model.alpha)
    var = model.params.amplitude - float(k @ (model.gram_inv @ k))
    if var < 0.0:
        # Round-off near (near-)duplicate data; routine once the search
        # concentrates, so logged quietly rather than warned per query.
        logger.debug("posterior variance %.3g clamped to 0", var)
        var = 0.0
    return mean, var


def posterior(model: GpModel, x: ManifoldPoint) -> tuple[float, float]:
    """Posterior mean and variance of the objective at a manifold point."""
    if x.kind != model.data.kind:
        raise InvalidInputError(f"kind mismatch: {model.data.kind} vs {x.kind}")
    return _posterior_flat(model, flatten_ambient(x.kind, embed(x)))


def log_marginal_likelihood(model: GpModel) -> float:
    """Zero-mean Gaussian log evidence of the model's data."""
    n = len(model.data)
    data_fit = -0.5 * float(model.data.values @ model.alpha)
    log_det = float(np.sum(np.log(np.diag(model.chol))))
    return data_fit - log_det - 0.5 * n * math.log(2.0 * math.pi)


def median_heuristic_params(data: GpDataset) -> KernelParams:
    """Scale-free defaults: lengthscale from the median pairwise embedded
    distance, amplitude from the value variance (floored), small noise."""
    e = data.embedded
    n = len(data)
    if n >= 2:
        diffs = e[:, None, :] - e[None, :, :]
        dists = np.sqrt(np.einsum("ijk,ijk->ij", diffs, diffs))
        med = float(np.median(dists[np.triu_indices(n, k=1)]))
    else:
        med = 0.0
    lengthscale = med if med > 1e-12 else 1.0
    amplitude = max(float(np.var(data.values)), 1e-6)
    return KernelParams(lengthscale=lengthscale, amplitude=amplitude, noise=1e-6 * amplitude)


def default_bounds(data: GpDataset) -> KernelBounds:
    """Box around the median-heuristic defaults.

    The noise ceiling is kept low: these surrogates serve deterministic
    objectives, where a large fitted noise only blurs the interpolation the
    acquisition needs.  The lengthscale ceiling stays within an order of
    magnitude of the data spread so acquisition steps (which scale with the
    lengthscale) cannot run far outside the sampled region.
    """
    base = median_heuristic_params(data)
    return KernelBounds(
        lengthscale=(1e-2 * base.lengthscale, 1e1 * base.lengthscale),
        amplitude=(1e-2 * base.amplitude, 1e2 * base.amplitude),
        noise=(1e-10 * base.amplitude, 1e-4 * base.amplitude),
    )


def _lml_or_none(params: KernelParams, data: GpDataset) -> float | None:
    try:
        return log_marginal_likelihood(GpModel.build(params, data))
    except IllConditionedModelError:
        return None


def _coordinate_search(
    theta0: np.ndarray,
    log_lo: np.ndarray,
    log_hi: np.ndarray,
    data: GpDataset,
    initial_step: float = 0.5,
    min_step: float = 1e-3,
    max_sweeps: int = 60,
) -> tuple[np.ndarray, float | None]:
    """Maximize the log evidence over log-parameters by coordinate moves with
    shrinking step; returns (theta, value) with value None if nothing evaluated."""

    def objective(theta: np.ndarray) -> float | None:
        params = KernelParams(*np.exp(theta))
        return _lml_or_none(params, data)

    theta = np.clip(theta0, log_lo, log_hi)
    best = objective(theta)
    step = initial_step
    for _ in range(max_sweeps):
        if step < min_step:
            break
        improved = False
        for axis in range(theta.size):
            for sign in (1.0, -1.0):
                cand = theta.copy()
                cand[axis] = np.clip(cand[axis] + sign * step, log_lo[axis], log_hi[axis])
                if cand[axis] == theta[axis]:
                    continue
                val = objective(cand)
                if val is not None and (best is None or val > best):
                    theta, best = cand, val
                    improved = True
        if not improved:
            step *= 0.5
    return theta, best


def fit_hyperparams(
    data: GpDataset,
    init: KernelParams,
    bounds: KernelBounds,
    n_restarts: int = 5,
    seed: int = 0,
) -> KernelParams:
    """Maximize the log marginal likelihood by multistart coordinate search.

    Deterministic given the seed.  Raises FittingFailedError when every
    candidate in every restart fails to factorize.
    """
    if len(data) < 2:
        raise InvalidInputError("hyperparameter fitting requires at least 2 points")
    log_lo = np.log([bounds.lengthscale[0], bounds.amplitude[0], bounds.noise[0]])
    log_hi = np.log([bounds.lengthscale[1], bounds.amplitude[1], bounds.noise[1]])
    init = bounds.clip(init)
    starts = [np.log([init.lengthscale, init.amplitude, init.noise])]
    rng = np.random.default_rng(seed)
    for _ in range(max(0, n_restarts - 1)):
        starts.append(rng.uniform(log_lo, log_hi))
    best_theta, best_val = None, None
    for theta0 in starts:
        theta, val = _coordinate_search(theta0, log_lo, log_hi, data)
        if val is not None and (best_val is None or val > best_val):
            best_theta, best_val = theta, val
    if best_theta is None:
        raise FittingFailedError("all hyperparameter candidates failed to factorize")
    # The log/exp roundtrip can land an ulp outside the box; clip it back.
    return bounds.clip(KernelParams(*np.exp(best_theta)))
