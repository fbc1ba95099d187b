"""Probability-of-improvement acquisition and its ascent over the manifold.

The acquisition value at x is the posterior probability that the objective
beats the incumbent: Phi((f_best - mean) / sigma).  It is maximized by
projected gradient ascent in the embedding space: the analytic ambient
gradient is projected onto the tangent space of the embedded manifold and
a step is taken with the manifold's exponential map / retraction, so every
iterate stays on the manifold.  Multistart makes the search global.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .egp import GpModel, _cross_kernel, _posterior_flat
from .manifolds import (
    InvalidInputError,
    ManifoldError,
    ManifoldPoint,
    embed,
    flatten_ambient,
    random_point,
    retract_embedded,
    tangent_project_embedded,
    unembed,
    unflatten_ambient,
)

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / SQRT2))


def normal_pdf(z: float) -> float:
    return INV_SQRT_2PI * math.exp(-0.5 * z * z)


@dataclass(frozen=True)
class AcquisitionState:
    """Frozen view of one acquisition round: surrogate, incumbent value, and
    the floor applied to the posterior deviation before dividing."""

    model: GpModel
    best_value: float
    sigma_floor: float

    def __post_init__(self):
        if not math.isfinite(self.best_value):
            raise InvalidInputError(f"best_value must be finite, got {self.best_value}")
        if not self.sigma_floor > 0.0:
            raise InvalidInputError(f"sigma_floor must be positive, got {self.sigma_floor}")

    @classmethod
    def for_model(cls, model: GpModel, best_value: float) -> "AcquisitionState":
        return cls(
            model=model,
            best_value=best_value,
            sigma_floor=1e-12 * math.sqrt(model.params.amplitude),
        )


@dataclass(frozen=True)
class AscentConfig:
    """Projected gradient ascent settings.

    ``step=None`` resolves to 0.1 x the model lengthscale at call time, so
    the ascent scale tracks the fitted kernel.
    """

    step: Optional[float] = None
    max_steps: int = 200
    grad_tol: float = 1e-8
    n_starts: int = 10
    seed: int = 0
    max_backtracks: int = 20

    def __post_init__(self):
        if self.step is not None and not self.step > 0.0:
            raise InvalidInputError(f"step must be positive, got {self.step}")
        if self.max_steps < 1 or self.n_starts < 1 or self.max_backtracks < 0:
            raise InvalidInputError("max_steps and n_starts must be positive")
        if not self.grad_tol > 0.0:
            raise InvalidInputError(f"grad_tol must be positive, got {self.grad_tol}")


def _pi_flat(state: AcquisitionState, w: np.ndarray) -> float:
    mean, var = _posterior_flat(state.model, w)
    sigma = max(math.sqrt(var), state.sigma_floor)
    return normal_cdf((state.best_value - mean) / sigma)


def pi_value(state: AcquisitionState, x: ManifoldPoint) -> float:
    """Probability that the objective at x improves on the incumbent."""
    return _pi_flat(state, flatten_ambient(x.kind, embed(x)))


def _pi_gradient_flat(state: AcquisitionState, w: np.ndarray) -> np.ndarray:
    """Analytic gradient of the acquisition in flat ambient coordinates."""
    model = state.model
    params = model.params
    diff = model.data.embedded - w  # (n, D)
    k = _cross_kernel(params, model.data.embedded, w)
    dk = (k[:, None] * diff) / params.lengthscale**2  # rows: grad of k_i wrt w
    mean = float(k @ model.alpha)
    dmean = dk.T @ model.alpha
    beta = model.gram_inv @ k
    var = params.amplitude - float(k @ beta)
    dvar = -2.0 * (dk.T @ beta)
    sigma_raw = math.sqrt(max(var, 0.0))
    if sigma_raw > state.sigma_floor:
        sigma = sigma_raw
        dsigma = dvar / (2.0 * sigma)
    else:
        # The floor is active: sigma is locally constant.
        sigma = state.sigma_floor
        dsigma = np.zeros_like(dvar)
    r = (state.best_value - mean) / sigma
    density = normal_pdf(r)
    if density == 0.0:
        return np.zeros_like(w)
    dr = -dmean / sigma - (r / sigma) * dsigma
    return density * dr


def pi_gradient_ambient(state: AcquisitionState, x: ManifoldPoint) -> np.ndarray:
    """Ambient gradient of the acquisition at the embedding of x.

    Matches central finite differences of the acquisition in flat ambient
    coordinates; project onto the tangent space before stepping.
    """
    w = flatten_ambient(x.kind, embed(x))
    return unflatten_ambient(x.kind, _pi_gradient_flat(state, w))


def _resolve_step(state: AcquisitionState, config: AscentConfig) -> float:
    if config.step is not None:
        return config.step
    return 0.1 * state.model.params.lengthscale


def ascend(
    state: AcquisitionState, config: AscentConfig, x0: ManifoldPoint
) -> tuple[ManifoldPoint, float]:
    """Projected gradient ascent of the acquisition from x0.

    The loop iterates on embedded representations (every iterate stays
    exactly on the embedded image via the geodesic / retraction), which
    avoids rebuilding native coordinates at each trial step.  Steps that
    would decrease the acquisition are backtracked by halving the step size;
    the ascent stops when the projected gradient is below ``grad_tol``, no
    halving helps, or ``max_steps`` is reached.  Returns the best iterate
    seen, so the result never scores below the start.
    """
    kind = state.model.data.kind
    if x0.kind != kind:
        raise InvalidInputError(f"start kind {x0.kind} does not match model")
    base_step = _resolve_step(state, config)
    e = embed(x0)
    w = flatten_ambient(kind, e)
    acq = _pi_flat(state, w)
    best_e, best_acq = e, acq
    for _ in range(config.max_steps):
        grad = unflatten_ambient(kind, _pi_gradient_flat(state, w))
        tangent = tangent_project_embedded(kind, e, grad)
        if np.linalg.norm(tangent) < config.grad_tol:
            break
        step = base_step
        accepted = False
        for _ in range(config.max_backtracks + 1):
            e_cand = retract_embedded(kind, e, tangent, step)
            w_cand = flatten_ambient(kind, e_cand)
            acq_cand = _pi_flat(state, w_cand)
            if acq_cand >= acq:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        e, w, acq = e_cand, w_cand, acq_cand
        if acq > best_acq:
            best_e, best_acq = e, acq
    return unembed(kind, best_e), best_acq


def maximize(state: AcquisitionState, config: AscentConfig) -> ManifoldPoint:
    """Best acquisition point across multistart ascents.

    Starts from the best observed point plus ``n_starts - 1`` random points;
    deterministic given the config seed.  Ties keep the earliest start.
    Start-level manifold failures are skipped unless every start fails.
    """
    data = state.model.data
    incumbent = data.points[int(np.argmin(data.values))]
    rng = np.random.default_rng(config.seed)
    starts = [incumbent] + [
        random_point(data.kind, rng) for _ in range(config.n_starts - 1)
    ]
    best: tuple[ManifoldPoint, float] | None = None
    last_error: ManifoldError | None = None
    for start in starts:
        try:
            candidate, acq = ascend(state, config, start)
        except ManifoldError as exc:
            last_error = exc
            continue
        if best is None or acq > best[1]:
            best = (candidate, acq)
    if best is None:
        assert last_error is not None
        raise last_error
    return best[0]
