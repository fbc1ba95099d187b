"""Comparison optimizers: Riemannian gradient descent and Nelder-Mead.

Gradient descent serves objectives with analytic ambient gradients; the
gradient is projected to the tangent space and the step retracted onto the
manifold, with backtracking so accepted steps always decrease the value.
Nelder-Mead runs in flat embedding coordinates and retracts every candidate
vertex onto the manifold before the objective sees it, so a manifold-valued
objective never receives an off-manifold argument.

Both emit the same trace schema as the Bayesian loop.  Gradient descent
records accepted iterates; Nelder-Mead records every objective evaluation,
which makes evaluation-count comparisons direct.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .bo import Objective, RunTrace, TraceRecord, _oracle_distance
from .manifolds import (
    ManifoldError,
    ManifoldPoint,
    embed,
    exp_map,
    flatten_ambient,
    project_to_tangent,
    unembed,
    unflatten_ambient,
)

# Nelder-Mead move coefficients (reflection, expansion, contraction, shrink).
NM_REFLECT = 1.0
NM_EXPAND = 2.0
NM_CONTRACT = 0.5
NM_SHRINK = 0.5
NM_INIT_SPREAD = 0.1

GD_MAX_BACKTRACKS = 30


@dataclass(frozen=True)
class GradObjective:
    """Objective paired with the ambient gradient of its embedded form.

    ``grad(x)`` returns the Euclidean gradient at the embedding of x, in the
    ambient shape of the manifold; it must match finite differences of the
    composed objective.
    """

    base: Objective
    grad: Callable[[ManifoldPoint], np.ndarray]


def riemannian_gd(
    obj: GradObjective,
    x0: ManifoldPoint,
    step: float = 0.5,
    max_iters: int = 100,
    tol: float = 1e-8,
) -> tuple[ManifoldPoint, RunTrace]:
    """Projected gradient descent with backtracking.

    Each iteration projects the ambient gradient onto the tangent space and
    retracts a step against it; the step is halved until the value strictly
    decreases.  Stops when the projected gradient norm falls below ``tol``,
    no halving produces a decrease, or ``max_iters`` is reached.
    """
    trace = RunTrace()
    start = time.perf_counter()
    x = x0
    f = float(obj.base.fn(x))
    n_evals = 1
    trace.records.append(
        TraceRecord(
            iteration=0,
            point=x,
            value=f,
            best_value=f,
            best_point=x,
            err_to_oracle=_oracle_distance(obj.base, x),
            wall_ms=(time.perf_counter() - start) * 1e3,
            n_evals=n_evals,
        )
    )
    for t in range(1, max_iters + 1):
        tick = time.perf_counter()
        tangent = project_to_tangent(x, obj.grad(x))
        if tangent.norm < tol:
            break
        lam = step
        accepted = False
        for _ in range(GD_MAX_BACKTRACKS + 1):
            candidate = exp_map(x, -tangent, lam)
            f_cand = float(obj.base.fn(candidate))
            n_evals += 1
            if f_cand < f:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            break
        x, f = candidate, f_cand
        trace.records.append(
            TraceRecord(
                iteration=t,
                point=x,
                value=f,
                best_value=f,
                best_point=x,
                err_to_oracle=_oracle_distance(obj.base, x),
                wall_ms=(time.perf_counter() - tick) * 1e3,
                n_evals=n_evals,
            )
        )
    return x, trace


def nelder_mead(
    obj: Objective,
    x0: ManifoldPoint,
    max_evals: int = 500,
    tol: float = 1e-8,
) -> tuple[ManifoldPoint, RunTrace]:
    """Simplex search in flat embedding coordinates with retracted evaluation.

    The initial simplex is the embedding of x0 plus an ``NM_INIT_SPREAD``
    perturbation along each flat axis.  Candidates whose retraction is
    degenerate count as +inf.  Ties at the worst vertex accept the
    reflection, so a flat objective keeps reflecting until the evaluation
    budget is exhausted.  Stops when the simplex diameter drops below
    ``tol`` or the budget runs out.
    """
    kind = obj.kind
    dim = kind.ambient_dim
    trace = RunTrace()
    start = time.perf_counter()
    best_point: Optional[ManifoldPoint] = None
    best_value = np.inf
    n_evals = 0

    def evaluate(w: np.ndarray) -> float:
        nonlocal best_point, best_value, n_evals
        tick = time.perf_counter()
        try:
            point = unembed(kind, unflatten_ambient(kind, w))
            value = float(obj.fn(point))
        except ManifoldError:
            point, value = None, np.inf
        n_evals += 1
        if point is not None and value < best_value:
            best_point, best_value = point, value
        record_point = best_point if best_point is not None else x0
        trace.records.append(
            TraceRecord(
                iteration=n_evals,
                point=point if point is not None else x0,
                value=value,
                best_value=best_value,
                best_point=record_point,
                err_to_oracle=_oracle_distance(obj, record_point),
                wall_ms=(time.perf_counter() - tick) * 1e3,
                n_evals=n_evals,
            )
        )
        return value

    w0 = flatten_ambient(kind, embed(x0))
    simplex = [w0]
    for axis in range(dim):
        vertex = w0.copy()
        vertex[axis] += NM_INIT_SPREAD
        simplex.append(vertex)
    simplex = np.stack(simplex)
    values = np.array([evaluate(v) for v in simplex[: min(dim + 1, max_evals)]])
    if len(values) < dim + 1:
        # Budget did not even cover the initial simplex.
        assert best_point is not None
        return best_point, trace

    def diameter() -> float:
        diffs = simplex[:, None, :] - simplex[None, :, :]
        return float(np.sqrt(np.einsum("ijk,ijk->ij", diffs, diffs)).max())

    while n_evals < max_evals and diameter() >= tol:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        worst = simplex[-1]
        centroid = simplex[:-1].mean(axis=0)
        reflected = centroid + NM_REFLECT * (centroid - worst)
        f_reflected = evaluate(reflected)
        if f_reflected < values[0] and n_evals < max_evals:
            expanded = centroid + NM_EXPAND * (centroid - worst)
            f_expanded = evaluate(expanded)
            if f_expanded < f_reflected:
                simplex[-1], values[-1] = expanded, f_expanded
            else:
                simplex[-1], values[-1] = reflected, f_reflected
        elif f_reflected <= values[-1]:
            simplex[-1], values[-1] = reflected, f_reflected
        elif n_evals < max_evals:
            contracted = centroid + NM_CONTRACT * (worst - centroid)
            f_contracted = evaluate(contracted)
            if f_contracted <= min(f_reflected, values[-1]):
                simplex[-1], values[-1] = contracted, f_contracted
            else:
                for i in range(1, len(simplex)):
                    if n_evals >= max_evals:
                        break
                    simplex[i] = simplex[0] + NM_SHRINK * (simplex[i] - simplex[0])
                    values[i] = evaluate(simplex[i])
    assert best_point is not None
    return best_point, trace
