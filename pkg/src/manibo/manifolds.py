"""Supported manifolds and their Euclidean embeddings.

Three families are implemented, each with native point coordinates and an
embedding into a Euclidean space where kernels, ambient gradients, and line
steps are computed:

* ``Sphere(n)``: unit vectors in R^{n+1}; the embedding is the identity.
* ``Grassmann(p, n)``: p-dimensional subspaces of R^n, stored as an
  orthonormal n x p frame and embedded as the rank-p orthogonal projector
  ``X @ X.T`` inside Sym(n).
* ``Spd(p)``: symmetric positive definite p x p matrices, embedded by the
  matrix logarithm (log-Euclidean coordinates) inside Sym(p).

Ambient values for the matrix manifolds are full symmetric matrices under
the Frobenius inner product.  ``flatten_ambient`` / ``unflatten_ambient``
convert to length-D coordinate vectors with sqrt(2)-scaled off-diagonals,
so that the flat dot product equals the Frobenius inner product and one
Euclidean kernel definition serves every manifold.

All functions are pure; random generation is explicit through a seed or a
``numpy.random.Generator``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

# Structural invariants (unit norm, orthonormal frames, symmetry).
POINT_ATOL = 1e-10
# Tangency / projection identities.
TANGENT_ATOL = 1e-8
# Below this eigenvalue gap a dominant p-subspace is considered ill-defined.
EIGENGAP_TOL = 1e-10
# Below this norm a radial projection to the sphere is undefined.
DEGENERATE_NORM_TOL = 1e-12
# Tangent steps shorter than this are treated as zero by the sphere map.
ZERO_STEP_TOL = 1e-14


class ManifoldError(ValueError):
    """Base class for geometry errors."""


class InvalidInputError(ManifoldError):
    """Input outside an operation's domain: wrong shape, kind, or non-finite."""


class DomainError(ManifoldError):
    """Matrix input violates a definiteness requirement."""


class DegenerateProjectionError(ManifoldError):
    """Nearest-point projection is undefined (e.g. the zero vector to a sphere)."""


class AmbiguousSubspaceError(ManifoldError):
    """Tied eigenvalues make the dominant subspace ill-defined."""


@dataclass(frozen=True)
class Sphere:
    """Unit sphere S^n embedded in R^{n+1}."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError(f"Sphere requires n >= 1, got n={self.n}")

    @property
    def coords_shape(self) -> tuple[int, ...]:
        return (self.n + 1,)

    @property
    def ambient_shape(self) -> tuple[int, ...]:
        return (self.n + 1,)

    @property
    def ambient_dim(self) -> int:
        return self.n + 1

    @property
    def intrinsic_dim(self) -> int:
        return self.n


@dataclass(frozen=True)
class Grassmann:
    """Subspaces of dimension p in R^n, embedded as projectors in Sym(n)."""

    p: int
    n: int

    def __post_init__(self):
        if not 1 <= self.p < self.n:
            raise InvalidInputError(
                f"Grassmann requires 1 <= p < n, got p={self.p}, n={self.n}"
            )

    @property
    def coords_shape(self) -> tuple[int, ...]:
        return (self.n, self.p)

    @property
    def ambient_shape(self) -> tuple[int, ...]:
        return (self.n, self.n)

    @property
    def ambient_dim(self) -> int:
        return self.n * (self.n + 1) // 2

    @property
    def intrinsic_dim(self) -> int:
        return self.p * (self.n - self.p)


@dataclass(frozen=True)
class Spd:
    """Symmetric positive definite p x p matrices in log-Euclidean coordinates."""

    p: int

    def __post_init__(self):
        if self.p < 1:
            raise InvalidInputError(f"Spd requires p >= 1, got p={self.p}")

    @property
    def coords_shape(self) -> tuple[int, ...]:
        return (self.p, self.p)

    @property
    def ambient_shape(self) -> tuple[int, ...]:
        return (self.p, self.p)

    @property
    def ambient_dim(self) -> int:
        return self.p * (self.p + 1) // 2

    @property
    def intrinsic_dim(self) -> int:
        return self.p * (self.p + 1) // 2


ManifoldKind = Union[Sphere, Grassmann, Spd]


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _sym_expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential of a symmetric matrix via eigendecomposition."""
    w, v = np.linalg.eigh(_sym(a))
    if w[-1] > 700.0:
        raise InvalidInputError(
            f"log-coordinate eigenvalue {w[-1]:g} too large to exponentiate"
        )
    return _sym((v * np.exp(w)) @ v.T)


def _spd_logm(s: np.ndarray) -> np.ndarray:
    """Matrix logarithm of an SPD matrix; raises DomainError otherwise."""
    w, v = np.linalg.eigh(_sym(s))
    if w[0] <= 0.0:
        raise DomainError(f"matrix is not positive definite (min eigenvalue {w[0]:g})")
    return _sym((v * np.log(w)) @ v.T)


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    """A point on a manifold in its native coordinates.

    Construction validates the coordinate invariants of the kind: unit norm
    for the sphere, orthonormal columns for a Grassmann frame, symmetry and
    positive definiteness for Spd.  Coordinates are stored as a read-only
    float64 array.
    """

    kind: ManifoldKind
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float)
        if coords.shape != self.kind.coords_shape:
            raise InvalidInputError(
                f"coords shape {coords.shape} does not match {self.kind} "
                f"(expected {self.kind.coords_shape})"
            )
        if not np.all(np.isfinite(coords)):
            raise InvalidInputError("coords contain non-finite entries")
        kind = self.kind
        if isinstance(kind, Sphere):
            norm = np.linalg.norm(coords)
            if abs(norm - 1.0) > POINT_ATOL:
                raise InvalidInputError(f"sphere point has norm {norm!r}, expected 1")
        elif isinstance(kind, Grassmann):
            gram = coords.T @ coords
            if np.max(np.abs(gram - np.eye(kind.p))) > POINT_ATOL:
                raise InvalidInputError("Grassmann frame columns are not orthonormal")
        else:
            if np.max(np.abs(coords - coords.T)) > POINT_ATOL:
                raise InvalidInputError("Spd point is not symmetric")
            if np.linalg.eigvalsh(_sym(coords))[0] <= 0.0:
                raise DomainError("Spd point is not positive definite")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)


@dataclass(frozen=True, eq=False)
class TangentVector:
    """An ambient vector lying in the tangent space of the embedded manifold.

    Construction checks tangency at the base point: orthogonality to the
    sphere point, membership in the projector-manifold tangent space for
    Grassmann, symmetry for Spd.
    """

    base: ManifoldPoint
    direction: np.ndarray

    def __post_init__(self):
        direction = np.array(self.direction, dtype=float)
        kind = self.base.kind
        if direction.shape != kind.ambient_shape:
            raise InvalidInputError(
                f"direction shape {direction.shape} does not match ambient shape "
                f"{kind.ambient_shape}"
            )
        if not np.all(np.isfinite(direction)):
            raise InvalidInputError("direction contains non-finite entries")
        tol = TANGENT_ATOL * max(1.0, float(np.linalg.norm(direction)))
        if isinstance(kind, Sphere):
            if abs(np.dot(self.base.coords, direction)) > tol:
                raise InvalidInputError("direction is not tangent to the sphere")
        elif isinstance(kind, Grassmann):
            if np.max(np.abs(direction - direction.T)) > tol:
                raise InvalidInputError("direction is not symmetric")
            p_mat = self.base.coords @ self.base.coords.T
            pg = p_mat @ direction
            reproj = pg + pg.T - 2.0 * (p_mat @ direction @ p_mat)
            if np.max(np.abs(direction - reproj)) > tol:
                raise InvalidInputError(
                    "direction is not in the projector tangent space"
                )
        else:
            if np.max(np.abs(direction - direction.T)) > tol:
                raise InvalidInputError("direction is not symmetric")
        direction.setflags(write=False)
        object.__setattr__(self, "direction", direction)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.direction))

    def __neg__(self) -> "TangentVector":
        return TangentVector(self.base, -self.direction)

    def scaled(self, factor: float) -> "TangentVector":
        return TangentVector(self.base, factor * self.direction)


def _require_ambient(kind: ManifoldKind, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != kind.ambient_shape:
        raise InvalidInputError(
            f"ambient value has shape {v.shape}, expected {kind.ambient_shape}"
        )
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("ambient value contains non-finite entries")
    return v


def embed(x: ManifoldPoint) -> np.ndarray:
    """Map a point to its ambient Euclidean representation.

    Sphere: identity.  Grassmann: the orthogonal projector ``X @ X.T`` (the
    same matrix for every frame spanning the subspace).  Spd: the matrix
    logarithm.
    """
    kind = x.kind
    if isinstance(kind, Sphere):
        return np.array(x.coords)
    if isinstance(kind, Grassmann):
        return x.coords @ x.coords.T
    return _spd_logm(x.coords)


def _grassmann_top_frame(kind: Grassmann, sym_v: np.ndarray) -> np.ndarray:
    """Frame of the dominant p-eigenspace of a symmetric matrix."""
    w, vecs = np.linalg.eigh(sym_v)
    gap = w[kind.n - kind.p] - w[kind.n - kind.p - 1]
    if gap < EIGENGAP_TOL:
        raise AmbiguousSubspaceError(
            f"eigenvalue gap {gap:g} below {EIGENGAP_TOL:g}: dominant "
            f"{kind.p}-subspace is not unique"
        )
    return vecs[:, kind.n - kind.p:][:, ::-1]


def unembed(kind: ManifoldKind, v: np.ndarray) -> ManifoldPoint:
    """Map an ambient value (near the embedded manifold) back to a point.

    This is the retraction used throughout: the ambient value is projected
    to the nearest point of the image and expressed in native coordinates.
    """
    v = _require_ambient(kind, v)
    if isinstance(kind, Sphere):
        norm = np.linalg.norm(v)
        if norm < DEGENERATE_NORM_TOL:
            raise DegenerateProjectionError(
                f"cannot project near-zero vector (norm {norm:g}) to the sphere"
            )
        return ManifoldPoint(kind, v / norm)
    if isinstance(kind, Grassmann):
        frame = _grassmann_top_frame(kind, _sym(v))
        return ManifoldPoint(kind, frame)
    return ManifoldPoint(kind, _sym_expm(v))


def project_to_image(kind: ManifoldKind, v: np.ndarray) -> np.ndarray:
    """Nearest point of the embedded manifold to an ambient value.

    Idempotent.  For Spd the embedded image is all of Sym(p), so this is
    just symmetrization.
    """
    v = _require_ambient(kind, v)
    if isinstance(kind, Sphere):
        norm = np.linalg.norm(v)
        if norm < DEGENERATE_NORM_TOL:
            raise DegenerateProjectionError(
                f"cannot project near-zero vector (norm {norm:g}) to the sphere"
            )
        return v / norm
    if isinstance(kind, Grassmann):
        frame = _grassmann_top_frame(kind, _sym(v))
        return frame @ frame.T
    return _sym(v)


def tangent_project_embedded(
    kind: ManifoldKind, e: np.ndarray, g: np.ndarray
) -> np.ndarray:
    """Tangent projection expressed on the embedded representation e of a
    point; the workhorse behind project_to_tangent and the acquisition
    ascent, which iterates in embedded coordinates."""
    if isinstance(kind, Sphere):
        return g - np.dot(e, g) * e
    if isinstance(kind, Grassmann):
        sym_g = _sym(g)
        pg = e @ sym_g
        return pg + pg.T - 2.0 * (e @ sym_g @ e)
    return _sym(g)


def retract_embedded(
    kind: ManifoldKind, e: np.ndarray, v: np.ndarray, t: float
) -> np.ndarray:
    """Embedded representation of a step from the embedded point e along the
    tangent vector v: the geodesic for the sphere, the nearest-point
    retraction for the matrix manifolds (exact for Spd, whose image is
    linear).  Equals ``embed(exp_map(x, v, t))`` for x with ``embed(x) = e``.
    """
    if isinstance(kind, Sphere):
        speed = np.linalg.norm(v)
        if speed < ZERO_STEP_TOL:
            return np.array(e)
        theta = t * speed
        y = math.cos(theta) * e + math.sin(theta) * (v / speed)
        return y / np.linalg.norm(y)
    if isinstance(kind, Grassmann):
        frame = _grassmann_top_frame(kind, _sym(e + t * v))
        return frame @ frame.T
    return _sym(e + t * v)


def project_to_tangent(x: ManifoldPoint, g: np.ndarray) -> TangentVector:
    """Orthogonal projection of an ambient vector onto the tangent space at x.

    The projection is with respect to the Euclidean / Frobenius inner
    product of the ambient space.
    """
    kind = x.kind
    g = _require_ambient(kind, g)
    if isinstance(kind, Sphere):
        e = x.coords
    elif isinstance(kind, Grassmann):
        e = x.coords @ x.coords.T
    else:
        e = None  # Spd projection is plain symmetrization; no base needed.
    return TangentVector(x, tangent_project_embedded(kind, e, g))


def exp_map(x: ManifoldPoint, v: TangentVector, t: float = 1.0) -> ManifoldPoint:
    """Step from x along the tangent vector v, scaled by t.

    The sphere uses the exact closed-form geodesic.  Grassmann and Spd use
    the projection retraction: take the ambient step and project back to the
    image, which agrees with the geodesic to first order.  For Spd the image
    is linear, so the retraction is exact.
    """
    if v.base.kind != x.kind:
        raise InvalidInputError("tangent vector is based on a different manifold")
    kind = x.kind
    if isinstance(kind, Sphere):
        speed = v.norm
        if speed < ZERO_STEP_TOL:
            return x
        theta = t * speed
        y = math.cos(theta) * x.coords + math.sin(theta) * (v.direction / speed)
        return ManifoldPoint(kind, y / np.linalg.norm(y))
    return unembed(kind, embed(x) + t * v.direction)


def extrinsic_distance(x: ManifoldPoint, z: ManifoldPoint) -> float:
    """Euclidean (Frobenius) distance between the embedded representations."""
    if x.kind != z.kind:
        raise InvalidInputError(f"kind mismatch: {x.kind} vs {z.kind}")
    return float(np.linalg.norm(embed(x) - embed(z)))


def spd_intrinsic_distance(a: ManifoldPoint, b: ManifoldPoint) -> float:
    """Log-Euclidean distance ||log a - log b||_F between SPD matrices."""
    if not isinstance(a.kind, Spd) or not isinstance(b.kind, Spd):
        raise DomainError("log-Euclidean distance requires Spd points")
    if a.kind != b.kind:
        raise DomainError(f"size mismatch: {a.kind} vs {b.kind}")
    return float(np.linalg.norm(_spd_logm(a.coords) - _spd_logm(b.coords)))


def random_point(kind: ManifoldKind, rng: Union[int, np.random.Generator]) -> ManifoldPoint:
    """Draw a random point: uniform on the sphere and Grassmannian, and the
    exponential of a symmetric Gaussian matrix for Spd.  Deterministic given
    the seed."""
    gen = np.random.default_rng(rng)
    if isinstance(kind, Sphere):
        v = gen.standard_normal(kind.n + 1)
        while np.linalg.norm(v) < DEGENERATE_NORM_TOL:
            v = gen.standard_normal(kind.n + 1)
        return ManifoldPoint(kind, v / np.linalg.norm(v))
    if isinstance(kind, Grassmann):
        a = gen.standard_normal((kind.n, kind.p))
        q, r = np.linalg.qr(a)
        signs = np.sign(np.diag(r))
        signs[signs == 0.0] = 1.0
        return ManifoldPoint(kind, q * signs)
    a = gen.standard_normal((kind.p, kind.p))
    return ManifoldPoint(kind, _sym_expm(_sym(a)))


@functools.lru_cache(maxsize=None)
def _sym_flat_factors(k: int) -> tuple[tuple[np.ndarray, np.ndarray], np.ndarray]:
    iu = np.triu_indices(k)
    factors = np.where(iu[0] == iu[1], 1.0, math.sqrt(2.0))
    factors.setflags(write=False)
    return iu, factors


def flatten_ambient(kind: ManifoldKind, v: np.ndarray) -> np.ndarray:
    """Flatten an ambient value to a length-D vector.

    Symmetric matrices use the upper triangle with off-diagonal entries
    scaled by sqrt(2), making the flat dot product equal to the Frobenius
    inner product.  Sphere values pass through unchanged.
    """
    v = _require_ambient(kind, v)
    if isinstance(kind, Sphere):
        return np.array(v)
    sym_v = _sym(v)
    iu, factors = _sym_flat_factors(v.shape[0])
    return sym_v[iu] * factors


def unflatten_ambient(kind: ManifoldKind, w: np.ndarray) -> np.ndarray:
    """Inverse of flatten_ambient."""
    w = np.asarray(w, dtype=float)
    if w.shape != (kind.ambient_dim,):
        raise InvalidInputError(
            f"flat value has shape {w.shape}, expected ({kind.ambient_dim},)"
        )
    if isinstance(kind, Sphere):
        return np.array(w)
    k = kind.ambient_shape[0]
    iu, factors = _sym_flat_factors(k)
    m = np.zeros((k, k))
    m[iu] = w / factors
    m = m + m.T
    m[np.diag_indices(k)] *= 0.5
    return m
