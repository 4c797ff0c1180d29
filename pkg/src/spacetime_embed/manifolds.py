"""Manifolds used as embedding spaces.

Points are stored in the ambient coordinate chart of their manifold, one row
per point.  Every function here is vectorised over leading axes, so ``p`` and
``q`` can be single points of shape ``(D,)`` or stacks of shape ``(..., D)``.

Coordinate layout per kind:

* Euclidean, cylindrical Euclidean: ``(x_0, x_1, ..., x_{N-1})``, ``x_0`` plays
  the role of time.
* Minkowski, cylindrical Minkowski, hyperboloid: ``(x_0, x_1, ..., x_N)``.
* Anti-de Sitter: ``(x_{-1}, x_0, x_1, ..., x_N)``; the two leading entries are
  the time-like ambient coordinates.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "Kind",
    "ManifoldSpec",
    "IntervalImages",
    "ProjectionError",
    "lorentz_inner",
    "squared_distance",
    "time_delta",
    "interval_images",
    "interval_differentials",
    "exp_map",
    "descent_tangent",
    "tangent_project",
    "project_point",
    "random_point",
    "validate_point",
    "ads_radius",
    "ads_polar_angle",
    "ads_circle_time",
]

# Half-width of the band around <p,q> = -1 where the squared AdS/hyperboloid
# distance switches to its series expansion, and the clamp distance from the
# timelike limit <p,q> = 1 inside derivatives.
EPS_LIGHTCONE = 1e-6

# Quadric drift beyond this is treated as optimiser divergence, not round-off.
MAX_REPAIR_RESIDUAL = 0.1


class ProjectionError(ValueError):
    """A point is too far from its constraint surface to be repaired."""


class Kind(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    CYLINDRICAL_EUCLIDEAN = "cylindrical_euclidean"
    HYPERBOLOID = "hyperboloid"
    MINKOWSKI = "minkowski"
    CYLINDRICAL_MINKOWSKI = "cylindrical_minkowski"
    ANTI_DE_SITTER = "ads"

    @property
    def code(self) -> int:
        """Integer tag used by the compiled kernels."""
        return _KIND_CODES[self]

    @classmethod
    def parse(cls, name: str) -> "Kind":
        key = name.strip().lower().replace("-", "_").replace(" ", "_")
        key = _KIND_ALIASES.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown manifold kind {name!r}") from None


_KIND_CODES = {
    Kind.EUCLIDEAN: 0,
    Kind.CYLINDRICAL_EUCLIDEAN: 1,
    Kind.HYPERBOLOID: 2,
    Kind.MINKOWSKI: 3,
    Kind.CYLINDRICAL_MINKOWSKI: 4,
    Kind.ANTI_DE_SITTER: 5,
}

_KIND_ALIASES = {
    "anti_de_sitter": "ads",
    "antidesitter": "ads",
    "cyl_minkowski": "cylindrical_minkowski",
    "cyl_euclidean": "cylindrical_euclidean",
    "lorentz": "hyperboloid",
}

_CYLINDRICAL = (Kind.CYLINDRICAL_EUCLIDEAN, Kind.CYLINDRICAL_MINKOWSKI)
_FLAT = (Kind.EUCLIDEAN, Kind.CYLINDRICAL_EUCLIDEAN, Kind.MINKOWSKI, Kind.CYLINDRICAL_MINKOWSKI)


@dataclass(frozen=True)
class ManifoldSpec:
    """Which geometry, its spatial dimension N and (for cylinders) circumference C."""

    kind: Kind
    spatial_dim: int
    circumference: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind) if isinstance(self.kind, str) else self.kind)
        if int(self.spatial_dim) != self.spatial_dim or self.spatial_dim < 1:
            raise ValueError(f"spatial_dim must be a positive integer, got {self.spatial_dim}")
        object.__setattr__(self, "spatial_dim", int(self.spatial_dim))
        if self.is_cylindrical:
            if self.circumference is None or not self.circumference > 0:
                raise ValueError(f"{self.kind.value} needs a positive circumference")
            object.__setattr__(self, "circumference", float(self.circumference))
        elif self.circumference is not None:
            raise ValueError(f"{self.kind.value} does not take a circumference")

    @classmethod
    def from_embedding_dim(cls, kind, dim: int, circumference: float | None = None) -> "ManifoldSpec":
        """Build a spec whose points carry exactly ``dim`` stored coordinates."""
        kind = Kind.parse(kind) if isinstance(kind, str) else kind
        extra = {Kind.ANTI_DE_SITTER: 2, Kind.HYPERBOLOID: 1, Kind.MINKOWSKI: 1,
                 Kind.CYLINDRICAL_MINKOWSKI: 1}.get(kind, 0)
        if dim - extra < 1:
            raise ValueError(f"{kind.value} needs at least {extra + 1} coordinates, got {dim}")
        return cls(kind, dim - extra, circumference)

    @property
    def ambient_dim(self) -> int:
        if self.kind in (Kind.EUCLIDEAN, Kind.CYLINDRICAL_EUCLIDEAN):
            return self.spatial_dim
        if self.kind is Kind.ANTI_DE_SITTER:
            return self.spatial_dim + 2
        return self.spatial_dim + 1

    @property
    def is_cylindrical(self) -> bool:
        return self.kind in _CYLINDRICAL

    @property
    def has_circle_time(self) -> bool:
        """True when the time direction is compact (cylinders and AdS)."""
        return self.is_cylindrical or self.kind is Kind.ANTI_DE_SITTER

    @property
    def is_flat(self) -> bool:
        return self.kind in _FLAT

    @property
    def signature(self) -> np.ndarray:
        """Diagonal of the ambient metric."""
        sig = np.ones(self.ambient_dim)
        if self.kind in (Kind.MINKOWSKI, Kind.CYLINDRICAL_MINKOWSKI, Kind.HYPERBOLOID):
            sig[0] = -1.0
        elif self.kind is Kind.ANTI_DE_SITTER:
            sig[:2] = -1.0
        return sig

    @property
    def code(self) -> int:
        return self.kind.code

    @property
    def circ(self) -> float:
        """Circumference, or 0.0 for non-cylindrical kinds (kernel convention)."""
        return self.circumference if self.circumference is not None else 0.0


class IntervalImages(NamedTuple):
    """Squared intervals and time differences of every winding image of q.

    ``s_sq`` and ``dt`` share the trailing axis of length ``2m + 1`` (or 1 for
    manifolds without a compact time direction), ordered by winding index
    ``n = -m, ..., m``.
    """

    s_sq: np.ndarray
    dt: np.ndarray
    winding: np.ndarray


def _check_pair(spec: ManifoldSpec, p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    D = spec.ambient_dim
    if p.shape[-1:] != (D,) or q.shape[-1:] != (D,):
        raise ValueError(
            f"{spec.kind.value} with N={spec.spatial_dim} expects {D} coordinates, "
            f"got shapes {p.shape} and {q.shape}")
    return p, q


def lorentz_inner(spec: ManifoldSpec, x, y) -> np.ndarray:
    """Ambient bilinear form ``sum_i sig_i x_i y_i`` of the spec's signature."""
    return np.sum(spec.signature * np.asarray(x, float) * np.asarray(y, float), axis=-1)


def _principal(x, period):
    """Representative of ``x`` modulo ``period`` in ``[-period/2, period/2)``."""
    return np.mod(x + 0.5 * period, period) - 0.5 * period


def _principal_angle(x):
    """Representative of an angle in ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - x, 2.0 * np.pi)


def _sq_from_inner(z, timelike_branch: bool):
    """Squared geodesic distance as a function of ``z = <p, q>`` and ``d/dz``.

    Near ``z = -1`` both the cos^-1 and cosh^-1 branches share the expansion
    ``-2u - u^2/3`` in ``u = 1 + z``; it is used inside the lightcone band so
    the value and its derivative stay accurate and continuous.
    """
    z = np.asarray(z, dtype=float)
    u = 1.0 + z
    s = np.empty_like(z)
    d = np.empty_like(z)

    near = np.abs(u) < EPS_LIGHTCONE
    s[near] = -2.0 * u[near] - u[near] ** 2 / 3.0
    d[near] = -2.0 - 2.0 * u[near] / 3.0

    space = (z < -1.0) & ~near
    a = np.arccosh(-z[space])
    s[space] = a * a
    d[space] = -2.0 * a / np.sqrt(z[space] ** 2 - 1.0)

    if timelike_branch:
        time = (z > -1.0) & (z <= 1.0) & ~near
        c = np.arccos(-z[time])
        s[time] = -c * c
        zc = np.minimum(z[time], 1.0 - EPS_LIGHTCONE)
        d[time] = -2.0 * np.arccos(-zc) / np.sqrt(1.0 - zc * zc)
        beyond = z > 1.0
        s[beyond] = -np.pi ** 2
        d[beyond] = 0.0
    else:
        # hyperboloid: z > -1 only through round-off; the series covers it
        rest = (z > -1.0) & ~near
        s[rest] = -2.0 * u[rest] - u[rest] ** 2 / 3.0
        d[rest] = -2.0 - 2.0 * u[rest] / 3.0
    return s, d


def ads_radius(x) -> np.ndarray:
    """``r(x) = sqrt(1 + sum x_i^2)`` over the spatial coordinates of AdS points."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(1.0 + np.sum(x[..., 2:] ** 2, axis=-1))


def ads_polar_angle(x) -> np.ndarray:
    """Polar angle of the ``(x_{-1}, x_0)`` pair, in ``[-pi/2, 3pi/2)``.

    Follows the two-branch arcsine rule on the sign of ``x_0``.
    """
    x = np.asarray(x, dtype=float)
    r = ads_radius(x)
    a = np.arcsin(np.clip(x[..., 0] / r, -1.0, 1.0))
    return np.where(x[..., 1] >= 0.0, a, np.pi - a)


def ads_circle_time(x) -> np.ndarray:
    """Arc-length time ``t = r * theta`` of AdS points."""
    return ads_radius(x) * ads_polar_angle(x)


def _pair_base(spec: ManifoldSpec, p, q, anchored: bool):
    """Interval building blocks of a pair and their ambient gradients.

    Returns ``(A, dt, L, rule, grads)`` where the squared interval of winding
    image n is ``A + rule * (dt + n L)^2`` and its time difference is
    ``dt + n L``.  ``grads`` holds ``dA/dp, dA/dq, ddt/dp, ddt/dq, dL/dq``.

    With ``anchored`` the circle-time difference is taken in ``[0, period)``
    instead of the principal range; winding windows are centred there.
    """
    p, q = _check_pair(spec, p, q)
    p, q = np.broadcast_arrays(p, q)
    kind = spec.kind
    shape = p.shape[:-1]
    gA_p = np.zeros(p.shape)
    gA_q = np.zeros(p.shape)
    gT_p = np.zeros(p.shape)
    gT_q = np.zeros(p.shape)
    gL_q = np.zeros(p.shape)
    L = np.zeros(shape)
    rule = 0.0

    if kind in _FLAT:
        delta = q - p
        if kind in (Kind.EUCLIDEAN, Kind.MINKOWSKI):
            sig = spec.signature
            A = np.sum(sig * delta * delta, axis=-1)
            gA_q[...] = 2.0 * sig * delta
            dt = delta[..., 0]
        else:
            C = spec.circumference
            A = np.sum(delta[..., 1:] ** 2, axis=-1)
            gA_q[..., 1:] = 2.0 * delta[..., 1:]
            dt = np.mod(delta[..., 0], C) if anchored else _principal(delta[..., 0], C)
            L = np.full(shape, C)
            rule = -1.0 if kind is Kind.CYLINDRICAL_MINKOWSKI else 1.0
        gA_p[...] = -gA_q
        gT_q[..., 0] = 1.0
        gT_p[..., 0] = -1.0
    elif kind is Kind.HYPERBOLOID:
        sig = spec.signature
        z = lorentz_inner(spec, p, q)
        A, dz = _sq_from_inner(z, timelike_branch=False)
        gA_p[...] = dz[..., None] * sig * q
        gA_q[...] = dz[..., None] * sig * p
        dt = q[..., 0] - p[..., 0]
        gT_q[..., 0] = 1.0
        gT_p[..., 0] = -1.0
    else:
        sig = spec.signature
        z = lorentz_inner(spec, p, q)
        A, dz = _sq_from_inner(z, timelike_branch=True)
        gA_p[...] = dz[..., None] * sig * q
        gA_q[...] = dz[..., None] * sig * p
        # atan2 agrees with the arcsine branch rule on the quadric and stays
        # well conditioned where x_0 crosses zero
        th_p = np.arctan2(p[..., 0], p[..., 1])
        th_q = np.arctan2(q[..., 0], q[..., 1])
        raw = th_q - th_p
        dth = np.mod(raw, 2.0 * np.pi) if anchored else _principal_angle(raw)
        rq = ads_radius(q)
        dt = rq * dth
        rho_p = p[..., 0] ** 2 + p[..., 1] ** 2
        rho_q = q[..., 0] ** 2 + q[..., 1] ** 2
        gT_q[..., 0] = rq * q[..., 1] / rho_q
        gT_q[..., 1] = -rq * q[..., 0] / rho_q
        gT_q[..., 2:] = (dth / rq)[..., None] * q[..., 2:]
        gT_p[..., 0] = -rq * p[..., 1] / rho_p
        gT_p[..., 1] = rq * p[..., 0] / rho_p
        L = 2.0 * np.pi * rq
        gL_q[..., 2:] = (2.0 * np.pi / rq)[..., None] * q[..., 2:]
    return A, dt, L, rule, (gA_p, gA_q, gT_p, gT_q, gL_q)


def squared_distance(spec: ManifoldSpec, p, q) -> np.ndarray:
    """Squared interval between p and q (negative for timelike separation).

    Cylindrical kinds use the image of q nearest in time.
    """
    A, dt, _, rule, _ = _pair_base(spec, p, q, anchored=False)
    return A + rule * dt * dt


def time_delta(spec: ManifoldSpec, p, q) -> np.ndarray:
    """Time of q as seen from p.

    Flat and hyperboloid kinds take ``x_0(q) - x_0(p)``; cylinders reduce it
    to ``[-C/2, C/2)``; AdS uses ``r_q * theta_pq`` with the angle difference in
    ``(-pi, pi]``.
    """
    p, q = _check_pair(spec, p, q)
    if spec.kind is Kind.ANTI_DE_SITTER:
        raw = np.arctan2(q[..., 0], q[..., 1]) - np.arctan2(p[..., 0], p[..., 1])
        return ads_radius(q) * _principal_angle(raw)
    dt = q[..., 0] - p[..., 0]
    if spec.is_cylindrical:
        dt = _principal(dt, spec.circumference)
    return dt


def winding_range(spec: ManifoldSpec, m: int) -> np.ndarray:
    if m < 0:
        raise ValueError("wrap truncation m must be non-negative")
    if not spec.has_circle_time or m == 0:
        return np.zeros(1)
    return np.arange(-m, m + 1, dtype=float)


def interval_images(spec: ManifoldSpec, p, q, m: int) -> IntervalImages:
    """Squared intervals and time differences for winding images ``n in [-m, m]``.

    For ``m > 0`` the window is anchored on the forward time difference in
    ``[0, period)``: the future tail of the likelihood decays more slowly
    than the past one, so the window reaches further forward.
    """
    n = winding_range(spec, m)
    anchored = spec.has_circle_time and m > 0
    A, dt, L, rule, _ = _pair_base(spec, p, q, anchored=anchored)
    dts = np.asarray(dt)[..., None] + n * np.asarray(L)[..., None]
    s = np.asarray(A)[..., None] + rule * dts * dts
    return IntervalImages(s, dts, n)


def interval_differentials(spec: ManifoldSpec, p, q):
    """Ambient partials of ``squared_distance`` and ``time_delta``.

    Returns ``(ds_sq/dp, ds_sq/dq, d_dt/dp, d_dt/dq)``, each shaped like p.
    """
    A, dt, _, rule, (gA_p, gA_q, gT_p, gT_q, _) = _pair_base(spec, p, q, anchored=False)
    if rule:
        c = (2.0 * rule * np.asarray(dt))[..., None]
        return gA_p + c * gT_p, gA_q + c * gT_q, gT_p, gT_q
    return gA_p, gA_q, gT_p, gT_q


def tangent_project(spec: ManifoldSpec, p, v) -> np.ndarray:
    """``v + <v, p> p``: projection onto the tangent space of the quadric at p."""
    return v + lorentz_inner(spec, v, p)[..., None] * p


def descent_tangent(spec: ManifoldSpec, p, df) -> np.ndarray:
    """Tangent vector whose exp-map step ``exp_p(-lr * v)`` decreases f.

    ``df`` is the differential of the loss in ambient coordinates.  Flat kinds
    use it directly (the Wick-rotated gradient); the hyperboloid projects the
    metric gradient; AdS applies the double projection, which is tangent and
    a guaranteed descent direction.
    """
    p = np.asarray(p, dtype=float)
    df = np.asarray(df, dtype=float)
    if df.shape[-1] != spec.ambient_dim or p.shape[-1] != spec.ambient_dim:
        raise ValueError("differential and point must have ambient dimension")
    if spec.is_flat:
        return np.array(df, copy=True)
    sig = spec.signature
    v = tangent_project(spec, p, sig * df)
    if spec.kind is Kind.HYPERBOLOID:
        return v
    return tangent_project(spec, p, sig * v)


def exp_map(spec: ManifoldSpec, p, v, project: bool = True) -> np.ndarray:
    """Follow the geodesic from p with initial velocity v for unit time."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
        raise ValueError("exp_map received non-finite input")
    if spec.is_flat:
        out = p + v
    else:
        n2 = lorentz_inner(spec, v, v)
        a = np.sqrt(np.abs(n2))
        safe = np.where(a > 0.0, a, 1.0)
        time = n2 < 0.0
        c = np.where(time, np.cos(a), np.cosh(a))
        sa = np.where(time, np.sin(a), np.sinh(a)) / safe
        sa = np.where(a > 0.0, sa, 1.0)
        out = c[..., None] * p + sa[..., None] * v
    if project:
        out = project_point(spec, out)
    elif spec.is_cylindrical:
        out = np.array(out, copy=True)
        out[..., 0] = np.mod(out[..., 0], spec.circumference)
    return out


def project_point(spec: ManifoldSpec, p) -> np.ndarray:
    """Undo numerical drift off the manifold.

    AdS rescales the ``(x_{-1}, x_0)`` pair, which keeps the polar angle and so
    the circle time; the hyperboloid re-solves ``x_0``; cylinders wrap the time
    coordinate into ``[0, C)``.
    """
    p = np.array(p, dtype=float, copy=True)
    if spec.kind in (Kind.EUCLIDEAN, Kind.MINKOWSKI):
        return p
    if spec.is_cylindrical:
        p[..., 0] = np.mod(p[..., 0], spec.circumference)
        # mod can round up to C itself for tiny negative inputs
        p[..., 0] = np.where(p[..., 0] >= spec.circumference, 0.0, p[..., 0])
        return p
    resid = np.abs(lorentz_inner(spec, p, p) + 1.0)
    if np.any(~np.isfinite(resid)) or np.any(resid > MAX_REPAIR_RESIDUAL):
        raise ProjectionError(
            f"point is {np.max(resid):.3g} off the {spec.kind.value} quadric; cannot repair")
    spatial_sq = 1.0 + np.sum(p[..., 2:] ** 2 if spec.kind is Kind.ANTI_DE_SITTER else p[..., 1:] ** 2,
                              axis=-1)
    if spec.kind is Kind.HYPERBOLOID:
        p[..., 0] = np.sqrt(spatial_sq)
    else:
        rho = p[..., 0] ** 2 + p[..., 1] ** 2
        scale = np.sqrt(spatial_sq / rho)
        p[..., 0] *= scale
        p[..., 1] *= scale
    return p


def random_point(spec: ManifoldSpec, scale: float = 1e-3, rng=None, size=None) -> np.ndarray:
    """Random point(s) in a small patch around the origin of the manifold.

    The AdS origin is ``(x_{-1}, x_0, x) = (0, 1, 0, ..., 0)``; the hyperboloid
    origin is ``(1, 0, ..., 0)``.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    rng = np.random.default_rng(rng)
    lead = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    D = spec.ambient_dim
    if spec.is_flat:
        x = rng.uniform(-scale, scale, size=lead + (D,))
        return project_point(spec, x)
    if spec.kind is Kind.HYPERBOLOID:
        x = np.empty(lead + (D,))
        x[..., 1:] = rng.uniform(-scale, scale, size=lead + (D - 1,))
        x[..., 0] = np.sqrt(1.0 + np.sum(x[..., 1:] ** 2, axis=-1))
        return x
    x = np.empty(lead + (D,))
    x[..., 2:] = rng.uniform(-scale, scale, size=lead + (D - 2,))
    theta = rng.uniform(-scale, scale, size=lead)
    r = ads_radius(x)
    x[..., 0] = r * np.sin(theta)
    x[..., 1] = r * np.cos(theta)
    return x


def validate_point(spec: ManifoldSpec, p, tol: float = 1e-9) -> bool:
    """Whether every point in ``p`` satisfies the manifold's invariants."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != spec.ambient_dim or not np.all(np.isfinite(p)):
        return False
    if spec.is_cylindrical:
        t = p[..., 0]
        return bool(np.all((t >= 0.0) & (t < spec.circumference)))
    if spec.kind is Kind.HYPERBOLOID:
        ok = np.abs(lorentz_inner(spec, p, p) + 1.0) <= tol
        return bool(np.all(ok & (p[..., 0] > 0.0)))
    if spec.kind is Kind.ANTI_DE_SITTER:
        return bool(np.all(np.abs(lorentz_inner(spec, p, p) + 1.0) <= tol))
    return True
