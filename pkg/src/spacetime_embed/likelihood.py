"""Fermi-Dirac and Triple Fermi-Dirac edge probabilities and the NLL loss."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .manifolds import IntervalImages, Kind, ManifoldSpec, winding_range

__all__ = [
    "FdParams",
    "TfdParams",
    "Likelihood",
    "EdgeProbability",
    "log_fd",
    "fd",
    "tfd",
    "tfd_partials",
    "wrapped_tfd",
    "calibrate_k",
    "edge_nll",
    "PROB_CLAMP",
]

PROB_CLAMP = 1e-12
DEFAULT_WRAP_M = 3
CALIBRATION_GRID = 4001


@dataclass(frozen=True)
class FdParams:
    tau: float
    r: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


@dataclass(frozen=True)
class TfdParams:
    tau1: float
    tau2: float
    alpha: float
    r: float = 0.0
    k: float = 1.0
    wrap_m: int = DEFAULT_WRAP_M

    def __post_init__(self):
        if not (self.tau1 > 0 and self.tau2 > 0):
            raise ValueError("tau1 and tau2 must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 < self.k <= 1.0:
            raise ValueError("k must lie in (0, 1]")
        if int(self.wrap_m) != self.wrap_m or self.wrap_m < 0:
            raise ValueError("wrap_m must be a non-negative integer")


class EdgeProbability(NamedTuple):
    """Wrapped edge probability with its per-image partials.

    ``partial_s_sq`` and ``partial_dt`` have the image axis last; summing the
    chain-rule products over that axis gives the total derivative.
    """

    value: np.ndarray
    partial_s_sq: np.ndarray
    partial_dt: np.ndarray


def _softplus_and_sigmoid(y):
    """``log(1 + e^y)`` and ``1 / (1 + e^-y)`` without overflow."""
    y = np.asarray(y, dtype=float)
    e = np.exp(-np.abs(y))
    sp = np.maximum(y, 0.0) + np.log1p(e)
    sig = np.where(y >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    return sp, sig


def log_fd(x, tau: float, r: float, alpha: float):
    """``log F`` and ``1 - F`` for ``F = 1 / (exp((alpha x - r)/tau) + 1)``."""
    sp, sig = _softplus_and_sigmoid((alpha * np.asarray(x, float) - r) / tau)
    return -sp, sig


def fd(params: FdParams, x) -> np.ndarray:
    """Fermi-Dirac function ``1 / (exp((alpha x - r) / tau) + 1)``."""
    lf, _ = log_fd(x, params.tau, params.r, params.alpha)
    return np.exp(lf)


def _tfd_terms(params: TfdParams, s_sq, dt):
    l1, om1 = log_fd(s_sq, params.tau1, params.r, 1.0)
    l2, om2 = log_fd(-np.asarray(dt, float), params.tau2, 0.0, 1.0)
    l3, om3 = log_fd(dt, params.tau2, 0.0, params.alpha)
    value = params.k * np.exp((l1 + l2 + l3) / 3.0)
    return value, om1, om2, om3


def tfd(params: TfdParams, s_sq, dt) -> np.ndarray:
    """Triple Fermi-Dirac probability ``k (F1 F2 F3)^(1/3)``.

    F1 decays with the squared interval, F2 into the past and F3 (slowed by
    alpha) into the future.
    """
    return _tfd_terms(params, s_sq, dt)[0]


def tfd_partials(params: TfdParams, s_sq, dt):
    """``(d tfd / d s_sq, d tfd / d dt)`` via ``d log F / dx = -(alpha/tau)(1 - F)``."""
    value, om1, om2, om3 = _tfd_terms(params, s_sq, dt)
    d_s = -value * om1 / (3.0 * params.tau1)
    d_t = value * (om2 - params.alpha * om3) / (3.0 * params.tau2)
    return d_s, d_t


def wrapped_tfd(params: TfdParams, images: IntervalImages) -> EdgeProbability:
    """Sum of TFD over all winding images."""
    value, om1, om2, om3 = _tfd_terms(params, images.s_sq, images.dt)
    d_s = -value * om1 / (3.0 * params.tau1)
    d_t = value * (om2 - params.alpha * om3) / (3.0 * params.tau2)
    return EdgeProbability(np.sum(value, axis=-1), d_s, d_t)


def interval_grid(spec: ManifoldSpec, resolution: int = 101):
    """Regular (s_sq, dt) grid over one period of a compact-time manifold.

    ``s_sq`` is the interval of the nearest-forward image, ``dt`` runs over
    ``[0, period)`` with period ``C`` (cylinders) or ``2 pi`` (AdS at
    ``r_q = 1``).  Returns ``(spatial, dt, period, rule, reachable)``.
    """
    if spec.is_cylindrical:
        period = spec.circumference
        s_lo, s_hi = -period ** 2, period ** 2
    elif spec.kind is Kind.ANTI_DE_SITTER:
        period = 2.0 * np.pi
        s_lo, s_hi = -np.pi ** 2, period ** 2
    else:
        raise ValueError(f"{spec.kind.value} has no compact time direction")
    s = np.linspace(s_lo, s_hi, resolution)
    t = np.linspace(0.0, period, resolution, endpoint=False)
    S, T = np.meshgrid(s, t, indexing="ij")
    if spec.kind is Kind.CYLINDRICAL_MINKOWSKI:
        rule = -1.0
    elif spec.kind is Kind.CYLINDRICAL_EUCLIDEAN:
        rule = 1.0
    else:
        rule = 0.0
    spatial = S - rule * T * T
    reachable = spatial >= 0.0 if rule else np.ones_like(S, dtype=bool)
    return spatial, T, period, rule, reachable


def grid_wrapped_values(params: TfdParams, spec: ManifoldSpec, m: int,
                        resolution: int = 101) -> np.ndarray:
    """Unscaled wrapped TFD on :func:`interval_grid` (NaN where unreachable)."""
    spatial, T, period, rule, reachable = interval_grid(spec, resolution)
    n = winding_range(spec, m)
    dts = T[..., None] + n * period
    s = spatial[..., None] + rule * dts * dts
    unit = replace(params, k=1.0)
    vals = wrapped_tfd(unit, IntervalImages(s, dts, n)).value
    return np.where(reachable, vals, np.nan)


def _peak_profile(params: TfdParams, spec: ManifoldSpec, m: int, t):
    """Unscaled wrapped TFD along the tightest reachable interval for each dt.

    Every image shares the spatial part of the interval and F1 falls with
    ``s_sq``, so the supremum over the domain lies where that part vanishes
    (cylinders) or at the most timelike interval ``-pi^2`` (AdS, ``r_q = 1``).
    """
    if spec.is_cylindrical:
        period = spec.circumference
        rule = -1.0 if spec.kind is Kind.CYLINDRICAL_MINKOWSKI else 1.0
        base = 0.0
    else:
        period = 2.0 * np.pi
        rule = 0.0
        base = -np.pi ** 2
    n = winding_range(spec, m)
    dts = np.asarray(t, dtype=float)[..., None] + n * period
    s = base + rule * dts * dts
    return wrapped_tfd(replace(params, k=1.0), IntervalImages(s, dts, n)).value, period


def calibrate_k(params: TfdParams, spec: ManifoldSpec, resolution: int = CALIBRATION_GRID) -> float:
    """Largest ``k <= 1`` keeping the wrapped probability at most one.

    Scans dt over one period, then zooms in on the best cell.  Non-compact
    manifolds return ``params.k`` unchanged, as does ``wrap_m = 0``.
    """
    if not spec.has_circle_time or params.wrap_m == 0:
        return params.k
    m = params.wrap_m
    _, period = _peak_profile(params, spec, m, 0.0)
    t = np.linspace(0.0, period, resolution, endpoint=False)
    vals, _ = _peak_profile(params, spec, m, t)
    i = int(np.argmax(vals))
    best_t, peak = t[i], float(vals[i])
    h = period / resolution
    for _ in range(6):
        t = np.linspace(best_t - h, best_t + h, 41)
        vals, _ = _peak_profile(params, spec, m, t)
        i = int(np.argmax(vals))
        best_t, peak = t[i], max(peak, float(vals[i]))
        h /= 20.0
    return min(1.0, 1.0 / peak)


def edge_nll(prob, label) -> np.ndarray:
    """Negative log-likelihood of an observed (label 1) or absent (0) edge."""
    p = np.clip(np.asarray(prob, dtype=float), PROB_CLAMP, 1.0 - PROB_CLAMP)
    label = np.asarray(label)
    return np.where(label.astype(bool), -np.log(p), -np.log1p(-p))


@dataclass(frozen=True)
class Likelihood:
    """Edge-probability model used for training and scoring.

    ``kind`` is ``"fd"`` (distance-only baseline, uses ``tau1``, ``r`` and
    ``alpha``) or ``"tfd"``.  ``wrap_m > 0`` sums TFD over winding images on
    manifolds with compact time.
    """

    kind: str
    tau1: float
    tau2: float = 1.0
    alpha: float = 1.0
    r: float = 0.0
    k: float = 1.0
    wrap_m: int = 0

    def __post_init__(self):
        kind = self.kind.lower()
        if kind == "wrapped_tfd":
            kind = "tfd"
        if kind not in ("fd", "tfd"):
            raise ValueError(f"unknown likelihood {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "fd":
            FdParams(self.tau1, self.r, self.alpha)
            object.__setattr__(self, "wrap_m", 0)
        else:
            self.tfd_params

    @classmethod
    def fd(cls, tau: float, r: float = 0.0, alpha: float = 1.0) -> "Likelihood":
        return cls("fd", tau1=tau, r=r, alpha=alpha)

    @classmethod
    def tfd(cls, tau1, tau2, alpha, r=0.0, k=1.0, wrap_m=0) -> "Likelihood":
        return cls("tfd", tau1=tau1, tau2=tau2, alpha=alpha, r=r, k=k, wrap_m=wrap_m)

    @property
    def code(self) -> int:
        return 0 if self.kind == "fd" else 1

    @property
    def tfd_params(self) -> TfdParams:
        return TfdParams(self.tau1, self.tau2, self.alpha, self.r, self.k, self.wrap_m)

    @property
    def fd_params(self) -> FdParams:
        return FdParams(self.tau1, self.r, self.alpha)

    def effective_m(self, spec: ManifoldSpec) -> int:
        return self.wrap_m if (self.kind == "tfd" and spec.has_circle_time) else 0

    def calibrated(self, spec: ManifoldSpec) -> "Likelihood":
        """Copy with ``k`` set by :func:`calibrate_k` (no-op for FD)."""
        if self.kind == "fd":
            return self
        return replace(self, k=calibrate_k(replace(self.tfd_params, k=1.0), spec))

    def as_array(self) -> np.ndarray:
        """Kernel parameter vector ``(tau1, tau2, alpha, r, k)``."""
        return np.array([self.tau1, self.tau2, self.alpha, self.r, self.k], dtype=float)

    def probability(self, spec: ManifoldSpec, p, q) -> np.ndarray:
        """Edge probability p -> q for (stacks of) points."""
        from .manifolds import interval_images

        m = self.effective_m(spec)
        images = interval_images(spec, p, q, m)
        if self.kind == "fd":
            lf, _ = log_fd(images.s_sq[..., 0], self.tau1, self.r, self.alpha)
            return self.k * np.exp(lf)
        return wrapped_tfd(self.tfd_params, images).value
