"""Closed convex truncation regions, exact projections, and moving-bound schedules.

Supported region shapes are the whole space, axis-aligned boxes, and spheres:
each admits an exact closed-form Euclidean projection, so no iterative
projection solver is needed.  Schedules are pure functions of the step index
(and optional auxiliary data supplied by the caller), which keeps every run
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError

__all__ = [
    "TruncationRegion",
    "TruncationSchedule",
    "project",
    "cnorm_condition",
    "admissibility_horizon",
]

# Relative slack treating near-boundary points as members.  Guarantees exact
# idempotence of sphere projection despite rounding of the radial rescale.
_BOUNDARY_RTOL = 1e-12


def _vector(z, name: str = "z") -> np.ndarray:
    arr = np.atleast_1d(np.asarray(z, dtype=float))
    if arr.ndim != 1:
        raise DomainError(f"{name} must be a vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class TruncationRegion:
    """A closed convex set with a total membership test and exact projection."""

    kind: str  # "whole-space" | "box" | "sphere"
    dim: int
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: float = np.inf

    @classmethod
    def whole_space(cls, dim: int) -> "TruncationRegion":
        if dim < 1:
            raise DomainError("dimension must be >= 1")
        return cls(kind="whole-space", dim=int(dim))

    @classmethod
    def box(cls, lower, upper) -> "TruncationRegion":
        lo = _vector(lower, "lower")
        hi = _vector(upper, "upper")
        if lo.shape != hi.shape:
            raise DomainError("box bounds must have equal length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise DomainError("box bounds must be finite")
        if np.any(lo > hi):
            raise DomainError("box requires lower[i] <= upper[i] for all i")
        return cls(kind="box", dim=lo.size, lower=lo, upper=hi)

    @classmethod
    def sphere(cls, center, radius: float) -> "TruncationRegion":
        c = _vector(center, "center")
        r = float(radius)
        if not np.isfinite(c).all():
            raise DomainError("sphere center must be finite")
        if not (np.isfinite(r) and r > 0):
            raise DomainError("sphere radius must be positive and finite")
        return cls(kind="sphere", dim=c.size, center=c, radius=r)

    def contains(self, z, tol: float = 0.0) -> bool:
        zv = _vector(z)
        if zv.size != self.dim:
            raise DomainError(f"point has dimension {zv.size}, region has {self.dim}")
        if not np.isfinite(zv).all():
            return False
        if self.kind == "whole-space":
            return True
        if self.kind == "box":
            return bool(np.all(zv >= self.lower - tol) and np.all(zv <= self.upper + tol))
        d = float(np.linalg.norm(zv - self.center))
        return d <= self.radius * (1.0 + _BOUNDARY_RTOL) + tol

    def project(self, z) -> np.ndarray:
        """Euclidean projection: the identity inside the region, otherwise the
        unique closest point (componentwise clamp for boxes, radial rescale
        toward the center for spheres)."""
        zv = _vector(z)
        if zv.size != self.dim:
            raise DomainError(f"point has dimension {zv.size}, region has {self.dim}")
        if not np.isfinite(zv).all():
            raise DomainError("cannot project a non-finite point")
        if self.kind == "whole-space":
            return zv
        if self.kind == "box":
            return np.minimum(np.maximum(zv, self.lower), self.upper)
        d = zv - self.center
        dist = float(np.linalg.norm(d))
        if dist <= self.radius * (1.0 + _BOUNDARY_RTOL):
            return zv
        return self.center + (self.radius / dist) * d


def project(region: TruncationRegion, z) -> np.ndarray:
    """Exact Euclidean projection of ``z`` onto ``region``."""
    return region.project(z)


def cnorm_condition(C, center, radius: float, root) -> bool:
    """Eigenvalue test guaranteeing that projecting onto the sphere
    ``S(center, radius)`` cannot increase the C-weighted squared distance to
    ``root``: true iff lambda_max(C) * ||center - root||^2 <= lambda_min(C) * radius^2.
    """
    Cm = np.asarray(C, dtype=float)
    if Cm.ndim != 2 or Cm.shape[0] != Cm.shape[1]:
        raise DomainError("C must be a square matrix")
    if not np.isfinite(Cm).all():
        raise DomainError("C must be finite")
    if not np.allclose(Cm, Cm.T, rtol=1e-10, atol=1e-10):
        raise DomainError("C must be symmetric")
    r = float(radius)
    if not (np.isfinite(r) and r > 0):
        raise DomainError("radius must be positive and finite")
    eig = np.linalg.eigvalsh((Cm + Cm.T) / 2.0)
    if eig[0] <= 0:
        raise DomainError("C must be positive definite")
    v2 = float(np.sum((_vector(center, "center") - _vector(root, "root")) ** 2))
    return bool(eig[-1] * v2 <= eig[0] * r * r)


@dataclass(frozen=True, eq=False)
class TruncationSchedule:
    """Time-indexed truncation regions.

    ``region_at(t, aux)`` is deterministic in its arguments; callers that want
    data-driven bounds (e.g. spheres around an auxiliary estimate) pass the
    estimate through ``aux`` instead of closing over mutable state.
    """

    family: str  # "constant" | "expanding-box" | "shrinking-sphere" | "custom"
    dim: int
    _region_fn: Callable[[int, object], TruncationRegion]

    def region_at(self, t: int, aux=None) -> TruncationRegion:
        if t < 1:
            raise DomainError("step index starts at 1")
        return self._region_fn(int(t), aux)

    @classmethod
    def constant(cls, region: TruncationRegion) -> "TruncationSchedule":
        return cls("constant", region.dim, lambda t, aux: region)

    @classmethod
    def whole_space(cls, dim: int) -> "TruncationSchedule":
        return cls.constant(TruncationRegion.whole_space(dim))

    @classmethod
    def expanding_box(cls, u_of_t: Callable[[int], float], dim: int = 1) -> "TruncationSchedule":
        # Probe a prefix of the sequence; non-decreasing u_t is part of the contract.
        probe = [float(u_of_t(t)) for t in range(1, 65)]
        if any(not np.isfinite(u) or u < 0 for u in probe):
            raise DomainError("expanding-box u_t must be finite and non-negative")
        if any(b < a for a, b in zip(probe, probe[1:])):
            raise DomainError("expanding-box u_t must be non-decreasing")

        def fn(t: int, aux) -> TruncationRegion:
            u = float(u_of_t(t))
            return TruncationRegion.box(np.full(dim, -u), np.full(dim, u))

        return cls("expanding-box", dim, fn)

    @classmethod
    def expanding_box_power(cls, C: float, r: float, l: int, dim: int = 1) -> "TruncationSchedule":
        """Symmetric box with half-width C * t^(r / (2l))."""
        if C <= 0 or r <= 0 or l < 1:
            raise DomainError("power box requires C > 0, r > 0, l >= 1")
        expo = r / (2.0 * l)
        return cls.expanding_box(lambda t: C * t**expo, dim)

    @classmethod
    def expanding_box_log(cls, C: float, dim: int = 1, shift: float = 2.0) -> "TruncationSchedule":
        """Symmetric box with half-width C * log(t + shift).

        The shift keeps the first region non-degenerate (log 1 = 0 would give
        the single point {0} at t = 1)."""
        if C <= 0 or shift < 0:
            raise DomainError("log box requires C > 0 and shift >= 0")
        return cls.expanding_box(lambda t: C * np.log(t + shift), dim)

    @classmethod
    def shrinking_sphere(
        cls,
        center_of_t: Callable[[int], np.ndarray],
        radius_of_t: Callable[[int], float],
    ) -> "TruncationSchedule":
        """Spheres S(center(t), radius(t)); a non-None ``aux`` argument to
        ``region_at`` overrides the center (auxiliary-estimator truncation)."""
        dim = _vector(center_of_t(1), "center").size

        def fn(t: int, aux) -> TruncationRegion:
            c = _vector(aux, "aux") if aux is not None else _vector(center_of_t(t), "center")
            return TruncationRegion.sphere(c, float(radius_of_t(t)))

        return cls("shrinking-sphere", dim, fn)

    @classmethod
    def custom(cls, fn: Callable[[int, object], TruncationRegion], dim: int) -> "TruncationSchedule":
        return cls("custom", dim, fn)


def admissibility_horizon(
    schedule: TruncationSchedule, root, horizon: int, aux=None
) -> Optional[int]:
    """Smallest t0 <= horizon such that ``root`` lies in every region from t0
    through the horizon, or None if the root is excluded at the horizon itself.
    """
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    rv = _vector(root, "root")
    t0: Optional[int] = None
    for t in range(int(horizon), 0, -1):
        if schedule.region_at(t, aux).contains(rv, tol=1e-12):
            t0 = t
        else:
            break
    return t0
