"""Numerical convergence diagnostics.

Evaluates quadratic Lyapunov decrements along trajectories, checks drift
inequalities on probe grids, fits empirical convergence rates from replication
sweeps, and provides the step-growth partial sum used to rule out too-fast
step-size sequences.  Everything here is a finite-horizon numerical surrogate
for an almost-sure statement, and the reports say exactly which inequality was
tested at which threshold.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field as dc_field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError
from .engine import SAProblem, Trajectory
from .truncation import TruncationSchedule, _vector

__all__ = [
    "QuadraticLyapunov",
    "RateReport",
    "BoundednessStat",
    "RateAccumulator",
    "DriftReport",
    "CONDITIONS",
    "lyapunov_track",
    "decrement_k",
    "check_drift",
    "rate_fit",
    "adt_partial_sum",
]

#: Drift/rate conditions understood by :func:`check_drift`.
#:   D1 / H1 -- inner product with the drift is non-positive inside the region
#:   H4      -- strictly negative off the root
#:   W1      -- drift dominates the step-size growth: d^T R_t <= -1/2 * da_t * ||d||^2
#:   B1      -- locally strong drift: u^T R(root+u) <= -1/2 * ||u||^2
#:   Y1      -- slope of R_t at the root is at most -1/2 (1-D, finite differences)
CONDITIONS = ("D1", "H1", "H4", "W1", "B1", "Y1")

_FD_REL_STEP = 1e-5
_Y1_MARGIN = 1e-3


@dataclass(frozen=True, eq=False)
class QuadraticLyapunov:
    """Time-indexed SPD weight matrix C_t for the quadratic energy u^T C_t u."""

    kind: str  # "constant" | "power-identity" | "custom"
    dim: int
    matrix_fn: Callable[[int], np.ndarray]
    delta: float = 0.0

    def matrix(self, t: int) -> np.ndarray:
        C = np.asarray(self.matrix_fn(int(t)), dtype=float)
        if C.shape != (self.dim, self.dim):
            raise DomainError(f"C_t must be {self.dim}x{self.dim}, got {C.shape}")
        return C

    @staticmethod
    def _require_spd(C: np.ndarray, what: str) -> None:
        if not np.allclose(C, C.T, rtol=1e-10, atol=1e-12):
            raise DomainError(f"{what} must be symmetric")
        if np.linalg.eigvalsh((C + C.T) / 2.0)[0] <= 0:
            raise DomainError(f"{what} must be positive definite")

    @classmethod
    def constant(cls, C) -> "QuadraticLyapunov":
        Cm = np.asarray(C, dtype=float)
        if Cm.ndim == 0:
            Cm = Cm.reshape(1, 1)
        cls._require_spd(Cm, "constant C")
        return cls(kind="constant", dim=Cm.shape[0], matrix_fn=lambda t: Cm)

    @classmethod
    def power_identity(cls, a_fn: Callable[[int], float], delta: float, dim: int) -> "QuadraticLyapunov":
        """C_t = a(t)^delta * I.  ``a_fn`` must be positive for t >= 1."""
        for t in (1, 2, 10):
            if not a_fn(t) > 0:
                raise DomainError("a(t) must be positive")
        eye = np.eye(dim)
        return cls(
            kind="power-identity",
            dim=dim,
            matrix_fn=lambda t, _e=eye: float(a_fn(t)) ** delta * _e if t >= 1 else 0.0 * _e,
            delta=float(delta),
        )

    @classmethod
    def step_normalized(
        cls,
        a_fn: Callable[[int], float],
        gamma_inv_fn: Callable[[int], np.ndarray],
        dim: int,
    ) -> "QuadraticLyapunov":
        """C_t = gamma_t^-1 / a(t), the weighting that turns the recursion's
        own (inverse) step matrices into the tracked energy."""
        return cls.custom(
            lambda t: np.asarray(gamma_inv_fn(t), dtype=float) / float(a_fn(t)), dim
        )

    @classmethod
    def custom(cls, matrix_fn: Callable[[int], np.ndarray], dim: int) -> "QuadraticLyapunov":
        lyap = cls(kind="custom", dim=dim, matrix_fn=matrix_fn)
        for t in (1, 2, 10):
            cls._require_spd(lyap.matrix(t), f"C_{t}")
        return lyap


def lyapunov_track(trajectory: Trajectory, lyapunov: QuadraticLyapunov, root) -> np.ndarray:
    """The quadratic energy (Z_t - root)^T C_t (Z_t - root) along a trajectory."""
    rv = _vector(root, "root")
    if rv.size != trajectory.values.shape[1] or rv.size != lyapunov.dim:
        raise DomainError("dimension mismatch between trajectory, Lyapunov weights, and root")
    out = np.empty(len(trajectory))
    for i, t in enumerate(trajectory.steps):
        d = trajectory.values[i] - rv
        out[i] = float(d @ lyapunov.matrix(int(t)) @ d)
    return out


def decrement_k(
    problem: SAProblem,
    lyapunov: QuadraticLyapunov,
    root,
    t: int,
    u,
    noise_covariance=None,
) -> float:
    """Exact one-step conditional expectation of the energy change at offset u.

    For quadratic energies the second-derivative envelope is constant, so the
    expectation is available in closed form:

        u^T (C_t - C_{t-1}) u  +  2 u^T C_t g R  +  (g R)^T C_t (g R)
            + trace(g^T C_t g Sigma_t)

    with g = gamma_t(root+u), R = R_t(root+u) and Sigma_t the conditional
    noise covariance.  ``noise_covariance`` overrides the family's closed
    form when given (matrix, or callable of (t, v))."""
    if t < 1:
        raise DomainError("step index starts at 1")
    rv = _vector(root, "root")
    uv = _vector(u, "u")
    if uv.size != rv.size:
        raise DomainError("u and root must have equal dimension")
    v = rv + uv
    C_t = lyapunov.matrix(t)
    C_prev = lyapunov.matrix(t - 1) if t > 1 else lyapunov.matrix_fn(0)
    C_prev = np.asarray(C_prev, dtype=float)
    g = problem.step.gamma_matrix(t, v)
    R = np.atleast_1d(np.asarray(problem.field(t, v), dtype=float))
    if noise_covariance is None:
        sigma = problem.noise.covariance(t, v)
    elif callable(noise_covariance):
        sigma = np.asarray(noise_covariance(t, v), dtype=float)
    else:
        sigma = np.asarray(noise_covariance, dtype=float)
    if sigma.ndim == 0:
        sigma = sigma.reshape(1, 1)
    gR = g @ R
    drift_change = float(uv @ (C_t - C_prev) @ uv)
    cross = 2.0 * float(uv @ C_t @ gR)
    quad = float(gR @ C_t @ gR)
    noise_term = float(np.trace(g.T @ C_t @ g @ sigma))
    return drift_change + cross + quad + noise_term


# ---------------------------------------------------------------------------
# Drift-condition checks on probe grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftRow:
    condition: str
    t: int
    point: Tuple[float, ...]
    value: float
    threshold: float
    ok: bool


@dataclass
class DriftReport:
    """Literal inequality evaluations, one row per (t, grid point).

    Rows with t < t_min count as early observations, not failures (drift
    conditions are asymptotic)."""

    condition: str
    t_min: int
    rows: List[DriftRow] = dc_field(default_factory=list)

    @property
    def violations(self) -> List[DriftRow]:
        return [r for r in self.rows if not r.ok and r.t >= self.t_min]

    @property
    def early_violations(self) -> List[DriftRow]:
        return [r for r in self.rows if not r.ok and r.t < self.t_min]

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["condition", "t", "grid_point", "value", "threshold", "ok"])
            for r in self.rows:
                pt = ";".join(repr(x) for x in r.point)
                w.writerow([r.condition, r.t, pt, repr(r.value), repr(r.threshold), int(r.ok)])

    def summary(self) -> dict:
        return {
            "condition": self.condition,
            "t_min": self.t_min,
            "rows": len(self.rows),
            "violations": len(self.violations),
            "early_violations": len(self.early_violations),
            "passed": self.passed,
        }


def _fd_slope(field, t: int, root: np.ndarray) -> float:
    # central difference; step scales with the root's magnitude
    h = _FD_REL_STEP * (1.0 + abs(float(root[0])))
    up = float(np.atleast_1d(field(t, root + h))[0])
    dn = float(np.atleast_1d(field(t, root - h))[0])
    return (up - dn) / (2.0 * h)


def check_drift(
    field,
    schedule: Optional[TruncationSchedule],
    root,
    condition: str,
    probe_grid,
    t_range: Iterable[int],
    a_fn: Optional[Callable[[int], float]] = None,
    t_min: int = 1,
    slope_margin: float = _Y1_MARGIN,
) -> DriftReport:
    """Evaluate one drift condition over a probe grid and a range of steps.

    Grid points are locations z in the ambient space; conditions stated in
    terms of offsets use u = z - root.  For region-restricted conditions
    (D1/H1/H4/W1) a grid point only produces a row at step t when it lies in
    the region of step t-1 (t = 1 checks against the first region).  W1 needs
    the scalar step sequence via ``a_fn``.
    """
    if condition not in CONDITIONS:
        raise DomainError(f"unknown condition '{condition}' (expected one of {CONDITIONS})")
    rv = _vector(root, "root")
    steps = [int(t) for t in t_range]
    if not steps:
        raise DomainError("empty step range")
    report = DriftReport(condition=condition, t_min=int(t_min))

    if condition == "Y1":
        if rv.size != 1:
            raise DomainError("Y1 applies to one-dimensional fields")
        thr = -0.5 + slope_margin
        for t in steps:
            s = _fd_slope(field, t, rv)
            report.rows.append(DriftRow("Y1", t, (float(rv[0]),), s, thr, s <= thr))
        return report

    grid = [
        _vector(p, "grid point")
        for p in (probe_grid if not np.isscalar(probe_grid) else [probe_grid])
    ]
    if not grid:
        raise DomainError("empty probe grid")
    for p in grid:
        if p.size != rv.size:
            raise DomainError("grid point dimension does not match the root")

    if condition == "W1" and a_fn is None:
        raise DomainError("W1 requires the scalar step sequence a_fn")

    region_bound = condition in ("D1", "H1", "H4", "W1") and schedule is not None
    for t in steps:
        region = schedule.region_at(max(t - 1, 1)) if region_bound else None
        for p in grid:
            if region is not None and not region.contains(p, tol=1e-12):
                continue
            d = p - rv
            inner = float(d @ np.atleast_1d(np.asarray(field(t, p), dtype=float)))
            if condition in ("D1", "H1"):
                thr, ok = 0.0, inner <= 0.0
            elif condition == "H4":
                if float(np.linalg.norm(d)) == 0.0:
                    continue  # strict condition excludes the root itself
                thr, ok = 0.0, inner < 0.0
            elif condition == "W1":
                da = float(a_fn(t)) - float(a_fn(t - 1)) if t > 1 else float(a_fn(1))
                thr = -0.5 * da * float(d @ d)
                ok = inner <= thr
            else:  # B1
                thr = -0.5 * float(d @ d)
                ok = inner <= thr
            report.rows.append(
                DriftRow(condition, t, tuple(float(x) for x in p), inner, thr, ok)
            )
    return report


# ---------------------------------------------------------------------------
# Empirical rate fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundednessStat:
    """Nested-window suprema of t^delta * err^2(t), one entry per replication.

    ``ratio`` = late-window sup / early-window sup; a ratio near or below 1
    is the finite-horizon surrogate for "t^delta * err^2 stays bounded"."""

    delta: float
    early_sup: np.ndarray
    late_sup: np.ndarray
    ratio: np.ndarray
    median_ratio: float
    q25_ratio: float
    q75_ratio: float

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "median_ratio": self.median_ratio,
            "q25_ratio": self.q25_ratio,
            "q75_ratio": self.q75_ratio,
            "n_reps": int(self.ratio.size),
        }


@dataclass(frozen=True, eq=False)
class RateReport:
    """Empirical convergence-rate summary across replications."""

    horizon: int
    t0: int
    n_reps: int
    tail_fraction: float
    windows: Tuple[Tuple[float, float], Tuple[float, float]]
    tail_slope: float
    per_rep_slopes: np.ndarray
    zero_points_excluded: int
    boundedness: Tuple[BoundednessStat, ...]

    def stat(self, delta: float) -> BoundednessStat:
        for b in self.boundedness:
            if b.delta == delta:
                return b
        raise KeyError(f"no boundedness statistic for delta={delta}")

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "first_step": self.t0,
            "n_reps": self.n_reps,
            "tail_fraction": self.tail_fraction,
            "windows": [list(w) for w in self.windows],
            "tail_slope": self.tail_slope,
            "median_rep_slope": float(np.median(self.per_rep_slopes))
            if self.per_rep_slopes.size
            else None,
            "zero_points_excluded": self.zero_points_excluded,
            "boundedness": [b.to_dict() for b in self.boundedness],
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def write_csv(self, path) -> None:
        """Per-replication rows: slope and per-delta window suprema/ratios."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["rep", "slope"]
            for b in self.boundedness:
                d = b.delta
                header += [f"early_sup_d{d}", f"late_sup_d{d}", f"ratio_d{d}"]
            w.writerow(header)
            for r in range(self.n_reps):
                row = [r, repr(float(self.per_rep_slopes[r]))]
                for b in self.boundedness:
                    row += [
                        repr(float(b.early_sup[r])),
                        repr(float(b.late_sup[r])),
                        repr(float(b.ratio[r])),
                    ]
                w.writerow(row)


DEFAULT_WINDOWS = ((0.25, 0.5), (0.5, 1.0))


def _loglog_slope(t: np.ndarray, y: np.ndarray) -> Tuple[float, int]:
    """LS slope of log y on log t, excluding exact zeros; returns (slope, excluded)."""
    pos = y > 0
    excluded = int(np.sum(~pos))
    if np.sum(pos) < 2:
        return float("nan"), excluded
    coef = np.polyfit(np.log(t[pos]), np.log(y[pos]), 1)
    return float(coef[0]), excluded


class RateAccumulator:
    """Streaming aggregation of per-replication squared-error series.

    Feed each replication's err^2 array (time index t0..horizon) with
    :meth:`add`; :meth:`report` then produces the same RateReport that
    :func:`rate_fit` would, without holding all trajectories in memory."""

    def __init__(
        self,
        horizon: int,
        deltas: Sequence[float],
        tail_fraction: float = 0.5,
        windows: Tuple[Tuple[float, float], Tuple[float, float]] = DEFAULT_WINDOWS,
        t0: int = 1,
    ):
        if not (0.0 < tail_fraction < 1.0):
            raise DomainError("tail_fraction must lie in (0, 1)")
        if horizon < t0 + 1:
            raise DomainError("horizon too short for the requested first step")
        self.horizon = int(horizon)
        self.t0 = int(t0)
        self.tail_fraction = float(tail_fraction)
        self.windows = windows
        self.t = np.arange(self.t0, self.horizon + 1, dtype=float)
        self._n = self.t.size
        self._tail = self.t >= tail_fraction * horizon
        if not np.any(self._tail):
            raise DomainError("empty tail window")
        (e_lo, e_hi), (l_lo, l_hi) = windows
        self._early = (self.t >= e_lo * horizon) & (self.t <= e_hi * horizon)
        self._late = (self.t >= l_lo * horizon) & (self.t <= l_hi * horizon)
        if not (np.any(self._early) and np.any(self._late)):
            raise DomainError("empty boundedness window")
        self.deltas = tuple(float(d) for d in deltas)
        self._t_pow = {d: self.t**d for d in self.deltas}
        self._sum_err = np.zeros(self._n)
        self._slopes: List[float] = []
        self._early_sups: Dict[float, List[float]] = {d: [] for d in self.deltas}
        self._late_sups: Dict[float, List[float]] = {d: [] for d in self.deltas}
        self._excluded = 0

    def add(self, err_sq: np.ndarray) -> None:
        e = np.asarray(err_sq, dtype=float)
        if e.shape != (self._n,):
            raise DomainError(
                f"err_sq must cover steps {self.t0}..{self.horizon} (length {self._n})"
            )
        self._sum_err += e
        slope, excl = _loglog_slope(self.t[self._tail], e[self._tail])
        self._slopes.append(slope)
        self._excluded += excl
        for d in self.deltas:
            w = self._t_pow[d] * e
            self._early_sups[d].append(float(np.max(w[self._early])))
            self._late_sups[d].append(float(np.max(w[self._late])))

    @property
    def n_reps(self) -> int:
        return len(self._slopes)

    def mean_err_sq(self) -> np.ndarray:
        if not self._slopes:
            raise DomainError("no replications accumulated")
        return self._sum_err / len(self._slopes)

    def report(self) -> RateReport:
        n = self.n_reps
        if n == 0:
            raise DomainError("no replications accumulated")
        mean_err = self.mean_err_sq()
        slope, excl = _loglog_slope(self.t[self._tail], mean_err[self._tail])
        stats = []
        for d in self.deltas:
            early = np.asarray(self._early_sups[d])
            late = np.asarray(self._late_sups[d])
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(early > 0, late / early, np.inf)
            stats.append(
                BoundednessStat(
                    delta=d,
                    early_sup=early,
                    late_sup=late,
                    ratio=ratio,
                    median_ratio=float(np.median(ratio)),
                    q25_ratio=float(np.quantile(ratio, 0.25)),
                    q75_ratio=float(np.quantile(ratio, 0.75)),
                )
            )
        return RateReport(
            horizon=self.horizon,
            t0=self.t0,
            n_reps=n,
            tail_fraction=self.tail_fraction,
            windows=self.windows,
            tail_slope=slope,
            per_rep_slopes=np.asarray(self._slopes),
            zero_points_excluded=self._excluded + excl,
            boundedness=tuple(stats),
        )


def rate_fit(
    trajectories: Sequence[Trajectory],
    root,
    deltas: Sequence[float],
    tail_fraction: float = 0.5,
    windows: Tuple[Tuple[float, float], Tuple[float, float]] = DEFAULT_WINDOWS,
) -> RateReport:
    """Tail log-log slope and nested-window boundedness statistics.

    All trajectories must be completed and of equal length; exact zero errors
    are excluded from log fits and counted in the report.  Aggregation is
    symmetric in the replications."""
    if not trajectories:
        raise DomainError("no trajectories given")
    T = len(trajectories[0])
    for tr in trajectories:
        if not tr.status.completed:
            raise DomainError("rate_fit requires completed trajectories")
        if len(tr) != T:
            raise DomainError("trajectories must have equal length")
    acc = RateAccumulator(T, deltas, tail_fraction, windows, t0=int(trajectories[0].steps[0]))
    for tr in trajectories:
        acc.add(tr.err_sq(root))
    return acc.report()


def adt_partial_sum(a_fn: Callable[[int], float], N: int) -> float:
    """Partial sum sum_{t=1}^{N} [ (a_{t+1} - a_t - 1) / a_t ]^+ for a positive
    non-decreasing sequence.  Sequences growing fast enough that sum 1/a_t
    converges make this diverge, which is the numeric signature that the
    step-size growth condition fails."""
    if N < 1:
        raise DomainError("N must be >= 1")
    total = 0.0
    a_prev = float(a_fn(1))
    if a_prev <= 0:
        raise DomainError("a_t must be positive")
    for t in range(1, int(N) + 1):
        a_next = float(a_fn(t + 1))
        if a_next <= 0:
            raise DomainError("a_t must be positive")
        if a_next < a_prev:
            raise DomainError("a_t must be non-decreasing")
        term = (a_next - a_prev - 1.0) / a_prev
        if term > 0:
            total += term
        a_prev = a_next
    return total
