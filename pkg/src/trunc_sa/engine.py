"""Truncated stochastic approximation engine.

Runs the projected root-finding recursion

    Z_t = Proj_{U_t}( Z_{t-1} + gamma_t(Z_{t-1}) * [R_t(Z_{t-1}) + eps_t(Z_{t-1})] )

with seeded, replication-independent random streams.  A trajectory is a pure
function of (problem, seed): replication ``r`` draws from the child stream
``SeedSequence(base_seed, spawn_key=(r,))`` (PCG64), so sweeps give identical
results regardless of execution order.  Bit-exactness is per platform, not
across platforms.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Union

import numpy as np

from .errors import DomainError, UnsupportedNoiseError
from .truncation import TruncationSchedule, _vector

__all__ = [
    "StepSizePolicy",
    "RegressionField",
    "NoiseField",
    "SAProblem",
    "Trajectory",
    "RunStatus",
    "Diverged",
    "sa_step",
    "run",
    "replicate",
    "iter_replicates",
    "derive_seed",
]

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]

DEFAULT_OVERFLOW = 1e12

# Probe step indices used to verify R_t(root) = 0 at construction.
_ROOT_PROBE_STEPS = (1, 2, 3, 17, 101)
_ROOT_PROBE_TOL = 1e-12


def derive_seed(base_seed: int, index: int) -> np.random.SeedSequence:
    """Independent child seed for replication ``index``."""
    return np.random.SeedSequence(int(base_seed), spawn_key=(int(index),))


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class Diverged(Exception):
    """Signal that an update overflowed (non-finite intermediate or a
    coordinate beyond the overflow bound) at step ``step``."""

    def __init__(self, step: int):
        super().__init__(f"diverged at step {step}")
        self.step = int(step)


@dataclass(frozen=True)
class RunStatus:
    kind: str  # "completed" | "diverged" | "rejected"
    step: Optional[int] = None

    @property
    def completed(self) -> bool:
        return self.kind == "completed"


COMPLETED = RunStatus("completed")


@dataclass(frozen=True, eq=False)
class StepSizePolicy:
    """Step-size sequence gamma_t(z).

    Scalar families (harmonic, power decay) expose ``a(t)`` with
    gamma_t = I / a(t); matrix families return a full m x m matrix.
    ``gamma`` returns a float for scalar families so hot loops can avoid
    building identity matrices.
    """

    kind: str  # "harmonic" | "power" | "matrix" | "custom"
    epsilon: float = 1.0
    matrix_fn: Optional[Callable[[int, np.ndarray], np.ndarray]] = None

    @classmethod
    def harmonic(cls) -> "StepSizePolicy":
        return cls(kind="harmonic", epsilon=1.0)

    @classmethod
    def power_decay(cls, epsilon: float) -> "StepSizePolicy":
        e = float(epsilon)
        if not (0.5 < e <= 1.0):
            raise DomainError("power-decay exponent must lie in (1/2, 1]")
        return cls(kind="power", epsilon=e)

    @classmethod
    def matrix_recursive(cls, supplier: Callable[[int, np.ndarray], np.ndarray]) -> "StepSizePolicy":
        """Matrix step sizes supplied externally (e.g. a running inverse
        information matrix)."""
        return cls(kind="matrix", matrix_fn=supplier)

    @classmethod
    def custom(cls, fn: Callable[[int, np.ndarray], np.ndarray]) -> "StepSizePolicy":
        return cls(kind="custom", matrix_fn=fn)

    @property
    def scalar(self) -> bool:
        return self.kind in ("harmonic", "power")

    def a(self, t: int) -> float:
        """Inverse scalar gain a_t (gamma_t = I / a_t); scalar families only."""
        if self.kind == "harmonic":
            return float(t)
        if self.kind == "power":
            return float(t) ** self.epsilon
        raise DomainError(f"a(t) undefined for step policy kind '{self.kind}'")

    def gamma(self, t: int, z: np.ndarray):
        """Step size at (t, z): a float for scalar families, else an m x m matrix."""
        if self.scalar:
            return 1.0 / self.a(t)
        g = np.asarray(self.matrix_fn(t, z), dtype=float)
        m = z.size
        if g.shape != (m, m):
            raise DomainError(f"step matrix must be {m}x{m}, got {g.shape}")
        if not np.isfinite(g).all():
            raise DomainError("step matrix must be finite")
        return g

    def gamma_matrix(self, t: int, z: np.ndarray) -> np.ndarray:
        g = self.gamma(t, z)
        if np.ndim(g) == 0:
            return float(g) * np.eye(z.size)
        return g


@dataclass(frozen=True, eq=False)
class RegressionField:
    """Mean drift field R_t(z) with an optional declared root.

    When a root is declared, R_t(root) = 0 is verified numerically at
    construction on a probe set of step indices.
    """

    kind: str  # "linear" | "polynomial" | "custom"
    fn: Callable[[int, np.ndarray], np.ndarray]
    root: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    coeffs: Optional[np.ndarray] = None

    def __call__(self, t: int, z: np.ndarray) -> np.ndarray:
        return self.fn(t, z)

    @staticmethod
    def _check_root(fn, root: np.ndarray) -> None:
        for t in _ROOT_PROBE_STEPS:
            val = np.atleast_1d(np.asarray(fn(t, root), dtype=float))
            if np.max(np.abs(val)) > _ROOT_PROBE_TOL:
                raise DomainError(
                    f"field does not vanish at the declared root (|R_{t}(root)| = {np.max(np.abs(val)):.3e})"
                )

    @classmethod
    def linear(cls, beta, root) -> "RegressionField":
        """R(z) = -beta (z - root); ``beta`` is a positive scalar or an m x m matrix."""
        rv = _vector(root, "root")
        b = np.asarray(beta, dtype=float)
        if b.ndim == 0:
            if b <= 0:
                raise DomainError("linear field slope must be positive")
            fn = lambda t, z, _b=float(b), _r=rv: -_b * (z - _r)
        elif b.shape == (rv.size, rv.size):
            fn = lambda t, z, _b=b, _r=rv: -(_b @ (z - _r))
        else:
            raise DomainError("beta must be a scalar or an m x m matrix")
        return cls(kind="linear", fn=fn, root=rv, beta=b)

    @classmethod
    def polynomial(cls, coeffs, root: float) -> "RegressionField":
        """One-dimensional R(z) = -sum_i C_i (z - root)^i, i = 1..l (Horner form)."""
        cs = np.asarray(coeffs, dtype=float)
        if cs.ndim != 1 or cs.size < 1 or not np.isfinite(cs).all():
            raise DomainError("polynomial coefficients must be a finite 1-D sequence")
        rv = _vector(root, "root")
        if rv.size != 1:
            raise DomainError("polynomial fields are one-dimensional")

        def fn(t, z, _cs=cs[::-1], _r=rv):
            d = z - _r
            acc = np.zeros_like(d)
            for c in _cs:
                acc = d * (c + acc)
            return -acc

        return cls(kind="polynomial", fn=fn, root=rv, coeffs=cs)

    @classmethod
    def custom(cls, fn: Callable[[int, np.ndarray], np.ndarray], root=None) -> "RegressionField":
        rv = None
        if root is not None:
            rv = _vector(root, "root")
            cls._check_root(fn, rv)
        return cls(kind="custom", fn=fn, root=rv)


_STATE_FREE_NOISE = ("zero", "iid-gaussian", "iid-student", "variance-growth")


@dataclass(frozen=True, eq=False)
class NoiseField:
    """Centered measurement-noise family eps_t(z).

    Every named family has zero conditional mean by construction.  For each
    family the base variates are state-independent, so a run can pre-draw the
    whole horizon in one batch; numpy generators produce identical streams for
    batched and stepwise draws, so the two are interchangeable.
    """

    kind: str  # "zero" | "iid-gaussian" | "iid-student" | "state-scaled" | "variance-growth" | "custom"
    sigma: float = 1.0
    nu: float = 0.0
    scale: float = 1.0
    eps0: float = 0.0
    root: Optional[np.ndarray] = None
    fn: Optional[Callable[[int, np.ndarray, np.random.Generator], np.ndarray]] = None
    cov_fn: Optional[Callable[[int, np.ndarray], np.ndarray]] = None

    @classmethod
    def zero(cls) -> "NoiseField":
        return cls(kind="zero")

    @classmethod
    def gaussian(cls, sigma: float) -> "NoiseField":
        if sigma < 0:
            raise DomainError("sigma must be non-negative")
        return cls(kind="iid-gaussian", sigma=float(sigma))

    @classmethod
    def student(cls, nu: float, scale: float = 1.0) -> "NoiseField":
        if nu <= 2:
            raise DomainError("student noise requires nu > 2 (finite variance)")
        if scale <= 0:
            raise DomainError("student scale must be positive")
        return cls(kind="iid-student", nu=float(nu), scale=float(scale))

    @classmethod
    def state_scaled(cls, sigma: float, root) -> "NoiseField":
        """eps_t(z) = sigma * (1 + ||z - root||) * N(0, I)."""
        if sigma < 0:
            raise DomainError("sigma must be non-negative")
        return cls(kind="state-scaled", sigma=float(sigma), root=_vector(root, "root"))

    @classmethod
    def variance_growth(cls, sigma: float = 1.0, eps0: float = 0.0) -> "NoiseField":
        """i.i.d. gaussian with growing variance sigma_t^2 = sigma^2 * t^eps0."""
        if sigma < 0:
            raise DomainError("sigma must be non-negative")
        if not (0.0 <= eps0 < 1.0):
            raise DomainError("variance growth exponent must lie in [0, 1)")
        return cls(kind="variance-growth", sigma=float(sigma), eps0=float(eps0))

    @classmethod
    def custom(cls, fn, cov_fn=None) -> "NoiseField":
        return cls(kind="custom", fn=fn, cov_fn=cov_fn)

    @property
    def presamples(self) -> bool:
        return self.kind != "custom"

    @property
    def state_dependent(self) -> bool:
        return self.kind in ("state-scaled", "custom")

    def draws_per_step(self, m: int) -> int:
        """Scalar base variates consumed per step."""
        if self.kind == "zero":
            return 0
        if self.kind == "custom":
            raise UnsupportedNoiseError("draw accounting undefined for custom noise")
        return int(m)

    def presample(self, T: int, m: int, rng: np.random.Generator) -> np.ndarray:
        """Base variates for steps 1..T, shape (T, m)."""
        if self.kind == "zero":
            return np.zeros((T, m))
        if self.kind == "iid-student":
            return rng.standard_t(self.nu, size=(T, m))
        if self.kind in ("iid-gaussian", "variance-growth", "state-scaled"):
            return rng.standard_normal((T, m))
        raise UnsupportedNoiseError("custom noise cannot be presampled")

    def value(self, t: int, z: np.ndarray, base_row: np.ndarray) -> np.ndarray:
        """Noise at (t, z) given the step's base variates."""
        if self.kind == "zero":
            return base_row
        if self.kind == "iid-gaussian":
            return self.sigma * base_row
        if self.kind == "iid-student":
            return self.scale * base_row
        if self.kind == "variance-growth":
            return self.sigma * float(t) ** (self.eps0 / 2.0) * base_row
        if self.kind == "state-scaled":
            return self.sigma * (1.0 + float(np.linalg.norm(z - self.root))) * base_row
        raise UnsupportedNoiseError("custom noise has no base-variate transform")

    def series(self, T: int, m: int, rng: np.random.Generator) -> Optional[np.ndarray]:
        """Full noise array for state-independent families, else None."""
        if self.state_dependent:
            return None
        base = self.presample(T, m, rng)
        if self.kind == "zero":
            return base
        if self.kind == "iid-gaussian":
            return self.sigma * base
        if self.kind == "iid-student":
            return self.scale * base
        t = np.arange(1, T + 1, dtype=float)[:, None]
        return self.sigma * t ** (self.eps0 / 2.0) * base

    def sample(self, t: int, z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw one step of noise from the stream."""
        if self.kind == "custom":
            return np.atleast_1d(np.asarray(self.fn(t, z, rng), dtype=float))
        return self.value(t, z, self.presample(1, z.size, rng)[0])

    def covariance(self, t: int, v: np.ndarray) -> np.ndarray:
        """Closed-form conditional covariance at (t, v)."""
        v = _vector(v, "v")
        m = v.size
        if self.kind == "zero":
            return np.zeros((m, m))
        if self.kind == "iid-gaussian":
            return self.sigma**2 * np.eye(m)
        if self.kind == "iid-student":
            return self.scale**2 * self.nu / (self.nu - 2.0) * np.eye(m)
        if self.kind == "variance-growth":
            return self.sigma**2 * float(t) ** self.eps0 * np.eye(m)
        if self.kind == "state-scaled":
            s = self.sigma * (1.0 + float(np.linalg.norm(v - self.root)))
            return s**2 * np.eye(m)
        if self.cov_fn is not None:
            return np.asarray(self.cov_fn(t, v), dtype=float)
        raise UnsupportedNoiseError(f"no closed-form covariance for noise family '{self.kind}'")


@dataclass(frozen=True, eq=False)
class SAProblem:
    """A complete stochastic approximation problem instance."""

    dim: int
    z_start: np.ndarray
    step: StepSizePolicy
    field: RegressionField
    noise: NoiseField
    schedule: TruncationSchedule
    root: Optional[np.ndarray] = None
    overflow: float = DEFAULT_OVERFLOW

    def __post_init__(self):
        z0 = _vector(self.z_start, "z_start")
        object.__setattr__(self, "z_start", z0)
        if z0.size != self.dim:
            raise DomainError(f"z_start has dimension {z0.size}, expected {self.dim}")
        if not np.isfinite(z0).all():
            raise DomainError("z_start must be finite")
        if self.schedule.dim != self.dim:
            raise DomainError("schedule dimension does not match the problem")
        root = self.root if self.root is not None else self.field.root
        if root is not None:
            root = _vector(root, "root")
            if root.size != self.dim:
                raise DomainError("root dimension does not match the problem")
        object.__setattr__(self, "root", root)
        if not (self.overflow > 0):
            raise DomainError("overflow bound must be positive")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-indexed record of a run: steps t = 1, 2, ... and the iterates Z_t.

    ``projected[i]`` flags steps where the truncation actually moved the point.
    A diverged/rejected run is truncated before the failing step, which is
    recorded in ``status.step``.
    """

    steps: np.ndarray
    values: np.ndarray
    projected: np.ndarray
    status: RunStatus

    def __len__(self) -> int:
        return int(self.steps.size)

    @property
    def final(self) -> np.ndarray:
        if self.steps.size == 0:
            raise DomainError("empty trajectory has no final value")
        return self.values[-1]

    def err_sq(self, root) -> np.ndarray:
        """||Z_t - root||^2 for each recorded step."""
        rv = _vector(root, "root")
        return np.sum((self.values - rv) ** 2, axis=1)

    def to_csv(self, path, root=None) -> None:
        m = self.values.shape[1]
        err = self.err_sq(root) if root is not None else None
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"z_{i + 1}" for i in range(m)] + ["norm2", "projected"])
            for i, t in enumerate(self.steps):
                row = [int(t)] + [repr(float(v)) for v in self.values[i]]
                row.append(repr(float(err[i])) if err is not None else "")
                row.append(int(self.projected[i]))
                w.writerow(row)

    def summary(self, root=None) -> dict:
        out = {
            "status": self.status.kind,
            "failed_step": self.status.step,
            "steps_recorded": len(self),
            "projection_active_steps": int(np.sum(self.projected)),
        }
        if len(self):
            out["terminal"] = [float(v) for v in self.values[-1]]
            if root is not None:
                e = self.err_sq(root)
                out["terminal_err_sq"] = float(e[-1])
                out["max_err_sq"] = float(np.max(e))
                out["mean_err_sq"] = float(np.mean(e))
        return out

    def summary_json(self, path, root=None) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(root), fh, indent=2)


def _update_once(problem: SAProblem, t: int, z: np.ndarray, eps: np.ndarray):
    """One projected update from the already-drawn noise.  Returns
    (new point, projection-active flag); raises Diverged on overflow."""
    g = problem.step.gamma(t, z)
    drive = problem.field(t, z) + eps
    y = z + (g * drive if np.ndim(g) == 0 else g @ drive)
    if not np.isfinite(y).all():
        raise Diverged(t)
    region = problem.schedule.region_at(t)
    z_new = region.project(y)
    moved = region.kind != "whole-space" and not np.array_equal(z_new, y)
    if np.any(np.abs(z_new) > problem.overflow):
        raise Diverged(t)
    return z_new, moved


def sa_step(problem: SAProblem, t: int, z_prev, stream: SeedLike) -> np.ndarray:
    """A single recursion step: draw one step of noise from ``stream``, apply
    the additive update, then project onto U_t.  Raises ``Diverged`` if any
    intermediate is non-finite or the result exceeds the overflow bound."""
    if t < 1:
        raise DomainError("step index starts at 1")
    z = _vector(z_prev, "z_prev")
    if z.size != problem.dim:
        raise DomainError("z_prev dimension does not match the problem")
    if not np.isfinite(z).all():
        raise DomainError("z_prev must be finite")
    eps = problem.noise.sample(t, z, _rng(stream))
    z_new, _ = _update_once(problem, t, z, eps)
    return z_new


def _finish(values: list, flags: list, status: RunStatus, dim: int) -> Trajectory:
    n = len(values)
    vals = np.asarray(values, dtype=float).reshape(n, dim) if n else np.empty((0, dim))
    return Trajectory(
        steps=np.arange(1, n + 1, dtype=np.int64),
        values=vals,
        projected=np.asarray(flags, dtype=bool),
        status=status,
    )


def _run_generic(problem: SAProblem, T: int, rng: np.random.Generator) -> Trajectory:
    z = problem.z_start.astype(float).copy()
    m = problem.dim
    base = problem.noise.presample(T, m, rng) if problem.noise.presamples else None
    values: list = []
    flags: list = []
    status = COMPLETED
    for t in range(1, T + 1):
        try:
            if base is not None:
                eps = problem.noise.value(t, z, base[t - 1])
            else:
                eps = problem.noise.sample(t, z, rng)
            z, moved = _update_once(problem, t, z, eps)
        except Diverged as d:
            status = RunStatus("diverged", d.step)
            break
        except DomainError:
            status = RunStatus("rejected", t)
            break
        values.append(z.copy())
        flags.append(moved)
    return _finish(values, flags, status, m)


def _fast_eligible(problem: SAProblem) -> bool:
    if problem.dim != 1 or not problem.step.scalar:
        return False
    if problem.field.kind not in ("linear", "polynomial"):
        return False
    if problem.field.kind == "linear" and np.ndim(problem.field.beta) != 0:
        return False
    if problem.noise.kind not in _STATE_FREE_NOISE and problem.noise.kind != "state-scaled":
        return False
    fam = problem.schedule.family
    if fam in ("expanding-box",):
        return True
    if fam == "constant":
        return problem.schedule.region_at(1).kind in ("whole-space", "box")
    return False


def _run_fast_1d(problem: SAProblem, T: int, rng: np.random.Generator) -> Trajectory:
    """Scalar hot loop for the named 1-D families; same update order and
    arithmetic as the generic path, plain floats throughout."""
    t_arr = np.arange(1, T + 1, dtype=float)
    if problem.step.kind == "harmonic":
        gam = (1.0 / t_arr).tolist()
    else:
        gam = (1.0 / t_arr**problem.step.epsilon).tolist()

    fld = problem.field
    r0 = float(fld.root[0])
    if fld.kind == "linear":
        b = float(fld.beta)
        field_fn = lambda t, z: -b * (z - r0)
    else:
        cs = tuple(float(c) for c in fld.coeffs[::-1])

        def field_fn(t, z, _cs=cs, _r=r0):
            d = z - _r
            acc = 0.0
            for c in _cs:
                acc = d * (c + acc)
            return -acc

    noise = problem.noise
    if noise.state_dependent:  # state-scaled: base normals, scale per step
        base = noise.presample(T, 1, rng)[:, 0].tolist()
        sig = noise.sigma
        nroot = float(noise.root[0])
        eps_fn = lambda i, z: sig * (1.0 + abs(z - nroot)) * base[i]
    else:
        eps_list = noise.series(T, 1, rng)[:, 0].tolist()
        eps_fn = lambda i, z: eps_list[i]

    fam = problem.schedule.family
    if fam == "constant":
        region = problem.schedule.region_at(1)
        if region.kind == "whole-space":
            lo_arr = hi_arr = None
        else:
            lo_arr = [float(region.lower[0])] * T
            hi_arr = [float(region.upper[0])] * T
    else:  # expanding-box
        lo_arr, hi_arr = [], []
        for t in range(1, T + 1):
            reg = problem.schedule.region_at(t)
            lo_arr.append(float(reg.lower[0]))
            hi_arr.append(float(reg.upper[0]))

    ob = float(problem.overflow)
    z = float(problem.z_start[0])
    values: list = []
    flags: list = []
    status = COMPLETED
    for i in range(T):
        t = i + 1
        y = z + gam[i] * (field_fn(t, z) + eps_fn(i, z))
        if not math.isfinite(y):
            status = RunStatus("diverged", t)
            break
        if lo_arr is None:
            z_new, moved = y, False
        else:
            lo, hi = lo_arr[i], hi_arr[i]
            z_new = lo if y < lo else hi if y > hi else y
            moved = z_new != y
        if abs(z_new) > ob:
            status = RunStatus("diverged", t)
            break
        z = z_new
        values.append(z)
        flags.append(moved)
    return _finish(values, flags, status, 1)


def run(problem: SAProblem, horizon: int, seed: SeedLike) -> Trajectory:
    """Iterate the recursion for up to ``horizon`` steps.

    Deterministic given (problem, seed).  The trajectory is shorter than the
    horizon exactly when a step diverged or was rejected; the terminal status
    records which and at what step.
    """
    T = int(horizon)
    if T < 1:
        raise DomainError("horizon must be >= 1")
    rng = _rng(seed)
    if _fast_eligible(problem):
        return _run_fast_1d(problem, T, rng)
    return _run_generic(problem, T, rng)


def replicate(problem: SAProblem, horizon: int, n_reps: int, base_seed: int) -> list:
    """Independent replications; replication r runs on derive_seed(base_seed, r)."""
    return list(iter_replicates(problem, horizon, n_reps, base_seed))


def iter_replicates(
    problem: SAProblem, horizon: int, n_reps: int, base_seed: int
) -> Iterator[Trajectory]:
    if n_reps < 1:
        raise DomainError("n_reps must be >= 1")
    for r in range(int(n_reps)):
        yield run(problem, horizon, derive_seed(base_seed, r))
