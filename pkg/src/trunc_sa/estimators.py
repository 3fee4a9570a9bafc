"""Online parameter estimation for AR(m) processes.

Recursive least squares, recursive maximum likelihood with a general
innovation score, robust clipped-residual procedures with truncation, and the
generic linear recursion z <- z + gamma_t (h_t - beta_t z).  The running
inverse information matrix is maintained by rank-one (Sherman-Morrison)
updates with explicit symmetrization to suppress floating-point drift.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import integrate, stats
from scipy.signal import lfilter, lfiltic

from .engine import COMPLETED, DEFAULT_OVERFLOW, Diverged, NoiseField, RunStatus, _rng
from .errors import DomainError
from .truncation import TruncationSchedule, _vector

__all__ = [
    "ARModel",
    "ARSeries",
    "EstimatorState",
    "LinearProcedureSpec",
    "initial_state",
    "simulate_ar",
    "sherman_morrison_update",
    "rls_step",
    "rml_step",
    "robust_step",
    "linear_step",
    "g1_matrix",
    "huber_psi",
    "gaussian_score",
    "student_score",
    "score_information",
    "RunningMAD",
]

_AR_INNOVATIONS = ("zero", "iid-gaussian", "iid-student", "variance-growth")


@dataclass(frozen=True, eq=False)
class ARModel:
    """AR(m) data-generating process X_t = theta . (X_{t-1},...,X_{t-m}) + xi_t.

    ``presample`` holds (X_0, X_{-1}, ..., X_{1-m}), most recent first;
    defaults to zeros."""

    theta: np.ndarray
    innovation: NoiseField
    presample: Optional[np.ndarray] = None
    overflow: float = DEFAULT_OVERFLOW

    def __post_init__(self):
        th = _vector(self.theta, "theta")
        if th.size < 1 or not np.isfinite(th).all():
            raise DomainError("theta must be a finite vector with m >= 1")
        object.__setattr__(self, "theta", th)
        if self.innovation.kind not in _AR_INNOVATIONS:
            raise DomainError(
                f"innovation family '{self.innovation.kind}' is not state-free"
            )
        pre = self.presample
        pre = np.zeros(th.size) if pre is None else _vector(pre, "presample")
        if pre.size != th.size:
            raise DomainError("presample must supply m initial values")
        object.__setattr__(self, "presample", pre)

    @property
    def order(self) -> int:
        return int(self.theta.size)

    def is_stationary(self) -> bool:
        """Characteristic roots of 1 - theta_1 z - ... - theta_m z^m outside
        the unit circle (equivalently, companion eigenvalues inside)."""
        comp = np.roots(np.concatenate(([1.0], -self.theta)))
        return bool(np.all(np.abs(comp) < 1.0))


@dataclass(frozen=True, eq=False)
class ARSeries:
    """Simulated observations X_1..X_T (truncated early on overflow)."""

    values: np.ndarray
    status: RunStatus

    def __len__(self) -> int:
        return int(self.values.size)


def simulate_ar(model: ARModel, T: int, seed) -> ARSeries:
    """Simulate X_1..X_T; deterministic given the seed.

    The recursion is an IIR filter with coefficients (1, -theta), so the
    series is produced by ``scipy.signal.lfilter`` with initial conditions
    matching the presample values."""
    if T < 1:
        raise DomainError("T must be >= 1")
    rng = _rng(seed)
    xi = model.innovation.series(int(T), 1, rng)[:, 0]
    b = np.array([1.0])
    a = np.concatenate(([1.0], -model.theta))
    if np.any(model.presample != 0.0):
        zi = lfiltic(b, a, y=model.presample)
        x, _ = lfilter(b, a, xi, zi=zi)
    else:
        x = lfilter(b, a, xi)
    bad = ~np.isfinite(x) | (np.abs(x) > model.overflow)
    if np.any(bad):
        k = int(np.argmax(bad))  # first offending index, step k+1
        return ARSeries(values=x[:k], status=RunStatus("diverged", k + 1))
    return ARSeries(values=x, status=COMPLETED)


@dataclass(frozen=True, eq=False)
class EstimatorState:
    """Running estimate and inverse information matrix after step t."""

    theta: np.ndarray
    fisher_inv: np.ndarray
    t: int = 0

    def __post_init__(self):
        th = _vector(self.theta, "theta")
        object.__setattr__(self, "theta", th)
        fi = np.asarray(self.fisher_inv, dtype=float)
        if fi.ndim == 0:
            fi = fi.reshape(1, 1)
        if fi.shape != (th.size, th.size):
            raise DomainError("fisher_inv must be m x m")
        if not np.isfinite(fi).all():
            raise DomainError("fisher_inv must be finite")
        object.__setattr__(self, "fisher_inv", fi)


def initial_state(m: int, theta0=None, fisher_inv0=None) -> EstimatorState:
    """Fresh state: theta0 defaults to zeros, fisher_inv0 to the identity."""
    th = np.zeros(m) if theta0 is None else _vector(theta0, "theta0")
    if th.size != m:
        raise DomainError("theta0 must have length m")
    if fisher_inv0 is None:
        fi = np.eye(m)
    else:
        fi = np.asarray(fisher_inv0, dtype=float)
        if fi.ndim == 0:
            fi = float(fi) * np.eye(m)
    return EstimatorState(theta=th, fisher_inv=fi, t=0)


def sherman_morrison_update(fisher_inv: np.ndarray, x: np.ndarray, factor: float = 1.0) -> np.ndarray:
    """Inverse of (P^-1 + factor * x x^T) from P, symmetrized.

    The denominator 1 + factor * x^T P x stays >= 1 for factor >= 0 and SPD P,
    so the update never divides by a small number."""
    P = np.asarray(fisher_inv, dtype=float)
    xv = _vector(x, "x")
    Px = P @ xv
    denom = 1.0 + factor * float(xv @ Px)
    out = P - (factor / denom) * np.outer(Px, Px)
    return (out + out.T) / 2.0


def rls_step(state: EstimatorState, x_window, x_new: float) -> EstimatorState:
    """Recursive least squares: rank-one information update, then the
    innovation correction theta += I_t^{-1} x (X_t - x . theta)."""
    x = _vector(x_window, "x_window")
    if x.size != state.theta.size:
        raise DomainError("regressor window must have length m")
    new_inv = sherman_morrison_update(state.fisher_inv, x, 1.0)
    resid = float(x_new) - float(x @ state.theta)
    theta = state.theta + new_inv @ x * resid
    return EstimatorState(theta=theta, fisher_inv=new_inv, t=state.t + 1)


def rml_step(
    state: EstimatorState,
    x_window,
    x_new: float,
    score: Callable[[float], float],
    l_g: float,
) -> EstimatorState:
    """Recursive likelihood step for a general innovation density.

    ``score`` is minus the log-density derivative of the innovation law
    (so gaussian sigma=1 gives score(u) = u and the step reduces to RLS) and
    ``l_g`` its Fisher information, which scales the rank-one information
    update."""
    if not (l_g > 0):
        raise DomainError("l_g must be positive")
    x = _vector(x_window, "x_window")
    if x.size != state.theta.size:
        raise DomainError("regressor window must have length m")
    new_inv = sherman_morrison_update(state.fisher_inv, x, float(l_g))
    resid = float(x_new) - float(x @ state.theta)
    theta = state.theta + new_inv @ x * float(score(resid))
    return EstimatorState(theta=theta, fisher_inv=new_inv, t=state.t + 1)


def robust_step(
    state: EstimatorState,
    x_window,
    x_new: float,
    psi: Callable[[float], float],
    step_matrix: Optional[np.ndarray] = None,
    schedule: Optional[TruncationSchedule] = None,
    t: Optional[int] = None,
    aux=None,
) -> EstimatorState:
    """Clipped-residual update with optional truncation.

    theta <- Proj_{U_t}( theta + M x psi(X_t - x . theta) ), where M is
    ``step_matrix`` or, when omitted, the freshly updated inverse information
    matrix (making psi = identity coincide with RLS).  The information matrix
    is maintained either way."""
    x = _vector(x_window, "x_window")
    if x.size != state.theta.size:
        raise DomainError("regressor window must have length m")
    new_inv = sherman_morrison_update(state.fisher_inv, x, 1.0)
    M = new_inv if step_matrix is None else np.asarray(step_matrix, dtype=float)
    if M.shape != (x.size, x.size):
        raise DomainError("step_matrix must be m x m")
    resid = float(x_new) - float(x @ state.theta)
    theta = state.theta + M @ x * float(psi(resid))
    if not np.isfinite(theta).all():
        raise Diverged(state.t + 1)
    if schedule is not None:
        if t is None:
            raise DomainError("a truncation schedule requires the step index t")
        theta = schedule.region_at(int(t), aux).project(theta)
    return EstimatorState(theta=theta, fisher_inv=new_inv, t=state.t + 1)


@dataclass(frozen=True, eq=False)
class LinearProcedureSpec:
    """Time-indexed data for the linear recursion z <- z + gamma_t (h_t - beta_t z).

    ``gamma_fn(t)`` must be SPD, ``beta_fn(t)`` positive semi-definite, and the
    driving vectors satisfy E{h_t | past} = beta_t root by construction."""

    gamma_fn: Callable[[int], np.ndarray]
    beta_fn: Callable[[int], np.ndarray]
    root: np.ndarray
    h_fn: Optional[Callable[[int], np.ndarray]] = None

    def __post_init__(self):
        object.__setattr__(self, "root", _vector(self.root, "root"))


def linear_step(spec: LinearProcedureSpec, t: int, z_prev, h_t) -> np.ndarray:
    """One step of the linear procedure at step index t."""
    z = _vector(z_prev, "z_prev")
    h = _vector(h_t, "h_t")
    g = np.asarray(spec.gamma_fn(int(t)), dtype=float)
    b = np.asarray(spec.beta_fn(int(t)), dtype=float)
    m = z.size
    if h.size != m or g.shape != (m, m) or b.shape != (m, m):
        raise DomainError("dimension mismatch in linear procedure step")
    return z + g @ (h - b @ z)


def g1_matrix(gamma_prev, gamma_curr, beta) -> np.ndarray:
    """The drift matrix (gamma_curr^-1 - gamma_prev^-1) - 2 beta + beta gamma_curr beta.

    When the inverse-step increments equal beta, this collapses to
    gamma_prev^-1 (gamma_curr - gamma_prev) gamma_prev^-1, which is negative
    semi-definite."""
    gp = np.asarray(gamma_prev, dtype=float)
    gc = np.asarray(gamma_curr, dtype=float)
    bt = np.asarray(beta, dtype=float)
    if gp.ndim == 0:
        gp = gp.reshape(1, 1)
    if gc.ndim == 0:
        gc = gc.reshape(1, 1)
    if bt.ndim == 0:
        bt = bt.reshape(1, 1)
    try:
        gp_inv = np.linalg.inv(gp)
        gc_inv = np.linalg.inv(gc)
    except np.linalg.LinAlgError as exc:
        raise DomainError("step matrices must be invertible") from exc
    out = (gc_inv - gp_inv) - 2.0 * bt + bt @ gc @ bt
    return (out + out.T) / 2.0


# ---------------------------------------------------------------------------
# Innovation scores and robust helpers
# ---------------------------------------------------------------------------


def gaussian_score(sigma: float = 1.0) -> Callable[[float], float]:
    """Minus log-density derivative of N(0, sigma^2): u / sigma^2."""
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    s2 = float(sigma) ** 2
    return lambda u: u / s2


def student_score(nu: float, scale: float = 1.0) -> Callable[[float], float]:
    """Minus log-density derivative of a scaled Student-t:
    (nu + 1) u / (nu scale^2 + u^2)."""
    if nu <= 2 or scale <= 0:
        raise DomainError("student score requires nu > 2 and scale > 0")
    ns2 = float(nu) * float(scale) ** 2
    np1 = float(nu) + 1.0
    return lambda u: np1 * u / (ns2 + u * u)


def score_information(
    score: Callable[[float], float],
    pdf: Callable[[float], float],
    tol: float = 1e-10,
) -> float:
    """Fisher information integral of the score against its density,
    by adaptive quadrature over the real line."""
    val, _err = integrate.quad(
        lambda u: score(u) ** 2 * pdf(u), -np.inf, np.inf, epsabs=tol, epsrel=tol
    )
    if not (val > 0) or not np.isfinite(val):
        raise DomainError("score information must be positive and finite")
    return float(val)


def innovation_score(noise: NoiseField) -> Tuple[Callable[[float], float], float]:
    """(score, information) pair for a state-free innovation family."""
    if noise.kind == "iid-gaussian":
        if noise.sigma <= 0:
            raise DomainError("degenerate gaussian innovation has no score")
        return gaussian_score(noise.sigma), 1.0 / noise.sigma**2
    if noise.kind == "iid-student":
        sc = student_score(noise.nu, noise.scale)
        pdf = stats.t(df=noise.nu, scale=noise.scale).pdf
        return sc, score_information(sc, pdf)
    raise DomainError(f"no likelihood score for innovation family '{noise.kind}'")


def huber_psi(clip: float) -> Callable[[float], float]:
    """Identity inside [-clip, clip], saturated outside."""
    if clip <= 0:
        raise DomainError("clip must be positive")
    c = float(clip)
    return lambda u: -c if u < -c else c if u > c else u


class RunningMAD:
    """Streaming robust scale estimate.

    Tracks the median of |residual| by a decreasing-gain sign recursion and
    scales by 1.4826 (gaussian consistency).  O(1) memory; intended to set
    Huber clip levels, not to be an exact windowed MAD."""

    _CONSISTENCY = 1.4826

    def __init__(self, initial: float = 1.0):
        if initial <= 0:
            raise DomainError("initial scale must be positive")
        self._med = float(initial)
        self._n = 0

    def update(self, residual: float) -> None:
        self._n += 1
        gain = 1.0 / self._n**0.75  # slow decay reacts to scale drift
        x = abs(float(residual))
        self._med += gain if x > self._med else -gain if x < self._med else 0.0
        if self._med < 1e-12:
            self._med = 1e-12

    @property
    def scale(self) -> float:
        return self._CONSISTENCY * self._med
