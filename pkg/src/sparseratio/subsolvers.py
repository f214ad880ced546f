"""Structured subproblem solvers shared by the outer algorithms.

Both outer loops repeatedly minimize ``||x||_1 + alpha/2 ||x - c||^2`` over a
simple set: a Euclidean ball for the moving-balls iterations, an affine set
{x : Ax = b} for the noiseless basis-pursuit style iterations. The ball case
reduces to a monotone scalar root-find in the multiplier; the affine case is
solved by operator splitting with an exact final projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .models import SensingMatrix

__all__ = [
    "BallProxProblem",
    "BallProxSolution",
    "SubsolverError",
    "soft_threshold",
    "prox_l1_ball",
    "prox_l1_affine",
    "least_norm_solution",
]

_MU_CAP = 1e18
_MAX_BISECT = 20_000
_EPS = float(np.finfo(float).eps)


class SubsolverError(RuntimeError):
    """A subproblem solver failed to reach its tolerance."""

    def __init__(self, message: str, primal: float | None = None,
                 dual: float | None = None, iterations: int | None = None):
        super().__init__(message)
        self.primal = primal
        self.dual = dual
        self.iterations = iterations


def soft_threshold(v, tau: float) -> np.ndarray:
    """Componentwise sign(v_i) * max(|v_i| - tau, 0).

    This is the proximal map of tau * ||.||_1 at v.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


@dataclass(frozen=True, eq=False)
class BallProxProblem:
    """min ||x||_1 + alpha/2 ||x - c||^2  subject to  ||x - s||^2 <= R.

    R is the squared radius. The feasible set must be nonempty (R >= 0).
    """

    c: np.ndarray
    s: np.ndarray
    R: float
    alpha: float

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        s = np.asarray(self.s, dtype=float)
        if c.ndim != 1 or s.shape != c.shape or c.size == 0:
            raise ValueError("c and s must be 1-D vectors of equal length")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(s))
                and np.isfinite(self.R) and np.isfinite(self.alpha)):
            raise ValueError("ball prox inputs must be finite")
        if self.R < 0:
            raise ValueError("R must be nonnegative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "R", float(self.R))
        object.__setattr__(self, "alpha", float(self.alpha))


@dataclass(frozen=True, eq=False)
class BallProxSolution:
    """Solution of a BallProxProblem.

    mu is the ball multiplier in the scaling where stationarity reads
    0 in subdiff||x||_1 + alpha (x - c) + mu (x - s). active records whether
    the ball constraint is tight at the solution.
    """

    x: np.ndarray
    mu: float
    active: bool
    kkt_residual: float


def _ball_x_of_mu(c, s, alpha, mu):
    return soft_threshold((alpha * c + mu * s) / (alpha + mu), 1.0 / (alpha + mu))


def _stationarity_residual(x, c, s, alpha, mu) -> float:
    smooth = alpha * (x - c) + mu * (x - s)
    per_coord = np.where(
        x != 0.0,
        np.abs(np.sign(x) + smooth),
        np.maximum(0.0, np.abs(smooth) - 1.0),
    )
    return float(per_coord.max())


def prox_l1_ball(p: BallProxProblem, tol: float = 1e-12) -> BallProxSolution:
    """Solve a BallProxProblem to high accuracy.

    The minimizer is x(mu) = soft_threshold((alpha c + mu s)/(alpha + mu),
    1/(alpha + mu)) for the unique multiplier mu >= 0 at which either the
    unconstrained prox (mu = 0) already lies in the ball, or
    phi(mu) = ||x(mu) - s||^2 - R vanishes. phi is continuous and
    nonincreasing, so the root is bracketed by doubling and then bisected
    until |phi| <= tol * max(R, 1).

    A degenerate ball (R = 0) pins the solution at x = s; the multiplier is
    not meaningful there and is reported as 0 with a zero residual.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    c, s, R, alpha = p.c, p.s, p.R, p.alpha
    if R == 0.0:
        return BallProxSolution(x=s.copy(), mu=0.0, active=True, kkt_residual=0.0)

    x0 = _ball_x_of_mu(c, s, alpha, 0.0)
    d = x0 - s
    phi0 = float(d @ d) - R
    if phi0 <= 0.0:
        kkt = _stationarity_residual(x0, c, s, alpha, 0.0)
        return BallProxSolution(x=x0, mu=0.0, active=False, kkt_residual=kkt)

    tol_phi = tol * max(R, 1.0)

    def phi(mu):
        x = _ball_x_of_mu(c, s, alpha, mu)
        d = x - s
        return float(d @ d) - R, x

    lo = 0.0
    hi = alpha
    val_hi, _ = phi(hi)
    while val_hi > 0.0:
        lo = hi
        hi *= 2.0
        if hi > _MU_CAP:
            raise SubsolverError(
                "ball multiplier bracket exceeded cap; problem scaling is "
                "pathological (R may be vanishingly small relative to the data)"
            )
        val_hi, _ = phi(hi)

    # bisect to bracket collapse rather than stopping at the first
    # |phi| <= tol_phi crossing: late outer iterations can shrink R many
    # orders of magnitude below tol*max(R, 1), where a first-crossing exit
    # returns the constraint surface unresolved
    best_val, best_mu, best_x = np.inf, None, None
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        val, x = phi(mid)
        if abs(val) < abs(best_val):
            best_val, best_mu, best_x = val, mid, x
        if val > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= _EPS * hi:
            break
    if best_mu is not None and abs(best_val) <= tol_phi:
        kkt = _stationarity_residual(best_x, c, s, alpha, best_mu)
        return BallProxSolution(x=best_x, mu=best_mu, active=True,
                                kkt_residual=kkt)
    raise SubsolverError(
        f"ball prox bisection stalled: |phi| stayed above {tol_phi:.3e}"
    )


def least_norm_solution(A: SensingMatrix, b) -> np.ndarray:
    """Minimum-Euclidean-norm solution of Ax = b.

    Uses the cached thin QR of A^T: with A^T = QR, the solution is
    Q (R^T)^{-1} b. The result is orthogonal to ker A.
    """
    if not isinstance(A, SensingMatrix):
        A = SensingMatrix(A)
    if not A.has_full_row_rank:
        raise SubsolverError("matrix is rank deficient; least-norm solve aborted")
    b = np.asarray(b, dtype=float)
    if b.shape != (A.m,):
        raise ValueError(f"b must have length {A.m}, got shape {b.shape}")
    y = solve_triangular(A.r, b, trans="T", lower=False)
    x = A.q @ y
    if not np.all(np.isfinite(x)):
        raise SubsolverError("triangular solve produced non-finite values")
    return x


def prox_l1_affine(c, A: SensingMatrix, b, alpha: float,
                   tol: float = 1e-12, max_iter: int = 200_000) -> np.ndarray:
    """min ||x||_1 + alpha/2 ||x - c||^2  subject to  Ax = b.

    Operator splitting on x = z with penalty rho = alpha:

      x-update: soft_threshold((alpha c + rho z - u) / (alpha + rho),
                               1 / (alpha + rho))
      z-update: orthogonal projection of x + u/rho onto {z : Az = b}
      u-update: u += rho (x - z)

    Stops when both the primal residual ||x - z|| and the dual residual
    rho ||z - z_prev|| fall below tol * sqrt(n); raises SubsolverError with
    the residuals attached if max_iter is hit first. The returned point is
    the exact affine projection of the final x, so A x_hat = b holds to
    machine precision regardless of where the splitting stopped.
    """
    if not isinstance(A, SensingMatrix):
        A = SensingMatrix(A)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be positive")
    c = np.asarray(c, dtype=float)
    if c.shape != (A.n,):
        raise ValueError(f"c must have length {A.n}, got shape {c.shape}")

    x_ln = least_norm_solution(A, b)
    Q = A.q

    def project(v):
        # (I - Q Q^T) v + A^+ b
        return v - Q @ (Q.T @ v) + x_ln

    rho = alpha
    z = project(c)
    u = np.zeros(A.n)
    thresh = tol * np.sqrt(A.n)
    inv_tau = 1.0 / (alpha + rho)

    for it in range(max_iter):
        x = soft_threshold((alpha * c + rho * z - u) * inv_tau, inv_tau)
        z_new = project(x + u / rho)
        u = u + rho * (x - z_new)
        primal = float(np.linalg.norm(x - z_new))
        dual = rho * float(np.linalg.norm(z_new - z))
        z = z_new
        if primal <= thresh and dual <= thresh:
            return project(x)
    raise SubsolverError(
        f"affine prox splitting did not converge in {max_iter} iterations "
        f"(primal={primal:.3e}, dual={dual:.3e}, threshold={thresh:.3e})",
        primal=primal, dual=dual, iterations=max_iter,
    )
