"""Dense small-dimension control numerics.

Everything operates on the stacked parameter convention theta = (A B)^T
with shape (n + d, n): the top n rows are A^T, the rest are B^T. Solvers
target the discrete algebraic Riccati fixed point

    P = Q + A^T P A - A^T P B (B^T P B + R)^{-1} B^T P A

with gain K = -(B^T P B + R)^{-1} B^T P A and average cost
noise_var * trace(P).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from .exceptions import NonConvergence, NotStabilizable

DIVERGENCE_CAP = 1e12
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000
RANK_TOL = 1e-9


@dataclass(frozen=True)
class SystemParam:
    """Stacked system parameter theta = (A B)^T, shape (n + d, n)."""

    theta: np.ndarray
    n: int
    d: int

    def __post_init__(self):
        theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        if theta.shape != (self.n + self.d, self.n):
            raise ValueError(
                f"theta shape {theta.shape} inconsistent with n={self.n}, d={self.d}"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta entries must be finite")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def from_ab(cls, A, B) -> "SystemParam":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.asarray(B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(A.shape[0], -1)
        if B.size == 0:
            B = B.reshape(A.shape[0], 0)
        return cls(np.vstack([A.T, B.T]), A.shape[0], B.shape[1])

    @property
    def A(self) -> np.ndarray:
        return self.theta[: self.n, :].T

    @property
    def B(self) -> np.ndarray:
        return self.theta[self.n :, :].T


@dataclass(frozen=True)
class RiccatiSolution:
    """Converged Riccati data: value matrix, gain, average cost, residual."""

    P: np.ndarray
    K: np.ndarray
    J: float
    residual: float


def _coerce_theta(theta, Q) -> SystemParam:
    if isinstance(theta, SystemParam):
        return theta
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    n = np.atleast_2d(Q).shape[0]
    return SystemParam(theta, n, theta.shape[0] - n)


def spectral_radius(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def check_controllable(theta, tol: float = RANK_TOL, Q=None) -> bool:
    """Rank test on [B, AB, ..., A^{n-1}B] with singular-value cutoff.

    Degenerate inputs (zero B, empty B) return False rather than raising.
    """
    if isinstance(theta, SystemParam):
        A, B = theta.A, theta.B
    else:
        A, B = theta
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n = A.shape[0]
    if B.shape[1] == 0:
        return False
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    sv = np.linalg.svd(np.hstack(blocks), compute_uv=False)
    if sv[0] <= 0.0:
        return False
    return int(np.sum(sv > tol * sv[0])) == n


def check_observable(A, M, tol: float = RANK_TOL) -> bool:
    """Observability of (A, M), tested as controllability of (A^T, M^T)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return check_controllable((A.T, M.T), tol=tol)


def _riccati_map(P, A, B, Q, R):
    if B.shape[1] == 0:
        return Q + A.T @ P @ A
    BPA = B.T @ P @ A
    G = B.T @ P @ B + R
    return Q + A.T @ P @ A - BPA.T @ np.linalg.solve(G, BPA)


def solve_dare(
    theta,
    Q,
    R,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    noise_var: float = 1.0,
    damping: float = 1.0,
    doubling: bool = True,
) -> RiccatiSolution:
    """Solve the discrete algebraic Riccati equation for a stacked parameter.

    Runs a structure-preserving doubling pass for speed, then damped
    fixed-point polishing until the Frobenius residual meets ``tol``.
    Raises NotStabilizable when the pair fails the controllability check
    or iterates blow past the divergence cap, NonConvergence when the
    budget runs out first. ``noise_var`` scales trace(P) into the average
    cost J.
    """
    par = _coerce_theta(theta, Q)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    A, B = par.A, par.B
    n = par.n
    if not check_controllable(par):
        raise NotStabilizable("(A, B) fails the controllability rank test")

    P = Q.copy()
    if doubling:
        Ak = A.copy()
        Gk = B @ np.linalg.solve(R, B.T)
        Hk = Q.copy()
        eye = np.eye(n)
        for _ in range(80):
            try:
                W = np.linalg.solve(eye + Gk @ Hk, np.hstack([Ak, Gk]))
            except np.linalg.LinAlgError as exc:
                raise NotStabilizable("doubling iteration became singular") from exc
            WA, WG = W[:, :n], W[:, n:]
            Hn = Hk + Ak.T @ Hk @ WA
            Gk = Gk + Ak @ WG @ Ak.T
            Ak = Ak @ WA
            Hn = 0.5 * (Hn + Hn.T)
            if not np.all(np.isfinite(Hn)) or np.linalg.norm(Hn, "fro") > DIVERGENCE_CAP:
                raise NotStabilizable("Riccati iterates diverged past the cap")
            step = np.linalg.norm(Hn - Hk, "fro")
            Hk = Hn
            if step <= 0.1 * tol:
                break
        P = Hk

    residual = np.linalg.norm(P - _riccati_map(P, A, B, Q, R), "fro")
    it = 0
    while residual > tol:
        if it >= max_iter:
            raise NonConvergence(
                f"Riccati residual {residual:.3e} > tol {tol:.3e} after {max_iter} iterations"
            )
        Pn = _riccati_map(P, A, B, Q, R)
        P = (1.0 - damping) * P + damping * Pn
        P = 0.5 * (P + P.T)
        if not np.all(np.isfinite(P)) or np.linalg.norm(P, "fro") > DIVERGENCE_CAP:
            raise NotStabilizable("Riccati iterates diverged past the cap")
        residual = np.linalg.norm(P - _riccati_map(P, A, B, Q, R), "fro")
        it += 1

    if B.shape[1] == 0:
        K = np.zeros((0, n))
    else:
        K = -np.linalg.solve(B.T @ P @ B + R, B.T @ P @ A)
    return RiccatiSolution(P=P, K=K, J=float(noise_var * np.trace(P)), residual=float(residual))


def grad_trace_P(theta, Q, R, scale: float = 1.0, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Gradient of scale * trace(P(theta)) with respect to the stacked theta.

    Differentiates the Riccati fixed point at convergence: with closed loop
    Ac = A + B K the first-order change is d trace(P) = trace(S W) where
    S collects the explicit parameter variation (the gain variation drops
    out at the optimizer) and W solves the discrete Lyapunov equation
    W = I + Ac W Ac^T. Riccati failures propagate.
    """
    par = _coerce_theta(theta, Q)
    if scale == 0.0:
        return np.zeros((par.n + par.d, par.n))
    sol = solve_dare(par, Q, R, tol=tol, max_iter=max_iter)
    Ac = par.A + par.B @ sol.K
    W = solve_discrete_lyapunov(Ac, np.eye(par.n))
    core = W @ Ac.T @ sol.P
    stack = np.vstack([np.eye(par.n), sol.K])
    return 2.0 * scale * stack @ core
