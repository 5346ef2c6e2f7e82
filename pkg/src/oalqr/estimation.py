"""Online regularized least squares with self-normalized confidence sets.

An estimator tracks the Gram matrix V = lambda I + sum z z^T and the
cross moment sum z x^T for regressors z = (state; applied input). Its
center minimizes the l2-regularized squared prediction loss, and the
squared radius beta follows the self-normalized determinant bound. Two
radius flavors exist: the per-mode set keeps the state and input
dimensions inside the log terms and carries an extra term for noise
leaking through unused actuators, while the central (full-actuation)
set drops both.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DimensionMismatch, NonConvergence, NumericalDomain
from .riccati import SystemParam


@dataclass(frozen=True)
class RegressorSample:
    """One transition: stacked regressor z and the observed next state."""

    z: np.ndarray
    x_next: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).ravel()
        x = np.asarray(self.x_next, dtype=float).ravel()
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(x))):
            raise ValueError("sample entries must be finite")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x_next", x)


@dataclass(frozen=True)
class RadiusSpec:
    """Parameters of the confidence radius formula.

    central=True selects the full-actuation radius (no dimension factors
    inside the logs, no leakage term); otherwise the per-mode radius with
    norm_b_bar scaling the unused-actuator noise contribution.
    """

    s: float
    sigma_w: float
    sigma_nu: float = 0.0
    norm_b_bar: float = 0.0
    central: bool = False


@dataclass(frozen=True)
class ConfidenceEllipsoid:
    """Center, Gram matrix, accumulated cross moments and radius."""

    theta_hat: np.ndarray
    V: np.ndarray
    ZX: np.ndarray
    lam: float
    delta: float
    beta: float
    count: int
    radius: RadiusSpec
    n: int
    d_i: int

    @classmethod
    def empty(cls, n: int, d_i: int, lam: float, delta: float,
              radius: RadiusSpec) -> "ConfidenceEllipsoid":
        m = n + d_i
        est = cls(
            theta_hat=np.zeros((m, n)),
            V=lam * np.eye(m),
            ZX=np.zeros((m, n)),
            lam=float(lam),
            delta=float(delta),
            beta=0.0,
            count=0,
            radius=radius,
            n=n,
            d_i=d_i,
        )
        return replace(est, beta=_radius(est))

    @property
    def dim(self) -> int:
        return self.n + self.d_i

    def logdet_ratio(self) -> float:
        """log det(V) - log det(lambda I), floored at zero.

        The floor covers round-off: analytically V >= lambda I so the
        ratio cannot drop below one.
        """
        sign, logdet = np.linalg.slogdet(self.V)
        if sign <= 0:
            raise NumericalDomain("Gram matrix lost positive definiteness")
        return max(0.0, logdet - self.dim * np.log(self.lam))

    def logdet(self) -> float:
        sign, logdet = np.linalg.slogdet(self.V)
        if sign <= 0:
            raise NumericalDomain("Gram matrix lost positive definiteness")
        return float(logdet)

    def to_record(self) -> dict:
        """JSON-compatible snapshot for run logs."""
        return {
            "theta_hat": self.theta_hat.tolist(),
            "V": self.V.tolist(),
            "beta": self.beta,
            "lambda": self.lam,
            "delta": self.delta,
            "count": self.count,
        }


def _radius(est: ConfidenceEllipsoid) -> float:
    r = est.radius
    if r.central:
        return beta_central(est, r.s, r.sigma_w, est.n)
    return beta_mode(est, r.s, r.sigma_w, r.sigma_nu, r.norm_b_bar, est.n, est.d_i)


def rls_update(est: ConfidenceEllipsoid, sample: RegressorSample) -> ConfidenceEllipsoid:
    """Absorb one transition and return the updated estimator.

    V gains z z^T, the cross moment gains z x_next^T, and the center is
    re-solved from scratch; there is no incremental-inverse drift. The
    radius is recomputed so the stored beta always matches V.
    """
    z, x_next = sample.z, sample.x_next
    if z.shape != (est.dim,) or x_next.shape != (est.n,):
        raise DimensionMismatch(
            f"sample dims {z.shape}/{x_next.shape} vs estimator ({est.dim},)/({est.n},)"
        )
    V = est.V + np.outer(z, z)
    ZX = est.ZX + np.outer(z, x_next)
    theta_hat = np.linalg.solve(V, ZX)
    out = replace(est, V=V, ZX=ZX, theta_hat=theta_hat, count=est.count + 1)
    return replace(out, beta=_radius(out))


def beta_mode(est: ConfidenceEllipsoid, s_i: float, sigma_w: float, sigma_nu: float,
              norm_b_bar: float, n: int, d_i: int) -> float:
    """Squared radius of the per-mode confidence set.

    beta = (sqrt(lambda) s + sigma_w sqrt(2n log(n r / delta))
            + |Bbar| sigma_nu sqrt(2 d_i log(d_i r / delta)))^2
    with r = det(V)^{1/2} det(lambda I)^{-1/2}, floored at one.
    """
    half_logdet = 0.5 * est.logdet_ratio()
    term_w = np.log(n / est.delta) + half_logdet
    if term_w < 0.0:
        raise NumericalDomain("noise log term went negative")
    root = np.sqrt(est.lam) * s_i + sigma_w * np.sqrt(2.0 * n * term_w)
    if norm_b_bar > 0.0 and sigma_nu > 0.0 and d_i > 0:
        term_nu = np.log(d_i / est.delta) + half_logdet
        if term_nu < 0.0:
            raise NumericalDomain("exploration log term went negative")
        root += norm_b_bar * sigma_nu * np.sqrt(2.0 * d_i * term_nu)
    return float(root ** 2)


def beta_central(est: ConfidenceEllipsoid, s: float, sigma_w: float, n: int) -> float:
    """Squared radius of the central (full-actuation) confidence set."""
    term = np.log(1.0 / est.delta) + 0.5 * est.logdet_ratio()
    if term < 0.0:
        raise NumericalDomain("central log term went negative")
    root = sigma_w * np.sqrt(2.0 * n * term) + np.sqrt(est.lam) * s
    return float(root ** 2)


def _as_matrix(theta, est: ConfidenceEllipsoid) -> np.ndarray:
    mat = theta.theta if isinstance(theta, SystemParam) else np.asarray(theta, dtype=float)
    mat = np.atleast_2d(mat)
    if mat.shape != est.theta_hat.shape:
        raise DimensionMismatch(
            f"theta shape {mat.shape} vs estimator {est.theta_hat.shape}"
        )
    return mat


def contains(est: ConfidenceEllipsoid, theta, rtol: float = 1e-9) -> bool:
    """Membership test trace((hat-theta)^T V (hat-theta)) <= beta, closed boundary."""
    diff = _as_matrix(theta, est) - est.theta_hat
    quad = float(np.trace(diff.T @ est.V @ diff))
    return quad <= est.beta + rtol * (1.0 + abs(est.beta))


def mahalanobis(est: ConfidenceEllipsoid, theta) -> float:
    diff = _as_matrix(theta, est) - est.theta_hat
    return float(np.trace(diff.T @ est.V @ diff))


def project_to_ellipsoid(theta, est: ConfidenceEllipsoid, tol: float = 1e-10):
    """Euclidean projection onto the confidence set.

    Interior points pass through unchanged. Otherwise the projection is
    the unique multiplier solution: with V = U diag(w) U^T and the
    centered rows rotated into the eigenbasis, each row shrinks by
    1/(1 + mu w_j) and mu >= 0 solves the active-constraint equation by
    Newton with a bisection fallback. Returns the same kind of object it
    was given (SystemParam in, SystemParam out).
    """
    mat = _as_matrix(theta, est)
    diff = mat - est.theta_hat
    beta = est.beta
    quad = float(np.trace(diff.T @ est.V @ diff))
    if quad <= beta:
        return theta
    if beta <= 0.0:
        return _like(theta, est.theta_hat.copy(), est)
    if quad <= beta * (1.0 + 1e-6):
        # Numerically on the boundary: a radial shrink in the V metric is
        # the exact projection up to round-off and avoids an
        # ill-conditioned multiplier solve.
        return _like(theta, est.theta_hat + diff * _inside_scale(quad, beta), est)

    w, U = np.linalg.eigh(est.V)
    w = np.maximum(w, 0.0)
    D = U.T @ diff
    rows = np.sum(D * D, axis=1)

    def g(mu):
        return float(np.sum(w * rows / (1.0 + mu * w) ** 2)) - beta

    def gprime(mu):
        return float(-2.0 * np.sum(w * w * rows / (1.0 + mu * w) ** 3))

    mu = 0.0
    converged = g(0.0) <= tol * max(1.0, beta)
    if not converged:
        for _ in range(200):
            val = g(mu)
            if abs(val) <= tol * max(1.0, beta):
                converged = True
                break
            step = val / gprime(mu)
            mu_new = mu - step
            if not np.isfinite(mu_new) or mu_new < mu:
                break
            mu = mu_new
    if not converged:
        lo, hi = 0.0, max(mu, 1.0)
        while g(hi) > 0.0:
            hi *= 4.0
            if hi > 1e200:
                raise NonConvergence("projection multiplier bracket blew up")
        for _ in range(300):
            mid = 0.5 * (lo + hi)
            if g(mid) > 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * max(1.0, hi):
                break
        mu = hi
        if abs(g(mu)) > 1e-5 * max(1.0, beta):
            raise NonConvergence("projection multiplier search did not converge")

    D_proj = D / (1.0 + mu * w)[:, None]
    out_diff = U @ D_proj
    # The multiplier solve runs in the eigenbasis; re-check the quadratic
    # directly and shrink radially so round-off never leaves the returned
    # point outside the set.
    quad_out = float(np.trace(out_diff.T @ est.V @ out_diff))
    if quad_out > beta:
        out_diff = out_diff * _inside_scale(quad_out, beta)
    return _like(theta, est.theta_hat + out_diff, est)


def _inside_scale(quad: float, beta: float) -> float:
    return float(np.sqrt(beta / quad)) * (1.0 - 1e-12)


def _like(theta, mat: np.ndarray, est: ConfidenceEllipsoid):
    if isinstance(theta, SystemParam):
        return SystemParam(mat, est.n, est.d_i)
    return mat


def augment_central(x, u_mode, nu, mode) -> np.ndarray:
    """Full-dimension regressor for the central set during exploration.

    The applied input scatters the mode input onto its actuators with
    their share of the exploratory noise added, while unused actuators
    carry pure noise. Accepts an ActuationMode or a plain index sequence.
    """
    actuators = tuple(getattr(mode, "actuators", mode))
    x = np.asarray(x, dtype=float).ravel()
    u_mode = np.asarray(u_mode, dtype=float).ravel()
    nu = np.asarray(nu, dtype=float).ravel()
    d = nu.shape[0]
    if len(actuators) != u_mode.shape[0]:
        raise DimensionMismatch(
            f"mode has {len(actuators)} actuators but input has {u_mode.shape[0]}"
        )
    if any(a < 0 or a >= d for a in actuators):
        raise IndexError(f"actuator indices {actuators} out of range for d={d}")
    u_bar = nu.copy()
    u_bar[list(actuators)] += u_mode
    return np.concatenate([x, u_bar])


def scatter_input(u_mode, actuators, d: int) -> np.ndarray:
    """Embed a mode-sized input into the full input space, zeros elsewhere."""
    u_mode = np.asarray(u_mode, dtype=float).ravel()
    out = np.zeros(d)
    out[list(actuators)] = u_mode
    return out
