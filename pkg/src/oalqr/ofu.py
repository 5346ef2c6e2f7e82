"""Optimistic parameter selection by projected gradient descent.

The optimizer minimizes scale_L * trace(P(theta)) over the intersection
of the current confidence ellipsoid with the norm ball
trace(theta^T theta) <= trace_bound. The problem is non-convex in
general, so the contract is best-effort descent: the returned parameter
is the feasible iterate with the lowest objective encountered, never
worse than the projected warm start.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from .estimation import ConfidenceEllipsoid, contains, project_to_ellipsoid
from .exceptions import NoAdmissiblePoint, NonConvergence, NotStabilizable
from .riccati import RiccatiSolution, solve_dare

FEASIBLE_SLACK = 1e-6
ALTERNATE_ROUNDS = 12
RANDOM_RESTARTS = 10
STALL_STEP = 1e-13


@dataclass(frozen=True)
class OfuConfig:
    """Knobs for one optimistic solve.

    step_rule is either the string "paper" (gamma = sqrt(0.001/trace V))
    or a fixed positive float. trace_bound is the squared norm-ball
    radius; admissible_norm bounds the closed-loop operator norm of
    accepted iterates (set to inf to disable the check).
    """

    iters: int = 100
    step_rule: object = "paper"
    scale_L: float = 1.0
    trace_bound: float = float("inf")
    admissible_norm: float = float("inf")
    seed: int = 0

    def __post_init__(self):
        if self.iters < 1:
            raise ValueError("iters must be at least 1")
        if self.scale_L <= 0.0:
            raise ValueError("scale_L must be positive")


def step_size(V: np.ndarray, rule) -> float:
    """Learning rate: sqrt(0.001/trace(V)) under the default rule."""
    if isinstance(rule, str):
        if rule != "paper":
            raise ValueError(f"unknown step rule {rule!r}")
        tr = float(np.trace(np.atleast_2d(V)))
        if tr <= 0.0:
            raise ValueError("trace(V) must be positive")
        return float(np.sqrt(0.001 / tr))
    return float(rule)


def _rescale_to_ball(theta: np.ndarray, trace_bound: float) -> np.ndarray:
    sq = float(np.sum(theta * theta))
    if sq <= trace_bound or not np.isfinite(trace_bound):
        return theta
    return theta * np.sqrt(trace_bound / sq) * (1.0 - 1e-12)


def make_feasible(theta: np.ndarray, est: ConfidenceEllipsoid, trace_bound: float):
    """Alternate ellipsoid projection and ball rescaling until both hold.

    Returns (theta, ok). Both sets are convex so the alternation settles
    quickly whenever the intersection is nonempty.
    """
    cur = np.asarray(theta, dtype=float)
    for _ in range(ALTERNATE_ROUNDS):
        cur = np.asarray(project_to_ellipsoid(cur, est), dtype=float)
        cur = _rescale_to_ball(cur, trace_bound)
        in_ell = contains(est, cur, rtol=FEASIBLE_SLACK)
        in_ball = float(np.sum(cur * cur)) <= trace_bound * (1.0 + FEASIBLE_SLACK)
        if in_ell and in_ball:
            return cur, True
    return cur, False


def _random_feasible(est: ConfidenceEllipsoid, trace_bound: float,
                     rng: np.random.Generator) -> np.ndarray:
    shape = est.theta_hat.shape
    direction = rng.standard_normal(shape)
    direction /= max(np.linalg.norm(direction, "fro"), 1e-300)
    quad = float(np.trace(direction.T @ est.V @ direction))
    r_ell = np.sqrt(est.beta / max(quad, 1e-300))
    r_ball = np.sqrt(trace_bound) if np.isfinite(trace_bound) else r_ell
    radius = rng.uniform(0.05, 0.95) * min(r_ell, r_ball)
    cand = est.theta_hat + radius * direction
    cand, _ = make_feasible(cand, est, trace_bound)
    return cand


@dataclass
class _Best:
    theta: np.ndarray = None
    sol: RiccatiSolution = None
    obj: float = field(default=float("inf"))


def ofu_select(est: ConfidenceEllipsoid, Q: np.ndarray, R_mode: np.ndarray,
               cfg: OfuConfig, warm_start) -> tuple:
    """Pick an optimistic parameter inside the confidence set.

    Starts from the projected warm start (falling back to seeded random
    feasible draws when the Riccati solve fails there), descends along
    the exact fixed-point gradient of the scaled trace objective, and
    projects every iterate back into the feasible intersection. Iterates
    violating the closed-loop norm bound, or where the Riccati solve
    fails, are skipped for best-so-far. Raises NoAdmissiblePoint when
    nothing admissible was found at all.
    """
    rng = np.random.default_rng([cfg.seed & 0x7FFFFFFF, est.count])
    warm = np.asarray(
        warm_start.theta if hasattr(warm_start, "theta") else warm_start, dtype=float
    )
    theta, _ = make_feasible(warm, est, cfg.trace_bound)
    gamma = step_size(est.V, cfg.step_rule)
    best = _Best()

    def evaluate(point):
        try:
            sol = solve_dare(point, Q, R_mode)
        except (NonConvergence, NotStabilizable):
            return None
        return sol

    def consider(point, sol):
        obj = cfg.scale_L * float(np.trace(sol.P))
        n = est.n
        A = point[:n, :].T
        B = point[n:, :].T
        closed_norm = np.linalg.norm(A + B @ sol.K, 2)
        feasible = contains(est, point, rtol=FEASIBLE_SLACK) and (
            float(np.sum(point * point)) <= cfg.trace_bound * (1.0 + FEASIBLE_SLACK)
        )
        if feasible and closed_norm <= cfg.admissible_norm and obj < best.obj:
            best.theta, best.sol, best.obj = point.copy(), sol, obj

    restarts = 0
    k = 0
    while k <= cfg.iters:
        sol = evaluate(theta)
        if sol is None:
            if best.theta is not None:
                break
            if restarts >= RANDOM_RESTARTS:
                break
            theta = _random_feasible(est, cfg.trace_bound, rng)
            restarts += 1
            continue
        consider(theta, sol)
        if k == cfg.iters:
            break
        n = est.n
        Ac = theta[:n, :].T + theta[n:, :].T @ sol.K
        W = solve_discrete_lyapunov(Ac, np.eye(n))
        grad = 2.0 * cfg.scale_L * np.vstack([np.eye(n), sol.K]) @ (W @ Ac.T @ sol.P)
        theta_next, _ = make_feasible(theta - gamma * grad, est, cfg.trace_bound)
        moved = float(np.max(np.abs(theta_next - theta)))
        theta = theta_next
        k += 1
        if moved <= STALL_STEP and best.theta is None and restarts < RANDOM_RESTARTS:
            # The step rule can shrink gamma to nothing once the Gram
            # matrix is large; a stalled descent with no admissible point
            # yet would loop in place, so jump to a fresh feasible draw.
            theta = _random_feasible(est, cfg.trace_bound, rng)
            restarts += 1

    while best.theta is None and restarts < RANDOM_RESTARTS:
        theta = _random_feasible(est, cfg.trace_bound, rng)
        sol = evaluate(theta)
        if sol is not None:
            consider(theta, sol)
        restarts += 1

    if best.theta is None:
        raise NoAdmissiblePoint(
            "no iterate produced a convergent Riccati solution inside the feasible set"
        )
    sol = best.sol
    return best.theta, RiccatiSolution(
        P=sol.P, K=sol.K, J=cfg.scale_L * float(np.trace(sol.P)), residual=sol.residual
    )
