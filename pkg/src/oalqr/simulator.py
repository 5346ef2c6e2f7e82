"""Ground-truth plant, noise streams and regret accounting.

The plant is only visible to the simulator; controllers see states and
nothing else. Noise draws are counter-based: the generator for step t is
keyed by (seed, t), so an episode replays bit for bit from its seed and
parallel episodes never share generator state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import OutOfOrder
from .riccati import RiccatiSolution, SystemParam, check_controllable, solve_dare

STATE_HARD_CAP = 1e9


@dataclass(frozen=True)
class PlantTruth:
    """The hidden true system: dynamics, costs and dimensions."""

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "Q", "R"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        n, d = self.A.shape[0], self.B.shape[1]
        if self.A.shape != (n, n) or self.B.shape != (n, d):
            raise ValueError("A must be square and B conformable")
        for M, name in ((self.Q, "Q"), (self.R, "R")):
            if M.shape[0] != M.shape[1] or not np.allclose(M, M.T):
                raise ValueError(f"{name} must be square symmetric")
            if np.min(np.linalg.eigvalsh(M)) <= 0.0:
                raise ValueError(f"{name} must be positive definite")
        if self.Q.shape[0] != n or self.R.shape[0] != d:
            raise ValueError("cost matrices must match the state/input dimensions")
        if not check_controllable((self.A, self.B)):
            raise ValueError("(A, B) must be controllable")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.B.shape[1]

    @property
    def theta_star(self) -> SystemParam:
        return SystemParam.from_ab(self.A, self.B)


@dataclass(frozen=True)
class NoiseConfig:
    """Noise scales and the seed of the counter-based stream.

    sigma_w is the sub-Gaussian scale, sigma_w_bar the covariance scale
    (equal for the Gaussian reference distribution), sigma_nu the
    exploration-noise scale. The conventional choice for sigma_nu is
    sqrt(2) * kappa * sigma_w_bar; callers may override.
    """

    sigma_w: float
    sigma_w_bar: float
    sigma_nu: float
    distribution: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.distribution != "gaussian":
            raise ValueError(f"unsupported distribution {self.distribution!r}")
        if self.sigma_w < self.sigma_w_bar:
            raise ValueError("sigma_w must dominate sigma_w_bar")
        if self.sigma_w_bar < 0.0 or self.sigma_nu < 0.0:
            raise ValueError("noise scales must be nonnegative")


def default_sigma_nu(kappa: float, sigma_w_bar: float) -> float:
    """Exploration scale with variance 2 kappa^2 sigma_w_bar^2."""
    return float(np.sqrt(2.0) * kappa * sigma_w_bar)


def draw_noises(cfg: NoiseConfig, t: int, n: int, d: int) -> tuple:
    """Seeded draws (w, nu) for step t, independent across (seed, t)."""
    key = ((cfg.seed & ((1 << 64) - 1)) << 64) | (t & ((1 << 64) - 1))
    gen = np.random.Generator(np.random.Philox(key=key))
    w = cfg.sigma_w_bar * gen.standard_normal(n)
    nu = cfg.sigma_nu * gen.standard_normal(d)
    return w, nu


def step_plant(plant: PlantTruth, x: np.ndarray, u_full: np.ndarray,
               w: np.ndarray) -> np.ndarray:
    """One transition x_next = A x + B u + w."""
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u_full, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if x.shape != (plant.n,) or u.shape != (plant.d,) or w.shape != (plant.n,):
        raise ValueError("state, input or noise dimension mismatch")
    return plant.A @ x + plant.B @ u + w


def stage_cost(plant: PlantTruth, x: np.ndarray, u_full: np.ndarray) -> float:
    """Quadratic stage cost on the full applied input, exploration included."""
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u_full, dtype=float).ravel()
    return float(x @ plant.Q @ x + u @ plant.R @ u)


def optimal_avg_cost(plant: PlantTruth, sigma_w_bar: float) -> float:
    """Best achievable average cost sigma_w_bar^2 * trace(P) at the truth."""
    sol = solve_dare(plant.theta_star, plant.Q, plant.R)
    return float(sigma_w_bar ** 2 * np.trace(sol.P))


def optimal_solution(plant: PlantTruth, sigma_w_bar: float = 1.0) -> RiccatiSolution:
    return solve_dare(plant.theta_star, plant.Q, plant.R, noise_var=sigma_w_bar ** 2)


@dataclass
class RegretLedger:
    """Per-step trajectory, costs, cumulative regret and diagnostics.

    Rows are appended with strictly increasing t. Estimator columns hold
    the pre-update quantities the controller saw when acting at t. The
    exploration-effect total accumulates the cost difference between the
    applied input (noise included) and the pure mode input.
    """

    j_star: float
    explore_end: int
    mode_id: int
    rows: list = field(default_factory=list)
    states: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    noises: list = field(default_factory=list)
    switch_log: list = field(default_factory=list)
    cum_regret: float = 0.0
    r0_empirical: float = 0.0
    switch_count: int = 0
    failed: bool = False

    COLUMNS = ("t", "mode_id", "state_norm", "cost", "cum_regret", "log_det_V",
               "lambda_min_V", "est_error", "beta", "switched", "alpha_bound",
               "good_event")

    def append(self, t: int, x, u_applied, nu, cost: float, log_det_v: float,
               lambda_min_v: float, est_error: float, beta: float,
               switched: bool, alpha_bound: float, r0_term: float = 0.0,
               switch_reason: str = "") -> "RegretLedger":
        if self.rows and t <= self.rows[-1]["t"]:
            raise OutOfOrder(f"t={t} after t={self.rows[-1]['t']}")
        self.cum_regret += cost - self.j_star
        if t <= self.explore_end:
            self.r0_empirical += r0_term
        if switched:
            self.switch_count += 1
            self.switch_log.append((t, switch_reason))
        x = np.asarray(x, dtype=float).ravel()
        state_norm = float(np.linalg.norm(x))
        good = state_norm <= alpha_bound
        self.rows.append({
            "t": t,
            "mode_id": self.mode_id if t <= self.explore_end else 1,
            "state_norm": state_norm,
            "cost": cost,
            "cum_regret": self.cum_regret,
            "log_det_V": log_det_v,
            "lambda_min_V": lambda_min_v,
            "est_error": est_error,
            "beta": beta,
            "switched": int(switched),
            "alpha_bound": alpha_bound,
            "good_event": int(good),
        })
        self.states.append(x)
        self.inputs.append(np.asarray(u_applied, dtype=float).ravel())
        self.noises.append(np.asarray(nu, dtype=float).ravel())
        return self

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)

    def max_state_norm(self, upto: int = None) -> float:
        upto = self.rows[-1]["t"] if upto is None else upto
        return max(r["state_norm"] for r in self.rows if r["t"] <= upto)

    def summary(self) -> dict:
        return {
            "steps": len(self.rows),
            "failed": self.failed,
            "cum_regret": self.cum_regret,
            "r0_empirical": self.r0_empirical,
            "switch_count": self.switch_count,
            "max_state_norm": self.max_state_norm(),
            "max_state_norm_explore": self.max_state_norm(self.explore_end),
            "good_event_violations": int(sum(1 for r in self.rows if not r["good_event"])),
        }


def update_ledger(ledger: RegretLedger, **fields) -> RegretLedger:
    """Append one record; thin functional alias for RegretLedger.append."""
    return ledger.append(**fields)
