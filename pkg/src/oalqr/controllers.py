"""The two control loops and the episode orchestrator.

Phase one explores in a reduced actuating mode with extra input noise on
every actuator, keeping two estimators: one over the mode parameters
(driving the policy) and one over the full-actuation parameters built by
input augmentation. Phase two hands the full-actuation estimator over,
drops the exploration noise and runs optimistic certainty-equivalent
control. Policy updates in both phases follow the det-doubling rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .estimation import (
    ConfidenceEllipsoid,
    RadiusSpec,
    RegressorSample,
    augment_central,
    rls_update,
    scatter_input,
)
from .exceptions import NoAdmissiblePoint, SimulationDiverged
from .modes import ActuationMode, SideInfo
from .ofu import OfuConfig, ofu_select
from .planner import ExplorationPlan, runtime_bounds
from .riccati import RiccatiSolution
from .simulator import (
    NoiseConfig,
    PlantTruth,
    RegretLedger,
    draw_noises,
    optimal_avg_cost,
    stage_cost,
    step_plant,
)

LOG2 = math.log(2.0)


@dataclass
class ControllerState:
    """Mutable controller bookkeeping shared by both phases."""

    phase: str
    mode_est: ConfidenceEllipsoid
    central_est: ConfidenceEllipsoid
    theta_tilde: np.ndarray = None
    gain: RiccatiSolution = None
    tau_logdet: float = -math.inf
    switch_log: list = field(default_factory=list)

    def active_est(self) -> ConfidenceEllipsoid:
        return self.mode_est if self.phase == "explore" else self.central_est


def should_update(state: ControllerState, t: int, phase_start: int) -> bool:
    """Det-doubling rule: refresh the policy when the active Gram matrix
    determinant has doubled since the last update, or at the phase start."""
    if t == phase_start:
        return True
    return state.active_est().logdet() > state.tau_logdet + LOG2


@dataclass(frozen=True)
class EpisodeConfig:
    """Everything an episode needs besides the plant and the plan."""

    noise: NoiseConfig
    lam: float
    delta: float
    full_side: SideInfo
    ofu_iters: int = 100
    ofu_step_rule: object = "paper"
    seed: int = 0
    state_cap: float = 1e9


class Controller:
    """Joint exploration/optimism controller for one episode."""

    def __init__(self, Q: np.ndarray, R_full: np.ndarray, mode: ActuationMode,
                 full_side: SideInfo, noise: NoiseConfig, lam: float,
                 delta: float, explore_end: int, ofu_iters: int = 100,
                 ofu_step_rule: object = "paper", seed: int = 0):
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.R_full = np.atleast_2d(np.asarray(R_full, dtype=float))
        self.n = self.Q.shape[0]
        self.d = self.R_full.shape[0]
        self.mode = mode
        self.full_side = full_side
        self.R_mode = mode.r_sub(self.R_full)
        self.noise = noise
        self.lam = lam
        self.delta = delta
        self.explore_end = explore_end
        self.ofu_iters = ofu_iters
        self.ofu_step_rule = ofu_step_rule
        self.seed = seed

        si = mode.side_info
        mode_radius = RadiusSpec(s=si.s, sigma_w=noise.sigma_w,
                                 sigma_nu=noise.sigma_nu,
                                 norm_b_bar=si.b_bar_bound, central=False)
        central_radius = RadiusSpec(s=full_side.s, sigma_w=noise.sigma_w,
                                    central=True)
        self.state = ControllerState(
            phase="explore",
            mode_est=ConfidenceEllipsoid.empty(self.n, mode.d_i, lam, delta, mode_radius),
            central_est=ConfidenceEllipsoid.empty(self.n, self.d, lam, delta, central_radius),
        )
        # Optimistic objective scale: exploration noise feeds back through
        # the input matrix during phase one, only process noise afterwards.
        self.scale_explore = noise.sigma_w_bar ** 2 + (full_side.theta_bound * noise.sigma_nu) ** 2
        self.scale_optimize = noise.sigma_w_bar ** 2

    def _ofu_cfg(self, t: int, explore: bool) -> OfuConfig:
        side = self.mode.side_info if explore else self.full_side
        return OfuConfig(
            iters=self.ofu_iters,
            step_rule=self.ofu_step_rule,
            scale_L=self.scale_explore if explore else self.scale_optimize,
            trace_bound=side.s ** 2,
            admissible_norm=side.upsilon,
            seed=(self.seed * 1000003 + t) & 0x7FFFFFFF,
        )

    def _refresh_policy(self, t: int, explore: bool) -> bool:
        st = self.state
        est = st.mode_est if explore else st.central_est
        R = self.R_mode if explore else self.R_full
        warm = st.theta_tilde if st.theta_tilde is not None else est.theta_hat
        try:
            theta, sol = ofu_select(est, self.Q, R, self._ofu_cfg(t, explore), warm)
        except NoAdmissiblePoint:
            if st.theta_tilde is None:
                raise
            return False
        st.theta_tilde = theta
        st.gain = sol
        st.tau_logdet = est.logdet()
        st.switch_log.append((t, "det-doubling" if t else "init"))
        return True

    def iexp_step(self, x: np.ndarray, t: int, noise_draw: np.ndarray) -> tuple:
        """One exploration step.

        Returns (u_applied, u_mode, z_mode, z_bar, switched): the full
        applied input with exploration noise scattered per the
        augmentation rule, the pure mode input, the two regressors and
        whether the policy was refreshed.
        """
        st = self.state
        switched = False
        if should_update(st, t, phase_start=0):
            switched = self._refresh_policy(t, explore=True)
        u_mode = st.gain.K @ x
        acts = list(self.mode.actuators)
        z_mode = np.concatenate([x, u_mode + noise_draw[acts]])
        z_bar = augment_central(x, u_mode, noise_draw, self.mode)
        u_applied = z_bar[self.n:]
        return u_applied, u_mode, z_mode, z_bar, switched

    def absorb_explore(self, z_mode: np.ndarray, z_bar: np.ndarray,
                       x_next: np.ndarray) -> None:
        st = self.state
        st.mode_est = rls_update(st.mode_est, RegressorSample(z_mode, x_next))
        st.central_est = rls_update(st.central_est, RegressorSample(z_bar, x_next))

    def handoff(self) -> None:
        """Switch phases. The full-actuation estimator carries over as is;
        the optimistic parameter is re-solved at the first step after."""
        st = self.state
        st.phase = "optimize"
        st.theta_tilde = None
        st.gain = None

    def sofua_step(self, x: np.ndarray, t: int) -> tuple:
        """One optimistic full-actuation step: (u_applied, z, switched)."""
        st = self.state
        switched = False
        if should_update(st, t, phase_start=self.explore_end + 1):
            switched = self._refresh_policy(t, explore=False)
        u = st.gain.K @ x
        z = np.concatenate([x, u])
        return u, z, switched

    def absorb_optimize(self, z: np.ndarray, x_next: np.ndarray) -> None:
        st = self.state
        st.central_est = rls_update(st.central_est, RegressorSample(z, x_next))


def run_episode(plant: PlantTruth, plan: ExplorationPlan, horizon: int,
                cfg: EpisodeConfig, seed: int) -> RegretLedger:
    """Run exploration for steps 0..T_c and optimism for T_c+1..horizon.

    The ledger logs, per step, the pre-update estimator diagnostics the
    controller acted on. Raises SimulationDiverged (carrying the partial
    ledger, marked failed) when the state passes the hard cap.
    """
    if horizon <= plan.T_c:
        raise ValueError("horizon must exceed the exploration duration")
    n, d = plant.n, plant.d
    noise = replace(cfg.noise, seed=seed)
    mode = plan.mode
    t_c = plan.T_c

    controller = Controller(
        plant.Q, plant.R, mode, cfg.full_side, noise, cfg.lam, cfg.delta,
        explore_end=t_c, ofu_iters=cfg.ofu_iters,
        ofu_step_rule=cfg.ofu_step_rule, seed=seed,
    )
    j_star = optimal_avg_cost(plant, noise.sigma_w_bar)
    ledger = RegretLedger(j_star=j_star, explore_end=t_c, mode_id=mode.id)

    alpha_explore, _, _, _ = runtime_bounds(
        mode, max(t_c, 2), t_c, noise, cfg.delta, n,
        cfg.full_side.upsilon, cfg.full_side.kappa, plan.constants.c_ci, cfg.lam,
    )
    _, _, x_c_sq, _ = runtime_bounds(
        mode, horizon, t_c, noise, cfg.delta, n,
        cfg.full_side.upsilon, cfg.full_side.kappa, plan.constants.c_ci, cfg.lam,
    )
    alpha_optimize = math.sqrt(x_c_sq)

    theta_star = plant.theta_star.theta
    x = np.zeros(n)
    for t in range(horizon + 1):
        w, nu_draw = draw_noises(noise, t, n, d)
        explore = t <= t_c
        if explore:
            u_applied, u_mode, z_mode, z_bar, switched = controller.iexp_step(x, t, nu_draw)
            nu = nu_draw
            active = controller.state.mode_est
            r0_term = stage_cost(plant, np.zeros(n), u_applied) - float(
                u_mode @ controller.R_mode @ u_mode
            )
        else:
            if controller.state.phase == "explore":
                controller.handoff()
            u_applied, z, switched = controller.sofua_step(x, t)
            nu = np.zeros(d)
            active = controller.state.central_est
            r0_term = 0.0

        central = controller.state.central_est
        cost = stage_cost(plant, x, u_applied)
        est_error = float(np.linalg.norm(central.theta_hat - theta_star, 2))
        lam_min = float(np.min(np.linalg.eigvalsh(central.V)))
        ledger.append(
            t=t, x=x, u_applied=u_applied, nu=nu, cost=cost,
            log_det_v=active.logdet(), lambda_min_v=lam_min,
            est_error=est_error, beta=active.beta, switched=switched,
            alpha_bound=alpha_explore if explore else alpha_optimize,
            r0_term=r0_term,
        )

        x_next = step_plant(plant, x, u_applied, w)
        if np.linalg.norm(x_next) > cfg.state_cap:
            ledger.failed = True
            raise SimulationDiverged(
                f"state norm passed the hard cap at t={t}", ledger=ledger
            )
        if explore:
            controller.absorb_explore(z_mode, z_bar, x_next)
        else:
            controller.absorb_optimize(z, x_next)
        x = x_next
    return ledger


def switch_budget(ledger: RegretLedger, n: int, d: int, d_i: int, lam: float) -> dict:
    """Doubling-rule switch budget computed from the logged determinants.

    N1 charges the exploration phase against the mode Gram determinant at
    the end of the window, N2 charges the optimism phase against the
    growth of the central determinant. Policy updates after the initial
    solve can never exceed N1 + N2 + 1.
    """
    t_c = ledger.explore_end
    rows = {r["t"]: r for r in ledger.rows}
    logdet_mode_end = rows[t_c]["log_det_V"]
    logdet_central_start = rows[t_c + 1]["log_det_V"]
    logdet_central_final = ledger.rows[-1]["log_det_V"]
    m_i = n + d_i
    m = n + d
    n1 = m_i * max(0.0, logdet_mode_end - m_i * math.log(lam)) / LOG2
    n2 = m * max(0.0, logdet_central_final - logdet_central_start) / LOG2
    updates = ledger.switch_count - 1
    return {"n1": n1, "n2": n2, "updates": updates,
            "bound": n1 + n2 + 1.0, "ok": updates <= n1 + n2 + 1.0}
