"""Adaptive LQ control of unknown over-actuated systems with mode switching.

The package splits into dense control numerics (riccati), online
estimation with confidence ellipsoids (estimation), optimistic parameter
selection (ofu), exploration planning over actuator subsets (planner),
the two control loops plus episode orchestration (controllers), the
ground-truth simulator with regret accounting (simulator) and the
experiment harness with its CLI (harness, cli).
"""

from .controllers import Controller, ControllerState, EpisodeConfig, run_episode, should_update, switch_budget
from .estimation import (
    ConfidenceEllipsoid,
    RadiusSpec,
    RegressorSample,
    augment_central,
    beta_central,
    beta_mode,
    contains,
    project_to_ellipsoid,
    rls_update,
)
from .modes import ActuationMode, SideInfo, enumerate_subsets
from .ofu import OfuConfig, ofu_select, step_size
from .planner import (
    ExplorationPlan,
    PlannerConstants,
    PlannerTuning,
    compute_T_c,
    compute_mu_c,
    compute_sigma_star,
    compute_state_bound_Y,
    make_plan,
    plan_exploration,
    runtime_bounds,
)
from .riccati import (
    RiccatiSolution,
    SystemParam,
    check_controllable,
    check_observable,
    grad_trace_P,
    solve_dare,
    spectral_radius,
)
from .simulator import (
    NoiseConfig,
    PlantTruth,
    RegretLedger,
    default_sigma_nu,
    draw_noises,
    optimal_avg_cost,
    stage_cost,
    step_plant,
    update_ledger,
)

__version__ = "0.1.0"
