"""Bundled three-state, three-actuator benchmark system.

The side-information constants a user of the real system would know are
not observable from data alone, so for the bundled benchmark they are
calibrated once from the true parameters: the closed-loop norm at the
truth sets the contraction threshold, and sampled suprema over random
admissible parameters set the remaining envelope constants. Calibration
is seeded and deterministic.
"""

from __future__ import annotations

import numpy as np

from .exceptions import NonConvergence, NotStabilizable
from .modes import ActuationMode, SideInfo, enumerate_subsets
from .riccati import SystemParam, check_controllable, solve_dare
from .simulator import PlantTruth

BENCH_A = np.array([
    [1.04, 0.00, -0.27],
    [0.52, -0.81, 0.83],
    [0.00, 0.04, -0.90],
])
BENCH_B = np.array([
    [0.61, -0.29, -0.47],
    [0.58, 0.25, -0.50],
    [0.00, -0.72, 0.29],
])
BENCH_Q = np.array([
    [0.65, -0.08, -0.14],
    [-0.08, 0.57, 0.26],
    [-0.14, 0.26, 2.50],
])
BENCH_R = np.array([
    [0.14, 0.04, 0.05],
    [0.04, 0.24, 0.08],
    [0.05, 0.08, 0.20],
])

CONTRACTION_CEIL = 0.99
DEFAULT_MARGIN = 1.05
DEFAULT_SAMPLES = 2000


def benchmark_plant() -> PlantTruth:
    return PlantTruth(A=BENCH_A, B=BENCH_B, Q=BENCH_Q, R=BENCH_R)


def calibrate_side_info(plant: PlantTruth, actuators, s: float,
                        sigma_w_bar: float = 0.1,
                        n_samples: int = DEFAULT_SAMPLES,
                        margin: float = DEFAULT_MARGIN,
                        seed: int = 0) -> SideInfo:
    """Side information for one actuator subset, or None if inadmissible.

    A mode is admissible when the certainty-equivalent closed loop at the
    truth is an operator-norm contraction; modes without that property
    are dropped from the candidate set. The envelope constants (worst
    closed-loop norm against the true plant, worst gain norm, worst value
    norm) are suprema over seeded random draws from the admissible set,
    inflated by the margin.
    """
    acts = tuple(sorted(int(a) for a in actuators))
    B_i = plant.B[:, list(acts)]
    idx = list(acts)
    R_i = plant.R[np.ix_(idx, idx)]
    comp = [j for j in range(plant.d) if j not in acts]
    B_bar = plant.B[:, comp]

    theta_true = SystemParam.from_ab(plant.A, B_i)
    if float(np.sum(theta_true.theta ** 2)) > s ** 2:
        return None
    if not check_controllable(theta_true):
        return None
    sol_true = solve_dare(theta_true, plant.Q, R_i)
    base_norm = float(np.linalg.norm(plant.A + B_i @ sol_true.K, 2))
    upsilon = margin * base_norm
    if upsilon >= CONTRACTION_CEIL:
        return None

    eta = base_norm
    kappa = float(np.linalg.norm(sol_true.K, 2))
    p_sup = float(np.linalg.norm(sol_true.P, 2))

    rng = np.random.default_rng(seed)
    scales = (0.05, 0.1, 0.2, 0.4)
    accepted = 0
    for k in range(n_samples):
        if k % 2 == 0:
            cand = theta_true.theta + scales[k % len(scales)] * rng.standard_normal(theta_true.theta.shape)
        else:
            direction = rng.standard_normal(theta_true.theta.shape)
            direction /= np.linalg.norm(direction, "fro")
            cand = rng.uniform(0.1, 1.0) * s * direction
        if float(np.sum(cand ** 2)) > s ** 2:
            cand = cand * (s / np.linalg.norm(cand, "fro")) * (1.0 - 1e-9)
        par = SystemParam(cand, plant.n, len(acts))
        if not check_controllable(par):
            continue
        try:
            sol = solve_dare(par, plant.Q, R_i)
        except (NonConvergence, NotStabilizable):
            continue
        closed = float(np.linalg.norm(par.A + par.B @ sol.K, 2))
        if closed > upsilon:
            continue
        accepted += 1
        eta = max(eta, float(np.linalg.norm(plant.A + B_i @ sol.K, 2)))
        kappa = max(kappa, float(np.linalg.norm(sol.K, 2)))
        p_sup = max(p_sup, float(np.linalg.norm(sol.P, 2)))

    j_mode = sigma_w_bar ** 2 * float(np.trace(sol_true.P))
    j_full = sigma_w_bar ** 2 * float(
        np.trace(solve_dare(plant.theta_star, plant.Q, plant.R).P)
    )
    return SideInfo(
        s=s,
        upsilon=upsilon,
        eta=margin * eta,
        gamma=max(0.0, j_mode - j_full),
        theta_bound=margin * float(np.linalg.norm(B_i, 2)),
        kappa=max(1.05, margin * kappa),
        p_bound=margin * p_sup,
        b_bar_bound=margin * float(np.linalg.norm(B_bar, 2)) if comp else 0.0,
    )


def calibrated_modes(plant: PlantTruth, s: float, sigma_w_bar: float = 0.1,
                     n_samples: int = DEFAULT_SAMPLES,
                     margin: float = DEFAULT_MARGIN, seed: int = 0,
                     subsets=None) -> list:
    """Every admissible actuating mode with calibrated side information.

    Subsets are scanned by size then lexicographic order, which also
    fixes tie-breaking downstream. Ids are stable across filtering: full
    actuation is always id 1, the others take 2, 3, ... in scan order.
    """
    if subsets is None:
        subsets = enumerate_subsets(plant.d)
    out = []
    next_id = 2
    for acts in subsets:
        acts = tuple(sorted(int(a) for a in acts))
        mode_id = 1 if len(acts) == plant.d else next_id
        if len(acts) != plant.d:
            next_id += 1
        side = calibrate_side_info(
            plant, acts, s, sigma_w_bar=sigma_w_bar, n_samples=n_samples,
            margin=margin, seed=seed + 13 * mode_id,
        )
        if side is None:
            continue
        out.append(ActuationMode(id=mode_id, actuators=acts, side_info=side))
    return out
