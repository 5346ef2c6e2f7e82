"""Exploration planning: pick the actuating mode and duration up front.

For each candidate mode the planner iterates a fixed point: the required
exploration duration depends on the worst-case state bound at that
duration, which itself grows slowly with the duration. Once every
candidate either closes its fixed point or hits the cap, the mode with
the smallest predicted state bound wins. All bound formulas are the
analytical worst-case constants; they are evaluated, never proved, and
they are deliberately conservative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .exceptions import InvalidExcitation, NoFeasibleMode, NumericalDomain
from .modes import ActuationMode

DEFAULT_CAP = 10 ** 6
E = math.e


@dataclass(frozen=True)
class PlannerTuning:
    """Free constants of the excitation-rate bound, as squared scales."""

    sigma1_sq: float
    sigma2_sq: float
    sigma3_sq: float

    @classmethod
    def from_noise(cls, noise) -> "PlannerTuning":
        """Stable default: split the process variance, push the tail scales
        far enough out that the exponential terms are negligible. The third
        scale widens with the noise ratio so its residual term stays below
        the leading one even when exploration noise dominates."""
        w2 = noise.sigma_w_bar ** 2
        n2 = noise.sigma_nu ** 2
        s2 = max(8.0 * n2, 2.0 * w2)
        ratio = max(1.0, n2 / w2) if w2 > 0.0 else 1.0
        s3 = max(n2 * (12.0 + 4.0 * math.log(ratio)), 2.0 * w2)
        return cls(sigma1_sq=0.5 * w2, sigma2_sq=s2, sigma3_sq=s3)


@dataclass(frozen=True)
class PlannerConstants:
    """Every intermediate constant behind one mode's planning numbers."""

    mu_c: float
    p_cal: float
    g_bar: float
    m_max: float
    u_0: float
    h: float
    d1: float
    d2: float
    d3: float
    l_bar: float
    k_bar: float
    y: float
    v_cal: float
    sigma_star_sq: float
    c_p: float
    c_p_pp: float
    alpha_t: float
    chi_s: float
    x_c_sq: float
    t_rc: int
    c_ci: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ExplorationPlan:
    """Chosen mode, its exploration duration and the predicted state bound."""

    mode: ActuationMode
    T_c: int
    T_omega: int
    predicted_state_bound: float
    constants: PlannerConstants

    def __post_init__(self):
        if self.T_c < 1:
            raise ValueError("T_c must be at least 1")
        if not np.isfinite(self.predicted_state_bound):
            raise ValueError("predicted state bound must be finite")


def compute_sigma_star(sigma_w_bar: float, sigma_nu_bar: float, sigma1: float,
                       sigma2: float, sigma3: float) -> tuple:
    """Excitation-rate constants (sigma_star^2, c_p, c_p'').

    sigma1..sigma3 are standard-deviation scales with sigma1 <= sigma2.
    Raises InvalidExcitation when either rate constant is nonpositive.
    """
    s1, s2, s3 = sigma1 ** 2, sigma2 ** 2, sigma3 ** 2
    w2, n2 = sigma_w_bar ** 2, sigma_nu_bar ** 2
    if s1 > s2:
        raise InvalidExcitation(f"need sigma1 <= sigma2, got {sigma1} > {sigma2}")
    if s2 <= 0.0:
        raise InvalidExcitation("sigma2 must be positive")
    if n2 > 0.0:
        tail2 = 4.0 * n2 * (1.0 + s2 / (2.0 * n2)) * math.exp(-s2 / n2)
        tail3 = 4.0 * n2 * (1.0 + s3 / (2.0 * n2)) * math.exp(-s3 / n2)
        tail3b = 0.5 * n2 * math.exp(-s3 / (2.0 * n2))
    else:
        tail2 = tail3 = tail3b = 0.0
    c_p = (w2 - s1 - tail2) / s2
    c_p_pp = (0.5 * w2 - tail3) / s2 - tail3b
    if c_p <= 0.0 or c_p_pp <= 0.0:
        raise InvalidExcitation(
            f"rate constants must be positive, got c_p={c_p:.3e}, c_p''={c_p_pp:.3e}"
        )
    sigma_star_sq = min(c_p, c_p_pp) * s1 / 16.0
    return sigma_star_sq, c_p, c_p_pp


def noise_sup(mode: ActuationMode, t: int, sigma_nu: float, delta: float) -> float:
    """High-probability sup of the mode-restricted exploration noise norm."""
    d_i = mode.d_i
    arg = d_i * t / delta
    if arg <= 1.0:
        return 0.0
    return sigma_nu * math.sqrt(2.0 * d_i * math.log(arg))


def state_bound_constants(mode: ActuationMode, t: int, noise, lam: float,
                          delta: float, n: int, x0_norm: float = 0.0) -> dict:
    """All constants of the worst-case exploration state bound at time t.

    Needs t >= 2 so the log factors are positive, and a nonzero
    excitation scale (exploration noise, or a nonzero initial state) so
    the regressor floor is positive.
    """
    if t < 2:
        raise NumericalDomain("state bound needs t >= 2")
    si = mode.side_info
    d_i = mode.d_i
    m = n + d_i
    s = si.s
    v_cal = noise_sup(mode, t, noise.sigma_nu, delta)
    y_star = math.sqrt(1.0 + 2.0 * si.kappa ** 2) * x0_norm + math.sqrt(2.0) * v_cal
    if y_star <= 0.0:
        raise NumericalDomain(
            "state bound needs exploration noise or a nonzero initial state"
        )
    u_0 = 1.0 / (16.0 ** (m - 2) * max(1.0, s ** (2 * (m - 2))))
    c_const = 2.0 * (2.0 * s * m * math.sqrt(16.0 ** (m - 2) * max(1.0, s ** (2 * (m - 2))))) ** (1.0 / (m + 1))
    log_arg = (1.0 + t * y_star / (lam * m)) / delta
    if log_arg <= 1.0:
        raise NumericalDomain("regressor log factor fell below one")
    root_log = math.sqrt(n * m * math.log(log_arg))
    m_max = (si.b_bar_bound * noise.sigma_nu * root_log
             + noise.sigma_w * root_log + math.sqrt(lam) * s) / y_star
    growth = max(16.0, 4.0 * s ** 2 * m_max ** 2 / (m * u_0))
    h = 2.0 * growth
    g_bar = c_const * growth

    lead = (si.eta / si.upsilon) ** m / (1.0 - si.upsilon)
    d1 = 4.0 * lead * g_bar * (1.0 + 2.0 * si.kappa ** 2) ** (m / (2.0 * (m + 1)))
    d2 = 4.0 * lead * g_bar * 2.0 ** (m / (2.0 * (m + 1))) * v_cal
    d3 = n * math.sqrt(2.0) * lead * noise.sigma_w

    log_t = math.log(t)
    det_logs = (
        math.log((m * lam + 2.0 * v_cal ** 2) * t / (m * lam))
        + math.log((1.0 + 2.0 * si.kappa ** 2) * t / (m * lam))
    )
    l_bar = (
        (d1 + d2) * (2.0 * n * noise.sigma_w * math.log(1.0 / delta)
                     + noise.sigma_w * math.sqrt(lam) * s) * log_t
        + d3 * math.sqrt(math.log(t / delta))
        + (d1 + d2) * n * noise.sigma_w * m * det_logs * log_t
    )
    k_bar = 2.0 * (d1 + d2) * n * noise.sigma_w * m * (m + 1) * log_t
    root = 0.5 * (l_bar + math.sqrt(l_bar ** 2 + 4.0 * k_bar))
    y = max(E, lam * m * (E - 1.0), root)
    return {
        "v_cal": v_cal,
        "u_0": u_0,
        "m_max": m_max,
        "h": h,
        "g_bar": g_bar,
        "d1": d1,
        "d2": d2,
        "d3": d3,
        "l_bar": l_bar,
        "k_bar": k_bar,
        "y": y,
        "x_t": y ** (m + 1),
    }


def compute_state_bound_Y(mode: ActuationMode, t: int, noise, lam: float,
                          delta: float, n: int) -> float:
    """Worst-case exploration state bound x_t = Y^{n+d_i+1}."""
    return state_bound_constants(mode, t, noise, lam, delta, n)["x_t"]


def compute_mu_c(mode: ActuationMode, state_bound: float, T_omega: int, noise,
                 lam: float, delta: float, n: int, d: int, sigma_star: float,
                 s_central: float = None) -> float:
    """Estimation-error rate constant for the augmented (full) estimate.

    mu_c / sqrt(T) dominates the central parameter error after T steps of
    exploration in the given mode. state_bound is the state-norm bound
    over the exploration window; the regressor energy term combines it
    with the exploration-noise sup.
    """
    if sigma_star <= 0.0:
        raise InvalidExcitation(f"sigma_star must be positive, got {sigma_star}")
    if T_omega < 1:
        raise ValueError("T_omega must be at least 1")
    si = mode.side_info
    s = si.s if s_central is None else s_central
    d_i = mode.d_i
    log_arg = d * T_omega / delta
    noise_energy = 0.0
    if log_arg > 1.0:
        noise_energy = 4.0 * T_omega * noise.sigma_nu ** 2 * d_i * math.log(log_arg)
    p_cal = state_bound ** 2 * (1.0 + 2.0 * si.kappa ** 2) * T_omega + noise_energy
    inner = (n * (n + d) * math.log1p(p_cal / (lam * (n + d)))
             + 2.0 * n * math.log(1.0 / delta))
    return (noise.sigma_w * math.sqrt(inner) + math.sqrt(lam) * s) / sigma_star


def compute_T_c(mu_c: float, kappa: float, upsilon: float) -> int:
    """Exploration steps needed to land inside the stabilizing neighborhood."""
    if not (0.0 < upsilon < 1.0):
        raise ValueError(f"upsilon must be in (0, 1), got {upsilon}")
    return int(math.ceil(4.0 * (1.0 + kappa) ** 2 * mu_c ** 2 / (1.0 - upsilon) ** 2))


def _close_fixed_point(mode: ActuationMode, noise, lam: float, delta: float,
                       n: int, d: int, cap: int, sigma_star: float,
                       kappa_tc: float, upsilon_tc: float, s_central) -> dict:
    """Smallest t >= 2 with t >= T_c(t), or None when the cap interrupts.

    T_c(t) is nondecreasing in t, so jumping straight to the latest
    requirement visits exactly the stopping point the unit-step scan
    would find.
    """
    t = 2
    while True:
        consts = state_bound_constants(mode, t, noise, lam, delta, n)
        mu = compute_mu_c(mode, consts["x_t"], t, noise, lam, delta, n, d,
                          sigma_star, s_central)
        t_c = compute_T_c(mu, kappa_tc, upsilon_tc)
        if t >= t_c:
            return {"T_omega": t, "T_c": max(1, t_c), "mu_c": mu,
                    "consts": consts,
                    "p_cal": consts["x_t"] ** 2 * (1.0 + 2.0 * mode.side_info.kappa ** 2) * t}
        if t >= cap:
            return None
        t = min(cap, max(t + 1, t_c))


def plan_exploration(modes, noise, lam: float, delta: float, n: int, d: int,
                     cap: int = DEFAULT_CAP, tuning: PlannerTuning = None,
                     horizon_hint: int = None) -> ExplorationPlan:
    """Run the duration fixed point per mode and pick the best one.

    Modes are scanned in the order given; ties on the predicted state
    bound keep the earliest candidate. Raises NoFeasibleMode when every
    candidate hits the cap before closing.
    """
    modes = list(modes)
    if not modes:
        raise NoFeasibleMode("no candidate modes supplied")
    if tuning is None:
        tuning = PlannerTuning.from_noise(noise)
    sigma_star_sq, c_p, c_p_pp = compute_sigma_star(
        noise.sigma_w_bar, noise.sigma_nu,
        math.sqrt(tuning.sigma1_sq), math.sqrt(tuning.sigma2_sq),
        math.sqrt(tuning.sigma3_sq),
    )
    sigma_star = math.sqrt(sigma_star_sq)

    full = next((m for m in modes if m.d_i == d), None)
    s_central = full.side_info.s if full is not None else None

    best = None
    for mode in modes:
        si_tc = full.side_info if full is not None else mode.side_info
        closed = _close_fixed_point(mode, noise, lam, delta, n, d, cap,
                                    sigma_star, si_tc.kappa, si_tc.upsilon,
                                    s_central)
        if closed is None:
            continue
        bound = closed["consts"]["x_t"]
        if best is None or bound < best[1]["consts"]["x_t"]:
            best = (mode, closed)
    if best is None:
        raise NoFeasibleMode(
            f"every mode hit the cap of {cap} before its duration fixed point closed"
        )

    mode, closed = best
    consts = closed["consts"]
    t_omega = closed["T_omega"]
    c_ci = consts["x_t"] / (n + mode.d_i) ** (n + mode.d_i)
    si_tc = full.side_info if full is not None else mode.side_info
    nominal_t = 2 * closed["T_c"] + 2
    alpha_t, chi_s, x_c_sq, t_rc = runtime_bounds(
        mode, nominal_t, closed["T_c"], noise, delta, n,
        si_tc.upsilon, si_tc.kappa, c_ci, lam,
    )
    constants = PlannerConstants(
        mu_c=closed["mu_c"], p_cal=closed["p_cal"], g_bar=consts["g_bar"],
        m_max=consts["m_max"], u_0=consts["u_0"], h=consts["h"],
        d1=consts["d1"], d2=consts["d2"], d3=consts["d3"],
        l_bar=consts["l_bar"], k_bar=consts["k_bar"], y=consts["y"],
        v_cal=consts["v_cal"], sigma_star_sq=sigma_star_sq, c_p=c_p,
        c_p_pp=c_p_pp, alpha_t=alpha_t, chi_s=chi_s, x_c_sq=x_c_sq,
        t_rc=t_rc, c_ci=c_ci,
    )
    return ExplorationPlan(
        mode=mode, T_c=closed["T_c"], T_omega=t_omega,
        predicted_state_bound=consts["x_t"], constants=constants,
    )


def make_plan(mode: ActuationMode, T_c: int, noise, lam: float, delta: float,
              n: int, d: int, tuning: PlannerTuning = None,
              kappa_full: float = None, upsilon_full: float = None) -> ExplorationPlan:
    """Plan with a pinned exploration duration.

    Evaluates the same constants the fixed-point search would, at the
    given duration, without requiring the duration inequality to close.
    Useful when the duration is supplied externally.
    """
    if tuning is None:
        tuning = PlannerTuning.from_noise(noise)
    sigma_star_sq, c_p, c_p_pp = compute_sigma_star(
        noise.sigma_w_bar, noise.sigma_nu,
        math.sqrt(tuning.sigma1_sq), math.sqrt(tuning.sigma2_sq),
        math.sqrt(tuning.sigma3_sq),
    )
    t_eval = max(T_c, 2)
    consts = state_bound_constants(mode, t_eval, noise, lam, delta, n)
    mu = compute_mu_c(mode, consts["x_t"], t_eval, noise, lam, delta, n, d,
                      math.sqrt(sigma_star_sq))
    c_ci = consts["x_t"] / (n + mode.d_i) ** (n + mode.d_i)
    ups = upsilon_full if upsilon_full is not None else mode.side_info.upsilon
    kap = kappa_full if kappa_full is not None else mode.side_info.kappa
    alpha_t, chi_s, x_c_sq, t_rc = runtime_bounds(
        mode, 2 * t_eval + 2, T_c, noise, delta, n, ups, kap, c_ci, lam,
    )
    p_cal = consts["x_t"] ** 2 * (1.0 + 2.0 * mode.side_info.kappa ** 2) * t_eval
    constants = PlannerConstants(
        mu_c=mu, p_cal=p_cal, g_bar=consts["g_bar"], m_max=consts["m_max"],
        u_0=consts["u_0"], h=consts["h"], d1=consts["d1"], d2=consts["d2"],
        d3=consts["d3"], l_bar=consts["l_bar"], k_bar=consts["k_bar"],
        y=consts["y"], v_cal=consts["v_cal"], sigma_star_sq=sigma_star_sq,
        c_p=c_p, c_p_pp=c_p_pp, alpha_t=alpha_t, chi_s=chi_s, x_c_sq=x_c_sq,
        t_rc=t_rc, c_ci=c_ci,
    )
    return ExplorationPlan(mode=mode, T_c=T_c, T_omega=T_c,
                           predicted_state_bound=consts["x_t"],
                           constants=constants)


def runtime_bounds(mode: ActuationMode, t: int, T_c: int, noise, delta: float,
                   n: int, upsilon: float, kappa: float, c_ci: float,
                   lam: float = 1.0) -> tuple:
    """Diagnostic thresholds (alpha_t, chi_s, X_c^2, T_rc).

    alpha_t bounds the state norm during exploration in the given mode,
    chi_s and X_c^2 bound it after the switch (upsilon and kappa are the
    full-actuation constants), and T_rc is the settling time after which
    the tighter post-switch bound applies. Used for logging and
    good-event flags only, never for control.
    """
    si = mode.side_info
    d_i = mode.d_i
    m = n + d_i
    x_e = c_ci * m ** m
    consts = state_bound_constants(mode, max(t, 2), noise, lam, delta, n)
    v_cal = consts["v_cal"]
    z_t = math.sqrt(1.0 + 2.0 * si.kappa ** 2) * x_e + math.sqrt(2.0) * v_cal

    ldr = m * math.log(
        (m * lam + (1.0 + 2.0 * si.kappa ** 2) * x_e ** 2 * t + 2.0 * v_cal ** 2 * t)
        / (m * lam)
    )
    root_w = noise.sigma_w * math.sqrt(2.0 * n * (math.log(n / delta) + 0.5 * ldr))
    root_nu = si.b_bar_bound * noise.sigma_nu * math.sqrt(
        2.0 * d_i * (math.log(d_i / delta) + 0.5 * ldr)
    )
    beta_bound = (math.sqrt(lam) * si.s + root_w + root_nu) ** 2

    lead = (si.eta / si.upsilon) ** m / (1.0 - si.upsilon)
    noise_term = noise.sigma_w * math.sqrt(2.0 * n * math.log(n * t / delta))
    if d_i * t > delta:
        noise_term += si.s * noise.sigma_nu * math.sqrt(
            2.0 * d_i * math.log(d_i * t / delta)
        )
    alpha_t = lead * (
        consts["g_bar"] * z_t ** (m / (m + 1)) * beta_bound ** (1.0 / (2.0 * (m + 1)))
        + noise_term
    )

    span = max(t - T_c, 2)
    chi_s = (2.0 * noise.sigma_w / (1.0 - upsilon)) * math.sqrt(
        2.0 * n * math.log(n * span / delta)
    )
    x_c_sq = (32.0 * n * noise.sigma_w ** 2 * (1.0 + kappa ** 2)
              / (1.0 - upsilon) ** 2) * math.log(n * span / delta)
    settle = (m * math.log(m) + math.log(max(c_ci, 1e-300)) - math.log(chi_s)) \
        / math.log(2.0 / (1.0 - upsilon))
    t_rc = max(T_c, T_c + int(math.ceil(settle)))
    return alpha_t, chi_s, x_c_sq, t_rc
