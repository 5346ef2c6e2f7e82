"""Experiment configuration, orchestration, statistics and file output.

A configuration is one JSON document. Matrices are row-major nested
arrays, actuators are one-based in configs and reports (zero-based
internally). Trial seeds derive from the master seed through a seed
splitter, and noise streams are counter-based, so a (config, seed) pair
pins every output byte.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .benchmark import benchmark_plant, calibrate_side_info, calibrated_modes
from .controllers import EpisodeConfig, run_episode, switch_budget
from .exceptions import NoAdmissiblePoint, NoFeasibleMode, OalqrError, SimulationDiverged
from .modes import ActuationMode, SideInfo, enumerate_subsets
from .planner import (
    DEFAULT_CAP,
    ExplorationPlan,
    PlannerTuning,
    make_plan,
    plan_exploration,
)
from .simulator import NoiseConfig, PlantTruth, default_sigma_nu, optimal_avg_cost

CSV_HEADER = ["t", "mode_id", "state_norm", "cost", "cum_regret", "log_det_V",
              "lambda_min_V", "est_error", "beta", "switched", "alpha_bound",
              "good_event"]
WORKERS_ENV = "OALQR_WORKERS"


class ConfigError(OalqrError):
    """Configuration rejected; message carries the offending field path."""


def _require(cond: bool, path: str, msg: str):
    if not cond:
        raise ConfigError(f"config field '{path}': {msg}")


def _matrix(raw, path: str) -> np.ndarray:
    try:
        mat = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config field '{path}': not a numeric matrix ({exc})")
    _require(mat.ndim == 2, path, "must be a nested (row-major) array")
    return mat


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description."""

    plant: PlantTruth
    noise: NoiseConfig
    lam: float
    delta: float
    horizon: int
    trials: int
    modes: list
    explore_actuators: tuple = None
    explore_duration: int = None
    ofu_iters: int = 100
    ofu_step_rule: object = "paper"
    baselines: tuple = ("switching", "full_actuation")
    planner_cap: int = DEFAULT_CAP
    planner_tuning: PlannerTuning = None
    output_dir: str = None
    master_seed: int = 0
    raw: dict = field(default=None, repr=False)

    def full_mode(self) -> ActuationMode:
        for m in self.modes:
            if m.d_i == self.plant.d:
                return m
        raise ConfigError("config field 'modes': the full-actuation mode is "
                          "required (it failed admissibility or was omitted)")

    def mode_by_actuators(self, acts) -> ActuationMode:
        key = tuple(sorted(int(a) for a in acts))
        for m in self.modes:
            if m.actuators == key:
                return m
        raise ConfigError(f"config field 'explore.actuators': mode {key} is not "
                          "among the admissible modes")


def _parse_side_table(entries, path: str) -> dict:
    table = {}
    for i, row in enumerate(entries):
        p = f"{path}[{i}]"
        _require(isinstance(row, dict), p, "must be an object")
        _require("actuators" in row, p, "missing 'actuators'")
        acts = tuple(sorted(int(a) - 1 for a in row["actuators"]))
        kwargs = {}
        for name in ("s", "upsilon", "eta", "gamma", "theta_bound", "kappa",
                     "p_bound", "b_bar_bound"):
            _require(name in row or name == "b_bar_bound", p, f"missing '{name}'")
            if name in row:
                kwargs[name] = float(row[name])
        table[acts] = SideInfo(**kwargs)
    return table


def load_config(source) -> ExperimentConfig:
    """Build an ExperimentConfig from a dict, JSON text or file path."""
    if isinstance(source, dict):
        raw = source
    else:
        text = source
        if "\n" not in str(source) and os.path.exists(source):
            with open(source) as fh:
                text = fh.read()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            )
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    _require(isinstance(raw, dict), "<root>", "must be a JSON object")
    for key in ("plant", "noise", "horizon"):
        _require(key in raw, key, "is required")

    plant_raw = raw["plant"]
    for key in ("A", "B", "Q", "R"):
        _require(key in plant_raw, f"plant.{key}", "is required")
    try:
        plant = PlantTruth(
            A=_matrix(plant_raw["A"], "plant.A"), B=_matrix(plant_raw["B"], "plant.B"),
            Q=_matrix(plant_raw["Q"], "plant.Q"), R=_matrix(plant_raw["R"], "plant.R"),
        )
    except ValueError as exc:
        raise ConfigError(f"config field 'plant': {exc}")

    lam = float(raw.get("lambda", 1.0))
    delta = float(raw.get("delta", 1e-4))
    horizon = int(raw["horizon"])
    trials = int(raw.get("trials", 1))
    _require(horizon >= 2, "horizon", "must be at least 2")
    _require(trials >= 1, "trials", "must be at least 1")
    _require(0.0 < delta < 1.0, "delta", "must lie in (0, 1)")
    _require(lam > 0.0, "lambda", "must be positive")

    noise_raw = raw["noise"]
    _require("sigma_w" in noise_raw, "noise.sigma_w", "is required")
    sigma_w = float(noise_raw["sigma_w"])
    sigma_w_bar = float(noise_raw.get("sigma_w_bar", sigma_w))

    side_raw = raw.get("side_info", {})
    subsets_raw = raw.get("modes", "all_nonempty_subsets")
    if subsets_raw == "all_nonempty_subsets":
        subsets = enumerate_subsets(plant.d)
    else:
        _require(isinstance(subsets_raw, list), "modes",
                 "must be 'all_nonempty_subsets' or a list of actuator lists")
        subsets = []
        for i, acts in enumerate(subsets_raw):
            acts0 = tuple(sorted(int(a) - 1 for a in acts))
            _require(all(0 <= a < plant.d for a in acts0), f"modes[{i}]",
                     f"actuators out of range 1..{plant.d}")
            subsets.append(acts0)
        subsets = sorted(set(subsets), key=lambda a: (len(a), a))

    table = _parse_side_table(side_raw.get("table", []), "side_info.table")
    calibrate = bool(side_raw.get("calibrate", not table))
    s_default = float(side_raw.get("s", 1.0))
    modes = []
    next_id = 2
    for acts in subsets:
        mode_id = 1 if len(acts) == plant.d else next_id
        if len(acts) != plant.d:
            next_id += 1
        if acts in table:
            side = table[acts]
        elif calibrate:
            side = calibrate_side_info(
                plant, acts, s_default, sigma_w_bar=sigma_w_bar,
                n_samples=int(side_raw.get("samples", 2000)),
                margin=float(side_raw.get("margin", 1.05)),
                seed=int(side_raw.get("seed", 0)) + 13 * mode_id,
            )
            if side is None:
                continue
        else:
            raise ConfigError(
                f"config field 'side_info': mode {tuple(a + 1 for a in acts)} has "
                "no table entry and calibration is disabled"
            )
        modes.append(ActuationMode(id=mode_id, actuators=acts, side_info=side))
    _require(len(modes) > 0, "modes", "no admissible mode survived")

    full = next((m for m in modes if m.d_i == plant.d), None)
    sigma_nu_raw = noise_raw.get("sigma_nu")
    if sigma_nu_raw is None:
        kappa_full = full.side_info.kappa if full is not None else modes[0].side_info.kappa
        sigma_nu = default_sigma_nu(kappa_full, sigma_w_bar)
    else:
        sigma_nu = float(sigma_nu_raw)
    noise = NoiseConfig(sigma_w=sigma_w, sigma_w_bar=sigma_w_bar,
                        sigma_nu=sigma_nu, seed=int(noise_raw.get("seed", 0)))

    explore_acts = None
    explore_dur = None
    if "explore" in raw:
        exp_raw = raw["explore"]
        _require("actuators" in exp_raw and "duration" in exp_raw, "explore",
                 "needs 'actuators' and 'duration'")
        explore_acts = tuple(sorted(int(a) - 1 for a in exp_raw["actuators"]))
        explore_dur = int(exp_raw["duration"])
        _require(1 <= explore_dur < horizon, "explore.duration",
                 "must be in [1, horizon)")

    ofu_raw = raw.get("ofu", {})
    step_rule = ofu_raw.get("step_rule", "paper")
    if isinstance(step_rule, dict):
        _require("fixed" in step_rule, "ofu.step_rule", "object form needs 'fixed'")
        step_rule = float(step_rule["fixed"])

    planner_raw = raw.get("planner", {})
    tuning = None
    if all(k in planner_raw for k in ("sigma1", "sigma2", "sigma3")):
        tuning = PlannerTuning(
            sigma1_sq=float(planner_raw["sigma1"]) ** 2,
            sigma2_sq=float(planner_raw["sigma2"]) ** 2,
            sigma3_sq=float(planner_raw["sigma3"]) ** 2,
        )

    baselines = tuple(raw.get("baselines", ["switching", "full_actuation"]))
    for b in baselines:
        _require(b in ("switching", "full_actuation"), "baselines",
                 f"unknown baseline {b!r}")

    return ExperimentConfig(
        plant=plant, noise=noise, lam=lam, delta=delta, horizon=horizon,
        trials=trials, modes=modes, explore_actuators=explore_acts,
        explore_duration=explore_dur, ofu_iters=int(ofu_raw.get("iters", 100)),
        ofu_step_rule=step_rule, baselines=baselines,
        planner_cap=int(planner_raw.get("cap", DEFAULT_CAP)),
        planner_tuning=tuning, output_dir=raw.get("output_dir"),
        master_seed=int(raw.get("master_seed", 0)), raw=raw,
    )


def builtin_experiment_config(horizon: int = 10_000, trials: int = 10,
                              master_seed: int = 0) -> ExperimentConfig:
    """The bundled three-actuator benchmark, calibrated and pinned.

    Noise scale 0.1, unit regularizer, confidence 1/horizon. The
    exploration window is pinned to the first two actuators for 50
    steps; the analytical planner output over the same side information
    is still reported by the plan command. The parameter-norm bound is
    2.5 so the true parameters sit inside the admissible ball.
    """
    plant = benchmark_plant()
    return config_from_dict({
        "plant": {"A": plant.A.tolist(), "B": plant.B.tolist(),
                  "Q": plant.Q.tolist(), "R": plant.R.tolist()},
        "noise": {"sigma_w": 0.1, "sigma_w_bar": 0.1, "sigma_nu": None, "seed": 0},
        "lambda": 1.0,
        "delta": 1.0 / horizon,
        "horizon": horizon,
        "trials": trials,
        "modes": "all_nonempty_subsets",
        "side_info": {"calibrate": True, "s": 2.5, "samples": 2000,
                      "margin": 1.05, "seed": 20240},
        "explore": {"actuators": [1, 2], "duration": 50},
        "ofu": {"iters": 100, "step_rule": "paper"},
        "planner": {"cap": 10 ** 12},
        "baselines": ["switching", "full_actuation"],
        "master_seed": master_seed,
    })


def trial_seed(master_seed: int, index: int) -> int:
    ss = np.random.SeedSequence([int(master_seed) & 0x7FFFFFFF, int(index)])
    return int(ss.generate_state(1, np.uint64)[0] & np.uint64((1 << 63) - 1))


def plan_for_config(config: ExperimentConfig) -> ExplorationPlan:
    """Run the analytical mode/duration selection over the config's modes."""
    return plan_exploration(
        config.modes, config.noise, config.lam, config.delta,
        config.plant.n, config.plant.d, cap=config.planner_cap,
        tuning=config.planner_tuning,
    )


def episode_plans(config: ExperimentConfig) -> dict:
    """Per-baseline exploration plans actually used by the episodes.

    With a pinned exploration block the plan is built at that duration;
    otherwise the analytical planner decides (and its duration is used
    verbatim, however large).
    """
    full = config.full_mode()
    if config.explore_duration is not None:
        mode = config.mode_by_actuators(config.explore_actuators)
        t_c = config.explore_duration
    else:
        planned = plan_for_config(config)
        mode, t_c = planned.mode, planned.T_c
    plans = {}
    common = dict(noise=config.noise, lam=config.lam, delta=config.delta,
                  n=config.plant.n, d=config.plant.d,
                  tuning=config.planner_tuning,
                  kappa_full=full.side_info.kappa,
                  upsilon_full=full.side_info.upsilon)
    plans["switching"] = make_plan(mode, t_c, **common)
    plans["full_actuation"] = make_plan(full, t_c, **common)
    return plans


def _run_trial(args):
    config, plan, seed = args
    episode_cfg = EpisodeConfig(
        noise=config.noise, lam=config.lam, delta=config.delta,
        full_side=config.full_mode().side_info, ofu_iters=config.ofu_iters,
        ofu_step_rule=config.ofu_step_rule, seed=seed,
    )
    try:
        ledger = run_episode(config.plant, plan, config.horizon, episode_cfg, seed)
        return {"seed": seed, "ledger": ledger, "error": None}
    except SimulationDiverged as exc:
        return {"seed": seed, "ledger": exc.ledger, "error": str(exc)}
    except NoAdmissiblePoint as exc:
        return {"seed": seed, "ledger": None, "error": f"init failed: {exc}"}


def run_experiment(config: ExperimentConfig, baselines=None) -> dict:
    """Run all trials for the requested baselines.

    Returns {"plans": ..., "baselines": {name: [trial dicts]}}. Episode
    failures are recorded per trial, not raised, unless every trial of a
    baseline failed.
    """
    baselines = tuple(baselines or config.baselines)
    plans = episode_plans(config)
    seeds = [trial_seed(config.master_seed, k) for k in range(config.trials)]
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    results = {}
    for name in baselines:
        jobs = [(config, plans[name], seed) for seed in seeds]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                trial_results = list(pool.map(_run_trial, jobs))
        else:
            trial_results = [_run_trial(job) for job in jobs]
        if all(r["ledger"] is None for r in trial_results):
            raise OalqrError(f"every trial of baseline {name!r} failed")
        results[name] = trial_results
    return {"plans": plans, "baselines": results}


def fit_loglog_slope(ts: np.ndarray, ys: np.ndarray) -> float:
    """Least-squares slope of log y against log t, positive pairs only."""
    ts = np.asarray(ts, dtype=float)
    ys = np.asarray(ys, dtype=float)
    keep = (ts > 0) & (ys > 0)
    if int(np.sum(keep)) < 2:
        return float("nan")
    lx, ly = np.log(ts[keep]), np.log(ys[keep])
    slope, _ = np.polyfit(lx, ly, 1)
    return float(slope)


def summarize(ledgers, t_c: int, horizon: int) -> dict:
    """Cross-trial statistics for one baseline."""
    ledgers = [l for l in ledgers if l is not None]
    if not ledgers:
        raise ValueError("summarize needs at least one ledger")
    explore_max = [l.max_state_norm(upto=t_c) for l in ledgers]
    overall_max = [l.max_state_norm() for l in ledgers]
    complete = [l for l in ledgers if l.rows[-1]["t"] >= horizon]
    slope = float("nan")
    median_curve = None
    if complete:
        curves = np.stack([l.column("cum_regret") for l in complete])
        median_curve = np.median(curves, axis=0)
        ts = complete[0].column("t")
        window = ts >= t_c
        slope = fit_loglog_slope(ts[window], median_curve[window])
    return {
        "trials": len(ledgers),
        "completed": len(complete),
        "max_state_norm_explore": explore_max,
        "median_max_state_norm_explore": float(np.median(explore_max)),
        "max_state_norm": overall_max,
        "regret_slope": slope,
        "final_cum_regret": [l.rows[-1]["cum_regret"] for l in ledgers],
        "switch_counts": [l.switch_count for l in ledgers],
        "good_event_violations": [l.summary()["good_event_violations"] for l in ledgers],
        "r0_totals": [l.r0_empirical for l in ledgers],
    }


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_trial_csv(path: str, ledger) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in ledger.rows:
            writer.writerow([
                int(row["t"]), int(row["mode_id"]), _fmt(row["state_norm"]),
                _fmt(row["cost"]), _fmt(row["cum_regret"]), _fmt(row["log_det_V"]),
                _fmt(row["lambda_min_V"]), _fmt(row["est_error"]), _fmt(row["beta"]),
                int(row["switched"]), _fmt(row["alpha_bound"]), int(row["good_event"]),
            ])


def plan_record(plan: ExplorationPlan) -> dict:
    return {
        "mode_id": plan.mode.id,
        "actuators": plan.mode.actuators_one_based(),
        "T_c": plan.T_c,
        "T_omega": plan.T_omega,
        "predicted_state_bound": plan.predicted_state_bound,
        "constants": plan.constants.as_dict(),
    }


def write_outputs(config: ExperimentConfig, outcome: dict, out_dir: str) -> dict:
    """Emit trial CSVs, plan.json and summary.json under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    plant = config.plant
    summary = {
        "j_star": optimal_avg_cost(plant, config.noise.sigma_w_bar),
        "horizon": config.horizon,
        "exploration_end": next(iter(outcome["plans"].values())).T_c,
        "baselines": {},
    }
    for name, trials in outcome["baselines"].items():
        base_dir = os.path.join(out_dir, name)
        os.makedirs(base_dir, exist_ok=True)
        ledgers = []
        trial_meta = []
        for k, rec in enumerate(trials):
            meta = {"trial": k, "seed": rec["seed"], "error": rec["error"]}
            if rec["ledger"] is not None:
                write_trial_csv(os.path.join(base_dir, f"trial_{k}.csv"), rec["ledger"])
                ledgers.append(rec["ledger"])
                meta.update(rec["ledger"].summary())
                meta["switch_budget"] = switch_budget(
                    rec["ledger"], plant.n, plant.d,
                    outcome["plans"][name].mode.d_i, config.lam,
                )
            trial_meta.append(meta)
        stats = summarize(ledgers, next(iter(outcome["plans"].values())).T_c,
                          config.horizon)
        summary["baselines"][name] = {"stats": stats, "trials": trial_meta,
                                      "plan": plan_record(outcome["plans"][name])}

    try:
        analytic = plan_for_config(config)
        summary["analytic_plan"] = plan_record(analytic)
    except (NoFeasibleMode, OalqrError) as exc:
        summary["analytic_plan"] = {"error": str(exc)}

    with open(os.path.join(out_dir, "plan.json"), "w") as fh:
        json.dump(summary.get("analytic_plan"), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return summary
