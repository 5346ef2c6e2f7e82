"""Command-line entry points: plan, simulate, reproduce-paper, selfcheck."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .exceptions import OalqrError
from .harness import (
    builtin_experiment_config,
    load_config,
    plan_for_config,
    plan_record,
    run_experiment,
    write_outputs,
)


def _cmd_plan(args) -> int:
    config = load_config(args.config)
    plan = plan_for_config(config)
    record = plan_record(plan)
    text = json.dumps(record, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _cmd_simulate(args) -> int:
    config = load_config(args.config)
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if overrides:
        raw = dict(config.raw)
        raw.update(overrides)
        config = load_config(raw)
    baseline_map = {"switching": ("switching",), "full": ("full_actuation",),
                    "both": ("switching", "full_actuation")}
    baselines = baseline_map[args.baseline]
    outcome = run_experiment(config, baselines=baselines)
    out_dir = args.out or config.output_dir or "oalqr_out"
    summary = write_outputs(config, outcome, out_dir)
    failed = sum(1 for b in summary["baselines"].values()
                 for t in b["trials"] if t["error"])
    total = sum(len(b["trials"]) for b in summary["baselines"].values())
    print(f"wrote {out_dir}/summary.json ({total - failed}/{total} trials clean)")
    return 0 if failed < total else 3


def _cmd_reproduce(args) -> int:
    config = builtin_experiment_config(horizon=args.horizon, trials=args.trials,
                                       master_seed=args.seed)
    outcome = run_experiment(config)
    summary = write_outputs(config, outcome, args.out)
    for name, block in summary["baselines"].items():
        stats = block["stats"]
        print(f"{name}: median explore max |x| = "
              f"{stats['median_max_state_norm_explore']:.4f}, "
              f"regret slope = {stats['regret_slope']:.3f}")
    return 0


def _cmd_selfcheck(args) -> int:
    from dataclasses import replace

    from .benchmark import benchmark_plant
    from .estimation import ConfidenceEllipsoid, RadiusSpec, project_to_ellipsoid
    from .riccati import SystemParam, grad_trace_P, solve_dare, spectral_radius

    failures = 0

    def report(name, ok, detail=""):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'} {name}{(': ' + detail) if detail else ''}")
        failures += 0 if ok else 1

    plant = benchmark_plant()
    theta = plant.theta_star
    sol = solve_dare(theta, plant.Q, plant.R)
    P = plant.Q.copy()
    for _ in range(200_000):
        BPA = plant.B.T @ P @ plant.A
        Pn = plant.Q + plant.A.T @ P @ plant.A - BPA.T @ np.linalg.solve(
            plant.B.T @ P @ plant.B + plant.R, BPA)
        if np.linalg.norm(Pn - P, "fro") <= 1e-13:
            P = Pn
            break
        P = Pn
    report("riccati fixed point vs plain iteration",
           np.linalg.norm(sol.P - P, "fro") <= 1e-8,
           f"|dP|={np.linalg.norm(sol.P - P, 'fro'):.2e}")
    report("closed loop is stable", spectral_radius(plant.A + plant.B @ sol.K) < 1.0)

    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(5):
        par = SystemParam(0.4 * rng.standard_normal((4, 2)), 2, 2)
        g = grad_trace_P(par, np.eye(2), np.eye(2))
        h = 1e-6
        fd = np.zeros_like(g)
        for i in range(4):
            for j in range(2):
                up, dn = par.theta.copy(), par.theta.copy()
                up[i, j] += h
                dn[i, j] -= h
                fd[i, j] = (np.trace(solve_dare(SystemParam(up, 2, 2), np.eye(2), np.eye(2)).P)
                            - np.trace(solve_dare(SystemParam(dn, 2, 2), np.eye(2), np.eye(2)).P)) / (2 * h)
        worst = max(worst, np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(fd))))
    report("riccati gradient vs finite differences", worst <= 1e-4, f"rel err {worst:.2e}")

    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        M = rng.standard_normal((2, 2))
        est = ConfidenceEllipsoid.empty(1, 1, 1.0, 0.1, RadiusSpec(s=1.0, sigma_w=0.5))
        est = replace(est, V=M @ M.T + np.eye(2), beta=2.0)
        target = 3.0 * rng.standard_normal((2, 1))
        proj = project_to_ellipsoid(target, est)
        grid = np.linspace(0, 2 * np.pi, 20001)
        w, U = np.linalg.eigh(est.V)
        ring = (U / np.sqrt(w)) @ np.vstack([np.cos(grid), np.sin(grid)]) * np.sqrt(2.0)
        dists = np.linalg.norm(ring - target, axis=0)
        gap = abs(np.linalg.norm(proj - target) - dists.min())
        worst = max(worst, gap)
    report("ellipsoid projection vs boundary grid", worst <= 1e-3, f"gap {worst:.2e}")

    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oalqr",
        description="Adaptive LQ control of over-actuated systems with mode switching",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="select the exploration mode and duration")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("simulate", help="run seeded trials and write CSV/JSON outputs")
    p.add_argument("--config", required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--baseline", choices=["switching", "full", "both"], default="both")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("reproduce-paper",
                       help="run the bundled benchmark end to end")
    p.add_argument("--out", required=True)
    p.add_argument("--horizon", type=int, default=10_000)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_reproduce)

    p = sub.add_parser("selfcheck", help="run the built-in numeric oracle checks")
    p.set_defaults(func=_cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OalqrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
