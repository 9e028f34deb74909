"""Command-line entry point: batch simulation and canned reproductions.

Exit codes: 0 on success, 1 when a run fails or a reproduction misses its
thresholds, 2 for configuration or usage errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .ctanalysis import (
    DIProblem,
    consistency_monitor,
    delta_accumulation,
    deviation_bound,
    exp_lipschitz,
    gamma_bar,
    interpolate,
    tracking_solve,
)
from .engine import extract_noise, run
from .reports import (
    ensure_dir,
    render_certificate_figure,
    render_regret_figure,
    render_tail_figure,
    write_run_summary,
    write_scenario_report,
    write_trajectories,
)
from .scenarios import REGRET_LIMIT, SCENARIOS, run_scenario
from .smoothing import entropy_perturbation

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regretlab",
        description="Simulate repeated-game learning runs and reproduce the "
                    "canned consistency studies.",
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", metavar="PATH",
                        help="JSON experiment configuration to simulate")
    source.add_argument("--scenario", metavar="NAME", choices=sorted(SCENARIOS),
                        help="canned reproduction: " + ", ".join(sorted(SCENARIOS)))
    parser.add_argument("--jobs", type=int, default=1, metavar="N",
                        help="parallel seed runs (default 1)")
    parser.add_argument("--out", metavar="DIR", default=None,
                        help="output directory (default: config out_dir, or ./out)")
    parser.add_argument("--stride", choices=("full", "geometric"), default=None,
                        help="override the config's logging stride")
    return parser


def _run_seeds(config: ExperimentConfig, jobs: int):
    args = [dict(pm=config.pm, learner=config.learner, adversary=config.adversary,
                 prior=config.prior, n_stages=config.n_stages, seed=s,
                 stride=config.stride) for s in config.seeds]
    if jobs <= 1 or len(args) <= 1:
        return [run(**kw) for kw in args]
    first = run(**args[0])
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        rest = list(pool.map(lambda kw: run(**kw), args[1:]))
    return [first] + rest


def cmd_simulate(config_path: str, jobs: int, out_override, stride_override) -> int:
    try:
        config = load_config(config_path)
        if stride_override is not None or out_override is not None:
            from dataclasses import replace
            updates = {}
            if stride_override is not None:
                updates["stride"] = stride_override
            if out_override is not None:
                updates["out_dir"] = out_override
            config = replace(config, **updates)
            if config.wants_analysis and config.stride != "full":
                raise ConfigError("stride", "analysis toggles need every stage "
                                  'recorded; set "stride": "full"')
    except ConfigError as exc:
        print(f"config error - {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = ensure_dir(config.out_dir)
    try:
        trajs = _run_seeds(config, jobs)
        write_trajectories(trajs, out_dir, config.label)
        write_run_summary(trajs, os.path.join(out_dir, "summary.csv"))
        render_regret_figure(trajs, os.path.join(out_dir, "regret.png"))

        if config.extract_noise:
            for t in trajs:
                noise = extract_noise(t)
                np.savetxt(os.path.join(out_dir, f"noise_seed{t.seed}.csv"),
                           noise.values, delimiter=",",
                           header="per-stage increments", comments="# ")
        if config.monitor_nu is not None:
            if config.learner.schedule is None:
                raise ValueError("the gap monitor needs a learner with a gain "
                                 "schedule (SFP or VSFP)")
            prob = DIProblem(pm=config.pm, schedule=config.learner.schedule,
                             rho=entropy_perturbation())
            for t in trajs:
                report = consistency_monitor(t, prob, nu=config.monitor_nu)
                report.to_csv(os.path.join(out_dir, f"certificate_seed{t.seed}.csv"))
                render_certificate_figure(
                    report, os.path.join(out_dir, f"certificate_seed{t.seed}.png"))
            if config.tracking_windows:
                _write_tracking(config, trajs, prob, out_dir)
    except Exception as exc:
        print(f"run failed - {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    regrets = [t.final_regret for t in trajs]
    print(f"{config.label}: {len(trajs)} run(s) of {config.n_stages} stages -> {out_dir}")
    print(f"final regret: mean {float(np.mean(regrets)):.6f}, "
          f"min {min(regrets):.6f}, max {max(regrets):.6f}")
    return EXIT_OK


def _write_tracking(config: ExperimentConfig, trajs, prob: DIProblem,
                    out_dir: str) -> None:
    """Solve the tracking inclusion on the requested windows; one CSV per seed."""
    nu = config.monitor_nu
    h = 1e-3
    k_hi = max(config.tracking_windows)
    s_grid = np.cumsum(1.0 / (nu * np.arange(1, k_hi + 2)))
    for t in trajs:
        path = interpolate(t)
        noise = extract_noise(t)
        if s_grid[k_hi] > path.knot_times[-1]:
            raise ValueError(
                f"tracking window {k_hi} ends at s={s_grid[k_hi]:.2f}, past the "
                f"run horizon {path.knot_times[-1]:.2f}; lower the window index "
                "or raise n_stages")
        rows = ["k,a,b,deviation,bound,within"]
        for k in config.tracking_windows:
            a, b = float(s_grid[k - 1]), float(s_grid[k])
            tracked = tracking_solve(prob, path, a, b, h)
            dev = max(
                float(np.linalg.norm(tracked.values_at(float(s)) - path.values_at(float(s))))
                for s in np.linspace(a, b, 101))
            delta = delta_accumulation(noise, path, a, b - a)
            bound = deviation_bound(exp_lipschitz(nu), prob.diam_m * gamma_bar(a),
                                    delta, a, b) + 10 * h
            rows.append(f"{k},{a!r},{b!r},{dev!r},{bound!r},{int(dev <= bound)}")
        with open(os.path.join(out_dir, f"tracking_seed{t.seed}.csv"), "w") as fh:
            fh.write("\n".join(rows) + "\n")


def cmd_reproduce(name: str, jobs: int, out_override) -> int:
    out_dir = ensure_dir(out_override or os.path.join("out", name))
    try:
        result = run_scenario(name, jobs=jobs)
        report_path = write_scenario_report(result, out_dir)
        if result.trajectories:
            reference = REGRET_LIMIT if name == "example2" else None
            render_regret_figure(result.trajectories,
                                 os.path.join(out_dir, "regret.png"),
                                 reference=reference)
        if "tails" in result.series:
            from .scenarios import CONSISTENCY_SWEEP
            render_tail_figure(result.series["tails"],
                               CONSISTENCY_SWEEP["tail_threshold"],
                               os.path.join(out_dir, "tails.png"))
    except Exception as exc:
        print(f"scenario failed - {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    print("\n".join(result.report_lines()))
    print(f"report written to {report_path}")
    if not result.passed:
        failing = [label for label, ok, _ in result.checks if not ok]
        print(f"threshold violation: {failing[0]}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")     # exits 2
    if args.config is not None:
        return cmd_simulate(args.config, args.jobs, args.out, args.stride)
    return cmd_reproduce(args.scenario, args.jobs, args.out)


if __name__ == "__main__":
    sys.exit(main())
