"""Canned reproduction scenarios with pinned seeds and reviewable thresholds.

Each scenario definition is a plain data block (seeds, sizes, tolerances) so
threshold tuning shows up in review as a data change. Runners return a
ScenarioResult whose `checks` list carries one pass/fail line per claim.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ctanalysis import (
    DIProblem,
    delta_accumulation,
    deviation_bound,
    euler_solve,
    exp_lipschitz,
    gamma_bar,
    interpolate,
    m_of_s,
    tracking_solve,
)
from .engine import extract_noise, parity_event_frequency, run
from .game import PayoffMatrix, SimplexPoint, StateTriple
from .smoothing import BetaSchedule, entropy_perturbation
from .strategies import StrategySpec

PENNIES_ENTRIES = ((1.0, 0.0), (0.0, 1.0))
STANDARD_PRIOR = (1.0 / 3.0, 2.0 / 3.0)

# fixed 3x3 game for the sweep; entries drawn once from U[0,1] and frozen
RANDOM_3X3_ENTRIES = (
    (0.060813, 0.065612, 0.752872),
    (0.582982, 0.261314, 0.988897),
    (0.554874, 0.717795, 0.512878),
)

# limiting cell frequencies of the growing-gain counterexample:
# odd stages converge to 1/(1+e^{1/3}), even stages to 1/(1+e^{2/3})
ODD_LIMIT = 1.0 / (1.0 + math.exp(1.0 / 3.0))
EVEN_LIMIT = 1.0 / (1.0 + math.exp(2.0 / 3.0))
REGRET_LIMIT = 0.5 - 0.5 * (ODD_LIMIT + EVEN_LIMIT)

EXAMPLE1 = {
    "n_stages": 10_000,
    "regret_slack": 1e-10,          # on top of the exact 1/(2N) band
}

EXAMPLE2 = {
    "n_stages": 1_000_000,
    "seeds": tuple(range(1, 33)),
    "mean_regret_tol": 0.01,
    "frequency_tol": 0.01,
}

CONSISTENCY_SWEEP = {
    "n_stages": 1_000_000,
    "seeds": tuple(range(1, 33)),
    "exponents": (0.3, 0.5, 0.8),
    "tail_threshold": 0.05,
    "checkpoints": (10_000, 100_000, 1_000_000),
}

BOUNDS_CHECK = {
    "step": 1e-3,
    "decay_ts": (1.0, 2.0, 4.0),
    "decay_Ts": (1.0, 2.0),
    "tracking_ks": (5, 10, 20),
    "tracking_seeds": tuple(range(1, 33)),
    "tracking_stages": 2_000,
    "nu": 0.5,
}


@dataclass
class ScenarioResult:
    name: str
    passed: bool
    checks: list = field(default_factory=list)      # (label, ok, detail)
    metrics: dict = field(default_factory=dict)
    trajectories: list = field(default_factory=list)
    series: dict = field(default_factory=dict)

    def add(self, label: str, ok: bool, detail: str) -> None:
        self.checks.append((label, bool(ok), detail))

    def finish(self) -> "ScenarioResult":
        self.passed = all(ok for _, ok, _ in self.checks)
        return self

    def report_lines(self) -> list:
        lines = [f"scenario: {self.name}"]
        for label, ok, detail in self.checks:
            lines.append(f"  [{'pass' if ok else 'FAIL'}] {label}: {detail}")
        lines.append(f"result: {'PASS' if self.passed else 'FAIL'}")
        return lines


def _pennies() -> PayoffMatrix:
    return PayoffMatrix(np.array(PENNIES_ENTRIES))


def _prior() -> SimplexPoint:
    return SimplexPoint(np.array(STANDARD_PRIOR))


def _parallel_runs(make_args: list, jobs: int) -> list:
    if jobs <= 1 or len(make_args) <= 1:
        return [run(**kw) for kw in make_args]
    # first seed runs alone so a shared adversary chain is cached once,
    # not recomputed by every worker
    first = run(**make_args[0])
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        rest = list(pool.map(lambda kw: run(**kw), make_args[1:]))
    return [first] + rest


def run_example1(n_stages: Optional[int] = None, jobs: int = 1) -> ScenarioResult:
    """Deterministic cycling: average payoff exactly 0, regret pinned to 1/2."""
    n = n_stages or EXAMPLE1["n_stages"]
    res = ScenarioResult(name="example1", passed=False)
    learner = StrategySpec(kind="FP")
    adversary = StrategySpec(kind="AlternatingDeterministic")
    traj = run(_pennies(), learner, adversary, _prior(), n_stages=n, seed=0,
               stride="geometric")
    res.trajectories.append(traj)
    band = 0.5 / n + EXAMPLE1["regret_slack"]
    res.add("average payoff is exactly zero", traj.final_avg_payoff == 0.0,
            f"pi_bar = {traj.final_avg_payoff!r}")
    res.add(f"final regret within {band:.2e} of 1/2",
            abs(traj.final_regret - 0.5) <= band,
            f"e_N = {traj.final_regret:.10f}")
    res.metrics["final_regret"] = traj.final_regret
    res.metrics["final_avg_payoff"] = traj.final_avg_payoff
    return res.finish()


def run_example2(n_stages: Optional[int] = None, seeds: Optional[tuple] = None,
                 jobs: int = 1) -> ScenarioResult:
    """Growing gain with a blended prior: regret stabilizes strictly above 0."""
    n = n_stages or EXAMPLE2["n_stages"]
    seeds = tuple(seeds) if seeds is not None else EXAMPLE2["seeds"]
    res = ScenarioResult(name="example2", passed=False)
    schedule = BetaSchedule.from_table(np.arange(1, n + 1, dtype=float))
    learner = StrategySpec(kind="VSFP", schedule=schedule, use_prior_blending=True)
    adversary = StrategySpec(kind="AlternatingDeterministic")
    args = [dict(pm=_pennies(), learner=learner, adversary=adversary, prior=_prior(),
                 n_stages=n, seed=s, stride="geometric") for s in seeds]
    trajs = _parallel_runs(args, jobs)
    res.trajectories.extend(trajs)

    regrets = np.array([t.final_regret for t in trajs])
    freq_odd = np.empty(len(trajs))
    freq_even = np.empty(len(trajs))
    for i, t in enumerate(trajs):
        freq_odd[i], freq_even[i] = parity_event_frequency(t)
    mean_regret = float(np.mean(regrets))
    tol = EXAMPLE2["mean_regret_tol"]
    ftol = EXAMPLE2["frequency_tol"]
    res.add(f"mean final regret within {tol} of {REGRET_LIMIT:.4f}",
            abs(mean_regret - REGRET_LIMIT) <= tol,
            f"mean e_N = {mean_regret:.5f} over {len(seeds)} seeds")
    res.add(f"odd-stage payoff-1 frequency within {ftol} of {ODD_LIMIT:.4f}",
            abs(float(np.mean(freq_odd)) - ODD_LIMIT) <= ftol,
            f"measured {float(np.mean(freq_odd)):.5f}")
    res.add(f"even-stage payoff-1 frequency within {ftol} of {EVEN_LIMIT:.4f}",
            abs(float(np.mean(freq_even)) - EVEN_LIMIT) <= ftol,
            f"measured {float(np.mean(freq_even)):.5f}")
    res.metrics.update(mean_regret=mean_regret,
                       freq_odd=float(np.mean(freq_odd)),
                       freq_even=float(np.mean(freq_even)))
    return res.finish()


def _sweep_adversaries(n_cols: int) -> dict:
    return {
        "alternating": StrategySpec(kind="AlternatingDeterministic"),
        "iid_uniform": StrategySpec(kind="IIDMixed",
                                    fixed_mix=SimplexPoint(np.full(n_cols, 1.0 / n_cols))),
        "best_response": StrategySpec(kind="BestResponseAdversary"),
    }


def run_consistency_sweep(n_stages: Optional[int] = None,
                          seeds: Optional[tuple] = None,
                          exponents: Optional[tuple] = None,
                          jobs: int = 1) -> ScenarioResult:
    """Sublinear gain growth keeps the regret tail small everywhere."""
    n = n_stages or CONSISTENCY_SWEEP["n_stages"]
    seeds = tuple(seeds) if seeds is not None else CONSISTENCY_SWEEP["seeds"]
    exponents = tuple(exponents) if exponents is not None else CONSISTENCY_SWEEP["exponents"]
    threshold = CONSISTENCY_SWEEP["tail_threshold"]
    checkpoints = tuple(c for c in CONSISTENCY_SWEEP["checkpoints"] if c <= n)
    res = ScenarioResult(name="consistency_sweep", passed=False)

    games = {
        "pennies": _pennies(),
        "random_3x3": PayoffMatrix(np.array(RANDOM_3X3_ENTRIES)),
    }
    tails = {}
    for game_name, pm in games.items():
        prior = SimplexPoint(np.full(pm.n_cols, 1.0 / pm.n_cols))
        for nu in exponents:
            learner = StrategySpec(kind="VSFP", schedule=BetaSchedule.power(nu))
            for adv_name, adversary in _sweep_adversaries(pm.n_cols).items():
                args = [dict(pm=pm, learner=learner, adversary=adversary, prior=prior,
                             n_stages=n, seed=s, stride="geometric",
                             checkpoints=checkpoints) for s in seeds]
                trajs = _parallel_runs(args, jobs)
                cell = f"{game_name}/nu={nu}/{adv_name}"
                cell_tails = np.array([t.tail_max_regret for t in trajs])
                tails[cell] = cell_tails
                worst = float(np.max(cell_tails))
                res.add(f"tail regret <= {threshold} [{cell}]", worst <= threshold,
                        f"worst over {len(seeds)} seeds = {worst:.4f}")
                if len(checkpoints) > 1:
                    cps = sorted(checkpoints)
                    med = np.median(np.array(
                        [[t.checkpoint_tails[c] for c in cps] for t in trajs]), axis=0)
                    ok = bool(np.all(np.diff(med) <= 1e-12))
                    res.add(f"median tail nonincreasing [{cell}]", ok,
                            "medians " + ", ".join(f"{v:.4f}" for v in med))
    res.series["tails"] = tails
    res.metrics["worst_tail"] = float(max(np.max(v) for v in tails.values()))
    return res.finish()


def run_bounds_check(tracking_seeds: Optional[tuple] = None,
                     jobs: int = 1) -> ScenarioResult:
    """Decay of the value gap along solutions, and tracking within its bound."""
    cfg = BOUNDS_CHECK
    res = ScenarioResult(name="bounds_check", passed=False)
    h = cfg["step"]
    nu = cfg["nu"]
    pm = _pennies()
    sched = BetaSchedule.power(nu)
    prob = DIProblem(pm=pm, schedule=sched, rho=entropy_perturbation())

    # gap decay along Euler solutions, three selection policies
    w0 = StateTriple(SimplexPoint(np.array([0.5, 0.5])),
                     SimplexPoint(np.array([0.9, 0.1])), -0.5)
    t_hi = max(cfg["decay_ts"]) + max(cfg["decay_Ts"])
    policies = {
        "constant": SimplexPoint(np.array([0.5, 0.5])),
        "worst_gap_vertex": "worst_phi",
        "time_varying": lambda s, w: SimplexPoint(
            np.array([0.5 + 0.4 * math.sin(s), 0.5 - 0.4 * math.sin(s)])),
    }
    worst_margin = -np.inf
    for pol_name, policy in policies.items():
        sol = euler_solve(prob, w0, 1.0, t_hi, h, policy)
        psi = sol.psi_series()
        ok = True
        for t in cfg["decay_ts"]:
            for T in cfg["decay_Ts"]:
                i0 = int(np.argmin(np.abs(sol.times - t)))
                i1 = int(np.argmin(np.abs(sol.times - (t + T))))
                lhs = float(psi[i1])
                rhs = (math.exp(-T) * float(psi[i0])
                       + 1.0 / prob.beta_at(float(sol.times[i0])) + 10 * h)
                worst_margin = max(worst_margin, lhs - rhs)
                ok = ok and lhs <= rhs
        res.add(f"gap decay along solutions [{pol_name}]", ok,
                f"worst slack used so far {worst_margin:.2e}")
    res.metrics["decay_worst_margin"] = float(worst_margin)

    # tracking a stochastic path stays within the deviation bound
    seeds = tuple(tracking_seeds) if tracking_seeds is not None else cfg["tracking_seeds"]
    learner = StrategySpec(kind="VSFP", schedule=sched)
    adversary = StrategySpec(kind="AlternatingDeterministic")
    T_grid = 1.0 / (nu * np.arange(1, max(cfg["tracking_ks"]) + 2))
    S_grid = np.cumsum(T_grid)
    n_windows = 0
    n_ok = 0
    worst_ratio = 0.0
    for seed in seeds:
        traj = run(pm, learner, adversary, _prior(),
                   n_stages=cfg["tracking_stages"], seed=seed, stride="full")
        path = interpolate(traj)
        noise = extract_noise(traj)
        for k in cfg["tracking_ks"]:
            a, b = float(S_grid[k - 1]), float(S_grid[k])
            tracked = tracking_solve(prob, path, a, b, h)
            dev = max(
                float(np.linalg.norm(tracked.values_at(float(s)) - path.values_at(float(s))))
                for s in np.linspace(a, b, 101))
            delta = delta_accumulation(noise, path, a, b - a)
            bound = deviation_bound(exp_lipschitz(nu), prob.diam_m * gamma_bar(a),
                                    delta, a, b) + 10 * h
            n_windows += 1
            n_ok += dev <= bound
            worst_ratio = max(worst_ratio, dev / bound)
    res.add("tracked deviation within bound on every window", n_ok == n_windows,
            f"{n_ok}/{n_windows} windows, worst dev/bound = {worst_ratio:.3f}")
    res.metrics["tracking_windows"] = n_windows
    res.metrics["tracking_worst_ratio"] = worst_ratio

    # clock growth diagnostic: gate on the true envelope; the (e-1)/e lower
    # constant sometimes quoted for m(s) is only reported, since it already
    # fails at s=1 (m(1)=1 < e-1)
    s_vals = np.arange(1, 13, dtype=float)
    ms = np.array([m_of_s(float(s)) for s in s_vals])
    envelope_ok = bool(np.all(np.exp(s_vals - 1.0) <= ms)
                       and np.all(ms <= np.exp(s_vals) - 1.0))
    claimed_ok = bool(np.all((math.e - 1.0) / math.e * np.exp(s_vals) <= ms))
    res.add("clock growth within e^(s-1) .. e^s - 1 for s=1..12", envelope_ok,
            "sharper (e-1)/e constant " +
            ("also holds" if claimed_ok else "fails, reported non-gating"))
    res.metrics["claimed_clock_constant_holds"] = claimed_ok
    return res.finish()


SCENARIOS: dict = {
    "example1": run_example1,
    "example2": run_example2,
    "consistency_sweep": run_consistency_sweep,
    "bounds_check": run_bounds_check,
}


def run_scenario(name: str, jobs: int = 1, **overrides) -> ScenarioResult:
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; expected one of "
                         f"{sorted(SCENARIOS)}")
    return SCENARIOS[name](jobs=jobs, **overrides)
