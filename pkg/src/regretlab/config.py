"""Experiment configuration: JSON in, validated objects out.

Every validation failure carries the dotted path of the offending field so
batch users can fix config files without reading tracebacks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .game import PayoffMatrix, SimplexPoint
from .smoothing import BetaSchedule
from .strategies import ADVERSARY_KINDS, LEARNER_KINDS, StrategySpec

STRIDES = ("full", "geometric")


class ConfigError(ValueError):
    """Invalid experiment configuration; `field` is the dotted JSON path."""

    def __init__(self, field_path: str, message: str):
        self.field = field_path
        super().__init__(f"{field_path}: {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    pm: PayoffMatrix
    learner: StrategySpec
    adversary: StrategySpec
    prior: SimplexPoint
    n_stages: int
    seeds: tuple
    stride: str = "geometric"
    extract_noise: bool = False
    monitor_nu: Optional[float] = None
    tracking_windows: tuple = ()
    out_dir: str = "out"
    label: str = "experiment"

    @property
    def wants_analysis(self) -> bool:
        return bool(self.extract_noise or self.monitor_nu is not None
                    or self.tracking_windows)

    def describe(self) -> dict:
        return {
            "label": self.label,
            "payoff_matrix": self.pm.entries.tolist(),
            "learner": self.learner.describe(),
            "adversary": self.adversary.describe(),
            "prior": self.prior.coords.tolist(),
            "n_stages": self.n_stages,
            "seeds": list(self.seeds),
            "stride": self.stride,
            "extract_noise": self.extract_noise,
            "monitor_nu": self.monitor_nu,
            "tracking_windows": list(self.tracking_windows),
            "out_dir": self.out_dir,
        }


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"{where}.{key}" if where else key, "missing required field")
    return obj[key]


def _as_mapping(value, where: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(where, f"expected an object, got {type(value).__name__}")
    return value


def parse_schedule(obj, where: str) -> BetaSchedule:
    obj = _as_mapping(obj, where)
    kind = _require(obj, "kind", where)
    try:
        if kind == "constant":
            return BetaSchedule.constant_beta(float(_require(obj, "beta", where)))
        if kind == "power":
            return BetaSchedule.power(float(_require(obj, "nu", where)))
        if kind == "table":
            return BetaSchedule.from_table(_require(obj, "values", where))
        if kind == "linear":
            # the classical growing-gain counterexample, beta_n = n, needs a
            # horizon to materialize as a table
            n = int(_require(obj, "n_stages", where))
            if n < 1:
                raise ValueError(f"n_stages must be >= 1, got {n}")
            return BetaSchedule.from_table(np.arange(1, n + 1, dtype=float))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from exc
    raise ConfigError(f"{where}.kind",
                      f"unknown schedule kind {kind!r}; expected constant, power, "
                      "table, or linear")


def parse_strategy(obj, where: str, n_stages: int) -> StrategySpec:
    obj = _as_mapping(obj, where)
    kind = _require(obj, "kind", where)
    allowed = {"kind", "schedule", "fixed_mix", "use_prior_blending"}
    stray = sorted(set(obj) - allowed)
    if stray:
        raise ConfigError(f"{where}.{stray[0]}", "unknown field")
    schedule = None
    if "schedule" in obj:
        sched_obj = dict(_as_mapping(obj["schedule"], f"{where}.schedule"))
        if sched_obj.get("kind") == "linear":
            sched_obj.setdefault("n_stages", n_stages)
        schedule = parse_schedule(sched_obj, f"{where}.schedule")
    fixed_mix = None
    if "fixed_mix" in obj:
        try:
            fixed_mix = SimplexPoint(np.asarray(obj["fixed_mix"], dtype=float))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.fixed_mix", str(exc)) from exc
    blending = obj.get("use_prior_blending")
    if blending is not None and not isinstance(blending, bool):
        raise ConfigError(f"{where}.use_prior_blending", "expected true or false")
    try:
        return StrategySpec(kind=kind, schedule=schedule, fixed_mix=fixed_mix,
                            use_prior_blending=blending)
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from exc


def _parse_payoff_matrix(obj, where: str) -> PayoffMatrix:
    try:
        return PayoffMatrix(np.asarray(obj, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from exc


def _parse_seeds(obj, where: str) -> tuple:
    if not isinstance(obj, (list, tuple)):
        raise ConfigError(where, "expected a list of integers")
    if len(obj) == 0:
        raise ConfigError(where, "at least one seed is required")
    seeds = []
    for i, v in enumerate(obj):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{where}[{i}]", f"expected an integer, got {v!r}")
        if v < 0:
            raise ConfigError(f"{where}[{i}]", f"seeds must be nonnegative, got {v}")
        seeds.append(v)
    if len(set(seeds)) != len(seeds):
        raise ConfigError(where, "duplicate seeds")
    return tuple(seeds)


def parse_config(data: dict) -> ExperimentConfig:
    data = _as_mapping(data, "config")
    allowed = {"label", "payoff_matrix", "learner", "adversary", "prior", "n_stages",
               "seeds", "stride", "analysis", "out_dir"}
    stray = sorted(set(data) - allowed)
    if stray:
        raise ConfigError(stray[0], "unknown field")

    n_stages = _require(data, "n_stages", "")
    if isinstance(n_stages, bool) or not isinstance(n_stages, int):
        raise ConfigError("n_stages", f"expected an integer, got {n_stages!r}")
    if n_stages < 1:
        raise ConfigError("n_stages", f"must be >= 1, got {n_stages}")

    pm = _parse_payoff_matrix(_require(data, "payoff_matrix", ""), "payoff_matrix")
    learner = parse_strategy(_require(data, "learner", ""), "learner", n_stages)
    adversary = parse_strategy(_require(data, "adversary", ""), "adversary", n_stages)
    if learner.kind not in LEARNER_KINDS:
        raise ConfigError("learner.kind", f"{learner.kind} cannot act as the learner")
    if adversary.kind not in ADVERSARY_KINDS:
        raise ConfigError("adversary.kind",
                          f"{adversary.kind} cannot act as the adversary")

    try:
        prior = SimplexPoint(np.asarray(_require(data, "prior", ""), dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError("prior", str(exc)) from exc
    if len(prior) != pm.n_cols:
        raise ConfigError("prior",
                          f"length {len(prior)} does not match the {pm.n_cols} "
                          "adversary actions")

    seeds = _parse_seeds(_require(data, "seeds", ""), "seeds")

    stride = data.get("stride", "geometric")
    if stride not in STRIDES:
        raise ConfigError("stride", f"expected one of {STRIDES}, got {stride!r}")

    analysis = _as_mapping(data.get("analysis", {}), "analysis")
    stray = sorted(set(analysis) - {"extract_noise", "monitor_nu", "tracking_windows"})
    if stray:
        raise ConfigError(f"analysis.{stray[0]}", "unknown field")
    extract = analysis.get("extract_noise", False)
    if not isinstance(extract, bool):
        raise ConfigError("analysis.extract_noise", "expected true or false")
    monitor_nu = analysis.get("monitor_nu")
    if monitor_nu is not None:
        try:
            monitor_nu = float(monitor_nu)
        except (TypeError, ValueError):
            raise ConfigError("analysis.monitor_nu", f"expected a number, got {monitor_nu!r}")
        if not 0.0 < monitor_nu < 1.0:
            raise ConfigError("analysis.monitor_nu",
                              f"nu must lie in (0, 1), got {monitor_nu}")
    windows = analysis.get("tracking_windows", [])
    if not isinstance(windows, (list, tuple)):
        raise ConfigError("analysis.tracking_windows", "expected a list of integers")
    for i, k in enumerate(windows):
        if isinstance(k, bool) or not isinstance(k, int) or k < 1:
            raise ConfigError(f"analysis.tracking_windows[{i}]",
                              f"expected a positive integer, got {k!r}")
    windows = tuple(windows)
    if (monitor_nu is None) and windows:
        raise ConfigError("analysis.tracking_windows",
                          "tracking windows need analysis.monitor_nu for the grid")

    needs_full = extract or monitor_nu is not None or windows
    if needs_full and stride != "full":
        raise ConfigError("stride",
                          "analysis toggles need every stage recorded; set "
                          '"stride": "full"')

    out_dir = data.get("out_dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("out_dir", "expected a nonempty string")
    label = data.get("label", "experiment")
    if not isinstance(label, str) or not label:
        raise ConfigError("label", "expected a nonempty string")

    return ExperimentConfig(
        pm=pm, learner=learner, adversary=adversary, prior=prior,
        n_stages=n_stages, seeds=seeds, stride=stride,
        extract_noise=extract, monitor_nu=monitor_nu,
        tracking_windows=windows, out_dir=out_dir, label=label,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON in {path}: {exc}") from exc
    return parse_config(data)
