"""Stage-strategy rules for both players.

Learners: fictitious play (exact best reply to a prior-blended belief),
smooth fictitious play (logit reply at fixed gain), and its vanishing-smoothing
variant (gain grows along a schedule). Adversaries: deterministic alternation,
a fixed i.i.d. mixture, and the informed best responder that minimizes the
learner's expected payoff against the learner's declared mix.

Stage indexing starts at n = 1. The action at stage m is built from the
opponent statistics of stages 1..m-1; at m = 1 the prior alone drives the
action. All argmax/argmin tie-breaks take the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .game import PayoffMatrix, SimplexPoint
from .smoothing import BetaSchedule, logit

LEARNER_KINDS = ("FP", "SFP", "VSFP", "IIDMixed")
ADVERSARY_KINDS = ("AlternatingDeterministic", "IIDMixed", "BestResponseAdversary")
ALL_KINDS = ("FP", "SFP", "VSFP", "AlternatingDeterministic", "IIDMixed", "BestResponseAdversary")


@dataclass(frozen=True)
class BeliefState:
    """Opponent model after ``step`` observed stages.

    ``empirical`` is the plain average of observed opponent actions; it may be
    None only at step 0, where the prior stands in for it.
    """

    prior: SimplexPoint
    empirical: Optional[SimplexPoint]
    step: int

    def __post_init__(self) -> None:
        if self.step < 0:
            raise ValueError(f"step must be >= 0, got {self.step}")
        if self.step == 0:
            if self.empirical is not None:
                raise ValueError("empirical average must be None at step 0")
        else:
            if self.empirical is None:
                raise ValueError(f"empirical average required at step {self.step}")
            if len(self.empirical) != len(self.prior):
                raise ValueError("prior and empirical dimensions differ")

    def raw(self) -> SimplexPoint:
        """Unblended belief: the empirical average, or the prior before any data."""
        return self.prior if self.step == 0 else self.empirical

    def blended(self) -> SimplexPoint:
        """Prior-blended belief (prior + n * empirical) / (n + 1).

        The grouping matches the engine's vectorized form exactly so both
        routes agree bitwise at tie-sensitive comparisons.
        """
        if self.step == 0:
            return self.prior
        n = self.step
        return SimplexPoint((self.prior.coords + n * self.empirical.coords) / (n + 1))


@dataclass(frozen=True, eq=False)
class StrategySpec:
    """Declarative description of one player's rule.

    Fields are kind-dependent: SFP/VSFP need a schedule (SFP constant only;
    VSFP accepts a constant schedule as a degenerate case and is then
    stage-for-stage identical to SFP), IIDMixed needs its fixed mix.
    ``use_prior_blending`` defaults per kind: on for FP, off otherwise; the
    classical divergence example runs VSFP with blending forced on.
    """

    kind: str
    schedule: Optional[BetaSchedule] = None
    fixed_mix: Optional[SimplexPoint] = None
    use_prior_blending: Optional[bool] = None

    def __post_init__(self) -> None:
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}; expected one of {ALL_KINDS}")
        if self.kind in ("SFP", "VSFP"):
            if self.schedule is None:
                raise ValueError(f"{self.kind} requires a gain schedule")
            if self.kind == "SFP" and not self.schedule.is_constant:
                raise ValueError("SFP uses a constant gain; pick VSFP for a growing schedule")
        elif self.schedule is not None:
            raise ValueError(f"{self.kind} takes no gain schedule")
        if self.kind == "IIDMixed":
            if self.fixed_mix is None:
                raise ValueError("IIDMixed requires fixed_mix")
        elif self.fixed_mix is not None:
            raise ValueError(f"{self.kind} takes no fixed_mix")

    @property
    def resolved_blending(self) -> bool:
        if self.use_prior_blending is not None:
            return self.use_prior_blending
        return self.kind == "FP"

    @property
    def is_random(self) -> bool:
        """Whether sampling this strategy consumes its player's random stream."""
        return self.kind in ("SFP", "VSFP", "IIDMixed")

    def key(self) -> tuple:
        """Hashable identity, used for chain caching and config hashing."""
        return (
            self.kind,
            self.schedule.key() if self.schedule is not None else None,
            self.fixed_mix.coords.tobytes() if self.fixed_mix is not None else None,
            self.resolved_blending,
        )

    def describe(self) -> dict:
        out = {"kind": self.kind, "use_prior_blending": self.resolved_blending}
        if self.schedule is not None:
            out["schedule"] = self.schedule.describe()
        if self.fixed_mix is not None:
            out["fixed_mix"] = self.fixed_mix.coords.tolist()
        return out


def fp_action(pm: PayoffMatrix, belief: BeliefState, use_prior_blending: bool = True) -> SimplexPoint:
    """Exact best reply vertex to the (blended) belief, lowest index on ties."""
    point = belief.blended() if use_prior_blending else belief.raw()
    values = pm.entries @ point.coords
    return SimplexPoint.vertex(int(np.argmax(values)), pm.n_rows)


def sfp_action(pm: PayoffMatrix, y_bar: SimplexPoint, beta: float) -> SimplexPoint:
    """Smooth best reply at gain beta (logit for the entropy perturbation)."""
    return logit(pm, y_bar, beta)


def vsfp_action(pm: PayoffMatrix, y_bar: SimplexPoint, n: int, schedule: BetaSchedule) -> SimplexPoint:
    """Smooth best reply at the scheduled gain beta_n; n is the statistics index (>= 1)."""
    if n < 1:
        raise ValueError(f"statistics index must be >= 1, got {n}")
    return sfp_action(pm, y_bar, schedule.value(n))


def adversary_action(
    spec: StrategySpec,
    pm: PayoffMatrix,
    n: int,
    learner_mix: Optional[SimplexPoint] = None,
) -> SimplexPoint:
    """Declared mixed action of the adversary at stage n (sampling is the engine's job).

    AlternatingDeterministic plays column 0 on odd stages and column 1 on even
    stages. BestResponseAdversary needs the learner's declared mix for the same
    stage and returns the column vertex minimizing the learner's expected
    payoff, lowest index on ties.
    """
    if n < 1:
        raise ValueError(f"stage index must be >= 1, got {n}")
    if spec.kind == "AlternatingDeterministic":
        return SimplexPoint.vertex(0 if n % 2 == 1 else 1, pm.n_cols)
    if spec.kind == "IIDMixed":
        if len(spec.fixed_mix) != pm.n_cols:
            raise ValueError("fixed_mix dimension does not match the column count")
        return spec.fixed_mix
    if spec.kind == "BestResponseAdversary":
        if learner_mix is None:
            raise ValueError("BestResponseAdversary needs the learner's declared mix")
        if len(learner_mix) != pm.n_rows:
            raise ValueError("learner_mix dimension does not match the row count")
        column_values = learner_mix.coords @ pm.entries
        return SimplexPoint.vertex(int(np.argmin(column_values)), pm.n_cols)
    raise ValueError(f"{spec.kind} is not an adversary kind")
