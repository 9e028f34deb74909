"""Repeated-game simulation engine.

One run plays a learner against an adversary for N stages and records the
action log, the running empirical averages (x_bar, y_bar, pi_bar), the regret
series e_n, and the declared mixed actions needed for noise extraction.

The engine exploits the structure of the supported strategy kinds to
vectorize: the learner's belief is a function of the adversary's past actions
only, and every adversary kind is either learner-independent (alternation,
fixed i.i.d. mixture) or a deterministic seed-free function of the learner's
declared mix (the informed best responder, computed once as a "chain" and
cached across seeds). Action sampling then reduces to inverse-CDF lookups on
pre-drawn uniforms. A direct stage-by-stage simulator in the test suite serves
as the independent reference implementation.

Randomness: one master seed spawns two child streams (rows, columns); a stream
is consumed only when that player's strategy actually randomizes, so e.g. an
FP learner leaves the row stream untouched.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .game import PayoffMatrix, SimplexPoint
from .strategies import ADVERSARY_KINDS, LEARNER_KINDS, StrategySpec

GEOMETRIC_STRIDE_RATIO = 1.05
ACTION_DTYPE = np.int16


class NoiseUnavailableError(RuntimeError):
    """Raised when per-stage declared mixes were not logged (stride not 'full')."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Complete record of one run.

    ``actions_row``/``actions_col`` cover every stage (stage m sits at index
    m-1). The averaged series and declared mixes are stored at ``logged_stages``
    only; with stride "full" that is every stage. ``tail_max_regret`` is the
    exact max of e_n over n >= ceil(N/2), computed from the full series before
    it is discarded, and ``checkpoint_tails`` holds the same statistic for the
    requested intermediate horizons.
    """

    pm: PayoffMatrix
    learner: StrategySpec
    adversary: StrategySpec
    prior: SimplexPoint
    n_stages: int
    seed: int
    stride: str
    config_hash: str
    actions_row: np.ndarray
    actions_col: np.ndarray
    logged_stages: np.ndarray
    row_avg: np.ndarray
    col_avg: np.ndarray
    avg_payoff: np.ndarray
    regret_vals: np.ndarray
    row_mix: np.ndarray
    col_mix: np.ndarray
    tail_max_regret: float
    checkpoint_tails: dict

    @property
    def final_regret(self) -> float:
        return float(self.regret_vals[-1])

    @property
    def final_avg_payoff(self) -> float:
        return float(self.avg_payoff[-1])

    def payoffs(self) -> np.ndarray:
        """Per-stage realized payoffs, recomputed from the action log."""
        return self.pm.entries[self.actions_row, self.actions_col]

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "config_hash": self.config_hash,
            "n_stages": self.n_stages,
            "final_avg_payoff": self.final_avg_payoff,
            "final_regret": self.final_regret,
            "tail_max_regret": self.tail_max_regret,
            "checkpoint_tails": {str(k): v for k, v in self.checkpoint_tails.items()},
        }

    def to_csv(self, path) -> None:
        """Write the logged series as CSV plus a JSON metadata sidecar.

        Column order is fixed: n, i, l, payoff, x_bar_*, y_bar_*, pi_bar, e_n.
        """
        idx = self.logged_stages - 1
        payoff = self.pm.entries[self.actions_row[idx], self.actions_col[idx]]
        n_i, n_l = self.pm.n_rows, self.pm.n_cols
        header = (["n", "i", "l", "payoff"]
                  + [f"x_bar_{k}" for k in range(n_i)]
                  + [f"y_bar_{k}" for k in range(n_l)]
                  + ["pi_bar", "e_n"])
        block = np.column_stack([
            self.logged_stages.astype(float),
            self.actions_row[idx].astype(float),
            self.actions_col[idx].astype(float),
            payoff,
            self.row_avg,
            self.col_avg,
            self.avg_payoff,
            self.regret_vals,
        ])
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in block:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        meta = {
            "seed": self.seed,
            "config_hash": self.config_hash,
            "n_stages": self.n_stages,
            "stride": self.stride,
            "payoff_matrix": self.pm.entries.tolist(),
            "prior": self.prior.coords.tolist(),
            "learner": self.learner.describe(),
            "adversary": self.adversary.describe(),
            "columns": header,
            "tail_max_regret": self.tail_max_regret,
        }
        with open(str(path) + ".meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass(frozen=True, eq=False)
class NoiseRecord:
    """Per-stage martingale increments U_n = observation minus declared mean.

    Blocks: (delta_i - x_mix, delta_l - y_mix, payoff - x_mix' A y_mix).
    Every entry is bounded by 2(1 + ||pi||_inf) in sup norm.
    """

    values: np.ndarray
    n_rows: int
    n_cols: int
    sup_norm_bound: float

    @property
    def n_stages(self) -> int:
        return self.values.shape[0]


def config_fingerprint(pm: PayoffMatrix, learner: StrategySpec, adversary: StrategySpec,
                       prior: SimplexPoint, n_stages: int, stride: str) -> str:
    payload = {
        "payoff_matrix": pm.entries.tolist(),
        "learner": learner.describe(),
        "adversary": adversary.describe(),
        "prior": prior.coords.tolist(),
        "n_stages": n_stages,
        "stride": stride,
    }
    blob = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def geometric_stages(n_stages: int, ratio: float = GEOMETRIC_STRIDE_RATIO) -> np.ndarray:
    """Logged stage numbers ceil(ratio^k), deduplicated, always including 1 and N."""
    stages = {1, n_stages}
    value = 1.0
    while True:
        value *= ratio
        stage = int(np.ceil(value))
        if stage > n_stages:
            break
        stages.add(stage)
    return np.array(sorted(stages), dtype=np.int64)


def _belief_series(prior: np.ndarray, counts_before: np.ndarray, blending: bool) -> np.ndarray:
    """Belief rows for stages 1..N from pre-stage counts.

    Row m-1 is the belief driving stage m. The blended form is grouped as
    (prior + n * (counts/n)) / (n + 1) to match BeliefState.blended() bitwise.
    """
    n = counts_before.shape[0]
    n_before = np.arange(n, dtype=float)
    bel = np.empty((n, prior.size))
    bel[0] = prior
    emp = counts_before[1:] / n_before[1:, None]
    if blending:
        bel[1:] = (prior + n_before[1:, None] * emp) / (n_before[1:, None] + 1.0)
    else:
        bel[1:] = emp
    return bel


def _row_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def _learner_mixes(pm: PayoffMatrix, learner: StrategySpec, bel: np.ndarray,
                   betas: Optional[np.ndarray]) -> np.ndarray:
    if learner.kind == "IIDMixed":
        return np.broadcast_to(learner.fixed_mix.coords, (bel.shape[0], pm.n_rows)).copy()
    values = bel @ pm.entries.T
    if learner.kind == "FP":
        mixes = np.zeros_like(values)
        mixes[np.arange(values.shape[0]), np.argmax(values, axis=1)] = 1.0
        return mixes
    return _row_softmax(betas[:, None] * values)


def _sample_inverse_cdf(mixes: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    cum = np.cumsum(mixes, axis=1)
    idx = (cum < uniforms[:, None]).sum(axis=1)
    return np.clip(idx, 0, mixes.shape[1] - 1).astype(ACTION_DTYPE)


def _beta_indices(n_stages: int) -> np.ndarray:
    # stage m uses schedule index m-1, clamped to 1 for the first stage
    return np.maximum(np.arange(n_stages, dtype=np.int64), 1)


@lru_cache(maxsize=16)
def _best_response_chain(pm: PayoffMatrix, learner_key: tuple, prior: SimplexPoint,
                         n_stages: int) -> np.ndarray:
    """Column sequence of the informed best responder; seed-free, cached per cell.

    The learner's declared mix is a deterministic function of the adversary's
    own past actions, so the whole exchange is one deterministic recursion.
    Argmin ties here resolve against the chain's sequentially computed mix,
    which can differ from the vectorized replay by one ulp in degenerate ties.
    """
    kind, schedule_key, fixed_mix_bytes, blending = learner_key
    entries = pm.entries
    n_cols = pm.n_cols
    if kind == "IIDMixed":
        mix = np.frombuffer(fixed_mix_bytes)
        col = int(np.argmin(mix @ entries))
        return _frozen(np.full(n_stages, col, dtype=ACTION_DTYPE))

    from .smoothing import BetaSchedule  # local import to avoid cycle at module load

    if schedule_key is not None:
        if schedule_key[0] == "constant":
            schedule = BetaSchedule.constant_beta(schedule_key[1])
        elif schedule_key[0] == "power":
            schedule = BetaSchedule.power(schedule_key[1])
        else:
            schedule = BetaSchedule.from_table(np.frombuffer(schedule_key[1]))
        betas = schedule.values(_beta_indices(n_stages))
    else:
        betas = None

    prior_arr = prior.coords
    counts = np.zeros(n_cols)
    cols = np.empty(n_stages, dtype=ACTION_DTYPE)
    a_t = entries.T.copy()
    for m in range(1, n_stages + 1):
        n_before = m - 1
        if n_before == 0:
            bel = prior_arr
        else:
            emp = counts / n_before
            bel = (prior_arr + n_before * emp) / (n_before + 1.0) if blending else emp
        values = a_t @ bel
        if kind == "FP":
            mix = np.zeros(values.size)
            mix[int(np.argmax(values))] = 1.0
        else:
            z = betas[m - 1] * values
            z -= z.max()
            mix = np.exp(z)
            mix /= mix.sum()
        col = int(np.argmin(mix @ entries))
        cols[m - 1] = col
        counts[col] += 1.0
    return _frozen(cols)


def _adversary_columns(pm: PayoffMatrix, learner: StrategySpec, adversary: StrategySpec,
                       prior: SimplexPoint, n_stages: int,
                       col_rng: np.random.Generator) -> np.ndarray:
    if adversary.kind == "AlternatingDeterministic":
        stage = np.arange(1, n_stages + 1)
        return (1 - (stage % 2)).astype(ACTION_DTYPE)  # col 0 on odd stages, col 1 on even
    if adversary.kind == "IIDMixed":
        mixes = np.broadcast_to(adversary.fixed_mix.coords, (n_stages, pm.n_cols))
        return _sample_inverse_cdf(mixes, col_rng.random(n_stages))
    return np.array(_best_response_chain(pm, learner.key(), prior, n_stages), copy=True)


def run(
    pm: PayoffMatrix,
    learner: StrategySpec,
    adversary: StrategySpec,
    prior: SimplexPoint,
    n_stages: int,
    seed: int,
    stride: str = "geometric",
    checkpoints: tuple = (),
) -> Trajectory:
    """Play n_stages stages and return the full Trajectory.

    Deterministic given (configuration, seed): the master seed spawns one
    stream per player and each stream is pre-drawn, so results do not depend
    on evaluation order. ``checkpoints`` asks for tail statistics
    max_{n in [ceil(N'/2), N']} e_n at intermediate horizons N'.
    """
    if learner.kind not in LEARNER_KINDS:
        raise ValueError(f"{learner.kind} cannot act as the learner")
    if adversary.kind not in ADVERSARY_KINDS:
        raise ValueError(f"{adversary.kind} cannot act as the adversary")
    if n_stages < 1:
        raise ValueError(f"n_stages must be >= 1, got {n_stages}")
    if len(prior) != pm.n_cols:
        raise ValueError("prior must live on the adversary's action simplex")
    if learner.kind == "IIDMixed" and len(learner.fixed_mix) != pm.n_rows:
        raise ValueError("learner fixed_mix dimension does not match the row count")
    if adversary.kind == "IIDMixed" and len(adversary.fixed_mix) != pm.n_cols:
        raise ValueError("adversary fixed_mix dimension does not match the column count")
    if adversary.kind == "AlternatingDeterministic" and pm.n_cols < 2:
        raise ValueError("alternation needs at least two columns")
    if stride not in ("full", "geometric"):
        raise ValueError(f"stride must be 'full' or 'geometric', got {stride!r}")
    for cp in checkpoints:
        if not 1 <= cp <= n_stages:
            raise ValueError(f"checkpoint {cp} outside 1..{n_stages}")

    master = np.random.SeedSequence(seed)
    row_stream, col_stream = master.spawn(2)
    row_rng = np.random.default_rng(row_stream)
    col_rng = np.random.default_rng(col_stream)

    cols = _adversary_columns(pm, learner, adversary, prior, n_stages, col_rng)

    onehot_c = np.zeros((n_stages, pm.n_cols), dtype=np.int64)
    onehot_c[np.arange(n_stages), cols] = 1
    cum_c = np.cumsum(onehot_c, axis=0)
    counts_before = np.empty_like(cum_c)
    counts_before[0] = 0
    counts_before[1:] = cum_c[:-1]

    bel = _belief_series(prior.coords, counts_before, learner.resolved_blending)
    betas = None
    if learner.kind in ("SFP", "VSFP"):
        betas = learner.schedule.values(_beta_indices(n_stages))
    learner_mixes = _learner_mixes(pm, learner, bel, betas)

    if learner.is_random:
        rows = _sample_inverse_cdf(learner_mixes, row_rng.random(n_stages))
    else:
        rows = np.argmax(learner_mixes, axis=1).astype(ACTION_DTYPE)

    if adversary.kind == "IIDMixed":
        adversary_mixes = np.broadcast_to(adversary.fixed_mix.coords, (n_stages, pm.n_cols))
    else:
        adversary_mixes = onehot_c.astype(float)  # a declared vertex each stage

    stage = np.arange(1, n_stages + 1, dtype=np.int64)
    payoffs = pm.entries[rows, cols]
    pi_bar = np.cumsum(payoffs) / stage
    br_values = np.max((cum_c @ pm.entries.T) / stage[:, None], axis=1)
    regret_full = br_values - pi_bar

    def tail_stat(horizon: int) -> float:
        lo = int(np.ceil(horizon / 2))
        return float(np.max(regret_full[lo - 1:horizon]))

    tail_max = tail_stat(n_stages)
    checkpoint_tails = {int(cp): tail_stat(int(cp)) for cp in checkpoints}

    logged = stage if stride == "full" else geometric_stages(n_stages)
    idx = logged - 1

    onehot_r = np.zeros((n_stages, pm.n_rows), dtype=np.int64)
    onehot_r[np.arange(n_stages), rows] = 1
    cum_r = np.cumsum(onehot_r, axis=0)

    return Trajectory(
        pm=pm,
        learner=learner,
        adversary=adversary,
        prior=prior,
        n_stages=n_stages,
        seed=int(seed),
        stride=stride,
        config_hash=config_fingerprint(pm, learner, adversary, prior, n_stages, stride),
        actions_row=_frozen(rows),
        actions_col=_frozen(cols),
        logged_stages=_frozen(logged),
        row_avg=_frozen(cum_r[idx] / logged[:, None]),
        col_avg=_frozen(cum_c[idx] / logged[:, None]),
        avg_payoff=_frozen(pi_bar[idx]),
        regret_vals=_frozen(regret_full[idx]),
        row_mix=_frozen(learner_mixes[idx]),
        col_mix=_frozen(np.array(adversary_mixes[idx], dtype=float)),
        tail_max_regret=tail_max,
        checkpoint_tails=checkpoint_tails,
    )


def extract_noise(traj: Trajectory) -> NoiseRecord:
    """Martingale-difference record from a full-stride trajectory.

    U_n stacks (delta_{i_n} - x_mix_n, delta_{l_n} - y_mix_n,
    payoff_n - x_mix_n' A y_mix_n); the conditional mean of the payoff uses
    the product distribution of the two declared mixes, which is exactly the
    independence contract of the engine's sampling.
    """
    if traj.stride != "full":
        raise NoiseUnavailableError(
            "noise extraction needs declared mixes at every stage; rerun with stride='full'"
        )
    n = traj.n_stages
    n_i, n_l = traj.pm.n_rows, traj.pm.n_cols
    onehot_r = np.zeros((n, n_i))
    onehot_r[np.arange(n), traj.actions_row] = 1.0
    onehot_c = np.zeros((n, n_l))
    onehot_c[np.arange(n), traj.actions_col] = 1.0
    expected_payoff = np.einsum("ni,ij,nj->n", traj.row_mix, traj.pm.entries, traj.col_mix)
    values = np.concatenate(
        [onehot_r - traj.row_mix,
         onehot_c - traj.col_mix,
         (traj.payoffs() - expected_payoff)[:, None]],
        axis=1,
    )
    return NoiseRecord(
        values=_frozen(values),
        n_rows=n_i,
        n_cols=n_l,
        sup_norm_bound=2.0 * (1.0 + traj.pm.sup_norm),
    )


@dataclass(frozen=True, eq=False)
class RegretSeries:
    """Regret curve at the logged stages, with the exact tail summary attached."""

    stages: np.ndarray
    values: np.ndarray
    tail_max: float


def regret_series(traj: Trajectory, every: int = 1) -> RegretSeries:
    """e_n at every ``every``-th logged stage; tail_max is exact over all stages."""
    if every < 1:
        raise ValueError("every must be >= 1")
    sl = slice(None, None, every)
    return RegretSeries(
        stages=traj.logged_stages[sl],
        values=traj.regret_vals[sl],
        tail_max=traj.tail_max_regret,
    )


def parity_event_frequency(traj: Trajectory, payoff_value: float = 1.0,
                           atol: float = 1e-12) -> tuple[float, float]:
    """Frequencies of |payoff - value| <= atol on odd and even stages."""
    payoffs = traj.payoffs()
    hits = np.abs(payoffs - payoff_value) <= atol
    odd = hits[0::2]  # stage m = index m-1, so odd stages sit at even indices
    even = hits[1::2]
    freq_odd = float(odd.mean()) if odd.size else float("nan")
    freq_even = float(even.mean()) if even.size else float("nan")
    return freq_odd, freq_even
