"""Continuous-time view of a run and its certificates.

The averaged process is interpolated into a continuous path with knots at
harmonic times tau_n = 1 + 1/2 + ... + 1/n. Between knots the path moves at
(v_{n+1} - v_n)/gamma_{n+1}, and stripping the recorded per-stage noise from
that slope lands exactly in the velocity set F_n of the averaging inclusion:

    F_n(x, y, pi) = {(br_n(y) - x, tau - y, br_n(y)' A tau - pi) : tau in Y}

where br_n is the smoothed best response at gain beta_n. This module houses
the interpolation, the time-indexed inclusion with an Euler integrator, the
Lyapunov gap function, the noise-accumulation and deviation bounds, and a
consistency monitor that replays the whole certificate chain on a finished
trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .engine import NoiseRecord, Trajectory
from .game import PayoffMatrix, SimplexPoint, StateTriple
from .seqcert import SequenceCertificate, adaptive_simpson, sequence_certificate
from .smoothing import BetaSchedule, PerturbationFunction, smooth_best_response

EULER_MEMBRANE_TOL = 1e-12       # rounding absorbed when projecting back onto M
SELECTION_TOL = 1e-10            # projected-gradient stop for tracking selections
SELECTION_MAX_ITER = 20000

_harmonic: np.ndarray = np.array([], dtype=float)


def harmonic_times(n: int) -> np.ndarray:
    """tau_1..tau_n as a read-only array (prefix sums of 1/k, cached)."""
    global _harmonic
    if n > _harmonic.size:
        size = max(1024, 1 << int(np.ceil(np.log2(n))))
        fresh = np.cumsum(1.0 / np.arange(1, size + 1))
        fresh.setflags(write=False)
        _harmonic = fresh
    return _harmonic[:n]


def m_of_s(s: float) -> int:
    """m(s) = sup{j >= 1 : tau_j <= s}, and 0 for s < 1."""
    if s < 1.0:
        return 0
    global _harmonic
    while _harmonic.size == 0 or _harmonic[-1] <= s:
        harmonic_times(max(2048, 2 * _harmonic.size))
    return int(np.searchsorted(_harmonic, s, side="right"))


def gamma_bar(s: float) -> float:
    """Step envelope gamma_{m(s)+1} = 1/(m(s)+1)."""
    return 1.0 / (m_of_s(s) + 1.0)


def _vector_to_state(vec: np.ndarray, n_rows: int, n_cols: int) -> StateTriple:
    # affine evaluation can round a zero coordinate a few ulp negative
    v = vec.copy()
    for sl in (slice(0, n_rows), slice(n_rows, n_rows + n_cols)):
        low = float(np.min(v[sl]))
        if low < 0.0:
            if low < -1e-12:
                raise ValueError(f"coordinate {low} is negative beyond rounding")
            v[sl] = np.maximum(v[sl], 0.0)
    return StateTriple.from_vector(v, n_rows, n_cols)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = int(np.nonzero(u - css / idx > 0)[0][-1])
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


@dataclass(frozen=True, eq=False)
class InterpolatedPath:
    """Piecewise-affine interpolation of the averaged process.

    Knot n (1-based) sits at time tau_n with value v_n = (x_bar, y_bar,
    pi_bar). The path is defined on [tau_1, tau_N]. Slopes between knots use
    the exact step weights 1/(n+1) rather than knot-time differences, so the
    recorded per-stage noise cancels bitwise-cleanly out of them.
    """

    knot_times: np.ndarray
    knot_values: np.ndarray
    n_rows: int
    n_cols: int

    @property
    def n_knots(self) -> int:
        return self.knot_values.shape[0]

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knot_times[0]), float(self.knot_times[-1])

    def _check_covered(self, s: float) -> None:
        a, b = self.domain
        if not a <= s <= b:
            raise ValueError(f"s={s} outside the path domain [{a}, {b}]")

    def m(self, s: float) -> int:
        self._check_covered(s)
        return int(np.searchsorted(self.knot_times, s, side="right"))

    def knot_state(self, n: int) -> StateTriple:
        if not 1 <= n <= self.n_knots:
            raise ValueError(f"knot {n} outside 1..{self.n_knots}")
        return StateTriple.from_vector(self.knot_values[n - 1], self.n_rows, self.n_cols)

    def values_at(self, s: float) -> np.ndarray:
        """Affine evaluator v(s)."""
        n = self.m(s)
        if n == self.n_knots:
            return self.knot_values[-1].copy()
        frac = (s - self.knot_times[n - 1]) * (n + 1.0)
        return self.knot_values[n - 1] + frac * (
            self.knot_values[n] - self.knot_values[n - 1])

    def state_at(self, s: float) -> StateTriple:
        return _vector_to_state(self.values_at(s), self.n_rows, self.n_cols)

    def values_bar(self, s: float) -> np.ndarray:
        """Piecewise-constant evaluator v_bar(s) = v_{m(s)}."""
        return self.knot_values[self.m(s) - 1].copy()

    def gamma_bar(self, s: float) -> float:
        self._check_covered(s)
        return gamma_bar(s)

    def slope_at(self, s: float) -> np.ndarray:
        """Exact interpolation slope (v_{n+1} - v_n)/gamma_{n+1}; undefined at knots."""
        n = self.m(s)
        if n >= self.n_knots:
            raise ValueError(f"s={s} has no interval to the right")
        if s == self.knot_times[n - 1]:
            raise ValueError(f"slope undefined at knot time s={s}")
        return (self.knot_values[n] - self.knot_values[n - 1]) * (n + 1.0)


def interpolate(traj: Trajectory) -> InterpolatedPath:
    """Continuous path through the averaged states of a full-stride run."""
    if traj.stride != "full":
        raise ValueError("interpolation needs every stage; rerun with stride='full'")
    if traj.n_stages < 2:
        raise ValueError("need at least 2 stages to interpolate")
    values = np.concatenate(
        [traj.row_avg, traj.col_avg, traj.avg_payoff[:, None]], axis=1)
    times = harmonic_times(traj.n_stages)
    return InterpolatedPath(
        knot_times=times,
        knot_values=np.ascontiguousarray(values),
        n_rows=traj.pm.n_rows,
        n_cols=traj.pm.n_cols,
    )


@dataclass(frozen=True, eq=False)
class DIProblem:
    """The time-indexed inclusion dw/ds in F(s, w) = F_{m(s)}(w).

    The velocity set at w = (x, y, pi) is the image of the opponent simplex
    under an affine map, hence compact and convex; every selected velocity
    is bounded by f_sup_norm.
    """

    pm: PayoffMatrix
    schedule: BetaSchedule
    rho: PerturbationFunction

    @property
    def dim(self) -> int:
        return self.pm.n_rows + self.pm.n_cols + 1

    @property
    def diam_m(self) -> float:
        """Diameter of the state space M = X x Y x [-sup, sup]."""
        return float(np.sqrt(2.0 + 2.0 + (2.0 * self.pm.sup_norm) ** 2))

    @property
    def f_sup_norm(self) -> float:
        return 2.0 + 2.0 * self.pm.sup_norm + float(np.sqrt(2.0))

    def beta_at(self, s: float) -> float:
        return self.schedule.value(max(m_of_s(s), 1))

    def smooth_response(self, beta: float, y: np.ndarray) -> np.ndarray:
        """Maximizer of pi(., y) + rho(.)/beta, via the closed form when the
        perturbation carries one."""
        if self.rho.argmax is not None:
            return self.rho.argmax(self.pm, y, beta)
        return smooth_best_response(self.pm, SimplexPoint(y), beta, self.rho).coords

    def smoothed_value(self, beta: float, y: np.ndarray) -> float:
        x = self.smooth_response(beta, y)
        return float(x @ (self.pm.entries @ y)) + self.rho.value(x) / beta

    def split(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        nr = self.pm.n_rows
        nc = self.pm.n_cols
        return w[:nr], w[nr:nr + nc], float(w[-1])

    def velocity(self, s: float, w: np.ndarray, tau: np.ndarray) -> np.ndarray:
        """The selected velocity in F(s, w) for selection tau in Y."""
        return self.velocity_given(self.beta_at(s), w, tau)

    def velocity_given(self, beta: float, w: np.ndarray, tau: np.ndarray) -> np.ndarray:
        x, y, pi = self.split(w)
        xstar = self.smooth_response(beta, y)
        out = np.empty(self.dim)
        nr = self.pm.n_rows
        out[:nr] = xstar - x
        out[nr:nr + self.pm.n_cols] = tau - y
        out[-1] = float(xstar @ (self.pm.entries @ tau)) - pi
        return out

    def contains(self, w: np.ndarray, tol: float = 1e-9) -> bool:
        x, y, pi = self.split(w)
        for block in (x, y):
            if float(np.min(block)) < -tol or abs(float(np.sum(block)) - 1.0) > tol:
                return False
        return abs(pi) <= self.pm.sup_norm + tol


def lyapunov_psi(prob: DIProblem, s: float, v: StateTriple) -> float:
    """Unclamped gap: smoothed best-response value at gain beta_{m(s)} minus pi."""
    if s < 0:
        raise ValueError(f"s must be nonnegative, got {s}")
    return prob.smoothed_value(prob.beta_at(s), v.y.coords) - v.pi


def lyapunov_phi(prob: DIProblem, s: float, v: StateTriple) -> float:
    """Clamped Lyapunov gap max(0, Psi); independent of the x-block."""
    return max(0.0, lyapunov_psi(prob, s, v))


@dataclass(frozen=True, eq=False)
class SolutionCurve:
    """Euler solution: states on a time grid plus the selection used per step."""

    times: np.ndarray
    states: np.ndarray
    selections: np.ndarray
    problem: DIProblem

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def _segment(self, s: float) -> int:
        a, b = self.domain
        if not a <= s <= b:
            raise ValueError(f"s={s} outside the solution domain [{a}, {b}]")
        i = int(np.searchsorted(self.times, s, side="right")) - 1
        return min(max(i, 0), self.times.size - 2)

    def values_at(self, s: float) -> np.ndarray:
        i = self._segment(s)
        t0, t1 = self.times[i], self.times[i + 1]
        frac = (s - t0) / (t1 - t0)
        return self.states[i] + frac * (self.states[i + 1] - self.states[i])

    def state_at(self, s: float) -> StateTriple:
        return _vector_to_state(
            self.values_at(s), self.problem.pm.n_rows, self.problem.pm.n_cols)

    def slope_at(self, s: float) -> np.ndarray:
        i = self._segment(s)
        return (self.states[i + 1] - self.states[i]) / (self.times[i + 1] - self.times[i])

    def psi_series(self) -> np.ndarray:
        """Unclamped Lyapunov gap at every grid node."""
        nr = self.problem.pm.n_rows
        nc = self.problem.pm.n_cols
        out = np.empty(self.times.size)
        for i, (t, w) in enumerate(zip(self.times, self.states)):
            beta = self.problem.beta_at(float(t))
            out[i] = self.problem.smoothed_value(beta, w[nr:nr + nc]) - w[-1]
        return out


SelectionPolicy = Union[SimplexPoint, np.ndarray, str, Callable]


def _project_state(prob: DIProblem, w: np.ndarray) -> np.ndarray:
    """Absorb rounding drift; genuine escapes from M raise."""
    x, y, pi = prob.split(w)
    for name, block in (("x", x), ("y", y)):
        lo = float(np.min(block))
        drift = abs(float(np.sum(block)) - 1.0)
        if lo < -EULER_MEMBRANE_TOL or drift > 1e-9:
            raise RuntimeError(
                f"state escaped M in the {name}-block (min {lo:.3e}, "
                f"sum drift {drift:.3e}); the inclusion points inward, so this "
                "signals a step-size or velocity bug")
    if abs(pi) > prob.pm.sup_norm * (1.0 + 1e-9) + 1e-9:
        raise RuntimeError(f"average payoff {pi} left [-{prob.pm.sup_norm}, "
                           f"{prob.pm.sup_norm}]")
    out = np.maximum(w, 0.0)
    out[-1] = pi
    nr = prob.pm.n_rows
    out[:nr] /= out[:nr].sum()
    out[nr:-1] /= out[nr:-1].sum()
    return out


def _as_state_vector(prob: DIProblem, w0: Union[StateTriple, np.ndarray]) -> np.ndarray:
    vec = w0.as_vector() if isinstance(w0, StateTriple) else np.asarray(w0, dtype=float)
    if vec.shape != (prob.dim,):
        raise ValueError(f"state has shape {vec.shape}, expected ({prob.dim},)")
    if not prob.contains(vec):
        raise ValueError("initial state is not in M")
    return vec.copy()


def _time_grid(a: float, b: float, h: float) -> np.ndarray:
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    if not b > a:
        raise ValueError(f"need b > a, got [{a}, {b}]")
    n_steps = max(1, int(np.ceil((b - a) / h - 1e-12)))
    times = a + h * np.arange(n_steps + 1)
    times[-1] = b
    return times


def euler_solve(
    prob: DIProblem,
    w0: Union[StateTriple, np.ndarray],
    a: float,
    b: float,
    h: float,
    selection_policy: SelectionPolicy,
) -> SolutionCurve:
    """Explicit Euler for the inclusion with a per-step selection rule.

    Policies: a fixed SimplexPoint (constant selection), the string
    "worst_phi" (the opponent vertex maximizing the Lyapunov gap of the
    candidate next state), an array of per-step selections, or a callable
    (s, w) -> selection. Steps h <= 1 keep the state in M by convexity;
    the grid's final node is clipped to land exactly on b.
    """
    times = _time_grid(a, b, h)
    n_steps = times.size - 1
    nc = prob.pm.n_cols
    nr = prob.pm.n_rows

    supplied: Optional[np.ndarray] = None
    const_tau: Optional[np.ndarray] = None
    chooser: Optional[Callable] = None
    if isinstance(selection_policy, SimplexPoint):
        if len(selection_policy) != nc:
            raise ValueError("constant selection has the wrong dimension")
        const_tau = selection_policy.coords
    elif isinstance(selection_policy, np.ndarray):
        supplied = np.asarray(selection_policy, dtype=float)
        if supplied.shape != (n_steps, nc):
            raise ValueError(
                f"supplied selections have shape {supplied.shape}, "
                f"expected ({n_steps}, {nc})")
    elif selection_policy == "worst_phi":
        pass
    elif callable(selection_policy):
        chooser = selection_policy
    else:
        raise ValueError(f"unknown selection policy {selection_policy!r}")

    states = np.empty((n_steps + 1, prob.dim))
    selections = np.empty((n_steps, nc))
    w = _as_state_vector(prob, w0)
    states[0] = w
    for i in range(n_steps):
        s = float(times[i])
        dt = float(times[i + 1] - times[i])
        beta = prob.beta_at(s)
        x, y, pi = prob.split(w)
        xstar = prob.smooth_response(beta, y)
        payoff_row = xstar @ prob.pm.entries

        if const_tau is not None:
            tau = const_tau
        elif supplied is not None:
            tau = supplied[i]
        elif chooser is not None:
            picked = chooser(s, w.copy())
            tau = picked.coords if isinstance(picked, SimplexPoint) else np.asarray(picked, dtype=float)
        else:
            # vertex maximizing the clamped gap of the candidate next state
            s_next = float(times[i + 1])
            beta_next = prob.beta_at(s_next)
            best_phi, best_j = -np.inf, 0
            for j in range(nc):
                y_cand = y + dt * (np.eye(nc)[j] - y)
                pi_cand = pi + dt * (float(payoff_row[j]) - pi)
                phi = max(0.0, prob.smoothed_value(beta_next, y_cand) - pi_cand)
                if phi > best_phi:
                    best_phi, best_j = phi, j
            tau = np.eye(nc)[best_j]

        w = w.copy()
        w[:nr] += dt * (xstar - x)
        w[nr:nr + nc] += dt * (tau - y)
        w[-1] += dt * (float(payoff_row @ tau) - pi)
        w = _project_state(prob, w)
        states[i + 1] = w
        selections[i] = tau

    return SolutionCurve(times=times, states=states, selections=selections, problem=prob)


def _closest_selection(p: np.ndarray, c: np.ndarray, d: float) -> np.ndarray:
    """Minimize |tau - p|^2 + (c.tau - d)^2 over the simplex.

    Projected gradient with the fixed step 1/L, L = 2(1 + |c|^2); strong
    convexity makes the iteration a contraction, and the stop rule is the
    sup-norm movement of the iterate.
    """
    lip = 2.0 * (1.0 + float(c @ c))
    tau = project_simplex(p.copy())
    for _ in range(SELECTION_MAX_ITER):
        grad = 2.0 * (tau - p) + 2.0 * (float(c @ tau) - d) * c
        nxt = project_simplex(tau - grad / lip)
        if float(np.max(np.abs(nxt - tau))) <= SELECTION_TOL:
            return nxt
        tau = nxt
    raise RuntimeError(
        f"selection minimization did not converge to {SELECTION_TOL} within "
        f"{SELECTION_MAX_ITER} projected-gradient iterations")


def tracking_solve(
    prob: DIProblem,
    target: Union[InterpolatedPath, SolutionCurve],
    a: float,
    b: float,
    h: float,
) -> SolutionCurve:
    """Euler solution hugging a target path: each step picks the velocity in
    F(s, w) closest to the target's slope. Starts at the target's state."""
    lo, hi = target.domain
    if not (lo <= a < b <= hi):
        raise ValueError(f"window [{a}, {b}] not covered by target domain [{lo}, {hi}]")
    times = _time_grid(a, b, h)
    n_steps = times.size - 1
    nr = prob.pm.n_rows
    nc = prob.pm.n_cols

    states = np.empty((n_steps + 1, prob.dim))
    selections = np.empty((n_steps, nc))
    w = _as_state_vector(prob, target.values_at(a))
    states[0] = w
    for i in range(n_steps):
        s = float(times[i])
        dt = float(times[i + 1] - times[i])
        try:
            wdot = target.slope_at(s)
        except ValueError:
            wdot = target.slope_at(s + min(dt, 1e-12))  # knot node: use right slope
        beta = prob.beta_at(s)
        x, y, pi = prob.split(w)
        xstar = prob.smooth_response(beta, y)
        c = prob.pm.entries.T @ xstar
        p = y + wdot[nr:nr + nc]
        d = pi + float(wdot[-1])
        tau = _closest_selection(p, c, d)

        w = w.copy()
        w[:nr] += dt * (xstar - x)
        w[nr:nr + nc] += dt * (tau - y)
        w[-1] += dt * (float(c @ tau) - pi)
        w = _project_state(prob, w)
        states[i + 1] = w
        selections[i] = tau

    return SolutionCurve(times=times, states=states, selections=selections, problem=prob)


def _window_weights(path: InterpolatedPath, t: float, T: float) -> tuple[np.ndarray, np.ndarray]:
    """Interval indices n and overlap lengths of [tau_n, tau_{n+1}) with [t, t+T]."""
    if T < 0:
        raise ValueError(f"window length must be nonnegative, got {T}")
    a, b = path.domain
    if not (a <= t and t + T <= b):
        raise ValueError(f"window [{t}, {t + T}] not covered by [{a}, {b}]")
    n_lo = path.m(t)
    n_hi = path.m(t + T)
    ns = np.arange(n_lo, min(n_hi, path.n_knots - 1) + 1)
    left = np.maximum(path.knot_times[ns - 1], t)
    right = np.minimum(path.knot_times[ns], t + T)
    lengths = np.clip(right - left, 0.0, None)
    return ns, lengths


def delta_accumulation(noise: NoiseRecord, path: InterpolatedPath,
                       t: float, T: float) -> float:
    """sup over h in [0, T] of the norm of the integrated noise on [t, t+h].

    The noise is piecewise constant (U_{n+1} on [tau_n, tau_{n+1})), so each
    partial integral is a weighted sum of the recorded increments with the
    edge intervals clipped; the running norm is convex on each interval,
    making the exact sup a max over interval endpoints.
    """
    if noise.n_stages != path.n_knots:
        raise ValueError("noise record and path cover different stage counts")
    ns, lengths = _window_weights(path, t, T)
    if ns.size == 0:
        return 0.0
    block = noise.values[ns]        # U_{n+1} sits at row index n
    partial = np.cumsum(lengths[:, None] * block, axis=0)
    norms = np.linalg.norm(partial, axis=1)
    return float(np.max(norms))


class PiecewiseBetaLipschitz:
    """L(s) = L0 * beta_{m(s)}: piecewise constant on harmonic intervals.

    Jump discontinuities defeat blind quadrature, so the integral is the
    exact sum of interval overlaps times values.
    """

    def __init__(self, L0: float, schedule: BetaSchedule):
        if L0 < 0:
            raise ValueError(f"L0 must be nonnegative, got {L0}")
        self.L0 = float(L0)
        self.schedule = schedule

    def __call__(self, s):
        if np.ndim(s) == 0:
            return self.L0 * self.schedule.value(max(m_of_s(float(s)), 1))
        return np.array([self(float(v)) for v in np.asarray(s).ravel()])

    def integral(self, a: float, b: float) -> float:
        if b < a:
            raise ValueError(f"inverted interval [{a}, {b}]")
        if a == b:
            return 0.0
        total = 0.0
        s = a
        while s < b:
            n = max(m_of_s(s), 1)
            knots = harmonic_times(n + 1)
            nxt = min(float(knots[n]), b) if m_of_s(s) >= 1 else min(1.0, b)
            total += (nxt - s) * self.L0 * self.schedule.value(n)
            s = nxt
        return total


def exp_lipschitz(nu: float) -> Callable:
    """The growth envelope L(s) = e^{nu s}."""
    if not 0.0 < nu < 1.0:
        raise ValueError(f"nu must lie in (0, 1), got {nu}")
    return lambda s: np.exp(nu * np.asarray(s, dtype=float))


def deviation_bound(L_fn: Callable, delta_sup: float, Delta_ab: float,
                    a: float, b: float) -> float:
    """R(a,b) = Delta * exp(int L) + delta_sup * (exp(int L) - 1).

    int L uses the exact interval decomposition when L_fn provides one
    (piecewise-constant built-in), Simpson quadrature at relative 1e-8
    otherwise.
    """
    if delta_sup < 0 or Delta_ab < 0:
        raise ValueError("delta_sup and Delta_ab must be nonnegative")
    if hasattr(L_fn, "integral"):
        int_l = float(L_fn.integral(a, b))
    else:
        int_l = adaptive_simpson(L_fn, a, b)
    growth = float(np.exp(int_l))
    return Delta_ab * growth + delta_sup * (growth - 1.0)


def membership_defect(path: InterpolatedPath, noise: NoiseRecord,
                      prob: DIProblem, s: float) -> tuple[float, np.ndarray]:
    """Check the de-noised slope against the velocity set at v_bar(s).

    Subtracting U_{n+1} from the interpolation slope must produce an element
    of F_n(v_n): the opponent block pins the selection tau, which must land
    on the simplex, and the learner and payoff blocks must then match the
    selected velocity. Returns (max defect across the checks, tau).
    """
    if noise.n_stages != path.n_knots:
        raise ValueError("noise record and path cover different stage counts")
    n = path.m(s)
    if s == path.knot_times[n - 1]:
        raise ValueError(f"s={s} is a knot; the slope is defined between knots")
    slope = path.slope_at(s)
    W = slope - noise.values[n]     # U_{n+1} at row index n
    v_n = path.knot_values[n - 1]
    nr = path.n_rows
    nc = path.n_cols
    x_n, y_n, pi_n = v_n[:nr], v_n[nr:nr + nc], float(v_n[-1])

    beta = prob.schedule.value(max(n, 1))
    xstar = prob.smooth_response(beta, y_n)

    tau = W[nr:nr + nc] + y_n
    simplex_defect = max(float(-np.min(tau)), abs(float(np.sum(tau)) - 1.0), 0.0)
    x_defect = float(np.max(np.abs(W[:nr] - (xstar - x_n))))
    pi_defect = abs(float(W[-1]) - (float(xstar @ (prob.pm.entries @ tau)) - pi_n))
    return max(simplex_defect, x_defect, pi_defect), tau


@dataclass(frozen=True, eq=False)
class CertificateReport:
    """Consistency-monitor output on the certificate grid S_k = sum 1/(nu i).

    phi_observed is the Lyapunov gap measured on the interpolated path;
    bound is the replayed decay recursion seeded at the first grid point.
    """

    ks: np.ndarray
    s_values: np.ndarray
    phi_observed: np.ndarray
    H: np.ndarray
    etas: np.ndarray
    bound: np.ndarray
    nu: float
    r_exponent: float
    tol: float
    certificate: SequenceCertificate

    @property
    def observed_tail(self) -> float:
        return float(self.phi_observed[-1])

    @property
    def decays(self) -> bool:
        return self.observed_tail <= self.tol

    @property
    def bound_decays(self) -> bool:
        return float(self.bound[-1]) <= self.tol

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("k,S_k,Phi,H_k,eta_k,bound\n")
            for row in zip(self.ks, self.s_values, self.phi_observed,
                           self.H, self.etas, self.bound):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    def summary(self) -> str:
        flag = lambda ok: "pass" if ok else "FAIL"
        lines = [
            f"certificate grid: k = 1..{int(self.ks[-1])}, nu = {self.nu}, "
            f"r = {self.r_exponent:.4f}, tolerance = {self.tol}",
            f"observed gap tail Phi(S_K) = {self.observed_tail:.6f} "
            f"[{flag(self.decays)}]",
            f"recursion bound tail = {float(self.bound[-1]):.6f} "
            f"[{flag(self.bound_decays)}]",
            f"contraction case a: {self.certificate.case_a}, "
            f"case b: {self.certificate.case_b}",
        ]
        return "\n".join(lines)


def certificate_grid(nu: float, K: int) -> tuple[np.ndarray, np.ndarray]:
    """T_k = 1/(nu k) and the partial sums S_k, k = 1..K."""
    if not 0.0 < nu < 1.0:
        raise ValueError(f"nu must lie in (0, 1), got {nu}")
    T = 1.0 / (nu * np.arange(1, K + 1))
    return T, np.cumsum(T)


def monitor_r_exponent(nu: float) -> float:
    """Exponent for the stochastic-error term: min(1.1, midpoint of
    (1, (nu+1)/(2 nu))), clipped into the admissible interval."""
    upper = (nu + 1.0) / (2.0 * nu)
    return min(1.1, 0.5 * (1.0 + upper))


def consistency_monitor(traj: Trajectory, prob: DIProblem, nu: float,
                        k_max: Optional[int] = None,
                        tol: float = 0.05) -> CertificateReport:
    """Replay the decay certificate along a finished run.

    Measures Phi at the grid times S_k, replays the recursion
    Phi_{k+1} <= e^{-T_{k+1}} Phi_k + eta_{k+1} with
    eta_{k+1} = T_{k+1}/beta_{m(S_k)} + L_Phi k^{-r}, and reports whether the
    observed gap decays below tol. Runs with gain schedules outside the
    power family are allowed (that is how the counterexamples are examined);
    when the schedule IS a power schedule its exponent must equal nu.
    """
    if not 0.0 < nu < 1.0:
        raise ValueError(f"nu must lie in (0, 1), got {nu}")
    if prob.schedule.kind == "power" and abs(prob.schedule.nu - nu) > 1e-12:
        raise ValueError(
            f"nu={nu} does not match the run's schedule exponent "
            f"{prob.schedule.nu}")
    path = interpolate(traj)
    horizon = path.domain[1]

    if k_max is None:
        K = 1
        while certificate_grid(nu, K + 1)[1][-1] <= horizon:
            K += 1
    else:
        K = int(k_max)
        if K < 1:
            raise ValueError(f"k_max must be >= 1, got {K}")
    T, S = certificate_grid(nu, K)
    if S[-1] > horizon:
        raise ValueError(
            f"trajectory horizon tau_N = {horizon:.3f} does not cover "
            f"S_{K} = {S[-1]:.3f}; lengthen the run or lower k_max")
    if S[0] < path.domain[0]:
        raise ValueError(f"S_1 = {S[0]:.3f} precedes the path start")

    phi = np.array([lyapunov_phi(prob, float(s), path.state_at(float(s)))
                    for s in S])
    r = monitor_r_exponent(nu)
    L_phi = prob.pm.sup_norm + 1.0

    if K == 1:
        cert = sequence_certificate([0.5], [0.0], phi0=float(phi[0]), K=1)
        H = np.array([1.0])
        etas = np.array([0.0])
        bound = np.array([float(phi[0])])
    else:
        ks_prev = np.arange(1, K, dtype=float)     # eta_{k+1} uses beta at S_k
        lambdas = np.exp(-T[1:])
        etas_tail = T[1:] / np.array([prob.beta_at(float(s)) for s in S[:-1]])
        etas_tail = etas_tail + L_phi * ks_prev ** (-r)
        cert = sequence_certificate(lambdas, etas_tail, phi0=float(phi[0]), K=K - 1)
        H = np.concatenate([[1.0], cert.H])
        etas = np.concatenate([[0.0], cert.etas])
        bound = np.concatenate([[float(phi[0])], cert.bound])

    return CertificateReport(
        ks=np.arange(1, K + 1),
        s_values=S,
        phi_observed=phi,
        H=H,
        etas=etas,
        bound=bound,
        nu=float(nu),
        r_exponent=r,
        tol=float(tol),
        certificate=cert,
    )
