"""Smoothed best responses: perturbation functions, logit, and gain schedules.

The smoothed reply maximizes pi(x, y) + rho(x)/beta over the row simplex,
where rho is strongly concave on the tangent space and has a gradient that
blows up at the boundary, so the maximizer is unique and interior. Entropy
is the canonical instance; its maximizer is the logit choice rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .game import PayoffMatrix, SimplexPoint

NEWTON_MAX_ITER = 200
NEWTON_STATIONARITY_TOL = 1e-12


@dataclass(frozen=True)
class PerturbationFunction:
    """Strongly concave perturbation on the interior of a simplex.

    Attributes:
        name: short identifier used in reports and config files.
        value: rho(x) for interior x (1-d float array).
        gradient: grad rho(x), same shape as x.
        curvature: uniform lower bound on <-D^2 rho(x) h, h>/||h||^2 over
            interior x and tangent directions h (strong concavity modulus).
        hessian: optional D^2 rho(x); finite differences of the gradient are
            used when absent.
        argmax: optional closed-form maximizer of pi(., y) + rho(.)/beta,
            signature (pm, y_coords, beta) -> coords. Solvers use it as a
            fast path when present; the generic Newton route stays the
            reference implementation and the two are tested against each
            other.
    """

    name: str
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    curvature: float
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    argmax: Optional[Callable[[PayoffMatrix, np.ndarray, float], np.ndarray]] = None

    def __post_init__(self) -> None:
        if self.curvature <= 0:
            raise ValueError("curvature must be positive")

    def hessian_at(self, x: np.ndarray, fd_step: float = 1e-6) -> np.ndarray:
        """Hessian of rho at x, by callable or central differences of the gradient."""
        if self.hessian is not None:
            return np.asarray(self.hessian(x), dtype=float)
        n = x.size
        out = np.empty((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = fd_step
            out[:, j] = (self.gradient(x + e) - self.gradient(x - e)) / (2.0 * fd_step)
        return 0.5 * (out + out.T)


def _entropy_value(x: np.ndarray) -> float:
    # 0 log 0 = 0 by continuity
    positive = x[x > 0.0]
    return float(-np.sum(positive * np.log(positive)))


def _entropy_gradient(x: np.ndarray) -> np.ndarray:
    return -(np.log(x) + 1.0)


def _entropy_hessian(x: np.ndarray) -> np.ndarray:
    return np.diag(-1.0 / x)


def _entropy_argmax(pm: PayoffMatrix, y_coords: np.ndarray, beta: float) -> np.ndarray:
    return _softmax(beta * (pm.entries @ y_coords))


def entropy_perturbation() -> PerturbationFunction:
    """Entropy rho(x) = -sum x_i log x_i. Curvature 1 since 1/x_i >= 1 on the simplex."""
    return PerturbationFunction(
        name="entropy",
        value=_entropy_value,
        gradient=_entropy_gradient,
        curvature=1.0,
        hessian=_entropy_hessian,
        argmax=_entropy_argmax,
    )


@dataclass(frozen=True, eq=False)
class BetaSchedule:
    """Gain sequence beta_n, n >= 1: positive, nondecreasing.

    Kinds: "constant" (fixed beta), "power" (beta_n = n^nu with 0 < nu < 1),
    "table" (explicit values). The power kind deliberately excludes nu >= 1:
    that regime breaks the consistency guarantee the toolkit is built to
    check, and the classical counterexample (beta_n = n) is expressed as a
    table instead.
    """

    kind: str
    beta: float = 0.0
    nu: float = 0.0
    table: np.ndarray = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.kind == "constant":
            if not (np.isfinite(self.beta) and self.beta > 0):
                raise ValueError(f"constant schedule needs beta > 0, got {self.beta}")
        elif self.kind == "power":
            if not (0.0 < self.nu < 1.0):
                raise ValueError(f"power schedule needs 0 < nu < 1, got nu={self.nu}")
        elif self.kind == "table":
            arr = np.asarray(self.table, dtype=float)
            if arr.ndim != 1 or arr.size == 0:
                raise ValueError("table schedule needs a nonempty 1-d value array")
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ValueError("table schedule values must be finite and positive")
            if np.any(np.diff(arr) < 0):
                raise ValueError("table schedule values must be nondecreasing")
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, "table", arr)
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def constant_beta(cls, beta: float) -> "BetaSchedule":
        return cls(kind="constant", beta=float(beta))

    @classmethod
    def power(cls, nu: float) -> "BetaSchedule":
        return cls(kind="power", nu=float(nu))

    @classmethod
    def from_table(cls, values) -> "BetaSchedule":
        return cls(kind="table", table=np.asarray(values, dtype=float))

    @property
    def is_constant(self) -> bool:
        if self.kind == "constant":
            return True
        if self.kind == "table":
            return bool(np.all(self.table == self.table[0]))
        return False

    def value(self, n: int) -> float:
        """beta_n for stage index n >= 1."""
        if n < 1:
            raise ValueError(f"schedule index must be >= 1, got {n}")
        if self.kind == "constant":
            return self.beta
        if self.kind == "power":
            return float(n) ** self.nu
        if n > self.table.size:
            raise ValueError(f"table schedule has {self.table.size} entries, index {n} requested")
        return float(self.table[n - 1])

    def values(self, ns: np.ndarray) -> np.ndarray:
        """Vectorized beta_n over an integer index array (all indices >= 1)."""
        ns = np.asarray(ns)
        if ns.size and int(ns.min()) < 1:
            raise ValueError("schedule indices must be >= 1")
        if self.kind == "constant":
            return np.full(ns.shape, self.beta)
        if self.kind == "power":
            return ns.astype(float) ** self.nu
        if ns.size and int(ns.max()) > self.table.size:
            raise ValueError(
                f"table schedule has {self.table.size} entries, index {int(ns.max())} requested"
            )
        return self.table[ns - 1]

    def key(self) -> tuple:
        """Hashable identity, used for caching and config hashing."""
        if self.kind == "constant":
            return ("constant", self.beta)
        if self.kind == "power":
            return ("power", self.nu)
        return ("table", self.table.tobytes())

    def describe(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "beta": self.beta}
        if self.kind == "power":
            return {"kind": "power", "nu": self.nu}
        return {"kind": "table", "length": int(self.table.size), "first": float(self.table[0]),
                "last": float(self.table[-1])}


def _softmax(z: np.ndarray) -> np.ndarray:
    """Max-shifted softmax; safe for large entries."""
    shifted = z - np.max(z)
    w = np.exp(shifted)
    return w / w.sum()


def logit(pm: PayoffMatrix, y: SimplexPoint, beta: float) -> SimplexPoint:
    """Logit choice rule: weights proportional to exp(beta * pi(i, y)).

    Closed form of the entropy-smoothed best response; kept independent of
    the Newton solver so the two can certify each other.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if len(y) != pm.n_cols:
        raise ValueError(f"y has {len(y)} coordinates, matrix has {pm.n_cols} columns")
    return SimplexPoint(_softmax(beta * (pm.entries @ y.coords)))


def smooth_best_response(
    pm: PayoffMatrix,
    y: SimplexPoint,
    beta: float,
    rho: PerturbationFunction,
) -> SimplexPoint:
    """Maximize pi(x, y) + rho(x)/beta over the row simplex.

    Interior Newton method: the payoff term is linear in x, so the Hessian of
    the objective is exactly hessian(rho)/beta and the equality-constrained
    Newton step reduces to two linear solves. A fraction-to-boundary rule
    keeps the iterate strictly positive; Armijo backtracking guards global
    progress. Stationarity is measured in the simplex parameterization, as
    the sup norm of x .* (grad - x.grad), which bounds the coordinate error
    of the returned point by roughly beta * tol.

    Raises:
        RuntimeError: stationarity above tolerance after the iteration cap.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if len(y) != pm.n_cols:
        raise ValueError(f"y has {len(y)} coordinates, matrix has {pm.n_cols} columns")
    payoff_vec = pm.entries @ y.coords
    n = pm.n_rows
    ones = np.ones(n)

    def value_at(x: np.ndarray) -> float:
        return float(payoff_vec @ x) + rho.value(x) / beta

    def scaled_residual(x: np.ndarray, grad: np.ndarray) -> float:
        return float(np.max(np.abs(x * (grad - float(x @ grad)))))

    x = np.full(n, 1.0 / n)
    val = value_at(x)
    grad = payoff_vec + rho.gradient(x) / beta
    res = scaled_residual(x, grad)
    for _ in range(NEWTON_MAX_ITER):
        if res <= NEWTON_STATIONARITY_TOL:
            return SimplexPoint(x)

        hess = rho.hessian_at(x) / beta
        try:
            a = np.linalg.solve(hess, grad)
            b = np.linalg.solve(hess, ones)
            mu = float(ones @ a) / float(ones @ b)
            newton = -(a - mu * b)
        except np.linalg.LinAlgError:
            newton = None

        def search(step):
            # fraction-to-boundary start, then halving; accept on Armijo
            # progress or on residual contraction at a flat-or-better value
            # (objective gains fall below float resolution near the optimum)
            t = 1.0
            shrink = step < 0.0
            if np.any(shrink):
                t = min(1.0, 0.9995 * float(np.min(-x[shrink] / step[shrink])))
            armijo = 1e-4 * max(float(step @ grad), 0.0)
            flat_slack = 1e-10 * (1.0 + abs(val))
            for _ in range(60):
                cand = x + t * step
                cand = np.maximum(cand, 1e-300)
                cand /= cand.sum()
                cand_val = value_at(cand)
                cand_grad = payoff_vec + rho.gradient(cand) / beta
                cand_res = scaled_residual(cand, cand_grad)
                if (cand_val >= val + t * armijo and cand_val > val) or (
                        cand_res <= 0.5 * res and cand_val >= val - flat_slack):
                    return cand, cand_val, cand_grad, cand_res
                t *= 0.5
            return None

        moved = search(newton) if newton is not None else None
        if moved is None:
            moved = search(grad - grad.mean())
        if moved is None:
            break
        x, val, grad, res = moved

    raise RuntimeError(
        f"smooth best response did not reach stationarity {NEWTON_STATIONARITY_TOL} "
        f"in {NEWTON_MAX_ITER} iterations (residual {res:.3e}, beta={beta})"
    )


def perturbed_value(pm: PayoffMatrix, y: SimplexPoint, beta: float, rho: PerturbationFunction) -> float:
    """Smoothed best-reply value: pi(br, y) + rho(br)/beta at the maximizer.

    Always goes through the generic solver; closed forms (log-sum-exp for
    entropy) live in tests as independent oracles.
    """
    br = smooth_best_response(pm, y, beta, rho)
    return float(pm.entries @ y.coords @ br.coords) + rho.value(br.coords) / beta


def perturbed_payoff(pm: PayoffMatrix, x: SimplexPoint, y: SimplexPoint, beta: float,
                     rho: PerturbationFunction) -> float:
    """pi(x, y) + rho(x)/beta for an arbitrary mixed action x."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return (float(x.coords @ pm.entries @ y.coords) + rho.value(x.coords) / beta)


def lipschitz_certificate(
    pm: PayoffMatrix,
    beta: float,
    rho: PerturbationFunction,
    n_pairs: int = 200,
    rng: np.random.Generator | None = None,
) -> float:
    """Empirical sup of ||br(y) - br(y')|| / ||y - y'|| over sampled pairs.

    A sampled lower estimate of the true Lipschitz constant of the smoothed
    reply at this beta; callers divide by beta to estimate the
    schedule-independent factor. No exact constant is certified anywhere in
    the toolkit, only this measured ratio.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    for _ in range(n_pairs):
        pair = rng.dirichlet(np.ones(pm.n_cols), size=2)
        gap = float(np.linalg.norm(pair[0] - pair[1]))
        if gap < 1e-12:
            continue
        br0 = smooth_best_response(pm, SimplexPoint(pair[0]), beta, rho)
        br1 = smooth_best_response(pm, SimplexPoint(pair[1]), beta, rho)
        ratio = float(np.linalg.norm(br0.coords - br1.coords)) / gap
        worst = max(worst, ratio)
    return worst
