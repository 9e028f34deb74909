"""Sequence recursions and integral-inequality certificates.

Standalone numerics: a Gronwall-type bound evaluator, the shared Simpson
quadrature, and the product/sum certificate for recursions of the form
Phi_{k+1} <= lambda_{k+1} Phi_k + eta_{k+1}.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

SIMPSON_REL_TOL = 1e-8
_SIMPSON_START_PANELS = 64
_SIMPSON_MAX_PANELS = 2**22


def _eval_on_grid(fn: Callable, xs: np.ndarray) -> np.ndarray:
    """Evaluate fn on a grid, accepting scalar-only callables."""
    try:
        ys = np.asarray(fn(xs), dtype=float)
        if ys.shape == xs.shape:
            return ys
    except (TypeError, ValueError):
        pass
    return np.array([float(fn(float(x))) for x in xs])


def _composite_simpson(ys: np.ndarray, h: float) -> float:
    return float(h / 3.0 * (ys[0] + ys[-1] + 4.0 * ys[1:-1:2].sum() + 2.0 * ys[2:-2:2].sum()))


def _cumulative_simpson(ys: np.ndarray, h: float) -> np.ndarray:
    """Antiderivative values at all grid nodes (Simpson on pairs, quadratic
    interpolation for the odd half-panels)."""
    out = np.zeros_like(ys)
    even = ys[0:-2:2]
    mid = ys[1::2]
    right = ys[2::2]
    out[2::2] = np.cumsum(h / 3.0 * (even + 4.0 * mid + right))
    out[1::2] = out[0:-1:2] + h / 12.0 * (5.0 * even + 8.0 * mid - right)
    return out


def adaptive_simpson(fn: Callable, a: float, b: float,
                     rel_tol: float = SIMPSON_REL_TOL) -> float:
    """Integral of fn over [a, b]: composite Simpson under grid doubling until
    two successive refinements agree to rel_tol."""
    if b < a:
        raise ValueError(f"inverted interval [{a}, {b}]")
    if a == b:
        return 0.0
    n = _SIMPSON_START_PANELS
    prev = None
    while n <= _SIMPSON_MAX_PANELS:
        xs = np.linspace(a, b, n + 1)
        ys = _eval_on_grid(fn, xs)
        total = _composite_simpson(ys, (b - a) / n)
        if prev is not None and abs(total - prev) <= rel_tol * max(abs(total), 1e-300):
            return total
        prev = total
        n *= 2
    raise RuntimeError(f"quadrature did not stabilize at {rel_tol} by {n} panels")


@dataclass(frozen=True, eq=False)
class GronwallInstance:
    """Data of the integral inequality y(s) <= y0 + int f*y + int g on [a, b].

    f and g must be nonnegative on the interval; this is spot-checked on the
    quadrature grids rather than certified globally.
    """

    f: Callable
    g: Callable
    y0: float
    a: float
    b: float

    def __post_init__(self):
        if self.y0 < 0:
            raise ValueError(f"y0 must be nonnegative, got {self.y0}")
        if self.b < self.a:
            raise ValueError(f"inverted interval [{self.a}, {self.b}]")

    @classmethod
    def from_tables(cls, xs: np.ndarray, f_vals: np.ndarray, g_vals: np.ndarray,
                    y0: float) -> "GronwallInstance":
        """Tabulated coefficients, linearly interpolated between samples."""
        xs = np.asarray(xs, dtype=float)
        f_vals = np.asarray(f_vals, dtype=float)
        g_vals = np.asarray(g_vals, dtype=float)
        if xs.ndim != 1 or xs.size < 2 or np.any(np.diff(xs) <= 0):
            raise ValueError("xs must be strictly increasing with at least 2 points")
        if f_vals.shape != xs.shape or g_vals.shape != xs.shape:
            raise ValueError("table shapes must match xs")
        if np.min(f_vals) < 0 or np.min(g_vals) < 0:
            raise ValueError("tabulated f, g must be nonnegative")
        return cls(
            f=lambda s: np.interp(s, xs, f_vals),
            g=lambda s: np.interp(s, xs, g_vals),
            y0=float(y0), a=float(xs[0]), b=float(xs[-1]),
        )


def _check_nonnegative(name: str, ys: np.ndarray) -> np.ndarray:
    if float(np.min(ys)) < -1e-12:
        raise ValueError(f"{name} must be nonnegative on the grid "
                         f"(min {float(np.min(ys)):.3e})")
    return np.maximum(ys, 0.0)


def gronwall_bound(inst: GronwallInstance, s: float,
                   rel_tol: float = SIMPSON_REL_TOL) -> float:
    """Bound y(s) <= y0*exp(int_a^s f) + int_a^s g(u)*exp(int_u^s f) du."""
    if not inst.a <= s <= inst.b:
        raise ValueError(f"s={s} outside [{inst.a}, {inst.b}]")
    if s == inst.a:
        return inst.y0
    n = _SIMPSON_START_PANELS
    prev = None
    while n <= _SIMPSON_MAX_PANELS:
        xs = np.linspace(inst.a, s, n + 1)
        h = (s - inst.a) / n
        fv = _check_nonnegative("f", _eval_on_grid(inst.f, xs))
        gv = _check_nonnegative("g", _eval_on_grid(inst.g, xs))
        F = _cumulative_simpson(fv, h)
        total = inst.y0 * float(np.exp(F[-1])) + _composite_simpson(
            gv * np.exp(F[-1] - F), h)
        if prev is not None and abs(total - prev) <= rel_tol * max(abs(total), 1e-300):
            return total
        prev = total
        n *= 2
    raise RuntimeError(f"Gronwall quadrature did not stabilize at {rel_tol}")


SequenceLike = Union[Sequence[float], np.ndarray, Callable[[int], float]]


def _sequence_values(seq: SequenceLike, K: int, name: str) -> np.ndarray:
    """Materialize a 1-based sequence as values for k = 1..K."""
    if callable(seq):
        return np.array([float(seq(k)) for k in range(1, K + 1)])
    arr = np.asarray(seq, dtype=float).ravel()
    if arr.size < K:
        raise ValueError(f"{name} has {arr.size} entries, need {K}")
    return arr[:K].copy()


@dataclass(frozen=True, eq=False)
class SequenceCertificate:
    """Certificate series for Phi_{k+1} <= lambda_{k+1} Phi_k + eta_{k+1}.

    bound[k-1] is the exact iterate of the recursion started at phi0,
    which equals H_k (phi0 + sum_i eta_i / H_i) without ever forming the
    overflow-prone 1/H_i terms. case_a / case_b flag which convergence
    mechanism the instance exhibits: constant contraction with vanishing
    eta, or vanishing product H_k with summable eta (the eta tail exponent
    is fitted on the last half of the series).
    """

    ks: np.ndarray
    lambdas: np.ndarray
    etas: np.ndarray
    H: np.ndarray
    H_tilde: np.ndarray
    bound: np.ndarray
    phi0: float
    case_a: bool
    case_b: bool
    eta_fit_exponent: float

    @property
    def final_bound(self) -> float:
        return float(self.bound[-1])


def sequence_certificate(lambda_seq: SequenceLike, eta_seq: SequenceLike,
                         phi0: float, K: int) -> SequenceCertificate:
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if phi0 < 0:
        raise ValueError(f"phi0 must be nonnegative, got {phi0}")
    lam = _sequence_values(lambda_seq, K, "lambda_seq")
    eta = _sequence_values(eta_seq, K, "eta_seq")
    if np.any(lam <= 0.0) or np.any(lam >= 1.0):
        bad = lam[(lam <= 0.0) | (lam >= 1.0)][0]
        raise ValueError(f"lambda values must lie strictly in (0,1), got {bad}")
    if np.any(eta < 0.0):
        raise ValueError("eta values must be nonnegative")

    H = np.exp(np.cumsum(np.log(lam)))
    bound = np.empty(K)
    acc = float(phi0)
    for i in range(K):
        acc = lam[i] * acc + eta[i]
        bound[i] = acc
    H_tilde = np.maximum(bound - H * phi0, 0.0)

    lam_span = float(lam.max() - lam.min())
    lam_constant = lam_span <= 1e-12 * max(float(lam.max()), 1e-300)
    eta_max = float(eta.max())
    eta_vanishes = eta_max == 0.0 or float(eta[-1]) <= max(1e-2 * eta_max, 1e-12)

    tail = slice(K // 2, K)
    tail_eta = eta[tail]
    tail_k = np.arange(1, K + 1, dtype=float)[tail]
    if np.all(tail_eta == 0.0):
        fit_exponent = -np.inf
    elif np.all(tail_eta > 0.0) and tail_eta.size >= 4:
        fit_exponent = float(np.polyfit(np.log(tail_k), np.log(tail_eta), 1)[0])
    else:
        fit_exponent = np.nan
    eta_summable = fit_exponent == -np.inf or (
        np.isfinite(fit_exponent) and fit_exponent < -1.05)

    case_a = bool(lam_constant and eta_vanishes)
    case_b = bool(float(H[-1]) <= 1e-3 and eta_summable)

    return SequenceCertificate(
        ks=np.arange(1, K + 1),
        lambdas=lam,
        etas=eta,
        H=H,
        H_tilde=H_tilde,
        bound=bound,
        phi0=float(phi0),
        case_a=case_a,
        case_b=case_b,
        eta_fit_exponent=fit_exponent,
    )
