"""Finite two-player game primitives: payoff matrices, simplex points, state triples.

Conventions used throughout the package: the learner picks rows, the adversary
picks columns, and payoffs are the learner's. Mixed actions live on the
probability simplex of the matching dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIMPLEX_SUM_TOL = 1e-12


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


class PayoffMatrix:
    """Learner payoff matrix with at least two actions per side.

    Entries must be finite reals. ``sup_norm`` is max |entry|, the constant
    written ||pi||_inf in bound computations.
    """

    __slots__ = ("entries",)

    def __init__(self, entries) -> None:
        arr = np.asarray(entries, dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"payoff matrix must be 2-dimensional, got shape {arr.shape}")
        if arr.shape[0] < 2 or arr.shape[1] < 2:
            raise ValueError(f"payoff matrix needs >= 2 actions per player, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("payoff matrix entries must be finite")
        object.__setattr__(self, "entries", _readonly(arr))

    @property
    def n_rows(self) -> int:
        return self.entries.shape[0]

    @property
    def n_cols(self) -> int:
        return self.entries.shape[1]

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.entries)))

    @classmethod
    def matching_pennies(cls) -> "PayoffMatrix":
        """The coordination form used by the counterexamples: payoff 1 on a match."""
        return cls([[1.0, 0.0], [0.0, 1.0]])

    @classmethod
    def from_text(cls, text: str) -> "PayoffMatrix":
        """Parse a whitespace-separated row-major real matrix, one row per line.

        Blank lines and lines starting with '#' are skipped.
        """
        rows = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                rows.append([float(tok) for tok in stripped.split()])
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
        if not rows:
            raise ValueError("no matrix rows found")
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise ValueError(f"ragged rows: widths {sorted(widths)}")
        return cls(rows)

    def __eq__(self, other) -> bool:
        return isinstance(other, PayoffMatrix) and np.array_equal(self.entries, other.entries)

    def __hash__(self) -> int:
        return hash(self.entries.tobytes())

    def __repr__(self) -> str:
        return f"PayoffMatrix({self.entries.tolist()!r})"


class SimplexPoint:
    """Point on a probability simplex.

    Coordinates must be nonnegative and sum to 1 within ``SIMPLEX_SUM_TOL``.
    Inputs inside the tolerance are renormalized (running averages accumulate
    harmless rounding); anything further off is rejected as a likely bug.
    """

    __slots__ = ("coords",)

    def __init__(self, coords) -> None:
        arr = np.asarray(coords, dtype=float)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError(f"simplex point must be a vector of length >= 2, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("simplex coordinates must be finite")
        if np.any(arr < 0.0):
            raise ValueError(f"simplex coordinates must be nonnegative, got {arr.tolist()}")
        total = float(arr.sum())
        if abs(total - 1.0) >= SIMPLEX_SUM_TOL:
            raise ValueError(f"coordinates sum to {total!r}, off by more than {SIMPLEX_SUM_TOL}")
        object.__setattr__(self, "coords", _readonly(arr / total))

    @classmethod
    def vertex(cls, index: int, dim: int) -> "SimplexPoint":
        if not 0 <= index < dim:
            raise ValueError(f"vertex index {index} out of range for dimension {dim}")
        coords = np.zeros(dim)
        coords[index] = 1.0
        return cls(coords)

    @classmethod
    def uniform(cls, dim: int) -> "SimplexPoint":
        return cls(np.full(dim, 1.0 / dim))

    def __len__(self) -> int:
        return self.coords.size

    def __eq__(self, other) -> bool:
        return isinstance(other, SimplexPoint) and np.array_equal(self.coords, other.coords)

    def __hash__(self) -> int:
        return hash(self.coords.tobytes())

    def __repr__(self) -> str:
        return f"SimplexPoint({self.coords.tolist()!r})"


@dataclass(frozen=True)
class StateTriple:
    """Averaged state (x_bar, y_bar, pi_bar): both empirical mixtures plus mean payoff."""

    x: SimplexPoint
    y: SimplexPoint
    pi: float

    def as_vector(self) -> np.ndarray:
        """Concatenate to the ambient vector (x, y, pi) used by the inclusion solvers."""
        return np.concatenate([self.x.coords, self.y.coords, [self.pi]])

    @classmethod
    def from_vector(cls, vec: np.ndarray, n_rows: int, n_cols: int) -> "StateTriple":
        vec = np.asarray(vec, dtype=float)
        if vec.size != n_rows + n_cols + 1:
            raise ValueError(f"expected vector of length {n_rows + n_cols + 1}, got {vec.size}")
        return cls(
            x=SimplexPoint(vec[:n_rows]),
            y=SimplexPoint(vec[n_rows:n_rows + n_cols]),
            pi=float(vec[-1]),
        )


def bilinear_payoff(pm: PayoffMatrix, x: SimplexPoint, y: SimplexPoint) -> float:
    """Expected payoff x' A y of mixed actions x (rows) and y (columns)."""
    if len(x) != pm.n_rows or len(y) != pm.n_cols:
        raise ValueError(
            f"dimension mismatch: matrix {pm.n_rows}x{pm.n_cols}, x has {len(x)}, y has {len(y)}"
        )
    return float(x.coords @ pm.entries @ y.coords)


def best_response_value(pm: PayoffMatrix, y: SimplexPoint) -> float:
    """Value of the exact best response to y: max_i (A y)_i."""
    if len(y) != pm.n_cols:
        raise ValueError(f"y has {len(y)} coordinates, matrix has {pm.n_cols} columns")
    return float(np.max(pm.entries @ y.coords))


def best_response_set(pm: PayoffMatrix, y: SimplexPoint, tol: float = 1e-9) -> list[int]:
    """Indices of rows within tol of the best-response value, ascending."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    values = pm.entries @ y.coords
    top = float(np.max(values))
    return [int(i) for i in np.flatnonzero(values >= top - tol)]


def regret(pm: PayoffMatrix, y_bar: SimplexPoint, pi_bar: float) -> float:
    """Excess of the best stationary reply over the realized average payoff.

    e = max_i pi(i, y_bar) - pi_bar. Negative values are legitimate (the
    learner did better than any fixed row against the empirical mixture).
    """
    if not np.isfinite(pi_bar):
        raise ValueError("pi_bar must be finite")
    return best_response_value(pm, y_bar) - float(pi_bar)
