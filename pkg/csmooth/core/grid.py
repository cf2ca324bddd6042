"""
Domains, knot grids and piecewise-linear functions on [0, 1].

This module provides:
- DomainF: a finite union of closed intervals containing 0 and 1
- KnotGrid: knots inside F, with a reference to the grid they refine
- Hat functions, the interpolation projection pi_N and the multi-affine
  extension P across the holes of F
- The hole-aware grid size delta_N and the audit discretization of F
"""

import csv
import json
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

AUDIT_POINTS_PER_INTERVAL = 2001

Evaluator = Callable[[NDArray[np.float64]], NDArray[np.float64]]


class GridError(Exception):
    """Base exception for domain and grid errors."""

    def __init__(self, message: str, error_code: str | None = None):
        self.message = message
        self.error_code = error_code
        super().__init__(self.message)


@dataclass(frozen=True)
class DomainF:
    """Sorted disjoint closed intervals [a_i, b_i] with a_1 = 0 and b_last = 1."""

    intervals: tuple[tuple[float, float], ...] = ((0.0, 1.0),)

    def __post_init__(self) -> None:
        pieces = self.intervals
        if not pieces:
            raise GridError("Domain needs at least one interval", "INVALID_DOMAIN")
        if pieces[0][0] != 0.0 or pieces[-1][1] != 1.0:
            raise GridError("Domain must contain 0 and 1", "INVALID_DOMAIN")
        for lo, hi in pieces:
            if not lo <= hi:
                raise GridError(f"Empty interval [{lo}, {hi}]", "INVALID_DOMAIN")
        for (_, hi), (lo, _) in zip(pieces, pieces[1:], strict=False):
            if not hi < lo:
                raise GridError("Domain intervals must be sorted and disjoint", "INVALID_DOMAIN")

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]] | None) -> "DomainF":
        if not pairs:
            return cls()
        return cls(tuple((float(lo), float(hi)) for lo, hi in pairs))

    @property
    def is_dense(self) -> bool:
        return self.intervals == ((0.0, 1.0),)

    @property
    def holes(self) -> list[tuple[float, float]]:
        """Open gaps (b_i, a_{i+1}) between consecutive intervals."""
        return [
            (hi, lo) for (_, hi), (lo, _) in zip(self.intervals, self.intervals[1:], strict=False)
        ]

    def contains(self, t: ArrayLike) -> NDArray[np.bool_]:
        points = np.asarray(t, dtype=np.float64)
        inside = np.zeros(points.shape, dtype=bool)
        for lo, hi in self.intervals:
            inside |= (points >= lo) & (points <= hi)
        return inside

    def to_list(self) -> list[list[float]]:
        return [[lo, hi] for lo, hi in self.intervals]


@dataclass(frozen=True, eq=False)
class KnotGrid:
    """Strictly increasing knots 0 = t_1 < ... < t_N = 1, all inside the domain."""

    knots: NDArray[np.float64]
    domain: DomainF = DomainF()
    parent: "KnotGrid | None" = None

    def __post_init__(self) -> None:
        t = np.array(self.knots, dtype=np.float64)
        object.__setattr__(self, "knots", t)
        t.flags.writeable = False
        if t.ndim != 1 or t.size < 2:
            raise GridError("A knot grid needs at least the knots 0 and 1", "INVALID_KNOTS")
        if t[0] != 0.0 or t[-1] != 1.0:
            raise GridError("Knot grids must start at 0 and end at 1", "INVALID_KNOTS")
        if np.any(np.diff(t) <= 0):
            raise GridError("Knots must be strictly increasing (no duplicates)", "INVALID_KNOTS")
        if not np.all(self.domain.contains(t)):
            raise GridError("Every knot must lie in the domain F", "INVALID_KNOTS")
        if self.parent is not None and not np.all(np.isin(self.parent.knots, t)):
            raise GridError("A refined grid must contain its parent's knots", "INVALID_KNOTS")

    @property
    def N(self) -> int:
        return int(self.knots.size)

    def same_knots(self, other: "KnotGrid") -> bool:
        return self.N == other.N and bool(np.array_equal(self.knots, other.knots))


@dataclass(frozen=True)
class PiecewiseLinear:
    """Function in span(phi_1..phi_N) stored by its knot values."""

    grid: KnotGrid
    coeffs: NDArray[np.float64]

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.shape != (self.grid.N,):
            raise GridError(
                f"Expected {self.grid.N} coefficients, got shape {c.shape}", "GRID_MISMATCH"
            )
        object.__setattr__(self, "coeffs", c)

    def __call__(self, t: ArrayLike) -> NDArray[np.float64]:
        # Knots lie in F, so every hole sits inside one knot gap and the
        # multi-affine extension coincides with plain hat interpolation.
        return np.asarray(np.interp(t, self.grid.knots, self.coeffs), dtype=np.float64)


@dataclass(frozen=True)
class SampledFunction:
    """A function known through its values on a sorted set of points."""

    points: NDArray[np.float64]
    values: NDArray[np.float64]

    def __call__(self, t: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(np.interp(t, self.points, self.values), dtype=np.float64)


class Neighbors(NamedTuple):
    t_minus: float
    t_plus: float
    w_minus: float
    w_plus: float


def equispaced(n: int, domain: DomainF | None = None) -> KnotGrid:
    """n equispaced knots on [0, 1]."""
    if n < 2:
        raise GridError(f"Need at least 2 knots, got {n}", "INVALID_KNOTS")
    return KnotGrid(np.linspace(0.0, 1.0, n), domain or DomainF())


def equispaced_in(domain: DomainF, n: int) -> KnotGrid:
    """
    Equispaced knots of [0, 1] that fall in F, plus every F-interval endpoint.

    For F = [0, 1] this is exactly equispaced(n).
    """
    base = np.linspace(0.0, 1.0, n)
    ends = np.array([x for piece in domain.intervals for x in piece])
    # drop grid points that would nearly duplicate an interval end
    far = np.abs(base[:, None] - ends[None, :]).min(axis=1) > 0.25 / (n - 1)
    keep = domain.contains(base) & far
    knots = np.unique(np.concatenate([base[keep], ends]))
    return KnotGrid(knots, domain)


def refine(grid: KnotGrid, t: float) -> KnotGrid:
    """Insert the knot t; the child keeps a reference to its parent."""
    if not 0.0 < t < 1.0 or bool(np.any(grid.knots == t)):
        raise GridError(f"Cannot insert knot {t!r}", "INVALID_KNOTS")
    knots = np.insert(grid.knots, int(np.searchsorted(grid.knots, t)), t)
    return KnotGrid(knots, grid.domain, parent=grid)


def hat_matrix(grid: KnotGrid, ts: ArrayLike) -> NDArray[np.float64]:
    """Matrix (phi_j(t_i))_{ij}; each row has at most two nonzeros summing to 1."""
    t = np.clip(np.atleast_1d(np.asarray(ts, dtype=np.float64)), 0.0, 1.0)
    knots = grid.knots
    right = np.clip(np.searchsorted(knots, t, side="right"), 1, grid.N - 1)
    left = right - 1
    w_plus = (t - knots[left]) / (knots[right] - knots[left])
    rows = np.arange(t.size)
    out = np.zeros((t.size, grid.N))
    out[rows, left] = 1.0 - w_plus
    out[rows, right] += w_plus
    return out


def hat_eval(grid: KnotGrid, i: int, t: float) -> float:
    """
    Hat function phi_i(t), with i a 0-based knot index.

    The outer hats use the virtual knots t_0 = -1 and t_{N+1} = 2.

    Example:
        >>> hat_eval(equispaced(3), 1, 0.25)
        0.5
    """
    if not 0 <= i < grid.N:
        raise GridError(f"Hat index {i} outside 0..{grid.N - 1}", "INVALID_KNOTS")
    knots = grid.knots
    left = knots[i - 1] if i > 0 else -1.0
    right = knots[i + 1] if i < grid.N - 1 else 2.0
    center = knots[i]
    if t == center:
        return 1.0
    if left < t < center:
        return float((t - left) / (center - left))
    if center < t < right:
        return float((right - t) / (right - center))
    return 0.0


def neighbors(grid: KnotGrid, t: float) -> Neighbors:
    """Flanking knots of t and the linear weights; knots give (t, t, 1/2, 1/2)."""
    knots = grid.knots
    j = int(np.searchsorted(knots, t))
    if j < grid.N and knots[j] == t:
        return Neighbors(float(t), float(t), 0.5, 0.5)
    lo, hi = float(knots[j - 1]), float(knots[j])
    w_minus = (hi - t) / (hi - lo)
    return Neighbors(lo, hi, w_minus, 1.0 - w_minus)


def project_pi_N(grid: KnotGrid, f: Evaluator) -> PiecewiseLinear:
    """Piecewise-affine interpolation of f at the knots."""
    return PiecewiseLinear(grid, np.asarray(f(grid.knots), dtype=np.float64))


def _hole_bridges(
    domain: DomainF, t: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Bridge points: each t is mapped to (t_minus, t_plus, w_plus) at the F boundary."""
    t_minus = t.copy()
    t_plus = t.copy()
    w_plus = np.zeros_like(t)
    for lo, hi in domain.holes:
        inside = (t > lo) & (t < hi)
        t_minus[inside] = lo
        t_plus[inside] = hi
        w_plus[inside] = (t[inside] - lo) / (hi - lo)
    return t_minus, t_plus, w_plus


def extend_P(domain: DomainF, u: Evaluator, t: ArrayLike) -> NDArray[np.float64]:
    """
    Multi-affine extension of u from F to [0, 1].

    On F the values of u are kept; inside each hole (b_i, a_{i+1}) u is
    bridged affinely between u(b_i) and u(a_{i+1}).
    """
    points = np.atleast_1d(np.asarray(t, dtype=np.float64))
    t_minus, t_plus, w_plus = _hole_bridges(domain, points)
    return np.asarray((1.0 - w_plus) * u(t_minus) + w_plus * u(t_plus), dtype=np.float64)


def extension_matrix(grid: KnotGrid, ts: ArrayLike) -> NDArray[np.float64]:
    """Rows (P(phi_j|F)(x_i))_j, i.e. w_- phi_j(t^-) + w_+ phi_j(t^+)."""
    points = np.atleast_1d(np.asarray(ts, dtype=np.float64))
    t_minus, t_plus, w_plus = _hole_bridges(grid.domain, points)
    return (1.0 - w_plus)[:, None] * hat_matrix(grid, t_minus) + w_plus[:, None] * hat_matrix(
        grid, t_plus
    )


def _interval_delta(
    inner: NDArray[np.float64], lo: float, hi: float, all_knots: NDArray[np.float64]
) -> float:
    if inner.size == 0:
        # No knot in this piece of F: measured against the flanking knots, as
        # the hole bridging of P does, rather than as +inf
        left = float(all_knots[all_knots < lo].max())
        right = float(all_knots[all_knots > hi].min())
        mid = np.clip(0.5 * (left + right), lo, hi)
        return float(min(mid - left, right - mid))
    gaps = 0.5 * np.diff(inner).max() if inner.size > 1 else 0.0
    # A side without a knot inside the piece counts as infinitely far
    return float(max(gaps, inner[0] - lo, hi - inner[-1]))


def grid_size_delta(grid: KnotGrid) -> float:
    """
    Grid size delta_N = sup over t in F of min(|t - t^-|, |t - t^+|).

    Computed exactly per F-interval: half the widest knot gap inside the
    interval, or the distance from an interval end to its nearest inner knot
    when that end is not a knot (the side with no knot inside the interval
    counts as infinitely far). An interval holding no knot at all takes
    t^- and t^+ from the knots flanking it in [0, 1], so delta_N stays finite
    while a refinement strategy has not reached that interval yet.

    Example:
        >>> grid_size_delta(equispaced(3))
        0.25
    """
    knots = grid.knots
    delta = 0.0
    for lo, hi in grid.domain.intervals:
        inner = knots[(knots >= lo) & (knots <= hi)]
        delta = max(delta, _interval_delta(inner, lo, hi, knots))
    return delta


def audit_points(
    domain: DomainF,
    grid: KnotGrid | None = None,
    per_interval: int = AUDIT_POINTS_PER_INTERVAL,
) -> NDArray[np.float64]:
    """Audit discretization of F: per_interval points per interval plus all knots."""
    pieces = [np.linspace(lo, hi, per_interval) for lo, hi in domain.intervals]
    if grid is not None:
        pieces.append(grid.knots)
    return np.unique(np.concatenate(pieces))


def to_csv(grid: KnotGrid, path: Path) -> None:
    """Write knots one per row under a '# {json}' header holding the F-intervals."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        handle.write(f"# {json.dumps({'domain': grid.domain.to_list()})}\n")
        writer = csv.writer(handle)
        writer.writerow(["knot"])
        for t in grid.knots:
            writer.writerow([format(float(t), ".17g")])
    logger.debug(f"Wrote grid of {grid.N} knots to {path}")


def from_csv(path: Path) -> KnotGrid:
    with path.open(newline="") as handle:
        header = handle.readline()
        if not header.startswith("#"):
            raise GridError(f"{path} has no '# {{json}}' metadata header", "INVALID_KNOTS")
        meta = json.loads(header[1:])
        reader = csv.DictReader(handle)
        knots = np.array([float(row["knot"]) for row in reader])
    return KnotGrid(knots, DomainF.from_pairs(meta.get("domain")))
