"""The sewing map on refining partitions and the rough integral.

A germ is a two-parameter function Xi with |Xi_{st}| <~ (t-s)^alpha and
|delta Xi_{sut}| <~ (t-s)^beta, beta > 1.  The sewing map assigns to such a
germ the limit of its Riemann-type partition sums; the limit exists and is
independent of the partition sequence.  Numerically we refine partitions by
a fixed factor and stop when successive sums agree to tolerance, the grid
resolution is reached, or a maximum depth is hit; the full sum sequence is
reported so callers can fit convergence rates.

For a controlled integrand the germ is Xi_{st} = sum_n Y^(n)_s . X^(n)_{st},
whose delta equals -sum_k Y^(k,#)_{su} . X^(k)_{ut}; with beta = (p+1)*gamma
this defines the rough integral.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .controlled_path import ControlledPathGrid
from .errors import NonConvergenceError
from .rough_path import TimeGrid


@dataclass(frozen=True)
class GermFunction:
    """Evaluator (s, t) -> real with declared Holder exponents.

    ``fn`` must accept numpy arrays of endpoints (vectorized evaluation).
    Grid-backed germs carry the grid and a ``partition_sum(i, j, cells)``
    hook for fast level sums; they are only defined on grid nodes.
    """

    fn: Callable
    alpha: float
    beta: float
    grid: Optional[TimeGrid] = None
    partition_sum: Optional[Callable] = None
    label: str = ""

    def __call__(self, s, t):
        return self.fn(s, t)


def delta(germ, s: float, u: float, t: float) -> float:
    """delta Xi_{sut} = Xi_{st} - Xi_{su} - Xi_{ut}."""
    if not s <= u <= t:
        raise ValueError(f"require s <= u <= t, got {s}, {u}, {t}")
    return float(germ(s, t)) - float(germ(s, u)) - float(germ(u, t))


@dataclass
class SewResult:
    """Partition-sum sequence and stopping diagnostics for one sewing run."""

    value: float
    sums: np.ndarray
    deltas: np.ndarray
    converged: bool
    reason: str  # "tol" | "grid" | "max_levels" | "diverging"

    @property
    def last_delta(self) -> float:
        return float(self.deltas[-1]) if self.deltas.size else 0.0


def sew(
    germ,
    s: float,
    t: float,
    factor: int = 2,
    atol: float = 1e-12,
    rtol: float = 1e-10,
    max_levels: int = 20,
) -> SewResult:
    """Partition sums of the germ over [s, t] along factor-refinements.

    Returns the last computed sum together with the sequence of sums and
    successive increments.  Refinement stops on tolerance, at the grid
    resolution for grid-backed germs, or at ``max_levels``.  Persistently
    non-decreasing increments are flagged as non-convergence.
    """
    if germ.beta <= 1.0:
        raise ValueError(f"declared beta={germ.beta} <= 1: germ is not sewable")
    if factor < 2:
        raise ValueError("refinement factor must be at least 2")
    if t < s:
        raise ValueError(f"require s <= t, got s={s}, t={t}")
    if t == s:
        return SewResult(0.0, np.zeros(1), np.zeros(0), True, "tol")

    grid = germ.grid
    if grid is not None:
        i, j = grid.index_of(s), grid.index_of(t)
        n_seg = j - i

    sums = []
    reason = "max_levels"
    small_streak = 0
    for lvl in range(max_levels + 1):
        cells = factor ** lvl
        if grid is not None:
            if n_seg % cells != 0:
                reason = "grid"
                break
            if germ.partition_sum is not None:
                total = germ.partition_sum(i, j, cells)
            else:
                ids = i + (n_seg // cells) * np.arange(cells + 1)
                total = float(np.sum(germ.fn(grid.nodes[ids[:-1]], grid.nodes[ids[1:]])))
        else:
            bounds = s + (t - s) * np.arange(cells + 1) / cells
            total = float(np.sum(germ.fn(bounds[:-1], bounds[1:])))
        sums.append(total)
        if lvl >= 1 and abs(sums[-1] - sums[-2]) < atol + rtol * abs(sums[-1]):
            # one coincidental agreement between coarse levels is not
            # convergence (periodic integrands produce them); require two
            small_streak += 1
            if small_streak >= 2:
                reason = "tol"
                break
        else:
            small_streak = 0
        if grid is not None and n_seg // cells == 1:
            reason = "grid"
            break

    sums = np.asarray(sums)
    deltas = np.abs(np.diff(sums))
    converged = reason in ("tol", "grid")
    if deltas.size >= 3 and np.all(np.diff(deltas[-3:]) >= 0) and deltas[-1] > deltas[0]:
        converged = False
        reason = "diverging"
    return SewResult(float(sums[-1]), sums, deltas, converged, reason)


# -- controlled germs --------------------------------------------------------


def _batched_mul(a, b):
    """Graded product of stacked level arrays: lists indexed by level, (m, d**n)."""
    p = len(a) - 1
    out = []
    for n in range(p + 1):
        acc = np.zeros_like(a[n])
        for k in range(n + 1):
            acc += np.einsum("ma,mb->mab", a[n - k], b[k]).reshape(acc.shape)
        out.append(acc)
    return out


class _CellIncrements:
    """Increments of equal-width index cells of [i, j], memoized per width."""

    def __init__(self, base, i: int, j: int):
        self.base = base
        self.i = i
        self.j = j
        self.cache = {}

    def cells(self, width: int):
        if width in self.cache:
            return self.cache[width]
        base = self.base
        p = base.level
        if width == 1:
            out = [
                np.stack([sig.data[k].ravel() for sig in base.segment_sigs[self.i:self.j]])
                for k in range(p + 1)
            ]
        else:
            split = None
            for f in (2, 3, 5, 7):
                if width % f == 0:
                    split = f
                    break
            if split is None:
                split = width
            child = self.cells(width // split) if width % split == 0 else None
            if child is not None:
                out = [c[0::split] for c in child]
                for q in range(1, split):
                    out = _batched_mul(out, [c[q::split] for c in child])
            else:  # pragma: no cover - widths are factor powers in practice
                raise ValueError(f"cannot tile cells of width {width}")
        self.cache[width] = out
        return out


def germ_from_controlled(path: ControlledPathGrid, gamma: float) -> GermFunction:
    """Riemann-sum germ Xi_{st} = sum_n Y^(n)_s . X^(n)_{st} of a controlled path."""
    base = path.base
    p = base.level
    if gamma <= 0:
        raise ValueError("gamma must be positive")

    def point_eval(s, t):
        s_arr, t_arr = np.atleast_1d(s), np.atleast_1d(t)
        vals = np.empty(s_arr.shape)
        for q, (a, b) in enumerate(zip(s_arr, t_arr)):
            i, j = base.grid.index_of(a), base.grid.index_of(b)
            inc = base.increment_by_index(i, j)
            tot = 0.0
            for n in range(1, p + 1):
                tot += float(
                    np.tensordot(path.components[n - 1][i], inc.data[n], axes=n)
                )
            vals[q] = tot
        return vals if np.ndim(s) else float(vals[0])

    memo = {}

    def partition_sum(i, j, cells):
        key = (i, j)
        if key not in memo:
            memo[key] = _CellIncrements(base, i, j)
        width = (j - i) // cells
        incs = memo[key].cells(width)
        lefts = i + width * np.arange(cells)
        total = 0.0
        for n in range(1, p + 1):
            y = path.components[n - 1][lefts].reshape(cells, -1)
            total += float(np.einsum("ma,ma->", y, incs[n]))
        return total

    return GermFunction(
        fn=point_eval,
        alpha=gamma,
        beta=(p + 1) * gamma,
        grid=base.grid,
        partition_sum=partition_sum,
        label="controlled",
    )


def rough_integral_result(
    path: ControlledPathGrid,
    s: float,
    t: float,
    gamma: float,
    **sew_options,
) -> SewResult:
    """Sewing run for the integral of a controlled path against its driver."""
    p = path.level
    if (p + 1) * gamma <= 1.0:
        raise ValueError(
            f"(p+1)*gamma = {(p + 1) * gamma:g} <= 1: germ not sewable at level {p}"
        )
    germ = germ_from_controlled(path, gamma)
    return sew(germ, s, t, **sew_options)


def rough_integral(
    path: ControlledPathGrid,
    s: float,
    t: float,
    gamma: float,
    strict: bool = False,
    **sew_options,
) -> float:
    """Rough integral of a controlled path over [s, t].

    With ``strict`` a non-convergent sewing run raises instead of returning
    the last partition sum.
    """
    res = rough_integral_result(path, s, t, gamma, **sew_options)
    if strict and not res.converged:
        raise NonConvergenceError(
            f"sewing did not converge over [{s}, {t}]: {res.reason}"
        )
    return res.value


def germ_distance(a, b, alpha: float, beta: float, grid: TimeGrid = None) -> float:
    """Holder norm of the germ difference: pair seminorm plus triple delta seminorm.

    Both germs are evaluated over the pairs and triples of one grid (taken
    from the germs themselves when not passed); O(N^3) triples, so meant for
    modest grids.
    """
    if grid is None:
        grid = a.grid if a.grid is not None else b.grid
    if grid is None:
        raise ValueError("analytic germs need an explicit grid for the sup")
    nodes = grid.nodes
    n = nodes.size
    ii, jj = np.triu_indices(n, k=1)
    diff_pairs = np.asarray(a.fn(nodes[ii], nodes[jj])) - np.asarray(
        b.fn(nodes[ii], nodes[jj])
    )
    pair_norm = float(np.max(np.abs(diff_pairs) / (nodes[jj] - nodes[ii]) ** alpha))
    table = np.zeros((n, n))
    table[ii, jj] = diff_pairs
    trip = [
        (i, u, j)
        for i in range(n)
        for u in range(i + 1, n)
        for j in range(u + 1, n)
    ]
    if not trip:
        return pair_norm
    trip = np.asarray(trip)
    d_vals = (
        table[trip[:, 0], trip[:, 2]]
        - table[trip[:, 0], trip[:, 1]]
        - table[trip[:, 1], trip[:, 2]]
    )
    dt = nodes[trip[:, 2]] - nodes[trip[:, 0]]
    return pair_norm + float(np.max(np.abs(d_vals) / dt ** beta))
