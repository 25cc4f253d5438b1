"""Rough paths sampled on a time grid.

A path is stored through the signatures of its grid segments.  Two-index
increments over [t_i, t_j] are Chen products of the covered segments, so the
multiplicative identity X_{st} = X_{su} (x) X_{ut} holds by construction, and
the geometricity identity sym(X^(n)) = (X^(1))^{(x)n}/n! holds because every
segment signature is an exponential.

Holder-type seminorms are discrete suprema over grid-aligned pairs; they
bound the continuum seminorm from below.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .tensor_algebra import (
    TruncatedTensor,
    max_abs_diff,
    segment_signature,
    symmetrize_array,
    tensor_inverse,
    tensor_mul,
)


class TimeGrid:
    """Strictly increasing nodes t_0 = 0 < ... < t_N = T."""

    __slots__ = ("nodes",)

    def __init__(self, nodes):
        arr = np.array(nodes, dtype=float)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("grid needs at least two nodes")
        if arr[0] != 0.0:
            raise ValueError("first node must be 0")
        if not np.all(np.diff(arr) > 0):
            raise ValueError("nodes must be strictly increasing")
        arr.setflags(write=False)
        self.nodes = arr

    @classmethod
    def uniform(cls, horizon: float, n_segments: int) -> "TimeGrid":
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        if n_segments < 1:
            raise ValueError("need at least one segment")
        return cls(np.linspace(0.0, horizon, n_segments + 1))

    @classmethod
    def dyadic(cls, horizon: float, k: int) -> "TimeGrid":
        return cls.uniform(horizon, 2 ** k)

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_segments(self) -> int:
        return self.nodes.size - 1

    def index_of(self, t: float) -> int:
        """Index of a grid node; KeyError for off-grid times."""
        i = int(np.searchsorted(self.nodes, t))
        for j in (i - 1, i, i + 1):
            if 0 <= j < self.nodes.size and math.isclose(
                self.nodes[j], t, rel_tol=1e-12, abs_tol=1e-12
            ):
                return j
        raise KeyError(f"t={t!r} is not a grid node")

    def subsample(self, step: int) -> "TimeGrid":
        """Coarser grid keeping every ``step``-th node (step must divide N)."""
        if self.n_segments % step != 0:
            raise ValueError(f"step {step} does not divide {self.n_segments}")
        return TimeGrid(self.nodes[::step])

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.nodes, other.nodes)

    def __repr__(self):
        return f"TimeGrid(N={self.n_segments}, T={self.horizon:g})"


class RoughPathGrid:
    """A rough path at grid resolution: one segment signature per interval."""

    __slots__ = ("grid", "dim", "level", "segment_sigs")

    def __init__(self, grid: TimeGrid, dim: int, level: int, segment_sigs):
        segment_sigs = tuple(segment_sigs)
        if len(segment_sigs) != grid.n_segments:
            raise ValueError(
                f"{len(segment_sigs)} segment signatures for {grid.n_segments} segments"
            )
        for sig in segment_sigs:
            if sig.dim != dim or sig.level != level:
                raise ValueError("segment signature shape mismatch")
            if not sig.is_group_like(atol=1e-9):
                raise ValueError("segment signature is not group-like (scalar != 1)")
        self.grid = grid
        self.dim = dim
        self.level = level
        self.segment_sigs = segment_sigs

    # -- construction -----------------------------------------------------

    @classmethod
    def lift_piecewise_linear(cls, grid: TimeGrid, samples, level: int) -> "RoughPathGrid":
        """Canonical lift of the piecewise-linear interpolation of samples.

        One d-vector per grid node; each segment gets the exponential of its
        increment.  The result is geometric by construction.
        """
        vals = np.asarray(samples, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != grid.nodes.size:
            raise ValueError(
                f"{vals.shape[0]} samples for {grid.nodes.size} grid nodes"
            )
        if vals.shape[0] < 2:
            raise ValueError("need at least two samples")
        sigs = [
            segment_signature(vals[i + 1] - vals[i], level)
            for i in range(grid.n_segments)
        ]
        return cls(grid, vals.shape[1], level, sigs)

    # -- increments and defects -------------------------------------------

    def increment_by_index(self, i: int, j: int) -> TruncatedTensor:
        if not 0 <= i <= j <= self.grid.n_segments:
            raise ValueError(f"invalid index pair ({i},{j})")
        acc = TruncatedTensor.identity(self.dim, self.level)
        for q in range(i, j):
            acc = tensor_mul(acc, self.segment_sigs[q])
        return acc

    def increment(self, s: float, t: float) -> TruncatedTensor:
        """Chen product of the segment signatures covering [s, t]."""
        i, j = self.grid.index_of(s), self.grid.index_of(t)
        if i > j:
            raise ValueError(f"require s <= t, got s={s}, t={t}")
        return self.increment_by_index(i, j)

    def chen_defect(self, s: float, u: float, t: float) -> float:
        """Max-norm of X_{st} - X_{su} (x) X_{ut}; ~0 for any lifted path."""
        i, k, j = (self.grid.index_of(r) for r in (s, u, t))
        if not i <= k <= j:
            raise ValueError(f"require s <= u <= t, got {s}, {u}, {t}")
        whole = self.increment_by_index(i, j)
        split = tensor_mul(self.increment_by_index(i, k), self.increment_by_index(k, j))
        return max_abs_diff(whole, split)

    def symmetry_defect(self, s: float, t: float) -> float:
        """Max over levels of |sym(X^(n)_{st}) - (X^(1)_{st})^{(x)n}/n!|."""
        inc = self.increment(s, t)
        power = np.ones(())
        worst = 0.0
        for n in range(1, self.level + 1):
            power = np.multiply.outer(power, inc.data[1]) / n
            worst = max(worst, float(np.max(np.abs(symmetrize_array(inc.data[n], n) - power))))
        return worst

    def level1_values(self) -> np.ndarray:
        """Path values reconstructed from level-1 increments, based at 0."""
        incs = np.stack([sig.data[1] for sig in self.segment_sigs])
        out = np.zeros((self.grid.nodes.size, self.dim))
        np.cumsum(incs, axis=0, out=out[1:])
        return out

    # -- serialization -----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "grid": self.grid.nodes.tolist(),
            "dim": self.dim,
            "level": self.level,
            "segments": [[lvl.tolist() for lvl in sig.data] for sig in self.segment_sigs],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "RoughPathGrid":
        grid = TimeGrid(doc["grid"])
        dim, level = int(doc["dim"]), int(doc["level"])
        sigs = [TruncatedTensor(dim, level, levels) for levels in doc["segments"]]
        return cls(grid, dim, level, sigs)

    def save_json(self, path) -> None:
        with open(path, "w", newline="") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True)

    @classmethod
    def load_json(cls, path) -> "RoughPathGrid":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))

    def __repr__(self):
        return f"RoughPathGrid(d={self.dim}, p={self.level}, {self.grid!r})"


def identity_rough_path(grid: TimeGrid, dim: int, level: int) -> RoughPathGrid:
    """The constant path: every increment is the identity tensor."""
    ident = TruncatedTensor.identity(dim, level)
    return RoughPathGrid(grid, dim, level, [ident] * grid.n_segments)


# -- discrete Holder machinery ---------------------------------------------


def holder_seminorm(grid: TimeGrid, f, gamma: float) -> float:
    """sup over grid pairs s < t of |f(s,t)| / (t-s)^gamma.

    ``f`` is a callable on node pairs (scalar or array valued) or a
    precomputed (N+1, N+1) matrix of values.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    nodes = grid.nodes
    if nodes.size < 2:
        raise ValueError("empty grid")
    if isinstance(f, np.ndarray):
        iu = np.triu_indices(nodes.size, k=1)
        dt = nodes[iu[1]] - nodes[iu[0]]
        return float(np.max(np.abs(f[iu]) / dt ** gamma))
    best = 0.0
    for i in range(nodes.size - 1):
        for j in range(i + 1, nodes.size):
            mag = float(np.max(np.abs(np.asarray(f(nodes[i], nodes[j])))))
            best = max(best, mag / (nodes[j] - nodes[i]) ** gamma)
    return best


def holder_seminorm_path(grid: TimeGrid, values, gamma: float) -> float:
    """Discrete gamma-Holder seminorm of a one-parameter path on the grid."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    vals = np.asarray(values, dtype=float)
    if vals.shape[0] != grid.nodes.size:
        raise ValueError("one value per grid node required")
    flat = vals.reshape(vals.shape[0], -1)
    best = 0.0
    for i in range(flat.shape[0] - 1):
        diff = np.max(np.abs(flat[i + 1:] - flat[i]), axis=1)
        dt = grid.nodes[i + 1:] - grid.nodes[i]
        best = max(best, float(np.max(diff / dt ** gamma)))
    return best


def _prefix_levels(path: RoughPathGrid):
    """Flattened level arrays of the running signatures G_{0i} and their inverses."""
    n = path.grid.n_segments
    d, p = path.dim, path.level
    pref = [np.empty((n + 1, d ** k)) for k in range(p + 1)]
    ipref = [np.empty((n + 1, d ** k)) for k in range(p + 1)]
    cur = TruncatedTensor.identity(d, p)
    icur = cur
    for k in range(p + 1):
        pref[k][0] = cur.data[k].ravel()
        ipref[k][0] = icur.data[k].ravel()
    for i in range(n):
        cur = tensor_mul(cur, path.segment_sigs[i])
        icur = tensor_mul(tensor_inverse(path.segment_sigs[i]), icur)
        for k in range(p + 1):
            pref[k][i + 1] = cur.data[k].ravel()
            ipref[k][i + 1] = icur.data[k].ravel()
    return pref, ipref


def _row_increments(pref, ipref, i: int, dim: int, level: int):
    """Level arrays of X_{ij} for all j > i, shapes (N - i, d**n).

    Uses X_{ij} = G_{0i}^{-1} (x) G_{0j}; exact in the truncated algebra.
    """
    m = pref[0].shape[0] - 1 - i
    out = []
    for n_lvl in range(level + 1):
        acc = np.zeros((m, dim ** n_lvl))
        for k in range(n_lvl + 1):
            left = ipref[n_lvl - k][i]
            right = pref[k][i + 1:]
            acc += np.einsum("a,jb->jab", left, right).reshape(m, -1)
        out.append(acc)
    return out


def level_seminorms(path: RoughPathGrid, gamma: float):
    """Per-level discrete seminorms sup |X^(n)_{st}| / (t-s)^(n*gamma)."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    pref, ipref = _prefix_levels(path)
    nodes = path.grid.nodes
    sups = np.zeros(path.level)
    for i in range(path.grid.n_segments):
        incs = _row_increments(pref, ipref, i, path.dim, path.level)
        dt = nodes[i + 1:] - nodes[i]
        for n_lvl in range(1, path.level + 1):
            mags = np.max(np.abs(incs[n_lvl]), axis=1)
            sups[n_lvl - 1] = max(sups[n_lvl - 1], np.max(mags / dt ** (n_lvl * gamma)))
    return sups


def rho_gamma(x: RoughPathGrid, y: RoughPathGrid, gamma: float) -> float:
    """Rough-path distance: sum over levels of the (n*gamma)-seminorm of X - Y."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if x.grid != y.grid or x.dim != y.dim or x.level != y.level:
        raise ValueError("rough paths live on different grids or shapes")
    prefx, iprefx = _prefix_levels(x)
    prefy, iprefy = _prefix_levels(y)
    nodes = x.grid.nodes
    sups = np.zeros(x.level)
    for i in range(x.grid.n_segments):
        ix = _row_increments(prefx, iprefx, i, x.dim, x.level)
        iy = _row_increments(prefy, iprefy, i, y.dim, y.level)
        dt = nodes[i + 1:] - nodes[i]
        for n_lvl in range(1, x.level + 1):
            mags = np.max(np.abs(ix[n_lvl] - iy[n_lvl]), axis=1)
            sups[n_lvl - 1] = max(sups[n_lvl - 1], np.max(mags / dt ** (n_lvl * gamma)))
    return float(sups.sum())


# -- exhaustive defect sweeps ------------------------------------------------


def _pair_tables(path: RoughPathGrid):
    """Increments for every grid pair i < j as flattened level arrays.

    Row order: (0,1), (0,2), ..., (0,N), (1,2), ...; telescoping products,
    so the only roundoff is floating-point non-associativity.
    """
    n = path.grid.n_segments
    d, p = path.dim, path.level
    n_pairs = n * (n + 1) // 2
    tables = [np.empty((n_pairs, d ** k)) for k in range(p + 1)]
    offsets = np.zeros(n + 1, dtype=int)
    np.cumsum(n - np.arange(n), out=offsets[1:])
    row = 0
    for i in range(n):
        cur = path.segment_sigs[i]
        for k in range(p + 1):
            tables[k][row] = cur.data[k].ravel()
        row += 1
        for j in range(i + 2, n + 1):
            cur = tensor_mul(cur, path.segment_sigs[j - 1])
            for k in range(p + 1):
                tables[k][row] = cur.data[k].ravel()
            row += 1
    return tables, offsets


def _pair_rows(offsets, i, j):
    return offsets[i] + (j - i - 1)


def max_chen_defect(path: RoughPathGrid, relative: bool = True) -> float:
    """Worst multiplicativity defect over all strict grid triples s < u < t.

    With ``relative`` the defect is scaled by 1/(1 + |X_{st}|_inf).
    """
    n = path.grid.n_segments
    if n < 2:
        return 0.0
    tables, offsets = _pair_tables(path)
    idx = np.array(
        [(i, u, j) for i in range(n + 1) for u in range(i + 1, n + 1) for j in range(u + 1, n + 1)],
        dtype=int,
    )
    rows_su = _pair_rows(offsets, idx[:, 0], idx[:, 1])
    rows_ut = _pair_rows(offsets, idx[:, 1], idx[:, 2])
    rows_st = _pair_rows(offsets, idx[:, 0], idx[:, 2])
    worst = np.zeros(idx.shape[0])
    mags = np.zeros(idx.shape[0])
    for n_lvl in range(1, path.level + 1):
        whole = tables[n_lvl][rows_st]
        split = np.zeros_like(whole)
        for k in range(n_lvl + 1):
            a = tables[n_lvl - k][rows_su]
            b = tables[k][rows_ut]
            split += np.einsum("ma,mb->mab", a, b).reshape(whole.shape)
        np.maximum(worst, np.max(np.abs(whole - split), axis=1), out=worst)
        np.maximum(mags, np.max(np.abs(whole), axis=1), out=mags)
    if relative:
        worst = worst / (1.0 + mags)
    return float(np.max(worst))


def max_symmetry_defect(path: RoughPathGrid) -> float:
    """Worst geometricity defect over all grid pairs s < t."""
    tables, _ = _pair_tables(path)
    n_pairs = tables[0].shape[0]
    d = path.dim
    power = np.ones((n_pairs, 1))
    worst = 0.0
    for n_lvl in range(1, path.level + 1):
        lvl1 = tables[1]
        power = np.einsum("ma,mb->mab", power, lvl1).reshape(n_pairs, -1) / n_lvl
        sym = symmetrize_array(
            tables[n_lvl].reshape((n_pairs,) + (d,) * n_lvl), n_lvl
        ).reshape(n_pairs, -1)
        worst = max(worst, float(np.max(np.abs(sym - power))))
    return worst
