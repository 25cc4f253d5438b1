"""Paths controlled by a reference rough path.

A controlled path carries components Y^(k), k = 1..p, with the level-k
component an array of shape (d,)*k per grid node (scalar codomain).  The
k-th remainder over [s, t] is

    Y^(k,#)_{st} = Y^(k)_t - sum_{n=k}^{p} Y^(n)_s . X^(n-k)_{st}

where the contraction pairs the leading n-k indices of Y^(n)_s with
X^(n-k)_{st}: Chen's relation splits an increment with the [s,u]-part in
the leading tensor slots, and this orientation is exactly what makes

    delta Xi_{sut} = -sum_k Y^(k,#)_{su} . X^(k)_{ut}

an identity for the Riemann-sum germ Xi_{st} = sum_n Y^(n)_s . X^(n)_{st}.
(For composition lifts the derivative tensors are symmetric and the
orientation is invisible.)  The remainder seminorm at exponent
(p+1-k)*gamma is what makes the germ sewable.
"""

from __future__ import annotations

import numpy as np

from .rough_path import RoughPathGrid, _prefix_levels, _row_increments


class ControlledPathGrid:
    """Grid samples of a controlled path together with its reference path."""

    __slots__ = ("base", "components")

    def __init__(self, base: RoughPathGrid, components):
        components = tuple(np.asarray(c, dtype=float) for c in components)
        if len(components) != base.level:
            raise ValueError(
                f"{len(components)} components for truncation level {base.level}"
            )
        n_nodes = base.grid.nodes.size
        for k, comp in enumerate(components, start=1):
            want = (n_nodes,) + (base.dim,) * k
            if comp.shape != want:
                raise ValueError(
                    f"component {k} has shape {comp.shape}, expected {want}"
                )
        for comp in components:
            comp.setflags(write=False)
        self.base = base
        self.components = components

    @property
    def level(self) -> int:
        return self.base.level

    @property
    def dim(self) -> int:
        return self.base.dim

    def component(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.level:
            raise ValueError(f"component index {k} out of range 1..{self.level}")
        return self.components[k - 1]

    def remainder(self, k: int, s: float, t: float) -> np.ndarray:
        """Exact evaluation of the level-k remainder over [s, t]."""
        if not 1 <= k <= self.level:
            raise ValueError(f"component index {k} out of range 1..{self.level}")
        grid = self.base.grid
        i, j = grid.index_of(s), grid.index_of(t)
        if i > j:
            raise ValueError(f"require s <= t, got s={s}, t={t}")
        inc = self.base.increment_by_index(i, j)
        acc = np.array(self.components[k - 1][j], dtype=float)
        for n in range(k, self.level + 1):
            y = self.components[n - 1][i]
            if n == k:
                acc -= y
            else:
                # contract the leading n-k indices of Y^(n) with X^(n-k)
                acc -= np.tensordot(inc.data[n - k], y, axes=n - k)
        return acc

    def initial_values(self):
        return tuple(c[0] for c in self.components)

    def __repr__(self):
        return f"ControlledPathGrid(d={self.dim}, p={self.level}, {self.base.grid!r})"


def linear_combination(paths, weights) -> ControlledPathGrid:
    """Weighted sum of controlled paths over one common reference path."""
    paths = list(paths)
    weights = np.asarray(weights, dtype=float)
    if len(paths) != weights.size or not paths:
        raise ValueError("one weight per controlled path required")
    base = paths[0].base
    for p in paths[1:]:
        if p.base is not base:
            raise ValueError("controlled paths must share the same reference path")
    comps = [
        sum(w * p.components[k] for w, p in zip(weights, paths))
        for k in range(base.level)
    ]
    return ControlledPathGrid(base, comps)


def _row_remainders(path: ControlledPathGrid, i: int, inc_rows):
    """Remainder arrays over pairs (i, j > i): list indexed by k of (m, d**k)."""
    p, d = path.level, path.dim
    out = []
    for k in range(1, p + 1):
        vals = path.components[k - 1][i + 1:].reshape(inc_rows[0].shape[0], -1)
        acc = np.array(vals)
        for n in range(k, p + 1):
            y = path.components[n - 1][i]
            if n == k:
                acc -= y.reshape(1, -1)
            else:
                ymat = y.reshape(d ** (n - k), d ** k)
                acc -= inc_rows[n - k] @ ymat
        out.append(acc)
    return out


def controlled_seminorm(path: ControlledPathGrid, gamma: float) -> float:
    """Sum over k of the (p+1-k)*gamma seminorm of the k-th remainder."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    base = path.base
    pref, ipref = _prefix_levels(base)
    nodes = base.grid.nodes
    p = base.level
    sups = np.zeros(p)
    for i in range(base.grid.n_segments):
        incs = _row_increments(pref, ipref, i, base.dim, p)
        rems = _row_remainders(path, i, incs)
        dt = nodes[i + 1:] - nodes[i]
        for k in range(1, p + 1):
            mags = np.max(np.abs(rems[k - 1]), axis=1)
            sups[k - 1] = max(sups[k - 1], np.max(mags / dt ** ((p + 1 - k) * gamma)))
    return float(sups.sum())


def controlled_distance(
    y: ControlledPathGrid, z: ControlledPathGrid, gamma: float
) -> float:
    """Sum over k of the seminorm of the remainder differences.

    Each path's remainders are taken against its own reference path, so the
    two paths may be controlled by different drivers on the same grid.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if (
        y.base.grid != z.base.grid
        or y.dim != z.dim
        or y.level != z.level
    ):
        raise ValueError("controlled paths live on different grids or shapes")
    prefy, iprefy = _prefix_levels(y.base)
    prefz, iprefz = _prefix_levels(z.base)
    nodes = y.base.grid.nodes
    p = y.level
    sups = np.zeros(p)
    for i in range(y.base.grid.n_segments):
        ry = _row_remainders(y, i, _row_increments(prefy, iprefy, i, y.dim, p))
        rz = _row_remainders(z, i, _row_increments(prefz, iprefz, i, z.dim, p))
        dt = nodes[i + 1:] - nodes[i]
        for k in range(1, p + 1):
            mags = np.max(np.abs(ry[k - 1] - rz[k - 1]), axis=1)
            sups[k - 1] = max(sups[k - 1], np.max(mags / dt ** ((p + 1 - k) * gamma)))
    return float(sups.sum())
