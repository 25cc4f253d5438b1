"""Smooth test functions with closed-form derivative stacks.

A SmoothFunctionStack is a scalar function on R^d whose derivative tensors
D^k are available in closed form through a requested order.  The library
ships separable products of one-dimensional factors (polynomial-times-
Gaussian bumps and piecewise-polynomial plateaus), which covers the test
function families used by the flow and transport experiments.
"""

from __future__ import annotations

import math
from itertools import product

import numpy as np
from numpy.polynomial import Polynomial


class Stack1D:
    """One-dimensional factor with derivatives through ``max_order``."""

    max_order: int

    def eval(self, x: np.ndarray, order: int) -> np.ndarray:
        raise NotImplementedError


class PolyGauss1D(Stack1D):
    """u(x) = P(x - c) * exp(-a (x - c)^2), a >= 0.

    Derivatives stay in the same family: differentiation maps the polynomial
    part Q to Q' - 2 a y Q (y = x - c), so all orders are precomputed as
    polynomials once.
    """

    def __init__(self, poly, a: float = 0.0, c: float = 0.0, max_order: int = 8):
        if a < 0:
            raise ValueError("Gaussian sharpness a must be nonnegative")
        q = Polynomial(getattr(poly, "coef", poly))
        self.a = float(a)
        self.c = float(c)
        self.max_order = max_order
        self._polys = [q]
        y = Polynomial([0.0, 1.0])
        for _ in range(max_order):
            q = q.deriv() - 2.0 * self.a * y * q
            self._polys.append(q)

    def eval(self, x, order):
        if order > self.max_order:
            raise ValueError(f"derivative order {order} exceeds {self.max_order}")
        y = np.asarray(x, dtype=float) - self.c
        out = self._polys[order](y)
        if self.a:
            out = out * np.exp(-self.a * y * y)
        return out


class PiecewisePoly1D(Stack1D):
    """Piecewise polynomial on intervals split at ``breaks``.

    ``polys`` has one entry per interval (len(breaks) + 1 pieces, the first
    covering x < breaks[0]).  The function must be glued smoothly enough by
    the caller for the requested orders to make sense.
    """

    def __init__(self, breaks, polys, max_order: int = 8):
        self.breaks = np.asarray(breaks, dtype=float)
        if list(self.breaks) != sorted(self.breaks):
            raise ValueError("breaks must be sorted")
        if len(polys) != self.breaks.size + 1:
            raise ValueError("need len(breaks)+1 polynomial pieces")
        self.max_order = max_order
        # keep Polynomial instances as given: their domain/window mapping is
        # load-bearing for numerical stability of wide plateaus
        self._polys = [[p if isinstance(p, Polynomial) else Polynomial(p) for p in polys]]
        for _ in range(max_order):
            self._polys.append([p.deriv() for p in self._polys[-1]])

    def eval(self, x, order):
        if order > self.max_order:
            raise ValueError(f"derivative order {order} exceeds {self.max_order}")
        x = np.asarray(x, dtype=float)
        piece = np.searchsorted(self.breaks, x, side="right")
        out = np.empty_like(x)
        for q, poly in enumerate(self._polys[order]):
            mask = piece == q
            if np.any(mask):
                out[mask] = poly(x[mask])
        return out


class Product1D(Stack1D):
    """Pointwise product of two factors; derivatives by the Leibniz rule."""

    def __init__(self, left: Stack1D, right: Stack1D):
        self.left = left
        self.right = right
        self.max_order = min(left.max_order, right.max_order)

    def eval(self, x, order):
        acc = 0.0
        for k in range(order + 1):
            acc = acc + math.comb(order, k) * self.left.eval(x, k) * self.right.eval(
                x, order - k
            )
        return acc


def smoothstep_polynomial(smoothness: int) -> Polynomial:
    """Polynomial S on [0, 1] with S(0)=0, S(1)=1 and C^smoothness gluing flats."""
    n = smoothness
    coeffs = np.zeros(2 * n + 2)
    for k in range(n + 1):
        coeffs[n + 1 + k] = math.comb(n + k, k) * math.comb(2 * n + 1, n - k) * (-1) ** k
    return Polynomial(coeffs)


def plateau1d(inner: float, outer: float, smoothness: int = 7, max_order: int = 8) -> PiecewisePoly1D:
    """Even bump equal to 1 on [-inner, inner] and 0 outside [-outer, outer].

    The transition pieces keep the smoothstep coefficients and map x into
    the unit window through the polynomial's domain: expanding the
    composition in the global power basis would blow the coefficients up by
    outer^degree and lose most of the mantissa to cancellation.
    """
    if not 0 < inner < outer:
        raise ValueError("require 0 < inner < outer")
    s = smoothstep_polynomial(smoothness)
    rising = Polynomial(s.coef, domain=[-outer, -inner], window=[0.0, 1.0])
    falling = Polynomial(s.coef, domain=[inner, outer], window=[1.0, 0.0])
    return PiecewisePoly1D(
        [-outer, -inner, inner, outer],
        [Polynomial([0.0]), rising, Polynomial([1.0]), falling, Polynomial([0.0])],
        max_order=max_order,
    )


class SmoothFunctionStack:
    """Separable scalar function g(x) = prod_j u_j(x_j) with derivative tensors.

    ``derivative(x, k)`` returns D^k g as an array of shape x.shape[:-1] +
    (d,)*k; the entry at a multi-index differentiates each axis as many
    times as it appears.
    """

    def __init__(self, axes, name: str = ""):
        self.axes = list(axes)
        self.dim = len(self.axes)
        self.max_order = min(a.max_order for a in self.axes)
        self.name = name

    def _axis_values(self, x: np.ndarray, max_order: int):
        return [
            [axis.eval(x[..., j], m) for m in range(max_order + 1)]
            for j, axis in enumerate(self.axes)
        ]

    def value(self, x) -> np.ndarray:
        x = self._check(x)
        vals = self._axis_values(x, 0)
        out = vals[0][0]
        for j in range(1, self.dim):
            out = out * vals[j][0]
        return out

    def gradient(self, x) -> np.ndarray:
        return self.derivative(x, 1)

    def derivative(self, x, order: int) -> np.ndarray:
        x = self._check(x)
        if order > self.max_order:
            raise ValueError(f"derivative order {order} exceeds {self.max_order}")
        if order == 0:
            return self.value(x)
        vals = self._axis_values(x, order)
        batch = x.shape[:-1]
        out = np.empty(batch + (self.dim,) * order)
        for idx in product(range(self.dim), repeat=order):
            counts = [0] * self.dim
            for j in idx:
                counts[j] += 1
            term = vals[0][counts[0]]
            for j in range(1, self.dim):
                term = term * vals[j][counts[j]]
            out[(...,) + idx] = term
        return out

    def level_bound(self, order: int, radius: float, n_probe: int = 512) -> float:
        """Max-norm of D^order on the centered box of the given radius (probed)."""
        axes = [np.linspace(-radius, radius, n_probe) for _ in range(self.dim)]
        if self.dim == 1:
            pts = axes[0][:, None]
        else:
            grids = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([g.ravel() for g in grids], axis=-1)
        return float(np.max(np.abs(self.derivative(pts, order))))

    def check_gradient(self, points, h: float = 1e-5) -> float:
        """Worst central-difference defect of D^1; should be O(h^2)."""
        pts = self._check(np.asarray(points, dtype=float))
        grad = self.gradient(pts)
        worst = 0.0
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = h
            fd = (self.value(pts + e) - self.value(pts - e)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(fd - grad[..., j]))))
        return worst

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
                x = x[..., None]
            else:
                raise ValueError(
                    f"points must have trailing dimension {self.dim}, got {x.shape}"
                )
        return x


def gaussian_bump(dim: int, sharpness: float, center, max_order: int = 8,
                  name: str = "") -> SmoothFunctionStack:
    """Separable Gaussian bump exp(-a |x - c|^2)."""
    center = np.broadcast_to(np.asarray(center, dtype=float), (dim,))
    axes = [
        PolyGauss1D(Polynomial([1.0]), a=sharpness, c=center[j], max_order=max_order)
        for j in range(dim)
    ]
    return SmoothFunctionStack(axes, name=name)
