"""Named drift fields and test functions used by the CLI and experiments."""

from __future__ import annotations

import numpy as np

from .rough_flow import DriftField
from .stacks import (
    PolyGauss1D,
    Product1D,
    SmoothFunctionStack,
    gaussian_bump,
    plateau1d,
)

DRIFT_NAMES = ("zero", "linear", "sine", "sign-cutoff")
ETA_NAMES = ("gauss-bump-1", "gauss-bump-2", "gauss-bump-3", "plateau")


def drift_preset(name: str, dim: int = 1) -> DriftField:
    """Built-in drifts.  The smooth ones are cut off far out so the declared
    L1 and L-infinity bounds are finite; inside the quoted working box they
    agree with their namesake exactly."""
    if name == "zero":
        return DriftField(
            fn=lambda t, x: np.zeros_like(np.asarray(x, dtype=float)),
            sup_norm=0.0,
            l1_norm=0.0,
            dim=dim,
            name="zero",
            jacobian=lambda t, x: np.zeros(np.shape(x) + (dim,)),
            derivative_bound=0.0,
            support_radius=1.0,
        )
    if name == "linear":
        # b(x) = -x on |x| <= 3 per axis, smoothly cut off by |x| = 4.
        cut = plateau1d(3.0, 4.0)

        def fn(t, x):
            x = np.asarray(x, dtype=float)
            return -x * cut.eval(x, 0)

        def jac(t, x):
            x = np.asarray(x, dtype=float)
            diag = -(cut.eval(x, 0) + x * cut.eval(x, 1))
            out = np.zeros(x.shape + (dim,))
            for j in range(dim):
                out[..., j, j] = diag[..., j]
            return out

        return DriftField(
            fn=fn, sup_norm=3.2, l1_norm=9.5 * dim, dim=dim, name="linear",
            jacobian=jac, derivative_bound=2.5, support_radius=4.0,
        )
    if name == "sine":
        cut = plateau1d(6.0, 8.0)

        def fn(t, x):
            x = np.asarray(x, dtype=float)
            return np.sin(x) * cut.eval(x, 0)

        def jac(t, x):
            x = np.asarray(x, dtype=float)
            diag = np.cos(x) * cut.eval(x, 0) + np.sin(x) * cut.eval(x, 1)
            out = np.zeros(x.shape + (dim,))
            for j in range(dim):
                out[..., j, j] = diag[..., j]
            return out

        return DriftField(
            fn=fn, sup_norm=1.0, l1_norm=16.0 * dim, dim=dim, name="sine",
            jacobian=jac, derivative_bound=1.5, support_radius=8.0,
        )
    if name == "sign-cutoff":
        # b_j(x) = sign(x_j) on |x_j| <= 1, zero outside; discontinuous.
        def fn(t, x):
            x = np.asarray(x, dtype=float)
            return np.sign(x) * (np.abs(x) <= 1.0)

        pieces = [
            (
                np.array([-1.0, 0.0, 1.0]),
                [
                    lambda y: np.zeros_like(y),
                    lambda y: -np.ones_like(y),
                    lambda y: np.ones_like(y),
                    lambda y: np.zeros_like(y),
                ],
            )
            for _ in range(dim)
        ]
        return DriftField(
            fn=fn, sup_norm=1.0, l1_norm=2.0, dim=dim, name="sign-cutoff",
            support_radius=1.0, pieces=pieces,
        )
    raise ValueError(f"unknown drift preset {name!r}; choose from {DRIFT_NAMES}")


def eta_preset(name: str, dim: int = 1, max_order: int = 8) -> SmoothFunctionStack:
    """Built-in compactly-concentrated test functions with derivative stacks."""
    if name == "gauss-bump-1":
        stack = gaussian_bump(dim, sharpness=1.0, center=0.0, max_order=max_order)
    elif name == "gauss-bump-2":
        stack = gaussian_bump(dim, sharpness=2.0, center=0.5, max_order=max_order)
    elif name == "gauss-bump-3":
        # Polynomial-modulated bump, still smooth and integrable.
        axes = [
            Product1D(
                PolyGauss1D([1.0, 0.5, 0.25], a=1.5, c=-0.3, max_order=max_order),
                plateau1d(4.0, 6.0, max_order=max_order),
            )
            for _ in range(dim)
        ]
        stack = SmoothFunctionStack(axes, name=name)
    elif name == "plateau":
        stack = SmoothFunctionStack(
            [plateau1d(4.0, 6.0, max_order=max_order) for _ in range(dim)],
            name=name,
        )
    else:
        raise ValueError(f"unknown test function {name!r}; choose from {ETA_NAMES}")
    stack.name = name
    return stack


def plateau_covering(points, margin: float = 0.5, max_order: int = 8) -> SmoothFunctionStack:
    """A cutoff identically 1 on the bounding box of ``points`` plus margin."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    radius = float(np.max(np.abs(pts))) + margin
    return SmoothFunctionStack(
        [plateau1d(radius, radius + 1.0, max_order=max_order) for _ in range(pts.shape[1])],
        name="plateau-cover",
    )
