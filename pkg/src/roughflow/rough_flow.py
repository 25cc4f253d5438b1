"""Flows of the additively perturbed ODE and their controlled lifts.

The flow phi_t(x) = x + int_0^t b(r, phi_r(x)) dr + X_t is solved by writing
y = phi - X and integrating y' = b(t, y + X(t)) with an explicit midpoint
rule, sub-stepped inside every grid cell; the driver enters exactly, so no
smoothness of X is used and b = 0 reproduces x + X_t bit for bit.  The
driver is the piecewise-linear interpolation of its grid samples, matching
the canonical lift used downstream.

Compositions g(phi) lift to controlled paths with components D^k g(phi),
k = 1..p; the germ sum_n D^n g(phi_s) X^(n)_{st} then sews to the rough
integral of the gradient field Dg along the flow, which is the integral the
change-of-variable identity needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .controlled_path import ControlledPathGrid, controlled_distance
from .rough_path import RoughPathGrid, TimeGrid, holder_seminorm_path, rho_gamma
from .sewing import rough_integral
from .stacks import SmoothFunctionStack


@dataclass
class DriftField:
    """Time-dependent vector field with declared norm bounds.

    ``fn(t, x)`` maps a scalar time and an (M, d) array of positions to an
    (M, d) array.  ``sup_norm`` and ``l1_norm`` are the declared (finite)
    L-infinity and L1-in-space bounds; they are contracts checked by probe
    in the tests, not enforced per call.  ``pieces`` optionally describes a
    separable piecewise-smooth structure per axis (used by the mollifier):
    a list of (breaks, piece_fns) with one entry per axis.
    """

    fn: Callable
    sup_norm: float
    l1_norm: float
    dim: int = 1
    name: str = ""
    jacobian: Optional[Callable] = None
    derivative_bound: Optional[float] = None
    support_radius: Optional[float] = None
    pieces: Optional[list] = None

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.fn(t, x)

    def probe_sup(self, times, points) -> float:
        """Largest |b| seen on a probe set; must not exceed sup_norm."""
        worst = 0.0
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        for t in np.atleast_1d(times):
            worst = max(worst, float(np.max(np.abs(self.fn(float(t), pts)))))
        return worst


@dataclass
class FlowEnsemble:
    """Trajectories of a particle set under one drift and one additive driver."""

    grid: TimeGrid
    driver_values: np.ndarray     # (N+1, d)
    initial: np.ndarray           # (M, d)
    trajectories: np.ndarray      # (N+1, M, d)
    substeps: int
    drift: DriftField

    @property
    def n_particles(self) -> int:
        return self.initial.shape[0]

    @property
    def dim(self) -> int:
        return self.initial.shape[1]

    def positions(self, t: float) -> np.ndarray:
        return self.trajectories[self.grid.index_of(t)]

    def particle(self, i: int) -> np.ndarray:
        return self.trajectories[:, i, :]

    def drift_residual(self, s: float, t: float) -> np.ndarray:
        """R^phi_{st} = phi_{st} - X_{st}, one row per particle."""
        i, j = self.grid.index_of(s), self.grid.index_of(t)
        dphi = self.trajectories[j] - self.trajectories[i]
        return dphi - (self.driver_values[j] - self.driver_values[i])

    def interp_positions(self, t: float) -> np.ndarray:
        """Positions at an off-grid time by linear interpolation."""
        nodes = self.grid.nodes
        i = int(np.clip(np.searchsorted(nodes, t) - 1, 0, nodes.size - 2))
        w = (t - nodes[i]) / (nodes[i + 1] - nodes[i])
        return (1 - w) * self.trajectories[i] + w * self.trajectories[i + 1]


def solve_flow(
    drift: DriftField,
    grid: TimeGrid,
    driver_values,
    initial_points,
    substeps: int = 1,
) -> FlowEnsemble:
    """Explicit-midpoint flow of the perturbed ODE; the driver enters exactly.

    The drift is only evaluated pointwise, so merely bounded measurable
    fields are admissible; non-finite drift values abort with the location.
    """
    x_drv = np.asarray(driver_values, dtype=float)
    if x_drv.ndim == 1:
        x_drv = x_drv[:, None]
    if x_drv.shape[0] != grid.nodes.size:
        raise ValueError("driver needs one sample per grid node")
    if np.any(x_drv[0] != 0.0):
        raise ValueError("driver must start at 0 so that phi_0(x) = x")
    x0 = np.asarray(initial_points, dtype=float)
    if x0.ndim == 1:
        x0 = x0[:, None]
    if x0.shape[1] != x_drv.shape[1]:
        raise ValueError("initial points and driver disagree on dimension")
    if substeps < 1:
        raise ValueError("substeps must be at least 1")

    nodes = grid.nodes
    n_seg = grid.n_segments
    traj = np.empty((n_seg + 1,) + x0.shape)
    y = x0.copy()
    traj[0] = y + x_drv[0]
    for i in range(n_seg):
        t0, t1 = nodes[i], nodes[i + 1]
        h = (t1 - t0) / substeps
        for q in range(substeps):
            ta = t0 + q * h
            tm = ta + 0.5 * h
            k1 = drift.fn(ta, y + _interp(x_drv, nodes, i, ta))
            ym = y + 0.5 * h * k1
            k2 = drift.fn(tm, ym + _interp(x_drv, nodes, i, tm))
            if not np.all(np.isfinite(k2)):
                bad = np.argwhere(~np.isfinite(k2))[0]
                raise RuntimeError(
                    f"non-finite drift at t={tm:g}, particle {bad[0]}"
                )
            y = y + h * k2
        traj[i + 1] = y + x_drv[i + 1]
    return FlowEnsemble(grid, x_drv, x0, traj, substeps, drift)


def _interp(x_drv, nodes, i, t):
    """Driver value at time t inside cell i (piecewise-linear)."""
    w = (t - nodes[i]) / (nodes[i + 1] - nodes[i])
    return (1 - w) * x_drv[i] + w * x_drv[i + 1]


def time_integral(flow: FlowEnsemble, integrand, t: float, substeps: int = None) -> float:
    """Midpoint quadrature of int_0^t integrand(r, positions_r) dr.

    Uses the same sub-stepping as the flow solver; positions at substep
    midpoints come from linear interpolation of the stored trajectories.
    """
    j = flow.grid.index_of(t)
    substeps = flow.substeps if substeps is None else substeps
    nodes = flow.grid.nodes
    total = 0.0
    for i in range(j):
        h = (nodes[i + 1] - nodes[i]) / substeps
        for q in range(substeps):
            tm = nodes[i] + (q + 0.5) * h
            w = (tm - nodes[i]) / (nodes[i + 1] - nodes[i])
            pos = (1 - w) * flow.trajectories[i] + w * flow.trajectories[i + 1]
            total += h * float(integrand(tm, pos))
    return total


def compose_lift(
    stack: SmoothFunctionStack,
    flow: FlowEnsemble,
    path: RoughPathGrid,
    particle: int = 0,
) -> ControlledPathGrid:
    """Controlled lift of the gradient field of ``stack`` along one trajectory.

    Component k holds D^k g(phi_t), i.e. the (k-1)-th derivative tensor of
    the vector field Dg evaluated along the flow.  Requires derivative data
    through the truncation level of the reference path.
    """
    if flow.grid != path.grid:
        raise ValueError("flow and rough path live on different grids")
    if stack.max_order < path.level:
        raise ValueError(
            f"stack provides derivatives through {stack.max_order}, need {path.level}"
        )
    values = flow.trajectories[:, particle, :]
    return lift_along_path(stack, values, path)


def lift_along_path(
    stack: SmoothFunctionStack, values, path: RoughPathGrid
) -> ControlledPathGrid:
    """Controlled lift of Dg along explicit position samples."""
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    comps = [stack.derivative(vals, k) for k in range(1, path.level + 1)]
    return ControlledPathGrid(path, comps)


def ito_residual(
    stack: SmoothFunctionStack,
    flow: FlowEnsemble,
    path: RoughPathGrid,
    particle: int,
    t: float,
    gamma: float,
    **sew_options,
) -> float:
    """Defect of the change-of-variable identity along one trajectory.

    g(phi_t) - g(phi_0) - int_0^t <Dg(phi), b(r, phi)> dr minus the rough
    integral of Dg(phi); decays to zero under grid refinement.
    """
    phi_t = flow.trajectories[flow.grid.index_of(t), particle]
    phi_0 = flow.trajectories[0, particle]
    lhs = float(stack.value(phi_t[None, :])[0] - stack.value(phi_0[None, :])[0])

    def drift_pairing(r, positions):
        pos = positions[particle:particle + 1]
        return float(
            np.sum(stack.gradient(pos) * flow.drift.fn(r, pos))
        )

    time_term = time_integral(flow, drift_pairing, t)
    controlled = compose_lift(stack, flow, path, particle)
    rough_term = rough_integral(controlled, 0.0, t, gamma, **sew_options)
    return lhs - time_term - rough_term


# -- stability sweeps ---------------------------------------------------------


def driver_stability(
    drift: DriftField,
    path: RoughPathGrid,
    path_tilde: RoughPathGrid,
    stack: SmoothFunctionStack,
    gamma: float,
    initial_points,
    substeps: int = 1,
) -> dict:
    """Lipschitz ratios of the flow and of the controlled lift in the driver.

    Solves the flow under both drivers and reports
    ||phi - phi~||_gamma / ||X - X~||_gamma and the controlled-lift distance
    over rho_gamma.  Exact-zero numerators are reported verbatim when the
    drivers coincide (ratios are then None).
    """
    x = path.level1_values()
    x_t = path_tilde.level1_values()
    flow = solve_flow(drift, path.grid, x, initial_points, substeps)
    flow_t = solve_flow(drift, path_tilde.grid, x_t, initial_points, substeps)

    num_flow = holder_seminorm_path(
        path.grid, flow.trajectories[:, 0, :] - flow_t.trajectories[:, 0, :], gamma
    )
    den_flow = holder_seminorm_path(path.grid, x - x_t, gamma)
    lift = compose_lift(stack, flow, path, 0)
    lift_t = compose_lift(stack, flow_t, path_tilde, 0)
    num_lift = controlled_distance(lift, lift_t, gamma)
    den_lift = rho_gamma(path, path_tilde, gamma)

    return {
        "flow_numerator": num_flow,
        "flow_denominator": den_flow,
        "flow_ratio": num_flow / den_flow if den_flow > 0 else None,
        "lift_numerator": num_lift,
        "lift_denominator": den_lift,
        "lift_ratio": num_lift / den_lift if den_lift > 0 else None,
    }


def drift_stability(
    drift_sequence,
    drift_limit: DriftField,
    path: RoughPathGrid,
    stack: SmoothFunctionStack,
    initial_point,
    gamma: float,
    substeps: int = 1,
    **sew_options,
) -> list:
    """Convergence diagnostics for flows under a drift sequence.

    For each drift b_n reports the discrete Holder distance of the flow to
    the limit flow, the controlled-lift distance, and the rough-integral
    difference.  Non-convergence is an outcome to read off, not an error.
    """
    x = path.level1_values()
    x0 = np.atleast_2d(np.asarray(initial_point, dtype=float))
    flow_lim = solve_flow(drift_limit, path.grid, x, x0, substeps)
    lift_lim = compose_lift(stack, flow_lim, path, 0)
    integral_lim = rough_integral(
        lift_lim, 0.0, path.grid.horizon, gamma, **sew_options
    )
    report = []
    for bn in drift_sequence:
        flow_n = solve_flow(bn, path.grid, x, x0, substeps)
        lift_n = compose_lift(stack, flow_n, path, 0)
        integral_n = rough_integral(
            lift_n, 0.0, path.grid.horizon, gamma, **sew_options
        )
        report.append(
            {
                "drift": bn.name,
                "flow_holder_distance": holder_seminorm_path(
                    path.grid,
                    flow_n.trajectories[:, 0, :] - flow_lim.trajectories[:, 0, :],
                    gamma,
                ),
                "flow_sup_distance": float(
                    np.max(np.abs(flow_n.trajectories - flow_lim.trajectories))
                ),
                "controlled_distance": controlled_distance(lift_n, lift_lim, gamma),
                "integral_difference": abs(integral_n - integral_lim),
            }
        )
    return report


# -- mollification ------------------------------------------------------------


def mollify_drift(
    drift: DriftField,
    eps: float,
    table_step: Optional[float] = None,
) -> DriftField:
    """Gaussian mollification b_eps = b * rho_eps of a separable drift.

    Each axis factor is convolved exactly (piecewise Gauss-Legendre split at
    the declared discontinuities) against the Gaussian of width eps on a
    fine spatial table; evaluation interpolates the table cubically and the
    spatial derivative comes from a second table convolved with rho_eps'.
    Requires the drift to declare ``pieces`` and a support radius.
    """
    if eps <= 0:
        raise ValueError("mollification width must be positive")
    if drift.pieces is None or drift.support_radius is None:
        raise ValueError(
            "mollification needs a piecewise description and support radius"
        )
    if len(drift.pieces) != drift.dim:
        raise ValueError("need one piecewise description per axis")
    step = eps / 8.0 if table_step is None else table_step
    reach = drift.support_radius + 8.0 * eps
    xs = np.arange(-reach, reach + step, step)
    gx, gw = np.polynomial.legendre.leggauss(8)

    splines, dsplines, sups = [], [], []
    for breaks, piece_fns in drift.pieces:
        table = np.zeros_like(xs)
        dtable = np.zeros_like(xs)
        cuts = np.concatenate(
            [[-reach - 6 * eps], np.asarray(breaks, float), [reach + 6 * eps]]
        )
        for lo, hi, fn in zip(cuts[:-1], cuts[1:], piece_fns):
            # Panels no wider than the Gaussian so the kernel is resolved.
            n_panels = max(1, int(np.ceil((hi - lo) / eps)))
            edges = np.linspace(lo, hi, n_panels + 1)
            mid = 0.5 * (edges[:-1] + edges[1:])
            rad = 0.5 * (edges[1:] - edges[:-1])
            y = (mid[:, None] + rad[:, None] * gx[None, :]).ravel()
            w = (rad[:, None] * gw[None, :]).ravel()
            fy = np.asarray(fn(y), dtype=float)
            z = xs[:, None] - y[None, :]
            rho = np.exp(-0.5 * (z / eps) ** 2) / (eps * np.sqrt(2 * np.pi))
            table += (rho * (w * fy)[None, :]).sum(axis=1)
            dtable += ((-z / eps ** 2) * rho * (w * fy)[None, :]).sum(axis=1)
        splines.append(CubicSpline(xs, table, extrapolate=False))
        dsplines.append(CubicSpline(xs, dtable, extrapolate=False))
        sups.append(float(np.max(np.abs(table))))

    dim = drift.dim

    def fn(t, x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for j in range(dim):
            v = splines[j](x[..., j])
            out[..., j] = np.nan_to_num(v, nan=0.0)
        return out

    def jac(t, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (dim,))
        for j in range(dim):
            v = dsplines[j](x[..., j])
            out[..., j, j] = np.nan_to_num(v, nan=0.0)
        return out

    dbound = max(float(np.max(np.abs(ds(xs)))) for ds in dsplines)
    return DriftField(
        fn=fn,
        sup_norm=min(drift.sup_norm, max(sups)),
        l1_norm=drift.l1_norm,
        dim=dim,
        name=f"{drift.name}*rho_{eps:g}",
        jacobian=jac,
        derivative_bound=dbound,
        support_radius=reach,
    )
