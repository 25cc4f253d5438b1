import numpy as np
import pytest
from scipy.stats import linregress

from roughflow.controlled_path import ControlledPathGrid
from roughflow.rough_path import RoughPathGrid, TimeGrid
from roughflow.sewing import (
    GermFunction,
    delta,
    germ_distance,
    germ_from_controlled,
    rough_integral,
    rough_integral_result,
    sew,
)


def taylor_germ(f_derivs, g, order):
    """Closed-form controlled germ sum_n f^(n)(g(s)) (g(t)-g(s))^n / n!.

    A germ of this shape sews to f(g(t)) - f(g(s)); its delta-exponent is
    order + 1 because the components carry exact derivative data.
    """
    import math

    def fn(s, t):
        gs, gt = g(s), g(t)
        inc = gt - gs
        acc = 0.0
        for n in range(1, order + 1):
            acc = acc + f_derivs[n](gs) * inc ** n / math.factorial(n)
        return acc

    return GermFunction(fn=fn, alpha=1.0, beta=float(order + 1), label="taylor")


def poly_derivs(coeffs, max_order):
    from numpy.polynomial import Polynomial

    polys = [Polynomial(coeffs)]
    for _ in range(max_order):
        polys.append(polys[-1].deriv())
    return polys


# -- delta -------------------------------------------------------------------


def test_delta_additive_germ_vanishes():
    germ = GermFunction(fn=lambda s, t: np.sin(t) - np.sin(s), alpha=1.0, beta=2.0)
    assert delta(germ, 0.1, 0.4, 0.9) == pytest.approx(0.0, abs=1e-15)


def test_delta_square_germ_closed_form():
    germ = GermFunction(fn=lambda s, t: (t - s) ** 2, alpha=2.0, beta=2.0)
    s, u, t = 0.1, 0.5, 0.8
    assert delta(germ, s, u, t) == pytest.approx(2 * (u - s) * (t - u), abs=1e-14)
    with pytest.raises(ValueError):
        delta(germ, 0.5, 0.1, 0.8)


def test_delta_of_controlled_germ_matches_remainders():
    rng = np.random.default_rng(20)
    grid = TimeGrid.uniform(1.0, 8)
    base = RoughPathGrid.lift_piecewise_linear(grid, rng.standard_normal((9, 2)), 2)
    comps = [rng.standard_normal((9, 2)), rng.standard_normal((9, 2, 2))]
    path = ControlledPathGrid(base, comps)
    germ = germ_from_controlled(path, 0.4)
    s, u, t = grid.nodes[1], grid.nodes[4], grid.nodes[7]
    inc_ut = base.increment(u, t)
    expected = -sum(
        float(np.tensordot(path.remainder(k, s, u), inc_ut.data[k], axes=k))
        for k in (1, 2)
    )
    assert delta(germ, s, u, t) == pytest.approx(expected, abs=1e-12)


# -- sew ----------------------------------------------------------------------


def test_sew_additive_germ_exact_every_level():
    germ = GermFunction(fn=lambda s, t: np.cos(t) - np.cos(s), alpha=1.0, beta=2.0)
    res = sew(germ, 0.0, 1.0, max_levels=6)
    np.testing.assert_allclose(res.sums, np.cos(1.0) - 1.0, atol=1e-14)
    assert res.converged


def test_sew_first_order_controlled_data_telescopes():
    # Xi_{st} = s (t-s) + (t-s)^2 / 2 = (t^2 - s^2)/2: every partition sum
    # is exactly 0.5 over [0, 1]
    germ = GermFunction(
        fn=lambda s, t: s * (t - s) + 0.5 * (t - s) ** 2, alpha=1.0, beta=3.0
    )
    res = sew(germ, 0.0, 1.0)
    np.testing.assert_allclose(res.sums, 0.5, atol=1e-15)
    assert res.value == pytest.approx(0.5, abs=1e-14)


def test_sew_high_order_germs_are_in_the_kernel():
    rng = np.random.default_rng(21)
    for _ in range(5):
        theta = rng.uniform(3.0, 3.5)
        amp = rng.uniform(0.5, 2.0)
        germ = GermFunction(
            fn=lambda s, t, a=amp, th=theta: a * (t - s) ** th,
            alpha=theta,
            beta=theta,
        )
        res = sew(germ, 0.0, 1.0)
        assert abs(res.value) <= 1e-10


def test_sew_additivity():
    derivs = poly_derivs([0.3, -1.0, 0.5, 0.2], 4)
    germ = taylor_germ(derivs, lambda r: np.sin(2 * r), 2)
    whole = sew(germ, 0.0, 1.0).value
    parts = sew(germ, 0.0, 0.5).value + sew(germ, 0.5, 1.0).value
    assert whole == pytest.approx(parts, abs=1e-9)


def test_sew_rejects_beta_at_most_one():
    germ = GermFunction(fn=lambda s, t: t - s, alpha=1.0, beta=1.0)
    with pytest.raises(ValueError):
        sew(germ, 0.0, 1.0)


def test_sew_flags_non_decreasing_deltas():
    # a germ scaling like (t-s)^0.5 but declared beta > 1: partition sums
    # blow up and the deltas grow, which must be flagged
    germ = GermFunction(fn=lambda s, t: np.sqrt(t - s), alpha=0.5, beta=1.5)
    res = sew(germ, 0.0, 1.0, max_levels=10)
    assert not res.converged
    assert res.reason == "diverging"


def test_sew_partition_independence_dyadic_vs_triadic():
    rng = np.random.default_rng(22)
    for trial in range(20):
        f_coeffs = rng.uniform(-1, 1, size=4)
        a, b = rng.uniform(0.5, 2.0), rng.uniform(-1, 1)
        derivs = poly_derivs(f_coeffs, 4)
        germ = taylor_germ(derivs, lambda r: np.sin(a * r + b), 2)
        dyadic = sew(germ, 0.0, 1.0, factor=2, max_levels=16)
        triadic = sew(germ, 0.0, 1.0, factor=3, max_levels=10)
        assert dyadic.value == pytest.approx(triadic.value, abs=1e-8), f"trial {trial}"
        # both agree with the closed-form limit f(g(1)) - f(g(0))
        poly = np.polynomial.Polynomial(f_coeffs)
        exact = poly(np.sin(a + b)) - poly(np.sin(b))
        assert dyadic.value == pytest.approx(exact, abs=1e-8)


def test_sewing_bound_exponent_fit():
    # |sew(s,t) - Xi_{st}| <~ (t-s)^beta for the first-order germ
    # Xi = Y(s) (g(t) - g(s)) with beta = 2; fit the exponent by regression
    def y_fn(r):
        return np.cos(3 * r)

    def g_fn(r):
        return r + 0.3 * np.sin(r)

    germ = GermFunction(
        fn=lambda s, t: y_fn(s) * (g_fn(t) - g_fn(s)), alpha=1.0, beta=2.0
    )
    spans = 2.0 ** -np.arange(1, 7)
    gaps = []
    for h in spans:
        res = sew(germ, 0.25, 0.25 + h, max_levels=14)
        gaps.append(abs(res.value - germ(0.25, 0.25 + h)))
    fit = linregress(np.log(spans), np.log(gaps))
    assert abs(fit.slope - 2.0) < 0.15


# -- rough integral -----------------------------------------------------------


def test_rough_integral_t_dt_exact():
    grid = TimeGrid.uniform(1.0, 16)
    base = RoughPathGrid.lift_piecewise_linear(grid, grid.nodes, 2)
    t = grid.nodes
    path = ControlledPathGrid(
        base, [t.reshape(-1, 1), np.ones((t.size, 1, 1))]
    )
    val = rough_integral(path, 0.0, 1.0, gamma=0.45)
    assert val == pytest.approx(0.5, abs=1e-13)


def test_rough_integral_zero_integrand():
    grid = TimeGrid.uniform(1.0, 8)
    base = RoughPathGrid.lift_piecewise_linear(grid, np.sin(grid.nodes), 2)
    n = grid.nodes.size
    path = ControlledPathGrid(base, [np.zeros((n, 1)), np.zeros((n, 1, 1))])
    assert rough_integral(path, 0.0, 1.0, gamma=0.45) == 0.0


def test_rough_integral_against_classical_calculus():
    # int_0^1 X dX for X_t = t^2 equals [X^2/2] = 0.5
    grid = TimeGrid.uniform(1.0, 1024)
    x = grid.nodes ** 2
    base = RoughPathGrid.lift_piecewise_linear(grid, x, 2)
    path = ControlledPathGrid(
        base, [x.reshape(-1, 1), np.ones((x.size, 1, 1))]
    )
    val = rough_integral(path, 0.0, 1.0, gamma=0.45)
    assert val == pytest.approx(0.5, abs=1e-6)


def test_rough_integral_validates_exponent():
    grid = TimeGrid.uniform(1.0, 8)
    base = RoughPathGrid.lift_piecewise_linear(grid, grid.nodes, 2)
    n = grid.nodes.size
    path = ControlledPathGrid(base, [np.zeros((n, 1)), np.zeros((n, 1, 1))])
    with pytest.raises(ValueError):
        rough_integral(path, 0.0, 1.0, gamma=0.3)  # (p+1) gamma = 0.9 <= 1


def test_rough_integral_result_reports_partition_sums():
    grid = TimeGrid.uniform(1.0, 64)
    base = RoughPathGrid.lift_piecewise_linear(grid, grid.nodes, 2)
    t = grid.nodes
    path = ControlledPathGrid(base, [t.reshape(-1, 1), np.ones((t.size, 1, 1))])
    res = rough_integral_result(path, 0.0, 1.0, gamma=0.45)
    assert res.sums.size >= 2
    assert res.converged


def test_grid_germ_stops_at_grid_resolution():
    grid = TimeGrid.uniform(1.0, 8)
    x = np.sin(grid.nodes)
    base = RoughPathGrid.lift_piecewise_linear(grid, x, 2)
    # genuine composition data: (sin(X), cos(X)) is controlled by the lift
    path = ControlledPathGrid(
        base, [np.sin(x).reshape(-1, 1), np.cos(x).reshape(-1, 1, 1)]
    )
    res = rough_integral_result(path, 0.0, 1.0, gamma=0.45)
    assert res.reason in ("grid", "tol")
    assert res.sums.size <= 4  # levels 1, 2, 4, 8 cells
    # value is the grid-resolution partition sum
    direct = sum(
        float(germ_from_controlled(path, 0.45).fn(grid.nodes[i], grid.nodes[i + 1]))
        for i in range(8)
    )
    assert res.value == pytest.approx(direct, abs=1e-12)


# -- germ distance ------------------------------------------------------------


def test_germ_distance_identical_and_scaling():
    grid = TimeGrid.uniform(1.0, 16)
    germ = GermFunction(
        fn=lambda s, t: np.vectorize(float)(np.sin(s)) * (t - s), alpha=1.0, beta=2.0
    )
    assert germ_distance(germ, germ, 1.0, 2.0, grid) == 0.0
    scaled = GermFunction(fn=lambda s, t: 3.0 * np.sin(s) * (t - s), alpha=1.0, beta=2.0)
    base = GermFunction(fn=lambda s, t: np.sin(s) * (t - s), alpha=1.0, beta=2.0)
    zero = GermFunction(fn=lambda s, t: 0.0 * (t - s), alpha=1.0, beta=2.0)
    assert germ_distance(scaled, zero, 1.0, 2.0, grid) == pytest.approx(
        3.0 * germ_distance(base, zero, 1.0, 2.0, grid), rel=1e-12
    )


def test_germ_distance_lipschitz_ratio_bounded():
    # the germ distance of two controlled Riemann-sum germs is controlled by
    # initial gap + remainder distance + driver distance; the ratio stays
    # bounded over a randomized perturbation sweep
    from roughflow.controlled_path import ControlledPathGrid, controlled_distance
    from roughflow.rough_path import RoughPathGrid, rho_gamma

    rng = np.random.default_rng(77)
    grid = TimeGrid.uniform(1.0, 16)
    base_vals = np.sin(2 * np.pi * grid.nodes) * 0.5
    gamma = 0.45
    x = RoughPathGrid.lift_piecewise_linear(grid, base_vals, 2)
    y = ControlledPathGrid(
        x, [np.cos(base_vals).reshape(-1, 1), -np.sin(base_vals).reshape(-1, 1, 1)]
    )
    germ_y = germ_from_controlled(y, gamma)
    ratios = []
    for eps in (1e-1, 1e-2, 1e-3):
        pert = base_vals + eps * rng.standard_normal(17) * 0.3
        x_t = RoughPathGrid.lift_piecewise_linear(grid, pert, 2)
        y_t = ControlledPathGrid(
            x_t, [np.cos(pert).reshape(-1, 1), -np.sin(pert).reshape(-1, 1, 1)]
        )
        germ_t = germ_from_controlled(y_t, gamma)
        dist = germ_distance(germ_y, germ_t, gamma, 3 * gamma, grid)
        initial_gap = max(
            float(np.max(np.abs(a[0] - b[0])))
            for a, b in zip(y.components, y_t.components)
        )
        budget = (
            initial_gap
            + controlled_distance(y, y_t, gamma)
            + rho_gamma(x, x_t, gamma)
        )
        ratios.append(dist / budget)
    assert max(ratios) < 10.0
    assert max(ratios) / min(ratios) < 3.0


def test_germ_distance_linear_in_perturbation():
    grid = TimeGrid.uniform(1.0, 16)

    def make(eps):
        return GermFunction(
            fn=lambda s, t: (1.0 + eps) * s * ((1.0 + eps) * t - (1.0 + eps) * s),
            alpha=1.0,
            beta=2.0,
        )

    base = make(0.0)
    ratios = []
    for eps in (1e-1, 1e-2, 1e-3):
        d = germ_distance(make(eps), base, 1.0, 2.0, grid)
        ratios.append(d / eps)
    assert max(ratios) / min(ratios) < 1.5
