import numpy as np
import pytest

from roughflow.stacks import (
    PolyGauss1D,
    Product1D,
    gaussian_bump,
    plateau1d,
    smoothstep_polynomial,
)


def fd_derivative(fn, x, order, h=1e-3):
    """Central finite differences, good enough to pin the first few orders."""
    if order == 0:
        return fn(x)
    prev = lambda y: fd_derivative(fn, y, order - 1, h)
    return (prev(x + h) - prev(x - h)) / (2 * h)


def test_polygauss_derivatives_match_fd():
    stack = PolyGauss1D([1.0, -0.5, 2.0], a=0.8, c=0.3, max_order=6)
    xs = np.linspace(-1.5, 1.5, 11)
    fn = lambda y: stack.eval(y, 0)
    for order in (1, 2, 3):
        fd = fd_derivative(fn, xs, order)
        np.testing.assert_allclose(stack.eval(xs, order), fd, rtol=1e-4, atol=1e-4)


def test_pure_gaussian_second_derivative_closed_form():
    stack = PolyGauss1D([1.0], a=1.0, max_order=4)
    xs = np.linspace(-2, 2, 9)
    # (exp(-x^2))'' = (4x^2 - 2) exp(-x^2)
    np.testing.assert_allclose(
        stack.eval(xs, 2), (4 * xs ** 2 - 2) * np.exp(-xs ** 2), atol=1e-12
    )


def test_smoothstep_endpoint_flatness():
    s = smoothstep_polynomial(7)
    assert s(0.0) == pytest.approx(0.0, abs=1e-12)
    assert s(1.0) == pytest.approx(1.0, abs=1e-12)
    for order in range(1, 8):
        d = s.deriv(order)
        assert d(0.0) == pytest.approx(0.0, abs=1e-9)
        assert d(1.0) == pytest.approx(0.0, abs=1e-8)


def test_plateau_values_and_smooth_gluing():
    cut = plateau1d(1.0, 2.0, smoothness=7)
    xs = np.array([-3.0, -2.0, -1.5, -1.0, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
    vals = cut.eval(xs, 0)
    assert vals[4] == 1.0 and vals[0] == 0.0 and vals[-1] == 0.0
    assert 0.0 < vals[2] < 1.0
    # derivative continuity across the break at x = 1
    for order in range(0, 6):
        left = cut.eval(np.array([1.0 - 1e-9]), order)
        right = cut.eval(np.array([1.0 + 1e-9]), order)
        np.testing.assert_allclose(left, right, atol=1e-5)


def test_product_leibniz():
    a = PolyGauss1D([1.0, 1.0], a=0.5, max_order=5)
    b = plateau1d(2.0, 3.0, max_order=5)
    prod = Product1D(a, b)
    xs = np.linspace(-2.5, 2.5, 13)
    np.testing.assert_allclose(
        prod.eval(xs, 0), a.eval(xs, 0) * b.eval(xs, 0), atol=1e-14
    )
    fd = fd_derivative(lambda y: prod.eval(y, 0), xs, 2, h=1e-3)
    np.testing.assert_allclose(prod.eval(xs, 2), fd, rtol=1e-3, atol=2e-2)


def test_separable_stack_derivative_tensors():
    stack = gaussian_bump(2, sharpness=0.7, center=[0.1, -0.2], max_order=4)
    pts = np.array([[0.4, 0.3], [-0.5, 0.2]])
    val = stack.value(pts)
    grad = stack.gradient(pts)
    hess = stack.derivative(pts, 2)
    assert grad.shape == (2, 2) and hess.shape == (2, 2, 2)
    # separable: d^2/dx dy of u(x)v(y) = u'(x) v'(y)
    u = stack.axes[0]
    v = stack.axes[1]
    np.testing.assert_allclose(
        hess[:, 0, 1], u.eval(pts[:, 0], 1) * v.eval(pts[:, 1], 1), atol=1e-13
    )
    np.testing.assert_allclose(hess[:, 0, 1], hess[:, 1, 0], atol=1e-13)
    np.testing.assert_allclose(val, u.eval(pts[:, 0], 0) * v.eval(pts[:, 1], 0))


def test_gradient_fd_invariant():
    stack = gaussian_bump(2, sharpness=1.2, center=0.0, max_order=3)
    rng = np.random.default_rng(6)
    pts = rng.uniform(-1.5, 1.5, size=(50, 2))
    assert stack.check_gradient(pts) < 1e-8


def test_stack_errors():
    stack = gaussian_bump(1, sharpness=1.0, center=0.0, max_order=3)
    with pytest.raises(ValueError):
        stack.derivative(np.zeros((4, 1)), 4)
    with pytest.raises(ValueError):
        gaussian_bump(2, 1.0, 0.0).derivative(np.zeros((4, 3)), 1)


def test_level_bound_probe():
    stack = gaussian_bump(1, sharpness=1.0, center=0.0, max_order=3)
    assert stack.level_bound(0, 2.0, n_probe=513) == pytest.approx(1.0, abs=1e-12)
    # |d/dx exp(-x^2)| peaks at x = 1/sqrt(2) with value sqrt(2/e)
    assert stack.level_bound(1, 2.0) == pytest.approx(np.sqrt(2 / np.e), abs=1e-3)
