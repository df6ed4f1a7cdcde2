import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chdbc.potential import DOUBLE_WELL, cn_slope, cn_slope_partials, double_well

W = DOUBLE_WELL
reals = st.floats(-2, 2, allow_nan=False)


def test_values():
    assert W.value(np.array(1.0)) == 0 and W.value(np.array(-1.0)) == 0
    assert W.value(np.array(0.0)) == 0.25
    assert W.derivative(np.array(2.0)) == 6.0


def test_split_reproduces_w():
    u = np.arange(-2.0, 2.01, 0.5)
    np.testing.assert_allclose(W.convex_value(u) - W.concave_value(u), W.value(u), atol=1e-15)
    g = np.linspace(-3, 3, 601)
    np.testing.assert_allclose(W.convex_derivative(g) - W.concave_derivative(g), W.derivative(g),
                               atol=1e-12)
    assert (np.diff(W.convex_derivative(g)) >= 0).all()
    assert (np.diff(W.concave_derivative(g)) >= 0).all()


def test_curvatures_match_fd():
    g = np.linspace(-2, 2, 41)
    h = 1e-6
    for d, c in ((W.convex_derivative, W.convex_curvature),
                 (W.concave_derivative, W.concave_curvature)):
        np.testing.assert_allclose((d(g + h) - d(g - h)) / (2 * h), c(g), atol=1e-7)


@given(reals)
def test_slope_diagonal_is_derivative(u):
    assert cn_slope(u, u) == pytest.approx(float(W.derivative(np.array(u))), abs=1e-14)


def test_slope_examples():
    assert cn_slope(0.0, 1.0) * (1.0 - 0.0) == -0.25
    assert cn_slope_partials(0.0, 0.0)[1] == -0.5
    # at (1,1): d/db = b(a+b)/2 + q/2 = 1
    assert cn_slope_partials(1.0, 1.0) == (1.0, 1.0)


@given(reals, reals)
def test_secant_identity(a, b):
    assert cn_slope(a, b) * (b - a) == pytest.approx(W.value(b) - W.value(a), abs=1e-14)


@given(reals, reals)
def test_partials_fd_and_symmetry(a, b):
    h = 1e-6
    da, db = cn_slope_partials(a, b)
    assert da == pytest.approx((cn_slope(a + h, b) - cn_slope(a - h, b)) / (2 * h), abs=1e-7)
    assert db == pytest.approx((cn_slope(a, b + h) - cn_slope(a, b - h)) / (2 * h), abs=1e-7)
    assert cn_slope_partials(b, a)[1] == pytest.approx(da, abs=1e-15)


@given(reals, reals)
def test_both_parts_convex(x, y):
    # tangent inequalities; both W_plus and W_minus lie above their tangents
    assert W.convex_value(y) - W.convex_value(x) >= W.convex_derivative(x) * (y - x) - 1e-14
    assert W.concave_value(y) - W.concave_value(x) >= W.concave_derivative(x) * (y - x) - 1e-14


@given(reals, reals)
def test_eyre_step_inequality(x, y):
    # implicit convex part, explicit concave part: the step never gains energy
    rhs = (W.convex_derivative(y) - W.concave_derivative(x)) * (y - x)
    assert W.value(y) - W.value(x) <= rhs + 1e-14


def test_fresh_split_is_equivalent():
    d = double_well()
    g = np.linspace(-2, 2, 9)
    np.testing.assert_array_equal(d.derivative(g), W.derivative(g))
    assert d.name == "double_well"
