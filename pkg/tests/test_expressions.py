import numpy as np
import pytest

from surfstefan.expressions import Expression, ExpressionError

PTS = np.array([[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.0, 0.0, -1.0]])


def test_evaluates_over_points_and_time():
    f = Expression("2 + exp(-2*t)*z")
    assert np.allclose(f(0.5, PTS), 2 + np.exp(-1.0) * PTS[:, 2])


def test_constant_broadcasts():
    assert Expression("1.5")(0.0, PTS).tolist() == [1.5, 1.5, 1.5]


def test_comparisons_are_indicators():
    f = Expression("(z > 0)*(z + 1) + (z <= 0)*z")
    assert f(0.0, PTS).tolist() == [0.0, 1.8, -1.0]


def test_caret_is_power():
    assert Expression("x^2 + y^2")(0.0, PTS)[1] == pytest.approx(0.36)


def test_derivative():
    d = Expression("sin(t)*x + x*y").diff("x")
    assert np.allclose(d(0.3, PTS), np.sin(0.3) + PTS[:, 1])


@pytest.mark.parametrize("bad", [
    "__import__('os')", "x.real", "open('f')", "lambda: 1", "q + 1", "[1, 2]", "0 < x < 1", "'a'",
])
def test_rejects_unsafe_or_unknown(bad):
    with pytest.raises(ExpressionError):
        Expression(bad)


def test_syntax_error_message_names_input():
    with pytest.raises(ExpressionError, match="2 \\+"):
        Expression("2 +")
