import numpy as np
import pytest

from fbvpcert.errors import ConfigError
from fbvpcert.expr import compile_expression


def test_arithmetic_and_functions():
    f = compile_expression("lam * pow(abs(u), p - 1) * abs(v) + min(t, 1) - max(0, -1) / 2",
                           params={"lam": 0.5, "p": 3})
    assert f(0.5, -2.0, 3.0) == pytest.approx(0.5 * 4 * 3 + 0.5)
    assert f.expression.startswith("lam")


def test_vectorized_and_broadcast():
    f = compile_expression("1")
    out = f(np.zeros(4), np.zeros(4), np.zeros(4))
    assert out.shape == (4,) and np.all(out == 1.0)
    g = compile_expression("sqrt(t) * exp(-u)", ("t", "u"))
    assert np.allclose(g(np.array([1.0, 4.0]), 0.0), [1.0, 2.0])


@pytest.mark.parametrize("text", ["__import__('os')", "u.real", "open('x')", "u if v else t", "x + 1"])
def test_rejects_unsafe_or_unknown(text):
    with pytest.raises(ConfigError):
        compile_expression(text)


def test_syntax_error():
    with pytest.raises(ConfigError, match="cannot parse"):
        compile_expression("u +* v")
