"""A small, safe arithmetic expression language for config files.

Grammar: numbers, declared variables and parameters, ``+ - * /`` (and
``**``), unary minus, parentheses, and the functions ``abs``, ``pow``,
``min``, ``max``, ``sqrt``, ``exp``. Expressions compile to numpy-vectorized
callables.
"""

from __future__ import annotations

import ast
import operator

import numpy as np

from .errors import ConfigError

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: np.power,
}

_FUNCS = {
    "abs": (np.abs, 1),
    "pow": (np.power, 2),
    "min": (np.minimum, 2),
    "max": (np.maximum, 2),
    "sqrt": (np.sqrt, 1),
    "exp": (np.exp, 1),
}


def _build(node, variables, params):
    if isinstance(node, ast.Expression):
        return _build(node.body, variables, params)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        value = float(node.value)
        return lambda env: value
    if isinstance(node, ast.Name):
        if node.id in variables:
            idx = variables.index(node.id)
            return lambda env: env[idx]
        if node.id in params:
            value = float(params[node.id])
            return lambda env: value
        raise ConfigError(f"unknown name {node.id!r} in expression")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _build(node.operand, variables, params)
        if isinstance(node.op, ast.USub):
            return lambda env: -inner(env)
        return inner
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left = _build(node.left, variables, params)
        right = _build(node.right, variables, params)
        return lambda env: op(left(env), right(env))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        if node.func.id not in _FUNCS or node.keywords:
            raise ConfigError(f"unsupported function {node.func.id!r}")
        fn, arity = _FUNCS[node.func.id]
        if len(node.args) != arity:
            raise ConfigError(f"{node.func.id} takes {arity} argument(s)")
        args = [_build(a, variables, params) for a in node.args]
        if arity == 1:
            (a0,) = args
            return lambda env: fn(a0(env))
        a0, a1 = args
        return lambda env: fn(a0(env), a1(env))
    raise ConfigError(f"unsupported syntax in expression: {ast.dump(node)[:60]}")


def compile_expression(text, variables=("t", "u", "v"), params=None):
    """Compile ``text`` into ``f(*variables)`` operating on numpy arrays."""
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    body = _build(tree, tuple(variables), dict(params or {}))

    def f(*args):
        env = [np.asarray(a, dtype=float) for a in args]
        shape = np.broadcast_shapes(*(e.shape for e in env)) if env else ()
        with np.errstate(divide="ignore", invalid="ignore"):
            out = body(env)
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy() if shape else float(out)

    f.expression = str(text)
    return f
