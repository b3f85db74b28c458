"""Restricted arithmetic expressions for config files.

Numbers may be written as ``"40*pi^2"``; custom reaction terms as
``"a*x - b*x*x_l^2 + u"``. Only arithmetic, a few numpy functions and
declared names are accepted. ``^`` means power.
"""

from __future__ import annotations

import ast
import math
import operator

import numpy as np

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {
    "abs": np.abs,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "log": np.log,
    "log1p": np.log1p,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
}
_CONSTS = {"pi": math.pi, "e": math.e}


def _parse(text):
    try:
        tree = ast.parse(str(text).replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse expression {text!r}: {exc.msg}") from exc
    return tree.body


def _evaluate(node, env):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return node.value
    if isinstance(node, ast.Name):
        if node.id in env:
            return env[node.id]
        if node.id in _CONSTS:
            return _CONSTS[node.id]
        raise ValueError(f"unknown name {node.id!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_evaluate(node.left, env), _evaluate(node.right, env))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        return _UNARY[type(node.op)](_evaluate(node.operand, env))
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
        return _FUNCS[node.func.id](_evaluate(node.args[0], env))
    raise ValueError(f"unsupported syntax in expression: {ast.dump(node)}")


def parse_number(value):
    """A float from a number or an arithmetic string such as ``"6*pi^2"``."""
    if isinstance(value, bool):
        raise ValueError("booleans are not numbers")
    if isinstance(value, (int, float)):
        return float(value)
    return float(_evaluate(_parse(value), {}))


def field_function(text, params=None):
    """Compile ``text`` into ``f(x, x_l, u)`` acting on node arrays.

    ``params`` supplies extra scalar names such as ``a`` and ``b``.
    """
    body = _parse(text)
    consts = dict(params or {})

    def f(x, x_l, u):
        env = dict(consts, x=x, x_l=x_l, u=u)
        return np.broadcast_to(np.asarray(_evaluate(body, env), dtype=float), np.shape(x)).copy()

    # Fail at load time, not mid-run.
    z = np.zeros(2)
    f(z, z, z)
    return f
