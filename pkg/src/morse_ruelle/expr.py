"""Tiny arithmetic grammar for user-supplied test functions.

Expressions are parsed with :mod:`ast` and evaluated on numpy arrays. Only
numeric literals, a fixed set of variable names, the four arithmetic
operators, powers, unary signs and a whitelist of elementwise functions are
accepted.

Examples
--------
>>> import numpy as np
>>> fn = compile_expression("cos(th1) + 0.5*sin(th2)", ("th1", "th2"))
>>> fn(np.zeros((1, 2)))
array([1.])
"""
from __future__ import annotations

import ast
import math
from typing import Callable, Sequence

import numpy as np

from .errors import ArtifactError

__all__ = ["ExpressionError", "compile_expression", "TORUS_VARS", "SPHERE_VARS"]

TORUS_VARS = ("th1", "th2")
SPHERE_VARS = ("x", "y", "z")

_FUNCS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "cosh": np.cosh,
    "sinh": np.sinh,
    "abs": np.abs,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class ExpressionError(ArtifactError):
    """Raised for expressions outside the accepted grammar."""


def _check(node: ast.AST, names: Sequence[str]) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, names)
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise ExpressionError(f"unsupported literal {node.value!r}")
    elif isinstance(node, ast.Name):
        if node.id not in names and node.id not in _CONSTS:
            raise ExpressionError(f"unknown name {node.id!r}; allowed: {', '.join(names)}")
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"unsupported operator {type(node.op).__name__}")
        _check(node.left, names)
        _check(node.right, names)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.UAdd, ast.USub)):
            raise ExpressionError("unsupported unary operator")
        _check(node.operand, names)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError("only whitelisted functions may be called")
        if node.keywords or len(node.args) != 1:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        _check(node.args[0], names)
    else:
        raise ExpressionError(f"unsupported syntax {type(node).__name__}")


def _eval(node: ast.AST, env: dict) -> np.ndarray:
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant):
        return np.float64(node.value)
    if isinstance(node, ast.Name):
        return env[node.id] if node.id in env else np.float64(_CONSTS[node.id])
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Call):
        return _FUNCS[node.func.id](_eval(node.args[0], env))
    raise ExpressionError("unreachable")  # pragma: no cover


def compile_expression(text: str, names: Sequence[str]) -> Callable[[np.ndarray], np.ndarray]:
    """Compile ``text`` into a vectorized function of points.

    Parameters
    ----------
    text : str
        Expression such as ``"1 + 0.3*sin(th1)"``.
    names : sequence of str
        Variable names bound, in order, to the columns of the point array.

    Returns
    -------
    callable
        Maps an ``(N, len(names))`` array to an ``(N,)`` array.
    """
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    _check(tree, names)

    def fn(X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        env = {name: X[:, i] for i, name in enumerate(names)}
        out = _eval(tree, env)
        return np.broadcast_to(np.asarray(out, dtype=float), (X.shape[0],)).copy()

    fn.source = text  # type: ignore[attr-defined]
    return fn
