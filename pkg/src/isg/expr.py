"""Closed-form expressions for scenario files.

Scenario files may describe dynamics and costs with short arithmetic strings
such as ``"u[0] - v[0]"`` or ``"x[0]**2 / (1 + x[0]**2)"``. Only affine and
rational forms are accepted: numeric literals, the names ``x``, ``y``, ``z``,
``u``, ``v`` (indexed with integer literals where they are vectors), the
operators ``+ - * /`` and ``**`` with an integer literal exponent.

Expressions compile to numpy-broadcasting callables; nothing is passed to
``eval``.
"""

from __future__ import annotations

import ast
from typing import Callable

import numpy as np

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
}

VECTOR_NAMES = ("x", "z", "u", "v")
SCALAR_NAMES = ("y",)


class ExpressionError(ValueError):
    pass


def _compile(node: ast.AST, allowed: set[str]) -> Callable[[dict], np.ndarray]:
    if isinstance(node, ast.Expression):
        return _compile(node.body, allowed)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"unsupported literal {node.value!r}")
        value = float(node.value)
        return lambda env: value
    if isinstance(node, ast.Name):
        if node.id not in allowed or node.id not in SCALAR_NAMES:
            raise ExpressionError(f"name {node.id!r} not allowed here (vectors must be indexed)")
        name = node.id
        return lambda env: env[name]
    if isinstance(node, ast.Subscript):
        if not isinstance(node.value, ast.Name) or node.value.id not in allowed:
            raise ExpressionError("only x[i], z[i], u[i], v[i] may be indexed")
        if node.value.id not in VECTOR_NAMES:
            raise ExpressionError(f"{node.value.id!r} is a scalar")
        index = node.slice
        if not (isinstance(index, ast.Constant) and isinstance(index.value, int)):
            raise ExpressionError("indices must be integer literals")
        name, i = node.value.id, index.value
        return lambda env: env[name][..., i]
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, allowed)
        if isinstance(node.op, ast.USub):
            return lambda env: np.negative(inner(env))
        return inner
    if isinstance(node, ast.BinOp):
        if isinstance(node.op, ast.Pow):
            exp = node.right
            if isinstance(exp, ast.UnaryOp) and isinstance(exp.op, ast.USub):
                exp = exp.operand
                sign = -1
            else:
                sign = 1
            if not (isinstance(exp, ast.Constant) and isinstance(exp.value, int)):
                raise ExpressionError("exponents must be integer literals")
            power = sign * exp.value
            base = _compile(node.left, allowed)
            return lambda env: np.power(np.asarray(base(env), dtype=float), power)
        op = _BINOPS.get(type(node.op))
        if op is None:
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        left = _compile(node.left, allowed)
        right = _compile(node.right, allowed)
        return lambda env: op(left(env), right(env))
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)}")


def compile_expression(text: str, names: tuple[str, ...]) -> Callable[[dict], np.ndarray]:
    """Compile ``text`` into ``env -> array`` using only ``names``."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    return _compile(tree, set(names))


def _broadcast(value, *arrays: np.ndarray) -> np.ndarray:
    shape = np.broadcast_shapes(*(a.shape[:-1] if a.ndim else () for a in arrays))
    return np.broadcast_to(np.asarray(value, dtype=float), shape).astype(float)


def make_f(components: list[str]):
    """Vector drift ``f(x, u, v)`` from one expression per x-component."""
    compiled = [compile_expression(c, ("x", "u", "v")) for c in components]

    def f(x, u, v):
        env = {"x": x, "u": u, "v": v}
        return np.stack([_broadcast(c(env), x, u, v) for c in compiled], axis=-1)

    return f


def make_g(text: str):
    compiled = compile_expression(text, ("y", "u", "v"))

    def g(y, u, v):
        env = {"y": y, "u": u, "v": v}
        shape = np.broadcast_shapes(np.shape(y), u.shape[:-1], v.shape[:-1])
        return np.broadcast_to(np.asarray(compiled(env), dtype=float), shape).astype(float)

    return g


def make_ell(text: str):
    compiled = compile_expression(text, ("x", "y", "z", "u", "v"))

    def ell(z, u, v):
        env = {"z": z, "x": z[..., :-1], "y": z[..., -1], "u": u, "v": v}
        return _broadcast(compiled(env), z, u, v)

    return ell
