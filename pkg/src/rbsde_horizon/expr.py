"""A small, safe expression language evaluated elementwise on numpy arrays.

Grammar: numbers, the variables handed in by the caller, + - * / ** and unary
minus, comparisons (yielding 0.0 / 1.0), ``and`` / ``or`` / ``not`` on such
indicators, and the functions max, min, abs, exp, log, sqrt.
"""
from __future__ import annotations

import ast
import operator

import numpy as np

from rbsde_horizon.errors import ConfigurationError

_BINOPS = {
    ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
    ast.Div: operator.truediv, ast.Pow: operator.pow,
}
_CMPOPS = {
    ast.Lt: np.less, ast.LtE: np.less_equal, ast.Gt: np.greater,
    ast.GtE: np.greater_equal, ast.Eq: np.equal, ast.NotEq: np.not_equal,
}


def _reduce(fn):
    def call(*args):
        if not args:
            raise ValueError("needs at least one argument")
        out = args[0]
        for a in args[1:]:
            out = fn(out, a)
        return out
    return call


_FUNCS = {
    "max": _reduce(np.maximum), "min": _reduce(np.minimum),
    "abs": np.abs, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
}


class ExpressionError(ConfigurationError):
    def __init__(self, text: str, message: str, column: int | None = None):
        where = f" at line 1, column {column}" if column is not None else ""
        super().__init__(f"malformed expression {text!r}{where}: {message}")
        self.column = column


class Expression:
    """Compiled expression; call with keyword arrays to evaluate."""

    def __init__(self, text: str, variables: tuple[str, ...]):
        self.text = text
        self.variables = variables
        try:
            tree = ast.parse(text.strip(), mode="eval")
        except SyntaxError as exc:
            # offset 0 means the parser hit the end of input
            col = exc.offset if exc.offset else len(text.strip()) + 1
            raise ExpressionError(text, exc.msg, col) from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        col = getattr(node, "col_offset", None)
        col = None if col is None else col + 1
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ExpressionError(self.text, "only numeric constants allowed", col)
        elif isinstance(node, ast.Name):
            if node.id not in self.variables:
                raise ExpressionError(self.text, f"unknown name {node.id!r}", col)
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(self.text, "operator not allowed", col)
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd, ast.Not)):
                raise ExpressionError(self.text, "operator not allowed", col)
            self._check(node.operand)
        elif isinstance(node, ast.Compare):
            if any(type(op) not in _CMPOPS for op in node.ops):
                raise ExpressionError(self.text, "comparison not allowed", col)
            for child in [node.left, *node.comparators]:
                self._check(child)
        elif isinstance(node, ast.BoolOp):
            for child in node.values:
                self._check(child)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ExpressionError(self.text, "unknown function", col)
            if node.keywords or not node.args:
                raise ExpressionError(self.text, "functions take positional arguments", col)
            for child in node.args:
                self._check(child)
        else:
            raise ExpressionError(self.text, f"{type(node).__name__} not allowed", col)

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            if isinstance(node.op, ast.Not):
                return np.where(np.asarray(v) != 0, 0.0, 1.0)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Compare):
            left = self._eval(node.left, env)
            out = True
            for op, comp in zip(node.ops, node.comparators):
                right = self._eval(comp, env)
                out = np.logical_and(out, _CMPOPS[type(op)](left, right))
                left = right
            return np.asarray(out, dtype=float)
        if isinstance(node, ast.BoolOp):
            vals = [np.asarray(self._eval(v, env)) != 0 for v in node.values]
            fn = np.logical_and if isinstance(node.op, ast.And) else np.logical_or
            out = vals[0]
            for v in vals[1:]:
                out = fn(out, v)
            return np.asarray(out, dtype=float)
        args = [self._eval(a, env) for a in node.args]
        return _FUNCS[node.func.id](*args)

    def __call__(self, **env) -> np.ndarray:
        shape = np.broadcast_shapes(*(np.shape(v) for v in env.values()))
        try:
            with np.errstate(all="ignore"):
                raw = self._eval(self._tree, env)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"expression {self.text!r} cannot be evaluated: {exc}") from None
        value = np.broadcast_to(np.asarray(raw, dtype=float), shape)
        if not np.all(np.isfinite(value)):
            raise ConfigurationError(f"expression {self.text!r} is not finite on every node")
        return np.array(value)


def compile_expression(text: str, variables=("n", "t", "W")) -> Expression:
    if not isinstance(text, str):
        raise ConfigurationError(f"expression must be a string, got {text!r}")
    return Expression(text, tuple(variables))
