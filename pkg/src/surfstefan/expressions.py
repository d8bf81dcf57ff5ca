"""Arithmetic expressions over (t, x, y, z) for data and velocity presets.

Strings are checked against a small whitelist of syntax nodes and names
before being handed to sympy, so a config file cannot execute arbitrary code.
"""

import ast

import numpy as np
import sympy

VARIABLES = ("t", "x", "y", "z")
FUNCTIONS = {
    "sin": sympy.sin,
    "cos": sympy.cos,
    "tan": sympy.tan,
    "exp": sympy.exp,
    "log": sympy.log,
    "sqrt": sympy.sqrt,
    "abs": sympy.Abs,
    "tanh": sympy.tanh,
    "atan2": sympy.atan2,
    "min": sympy.Min,
    "max": sympy.Max,
    "heaviside": lambda a: sympy.Heaviside(a, 0),
}
CONSTANTS = {"pi": sympy.pi, "e": sympy.E}

_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
    ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub,
    ast.UAdd, ast.Compare, ast.Gt, ast.Lt, ast.GtE, ast.LtE,
)


class ExpressionError(ValueError):
    pass


def _validate(text):
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse expression {text!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ExpressionError(
                f"disallowed syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Name):
            if node.id not in VARIABLES and node.id not in FUNCTIONS \
                    and node.id not in CONSTANTS:
                raise ExpressionError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.Call) and not (
                isinstance(node.func, ast.Name) and node.func.id in FUNCTIONS):
            raise ExpressionError(f"only whitelisted functions may be called in {text!r}")
        if isinstance(node, ast.Compare) and len(node.ops) != 1:
            raise ExpressionError(f"chained comparisons are not supported in {text!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ExpressionError(f"non-numeric literal in {text!r}")
    return tree


class _ToSympy(ast.NodeVisitor):
    def __init__(self, symbols):
        self.symbols = symbols

    def visit_Expression(self, node):
        return self.visit(node.body)

    def visit_Constant(self, node):
        return sympy.Float(node.value) if isinstance(node.value, float) \
            else sympy.Integer(node.value)

    def visit_Name(self, node):
        if node.id in self.symbols:
            return self.symbols[node.id]
        return CONSTANTS[node.id]

    def visit_UnaryOp(self, node):
        val = self.visit(node.operand)
        return -val if isinstance(node.op, ast.USub) else val

    def visit_BinOp(self, node):
        a, b = self.visit(node.left), self.visit(node.right)
        op = type(node.op)
        if op is ast.Add:
            return a + b
        if op is ast.Sub:
            return a - b
        if op is ast.Mult:
            return a * b
        if op is ast.Div:
            return a / b
        return a**b

    def visit_Compare(self, node):
        # comparisons evaluate to 0/1 indicators
        a, b = self.visit(node.left), self.visit(node.comparators[0])
        op = type(node.ops[0])
        if op in (ast.Gt, ast.GtE):
            return sympy.Heaviside(a - b, 1 if op is ast.GtE else 0)
        return sympy.Heaviside(b - a, 1 if op is ast.LtE else 0)

    def visit_Call(self, node):
        args = [self.visit(a) for a in node.args]
        return FUNCTIONS[node.func.id](*args)


_SYMBOLS = {name: sympy.Symbol(name, real=True) for name in VARIABLES}


def to_sympy(text):
    return _ToSympy(_SYMBOLS).visit(_validate(str(text)))


class Expression:
    """Compiled scalar expression f(t, x, y, z) evaluated with numpy.

    >>> Expression("2 + exp(-2*t)*z")(0.0, np.array([[0, 0, 1.0]]))
    array([3.])
    """

    def __init__(self, text):
        self.text = str(text).strip()
        self.sym = to_sympy(self.text)
        self._fn = sympy.lambdify([_SYMBOLS[v] for v in VARIABLES], self.sym,
                                  modules=[{"Heaviside": _heaviside}, "numpy"])

    def __call__(self, t, points):
        points = np.asarray(points, dtype=float)
        x, y, z = points[..., 0], points[..., 1], points[..., 2]
        val = self._fn(float(t), x, y, z)
        return np.broadcast_to(np.asarray(val, dtype=float), x.shape).copy()

    def diff(self, var):
        out = Expression.__new__(Expression)
        out.text = f"d({self.text})/d{var}"
        out.sym = sympy.diff(self.sym, _SYMBOLS[var])
        out._fn = sympy.lambdify([_SYMBOLS[v] for v in VARIABLES], out.sym,
                                 modules=[{"Heaviside": _heaviside}, "numpy"])
        return out

    def __repr__(self):
        return f"Expression({self.text!r})"


def _heaviside(a, h0=0.5):
    return np.heaviside(a, h0)
