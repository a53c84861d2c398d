"""Initial data: the bundled profiles and user expressions in x, y.

The bundled profiles are exact x-derivatives of Schwartz functions
(``r = sqrt(x^2 + y^2)``):

    sym:           u0 = -6 d/dx sech^2(r)   = 12 x tanh(r)/r sech^2(r)
    sym-quadratic: u0 = -6 d/dx sech^2(r^2) = 24 x tanh(r^2) sech^2(r^2)
    asym:          u0 =  6 d/dx exp(-x^2 - 5y^2 - 3xy) = 6 (-2x - 3y) exp(-x^2 - 5y^2 - 3xy)

``sym`` is the radial profile whose dispersionless break-up happens at
t_c ~ 0.222, x_c ~ 1.79 (n = 1) and t_c ~ 0.0059, x_c ~ 1.33 (n = 3);
``sym-quadratic`` breaks much earlier (t_c ~ 0.066) and is kept for
comparison.  Each has zero x-mean on every line ``y = const`` up to
roundoff.
"""

import ast
from dataclasses import dataclass, field

import numpy as np

from .spectral import SpectralField


def sech(z):
    return 1.0 / np.cosh(z)


def _tanhc(r):
    """tanh(r)/r, smooth through r = 0."""
    r = np.asarray(r, dtype=float)
    small = r < 1e-4
    safe = np.where(small, 1.0, r)
    return np.where(small, 1.0 - r * r / 3.0, np.tanh(safe) / safe)


def u0_sym(x, y):
    r = np.sqrt(x * x + y * y)
    return 12.0 * x * _tanhc(r) * sech(r) ** 2


def u0_sym_quadratic(x, y):
    r2 = x * x + y * y
    return 24.0 * x * sech(r2) ** 2 * np.tanh(r2)


def u0_asym(x, y):
    return 6.0 * (-2.0 * x - 3.0 * y) * np.exp(-x * x - 5.0 * y * y - 3.0 * x * y)


_FUNCS = {"exp": np.exp, "sech": sech, "tanh": np.tanh, "sin": np.sin, "cos": np.cos,
          "cosh": np.cosh, "sinh": np.sinh, "sqrt": np.sqrt}
_CONSTS = {"pi": np.pi, "e": np.e}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.divide, ast.Pow: np.power}


def compile_expression(text):
    """Turn an arithmetic expression in ``x`` and ``y`` into a vectorized callable.

    Only numbers, ``x``, ``y``, ``pi``, ``e``, ``+ - * / **`` and the
    functions exp, sech, tanh, sin, cos, cosh, sinh, sqrt are accepted.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse initial data expression {text!r}: {exc.msg}") from None

    def ev(node, x, y):
        if isinstance(node, ast.Expression):
            return ev(node.body, x, y)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id == "x":
                return x
            if node.id == "y":
                return y
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise ValueError(f"unknown name {node.id!r} in initial data expression")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left, x, y), ev(node.right, x, y))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand, x, y)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
            if len(node.args) != 1 or node.keywords:
                raise ValueError(f"{node.func.id}() takes exactly one argument")
            return _FUNCS[node.func.id](ev(node.args[0], x, y))
        raise ValueError(f"unsupported construct in initial data expression: {ast.dump(node)[:60]}")

    # validate once on scalars so errors surface at parse time
    ev(tree, 0.5, 0.25)
    return lambda x, y: np.broadcast_to(ev(tree, x, y), np.broadcast(x, y).shape).astype(float)


@dataclass
class InitialData:
    name: str = "sym"
    expression: str = ""
    scale: float = 1.0
    params: dict = field(default_factory=dict)

    def function(self):
        if self.name == "sym":
            f = u0_sym
        elif self.name == "sym-quadratic":
            f = u0_sym_quadratic
        elif self.name == "asym":
            f = u0_asym
        elif self.name == "custom":
            if not self.expression:
                raise ValueError("custom initial data needs an expression")
            f = compile_expression(self.expression)
        else:
            raise ValueError(f"unknown initial data {self.name!r} (expected sym, sym-quadratic, asym or custom)")
        s = self.scale
        return f if s == 1.0 else (lambda x, y: s * f(x, y))


def resolve(descriptor):
    if isinstance(descriptor, InitialData):
        return descriptor
    if isinstance(descriptor, str):
        if descriptor in ("sym", "sym-quadratic", "asym"):
            return InitialData(name=descriptor)
        return InitialData(name="custom", expression=descriptor)
    raise TypeError(f"cannot interpret initial data descriptor {descriptor!r}")


def build_initial_data(descriptor, grid, return_projection=False):
    """Sample the initial data on ``grid`` and remove any x-mean.

    The removed ``kx = 0`` content (max coefficient modulus) is returned as
    the second element when ``return_projection`` is set; for the bundled
    profiles it is at roundoff level.
    """
    if isinstance(descriptor, SpectralField):
        fld = descriptor
    else:
        f = resolve(descriptor).function()
        fld = SpectralField.from_function(grid, f)
    c = fld.coeffs.copy()
    kx0 = grid.jx == 0
    projection = float(np.abs(c[:, kx0]).max())
    c[:, kx0] = 0.0
    # keep the samples real-exact: recompute from the projected coefficients
    out = SpectralField(grid, coeffs=c)
    out = SpectralField(grid, values=out.values)
    if return_projection:
        return out, projection
    return out
