"""Forcing terms: closed-form expressions, stored snapshots, or zero.

Expressions are parsed into a restricted syntax tree (arithmetic, the names
x1, x2, x3, t, pi, kappa and a few numpy functions) and evaluated on the
collocation grid. The spatial part handed to the solver is always mean-free;
the mean is a separate function of time with an exact antiderivative.
"""
import ast
import logging
import math
import operator

import numpy as np
from scipy.interpolate import CubicSpline

from ..exceptions import CoverageError, ForcingError
from ..models.field import Field
from ..models.trajectory import ForcingSpec
from . import spectral

logger = logging.getLogger(__name__)

FUNCTIONS = {
    'sin': np.sin,
    'cos': np.cos,
    'exp': np.exp,
    'sqrt': np.sqrt,
    'tanh': np.tanh,
    'abs': np.abs,
}

BINARY_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}

UNARY_OPS = {
    ast.UAdd: operator.pos,
    ast.USub: operator.neg,
}


class Expression:
    """A parsed arithmetic expression in the forcing/config mini-language."""

    def __init__(self, text):
        self.text = str(text).strip()
        try:
            tree = ast.parse(self.text, mode='eval')
        except SyntaxError as e:
            raise ForcingError(f"cannot parse expression {self.text!r}: {e.msg}") from e
        self.names = set()
        self._check(tree.body)
        self._tree = tree.body

    def __repr__(self):
        return f'<Expression {self.text!r}>'

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ForcingError(f"unsupported constant {node.value!r} in {self.text!r}")
        elif isinstance(node, ast.Name):
            self.names.add(node.id)
        elif isinstance(node, ast.BinOp) and type(node.op) in BINARY_OPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in UNARY_OPS:
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                raise ForcingError(f"unknown function in {self.text!r}; allowed: {sorted(FUNCTIONS)}")
            if len(node.args) != 1 or node.keywords:
                raise ForcingError(f"{node.func.id} takes exactly one argument in {self.text!r}")
            self._check(node.args[0])
        else:
            raise ForcingError(f"unsupported syntax {type(node).__name__} in {self.text!r}")

    @property
    def depends_on_time(self):
        return 't' in self.names

    def evaluate(self, **variables):
        variables.setdefault('pi', math.pi)
        missing = self.names - set(variables)
        if missing:
            raise ForcingError(f"unknown name(s) {sorted(missing)} in {self.text!r}")
        return self._eval(self._tree, variables)

    def _eval(self, node, variables):
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            return variables[node.id]
        if isinstance(node, ast.BinOp):
            left, right = self._eval(node.left, variables), self._eval(node.right, variables)
            if isinstance(node.op, ast.Pow):
                return self._power(left, right)
            return BINARY_OPS[type(node.op)](left, right)
        if isinstance(node, ast.UnaryOp):
            return UNARY_OPS[type(node.op)](self._eval(node.operand, variables))
        return FUNCTIONS[node.func.id](self._eval(node.args[0], variables))

    def _power(self, base, exponent):
        # integer powers would be evaluated exactly, at any size
        if np.isscalar(base) and np.isscalar(exponent):
            base, exponent = float(base), float(exponent)
        try:
            with np.errstate(over='raise', invalid='raise', divide='raise'):
                value = base ** exponent
        except (OverflowError, FloatingPointError, ZeroDivisionError) as e:
            raise ForcingError(f"power out of range in {self.text!r}: {e}") from e
        if isinstance(value, complex):
            raise ForcingError(f"power of a negative number in {self.text!r} is not real")
        return value


def evaluate_number(text):
    """Evaluate a constant expression such as ``2*pi`` to a float."""
    value = Expression(text).evaluate()
    return float(value)


class Forcing:
    """Common interface of everything the solver can be driven by."""

    grid = None

    def at(self, t):
        """Mean-free spectral forcing field at time ``t``."""
        raise NotImplementedError

    def mean_value(self, t):
        raise NotImplementedError

    def mean_antiderivative(self, t):
        """Integral of the mean forcing from 0 to ``t``."""
        raise NotImplementedError

    @property
    def is_zero(self):
        return False


class CompiledForcing(Forcing):
    def __init__(self, spec, grid, kappa=None):
        if isinstance(spec, dict):
            spec = ForcingSpec(**spec)
        self.spec = spec
        self.grid = grid
        self._kappa = grid.kappa if kappa is None else kappa
        self._mean_constant = self._mean_vector(spec.mean_constant, 'mean_constant')
        self._mean_amplitude = self._mean_vector(spec.mean_amplitude, 'mean_amplitude')
        self._frequency = float(spec.mean_frequency)
        self._warned_mean = False
        self._cache = None
        self._expressions = None
        self._spline = None
        self._span = None
        if spec.kind == 'expression':
            self._compile_expressions(spec.components)
        elif spec.kind == 'snapshots':
            self._load_snapshots(spec.snapshot_path)

    def __repr__(self):
        return f'<CompiledForcing {self.spec.kind} on {self.grid!r}>'

    @property
    def is_zero(self):
        return self.spec.kind == 'zero' and not self.spec.has_mean

    def _mean_vector(self, values, name):
        values = list(values or [])
        if self.grid.dim == 2 and len(values) == 3:
            if values[2] != 0.0:
                raise ForcingError(f"{name} of a 2D forcing must have a zero third entry")
            values = values[:2]
        if len(values) > self.grid.dim:
            raise ForcingError(f"{name} has {len(values)} entries for a {self.grid.dim}D grid")
        out = np.zeros(self.grid.dim)
        out[:len(values)] = values
        return out

    def _compile_expressions(self, components):
        expressions = [Expression(c) for c in components]
        dim = self.grid.dim
        if len(expressions) == 3 and dim == 2:
            third = expressions.pop()
            if third.names or third.evaluate() != 0:
                raise ForcingError("2D forcing must have an identically zero third component")
        if len(expressions) not in (dim, 2) or len(expressions) > dim:
            raise ForcingError(f"got {len(components)} forcing components for a {dim}D grid")
        allowed = {'x1', 'x2', 't', 'pi', 'kappa'} | ({'x3'} if dim == 3 else set())
        for expression in expressions:
            unknown = expression.names - allowed
            if 'x3' in unknown:
                raise ForcingError(f"2D forcing cannot depend on x3: {expression.text!r}")
            if unknown:
                raise ForcingError(f"unknown name(s) {sorted(unknown)} in {expression.text!r}")
        self._expressions = expressions

    def _load_snapshots(self, path):
        try:
            archive = np.load(path)
        except OSError as e:
            raise ForcingError(f"cannot read forcing snapshots {path!r}: {e}") from e
        with archive:
            times = np.asarray(archive['times'], dtype=float)
            data = np.asarray(archive['data'], dtype=float)
            source = spectral.make_grid(float(archive['L']), int(archive['N']), int(archive['dim']))
        if times.size < 2 or np.any(np.diff(times) <= 0):
            raise ForcingError(f"forcing snapshots in {path!r} need at least two increasing time stamps")
        if source.L != self.grid.L or source.N != self.grid.N or source.dim > self.grid.dim:
            raise ForcingError(f"forcing snapshots on {source!r} do not fit {self.grid!r}")
        coeffs = []
        for values in data:
            f = Field(source, values, 'physical')
            if source.dim < self.grid.dim:
                f = spectral.lift_to_3d(f)
            coeffs.append(spectral.to_spectral(f).data)
        stacked = np.ascontiguousarray(np.stack(coeffs))
        # spline the real and imaginary parts together through a float view
        self._spline = CubicSpline(times, stacked.view(np.float64), axis=0)
        self._span = (times[0], times[-1])

    def _spatial(self, t):
        grid = self.grid
        if self.spec.kind == 'zero':
            return Field.zeros(grid, grid.dim, 'spectral', time_stamp=t)
        if self.spec.kind == 'snapshots':
            lo, hi = self._span
            if not lo - 1e-12 <= t <= hi + 1e-12:
                raise CoverageError(f"forcing snapshots cover ({lo}, {hi}), asked for t={t}")
            values = np.ascontiguousarray(self._spline(t)).view(np.complex128)
            return Field(grid, values, 'spectral', time_stamp=t)
        variables = dict(zip(('x1', 'x2', 'x3'), grid.coordinates()))
        variables.update(t=t, kappa=self._kappa)
        data = np.zeros((grid.dim,) + grid.physical_shape)
        for i, expression in enumerate(self._expressions):
            data[i] = np.broadcast_to(expression.evaluate(**variables), grid.physical_shape)
        return spectral.to_spectral(Field(grid, data, 'physical', time_stamp=t))

    def at(self, t):
        if self._cache is not None:
            return self._cache.replace(time_stamp=t)
        field = self._spatial(t)
        m = spectral.mean(field).value
        if not self._warned_mean and np.any(np.abs(m) > 1e-12):
            logger.warning(f"Spatial forcing has mean {m.tolist()}; it is discarded, "
                           f"use mean_constant/mean_amplitude for the mean forcing.")
            self._warned_mean = True
        field = spectral.mean_free(field)
        if self.spec.kind == 'zero' or (self.spec.kind == 'expression'
                                        and not any(e.depends_on_time for e in self._expressions)):
            self._cache = field
        return field

    def mean_value(self, t):
        return self._mean_constant + self._mean_amplitude * math.sin(self._frequency * t)

    def mean_antiderivative(self, t):
        out = self._mean_constant * t
        if self._frequency != 0.0:
            out = out + self._mean_amplitude * (1.0 - math.cos(self._frequency * t)) / self._frequency
        return out

    def validate_2d(self):
        """Reject forcing that depends on x3 or drives a third velocity component."""
        if self.grid.dim == 2:
            return
        sample = self.at(0.0)
        if not spectral.is_x3_invariant(sample):
            raise ForcingError("forcing is not of two-dimensional form")
        if self._mean_constant[2] or self._mean_amplitude[2]:
            raise ForcingError("2D forcing must have no mean in the third component")


class ForcingSum(Forcing):
    """Pointwise sum of forcings on one grid (f = f_s + g)."""

    def __init__(self, *parts):
        grids = {p.grid for p in parts}
        if len(grids) != 1:
            raise ForcingError("summed forcings must live on the same grid")
        self.parts = parts
        self.grid = parts[0].grid

    def at(self, t):
        total = self.parts[0].at(t)
        for part in self.parts[1:]:
            total = total + part.at(t)
        return total

    def mean_value(self, t):
        return sum(p.mean_value(t) for p in self.parts)

    def mean_antiderivative(self, t):
        return sum(p.mean_antiderivative(t) for p in self.parts)

    @property
    def is_zero(self):
        return all(p.is_zero for p in self.parts)


class SteadyForcing(Forcing):
    """A fixed field; its mean is applied as a constant mean forcing."""

    def __init__(self, field):
        field = spectral.to_spectral(field)
        self.grid = field.grid
        self._mean = spectral.mean(field).value
        self._field = spectral.mean_free(field)

    def at(self, t):
        return self._field.replace(time_stamp=t)

    def mean_value(self, t):
        return self._mean

    def mean_antiderivative(self, t):
        return self._mean * t

    @property
    def is_zero(self):
        return not np.any(self._field.data) and not np.any(self._mean)


def compile_forcing(spec, grid):
    if isinstance(spec, Forcing):
        return spec
    if isinstance(spec, Field):
        if spec.grid != grid:
            raise ForcingError(f"forcing field on {spec.grid!r} does not match {grid!r}")
        return SteadyForcing(spec)
    return CompiledForcing(spec or ForcingSpec(), grid)
