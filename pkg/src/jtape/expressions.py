"""Statement-level expression objects.

Arithmetic on active values does not touch any tape. Each operator returns a
small node object that already carries its primal ``value`` and knows how to
push the partial derivatives of the whole right-hand side to a propagation
context. A tape (or the forward-mode accumulator) consumes one expression per
assignment, so ``w = ((a + b) * (c - d)) ** 2`` becomes a single statement with
four Jacobian entries instead of four statements with seven.

Every node implements two propagation entry points:

``calc_gradient(data)``
    multiplier-free version, the root of a statement.
``calc_gradient_m(data, multiplier)``
    version used below the root, the multiplier is the derivative of the
    enclosing expression with respect to this node.

Leaves terminate the recursion by calling ``data.push_jacobi(jacobian, value,
gradient_data)``.

Binary operations come in three node classes each: both operands active
(``*11``), constant right operand (``*10``) and constant left operand
(``*01``). With the two propagation entry points this gives the six derivative
variants per binary operation.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

PASSIVE_TYPES = (float, int)


def _ieee_div(x, y):
    # Python raises on division by zero; tapes need the IEEE result instead.
    try:
        return x / y
    except ZeroDivisionError:
        if x != x or x == 0:
            return math.nan
        return math.copysign(math.inf, x) * math.copysign(1.0, y)


def _ieee_pow(x, y):
    try:
        return math.pow(x, y)
    except OverflowError:
        return math.inf
    except ValueError:
        if x == 0.0:
            if y == int(y) and int(y) % 2 == 1:
                return math.copysign(math.inf, x)
            return math.inf
        return math.nan


def _ieee_log(x):
    try:
        return math.log(x)
    except ValueError:
        return -math.inf if x == 0.0 else math.nan


def _ieee_sqrt(x):
    try:
        return math.sqrt(x)
    except ValueError:
        return math.nan


def _ieee_exp(x):
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _ieee_trig(fn):
    def wrapped(x):
        try:
            return fn(x)
        except ValueError:
            return math.nan
    wrapped.__name__ = fn.__name__
    return wrapped


class Expression:
    """Base class of every node; provides the operator overloads.

    Subclasses define ``value``, ``nargs`` (number of leaf occurrences, an
    upper bound for the arguments a statement can store), ``calc_gradient``,
    ``calc_gradient_m``, ``check_args`` and ``children``.
    """

    __slots__ = ()
    op = 'expr'

    def __add__(self, other):
        if isinstance(other, Expression):
            return Add11(self, other)
        if isinstance(other, PASSIVE_TYPES):
            return Add10(self, other)
        return NotImplemented

    def __radd__(self, other):
        if isinstance(other, PASSIVE_TYPES):
            return Add01(other, self)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, Expression):
            return Sub11(self, other)
        if isinstance(other, PASSIVE_TYPES):
            return Sub10(self, other)
        return NotImplemented

    def __rsub__(self, other):
        if isinstance(other, PASSIVE_TYPES):
            return Sub01(other, self)
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, Expression):
            return Mul11(self, other)
        if isinstance(other, PASSIVE_TYPES):
            return Mul10(self, other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, PASSIVE_TYPES):
            return Mul01(other, self)
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, Expression):
            return Div11(self, other)
        if isinstance(other, PASSIVE_TYPES):
            return Div10(self, other)
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, PASSIVE_TYPES):
            return Div01(other, self)
        return NotImplemented

    def __pow__(self, other):
        if isinstance(other, Expression):
            return Pow11(self, other)
        if isinstance(other, PASSIVE_TYPES):
            return Pow10(self, other)
        return NotImplemented

    def __rpow__(self, other):
        if isinstance(other, PASSIVE_TYPES):
            return Pow01(other, self)
        return NotImplemented

    def __neg__(self):
        return Neg(self)

    def __pos__(self):
        return self

    def __abs__(self):
        return Abs(self)

    # Comparisons act on primal values only; they never record anything.
    def __lt__(self, other):
        return self.value < _primal(other)

    def __le__(self, other):
        return self.value <= _primal(other)

    def __gt__(self, other):
        return self.value > _primal(other)

    def __ge__(self, other):
        return self.value >= _primal(other)

    def __eq__(self, other):
        return self.value == _primal(other)

    def __ne__(self, other):
        return self.value != _primal(other)

    __hash__ = None

    def __bool__(self):
        raise TypeError('truth value of an expression is ambiguous; compare its value explicitly')

    def __repr__(self):
        return f'{type(self).__name__}(value={self.value!r})'


def _primal(x):
    return x.value if isinstance(x, Expression) else x


def evaluate_primal(expr):
    """Primal value of an expression; plain numbers pass through."""
    if isinstance(expr, Expression):
        return expr.value
    return expr


def propagate(expr, data, multiplier):
    """Push d(expr)/d(leaf) * multiplier for every leaf occurrence to ``data``."""
    expr.calc_gradient_m(data, multiplier)


def propagate_unit(expr, data):
    expr.calc_gradient(data)


# --------------------------------------------------------------------------
# binary operations

class _Binary(Expression):
    __slots__ = ('a', 'b', 'value', 'nargs')

    def check_args(self, report):
        self.a.check_args(report)
        self.b.check_args(report)

    def children(self):
        return (self.a, self.b)


class _BinaryConstB(Expression):
    __slots__ = ('a', 'b', 'value', 'nargs')

    def check_args(self, report):
        self.a.check_args(report)

    def children(self):
        return (self.a,)


class _BinaryConstA(Expression):
    __slots__ = ('a', 'b', 'value', 'nargs')

    def check_args(self, report):
        self.b.check_args(report)

    def children(self):
        return (self.b,)


class Add11(_Binary):
    __slots__ = ()
    op = 'add'

    def __init__(self, a, b):
        self.a = a
        self.b = b
        self.value = a.value + b.value
        self.nargs = a.nargs + b.nargs

    def calc_gradient(self, data):
        self.a.calc_gradient(data)
        self.b.calc_gradient(data)

    def calc_gradient_m(self, data, m):
        self.a.calc_gradient_m(data, m)
        self.b.calc_gradient_m(data, m)


class Add10(_BinaryConstB):
    __slots__ = ()
    op = 'add'

    def __init__(self, a, b):
        self.a = a
        self.b = b
        self.value = a.value + b
        self.nargs = a.nargs

    def calc_gradient(self, data):
        self.a.calc_gradient(data)

    def calc_gradient_m(self, data, m):
        self.a.calc_gradient_m(data, m)


class Add01(_BinaryConstA):
    __slots__ = ()
    op = 'add'

    def __init__(self, a, b):
        self.a = a
        self.b = b
        self.value = a + b.value
        self.nargs = b.nargs

    def calc_gradient(self, data):
        self.b.calc_gradient(data)

    def calc_gradient_m(self, data, m):
        self.b.calc_gradient_m(data, m)


class Sub11(_Binary):
    __slots__ = ()
    op = 'sub'

    def __init__(self, a, b):
        self.a = a
        self.b = b
        self.value = a.value - b.value
        self.nargs = a.nargs + b.nargs

    def calc_gradient(self, data):
        self.a.calc_gradient(data)
        self.b.calc_gradient_m(data, -1.0)

    def calc_gradient_m(self, data, m):
        self.a.calc_gradient_m(data, m)
        self.b.calc_gradient_m(data, -m)


class Sub10(_BinaryConstB):
    __slots__ = ()
    op = 'sub'

    def __init__(self, a, b):
        self.a = a
        self.b = b
        self.value = a.value - b
        self.nargs = a.nargs

    def calc_gradient(self, data):
        self.a.calc_gradient(data)

    def calc_gradient_m(self, data, m):
        self.a.calc_gradient_m(data, m)


class Sub01(_BinaryConstA):
    __slots__ = ()
    op = 'sub'

    def __init__(self, a, b):
        self.a = a
        self.b = b
        self.value = a - b.value
        self.nargs = b.nargs

    def calc_gradient(self, data):
        self.b.calc_gradient_m(data, -1.0)

    def calc_gradient_m(self, data, m):
        self.b.calc_gradient_m(data, -m)


class Mul11(_Binary):
    __slots__ = ()
    op = 'mul'

    def __init__(self, a, b):
        self.a = a
        self.b = b
        self.value = a.value * b.value
        self.nargs = a.nargs + b.nargs

    def calc_gradient(self, data):
        self.a.calc_gradient_m(data, self.b.value)
        self.b.calc_gradient_m(data, self.a.value)

    def calc_gradient_m(self, data, m):
        self.a.calc_gradient_m(data, self.b.value * m)
        self.b.calc_gradient_m(data, self.a.value * m)


class Mul10(_BinaryConstB):
    __slots__ = ()
    op = 'mul'

    def __init__(self, a, b):
        self.a = a
        self.b = b
        self.value = a.value * b
        self.nargs = a.nargs

    def calc_gradient(self, data):
        self.a.calc_gradient_m(data, self.b)

    def calc_gradient_m(self, data, m):
        self.a.calc_gradient_m(data, self.b * m)


class Mul01(_BinaryConstA):
    __slots__ = ()
    op = 'mul'

    def __init__(self, a, b):
        self.a = a
        self.b = b
        self.value = a * b.value
        self.nargs = b.nargs

    def calc_gradient(self, data):
        self.b.calc_gradient_m(data, self.a)

    def calc_gradient_m(self, data, m):
        self.b.calc_gradient_m(data, self.a * m)


class Div11(_Binary):
    __slots__ = ()
    op = 'div'

    def __init__(self, a, b):
        self.a = a
        self.b = b
        try:
            self.value = a.value / b.value
        except ZeroDivisionError:
            self.value = _ieee_div(a.value, b.value)
        self.nargs = a.nargs + b.nargs

    def calc_gradient(self, data):
        inv = _ieee_div(1.0, self.b.value)
        self.a.calc_gradient_m(data, inv)
        self.b.calc_gradient_m(data, -self.value * inv)

    def calc_gradient_m(self, data, m):
        inv = _ieee_div(1.0, self.b.value)
        self.a.calc_gradient_m(data, inv * m)
        self.b.calc_gradient_m(data, -self.value * inv * m)

    def check_args(self, report):
        _Binary.check_args(self, report)
        if self.b.value == 0.0:
            report('div', self.a.value, self.b.value)


class Div10(_BinaryConstB):
    __slots__ = ()
    op = 'div'

    def __init__(self, a, b):
        self.a = a
        self.b = b
        try:
            self.value = a.value / b
        except ZeroDivisionError:
            self.value = _ieee_div(a.value, b)
        self.nargs = a.nargs

    def calc_gradient(self, data):
        self.a.calc_gradient_m(data, _ieee_div(1.0, self.b))

    def calc_gradient_m(self, data, m):
        self.a.calc_gradient_m(data, _ieee_div(1.0, self.b) * m)

    def check_args(self, report):
        self.a.check_args(report)
        if self.b == 0:
            report('div', self.a.value, self.b)


class Div01(_BinaryConstA):
    __slots__ = ()
    op = 'div'

    def __init__(self, a, b):
        self.a = a
        self.b = b
        try:
            self.value = a / b.value
        except ZeroDivisionError:
            self.value = _ieee_div(a, b.value)
        self.nargs = b.nargs

    def calc_gradient(self, data):
        self.b.calc_gradient_m(data, -_ieee_div(self.value, self.b.value))

    def calc_gradient_m(self, data, m):
        self.b.calc_gradient_m(data, -_ieee_div(self.value, self.b.value) * m)

    def check_args(self, report):
        self.b.check_args(report)
        if self.b.value == 0.0:
            report('div', self.a, self.b.value)


def _pow_dbase(a, b):
    return b * _ieee_pow(a, b - 1.0)


def _pow_dexp(a, r):
    # d(a**b)/db = log(a) * a**b; defined as 0 at a == 0 and NaN for a < 0.
    if a > 0.0:
        return math.log(a) * r
    if a == 0.0:
        return 0.0
    return math.nan


def _pow_domain_error(a, b):
    return a < 0.0 and b != int(b)


class Pow11(_Binary):
    __slots__ = ()
    op = 'pow'

    def __init__(self, a, b):
        self.a = a
        self.b = b
        self.value = _ieee_pow(a.value, b.value)
        self.nargs = a.nargs + b.nargs

    def calc_gradient(self, data):
        av = self.a.value
        bv = self.b.value
        self.a.calc_gradient_m(data, _pow_dbase(av, bv))
        self.b.calc_gradient_m(data, _pow_dexp(av, self.value))

    def calc_gradient_m(self, data, m):
        av = self.a.value
        bv = self.b.value
        self.a.calc_gradient_m(data, _pow_dbase(av, bv) * m)
        self.b.calc_gradient_m(data, _pow_dexp(av, self.value) * m)

    def check_args(self, report):
        _Binary.check_args(self, report)
        if _pow_domain_error(self.a.value, self.b.value):
            report('pow', self.a.value, self.b.value)


class Pow10(_BinaryConstB):
    __slots__ = ()
    op = 'pow'

    def __init__(self, a, b):
        self.a = a
        self.b = b
        self.value = _ieee_pow(a.value, b)
        self.nargs = a.nargs

    def calc_gradient(self, data):
        self.a.calc_gradient_m(data, _pow_dbase(self.a.value, self.b))

    def calc_gradient_m(self, data, m):
        self.a.calc_gradient_m(data, _pow_dbase(self.a.value, self.b) * m)

    def check_args(self, report):
        self.a.check_args(report)
        if _pow_domain_error(self.a.value, self.b):
            report('pow', self.a.value, self.b)


class Pow01(_BinaryConstA):
    __slots__ = ()
    op = 'pow'

    def __init__(self, a, b):
        self.a = a
        self.b = b
        self.value = _ieee_pow(a, b.value)
        self.nargs = b.nargs

    def calc_gradient(self, data):
        self.b.calc_gradient_m(data, _pow_dexp(self.a, self.value))

    def calc_gradient_m(self, data, m):
        self.b.calc_gradient_m(data, _pow_dexp(self.a, self.value) * m)

    def check_args(self, report):
        self.b.check_args(report)
        if _pow_domain_error(self.a, self.b.value):
            report('pow', self.a, self.b.value)


# --------------------------------------------------------------------------
# unary operations

class _Unary(Expression):
    __slots__ = ('a', 'value', 'nargs')
    primal = None
    grad = None
    domain = None

    def __init__(self, a):
        self.a = a
        self.value = self.primal(a.value)
        self.nargs = a.nargs

    def calc_gradient(self, data):
        self.a.calc_gradient_m(data, self.grad(self.a.value, self.value))

    def calc_gradient_m(self, data, m):
        self.a.calc_gradient_m(data, self.grad(self.a.value, self.value) * m)

    def check_args(self, report):
        self.a.check_args(report)
        if self.domain is not None and not self.domain(self.a.value):
            report(self.op, self.a.value)

    def children(self):
        return (self.a,)


def unary_operation(name, primal, grad, domain=None):
    """Create the node class for a unary function.

    ``grad(a, result)`` returns the derivative of ``primal`` at ``a``;
    ``result`` is passed so rules like exp or sqrt can reuse the primal.
    """
    cls = type(name.capitalize(), (_Unary,), {
        '__slots__': (),
        'op': name,
        'primal': staticmethod(primal),
        'grad': staticmethod(grad),
        'domain': staticmethod(domain) if domain is not None else None,
    })
    cls.__module__ = __name__
    return cls


def grad_neg(a, result):
    return -1.0


def grad_sin(a, result):
    return math.cos(a)


def grad_cos(a, result):
    return -math.sin(a)


def grad_exp(a, result):
    return result


def grad_log(a, result):
    return _ieee_div(1.0, a)


def grad_sqrt(a, result):
    return _ieee_div(0.5, result)


def grad_abs(a, result):
    # Subgradient 0 at the kink.
    if a > 0.0:
        return 1.0
    if a < 0.0:
        return -1.0
    return 0.0


_sin = _ieee_trig(math.sin)
_cos = _ieee_trig(math.cos)

Neg = unary_operation('neg', lambda x: -x, grad_neg)
Sin = unary_operation('sin', _sin, grad_sin)
Cos = unary_operation('cos', _cos, grad_cos)
Exp = unary_operation('exp', _ieee_exp, grad_exp)
Log = unary_operation('log', _ieee_log, grad_log, domain=lambda x: x > 0.0)
Sqrt = unary_operation('sqrt', _ieee_sqrt, grad_sqrt, domain=lambda x: x >= 0.0)
Abs = unary_operation('abs', abs, grad_abs)


def _dispatch(node_cls, fallback):
    def fn(x):
        if isinstance(x, Expression):
            return node_cls(x)
        return fallback(x)
    fn.__name__ = node_cls.op
    fn.__doc__ = f'{node_cls.op} of a number or an expression'
    return fn


sin = _dispatch(Sin, math.sin)
cos = _dispatch(Cos, math.cos)
exp = _dispatch(Exp, math.exp)
log = _dispatch(Log, math.log)
sqrt = _dispatch(Sqrt, math.sqrt)


# --------------------------------------------------------------------------
# catalog

@dataclass(frozen=True)
class Operation:
    """One catalog entry.

    Binary operations carry ``da(a, b, result)`` / ``db(a, b, result)`` and the
    three node classes (both active, constant right, constant left). Unary
    operations carry ``grad(a, result)`` and a single node class.
    """

    name: str
    arity: int
    apply: Callable
    nodes: tuple
    da: Optional[Callable] = None
    db: Optional[Callable] = None
    grad: Optional[Callable] = None


def _binary(name, fn, da, db, nodes):
    return Operation(name, 2, fn, nodes, da=da, db=db)


_CATALOG = (
    _binary('add', lambda a, b: a + b, lambda a, b, r: 1.0, lambda a, b, r: 1.0,
            (Add11, Add10, Add01)),
    _binary('sub', lambda a, b: a - b, lambda a, b, r: 1.0, lambda a, b, r: -1.0,
            (Sub11, Sub10, Sub01)),
    _binary('mul', lambda a, b: a * b, lambda a, b, r: b, lambda a, b, r: a,
            (Mul11, Mul10, Mul01)),
    _binary('div', lambda a, b: a / b, lambda a, b, r: _ieee_div(1.0, b),
            lambda a, b, r: -_ieee_div(r, b), (Div11, Div10, Div01)),
    _binary('pow', lambda a, b: a ** b, lambda a, b, r: _pow_dbase(a, b),
            lambda a, b, r: _pow_dexp(a, r), (Pow11, Pow10, Pow01)),
    Operation('neg', 1, lambda a: -a, (Neg,), grad=grad_neg),
    Operation('sin', 1, sin, (Sin,), grad=grad_sin),
    Operation('cos', 1, cos, (Cos,), grad=grad_cos),
    Operation('exp', 1, exp, (Exp,), grad=grad_exp),
    Operation('log', 1, log, (Log,), grad=grad_log),
    Operation('sqrt', 1, sqrt, (Sqrt,), grad=grad_sqrt),
    Operation('abs', 1, abs, (Abs,), grad=grad_abs),
)


def operation_catalog():
    return list(_CATALOG)


def census(expr, counts=None):
    """Count node operations in an expression tree (leaves excluded)."""
    if counts is None:
        counts = {}
    stack = [expr]
    while stack:
        node = stack.pop()
        if not isinstance(node, Expression) or node.op == 'leaf':
            continue
        counts[node.op] = counts.get(node.op, 0) + 1
        stack.extend(node.children())
    return counts
