"""Tapeless forward mode.

A :class:`TangentReal` carries a primal and a tangent. Assigning an
expression through :class:`ForwardTape` propagates it once and folds every
leaf's Jacobian times tangent into a per-statement accumulator, so nothing
is stored.
"""

import math

from .expressions import Expression


class TangentReal(Expression):
    __slots__ = ('value', 'tangent')
    op = 'leaf'
    nargs = 1

    def __init__(self, value=0.0, tangent=0.0):
        self.value = value
        self.tangent = tangent

    def calc_gradient(self, data):
        data.push_jacobi(1.0, self.value, self.tangent)

    def calc_gradient_m(self, data, m):
        data.push_jacobi(m, self.value, self.tangent)

    def check_args(self, report):
        pass

    def children(self):
        return ()

    def __repr__(self):
        return f'TangentReal({self.value!r}, tangent={self.tangent!r})'


class ForwardTape:
    """Propagation context for :class:`TangentReal` assignments.

    With ``ignore_invalid`` (the default) non-finite Jacobians are dropped,
    so a NaN partial of an argument with zero tangent cannot poison the
    result.
    """

    name = 'forward'

    def __init__(self, ignore_invalid=True):
        self.ignore_invalid = ignore_invalid
        self._acc = 0.0
        self.push_jacobi = self._push_checked if ignore_invalid else self._push_plain

    def _push_plain(self, jac, value, tangent):
        self._acc += jac * tangent

    def _push_checked(self, jac, value, tangent):
        if math.isfinite(jac):
            self._acc += jac * tangent

    def store(self, lhs, rhs):
        if isinstance(rhs, Expression):
            self._acc = 0.0
            rhs.calc_gradient(self)
            lhs.tangent = self._acc
            lhs.value = rhs.value
        else:
            lhs.value = rhs
            lhs.tangent = 0.0

    def new(self, rhs):
        lhs = TangentReal()
        self.store(lhs, rhs)
        return lhs

    def variable(self, value=0.0, tangent=0.0):
        return TangentReal(value, tangent)


def get_tangent(x):
    return x.tangent if isinstance(x, TangentReal) else 0.0


def set_tangent(x, tangent):
    x.tangent = tangent
