"""Two-dimensional coupled viscous Burgers equations on the unit square.

Explicit Euler in time, first-order donor-cell upwinding for convection and
second-order central differences for diffusion. Boundary values come from
the closed-form solution. The solver is generic over the scalar type: it
only needs a ``new`` callable that turns an expression into a stored value
(identity for floats, ``tape.assign`` for reverse tapes, ``ForwardTape.new``
for tangents).

Inputs are the interior values of the initial ``u`` and ``v`` fields, in
row-major order, ``u`` first. The output is ``sqrt(sum(u*u + v*v))`` over
interior points of the final state.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .forward import ForwardTape, TangentReal
from .expressions import census, sqrt
from .tapes import make_tape


def _identity(x):
    return x


def _plain_input(value, k):
    return value


@dataclass
class BurgersConfig:
    nx: int = 61
    ny: int = 61
    steps: int = 32
    reynolds: float = 100.0
    dt: float = None
    # 'printed' uses the u formula for v's boundaries too; 'consistent' uses
    # the closed form that actually solves the v equation
    exact: str = 'printed'

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f'grid must be at least 3x3, got {self.nx}x{self.ny}')
        if self.steps < 0:
            raise ValueError('steps must be non-negative')
        if self.exact not in ('printed', 'consistent'):
            raise ValueError(f'unknown exact solution variant {self.exact!r}')
        if self.dt is None:
            self.dt = stable_dt(self.nx, self.ny, self.reynolds)

    @property
    def hx(self):
        return 1.0 / (self.nx - 1)

    @property
    def hy(self):
        return 1.0 / (self.ny - 1)

    @property
    def interior(self):
        return (self.nx - 2) * (self.ny - 2)

    @property
    def n_inputs(self):
        return 2 * self.interior

    def coefficients(self):
        dt, r = self.dt, self.reynolds
        hx, hy = self.hx, self.hy
        return dt / hx, dt / hy, dt / (r * hx * hx), dt / (r * hy * hy)


def stable_dt(nx, ny, reynolds, safety=0.8):
    """0.8 times the combined advection-diffusion bound for the initial state."""
    hx, hy = 1.0 / (nx - 1), 1.0 / (ny - 1)
    # max |u| = max |x + y| = 2, max |v| = max |x - y| = 1 on the unit square
    rate = 2.0 / hx + 1.0 / hy + 2.0 / (reynolds * hx * hx) + 2.0 / (reynolds * hy * hy)
    return safety / rate


def exact_u(x, y, t):
    return (x + y - 2.0 * x * t) / (1.0 - 2.0 * t * t)


def exact_v(x, y, t, variant='printed'):
    if variant == 'printed':
        return exact_u(x, y, t)
    return (x - y - 2.0 * y * t) / (1.0 - 2.0 * t * t)


def initial_state(cfg):
    """Initial ``u = x + y`` and ``v = x - y`` as nested float lists ``[i][j]``."""
    xs = [i / (cfg.nx - 1) for i in range(cfg.nx)]
    ys = [j / (cfg.ny - 1) for j in range(cfg.ny)]
    u = [[x + y for y in ys] for x in xs]
    v = [[x - y for y in ys] for x in xs]
    return u, v


def _set_boundary(u, v, cfg, t):
    nx, ny = cfg.nx, cfg.ny
    for i in range(nx):
        x = i / (nx - 1)
        for j in (0, ny - 1):
            y = j / (ny - 1)
            u[i][j] = exact_u(x, y, t)
            v[i][j] = exact_v(x, y, t, cfg.exact)
    for j in range(1, ny - 1):
        y = j / (ny - 1)
        for i in (0, nx - 1):
            x = i / (nx - 1)
            u[i][j] = exact_u(x, y, t)
            v[i][j] = exact_v(x, y, t, cfg.exact)


def point_update(f, uc, vc, fw, fe, fs, fn, coeffs):
    """Updated value of field ``f`` at one point from its four neighbours."""
    cx, cy, kx, ky = coeffs
    dx = f - fw if uc >= 0.0 else fe - f
    dy = f - fs if vc >= 0.0 else fn - f
    return (f - (cx * (uc * dx) + cy * (vc * dy))
            + (kx * (fe + fw - 2.0 * f) + ky * (fn + fs - 2.0 * f)))


def step(u, v, cfg, t, new=_identity):
    """One time step from time ``t``; returns the new ``(u, v)``."""
    coeffs = cfg.coefficients()
    nx, ny = cfg.nx, cfg.ny
    un = [row[:] for row in u]
    vn = [row[:] for row in v]
    for i in range(1, nx - 1):
        uw, uo, ue = u[i - 1], u[i], u[i + 1]
        vw, vo, ve = v[i - 1], v[i], v[i + 1]
        unr, vnr = un[i], vn[i]
        for j in range(1, ny - 1):
            uc, vc = uo[j], vo[j]
            unr[j] = new(point_update(uc, uc, vc, uw[j], ue[j], uo[j - 1], uo[j + 1], coeffs))
            vnr[j] = new(point_update(vc, uc, vc, vw[j], ve[j], vo[j - 1], vo[j + 1], coeffs))
    _set_boundary(un, vn, cfg, t + cfg.dt)
    return un, vn


def objective(u, v, cfg, new=_identity):
    """Discrete L2 norm of the interior, summed row by row."""
    s = 0.0
    for i in range(1, cfg.nx - 1):
        ui, vi = u[i], v[i]
        r = 0.0
        for j in range(1, cfg.ny - 1):
            a, b = ui[j], vi[j]
            r = new(r + a * a + b * b)
        s = new(s + r)
    return new(sqrt(s))


def simulate(cfg, new=_identity, make_input=_plain_input, initial=None):
    """Run the solver; returns ``(J, inputs)``.

    ``make_input(value, k)`` wraps the k-th interior input value.
    """
    u, v = initial_state(cfg) if initial is None else ([r[:] for r in initial[0]],
                                                       [r[:] for r in initial[1]])
    inputs = []
    k = 0
    for f in (u, v):
        for i in range(1, cfg.nx - 1):
            row = f[i]
            for j in range(1, cfg.ny - 1):
                row[j] = make_input(row[j], k)
                inputs.append(row[j])
                k += 1
    t = 0.0
    for _ in range(cfg.steps):
        u, v = step(u, v, cfg, t, new)
        t += cfg.dt
    return objective(u, v, cfg, new), inputs


def primal(cfg, initial=None):
    return simulate(cfg, initial=initial)[0]


def final_time(cfg):
    t = 0.0
    for _ in range(cfg.steps):
        t += cfg.dt
    return t


# ----------------------------------------------------------------------
# numpy kernels (same operation order as the scalar path)

def _input_arrays(cfg, dtype, initial=None):
    if initial is None:
        initial = initial_state(cfg)
    return np.array(initial[0], dtype=dtype), np.array(initial[1], dtype=dtype)


def _boundary_arrays(U, V, cfg, t):
    nx, ny = cfg.nx, cfg.ny
    for i in range(nx):
        x = i / (nx - 1)
        for j in (0, ny - 1):
            y = j / (ny - 1)
            U[i, j] = exact_u(x, y, t)
            V[i, j] = exact_v(x, y, t, cfg.exact)
    for j in range(1, ny - 1):
        y = j / (ny - 1)
        for i in (0, nx - 1):
            x = i / (nx - 1)
            U[i, j] = exact_u(x, y, t)
            V[i, j] = exact_v(x, y, t, cfg.exact)


def _array_update(F, U, V, coeffs):
    cx, cy, kx, ky = (F.dtype.type(c) for c in coeffs)
    two = F.dtype.type(2.0)
    f = F[1:-1, 1:-1]
    uc, vc = U[1:-1, 1:-1], V[1:-1, 1:-1]
    fw, fe, fs, fn = F[:-2, 1:-1], F[2:, 1:-1], F[1:-1, :-2], F[1:-1, 2:]
    dx = np.where(uc >= 0.0, f - fw, fe - f)
    dy = np.where(vc >= 0.0, f - fs, fn - f)
    return (f - (cx * (uc * dx) + cy * (vc * dy))
            + (kx * (fe + fw - two * f) + ky * (fn + fs - two * f)))


def evolve_array(cfg, U, V):
    """Vectorized time stepping on arrays of any float dtype; returns the final fields.

    Boundary values are computed in float64 like the scalar path, then
    converted.
    """
    U, V = U.copy(), V.copy()
    coeffs = cfg.coefficients()
    t = 0.0
    for _ in range(cfg.steps):
        un, vn = U.copy(), V.copy()
        un[1:-1, 1:-1] = _array_update(U, U, V, coeffs)
        vn[1:-1, 1:-1] = _array_update(V, U, V, coeffs)
        t += cfg.dt
        _boundary_arrays(un, vn, cfg, t)
        U, V = un, vn
    return U, V


def simulate_array(cfg, U, V):
    """Vectorized solver; returns J in the dtype of the inputs."""
    U, V = evolve_array(cfg, U, V)
    ui, vi = U[1:-1, 1:-1], V[1:-1, 1:-1]
    r = np.zeros(ui.shape[0], dtype=U.dtype)
    for j in range(ui.shape[1]):
        r = r + ui[:, j] * ui[:, j] + vi[:, j] * vi[:, j]
    s = U.dtype.type(0.0)
    for x in r:
        s = s + x
    return np.sqrt(s)


def primal_array(cfg, dtype=np.float64, initial=None):
    U, V = _input_arrays(cfg, dtype, initial)
    return simulate_array(cfg, U, V)


def _input_slot(cfg, k):
    m = cfg.ny - 2
    field_index, rest = divmod(k, cfg.interior)
    i, j = divmod(rest, m)
    return field_index, i + 1, j + 1


def gradient_fd(cfg, points, h=1e-6, dtype=np.longdouble, initial=None):
    """Central differences of J with respect to the listed input indices.

    Runs in extended precision by default so that cancellation noise stays
    well below the differencing truncation error.
    """
    U0, V0 = _input_arrays(cfg, dtype, initial)
    out = []
    for k in points:
        field_index, i, j = _input_slot(cfg, k)
        plus = [U0.copy(), V0.copy()]
        minus = [U0.copy(), V0.copy()]
        base = plus[field_index][i, j]
        plus[field_index][i, j] = base + dtype(h)
        minus[field_index][i, j] = base - dtype(h)
        hp = plus[field_index][i, j] - base
        hm = base - minus[field_index][i, j]
        jp = simulate_array(cfg, *plus)
        jm = simulate_array(cfg, *minus)
        out.append(float((jp - jm) / (hp + hm)))
    return out


def directional_fd(cfg, direction, h=1e-6, dtype=np.longdouble, initial=None):
    """Central difference of J along ``direction`` (one entry per input)."""
    U0, V0 = _input_arrays(cfg, dtype, initial)
    D = np.asarray(direction, dtype=dtype).reshape(2, cfg.nx - 2, cfg.ny - 2)
    step_ = dtype(h)
    plus, minus = [U0.copy(), V0.copy()], [U0.copy(), V0.copy()]
    for f in range(2):
        plus[f][1:-1, 1:-1] += step_ * D[f]
        minus[f][1:-1, 1:-1] -= step_ * D[f]
    return float((simulate_array(cfg, *plus) - simulate_array(cfg, *minus)) / (2 * step_))


# ----------------------------------------------------------------------
# differentiated runs

@dataclass
class GradientResult:
    objective: float
    gradient: list
    statistics: object = None
    record_seconds: float = float('nan')
    interpret_seconds: float = float('nan')
    tape: object = field(default=None, repr=False)
    inputs: list = field(default=None, repr=False)
    output: object = field(default=None, repr=False)

    @property
    def checksum(self):
        return math.fsum(self.gradient)


def tape_size(cfg):
    """Exact statement count and an upper bound on argument records.

    Used to preallocate unchecked tapes before timing starts. The argument
    bound is the leaf count of the stencil expressions, which only shrinks
    when passive or zero Jacobians are dropped.
    """
    leaf = TangentReal(1.0)
    stencil = point_update(leaf, leaf, leaf, leaf, leaf, leaf, leaf, (1.0, 1.0, 1.0, 1.0)).nargs
    interior, rows = cfg.interior, cfg.nx - 2
    statements = 2 * interior + 2 * interior * cfg.steps + interior + rows + 2
    arguments = 2 * interior * cfg.steps * stencil + 5 * interior + 2 * rows + 2
    return statements, arguments


def record(cfg, tape, initial=None):
    """Record the full run on ``tape``; returns ``(J, inputs)``."""
    new = tape.assign

    def make_input(value, k):
        return tape.input(value)

    with tape.recording():
        J, inputs = simulate(cfg, new, make_input, initial)
        tape.register_output(J)
    return J, inputs


def gradient_reverse(cfg, variant='chunk', config=None, tape=None, initial=None, keep_tape=False):
    """Adjoint of J with respect to all inputs, with timings and statistics."""
    if tape is None:
        tape = make_tape(variant, config)
        if not tape.checked:
            tape.resize(*tape_size(cfg))
    t0 = time.perf_counter()
    J, inputs = record(cfg, tape, initial)
    t1 = time.perf_counter()
    tape.set_gradient(J, 1.0)
    tape.evaluate()
    t2 = time.perf_counter()
    grad = [tape.get_gradient(x) for x in inputs]
    result = GradientResult(J.value, grad, tape.statistics(), t1 - t0, t2 - t1)
    if keep_tape:
        result.tape = tape
        result.inputs = inputs
        result.output = J
    return result


def directional_derivative(cfg, direction, ignore_invalid=True, initial=None):
    """``(J, dJ . direction)`` from one forward sweep."""
    fw = ForwardTape(ignore_invalid)

    def make_input(value, k):
        return TangentReal(value, direction[k])

    J, _ = simulate(cfg, fw.new, make_input, initial)
    return J.value, J.tangent


def operation_census(cfg):
    """Operation counts over every statement of a small forward run."""
    fw = ForwardTape()
    counts = {}

    def new(rhs):
        census(rhs, counts)
        return fw.new(rhs)

    simulate(cfg, new, lambda value, k: TangentReal(value))
    return counts
