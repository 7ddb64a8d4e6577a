"""Jacobi tapes for reverse-mode differentiation.

Four variants combine two storage schemes with two indexing schemes:

=====================  =================  =============  ======================
class                  storage            indexing       bytes per statement
=====================  =================  =============  ======================
``ChunkTape``          chunked, checked   linear         12k + 1
``ChunkIndexTape``     chunked, checked   reuse          12k + 5
``UncheckedTape``      preallocated       linear         12k + 1
``UncheckedIndexTape`` preallocated       reuse          12k + 5
=====================  =================  =============  ======================

The streams are chained as ``external functions -> statements -> arguments
-> terminal``. For linear indexing the terminal is the index counter itself,
which lets the reverse sweep recover left-hand-side indices by decrementing.

Typical use::

    tape = ChunkTape()
    with tape.recording():
        x = tape.input(3.0)
        y = tape.assign(x * x + 1.0)
        tape.register_output(y)
    tape.set_gradient(y, 1.0)
    tape.evaluate()
    tape.get_gradient(x)   # 6.0
"""

import math
from contextlib import contextmanager
from dataclasses import dataclass, field

from .chunk_store import (
    DEFAULT_CHUNK_CAPACITY, ChunkStream, Counter, TapeError, UncheckedChunkStream, itemsize,
)
from .expressions import Expression
from .index_manager import LinearIndexManager, ReuseIndexManager

MAX_ARGUMENTS = 255

SWITCH_NAMES = {
    'check-args': 'check_expression_arguments',
    'ignore-invalid': 'ignore_invalid_jacobians',
    'ignore-zero': 'ignore_zero_jacobians',
    'check-activity': 'check_tape_activity',
    'skip-zero-adjoints': 'skip_zero_adjoints',
}


@dataclass
class TapeConfig:
    """Behavioural switches. None of them changes gradient values."""

    check_expression_arguments: bool = False
    ignore_invalid_jacobians: bool = False
    ignore_zero_jacobians: bool = True
    check_tape_activity: bool = True
    skip_zero_adjoints: bool = True
    chunk_capacity: int = DEFAULT_CHUNK_CAPACITY

    @staticmethod
    def switches():
        return tuple(SWITCH_NAMES.values())

    @property
    def mask(self):
        return sum(1 << i for i, name in enumerate(self.switches()) if getattr(self, name))

    @classmethod
    def from_mask(cls, mask, **kwargs):
        flags = {name: bool(mask >> i & 1) for i, name in enumerate(cls.switches())}
        flags.update(kwargs)
        return cls(**flags)


class ActiveReal(Expression):
    """Active value for linear-index tapes: a primal and an index, nothing else.

    All differentiation work is forwarded to ``tape``. Plain relocation (for
    example ``copy.copy`` or pickling) keeps the index, which is harmless
    because linear indices are never freed.
    """

    __slots__ = ('value', 'index', 'tape')
    op = 'leaf'
    nargs = 1

    def __init__(self, value=0.0, tape=None, index=0):
        self.value = value
        self.tape = tape
        self.index = index

    def calc_gradient(self, data):
        data.push_jacobi(1.0, self.value, self.index)

    def calc_gradient_m(self, data, m):
        data.push_jacobi(m, self.value, self.index)

    def check_args(self, report):
        pass

    def children(self):
        return ()

    def assign(self, rhs):
        """In-place assignment ``self = rhs``; records one statement."""
        self.tape.store(self, rhs)
        return self

    @property
    def gradient(self):
        return self.tape.get_gradient(self)

    @gradient.setter
    def gradient(self, v):
        self.tape.set_gradient(self, v)

    def __repr__(self):
        return f'{type(self).__name__}({self.value!r}, index={self.index})'


class ActiveRealIndex(ActiveReal):
    """Active value for reuse-index tapes; releases its index when collected.

    Every live object must own a distinct index, so copies go through the
    tape and record a statement.
    """

    __slots__ = ()

    def __copy__(self):
        return self.tape.assign(self)

    def __deepcopy__(self, memo):
        return self.tape.assign(self)

    def __del__(self):
        index = self.index
        if index:
            try:
                self.tape.index_manager.free_index(index)
            except Exception:
                pass


class ExternalFunction:
    """User callback evaluated during the reverse sweep.

    ``callback(tape, data)`` runs when the sweep crosses the recorded
    position and may read or update ``tape.adjoints``. ``delete(data)``
    runs once when the record is discarded by a tape reset.
    """

    __slots__ = ('callback', 'data', 'delete', '_deleted')

    def __init__(self, callback, data=None, delete=None):
        self.callback = callback
        self.data = data
        self.delete = delete
        self._deleted = False

    def evaluate(self, tape):
        self.callback(tape, self.data)

    def destroy(self):
        if not self._deleted:
            self._deleted = True
            if self.delete is not None:
                self.delete(self.data)


@dataclass
class TapeStatistics:
    variant: str
    statements: int = 0
    arguments: int = 0
    ext_funcs: int = 0
    statement_bytes: int = 0
    argument_bytes: int = 0
    adjoint_slots: int = 0
    max_index: int = 0
    streams: dict = field(default_factory=dict)
    argument_warnings: int = 0

    CSV_FIELDS = ('variant', 'statements', 'arguments', 'extFuncs', 'tapeBytes',
                  'adjointSlots', 'bytesPerStatement')

    @property
    def tape_bytes(self):
        return self.statement_bytes + self.argument_bytes

    @property
    def bytes_per_statement(self):
        return self.tape_bytes / self.statements if self.statements else 0.0

    def csv_values(self):
        return (self.variant, self.statements, self.arguments, self.ext_funcs,
                self.tape_bytes, self.adjoint_slots, self.bytes_per_statement)

    def csv_header(self):
        return ','.join(self.CSV_FIELDS)

    def csv_row(self):
        return ','.join(str(v) for v in self.csv_values())

    def as_text(self):
        lines = [f'{k}={v}' for k, v in zip(self.CSV_FIELDS, self.csv_values())]
        lines.append(f'statementBytes={self.statement_bytes}')
        lines.append(f'argumentBytes={self.argument_bytes}')
        lines.append(f'maxIndex={self.max_index}')
        lines.append(f'argumentWarnings={self.argument_warnings}')
        for name, st in self.streams.items():
            for k, v in st.items():
                lines.append(f'{name}.{k}={v}')
        return '\n'.join(lines)


class JacobiTape:
    """Shared machinery of the four tape variants.

    Subclasses fix ``reuse`` (index scheme) and ``checked`` (storage scheme).
    """

    name = 'jacobi'
    reuse = False
    checked = True
    scalar_type = ActiveReal

    def __init__(self, config=None, debug=False):
        self.config = TapeConfig() if config is None else config
        self.debug = debug
        self.adjoints = []
        self.argument_warnings = 0
        self.argument_handler = None
        self._active = False
        self._build_streams()
        self.configure(self.config)

    # ------------------------------------------------------------------
    # construction

    def _build_streams(self):
        cap = self.config.chunk_capacity
        stream = ChunkStream if self.checked else UncheckedChunkStream
        kw = {'capacity': cap} if self.checked else {}
        if self.reuse:
            self.index_manager = ReuseIndexManager(debug=self.debug)
            terminal = Counter()
            stmt_fields = 'Bi'
        else:
            self.index_manager = LinearIndexManager()
            terminal = self.index_manager
            stmt_fields = 'B'
        self._args = stream('di', child=terminal, name='arguments', **kw)
        self._stmts = stream(stmt_fields, child=self._args, name='statements', **kw)
        self._ext = stream('OO', child=self._stmts, name='external', **kw)
        self._terminal = terminal
        self._bind()

    def _bind(self):
        self._ac = self._args.current
        self._jac, self._idx = self._ac.fields
        self._sc = self._stmts.current
        self._cnt = self._sc.fields[0]
        self._lhs = self._sc.fields[1] if self.reuse else None

    def configure(self, config):
        """Apply switch settings; chunk capacity only affects new chunks."""
        self.config = config
        self._check_activity = config.check_tape_activity
        self._check_args = config.check_expression_arguments
        zero, invalid = config.ignore_zero_jacobians, config.ignore_invalid_jacobians
        if zero and invalid:
            self.push_jacobi = self._push_filtered
        elif zero:
            self.push_jacobi = self._push_nonzero
        elif invalid:
            self.push_jacobi = self._push_finite
        else:
            self.push_jacobi = self._push_plain
        if self.checked:
            for stream in (self._args, self._stmts, self._ext):
                stream.capacity = config.chunk_capacity

    def resize(self, statements, arguments, ext_funcs=0):
        """Preallocate storage (unchecked tapes only)."""
        if self.checked:
            raise TapeError(f'{self.name}: resize is only available on unchecked tapes')
        if self._ext.current.used or self._stmts.current.used or self._args.current.used:
            raise TapeError(f'{self.name}: resize requires an empty tape')
        self._args.resize(arguments)
        self._stmts.resize(statements)
        self._ext.resize(ext_funcs)
        self._bind()

    # ------------------------------------------------------------------
    # values

    def variable(self, value=0.0):
        """New passive value bound to this tape (nothing is recorded)."""
        return self.scalar_type(value, self)

    def input(self, value):
        x = self.scalar_type(value, self)
        self.register_input(x)
        return x

    def assign(self, rhs):
        """Record ``lhs = rhs`` into a fresh active value and return it."""
        lhs = self.scalar_type(0.0, self)
        self.store(lhs, rhs)
        return lhs

    # ------------------------------------------------------------------
    # recording

    def push_jacobi(self, jacobian, value, index):  # replaced per instance by configure()
        raise NotImplementedError

    def _push_plain(self, jac, value, index):
        if index:
            c = self._ac
            n = c.used
            self._jac[n] = jac
            self._idx[n] = index
            c.used = n + 1

    def _push_nonzero(self, jac, value, index):
        if index and jac != 0.0:
            c = self._ac
            n = c.used
            self._jac[n] = jac
            self._idx[n] = index
            c.used = n + 1

    def _push_finite(self, jac, value, index):
        if index and math.isfinite(jac):
            c = self._ac
            n = c.used
            self._jac[n] = jac
            self._idx[n] = index
            c.used = n + 1

    def _push_filtered(self, jac, value, index):
        if index and jac != 0.0 and math.isfinite(jac):
            c = self._ac
            n = c.used
            self._jac[n] = jac
            self._idx[n] = index
            c.used = n + 1

    def _report_argument(self, op, *values):
        if self.argument_handler is not None:
            self.argument_handler(op, *values)
        else:
            self.argument_warnings += 1

    def store(self, lhs, rhs):
        """Record the assignment ``lhs = rhs``.

        The right-hand side is propagated and its primal taken before ``lhs``
        changes, so ``lhs`` may appear in ``rhs``.
        """
        if not isinstance(rhs, Expression):
            self._store_constant(lhs, rhs)
            return
        if self._check_activity and not self._active:
            self._release(lhs)
            lhs.value = rhs.value
            return
        ac = self._ac
        if self.checked:
            if ac.used + rhs.nargs > ac.allocated:
                self._args.reserve(rhs.nargs)
                self._bind()
                ac = self._ac
            if self._sc.used >= self._sc.allocated:
                self._stmts.reserve(1)
                self._bind()
                ac = self._ac
        if self._check_args:
            rhs.check_args(self._report_argument)
        start = ac.used
        if self.checked:
            rhs.calc_gradient(self)
        else:
            try:
                rhs.calc_gradient(self)
            except IndexError:
                ac.used = start
                raise TapeError(f'{self.name}: preallocated argument storage exhausted') from None
        argc = ac.used - start
        if argc > MAX_ARGUMENTS:
            ac.used = start
            raise TapeError(f'statement with {argc} active arguments; at most '
                            f'{MAX_ARGUMENTS} are supported')
        self._push_statement(lhs, argc, rhs.value)

    def _push_statement(self, lhs, argc, value):
        sc = self._sc
        n = sc.used
        if self.reuse:
            if argc == 0:
                self._release(lhs)
                lhs.value = value
                return
            index = lhs.index
            if not index:
                index = self.index_manager.assign_index()
            try:
                self._cnt[n] = argc
                self._lhs[n] = index
            except IndexError:
                raise TapeError(f'{self.name}: preallocated statement storage exhausted') from None
            sc.used = n + 1
            self._terminal.count += 1
        else:
            try:
                self._cnt[n] = argc
            except IndexError:
                raise TapeError(f'{self.name}: preallocated statement storage exhausted') from None
            sc.used = n + 1
            index = self.index_manager.assign_index()
        lhs.index = index
        lhs.value = value

    def _release(self, lhs):
        if self.reuse and lhs.index:
            self.index_manager.free_index(lhs.index)
        lhs.index = 0

    def _store_constant(self, lhs, value):
        if self._check_activity and not self._active:
            self._release(lhs)
            lhs.value = value
            return
        if self.checked and not self.reuse:
            self._stmts.reserve(1)
            self._bind()
        self._push_statement(lhs, 0, value)

    def register_input(self, x):
        """Declare ``x`` an independent variable with a fresh index."""
        if self.reuse:
            old = x.index
            x.index = self.index_manager.assign_index()
            if old:
                self.index_manager.free_index(old)
        else:
            if self.checked:
                self._stmts.reserve(1)
                self._bind()
            self._push_statement(x, 0, x.value)

    def register_output(self, y):
        """Pin ``y`` with a copy statement so later writes cannot alias it."""
        self.store(y, y)

    def set_active(self):
        self._active = True

    def set_passive(self):
        self._active = False

    def is_active(self):
        return self._active

    @contextmanager
    def recording(self):
        self.set_active()
        try:
            yield self
        finally:
            self.set_passive()

    def push_external_function(self, fn):
        """Record ``fn`` (an :class:`ExternalFunction`) at the current position."""
        if self.checked:
            self._ext.reserve(1)
        pos = self._stmts.get_position()
        try:
            self._ext.push(fn, pos)
        except IndexError:
            raise TapeError(f'{self.name}: preallocated external function storage exhausted') from None

    # ------------------------------------------------------------------
    # positions

    def get_position(self):
        return self._ext.get_position()

    def zero_position(self):
        return self._ext.zero_position()

    def reset_to(self, position):
        """Discard everything recorded after ``position``."""
        current = self.get_position()
        if position > current:
            raise TapeError(f'reset position {position} lies beyond the tape end {current}')
        for seg in self._ext.segments_reverse(current, position):
            data = seg.chunk.fields[0]
            for n in range(seg.end - 1, seg.begin - 1, -1):
                data[n].destroy()
                data[n] = None
        self._ext.reset(position)
        self._bind()
        self.clear_adjoints()

    def reset(self):
        self.reset_to(self.zero_position())

    # ------------------------------------------------------------------
    # adjoints

    def adjoint_size(self):
        return self.index_manager.max_live + 1

    def _ensure_adjoints(self):
        need = self.adjoint_size()
        have = len(self.adjoints)
        if have < need:
            self.adjoints.extend([0.0] * (need - have))

    def clear_adjoints(self):
        adj = self.adjoints
        for i in range(len(adj)):
            adj[i] = 0.0

    def get_gradient(self, x):
        index = x.index if isinstance(x, ActiveReal) else x
        if 0 < index < len(self.adjoints):
            return self.adjoints[index]
        return 0.0

    def set_gradient(self, x, value):
        index = x.index if isinstance(x, ActiveReal) else x
        if not index:
            raise TapeError('cannot seed the adjoint of a passive value')
        self._ensure_adjoints()
        self.adjoints[index] = value

    # ------------------------------------------------------------------
    # reverse interpretation

    def evaluate(self, start=None, end=None):
        """Reverse sweep over ``[end, start)``; defaults to the whole tape."""
        if start is None:
            start = self.get_position()
        if end is None:
            end = self.zero_position()
        if end > start:
            raise TapeError(f'evaluate range runs backwards: {end} > {start}')
        self._ensure_adjoints()
        cur = start.child
        for seg in self._ext.segments_reverse(start, end):
            funcs, positions = seg.chunk.fields
            for n in range(seg.end - 1, seg.begin - 1, -1):
                pos = positions[n]
                self._evaluate_statements(cur, pos)
                funcs[n].evaluate(self)
                cur = pos
        self._evaluate_statements(cur, end.child)

    def evaluate_full(self):
        self.evaluate(self.get_position(), self.zero_position())

    def _evaluate_statements(self, start, end):
        if start == end:
            return
        adj = self.adjoints
        skip = self.config.skip_zero_adjoints
        reuse = self.reuse
        args = self._args
        for seg in self._stmts.segments_reverse(start, end):
            counts = seg.chunk.fields[0]
            if reuse:
                lhs_indices = seg.chunk.fields[1]
            else:
                lhs = seg.child_from.child
            arg_segments = args.segments_reverse(seg.child_from, seg.child_to)
            jac = idx = None
            p = begin = 0
            for s in range(seg.end - 1, seg.begin - 1, -1):
                k = counts[s]
                if not k:
                    # input or constant: nothing to propagate, and the slot
                    # keeps its adjoint so inputs can be harvested afterwards
                    lhs -= 1
                    continue
                if reuse:
                    lhs = lhs_indices[s]
                a = adj[lhs]
                adj[lhs] = 0.0
                lhs -= 1
                while p - k < begin:
                    aseg = next(arg_segments)
                    jac, idx = aseg.chunk.fields
                    p, begin = aseg.end, aseg.begin
                if skip and a == 0.0:
                    p -= k
                    continue
                for q in range(p - 1, p - k - 1, -1):
                    adj[idx[q]] += jac[q] * a
                p -= k

    # ------------------------------------------------------------------
    # statistics

    def statistics(self):
        statements = self._stmts.used_entries()
        arguments = self._args.used_entries()
        stmt_entry = sum(itemsize(t) for t in self._stmts.typecodes)
        arg_entry = sum(itemsize(t) for t in self._args.typecodes)
        return TapeStatistics(
            variant=self.name,
            statements=statements,
            arguments=arguments,
            ext_funcs=self._ext.used_entries(),
            statement_bytes=statements * stmt_entry,
            argument_bytes=arguments * arg_entry,
            adjoint_slots=len(self.adjoints),
            max_index=self.index_manager.max_live,
            streams={
                'statements': self._stmts.statistics(),
                'arguments': self._args.statistics(),
                'external': self._ext.statistics(),
                'index': self.index_manager.statistics(),
            },
            argument_warnings=self.argument_warnings,
        )

    def streams(self):
        """The stream chain, outermost first (read-only inspection)."""
        return self._ext, self._stmts, self._args


class ChunkTape(JacobiTape):
    name = 'chunk'


class ChunkIndexTape(JacobiTape):
    name = 'chunk-index'
    reuse = True
    scalar_type = ActiveRealIndex


class UncheckedTape(JacobiTape):
    name = 'unchecked'
    checked = False


class UncheckedIndexTape(JacobiTape):
    name = 'unchecked-index'
    reuse = True
    checked = False
    scalar_type = ActiveRealIndex


TAPES = {cls.name: cls for cls in (ChunkTape, ChunkIndexTape, UncheckedTape, UncheckedIndexTape)}


def make_tape(variant, config=None, **kwargs):
    try:
        cls = TAPES[variant]
    except KeyError:
        raise ValueError(f'unknown tape variant {variant!r}; choose from {sorted(TAPES)}') from None
    return cls(config, **kwargs)
