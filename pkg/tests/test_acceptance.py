"""Acceptance suite: ten criteria, one PASS/FAIL line each.

Each test runs inside ``criterion(...)``, which times the body, enforces the
stated runtime limit and prints a summary line even when output capture is
on. The desk-scale Burgers tapes are recorded once (timed as part of
criterion 3) and reused by criteria 7 and 8.
"""

import io
import math
import random
import time
from contextlib import contextmanager

import pytest

from jtape import (
    ChunkTape, Expression, ExternalFunction, ReuseIndexManager, TapeConfig,
    UncheckedTape, make_tape, propagate_unit,
)
from jtape.burgers import (
    BurgersConfig, directional_derivative, gradient_fd, gradient_reverse,
)
from jtape.cli import RunSpec, run_benchmark
from programs import execute, random_program, run_tape

REVERSE = ('chunk', 'chunk-index', 'unchecked', 'unchecked-index')
DESK = BurgersConfig(nx=61, ny=61, steps=32)


@pytest.fixture
def criterion(capsys):
    @contextmanager
    def run(number, title, limit, offset=0.0):
        notes = []
        t0 = time.perf_counter()
        ok = False
        try:
            yield notes
            elapsed = time.perf_counter() - t0 + offset
            notes.append(f'{elapsed:.2f}s of {limit}s')
            assert elapsed < limit, f'criterion {number} took {elapsed:.1f}s, limit {limit}s'
            ok = True
        finally:
            with capsys.disabled():
                detail = '; '.join(notes)
                print(f'\n[acceptance {number:2d}] {"PASS" if ok else "FAIL"}  {title}  ({detail})')
    return run


def _fresh(variant, config=None):
    t = make_tape(variant, config)
    if not t.checked:
        t.resize(10_000, 200_000, 100)
    return t


def _relerr(a, b):
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale else 0.0


@pytest.fixture(scope='module')
def desk_runs():
    """Desk-scale reverse gradients on every variant, tapes kept."""
    t0 = time.perf_counter()
    runs = {v: gradient_reverse(DESK, v, keep_tape=True) for v in REVERSE}
    return runs, time.perf_counter() - t0


# 1 ----------------------------------------------------------------------

def test_01_expression_aggregation(criterion):
    with criterion(1, 'one statement, four arguments for ((a+b)*(c-d))**2', 1.0) as notes:
        for variant in REVERSE:
            t = _fresh(variant)
            with t.recording():
                a, b, c, d = (t.input(v) for v in (1.0, 2.0, 5.0, 3.0))
                before = t.statistics()
                w = t.assign(((a + b) * (c - d)) ** 2)
                after = t.statistics()
            assert after.statements - before.statements == 1, variant
            assert after.arguments - before.arguments == 4, variant
            assert w.value == 36.0

            # the same computation split into single-operation statements
            s = _fresh(variant)
            with s.recording():
                a, b, c, d = (s.input(v) for v in (1.0, 2.0, 5.0, 3.0))
                before = s.statistics()
                t1 = s.assign(a + b)
                t2 = s.assign(c - d)
                t3 = s.assign(t1 * t2)
                s.assign(t3 ** 2)
                after = s.statistics()
            assert after.statements - before.statements == 4, variant
            assert after.arguments - before.arguments == 7, variant
        notes.append('aggregated 1/4, split 4/7 on all variants')


# 2 ----------------------------------------------------------------------

class _ArgumentCounter:
    def __init__(self, config):
        self.k = 0
        self.config = config

    def push_jacobi(self, jac, value, index):
        if not index:
            return
        if self.config.ignore_zero_jacobians and jac == 0.0:
            return
        if self.config.ignore_invalid_jacobians and not math.isfinite(jac):
            return
        self.k += 1


def _expected_bytes(tape, program):
    """Record ``program`` on ``tape`` while predicting its byte count."""
    expected = [0]
    base = 5 if tape.reuse else 1
    store = tape.store

    def counted_store(lhs, rhs):
        if tape.is_active():
            if isinstance(rhs, Expression):
                counter = _ArgumentCounter(tape.config)
                propagate_unit(rhs, counter)
                # reuse tapes drop argument-free statements, linear ones keep them
                if not (tape.reuse and counter.k == 0):
                    expected[0] += 12 * counter.k + base
            elif not tape.reuse:
                expected[0] += 1
        store(lhs, rhs)

    tape.store = counted_store
    run_tape(program, tape)
    if not tape.reuse:
        expected[0] += len(program['inputs'])
    return expected[0]


def test_02_memory_accounting(criterion):
    with criterion(2, 'tape bytes equal sum of 12k+1 (linear) / 12k+5 (reuse)', 1.0) as notes:
        checked = 0
        for seed in range(20):
            program = random_program(1000 + seed)
            for variant in REVERSE:
                t = _fresh(variant)
                expected = _expected_bytes(t, program)
                stats = t.statistics()
                assert stats.statement_bytes + stats.argument_bytes == expected, (seed, variant)
                checked += 1
        notes.append(f'{checked} recordings exact')


# 3 ----------------------------------------------------------------------

def test_03_desk_scale_gradient(criterion, desk_runs):
    runs, record_seconds = desk_runs
    with criterion(3, 'Burgers 61x61x32: FD, forward duality, variants bitwise', 60.0,
                   offset=record_seconds) as notes:
        ref = runs['chunk'].gradient
        for variant in REVERSE:
            assert runs[variant].gradient == ref, f'{variant} differs from chunk'

        rng = random.Random(2024)
        points = rng.sample(range(DESK.n_inputs), 20)
        fd = gradient_fd(DESK, points)
        fd_err = max(_relerr(ref[k], f) for k, f in zip(points, fd))
        assert fd_err <= 1e-5, f'max FD relative error {fd_err:.3e}'

        fw_err = 0.0
        for _ in range(5):
            direction = [rng.uniform(-1.0, 1.0) for _ in range(DESK.n_inputs)]
            J, dJ = directional_derivative(DESK, direction)
            assert J == runs['chunk'].objective
            fw_err = max(fw_err, _relerr(dJ, math.fsum(g * d for g, d in zip(ref, direction))))
        assert fw_err <= 1e-10, f'max forward/reverse relative error {fw_err:.3e}'
        notes.append(f'fd {fd_err:.1e}, forward {fw_err:.1e}, checksum {runs["chunk"].checksum:.17g}')


# 4 ----------------------------------------------------------------------

def test_04_switch_neutrality(criterion):
    cfg = BurgersConfig(nx=31, ny=31, steps=8)
    with criterion(4, 'all 32 switch combinations give identical checksums (31x31x8)', 60.0) as notes:
        checksums = set()
        reference = None
        for mask in range(32):
            res = gradient_reverse(cfg, 'chunk', TapeConfig.from_mask(mask))
            checksums.add(res.checksum.hex())
            if reference is None:
                reference = res.gradient
            assert res.gradient == reference, f'mask {mask} changed the gradient'
        assert len(checksums) == 1
        notes.append(f'32 masks, checksum {float.fromhex(checksums.pop()):.17g}')


# 5 ----------------------------------------------------------------------

def test_05_chunk_capacity_neutrality(criterion):
    with criterion(5, 'chunk capacities 1024 / 32768 / 2^21 give identical gradients', 60.0) as notes:
        reference = None
        timings = []
        for capacity in (1024, 32768, 2 ** 21):
            res = gradient_reverse(DESK, 'chunk', TapeConfig(chunk_capacity=capacity))
            if reference is None:
                reference = res.gradient
            assert res.gradient == reference, f'capacity {capacity} changed the gradient'
            timings.append(f'{capacity}: rec {res.record_seconds:.2f}s int {res.interpret_seconds:.3f}s')
        notes.append(', '.join(timings))


# 6 ----------------------------------------------------------------------

class _ShadowMixin:
    """Also remembers the lhs index of every recorded statement."""

    def _push_statement(self, lhs, argc, value):
        super()._push_statement(lhs, argc, value)
        self.shadow_lhs.append(lhs.index)


class _ShadowChunkTape(_ShadowMixin, ChunkTape):
    pass


class _ShadowUncheckedTape(_ShadowMixin, UncheckedTape):
    pass


def _shadow_sweep(tape, seeds):
    """Reverse sweep driven by the explicitly recorded lhs indices."""
    _, stmts, args = tape.streams()
    counts = [e[0] for e in stmts.entries(stmts.zero_position(), stmts.get_position())]
    jacobians = list(args.entries(args.zero_position(), args.get_position()))
    adj = [0.0] * (max(tape.shadow_lhs) + 1)
    for index, value in seeds:
        adj[index] = value
    p = len(jacobians)
    for k, lhs in zip(reversed(counts), reversed(tape.shadow_lhs)):
        if not k:
            continue
        a = adj[lhs]
        adj[lhs] = 0.0
        if a != 0.0:
            for jac, index in reversed(jacobians[p - k:p]):
                adj[index] += jac * a
        p -= k
    assert p == 0
    return adj


def test_06_linear_index_reconstruction(criterion):
    with criterion(6, 'decrement-based lhs reconstruction equals shadow lhs sweep', 5.0) as notes:
        compared = 0
        for seed in range(100):
            program = random_program(5000 + seed)
            cls = (_ShadowChunkTape, _ShadowUncheckedTape)[seed % 2]
            t = cls(TapeConfig(chunk_capacity=(7, 1024)[seed % 3 == 0]))
            t.shadow_lhs = []
            if not t.checked:
                t.resize(10_000, 200_000, 10)

            def store(lhs, rhs):
                t.store(lhs, rhs)
                return lhs

            with t.recording():
                inputs, outputs = execute(program, t.input, t.assign, store)
            seeds = [(y.index, 1.0 + n) for n, y in enumerate(outputs) if y.index]
            expected = _shadow_sweep(t, seeds)
            t.clear_adjoints()
            for index, value in seeds:
                t.set_gradient(index, value)
            t.evaluate()
            got = [t.get_gradient(x) for x in inputs]
            want = [expected[x.index] for x in inputs]
            assert [g.hex() for g in got] == [w.hex() for w in want], f'program {seed}'
            compared += 1
        notes.append(f'{compared} programs bitwise equal')


# 7 ----------------------------------------------------------------------

def test_07_index_reuse(criterion, desk_runs):
    runs, _ = desk_runs
    with criterion(7, 'index reuse: stress, create/destroy/create, adjoint size', 10.0) as notes:
        rng = random.Random(7)
        manager = ReuseIndexManager()
        live, live_set = [], set()
        for _ in range(10 ** 6):
            r = rng.random()
            if r < 0.35 or not live:            # create
                i = manager.assign_index()
            elif r < 0.5:                        # copy: the duplicate gets its own index
                i = manager.assign_index()
            else:                                # destroy a random live value
                k = rng.randrange(len(live))
                live[k], live[-1] = live[-1], live[k]
                gone = live.pop()
                live_set.remove(gone)
                manager.free_index(gone)
                continue
            assert i > 0 and i not in live_set
            live.append(i)
            live_set.add(i)
        assert manager.max_live >= len(live)

        n = 5000
        m = ReuseIndexManager()
        first = [m.assign_index() for _ in range(n)]
        for i in first:
            m.free_index(i)
        second = [m.assign_index() for _ in range(n)]
        assert m.max_live == n and sorted(second) == sorted(first)

        linear = runs['chunk'].statistics.adjoint_slots
        reuse = runs['chunk-index'].statistics.adjoint_slots
        assert reuse <= linear
        assert runs['unchecked-index'].statistics.adjoint_slots <= runs['unchecked'].statistics.adjoint_slots
        notes.append(f'stress peak {manager.max_live}, adjoint slots reuse {reuse} vs linear {linear}')


# 8 ----------------------------------------------------------------------

def test_08_repeated_sweeps(criterion, desk_runs):
    runs, _ = desk_runs
    with criterion(8, 'five sweeps over one recorded Burgers tape are identical', 60.0) as notes:
        res = runs['chunk-index']
        tape = res.tape
        sweeps = []
        for _ in range(5):
            tape.clear_adjoints()
            tape.set_gradient(res.output, 1.0)
            tape.evaluate()
            sweeps.append([tape.get_gradient(x) for x in res.inputs])
        assert all(s == sweeps[0] for s in sweeps)
        assert sweeps[0] == res.gradient
        notes.append('5 sweeps bitwise equal')


# 9 ----------------------------------------------------------------------

def test_09_slowdown_reporting(criterion):
    with criterion(9, 'slowdowns finite, chunk < 100x primal, reuse interpret <= 1.25x linear',
                   120.0) as notes:
        rows = {}
        for variant in ('chunk', 'chunk-index'):
            spec = RunSpec(variant, 61, 61, 32, repeats=3, verify=False)
            (row,), _, ok = run_benchmark(spec, log=io.StringIO())
            assert ok
            rows[variant] = row
        for row in rows.values():
            for key in ('slowdownRecord', 'slowdownInterpret'):
                assert math.isfinite(row[key]) and row[key] > 0, (row['variant'], key)
        chunk = rows['chunk']
        total = chunk['slowdownRecord'] + chunk['slowdownInterpret']
        assert total < 100.0, f'chunk record+interpret slowdown {total:.1f}'
        ratio = rows['chunk-index']['interpretMean'] / chunk['interpretMean']
        assert ratio <= 1.25, f'reuse/linear interpret ratio {ratio:.2f}'
        notes.append(f'chunk slowdown {total:.1f}x (record {chunk["slowdownRecord"]:.1f}x), '
                     f'reuse/linear interpret {ratio:.2f}')


# 10 ---------------------------------------------------------------------

def test_10_external_functions(criterion):
    with criterion(10, 'external functions: reverse order at recorded positions, one destroy', 1.0) as notes:
        for variant in REVERSE:
            t = _fresh(variant)
            events, destroyed = [], []
            chain = []

            def probe(tape, k):
                # statements after the mark are already interpreted: their
                # adjoint has been consumed; the ones before it not yet
                events.append((k, tape.get_gradient(chain[k + 1]) == 0.0,
                               tape.get_gradient(chain[k]) != 0.0,
                               tape.get_gradient(chain[0]) == 0.0))

            with t.recording():
                chain.append(t.input(1.5))
                for k in range(6):
                    chain.append(t.assign(chain[-1] * 1.25 + 0.5))
                    if k < 5:
                        t.push_external_function(ExternalFunction(probe, k + 1, destroyed.append))
            t.set_gradient(chain[-1], 1.0)
            t.evaluate()
            assert [e[0] for e in events] == [5, 4, 3, 2, 1], variant
            assert all(all(e[1:]) for e in events), (variant, events)
            assert t.get_gradient(chain[0]) == 1.25 ** 6
            t.reset()
            t.reset()
            assert sorted(destroyed) == [1, 2, 3, 4, 5], variant
        notes.append('4 variants traced')
