"""Benchmark harness: record/interpret timings on the Burgers problem.

Rows go to stdout (or ``--out``) as CSV or an aligned table; gradient
checksums and verification results go to stderr. The exit code is 0 only
if every embedded check passed.

Every flag can also be set through an environment variable named
``JTAPE_<FLAG>`` (for example ``JTAPE_NX=31`` or
``JTAPE_SWITCH=ignore-zero=off,skip-zero-adjoints=on``); explicit flags win.
"""

import argparse
import math
import multiprocessing
import os
import random
import statistics
import sys
import time
from dataclasses import dataclass, field, replace

from . import burgers
from .tapes import SWITCH_NAMES, TAPES, TapeConfig, make_tape

REVERSE_VARIANTS = tuple(TAPES)
VARIANTS = REVERSE_VARIANTS + ('forward', 'primal-only')
DEFAULT_VARIANTS = REVERSE_VARIANTS + ('forward',)

BLOCK_LADDER = (1024, 2048, 4096, 8192, 16384, 32768, 131072, 262144, 524288,
                1048576, 2097152, 4194304, 8388608, 16777216, 33554432, 67108864,
                134217728)

CSV_HEADER = ('variant', 'nx', 'ny', 'steps', 'repeats', 'workers', 'chunk', 'switchesMask',
              'recordMean', 'recordMin', 'recordMax', 'interpretMean', 'interpretMin',
              'interpretMax', 'primalMean', 'slowdownRecord', 'slowdownInterpret',
              'tapeBytes', 'adjointSlots', 'statements', 'arguments')

ENV_PREFIX = 'JTAPE_'
FD_SAMPLES = 5
FD_TOLERANCE = 1e-5
FORWARD_TOLERANCE = 1e-10


@dataclass
class RunSpec:
    variant: str = 'chunk'
    nx: int = 61
    ny: int = 61
    steps: int = 32
    repeats: int = 10
    workers: int = 1
    chunk: int = 2 * 1024 * 1024
    switches: TapeConfig = field(default_factory=TapeConfig)
    verify: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f'unknown variant {self.variant!r}; choose from {", ".join(VARIANTS)}')
        if self.repeats < 1:
            raise ValueError('repeats must be at least 1')
        if self.workers < 1:
            raise ValueError('workers must be at least 1')
        if self.chunk < 1:
            raise ValueError('chunk size must be positive')

    def burgers_config(self):
        return burgers.BurgersConfig(self.nx, self.ny, self.steps)

    def tape_config(self):
        return replace(self.switches, chunk_capacity=self.chunk)


@dataclass
class WorkerResult:
    record: list
    interpret: list
    primal: list
    gradient: list
    checksum: float
    statistics: object = None
    checks: list = field(default_factory=list)


def _time_primal(cfg):
    t0 = time.perf_counter()
    burgers.primal(cfg)
    return time.perf_counter() - t0


def _run_reverse(spec, cfg):
    tape = make_tape(spec.variant, spec.tape_config())
    if not tape.checked:
        tape.resize(*burgers.tape_size(cfg))
    # warm-up run allocates every chunk and the adjoint vector
    burgers.record(cfg, tape)
    tape.reset()
    records, interprets, gradient, stats = [], [], None, None
    for _ in range(spec.repeats):
        tape.reset()
        t0 = time.perf_counter()
        J, inputs = burgers.record(cfg, tape)
        t1 = time.perf_counter()
        tape.set_gradient(J, 1.0)
        tape.evaluate()
        t2 = time.perf_counter()
        records.append(t1 - t0)
        interprets.append(t2 - t1)
        g = [tape.get_gradient(x) for x in inputs]
        if gradient is not None and g != gradient:
            raise RuntimeError('repeated sweeps produced different gradients')
        gradient = g
        stats = tape.statistics()
        del J, inputs
    return records, interprets, gradient, stats


def _run_forward(spec, cfg):
    ones = [1.0] * cfg.n_inputs
    records, value = [], None
    for _ in range(spec.repeats):
        t0 = time.perf_counter()
        _, value = burgers.directional_derivative(cfg, ones)
        records.append(time.perf_counter() - t0)
    return records, [math.nan] * spec.repeats, None, value


def _sample_points(cfg, n, seed=0):
    rng = random.Random(seed)
    return rng.sample(range(cfg.n_inputs), min(n, cfg.n_inputs))


def _relative_error(a, b):
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale else 0.0


def verify_gradient(cfg, gradient, samples=FD_SAMPLES, tolerance=FD_TOLERANCE, seed=0):
    points = _sample_points(cfg, samples, seed)
    fd = burgers.gradient_fd(cfg, points)
    checks = []
    for k, ref in zip(points, fd):
        err = _relative_error(gradient[k], ref)
        checks.append((f'fd[{k}]', err, err <= tolerance))
    return checks


def verify_direction(cfg, value, direction, tolerance=FD_TOLERANCE):
    ref = burgers.directional_fd(cfg, direction)
    err = _relative_error(value, ref)
    return [('fd[direction]', err, err <= tolerance)]


def run_worker(spec):
    """One independent replica: primal, then the chosen variant."""
    cfg = spec.burgers_config()
    burgers.primal(cfg)  # warm-up
    primal = [_time_primal(cfg) for _ in range(spec.repeats)]
    if spec.variant == 'primal-only':
        return WorkerResult([math.nan] * spec.repeats, [math.nan] * spec.repeats, primal,
                            None, math.nan)
    if spec.variant == 'forward':
        records, interprets, _, value = _run_forward(spec, cfg)
        checks = verify_direction(cfg, value, [1.0] * cfg.n_inputs) if spec.verify else []
        return WorkerResult(records, interprets, primal, None, value, checks=checks)
    records, interprets, gradient, stats = _run_reverse(spec, cfg)
    checks = verify_gradient(cfg, gradient) if spec.verify else []
    return WorkerResult(records, interprets, primal, gradient, math.fsum(gradient), stats, checks)


def _summary(values):
    finite = [v for v in values if not math.isnan(v)]
    if not finite:
        return math.nan, math.nan, math.nan
    return statistics.fmean(finite), min(finite), max(finite)


def make_row(spec, record, interpret, primal, stats, workers_label):
    rmean, rmin, rmax = _summary(record)
    imean, imin, imax = _summary(interpret)
    pmean = _summary(primal)[0]
    row = {
        'variant': spec.variant, 'nx': spec.nx, 'ny': spec.ny, 'steps': spec.steps,
        'repeats': spec.repeats, 'workers': workers_label, 'chunk': spec.chunk,
        'switchesMask': spec.switches.mask,
        'recordMean': rmean, 'recordMin': rmin, 'recordMax': rmax,
        'interpretMean': imean, 'interpretMin': imin, 'interpretMax': imax,
        'primalMean': pmean,
        'slowdownRecord': rmean / pmean if pmean else math.nan,
        'slowdownInterpret': imean / pmean if pmean else math.nan,
        'tapeBytes': stats.tape_bytes if stats else 0,
        'adjointSlots': stats.adjoint_slots if stats else 0,
        'statements': stats.statements if stats else 0,
        'arguments': stats.arguments if stats else 0,
    }
    return row


def run_benchmark(spec, log=None):
    """Run ``spec`` on ``spec.workers`` processes.

    Returns ``(rows, first worker result, ok)``. With one worker there is a single row;
    otherwise one row per worker (``workers`` column ``k/N``) followed by a
    pooled row (``workers`` column ``N``).
    """
    if spec.workers == 1:
        results = [run_worker(spec)]
    else:
        ctx = multiprocessing.get_context('spawn' if sys.platform == 'darwin' else 'fork')
        with ctx.Pool(spec.workers) as pool:
            results = pool.map(run_worker, [spec] * spec.workers)
    rows = []
    ok = True
    if spec.workers > 1:
        for k, r in enumerate(results):
            rows.append(make_row(spec, r.record, r.interpret, r.primal, r.statistics,
                                 f'{k}/{spec.workers}'))
    pooled = [sum((getattr(r, name) for r in results), []) for name in ('record', 'interpret', 'primal')]
    rows.append(make_row(spec, *pooled, results[0].statistics, spec.workers))
    checksum = results[0].checksum
    for k, r in enumerate(results):
        if k and r.checksum != checksum:
            ok = False
            _log(log, f'check workers[{k}] checksum {r.checksum!r} != {checksum!r} FAIL')
        for name, err, passed in r.checks:
            ok &= passed
            _log(log, f'check {spec.variant} worker={k} {name} relerr={err:.3e} '
                      f'{"PASS" if passed else "FAIL"}')
    if not math.isnan(checksum):
        _log(log, f'checksum variant={spec.variant} chunk={spec.chunk} '
                  f'mask={spec.switches.mask} value={checksum:.17g}')
    return rows, results[0], ok


def _log(log, message):
    print(message, file=sys.stderr if log is None else log)


def run_variants(base, variants, log=None):
    """Each variant once; reverse checksums must agree bit for bit."""
    rows, ok = [], True
    reverse, forward = {}, None
    for variant in variants:
        spec = replace(base, variant=variant)
        r, result, passed = run_benchmark(spec, log)
        rows.extend(r)
        ok &= passed
        if variant in REVERSE_VARIANTS:
            reverse[variant] = result.gradient
        elif variant == 'forward':
            forward = result.checksum
    if reverse:
        first_name, first = next(iter(reverse.items()))
        for name, g in reverse.items():
            same = g == first
            ok &= same
            _log(log, f'check gradient {name} == {first_name} bitwise {"PASS" if same else "FAIL"}')
        if forward is not None:
            err = _relative_error(forward, math.fsum(first))
            passed = err <= FORWARD_TOLERANCE
            ok &= passed
            _log(log, f'check forward checksum vs reverse relerr={err:.3e} '
                      f'{"PASS" if passed else "FAIL"}')
    return rows, ok


def sweep_block_size(base, sizes=BLOCK_LADDER, log=None):
    if base.variant not in ('chunk', 'chunk-index'):
        raise ValueError('the block-size sweep needs a chunked variant (chunk or chunk-index)')
    rows, ok, reference = [], True, None
    for size in sizes:
        spec = replace(base, chunk=size)
        r, result, passed = run_benchmark(spec, log)
        rows.extend(r)
        ok &= passed
        if reference is None:
            reference = result.gradient
        elif result.gradient != reference:
            ok = False
            _log(log, f'check block size {size} gradient differs FAIL')
    return rows, ok


def switch_rows():
    """The eight switch settings of the sweep, as (label, TapeConfig)."""
    off = dict.fromkeys(TapeConfig.switches(), False)
    rows = [('all-off', TapeConfig(**off))]
    for label in ('check-args', 'ignore-invalid', 'ignore-zero'):
        rows.append((label, TapeConfig(**{**off, SWITCH_NAMES[label]: True})))
    rows.append(('check-activity', TapeConfig(**{**off, 'check_tape_activity': True})))
    record_all = {**off, 'check_expression_arguments': True, 'ignore_invalid_jacobians': True,
                  'ignore_zero_jacobians': True, 'check_tape_activity': True}
    rows.append(('record-all-on', TapeConfig(**record_all)))
    rows.append(('skip-zero-adjoints', TapeConfig(**{**off, 'skip_zero_adjoints': True})))
    rows.append(('all-on', TapeConfig(**dict.fromkeys(TapeConfig.switches(), True))))
    return rows


def sweep_switches(base, log=None):
    if base.variant not in REVERSE_VARIANTS:
        raise ValueError('the switch sweep needs a reverse tape variant')
    rows, ok, reference, argbytes = [], True, None, {}
    for label, switches in switch_rows():
        spec = replace(base, switches=switches)
        r, result, passed = run_benchmark(spec, log)
        rows.extend(r)
        ok &= passed
        argbytes[label] = result.statistics.argument_bytes
        if reference is None:
            reference = result.gradient
        elif result.gradient != reference:
            ok = False
            _log(log, f'check switches {label} gradient differs FAIL')
    shrinks = argbytes['ignore-zero'] <= argbytes['all-off']
    ok &= shrinks
    _log(log, f'check ignore-zero argument bytes {argbytes["ignore-zero"]} <= '
              f'{argbytes["all-off"]} {"PASS" if shrinks else "FAIL"}')
    return rows, ok


def _format_value(v):
    if isinstance(v, float):
        return 'nan' if math.isnan(v) else f'{v:.6g}'
    return str(v)


def emit(rows, fmt='csv'):
    """Render rows with the fixed column order."""
    cells = [[_format_value(row[k]) for k in CSV_HEADER] for row in rows]
    if fmt == 'csv':
        return '\n'.join([','.join(CSV_HEADER)] + [','.join(c) for c in cells]) + '\n'
    if fmt == 'table':
        widths = [max([len(h)] + [len(c[n]) for c in cells]) for n, h in enumerate(CSV_HEADER)]
        lines = ['  '.join(h.rjust(w) for h, w in zip(CSV_HEADER, widths))]
        lines.append('  '.join('-' * w for w in widths))
        lines += ['  '.join(v.rjust(w) for v, w in zip(c, widths)) for c in cells]
        return '\n'.join(lines) + '\n'
    raise ValueError(f'unknown format {fmt!r}')


def parse_switch(text, config=None):
    """Apply ``name=on|off`` items (comma separated) to a TapeConfig."""
    config = TapeConfig() if config is None else config
    for item in filter(None, (s.strip() for s in text.split(','))):
        name, _, state = item.partition('=')
        if name not in SWITCH_NAMES:
            raise argparse.ArgumentTypeError(
                f'unknown switch {name!r}; choose from {", ".join(SWITCH_NAMES)}')
        if state not in ('on', 'off'):
            raise argparse.ArgumentTypeError(f'switch {name} needs =on or =off, got {item!r}')
        config = replace(config, **{SWITCH_NAMES[name]: state == 'on'})
    return config


def build_parser():
    env = os.environ
    p = argparse.ArgumentParser(prog='jtape-bench', description=__doc__.split('\n\n')[0])

    def default(name, fallback):
        return env.get(ENV_PREFIX + name.upper().replace('-', '_'), fallback)

    p.add_argument('--variant', default=default('variant', ','.join(DEFAULT_VARIANTS)),
                   help='comma separated list from: ' + ', '.join(VARIANTS))
    p.add_argument('--nx', type=int, default=int(default('nx', 61)))
    p.add_argument('--ny', type=int, default=int(default('ny', 61)))
    p.add_argument('--steps', type=int, default=int(default('steps', 32)))
    p.add_argument('--repeats', type=int, default=int(default('repeats', 10)))
    p.add_argument('--workers', type=int, default=int(default('workers', 1)))
    p.add_argument('--chunk-size', type=int, default=int(default('chunk-size', 2 * 1024 * 1024)))
    p.add_argument('--switch', action='append', default=[s for s in [default('switch', '')] if s],
                   metavar='NAME=on|off', help='names: ' + ', '.join(SWITCH_NAMES))
    p.add_argument('--sweep', choices=('block', 'switches'), default=default('sweep', None))
    p.add_argument('--sizes', default=default('sizes', None),
                   help='comma separated chunk sizes for the block sweep')
    p.add_argument('--format', choices=('csv', 'table'), default=default('format', 'csv'))
    p.add_argument('--out', default=default('out', None))
    p.add_argument('--paper-scale', action='store_true',
                   default=default('paper-scale', '0') not in ('', '0', 'false', 'off'),
                   help='601x601 grid')
    p.add_argument('--no-verify', action='store_true',
                   default=default('no-verify', '0') not in ('', '0', 'false', 'off'))
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        switches = TapeConfig()
        for s in args.switch:
            switches = parse_switch(s, switches)
        variants = [v.strip() for v in args.variant.split(',') if v.strip()]
        nx, ny = (601, 601) if args.paper_scale else (args.nx, args.ny)
        base = RunSpec(variants[0], nx, ny, args.steps, args.repeats, args.workers,
                       args.chunk_size, switches, not args.no_verify)
        for v in variants:
            replace(base, variant=v)  # validates every name up front
        if args.sweep == 'block':
            sizes = BLOCK_LADDER if not args.sizes else [int(s) for s in args.sizes.split(',')]
            rows, ok = sweep_block_size(base, sizes)
        elif args.sweep == 'switches':
            rows, ok = sweep_switches(base)
        else:
            rows, ok = run_variants(base, variants)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        print(f'jtape-bench: error: {exc}', file=sys.stderr)
        return 2
    text = emit(rows, args.format)
    if args.out:
        with open(args.out, 'w') as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f'verification {"PASS" if ok else "FAIL"}', file=sys.stderr)
    return 0 if ok else 1


if __name__ == '__main__':
    sys.exit(main())
