"""Operator-overloading automatic differentiation with Jacobi tapes."""

from .chunk_store import ChunkStream, NestedPosition, TapeError, UncheckedChunkStream
from .expressions import (
    Expression, cos, evaluate_primal, exp, log, operation_catalog, propagate,
    propagate_unit, sin, sqrt,
)
from .forward import ForwardTape, TangentReal
from .index_manager import LinearIndexManager, ReuseIndexManager
from .tapes import (
    TAPES, ActiveReal, ActiveRealIndex, ChunkIndexTape, ChunkTape, ExternalFunction,
    TapeConfig, TapeStatistics, UncheckedIndexTape, UncheckedTape, make_tape,
)

__version__ = '0.1.0'

__all__ = [
    'ChunkStream', 'NestedPosition', 'TapeError', 'UncheckedChunkStream',
    'Expression', 'cos', 'evaluate_primal', 'exp', 'log', 'operation_catalog', 'propagate',
    'propagate_unit', 'sin', 'sqrt',
    'ForwardTape', 'TangentReal',
    'LinearIndexManager', 'ReuseIndexManager',
    'TAPES', 'ActiveReal', 'ActiveRealIndex', 'ChunkIndexTape', 'ChunkTape', 'ExternalFunction',
    'TapeConfig', 'TapeStatistics', 'UncheckedIndexTape', 'UncheckedTape', 'make_tape',
]
