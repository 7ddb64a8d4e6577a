"""Recursive chunked data streams.

A :class:`ChunkStream` stores entries in fixed-capacity chunks, one typed
array per entry field. Every stream owns a child (another stream or a
:class:`Counter` terminal), and positions nest: the position of a stream is
``(chunk, offset, child_position)``. Resetting a stream to a position resets
the child to the embedded child position, so a chain of streams behaves as
one object.
"""

from array import array
from collections import namedtuple

DEFAULT_CHUNK_CAPACITY = 2 * 1024 * 1024
# physical storage of a chunk grows up to its capacity in steps, starting here
INITIAL_ALLOCATION = 4096

ITEMSIZE = {'O': 8}


class TapeError(RuntimeError):
    """Contract violation on a stream, index manager or tape."""


class NestedPosition(namedtuple('NestedPosition', 'chunk offset child')):
    """Position in a stream chain; compares lexicographically."""

    __slots__ = ()

    def innermost(self):
        pos = self
        while isinstance(pos, NestedPosition):
            pos = pos.child
        return pos


Segment = namedtuple('Segment', 'chunk begin end child_from child_to')


def itemsize(typecode):
    if typecode in ITEMSIZE:
        return ITEMSIZE[typecode]
    return array(typecode).itemsize


def _allocate(typecode, n):
    if typecode == 'O':
        return [None] * n
    return array(typecode, bytes(n * itemsize(typecode)))


class Chunk:
    """Parallel arrays for one block of entries."""

    __slots__ = ('typecodes', 'fields', 'used', 'capacity', 'allocated', 'child_start')

    def __init__(self, typecodes, capacity, child_start, allocate=None):
        self.typecodes = typecodes
        self.capacity = capacity
        n = capacity if allocate is None else min(capacity, allocate)
        self.allocated = n
        self.fields = tuple(_allocate(t, n) for t in typecodes)
        self.used = 0
        self.child_start = child_start

    def grow(self, needed):
        n = min(self.capacity, max(needed, 2 * self.allocated))
        extra = n - self.allocated
        for t, f in zip(self.typecodes, self.fields):
            f.extend(_allocate(t, extra))
        self.allocated = n

    def nbytes(self):
        return sum(itemsize(t) for t in self.typecodes) * self.allocated


class Counter:
    """Terminal of a stream chain: a plain running count without storage."""

    def __init__(self):
        self.count = 0

    def get_position(self):
        return self.count

    def reset(self, position):
        if not 0 <= position <= self.count:
            raise TapeError(f'counter position {position} out of range [0, {self.count}]')
        self.count = position

    def zero_position(self):
        return 0


class ChunkStream:
    """A chunked data stream with a child stream.

    ``typecodes`` gives one ``array`` typecode per field (``'O'`` stores
    arbitrary objects in a list). Entries are appended with :meth:`reserve`
    followed by :meth:`push`; a reserved group never spans two chunks, so a
    request larger than the chunk capacity gets a dedicated oversized chunk.
    """

    checked = True

    def __init__(self, typecodes, capacity=DEFAULT_CHUNK_CAPACITY, child=None, name=''):
        if capacity < 1:
            raise ValueError('chunk capacity must be positive')
        self.typecodes = tuple(typecodes)
        self.capacity = capacity
        self.child = Counter() if child is None else child
        self.name = name
        self.chunks = [self._new_chunk(capacity)]
        self.cur = 0
        self.current = self.chunks[0]

    def _new_chunk(self, capacity):
        return Chunk(self.typecodes, capacity, self.child.get_position(),
                     allocate=INITIAL_ALLOCATION)

    def reserve(self, items):
        c = self.current
        needed = c.used + items
        if needed <= c.allocated:
            return
        if needed <= c.capacity:
            c.grow(needed)
            return
        self._advance(items)

    def _advance(self, items):
        if items <= 0:
            return
        self.cur += 1
        capacity = max(self.capacity, items)
        # only reuse a chunk of identical capacity so the layout after a reset
        # matches a straight recording
        if self.cur < len(self.chunks) and self.chunks[self.cur].capacity == capacity:
            c = self.chunks[self.cur]
            c.used = 0
            c.child_start = self.child.get_position()
        else:
            c = self._new_chunk(capacity)
            if self.cur < len(self.chunks):
                self.chunks[self.cur] = c
            else:
                self.chunks.append(c)
        if c.allocated < items:
            c.grow(items)
        self.current = c

    def push(self, *values):
        c = self.current
        n = c.used
        for f, v in zip(c.fields, values):
            f[n] = v
        c.used = n + 1

    def get_position(self):
        return NestedPosition(self.cur, self.current.used, self.child.get_position())

    def zero_position(self):
        return NestedPosition(0, 0, self.child.zero_position())

    def reset(self, position):
        chunk, offset = position.chunk, position.offset
        if not 0 <= chunk <= self.cur:
            raise TapeError(f'{self.name or "stream"}: chunk {chunk} out of range [0, {self.cur}]')
        if not 0 <= offset <= self.chunks[chunk].used:
            raise TapeError(f'{self.name or "stream"}: offset {offset} beyond used '
                            f'{self.chunks[chunk].used} in chunk {chunk}')
        for c in self.chunks[chunk + 1:self.cur + 1]:
            c.used = 0
        self.chunks[chunk].used = offset
        self.cur = chunk
        self.current = self.chunks[chunk]
        self.child.reset(position.child)

    def segments_reverse(self, start, end):
        """Yield the chunk segments of ``[end, start)`` from last to first.

        Each :class:`Segment` names the chunk, the entry range inside it and
        the child range that was written alongside those entries.
        """
        if end > start:
            raise TapeError(f'reverse range runs backwards: {end} > {start}')
        chunks = self.chunks
        for ci in range(start.chunk, end.chunk - 1, -1):
            c = chunks[ci]
            if ci == start.chunk:
                stop, child_from = start.offset, start.child
            else:
                stop, child_from = c.used, chunks[ci + 1].child_start
            if ci == end.chunk:
                begin, child_to = end.offset, end.child
            else:
                begin, child_to = 0, c.child_start
            if begin < stop or child_from != child_to:
                yield Segment(c, begin, stop, child_from, child_to)

    def for_each_reverse(self, start, end, visitor):
        for seg in self.segments_reverse(start, end):
            visitor(seg)

    def entries(self, start, end):
        """Entries of ``[start, end)`` in push order, as tuples (for inspection)."""
        out = []
        for seg in reversed(list(self.segments_reverse(end, start))):
            for n in range(seg.begin, seg.end):
                out.append(tuple(f[n] for f in seg.chunk.fields))
        return out

    def used_entries(self):
        return sum(c.used for c in self.chunks[:self.cur + 1])

    def statistics(self):
        return {
            'chunks': self.cur + 1,
            'allocated_chunks': len(self.chunks),
            'entries': self.used_entries(),
            'entry_bytes': sum(itemsize(t) for t in self.typecodes),
            'allocated_bytes': sum(c.nbytes() for c in self.chunks),
        }


class UncheckedChunkStream(ChunkStream):
    """Single preallocated chunk; callers skip :meth:`reserve` on the hot path.

    Size it with :meth:`resize` before recording. Pushing past the end raises
    ``IndexError`` from the underlying array.
    """

    checked = False

    def __init__(self, typecodes, capacity=0, child=None, name=''):
        self.typecodes = tuple(typecodes)
        self.capacity = capacity
        self.child = Counter() if child is None else child
        self.name = name
        self.chunks = [Chunk(self.typecodes, capacity, self.child.get_position())]
        self.cur = 0
        self.current = self.chunks[0]

    def resize(self, capacity):
        if self.current.used:
            raise TapeError(f'{self.name or "stream"}: resize of a non-empty unchecked stream')
        self.capacity = capacity
        self.chunks = [Chunk(self.typecodes, capacity, self.child.get_position())]
        self.current = self.chunks[0]

    def reserve(self, items):
        if self.current.used + items > self.current.capacity:
            raise TapeError(f'{self.name or "stream"}: preallocated capacity '
                            f'{self.current.capacity} exhausted')

    def _advance(self, items):
        raise TapeError(f'{self.name or "stream"}: unchecked streams cannot allocate')
