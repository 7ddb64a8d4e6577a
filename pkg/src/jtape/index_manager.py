"""Identifier schemes for active values.

Index 0 is reserved for passive values everywhere.
"""

from .chunk_store import TapeError

# indices are stored as 4-byte signed integers on the tape
MAX_INDEX = 2**31 - 1


class LinearIndexManager:
    """Monotone counter; indices are never freed.

    Doubles as the terminal of a tape's stream chain: its position is the
    counter, so a reverse sweep can rebuild left-hand-side indices by
    decrementing it.
    """

    def __init__(self):
        self.counter = 0

    def assign_index(self):
        c = self.counter + 1
        if c > MAX_INDEX:
            raise TapeError('linear index space exhausted')
        self.counter = c
        return c

    def free_index(self, index):
        pass

    def get_position(self):
        return self.counter

    def zero_position(self):
        return 0

    def reset(self, position):
        if not 0 <= position <= self.counter:
            raise TapeError(f'index position {position} out of range [0, {self.counter}]')
        self.counter = position

    @property
    def max_live(self):
        return self.counter

    def statistics(self):
        return {'issued': self.counter, 'free_stack': 0, 'max_live': self.counter}


class ReuseIndexManager:
    """Freed indices go on a LIFO stack and are handed out again first.

    ``max_live`` is the largest number of indices ever held at once and
    bounds the adjoint vector. With ``debug=True`` double frees and frees of
    never-issued indices raise :class:`TapeError`.
    """

    def __init__(self, debug=False):
        self.counter = 0
        self.free = []
        self.live = 0
        self.max_live = 0
        self.debug = debug
        self._live_set = set() if debug else None

    def assign_index(self):
        if self.free:
            index = self.free.pop()
        else:
            index = self.counter + 1
            if index > MAX_INDEX:
                raise TapeError('reuse index space exhausted')
            self.counter = index
        live = self.live + 1
        self.live = live
        if live > self.max_live:
            self.max_live = live
        if self._live_set is not None:
            self._live_set.add(index)
        return index

    def free_index(self, index):
        if not index:
            return
        if self._live_set is not None:
            if index not in self._live_set:
                raise TapeError(f'index {index} freed twice or never issued')
            self._live_set.remove(index)
        self.free.append(index)
        self.live -= 1

    def statistics(self):
        return {'issued': self.counter, 'free_stack': len(self.free), 'max_live': self.max_live}
