"""Single preallocated working buffer shared by the reconstruction stages."""

import numpy as np

from .._validation import ValidationError

_ALIGN = 64


class SlabArena:
    """One byte slab carved into per-stage regions.

    Stages declare their worst-case size up front; :meth:`allocate` then
    reserves the sum in a single allocation. :meth:`view` hands out typed
    views and records each stage's peak request.
    """

    def __init__(self):
        self.declared = {}
        self.peak = {}
        self.offsets = {}
        self.allocations = 0
        self._slab = None

    def declare(self, stage, nbytes):
        if self._slab is not None:
            raise RuntimeError("arena already allocated")
        self.declared[stage] = max(self.declared.get(stage, 0), int(nbytes))

    @property
    def total_bytes(self):
        return sum(-(-n // _ALIGN) * _ALIGN for n in self.declared.values())

    def allocate(self):
        if self._slab is not None:
            return self
        offset = 0
        for stage, n in self.declared.items():
            self.offsets[stage] = offset
            offset += -(-n // _ALIGN) * _ALIGN
            self.peak[stage] = 0
        self._slab = np.empty(max(offset, 1), np.uint8)
        self.allocations += 1
        return self

    def view(self, stage, shape, dtype):
        if self._slab is None:
            raise RuntimeError("arena not allocated")
        dtype = np.dtype(dtype)
        nbytes = int(np.prod(shape)) * dtype.itemsize
        if stage not in self.declared:
            raise ValidationError("arena", f"stage {stage!r} was never declared")
        if nbytes > self.declared[stage]:
            raise ValidationError("arena", f"stage {stage!r} needs {nbytes} bytes, "
                                           f"declared {self.declared[stage]}")
        self.peak[stage] = max(self.peak[stage], nbytes)
        start = self.offsets[stage]
        return self._slab[start:start + nbytes].view(dtype).reshape(shape)

    def within_budget(self):
        return all(self.peak.get(s, 0) <= n for s, n in self.declared.items())
