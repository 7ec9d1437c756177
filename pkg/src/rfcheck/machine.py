"""Operational store-buffer machine: traces, extension, reads-from.

A :class:`Trace` is an immutable snapshot.  Extension returns a new value
that shares its past through a parent pointer, so branching searches pay
O(segment) per step instead of O(n) copies.  The derived state kept on a
trace is deliberately tiny: per-lane counters (which fully determine the
executed event *set*, since every reachable set is a per-lane prefix), an
executed bitmask, the last memory-write per variable, and one bit per
memory-write recording whether some of its readers were still pending
when it hit memory (those readers observe it from shared memory, which is
what the spurious-write test needs to know later).
"""

from __future__ import annotations

from typing import Sequence

from .events import Instance, Kind, TwoPhaseWrite


class NotLowerSet(Exception):
    """Extension would execute an event before a program-order predecessor."""


class BlockTorn(Exception):
    """Extension would interleave a foreign event into an atomic block."""


class NoWriteBefore(Exception):
    """A read has neither a buffered local write nor a prior memory-write."""


class Trace:
    """An executed event sequence plus derived machine state."""

    __slots__ = ("inst", "parent", "seg", "length", "mask", "counts",
                 "last_wm", "memread")

    def __init__(self, inst, parent, seg, length, mask, counts, last_wm, memread):
        self.inst: Instance = inst
        self.parent: Trace | None = parent
        self.seg: tuple[int, ...] = seg
        self.length: int = length
        self.mask: int = mask
        self.counts: tuple[int, ...] = counts
        self.last_wm: tuple[int, ...] = last_wm
        self.memread: int = memread

    @classmethod
    def empty(cls, inst: Instance) -> "Trace":
        last = tuple(-(i + 1) for i in range(inst.d))
        return cls(inst, None, (), 0, 0, (0,) * inst.n_lanes(), last, 0)

    def __len__(self) -> int:
        return self.length

    def __repr__(self) -> str:
        return f"<Trace {' '.join(self.inst.labels(self.order()))}>"

    # -- queries ----------------------------------------------------------

    def executed(self, eid: int) -> bool:
        if eid < 0:
            return True  # initial writes precede every trace
        return bool(self.mask >> eid & 1)

    def complete(self) -> bool:
        return self.length == self.inst.n

    def order(self) -> list[int]:
        out: list[int] = []
        node: Trace | None = self
        while node is not None:
            out.extend(reversed(node.seg))
            node = node.parent
        out.reverse()
        return out

    def last_write_on(self, var: str) -> int:
        return self.last_wm[self.inst.var_index[var]]

    def readers_pending(self, wm: int) -> bool:
        return any(not self.executed(r) for r in self.inst.readers.get(wm, ()))

    def held_by(self, var: str) -> int | None:
        """The memory-write currently holding ``var``, if any.

        The last memory-write on a variable holds it while a read that must
        observe it is still unexecuted; conflicting memory-writes are
        blocked for as long as the hold lasts.
        """
        lw = self.last_write_on(var)
        return lw if self.readers_pending(lw) else None

    def pending_wms(self, thr: int) -> list[int]:
        """Memory-writes whose buffer-write ran but which have not, for ``thr``."""
        inst = self.inst
        out = []
        for lane in inst.mem_lane_ids(thr):
            ids = inst.lanes[lane]
            for i in range(self.counts[lane], len(ids)):
                if not self.executed(inst.wb_of[ids[i]]):
                    break
                out.append(ids[i])
        return out

    def lane_pending(self, lane: int) -> bool:
        inst = self.inst
        ids = inst.lanes[lane]
        c = self.counts[lane]
        return c < len(ids) and self.executed(inst.wb_of[ids[c]])

    def has_unexecuted_fence(self, thr: int) -> bool:
        inst = self.inst
        for e in inst.lanes[thr][self.counts[thr]:]:
            if inst.events[e].kind == Kind.FENCE:
                return True
        return False

    def read_source(self, r: int) -> TwoPhaseWrite:
        """What read ``r`` would observe if executed right now.

        Latest same-variable local write still in the buffer if one exists,
        else the last conflicting memory-write (the implicit initial write
        when nothing was written yet).
        """
        inst = self.inst
        ev = inst.events[r]
        best = -1
        for wm in inst.local_prior[r]:
            wb = inst.wb_of[wm]
            if self.executed(wb) and not self.executed(wm):
                best = wb  # local_prior is in buffer order; keep the latest
        if best >= 0:
            return TwoPhaseWrite(best, inst.wm_of[best])
        lw = self.last_write_on(ev.var)
        if lw < 0:
            return inst.init_write(ev.var)
        return TwoPhaseWrite(inst.wb_of[lw], lw)

    # -- extension ----------------------------------------------------------

    def can_step(self, eid: int) -> bool:
        """Lower-set test for appending a single event."""
        inst = self.inst
        ev = inst.events[eid]
        if self.counts[ev.lane] != ev.pos:
            return False
        if ev.kind == Kind.WMEM:
            return self.executed(inst.wb_of[eid])
        if ev.kind == Kind.FENCE:
            return all(self.counts[lane] >= need
                       for lane, need in inst.fence_req[eid])
        return True

    def extend(self, ids: Sequence[int] | int, enforce_blocks: bool = True) -> "Trace":
        """Append events, validating well-formedness for each step.

        A whole atomic block must arrive within one call; foreign events in
        a segment may not split one (the searches always extend blocks as
        units, this guards against misuse).
        """
        if isinstance(ids, int):
            ids = (ids,)
        inst = self.inst
        counts = list(self.counts)
        mask = self.mask
        last = None
        memread = self.memread
        open_block: int | None = None
        block_left: set[int] = set()
        for eid in ids:
            ev = inst.events[eid]
            if mask >> eid & 1:
                raise NotLowerSet(f"{ev.label} executed twice")
            if counts[ev.lane] != ev.pos:
                raise NotLowerSet(f"{ev.label} is not next in its lane")
            if ev.kind == Kind.WMEM and not mask >> inst.wb_of[eid] & 1:
                raise NotLowerSet(f"{ev.label} before its buffer-write")
            if ev.kind == Kind.FENCE:
                for lane, need in inst.fence_req[eid]:
                    if counts[lane] < need:
                        raise NotLowerSet(f"{ev.label} with nonempty buffer")
            if enforce_blocks:
                if open_block is not None and ev.block != open_block:
                    raise BlockTorn(f"{ev.label} interleaves into block {open_block}")
                if ev.block is not None:
                    block_left = block_left or set(inst.blocks[ev.block])
                    block_left.discard(eid)
                    open_block = ev.block if block_left else None
                    if open_block is None:
                        block_left = set()
            counts[ev.lane] += 1
            mask |= 1 << eid
            if ev.kind == Kind.WMEM:
                if last is None:
                    last = list(self.last_wm)
                last[inst.var_index[ev.var]] = eid
                for r in inst.readers.get(eid, ()):
                    if not mask >> r & 1:
                        memread |= 1 << eid
                        break
        if enforce_blocks and open_block is not None:
            raise BlockTorn(f"block {open_block} left incomplete")
        return Trace(inst, self, tuple(ids), self.length + len(ids), mask,
                     tuple(counts),
                     tuple(last) if last is not None else self.last_wm, memread)


def extend(trace: Trace, eid: int) -> Trace:
    """Single-event extension; raises :class:`NotLowerSet` when illegal."""
    return trace.extend(eid)


def rf_of_trace(trace: Trace | Sequence[int], inst: Instance | None = None,
                strict: bool = False) -> dict[int, TwoPhaseWrite]:
    """The reads-from function of a complete or partial event sequence.

    Each read observes the latest same-variable local write still buffered
    at its point, else the latest conflicting memory-write before it.  With
    ``strict`` a read with no source raises :class:`NoWriteBefore`; by
    default it observes the implicit initial write.
    """
    if isinstance(trace, Trace):
        inst = trace.inst
        order = trace.order()
    else:
        assert inst is not None
        order = list(trace)
    rf: dict[int, TwoPhaseWrite] = {}
    flushed: dict[int, bool] = {}
    buffered: dict[tuple[int, str], list[int]] = {}
    last_wm: dict[str, int] = {}
    for eid in order:
        ev = inst.events[eid]
        if ev.kind == Kind.WBUF:
            buffered.setdefault((ev.thread, ev.var), []).append(eid)
        elif ev.kind == Kind.WMEM:
            flushed[inst.wb_of[eid]] = True
            last_wm[ev.var] = eid
        elif ev.kind == Kind.READ:
            upd = [wb for wb in buffered.get((ev.thread, ev.var), ())
                   if not flushed.get(wb)]
            if upd:
                rf[eid] = TwoPhaseWrite(upd[-1], inst.wm_of[upd[-1]])
            elif ev.var in last_wm:
                wm = last_wm[ev.var]
                rf[eid] = TwoPhaseWrite(inst.wb_of[wm], wm)
            elif strict:
                raise NoWriteBefore(ev.label)
            else:
                rf[eid] = inst.init_write(ev.var)
    return rf


def is_well_formed(order: Sequence[int] | Trace, inst: Instance | None = None) -> bool:
    """True iff every prefix of the sequence is a lower set of the program order."""
    if isinstance(order, Trace):
        inst, order = order.inst, order.order()
    assert inst is not None
    t = Trace.empty(inst)
    try:
        for eid in order:
            t = t.extend(eid, enforce_blocks=False)
    except NotLowerSet:
        return False
    return True
