"""Partial-order closure: the weakest order every witness must respect.

Starting from the program order, orderings are added that provably hold
in every realization of the reads-from map, per read ``r`` observing the
pair ``(wB, wM)``:

1. for a cross-thread observation, ``wM`` precedes ``r``, and the
   memory-write of every same-variable pair of ``r``'s own thread whose
   buffer-write precedes ``r`` must precede ``wM``;
2. a conflicting foreign memory-write ordered before ``r`` must be
   ordered before ``wM`` (else it would land in between and be observed
   instead);
3. a conflicting foreign memory-write ordered after ``wM`` must be
   ordered after ``r`` (same reasoning, mirrored);

plus, for atomic blocks: anything ordered after part of a block is
ordered after all of it, anything ordered before part is before all.

A cycle proves the instance unrealizable.  The converse fails in general
(the filter is sound, not complete) but holds for two threads.  For reads
of the initial value the rules degenerate: rule 1 bans prior local writes
on the variable outright, and rule 3 fires unconditionally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .events import Instance, ProgramOrder, require_valid
from .machine import Trace


@dataclass
class ClosureOrder:
    """Program order plus closure edges, with reachability bitsets."""

    inst: Instance
    extra: set[tuple[int, int]] = field(default_factory=set)
    _reach: list[int] = field(default_factory=list, repr=False)
    _preds: list[int] = field(default_factory=list, repr=False)

    def less(self, a: int, b: int) -> bool:
        if a < 0:
            return b >= 0
        if b < 0:
            return False
        return a != b and bool(self._reach[a] >> b & 1)

    def preds_mask(self, e: int) -> int:
        return self._preds[e]

    def allows(self, trace: Trace, e: int) -> bool:
        """May ``e`` run next, i.e. are all its closure predecessors executed?"""
        return self._preds[e] & ~trace.mask == 0

    @property
    def edge_count(self) -> int:
        return len(self.extra)


class _Cyclic(Exception):
    pass


def compute_closure(inst: Instance) -> ClosureOrder | None:
    """Least fixpoint of the closure rules, or ``None`` when none exists.

    Idempotent by construction: rules only ever re-derive present edges on
    a closed order.  Edge insertions are bounded by n^2; the worklist is a
    whole-pass sweep re-run until no rule fires, which is adequate because
    rule bodies are local to one read.
    """
    require_valid(inst)
    n = inst.n
    po_edges = ProgramOrder(inst).edges()
    succ: list[set[int]] = [set() for _ in range(n)]
    for a, b in po_edges:
        succ[a].add(b)
    c = ClosureOrder(inst)

    def recompute() -> bool:
        try:
            c._reach = _reach_sets(n, succ)
        except _Cyclic:
            return False
        return True

    if not recompute():
        return None

    conflicting = _conflict_table(inst)
    while True:
        new: list[tuple[int, int]] = []

        def add(a: int, b: int) -> None:
            if not c.less(a, b) and (a, b) not in c.extra:
                new.append((a, b))

        for r, pair in inst.rf.items():
            rthr = inst.events[r].thread
            remote = inst.thread_of(pair.wb) != rthr
            if remote and not pair.is_init:
                add(pair.wm, r)
            if remote:
                for bad_wm in inst.local_prior[r]:
                    if bad_wm == pair.wm:
                        continue
                    if pair.is_init:
                        return None  # a prior local write hides the initial value
                    add(bad_wm, pair.wm)
            for bad_wm in conflicting[r]:
                if bad_wm == pair.wm or inst.events[bad_wm].thread == rthr:
                    continue
                if pair.is_init:
                    if c.less(bad_wm, r):
                        return None
                    add(r, bad_wm)
                    continue
                if c.less(bad_wm, r):
                    add(bad_wm, pair.wm)
                if c.less(pair.wm, bad_wm):
                    add(r, bad_wm)
        for ids in inst.blocks.values():
            first, last = ids[0], ids[-1]
            for e in range(n):
                if e in ids:
                    continue
                if any(c.less(i, e) for i in ids):
                    add(last, e)
                if any(c.less(e, i) for i in ids):
                    add(e, first)

        if not new:
            return _finish(c)
        for a, b in new:
            c.extra.add((a, b))
            succ[a].add(b)
        assert len(c.extra) <= n * n, "closure edge budget exceeded"
        if not recompute():
            return None


def _conflict_table(inst: Instance) -> dict[int, list[int]]:
    by_var: dict[str, list[int]] = {}
    for wm in inst.mem_writes():
        by_var.setdefault(inst.events[wm].var, []).append(wm)
    return {r: by_var.get(inst.events[r].var, [])
            for r in inst.reads()}


def _reach_sets(n: int, succ: list[set[int]]) -> list[int]:
    indeg = [0] * n
    for a in range(n):
        for b in succ[a]:
            indeg[b] += 1
    order = [i for i in range(n) if indeg[i] == 0]
    for v in order:
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                order.append(w)
    if len(order) != n:
        raise _Cyclic
    reach = [0] * n
    for v in reversed(order):
        m = 1 << v
        for w in succ[v]:
            m |= reach[w]
        reach[v] = m
    return reach


def _finish(c: ClosureOrder) -> ClosureOrder:
    n = c.inst.n
    preds = [0] * n
    for a in range(n):
        m = c._reach[a] & ~(1 << a)
        while m:
            low = m & -m
            preds[low.bit_length() - 1] |= 1 << a
            m ^= low
    c._preds = preds
    return c


def respects(trace: Trace | list[int], order: ClosureOrder) -> bool:
    """True iff the trace never contradicts an ordering of the closure."""
    ids = trace.order() if isinstance(trace, Trace) else list(trace)
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if order.less(b, a):
                return False
    return True

