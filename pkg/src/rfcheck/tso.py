"""Deciding realizability under TSO.

``verify_tso`` walks the lower sets of the *memory-writes only*: between
two memory-write branches it saturates the trace with every executable
thread event, which keeps it maximal among witness prefixes sharing the
same flushed set and caps the search at one visit key per per-thread
flush-count vector.  ``naive_verify_tso`` enumerates lower sets of the
full event set instead and exists as the comparison baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

from .closure import ClosureOrder
from .events import Instance, Kind, require_valid
from .machine import Trace

# A visit key of the fast search: executed memory-writes per buffer lane.
TsoVisitKey = tuple  # tuple[int, ...]


@dataclass
class SearchStats:
    """Instrumentation counters shared by all verifier variants."""

    algo: str = ""
    visited: int = 0           # traces popped from the worklist
    extensions: int = 0        # events appended
    done_insertions: int = 0   # distinct visit keys recorded
    done_bound: int = 0        # product bound on keys (fast TSO only)
    fmap_per_local_max: int = 0
    fences_present: bool = False
    monotonicity_violations: int = 0

    per_local_fmaps: dict = field(default_factory=dict, repr=False)


def tso_executable(e: int, trace: Trace) -> bool:
    """Executability of a single event per the TSO witness-prefix rules.

    Beyond the lower-set step this demands: a read observing a foreign
    write sees its memory-write already flushed; a memory-write neither
    lands on a held variable nor overtakes the pending local writes of a
    read that still has to observe it from memory.
    """
    inst = trace.inst
    if trace.executed(e):
        return False
    if not trace.can_step(e):
        return False
    ev = inst.events[e]
    if ev.kind == Kind.READ:
        pair = inst.rf[e]
        if pair.is_init:
            # The virtual initial write is flushed before the trace starts,
            # so its readers must have no earlier same-variable local write
            # at all (nothing may ever shadow the initial value).
            if inst.local_prior[e]:
                return False
        elif inst.thread_of(pair.wm) != ev.thread and not trace.executed(pair.wm):
            return False
    elif ev.kind == Kind.WMEM:
        if trace.held_by(ev.var) is not None:
            return False
        for r in inst.readers.get(e, ()):
            if inst.events[r].thread == ev.thread:
                continue
            for wm in inst.local_prior[r]:
                if not trace.executed(wm):
                    return False
    return True


def unit_executable(unit: tuple[int, ...], trace: Trace, pred=tso_executable,
                    gate=None) -> bool:
    """An atomic block (or single event) runs when its events do, in sequence."""
    t = trace
    for e in unit:
        if trace.executed(e) or not pred(e, t) or (gate and not gate(t, e)):
            return False
        if len(unit) > 1:
            t = t.extend(e, enforce_blocks=False)
    return True


def _closure_gate(closure: ClosureOrder | None):
    if closure is None:
        return None
    return closure.allows


def _thread_units(trace: Trace):
    """Next thread-event unit per thread: the lane head, pulled to a whole
    block when it opens one.  Blocks containing a memory-write are left to
    the flush phase."""
    inst = trace.inst
    for thr in range(inst.k):
        c = trace.counts[thr]
        if c >= len(inst.lanes[thr]):
            continue
        head = inst.lanes[thr][c]
        unit = inst.unit[head]
        if any(inst.events[e].kind == Kind.WMEM for e in unit):
            continue
        yield unit


def _flush_units(trace: Trace):
    """Memory-write candidates: buffer-lane heads, or a block owning one."""
    inst = trace.inst
    seen = set()
    for thr in range(inst.k):
        c = trace.counts[thr]
        if c < len(inst.lanes[thr]):
            head = inst.lanes[thr][c]
            unit = inst.unit[head]
            if len(unit) > 1 and any(inst.events[e].kind == Kind.WMEM for e in unit):
                seen.add(unit)
                yield unit
    for lane in range(inst.k, inst.n_lanes()):
        c = trace.counts[lane]
        if c >= len(inst.lanes[lane]):
            continue
        wm = inst.lanes[lane][c]
        unit = inst.unit[wm]
        if len(unit) == 1 and unit not in seen:
            yield unit


def _saturate(trace: Trace, gate, stats: SearchStats) -> Trace:
    """Round-robin over threads until no thread event is executable."""
    progress = True
    while progress:
        progress = False
        for unit in _thread_units(trace):
            if unit_executable(unit, trace, tso_executable, gate):
                trace = trace.extend(unit)
                stats.extensions += len(unit)
                progress = True
    return trace


def verify_tso(inst: Instance, closure: ClosureOrder | None = None,
               stats: SearchStats | None = None,
               check_invariants: bool = False) -> Trace | None:
    """A witness trace realizing the instance under TSO, or ``None``.

    With ``closure`` given, only prefixes respecting it are explored (a
    pure pruning; verdicts never change).  ``check_invariants`` turns on
    the costlier self-checks used by the test suite.
    """
    require_valid(inst)
    if inst.effective != "tso":
        raise ValueError("instance was not built for the tso model")
    stats = stats if stats is not None else SearchStats()
    stats.algo = "verify_tso"
    mem_lanes = range(inst.k, inst.n_lanes())
    stats.done_bound = prod(len(inst.lanes[l]) + 1 for l in mem_lanes)
    gate = _closure_gate(closure)

    def key(t: Trace) -> TsoVisitKey:
        return t.counts[inst.k:]

    work = [Trace.empty(inst)]
    done = {key(work[0])}
    stats.done_insertions = 1
    while work:
        trace = work.pop()
        stats.visited += 1
        trace = _saturate(trace, gate, stats)
        if check_invariants:
            assert not any(
                unit_executable(u, trace, tso_executable, gate)
                for u in _thread_units(trace)
            ), "saturation left an executable thread event"
        if trace.complete():
            return trace
        for unit in _flush_units(trace):
            if not unit_executable(unit, trace, tso_executable, gate):
                continue
            nxt = trace.extend(unit)
            stats.extensions += len(unit)
            k = key(nxt)
            if k not in done:
                done.add(k)
                stats.done_insertions += 1
                if check_invariants:
                    assert stats.done_insertions <= stats.done_bound
                work.append(nxt)
    return None


def naive_verify_tso(inst: Instance, closure: ClosureOrder | None = None,
                     stats: SearchStats | None = None) -> Trace | None:
    """Baseline: enumerate all lower sets of the full program order."""
    require_valid(inst)
    if inst.effective != "tso":
        raise ValueError("instance was not built for the tso model")
    stats = stats if stats is not None else SearchStats()
    stats.algo = "naive_verify_tso"
    gate = _closure_gate(closure)
    work = [Trace.empty(inst)]
    done = {work[0].counts}
    stats.done_insertions = 1
    while work:
        trace = work.pop()
        stats.visited += 1
        if trace.complete():
            return trace
        for unit in _all_units(trace):
            if not unit_executable(unit, trace, tso_executable, gate):
                continue
            nxt = trace.extend(unit)
            stats.extensions += len(unit)
            if nxt.counts not in done:
                done.add(nxt.counts)
                stats.done_insertions += 1
                work.append(nxt)
    return None


def _all_units(trace: Trace):
    inst = trace.inst
    emitted = set()
    for thr in range(inst.k):
        c = trace.counts[thr]
        if c < len(inst.lanes[thr]):
            unit = inst.unit[inst.lanes[thr][c]]
            emitted.add(unit)
            yield unit
    for lane in range(inst.k, inst.n_lanes()):
        c = trace.counts[lane]
        if c >= len(inst.lanes[lane]):
            continue
        unit = inst.unit[inst.lanes[lane][c]]
        if unit not in emitted:
            yield unit
