"""Deciding realizability under PSO.

The PSO search enumerates lower sets of the *thread events* and keeps
memory-writes minimal instead of maximal: writes nobody will ever need
again ("spurious") are flushed eagerly, the write a read observes is
flushed exactly before the read, and a fence drains whatever its thread
still has pending.  Per-variable buffers make this sound: everything
sitting in front of an observed write in its buffer targets the same
variable and can be needed by no later read.

What distinguishes two search states with equal thread events is only
which reads other threads' next fences are still waiting on.  That is
summarised by the fence map, a thread-by-thread matrix pointing at the
last read each blocked thread needs executed before it may fence; visit
keys pair the thread-event counters with this matrix.
"""

from __future__ import annotations

from .closure import ClosureOrder
from .events import Instance, Kind, require_valid
from .machine import Trace
from .tso import SearchStats, tso_executable, unit_executable

FenceMap = tuple  # k rows of k entries; 0 marks "no obligation"
PsoVisitKey = tuple  # (thread-event counters, fence map)


def pending_writes(trace: Trace, thr: int) -> list[int]:
    """Memory-writes of ``thr`` whose buffer-write ran but which did not."""
    return trace.pending_wms(thr)


def is_spurious(wm: int, trace: Trace) -> bool:
    """No remaining read needs ``wm``, and nobody observed it from memory.

    Spuriousness is absorbing: once true it stays true in every extension,
    which is why the search may flush spurious writes the moment they
    become executable.
    """
    if trace.readers_pending(wm):
        return False
    return not trace.memread >> wm & 1 if trace.executed(wm) else True


def pso_executable(e: int, trace: Trace) -> bool:
    """Executability under PSO.

    Writes follow the TSO conditions.  A fence needs every pending write
    of its thread individually executable.  A read needs its observed
    buffer-write executed and, for a foreign observation, the matching
    memory-write executed or executable.
    """
    inst = trace.inst
    if trace.executed(e):
        return False
    ev = inst.events[e]
    if ev.kind in (Kind.WBUF, Kind.WMEM):
        return tso_executable(e, trace)
    if ev.kind == Kind.FENCE:
        if trace.counts[ev.lane] != ev.pos:
            return False
        pend = trace.pending_wms(ev.thread)
        return all(tso_executable(w, trace) for w in pend)
    pair = inst.rf[e]
    if not trace.executed(pair.wb):
        return False
    if pair.is_init:
        return not inst.local_prior[e] and trace.can_step(e)
    if inst.thread_of(pair.wb) == ev.thread:
        return trace.can_step(e)
    if trace.counts[ev.lane] != ev.pos:
        return False
    if trace.executed(pair.wm):
        return True
    return tso_executable(pair.wm, trace)


def fence_map(trace: Trace) -> FenceMap:
    """The fence-obligation matrix of the current state.

    Entry ``(thr, other)`` is the 1-based index of the last read of
    ``other`` that must execute before ``thr`` can fence: the read's
    variable is held by the write it observes while ``thr`` has a pending
    write on that same variable, so the buffer of ``thr`` cannot drain
    first.  Rows of threads with no fence left are all zero.
    """
    inst = trace.inst
    k = inst.k
    rows = []
    pending_on = {}
    for (thr, var), lane in inst.mem_lane.items():
        if trace.lane_pending(lane):
            pending_on.setdefault(thr, set()).add(var)
    blocked = [r for r in inst.reads() if not trace.executed(r)]
    for thr in range(k):
        if not trace.has_unexecuted_fence(thr) or thr not in pending_on:
            rows.append((0,) * k)
            continue
        row = [0] * k
        for r in blocked:
            ev = inst.events[r]
            if ev.thread == thr:
                continue
            pair = inst.rf[r]
            if inst.thread_of(pair.wb) in (thr, ev.thread):
                continue
            if ev.var not in pending_on[thr]:
                continue
            if trace.held_by(ev.var) != pair.wm:
                continue
            row[ev.thread] = max(row[ev.thread], ev.pos + 1)
        rows.append(tuple(row))
    return tuple(rows)


def neb_map(trace: Trace) -> tuple:
    """Non-empty-buffer map: per (thread, variable), a buffer is charged
    when it is non-empty and its thread does not hold the variable.

    Test support only: states agreeing on thread events and on this map
    provably agree on the fence map, which bounds the fence maps per
    thread-event set by 2^(k*d).
    """
    inst = trace.inst
    out = []
    for thr in range(inst.k):
        for v in inst.vars:
            lane = inst.mem_lane.get((thr, v if inst.effective == "pso" else None))
            charged = False
            if lane is not None and trace.lane_pending(lane):
                lw = trace.held_by(v)
                charged = lw is None or inst.thread_of(lw) != thr
            out.append(charged)
    return tuple(out)


def _local_key(trace: Trace) -> tuple:
    return trace.counts[: trace.inst.k]


def _fmap_le(a: FenceMap, b: FenceMap) -> bool:
    return all(x <= y for ra, rb in zip(a, b) for x, y in zip(ra, rb))


def _flush_spurious(trace: Trace, gate, stats: SearchStats,
                    check: bool) -> Trace:
    inst = trace.inst
    progress = True
    while progress:
        progress = False
        for lane in range(inst.k, inst.n_lanes()):
            c = trace.counts[lane]
            if c >= len(inst.lanes[lane]):
                continue
            wm = inst.lanes[lane][c]
            if inst.events[wm].block is not None:
                continue
            if not is_spurious(wm, trace) or not pso_executable(wm, trace):
                continue
            if gate and not gate(trace, wm):
                continue
            trace = _extend_wm(trace, wm, stats, check, spurious=True)
            progress = True
    return trace


def _extend_wm(trace: Trace, wm: int, stats: SearchStats, check: bool,
               spurious: bool | None = None) -> Trace:
    if not check:
        stats.extensions += 1
        return trace.extend(wm)
    if spurious is None:
        spurious = is_spurious(wm, trace)
    before = fence_map(trace)
    nxt = trace.extend(wm)
    after = fence_map(nxt)
    if not _fmap_le(before, after) or (spurious and before != after):
        stats.monotonicity_violations += 1
    stats.extensions += 1
    return nxt


def verify_pso(inst: Instance, closure: ClosureOrder | None = None,
               stats: SearchStats | None = None,
               check_invariants: bool = False) -> Trace | None:
    """A witness trace realizing the instance under PSO, or ``None``."""
    require_valid(inst)
    if inst.effective != "pso":
        raise ValueError("instance was not built for the pso model")
    stats = stats if stats is not None else SearchStats()
    stats.algo = "verify_pso"
    stats.fences_present = any(e.kind == Kind.FENCE for e in inst.events)
    gate = closure.allows if closure is not None else None

    def note_key(t: Trace) -> PsoVisitKey:
        fm = fence_map(t)
        lk = _local_key(t)
        if check_invariants:
            seen = stats.per_local_fmaps.setdefault(lk, set())
            seen.add(fm)
            stats.fmap_per_local_max = max(stats.fmap_per_local_max, len(seen))
        return (lk, fm)

    work = [Trace.empty(inst)]
    done = {note_key(work[0])}
    stats.done_insertions = 1
    while work:
        trace = work.pop()
        stats.visited += 1
        trace = _flush_spurious(trace, gate, stats, check_invariants)
        if trace.complete():
            return trace
        for unit in _pso_thread_units(trace):
            branch = _try_unit(trace, unit, gate, stats, check_invariants)
            if branch is None:
                continue
            key = note_key(branch)
            if key not in done:
                done.add(key)
                stats.done_insertions += 1
                work.append(branch)
    return None


def _pso_thread_units(trace: Trace):
    inst = trace.inst
    for thr in range(inst.k):
        c = trace.counts[thr]
        if c < len(inst.lanes[thr]):
            yield inst.unit[inst.lanes[thr][c]]


def _try_unit(trace: Trace, unit, gate, stats, check) -> Trace | None:
    """One thread-event branch: observed write first, fence drain, then unit.

    Only the first event drives the branch decision: a block's own
    memory-write may become executable just through the observed write
    placed here, so the whole-unit check runs after the helpers.  The
    closure gate likewise applies only once the helper writes are in
    place; a read's closure predecessors include the write it observes,
    so gating the bare executability test would block every foreign
    observation.
    """
    inst = trace.inst
    if not pso_executable(unit[0], trace):
        return None
    first = inst.events[unit[0]]
    if first.kind == Kind.READ:
        pair = inst.rf[unit[0]]
        if (not pair.is_init and inst.thread_of(pair.wb) != first.thread
                and not trace.executed(pair.wm)):
            if gate and not gate(trace, pair.wm):
                return None
            trace = _extend_wm(trace, pair.wm, stats, check)
    elif first.kind == Kind.FENCE:
        pend = sorted(
            trace.pending_wms(first.thread),
            key=lambda w: (inst.var_index[inst.events[w].var], inst.events[w].pos),
        )
        for wm in pend:
            if gate and not gate(trace, wm):
                return None
            trace = _extend_wm(trace, wm, stats, check)
    if not unit_executable(unit, trace, pso_executable, gate):
        return None
    stats.extensions += len(unit)
    return trace.extend(unit)


def naive_verify_pso(inst: Instance, closure: ClosureOrder | None = None,
                     stats: SearchStats | None = None) -> Trace | None:
    """Baseline: enumerate all lower sets of the full program order.

    Extensions use the per-event witness-prefix conditions (a read's
    remote observation must already be in memory, a fence takes a plain
    lower-set step); the fast search's drain-before-fence and
    flush-before-read couplings exist precisely so that it does not have
    to enumerate these intermediate lower sets one by one.
    """
    require_valid(inst)
    if inst.effective != "pso":
        raise ValueError("instance was not built for the pso model")
    stats = stats if stats is not None else SearchStats()
    stats.algo = "naive_verify_pso"
    gate = closure.allows if closure is not None else None
    work = [Trace.empty(inst)]
    done = {work[0].counts}
    stats.done_insertions = 1
    while work:
        trace = work.pop()
        stats.visited += 1
        if trace.complete():
            return trace
        for unit in _naive_units(trace):
            if not unit_executable(unit, trace, tso_executable, gate):
                continue
            nxt = trace.extend(unit)
            stats.extensions += len(unit)
            if nxt.counts not in done:
                done.add(nxt.counts)
                stats.done_insertions += 1
                work.append(nxt)
    return None


def _naive_units(trace: Trace):
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
