"""Exhaustive ground truth for instances and programs.

The instance oracle enumerates well-formed traces under plain machine
semantics, pruning a branch the moment an executed read observes the
wrong write.  States are memoised on (lane counters, last memory-write
per variable): the counters pin the executed set, and together with the
last writers they pin everything the future can depend on.

The program oracle enumerates every maximal machine run of a bounded
program and groups the runs by their reads-from class.  It is the
denominator for exploration-optimality checks and never appears inside
the fast verifiers.
"""

from __future__ import annotations

from dataclasses import dataclass

from .events import Instance, Kind, require_valid
from .machine import Trace


class CapExceeded(Exception):
    """The input is larger than the oracle is willing to enumerate."""


def oracle_realizable(inst: Instance, cap: int = 14) -> tuple[bool, Trace | None]:
    """Does any complete well-formed trace realize the reads-from map?

    Returns the verdict and a witness when one exists.  Refuses instances
    with more than ``cap`` events rather than run away.
    """
    require_valid(inst)
    if inst.n > cap:
        raise CapExceeded(f"{inst.n} events exceed the oracle cap of {cap}")
    dead: set[tuple] = set()

    def search(trace: Trace) -> Trace | None:
        if trace.complete():
            return trace
        key = (trace.counts, trace.last_wm)
        if key in dead:
            return None
        for unit in _units(trace):
            nxt = _step_checked(trace, unit)
            if nxt is None:
                continue
            found = search(nxt)
            if found is not None:
                return found
        dead.add(key)
        return None

    witness = search(Trace.empty(inst))
    return witness is not None, witness


def _units(trace: Trace):
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


def _step_checked(trace: Trace, unit) -> Trace | None:
    """Extend by one unit under machine semantics, or ``None`` if the
    step is ill-formed or makes some read observe the wrong write."""
    inst = trace.inst
    t = trace
    for e in unit:
        if not t.can_step(e):
            return None
        if inst.events[e].kind == Kind.READ and t.read_source(e) != inst.rf[e]:
            return None
        t = t.extend(e, enforce_blocks=False)
    return t


# -- program-level enumeration --------------------------------------------


@dataclass(frozen=True)
class RfClass:
    """Canonical identity of a maximal run: its events and reads-from map."""

    events: tuple
    rf: tuple

    @classmethod
    def of_run(cls, run) -> "RfClass":
        return cls(tuple(sorted(ev.key for ev in run.events)),
                   tuple(sorted(run.rf.items())))


def oracle_rf_classes(program, model: str, max_events: int = 48,
                      max_traces: int = 500_000):
    """All reads-from classes of the maximal runs of a program.

    Returns ``(classes, maximal_trace_count)`` where ``classes`` is a set
    of :class:`RfClass`.  Runs strictly over machine semantics, branching
    on every enabled step.
    """
    from .program import Run  # local import; program depends on machine only

    classes: set[RfClass] = set()
    traces = 0

    def search(run: Run) -> None:
        nonlocal traces
        steps = run.enabled_steps()
        if not steps:
            traces += 1
            if traces > max_traces:
                raise CapExceeded(f"more than {max_traces} maximal runs")
            classes.add(RfClass.of_run(run))
            return
        if len(run.events) > max_events:
            raise CapExceeded(f"a run exceeded {max_events} events")
        for step in steps:
            child = run.clone()
            child.do_step(step)
            search(child)

    search(Run.start(program, model))
    return classes, traces
