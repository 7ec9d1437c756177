"""Event vocabulary, proper event sets, instances and the program order.

A store is split into a *buffer-write* (the enqueue into the thread's
store buffer) and a *memory-write* (the later dequeue into shared
memory).  Every event lives on exactly one *lane*: lane ``thr`` holds the
thread events (reads, buffer-writes, fences) of thread ``thr`` in source
order, and each additional lane holds the memory-writes of one buffer.
Under TSO a thread has a single buffer lane; under PSO it has one buffer
lane per variable it writes.  SC is not a model of its own: instances
declared ``sc`` get a fence injected after every store and are handled as
TSO everywhere downstream.

The program order is never materialised as an edge set here.  A set of
events is downward closed iff it is a per-lane prefix that additionally
satisfies the pair constraint (a memory-write needs its buffer-write) and
the fence constraint (a fence needs every memory-write whose buffer-write
precedes it).  All search algorithms test lower-set-ness through lane
counters, which makes the test a handful of integer comparisons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, NamedTuple, Sequence

MODELS = ("sc", "tso", "pso")


class MalformedInstance(Exception):
    """Raised when an instance violates a structural precondition."""


class Kind(IntEnum):
    READ = 0
    WBUF = 1
    WMEM = 2
    FENCE = 3


# Thread id used for the implicit initial writes.
INIT_THREAD = -1

_KIND_CHAR = {Kind.READ: "r", Kind.WBUF: "b", Kind.WMEM: "m", Kind.FENCE: "f"}


@dataclass(frozen=True)
class Event:
    """One event of an instance; ``pos`` is its index within its lane."""

    id: int
    thread: int
    kind: Kind
    var: str | None
    lane: int
    pos: int
    block: int | None = None
    tag: str | None = None  # "acquire" / "release" / "sc_fence", informational

    @property
    def label(self) -> str:
        c = _KIND_CHAR[self.kind]
        if self.var is None:
            return f"t{self.thread}.{c}{self.pos}"
        return f"t{self.thread}.{c}{self.pos}({self.var})"

    @property
    def key(self) -> tuple[int, int, int, str | None]:
        return (self.thread, int(self.kind), self.pos, self.var)


class TwoPhaseWrite(NamedTuple):
    """A store as the pair of its buffer-write and memory-write event ids.

    The implicit initial write of variable ``v`` is encoded with both ids
    equal to ``-(index(v) + 1)``; it is considered executed before every
    trace starts.
    """

    wb: int
    wm: int

    @property
    def is_init(self) -> bool:
        return self.wm < 0


@dataclass(frozen=True)
class Op:
    """A source-level operation, prior to two-phase expansion."""

    kind: str  # read | write | fence | lock_acq | lock_rel
    var: str | None = None
    block: int | None = None
    tag: str | None = None


class Instance:
    """A proper event set with a program order and a reads-from map."""

    def __init__(self, model: str, effective: str, source):
        self.model = model          # as declared: sc | tso | pso
        self.effective = effective  # tso | pso
        self.source = source        # (threads_ops, rf_src) used for dumps
        self.events: list[Event] = []
        self.lanes: list[list[int]] = []
        self.k = 0
        self.d = 0
        self.vars: list[str] = []
        self.var_index: dict[str, int] = {}
        self.rf: dict[int, TwoPhaseWrite] = {}
        self.wm_of: dict[int, int] = {}
        self.wb_of: dict[int, int] = {}
        self.readers: dict[int, tuple[int, ...]] = {}
        self.local_prior: dict[int, tuple[int, ...]] = {}
        self.fence_req: dict[int, tuple[tuple[int, int], ...]] = {}
        self.blocks: dict[int, tuple[int, ...]] = {}
        self.unit: dict[int, tuple[int, ...]] = {}
        self.mem_lane: dict[tuple[int, str | None], int] = {}

    # -- basic queries ---------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.events)

    def init_write(self, var: str) -> TwoPhaseWrite:
        neg = -(self.var_index[var] + 1)
        return TwoPhaseWrite(neg, neg)

    def var_of(self, eid: int) -> str | None:
        if eid < 0:
            return self.vars[-eid - 1]
        return self.events[eid].var

    def thread_of(self, eid: int) -> int:
        return INIT_THREAD if eid < 0 else self.events[eid].thread

    def label(self, eid: int) -> str:
        if eid < 0:
            return f"init({self.vars[-eid - 1]})"
        return self.events[eid].label

    def labels(self, ids: Iterable[int]) -> list[str]:
        return [self.label(e) for e in ids]

    def mem_lane_ids(self, thr: int) -> list[int]:
        return [l for (t, _), l in self.mem_lane.items() if t == thr]

    def reads(self) -> list[int]:
        return [e.id for e in self.events if e.kind == Kind.READ]

    def mem_writes(self) -> list[int]:
        return [e.id for e in self.events if e.kind == Kind.WMEM]

    def pair_of_wb(self, wb: int) -> TwoPhaseWrite:
        return TwoPhaseWrite(wb, self.wm_of[wb])

    def n_lanes(self) -> int:
        return len(self.lanes)


def build_instance(
    model: str,
    threads_ops: Sequence[Sequence[Op]],
    rf_src: dict[int, int | None],
) -> Instance:
    """Expand source operations into an instance under ``model``.

    ``rf_src`` maps global source indices of reads to source indices of
    writes; a read absent from the map observes the initial value.
    Source events are numbered thread by thread in file order, one number
    per operation (a store keeps a single number even though it expands
    into two events).
    """
    if model not in MODELS:
        raise MalformedInstance(f"unknown model {model!r}")
    effective = "tso" if model == "sc" else model
    inst = Instance(model, effective, (tuple(tuple(t) for t in threads_ops), dict(rf_src)))

    normalized, src_map = _normalize(model, threads_ops)
    inst.k = len(normalized)

    vars_ = sorted({op.var for t in normalized for op in t if op.var is not None})
    inst.vars = vars_
    inst.var_index = {v: i for i, v in enumerate(vars_)}
    inst.d = len(vars_)

    # Main lanes first, then buffer lanes in canonical (thread, var) order.
    inst.lanes = [[] for _ in range(inst.k)]
    if effective == "tso":
        for thr in range(inst.k):
            inst.mem_lane[(thr, None)] = len(inst.lanes)
            inst.lanes.append([])
    else:
        for thr in range(inst.k):
            written = sorted({op.var for op in normalized[thr] if op.kind == "write"},
                             key=vars_.index)
            for v in written:
                inst.mem_lane[(thr, v)] = len(inst.lanes)
                inst.lanes.append([])

    def new_event(thread, kind, var, lane, block, tag) -> Event:
        ev = Event(len(inst.events), thread, kind, var, lane, len(inst.lanes[lane]),
                   block=block, tag=tag)
        inst.events.append(ev)
        inst.lanes[lane].append(ev.id)
        return ev

    blocks: dict[int, list[int]] = {}
    src_event: dict[int, int] = {}  # source index -> representative event id
    for thr, ops in enumerate(normalized):
        for op, src in zip(ops, src_map[thr]):
            tag = getattr(op, "tag", None)
            if op.kind == "read":
                ev = new_event(thr, Kind.READ, op.var, thr, op.block, tag)
                if op.block is not None:
                    blocks.setdefault(op.block, []).append(ev.id)
            elif op.kind == "fence":
                ev = new_event(thr, Kind.FENCE, None, thr, op.block, tag)
            elif op.kind == "write":
                ev = new_event(thr, Kind.WBUF, op.var, thr, op.block, tag)
                lane = inst.mem_lane[(thr, op.var if effective == "pso" else None)]
                wm = new_event(thr, Kind.WMEM, op.var, lane, op.block, tag)
                inst.wm_of[ev.id] = wm.id
                inst.wb_of[wm.id] = ev.id
                if op.block is not None:
                    blocks.setdefault(op.block, []).extend([ev.id, wm.id])
            else:  # pragma: no cover - _normalize leaves only the above
                raise MalformedInstance(f"unexpected op kind {op.kind!r}")
            if src is not None:
                src_event[src] = ev.id

    inst.blocks = {b: tuple(ids) for b, ids in blocks.items()}
    for b, ids in inst.blocks.items():
        for e in ids:
            inst.unit[e] = ids
    for ev in inst.events:
        inst.unit.setdefault(ev.id, (ev.id,))

    # Resolve the reads-from map from source indices.
    for rsrc, wsrc in rf_src.items():
        if rsrc not in src_event:
            raise MalformedInstance(f"rf mentions unknown source event {rsrc}")
        rid = src_event[rsrc]
        if inst.events[rid].kind != Kind.READ:
            raise MalformedInstance(f"rf source {rsrc} is not a read")
        if wsrc is None:
            inst.rf[rid] = inst.init_write(inst.events[rid].var)
            continue
        if wsrc not in src_event:
            raise MalformedInstance(f"rf mentions unknown source event {wsrc}")
        wb = src_event[wsrc]
        if inst.events[wb].kind != Kind.WBUF:
            raise MalformedInstance(f"rf target {wsrc} is not a write")
        inst.rf[rid] = TwoPhaseWrite(wb, inst.wm_of[wb])
    for ev in inst.events:
        if ev.kind == Kind.READ and ev.id not in inst.rf:
            inst.rf[ev.id] = inst.init_write(ev.var)

    _index_tables(inst)
    return inst


def _normalize(model: str, threads_ops):
    """Expand lock ops, inject SC fences, track source numbering."""
    next_auto = 1 + max(
        (op.block for t in threads_ops for op in t if op.block is not None), default=-1
    )
    out, srcs = [], []
    src = 0
    for ops in threads_ops:
        nops: list[Op] = []
        nsrc: list[int | None] = []
        for op in ops:
            if op.kind == "lock_acq":
                nops.append(Op("read", op.var, op.block, tag="acquire"))
            elif op.kind == "lock_rel":
                b = op.block if op.block is not None else next_auto
                if op.block is None:
                    next_auto += 1
                nops.append(Op("write", op.var, b, tag="release"))
            elif op.kind in ("read", "write", "fence"):
                nops.append(op)
            else:
                raise MalformedInstance(f"unknown op kind {op.kind!r}")
            nsrc.append(src)
            src += 1
        if model == "sc":
            nops, nsrc = _inject_sc_fences(nops, nsrc)
        out.append(nops)
        srcs.append(nsrc)
    return out, srcs


def _inject_sc_fences(nops, nsrc):
    """Insert a fence after each write group, never inside an atomic block."""
    res_ops, res_src = [], []
    for i, op in enumerate(nops):
        res_ops.append(op)
        res_src.append(nsrc[i])
        if op.kind != "write":
            continue
        later_in_block = op.block is not None and any(
            nops[j].block == op.block for j in range(i + 1, len(nops))
        )
        if not later_in_block:
            res_ops.append(Op("fence", tag="sc_fence"))
            res_src.append(None)
    return res_ops, res_src


def _index_tables(inst: Instance) -> None:
    readers: dict[int, list[int]] = {}
    for r, pair in inst.rf.items():
        readers.setdefault(pair.wm, []).append(r)
    inst.readers = {wm: tuple(sorted(rs)) for wm, rs in readers.items()}

    # Same-thread, same-variable pairs whose buffer-write precedes the read.
    by_thread_var: dict[tuple[int, str], list[tuple[int, int]]] = {}
    for wb, wm in inst.wm_of.items():
        ev = inst.events[wb]
        by_thread_var.setdefault((ev.thread, ev.var), []).append((ev.pos, wm))
    for lst in by_thread_var.values():
        lst.sort()
    for ev in inst.events:
        if ev.kind != Kind.READ:
            continue
        prior = [wm for pos, wm in by_thread_var.get((ev.thread, ev.var), ())
                 if pos < ev.pos]
        inst.local_prior[ev.id] = tuple(prior)

    for ev in inst.events:
        if ev.kind != Kind.FENCE:
            continue
        reqs = []
        for (thr, _v), lane in inst.mem_lane.items():
            if thr != ev.thread:
                continue
            need = sum(1 for wm in inst.lanes[lane]
                       if inst.events[inst.wb_of[wm]].pos < ev.pos)
            if need:
                reqs.append((lane, need))
        inst.fence_req[ev.id] = tuple(reqs)


# -- validation ----------------------------------------------------------


@dataclass(frozen=True)
class Issue:
    code: str
    message: str
    events: tuple[str, ...] = ()


def validate_instance(inst: Instance) -> list[Issue]:
    """Report every violated instance invariant; an empty list means ok."""
    issues: list[Issue] = []
    for r, pair in inst.rf.items():
        rv = inst.events[r].var
        if inst.var_of(pair.wm) != rv:
            issues.append(Issue(
                "VariableMismatch",
                f"read of {rv!r} observes a write of {inst.var_of(pair.wm)!r}",
                (inst.label(r), inst.label(pair.wm)),
            ))
            continue
        if pair.is_init:
            continue
        if inst.thread_of(pair.wb) == inst.events[r].thread:
            prior = inst.local_prior[r]
            if not prior or prior[-1] != pair.wm:
                issues.append(Issue(
                    "StaleLocalRF",
                    "a local observation must name the last same-variable "
                    "write before the read",
                    (inst.label(r), inst.label(pair.wb)),
                ))
    for bid, ids in inst.blocks.items():
        evs = [inst.events[e] for e in ids]
        if len({e.thread for e in evs}) != 1:
            issues.append(Issue("BadBlock", f"block {bid} spans threads",
                                tuple(e.label for e in evs)))
            continue
        main = sorted(e.pos for e in evs if e.kind != Kind.WMEM)
        if main != list(range(main[0], main[0] + len(main))):
            issues.append(Issue("BadBlock", f"block {bid} is not contiguous",
                                tuple(e.label for e in evs)))
        kinds = [e.kind for e in evs]
        shapes = (
            [Kind.READ, Kind.WBUF, Kind.WMEM],
            [Kind.WBUF, Kind.WMEM],
            [Kind.READ, Kind.WBUF],
        )
        if kinds not in [list(s) for s in shapes]:
            issues.append(Issue("BadBlock", f"block {bid} has unsupported shape",
                                tuple(e.label for e in evs)))
    return issues


def require_valid(inst: Instance) -> None:
    issues = validate_instance(inst)
    if issues:
        raise MalformedInstance("; ".join(f"{i.code}: {i.message}" for i in issues))


# -- program order -------------------------------------------------------


class ProgramOrder:
    """Queryable view of the program order of an instance.

    Edges are generated lazily for ``less``; the per-lane counters of
    :func:`is_lower_set` never need them.
    """

    def __init__(self, inst: Instance):
        self.inst = inst
        self._reach: list[int] | None = None

    def edges(self) -> list[tuple[int, int]]:
        inst = self.inst
        out = []
        for lane in inst.lanes:
            out.extend(zip(lane, lane[1:]))
        out.extend(inst.wm_of.items())
        for f, reqs in inst.fence_req.items():
            for lane, need in reqs:
                out.append((inst.lanes[lane][need - 1], f))
        return out

    def _reachability(self) -> list[int]:
        if self._reach is None:
            self._reach = transitive_reach(self.inst.n, self.edges())
        return self._reach

    def less(self, a: int, b: int) -> bool:
        if a < 0:
            return b >= 0  # initial writes precede everything
        if b < 0:
            return False
        return bool(self._reachability()[a] >> b & 1) and a != b


def transitive_reach(n: int, edges: Iterable[tuple[int, int]]) -> list[int]:
    """Forward-reachability bitsets (reflexive); raises on a cycle."""
    succ: list[list[int]] = [[] for _ in range(n)]
    indeg = [0] * n
    for a, b in edges:
        succ[a].append(b)
        indeg[b] += 1
    order = [i for i in range(n) if indeg[i] == 0]
    for v in order:
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                order.append(w)
    if len(order) != n:
        raise ValueError("cycle")
    reach = [0] * n
    for v in reversed(order):
        m = 1 << v
        for w in succ[v]:
            m |= reach[w]
        reach[v] = m
    return reach


def build_program_order(inst: Instance) -> ProgramOrder:
    """The program order of a validated instance, as a queryable relation."""
    require_valid(inst)
    return ProgramOrder(inst)


def is_lower_set(subset: Iterable[int], po: ProgramOrder) -> bool:
    """True iff ``subset`` is downward closed under the program order."""
    inst = po.inst
    s = set(subset)
    counts = [0] * inst.n_lanes()
    for e in s:
        counts[inst.events[e].lane] += 1
    # Per-lane prefix.
    for lane_id, lane in enumerate(inst.lanes):
        for e in lane[: counts[lane_id]]:
            if e not in s:
                return False
    for e in s:
        ev = inst.events[e]
        if ev.kind == Kind.WMEM and inst.wb_of[e] not in s:
            return False
        if ev.kind == Kind.FENCE:
            for lane, need in inst.fence_req[e]:
                if counts[lane] < need:
                    return False
    return True


# -- JSON interface ------------------------------------------------------

_JSON_KINDS = {"read", "write", "fence", "lock_acq", "lock_rel"}


def instance_from_json(obj: dict, model: str | None = None) -> Instance:
    """Load the on-disk instance form.

    Schema: ``{"model": "sc|tso|pso", "threads": [[event...]...],
    "rf": [[readId, writeBufId]...]}`` with
    ``event = {"kind": ..., "var": ..., "block": optional int}``.
    Source events are numbered globally, thread by thread; reads missing
    from ``rf`` observe the initial value.  ``model`` overrides the file's
    own model field.
    """
    try:
        m = model or obj["model"]
        threads = []
        for tops in obj["threads"]:
            ops = []
            for e in tops:
                kind = e["kind"]
                if kind not in _JSON_KINDS:
                    raise MalformedInstance(f"unknown event kind {kind!r}")
                var = e.get("var")
                if kind != "fence" and not isinstance(var, str):
                    raise MalformedInstance(f"{kind} event needs a 'var'")
                ops.append(Op(kind, var, e.get("block")))
            threads.append(ops)
        rf = {int(r): int(w) for r, w in obj.get("rf", [])}
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInstance(f"bad instance JSON: {exc}") from exc
    return build_instance(m, threads, rf)


def instance_to_json(inst: Instance) -> dict:
    threads_ops, rf_src = inst.source
    threads = []
    for ops in threads_ops:
        row = []
        for op in ops:
            d = {"kind": op.kind}
            if op.var is not None:
                d["var"] = op.var
            if op.block is not None:
                d["block"] = op.block
            row.append(d)
        threads.append(row)
    return {
        "model": inst.model,
        "threads": threads,
        "rf": sorted([r, w] for r, w in rf_src.items() if w is not None),
    }


def load_instance_file(path, model: str | None = None) -> Instance:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MalformedInstance(f"not valid JSON: {exc}") from exc
    return instance_from_json(obj, model)
