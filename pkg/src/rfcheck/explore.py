"""Stateless exploration of the reads-from partitioning.

One call works on one maximal run: replay the schedule's witness, extend
it maximally, and for every read not yet committed to its source propose
*mutations*, alternative writes it could have observed.  A mutation keeps
the trace up to the read plus the causal past of the new source, asks the
verifier for a witness of the altered reads-from function, and on success
becomes a schedule explored by a recursive call.  Reads retained from the
causal past get marked, pinning them to their source below that branch;
together with per-prefix schedule dedup this yields exactly one call per
class of the partitioning.

Atomic read-write instructions need one extra mutation shape: two such
instructions on one variable reverse by swapping their sources in a
single step (each alone is inconsistent, since the later one observes the
earlier one's write).  Lock critical sections reverse the same way, with
the acquire as the read part and the matching release as the write part.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

from .events import Kind, Op, build_instance
from .machine import rf_of_trace
from .oracle import RfClass
from .program import INIT, PEvent, Program, Run, init_src, maximal_extension
from .pso import verify_pso
from .tso import verify_tso


@dataclass
class ExploreStats:
    classes_explored: int = 0
    maximal_traces: int = 0
    witness_calls: int = 0
    witness_failures: int = 0


@dataclass(frozen=True)
class Schedule:
    """One realizable mutation, pending exploration.

    ``regen`` names the atomic-instruction writes that were materialized
    into ``tau`` only because replay regenerates them; for mutation
    purposes they still count as part of the next call's extension.
    """

    tau: tuple
    rf: tuple  # canonically sorted (read key, source) pairs
    witness: tuple
    marked: frozenset
    regen: frozenset = frozenset()


def explore(program: Program, model: str, collect_classes: bool = False,
            check: bool = True):
    """Explore every reads-from class of the program under ``model``.

    Returns ``(stats, classes)`` where ``classes`` is the list of visited
    classes when ``collect_classes`` is set (else ``None``).
    """
    eng = _Engine(program, model, collect_classes, check)
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 50_000))
    try:
        eng.visit((), {}, (), frozenset(), frozenset())
    finally:
        sys.setrecursionlimit(limit)
    assert not eng.schedules, "schedule sets must all be drained"
    return eng.stats, (eng.classes if collect_classes else None)


class _Engine:
    def __init__(self, program, model, collect, check):
        self.program = program
        self.model = model
        self.effective = "tso" if model == "sc" else model
        self.collect = collect
        self.check = check
        self.stats = ExploreStats()
        self.classes: list[RfClass] = []
        self.schedules: dict[tuple, list[Schedule]] = {}
        self._seen: dict[tuple, set] = {}
        self._local_last: dict = {}

    # -- one call of the recursion ---------------------------------------

    def visit(self, tau, rf, witness, marked, regen):
        run = Run.start(self.program, self.model)
        run.replay(list(witness))
        if self.check:
            for r, src in rf.items():
                assert run.rf[r] == src, "witness does not realize its schedule"
        maximal_extension(run)
        ext = run.events[len(witness):]

        self.stats.classes_explored += 1
        self.stats.maximal_traces += 1
        if self.collect:
            self.classes.append(RfClass.of_run(run))

        key_event = {ev.key: ev for ev in run.events}
        idx = {ev.key: i for i, ev in enumerate(run.events)}
        self._local_last = _local_last_writes(run)
        self._block_wb = {ev.block: ev.key for ev in run.events
                          if ev.kind == Kind.WBUF and ev.block is not None}
        rf_tilde = dict(run.rf)
        tau_tilde = tuple(tau) + tuple(
            ev.key for ev in ext if ev.kind != Kind.WMEM)
        ext_reads = [ev.key for ev in ext if ev.kind == Kind.READ]
        # Regenerated writes count as extension events for mutation scope.
        ext_keys = {ev.key for ev in ext} | set(regen)
        pos = {k: i for i, k in enumerate(tau_tilde)}

        for r in ext_reads:
            pk = tau_tilde[: pos[r] + 1]
            assert pk not in self.schedules
            self.schedules[pk] = []
            self._seen[pk] = set()

        for r in tau_tilde:
            if r[1] != int(Kind.READ) or r in marked:
                continue
            below = _causal_below(run, rf_tilde, exclude=r)
            for cand, overrides in self.mutations_for_read(
                    run, key_event, rf_tilde, tau_tilde, r, ext_keys):
                self._propose(key_event, idx, rf_tilde, tau_tilde, pos, r,
                              cand, overrides, below, marked)

        for r_hat in reversed(ext_reads):
            pk = tau_tilde[: pos[r_hat] + 1]
            lst = self.schedules[pk]
            i = 0
            while i < len(lst):
                s = lst[i]
                self.visit(s.tau, dict(s.rf), s.witness, s.marked, s.regen)
                i += 1
            del self.schedules[pk]
            del self._seen[pk]

    # -- mutation construction -------------------------------------------

    def mutations_for_read(self, run, key_event, rf_tilde, tau_tilde, r, ext_keys):
        """Alternative sources for ``r``: plain writes, maybe the initial
        write, plus source swaps with a matching atomic instruction."""
        ev_r = key_event[r]
        current = rf_tilde[r]
        in_ext = r in ext_keys
        wbs = [ev for ev in run.events
               if ev.kind == Kind.WBUF and ev.var == ev_r.var]
        local_last = self._local_last.get(r)
        out = []
        for ev in wbs:
            if ev.key == current:
                continue
            if ev.thread == ev_r.thread and ev.key != local_last:
                continue  # unobservable: hidden behind a later local write
            if not in_ext and ev.key not in ext_keys:
                continue
            if not self._cas_outcome_stable(ev_r, ev.value):
                continue
            out.append((ev.key, {}))
        if (current != init_src(ev_r.var) and local_last is None and in_ext
                and self._cas_outcome_stable(ev_r, 0)):
            out.append((init_src(ev_r.var), {}))
        out.extend(self.rmw_cas_extra_mutations(run, key_event, rf_tilde,
                                                 tau_tilde, r, ext_keys))
        return out

    def rmw_cas_extra_mutations(self, run, key_event, rf_tilde, tau_tilde,
                                r, ext_keys):
        ev_r = key_event[r]
        my_write = _write_part(run, key_event, ev_r)
        if my_write is None:
            return
        in_ext = r in ext_keys
        for r2 in tau_tilde:
            if r2 == r or r2[1] != int(Kind.READ) or r2[0] == r[0]:
                continue  # reversal is only meaningful across threads
            if rf_tilde[r2] != my_write.key:
                continue
            ev2 = key_event[r2]
            if (ev_r.tag == "acquire") != (ev2.tag == "acquire"):
                continue
            if ev2.cas_expect is not None:
                new_val = _value_of(key_event, rf_tilde[r])
                if new_val != ev2.cas_expect:
                    continue
            their_write = _write_part(run, key_event, ev2)
            if their_write is None:
                continue  # a failed compare-and-swap has no write to observe
            if not in_ext and their_write.key not in ext_keys:
                continue
            if not self._cas_outcome_stable(ev_r, their_write.value):
                continue
            yield (their_write.key, {r2: rf_tilde[r]})

    def _with_forced_writes(self, tau_p, key_event) -> tuple:
        """Keep every retained atomic read's own write in the schedule.

        The write sits after the read, so the causal past of a new source
        rarely pulls it in, yet the machine will regenerate it (with the
        same event keys, only the value differs) the moment the read
        replays.  Materializing it keeps the verified event set equal to
        what replay produces and lets the verifier enforce the block.
        """
        out = []
        forced = set()
        present = set(tau_p)
        for k in tau_p:
            out.append(k)
            ev = key_event[k]
            if ev.kind == Kind.READ and ev.block is not None:
                wb = self._block_wb[ev.block]
                if wb not in present:
                    out.append(wb)
                    present.add(wb)
                    forced.add(wb)
        return tuple(out), frozenset(forced)

    def _cas_outcome_stable(self, ev_r, new_value) -> bool:
        """Whether re-sourcing ``ev_r`` keeps a compare-and-swap outcome.

        A flipped outcome changes which events the instruction emits, so
        the predicted event set would not replay; such classes are out of
        reach of this mutation scheme (the shipped corpus does not need
        them, see the notes in the readme).
        """
        if ev_r.cas_expect is None:
            return True
        succeeds = new_value == ev_r.cas_expect
        return succeeds == (ev_r.tag == "atomic")

    def _propose(self, key_event, idx, rf_tilde, tau_tilde, pos, r,
                 cand, overrides, below, marked):
        # The causal past must cover the new source and, for swaps, the
        # sources handed to the displaced reads (a previously mutated
        # read's source may sit after the cut in the exploration order).
        targets = [idx[t] for t in [cand, *overrides.values()] if t[0] != INIT]
        if not targets:
            causes: tuple = ()
        else:
            causes = tuple(e for e in tau_tilde[pos[r] + 1:]
                           if any(below[idx[e]] >> t & 1 for t in targets))
        tau_p, forced = self._with_forced_writes(
            tau_tilde[: pos[r] + 1] + causes, key_event)
        reads_p = [k for k in tau_p if k[1] == int(Kind.READ)]
        rf_p = {k: rf_tilde[k] for k in reads_p if k != r}
        rf_p[r] = cand
        rf_p.update(overrides)
        for r2, src in rf_p.items():
            if src[0] != INIT and src[0] == r2[0] and self._local_last.get(r2) != src:
                return  # a swap pushed a read behind a later local write
        if not _locks_feasible(rf_p, key_event):
            return
        pk = tau_tilde[: pos[r] + 1]
        assert pk in self.schedules, "mutated a read whose schedule set is gone"
        # Canonical dedup: two proposing calls may sequence unordered
        # retained events differently without describing different
        # schedules, so the key ignores the order of tau_p.
        sched_key = (tuple(sorted(tau_p)), tuple(sorted(rf_p.items())))
        if sched_key in self._seen[pk]:
            return
        self._seen[pk].add(sched_key)

        inst, _src_of = _schedule_instance(
            self.effective, self.program.k, tau_p, rf_p, key_event)
        self.stats.witness_calls += 1
        verify = verify_tso if self.effective == "tso" else verify_pso
        w = verify(inst)
        if w is None:
            self.stats.witness_failures += 1
            return
        wkeys = tuple(inst.events[eid].key for eid in w.order())
        if self.check:
            witness_rf = rf_of_trace(w)
            got = {inst.events[rd].key: witness_rf[rd] for rd in inst.rf}
            for rd, pair in got.items():
                want = rf_p[rd]
                have = (init_src(rd[3]) if pair.is_init
                        else inst.events[pair.wb].key)
                assert have == want, "witness does not realize the mutation"
        marked_p = frozenset(
            (marked & set(reads_p)) | {k for k in causes if k[1] == int(Kind.READ)}
        )
        self.schedules[pk].append(
            Schedule(tau_p, tuple(sorted(rf_p.items())), wkeys, marked_p, forced))


# -- helpers ---------------------------------------------------------------


def _local_last_writes(run: Run) -> dict:
    """Per read, the last same-variable buffer-write of its own thread
    before it (the only local source the buffer can still expose)."""
    out: dict = {}
    per_thread: dict[int, list[PEvent]] = {}
    for ev in run.events:
        if ev.kind != Kind.WMEM:
            per_thread.setdefault(ev.thread, []).append(ev)
    for evs in per_thread.values():
        evs.sort(key=lambda ev: ev.pos)
        last: dict[str, tuple] = {}
        for ev in evs:
            if ev.kind == Kind.READ:
                out[ev.key] = last.get(ev.var)
            elif ev.kind == Kind.WBUF:
                last[ev.var] = ev.key
    return out


def _value_of(key_event, src) -> int:
    if src[0] == INIT:
        return 0
    return key_event[src].value


def _write_part(run: Run, key_event, ev) -> PEvent | None:
    """The write an atomic read commits, or an acquire's matching release."""
    if ev.tag == "atomic":
        for other in run.events:
            if other.block == ev.block and other.kind == Kind.WBUF:
                return other
        return None
    if ev.tag == "acquire":
        for other in run.events:
            if (other.thread == ev.thread and other.kind == Kind.WBUF
                    and other.var == ev.var and other.tag == "release"
                    and other.pos > ev.pos):
                return other
        return None
    return None


def _locks_feasible(rf_p: dict, key_event) -> bool:
    """Acquires of one lock must consume distinct releases, one may see init.

    The verifier knows nothing about locks; this is exactly the condition
    under which a symbolically realizable map is also machine-executable
    (the critical sections then form one chain from the initial state).
    """
    per_var: dict[str, set] = {}
    for r, src in rf_p.items():
        ev = key_event.get(r)
        if ev is None or ev.tag != "acquire":
            continue
        seen = per_var.setdefault(ev.var, set())
        if src in seen:
            return False
        seen.add(src)
    return True


def _causal_below(run: Run, rf_tilde: dict, exclude) -> list[int]:
    """Forward reachability of program order plus the cross-thread
    reads-from edges of every read except ``exclude``."""
    events = run.events
    idx = {ev.key: i for i, ev in enumerate(events)}
    n = len(events)
    edges: list[tuple[int, int]] = []
    per_main: dict[int, list[int]] = {}
    per_lane: dict[tuple, list[int]] = {}
    for i, ev in enumerate(events):
        if ev.kind == Kind.WMEM:
            per_lane.setdefault(run.lane(ev.thread, ev.var), []).append(i)
        else:
            per_main.setdefault(ev.thread, []).append(i)
    for chain in list(per_main.values()) + list(per_lane.values()):
        edges.extend(zip(chain, chain[1:]))
    pair_wm = _pairing(run, idx)
    edges.extend(pair_wm.items())
    for thr, chain in per_main.items():
        for i in chain:
            if events[i].kind != Kind.FENCE:
                continue
            for j in chain:
                ev = events[j]
                if ev.kind == Kind.WBUF and ev.pos < events[i].pos and j in pair_wm:
                    edges.append((pair_wm[j], i))
    for i, ev in enumerate(events):
        if ev.kind != Kind.READ or ev.key == exclude:
            continue
        src = rf_tilde[ev.key]
        if src[0] == INIT or src[0] == ev.thread:
            continue
        wb_i = idx[src]
        if wb_i in pair_wm:
            edges.append((pair_wm[wb_i], i))
    from .events import transitive_reach

    return transitive_reach(n, edges)


def _pairing(run: Run, idx: dict) -> dict[int, int]:
    """Buffer-write index -> memory-write index, matched FIFO per lane."""
    wbs: dict[tuple, list[int]] = {}
    wms: dict[tuple, list[int]] = {}
    for i, ev in enumerate(run.events):
        lane = run.lane(ev.thread, ev.var) if ev.var is not None else None
        if ev.kind == Kind.WBUF:
            wbs.setdefault(lane, []).append(i)
        elif ev.kind == Kind.WMEM:
            wms.setdefault(lane, []).append(i)
    out = {}
    for lane, bs in wbs.items():
        for b, m in zip(bs, wms.get(lane, ())):
            out[b] = m
    return out


def _schedule_instance(effective: str, k: int, tau_p, rf_p, key_event):
    """Build the verifier instance of a mutation.

    Thread lanes are per-thread prefixes of the run, so instance event
    keys coincide with program event keys; the reads-from map translates
    through source indices.
    """
    per_thread: dict[int, list] = {t: [] for t in range(k)}
    for key in tau_p:
        per_thread[key[0]].append(key_event[key])
    for evs in per_thread.values():
        evs.sort(key=lambda ev: ev.pos)
    present_blocks: dict[int, set] = {}
    for evs in per_thread.values():
        for ev in evs:
            if ev.block is not None:
                present_blocks.setdefault(ev.block, set()).add(ev.kind)
    threads_ops = []
    src_index: dict[tuple, int] = {}
    src = 0
    for t in range(k):
        ops = []
        for ev in per_thread[t]:
            block = ev.block
            if block is not None and Kind.WBUF not in present_blocks[block]:
                block = None  # a lone read needs no atomicity
            if ev.kind == Kind.READ:
                ops.append(Op("read", ev.var, block))
            elif ev.kind == Kind.WBUF:
                ops.append(Op("write", ev.var, block))
            else:
                ops.append(Op("fence"))
            src_index[ev.key] = src
            src += 1
        threads_ops.append(ops)
    rf_src = {}
    for r, s in rf_p.items():
        rf_src[src_index[r]] = None if s[0] == INIT else src_index[s]
    inst = build_instance(effective, threads_ops, rf_src)
    return inst, src_index
