"""PSO decision procedure: spurious/pending writes, fence maps, search."""

import random

from rfcheck import (SearchStats, Trace, build_instance, fence_map,
                     is_spurious, is_well_formed, naive_verify_pso,
                     naive_verify_tso, oracle_realizable, pending_writes,
                     pso_executable, rf_of_trace, verify_pso, verify_tso)
from rfcheck.events import Op
from rfcheck.fuzz import gen_instance_spec
from rfcheck.pso import neb_map

from litmus import LITMUS, eid, eids


def buffered_self_read():
    # one thread: store x, then read it back
    return build_instance("pso", [[Op("write", "x"), Op("read", "x")]], {1: 0})


def test_spurious_and_pending_along_buffer_read_linearization():
    inst = buffered_self_read()
    wb, r, wm = eids(inst, "t0.b0(x)", "t0.r1(x)", "t0.m0(x)")
    t = Trace.empty(inst)
    assert pending_writes(t, 0) == [] and not is_spurious(wm, t)
    t = t.extend(wb)
    assert pending_writes(t, 0) == [wm] and not is_spurious(wm, t)
    t = t.extend(r)  # the read came from the buffer; the flush is moot now
    assert pending_writes(t, 0) == [wm] and is_spurious(wm, t)
    t = t.extend(wm)
    assert pending_writes(t, 0) == [] and is_spurious(wm, t)


def test_memory_read_makes_the_write_not_spurious():
    inst = buffered_self_read()
    wb, r, wm = eids(inst, "t0.b0(x)", "t0.r1(x)", "t0.m0(x)")
    t = Trace.empty(inst).extend(wb).extend(wm).extend(r)
    assert not is_spurious(wm, t)


def test_write_awaited_by_a_read_is_not_spurious():
    inst = build_instance("pso", [[Op("write", "x")], [Op("read", "x")]], {1: 0})
    t = Trace.empty(inst).extend(eid(inst, "t0.b0(x)"))
    assert not is_spurious(eid(inst, "t0.m0(x)"), t)


def pso_exec_scene():
    """One writer ahead, one writer blocked, per the held-variable rule.

    Thread 1 buffered y then x; its y-write is flushed and awaited by the
    reader of y, so thread 3's own y-write (and hence its fence and its
    reader) are stuck, while thread 1's x-write, the x-reader and thread
    1's fence may all go.
    """
    threads = [
        [Op("read", "x")],
        [Op("write", "y"), Op("write", "x"), Op("fence")],
        [Op("read", "y")],
        [Op("write", "y"), Op("fence")],
        [Op("read", "y")],
    ]
    rf = {0: 2, 4: 1, 7: 5}
    inst = build_instance("pso", threads, rf)
    t = Trace.empty(inst)
    for lb in ("t1.b0(y)", "t1.b1(x)", "t1.m0(y)", "t3.b0(y)"):
        t = t.extend(eid(inst, lb))
    return inst, t


def test_pso_executability_scene():
    inst, t = pso_exec_scene()
    assert pso_executable(eid(inst, "t1.m0(x)"), t)
    assert pso_executable(eid(inst, "t0.r0(x)"), t)
    assert pso_executable(eid(inst, "t1.f2"), t)
    assert pso_executable(eid(inst, "t2.r0(y)"), t)
    assert not pso_executable(eid(inst, "t3.m0(y)"), t)  # y held
    assert not pso_executable(eid(inst, "t3.f1"), t)
    assert not pso_executable(eid(inst, "t4.r0(y)"), t)


def test_fence_of_thread_with_empty_buffers_is_executable():
    inst = build_instance("pso", [[Op("fence")]], {})
    assert pso_executable(eid(inst, "t0.f0"), Trace.empty(inst))


def fence_map_scene():
    """Two held variables force a fence to wait for the later of two reads."""
    threads = [
        [Op("write", "y"), Op("write", "x")],
        [Op("read", "y"), Op("read", "x")],
        [Op("write", "y"), Op("write", "x"), Op("fence")],
        [Op("read", "y")],
    ]
    rf = {2: 0, 3: 1, 7: 4}
    inst = build_instance("pso", threads, rf)
    t = Trace.empty(inst)
    for lb in ("t0.b0(y)", "t0.b1(x)", "t0.m0(y)", "t0.m0(x)",
               "t2.b0(y)", "t2.b1(x)"):
        t = t.extend(eid(inst, lb))
    return inst, t


def test_fence_map_points_at_the_last_blocking_read():
    inst, t = fence_map_scene()
    fm = fence_map(t)
    # thread 2 must wait for thread 1's second read (1-based index 2)
    assert fm[2][1] == 2
    assert all(v == 0 for row in (fm[0], fm[1], fm[3]) for v in row)


def test_fence_map_rows_without_fences_are_zero():
    inst = buffered_self_read()
    t = Trace.empty(inst)
    assert fence_map(t) == ((0,),)


def test_spurious_flush_leaves_fence_map_unchanged():
    inst = buffered_self_read()
    wb, r, wm = eids(inst, "t0.b0(x)", "t0.r1(x)", "t0.m0(x)")
    t = Trace.empty(inst).extend(wb).extend(r)
    assert is_spurious(wm, t)
    assert fence_map(t) == fence_map(t.extend(wm))


def test_litmus_verdicts_under_pso():
    for name, (make, verdicts) in LITMUS.items():
        inst = make("pso")
        want = verdicts["pso"]
        assert (verify_pso(inst) is not None) == want, name
        assert (naive_verify_pso(inst) is not None) == want, name


def test_per_variable_reorder_needs_pso():
    make, _ = LITMUS["own_var_reorder"]
    assert verify_tso(make("tso")) is None
    w = verify_pso(make("pso"))
    assert w is not None and rf_of_trace(w) == make("pso").rf


def test_agreement_with_oracle_and_monotonicity_checks():
    rng = random.Random(4321)
    collected_stats = []
    for _ in range(300):
        spec = gen_instance_spec(rng)
        inst = build_instance("pso", *spec)
        stats = SearchStats()
        fast = verify_pso(inst, stats=stats, check_invariants=True)
        naive = naive_verify_pso(inst)
        ok, _ = oracle_realizable(inst)
        assert (fast is not None) == (naive is not None) == ok
        assert stats.monotonicity_violations == 0
        assert stats.fmap_per_local_max <= 2 ** (inst.k * inst.d)
        if not stats.fences_present:
            assert stats.fmap_per_local_max <= 1
        collected_stats.append(stats)
        if fast is not None:
            assert is_well_formed(fast.order(), inst)
            assert rf_of_trace(fast) == inst.rf
        # realizability only grows with relaxation
        tso_inst = build_instance("tso", *spec)
        if verify_tso(tso_inst) is not None:
            assert ok
    assert any(s.fences_present for s in collected_stats)


def test_block_observing_a_foreign_write_is_explored():
    # The atomic read-write's own flush only becomes executable once the
    # observed foreign write is placed in front of the read.
    threads = [
        [Op("fence"), Op("read", "x", 0), Op("write", "x", 0)],
        [Op("write", "x"), Op("read", "x")],
    ]
    inst = build_instance("pso", threads, {1: 3, 4: 2})
    assert oracle_realizable(inst)[0]
    assert verify_pso(inst) is not None
    assert naive_verify_pso(inst) is not None


def test_agreement_with_atomic_blocks_in_the_mix():
    rng = random.Random(606)
    for _ in range(150):
        spec = gen_instance_spec(rng, n_max=11, atomics=0.35)
        for model in ("tso", "pso"):
            inst = build_instance(model, *spec)
            fast = verify_tso if model == "tso" else verify_pso
            naive = naive_verify_tso if model == "tso" else naive_verify_pso
            ok, _ = oracle_realizable(inst, cap=16)
            assert (fast(inst) is not None) == (naive(inst) is not None) == ok


def test_equal_thread_events_and_neb_map_pin_the_fence_map():
    rng = random.Random(77)
    groups = {}
    for _ in range(120):
        inst = build_instance("pso", *gen_instance_spec(rng, n_max=8))
        ok, wit = oracle_realizable(inst)
        if not ok:
            continue
        order = wit.order()
        t = Trace.empty(inst)
        for e in order:
            t = t.extend(e, enforce_blocks=False)
            key = (id(inst), t.counts[: inst.k], neb_map(t))
            fm = fence_map(t)
            groups.setdefault(key, set()).add(fm)
    assert groups and all(len(v) == 1 for v in groups.values())
