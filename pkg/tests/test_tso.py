"""TSO decision procedure: executability, search, baseline agreement."""

import random

from rfcheck import (SearchStats, Trace, build_instance, is_well_formed,
                     naive_verify_tso, oracle_realizable, rf_of_trace,
                     tso_executable, verify_tso)
from rfcheck.events import Op
from rfcheck.fuzz import gen_instance_spec

from litmus import LITMUS, eid


def reads_scene():
    """Three readers around one writer thread; only some reads may run.

    Thread 2 wrote x and y (x already flushed); its own trailing read of y
    observes the local buffer.  Thread 0 reads x twice, thread 1 reads y.
    """
    threads = [
        [Op("read", "x"), Op("read", "x")],
        [Op("read", "y")],
        [Op("write", "x"), Op("write", "y"), Op("read", "y")],
    ]
    rf = {0: 3, 1: 3, 2: 4, 5: 4}
    inst = build_instance("tso", threads, rf)
    trace = Trace.empty(inst)
    for lb in ("t2.b0(x)", "t2.b1(y)", "t2.m0(x)"):
        trace = trace.extend(eid(inst, lb))
    return inst, trace


def test_read_executability_scene():
    inst, trace = reads_scene()
    assert tso_executable(eid(inst, "t0.r0(x)"), trace)
    assert tso_executable(eid(inst, "t2.r2(y)"), trace)  # local buffer read
    # second read of x blocked by the lower-set step, reader of y by its
    # still-buffered observation
    assert not tso_executable(eid(inst, "t0.r1(x)"), trace)
    assert not tso_executable(eid(inst, "t1.r0(y)"), trace)


def mwrites_scene():
    """Four pending flushes; exactly one may go.

    Thread 1 consumed x and y, wrote z (unflushed), and will read z from
    thread 4.  Flushing thread 3's y-write would overwrite a held value;
    flushing thread 4's z-write would overtake thread 1's own z-write.
    """
    threads = [
        [Op("write", "x"), Op("write", "y")],
        [Op("read", "x"), Op("read", "y"), Op("write", "z"), Op("read", "z")],
        [Op("write", "x")],
        [Op("write", "y")],
        [Op("write", "z")],
    ]
    rf = {2: 0, 3: 1, 5: 8}
    inst = build_instance("tso", threads, rf)
    trace = Trace.empty(inst)
    for lb in ("t0.b0(x)", "t0.b1(y)", "t0.m0(x)", "t0.m1(y)",
               "t2.b0(x)", "t3.b0(y)", "t4.b0(z)", "t1.r0(x)"):
        trace = trace.extend(eid(inst, lb))
    return inst, trace


def test_memory_write_executability_scene():
    inst, trace = mwrites_scene()
    assert tso_executable(eid(inst, "t2.m0(x)"), trace)
    assert not tso_executable(eid(inst, "t1.m0(z)"), trace)  # buffer-write missing
    assert not tso_executable(eid(inst, "t3.m0(y)"), trace)  # y held for t1.r1
    assert not tso_executable(eid(inst, "t4.m0(z)"), trace)  # t1.m0(z) not flushed


def test_event_with_absent_predecessor_is_not_executable():
    inst, trace = reads_scene()
    assert not tso_executable(eid(inst, "t2.m1(y)"), trace.parent or trace)


def test_litmus_verdicts_fast_and_naive():
    for name, (make, verdicts) in LITMUS.items():
        for model in ("sc", "tso"):
            inst = make(model)
            want = verdicts[model]
            assert (verify_tso(inst) is not None) == want, (name, model)
            assert (naive_verify_tso(inst) is not None) == want, (name, model)


def test_returned_witnesses_realize_the_instance():
    for name, (make, verdicts) in LITMUS.items():
        for model in ("sc", "tso"):
            if not verdicts[model]:
                continue
            inst = make(model)
            for algo in (verify_tso, naive_verify_tso):
                w = algo(inst)
                assert is_well_formed(w.order(), inst)
                assert rf_of_trace(w) == inst.rf, (name, model)


def test_empty_instance_yields_empty_witness():
    inst = build_instance("tso", [], {})
    assert verify_tso(inst).order() == []


def test_agreement_with_oracle_on_random_instances():
    rng = random.Random(1234)
    for _ in range(300):
        inst = build_instance("tso", *gen_instance_spec(rng))
        fast = verify_tso(inst, check_invariants=True) is not None
        naive = naive_verify_tso(inst) is not None
        ok, _ = oracle_realizable(inst)
        assert fast == naive == ok


def test_visit_key_budget_and_naive_explores_no_less():
    make, _ = LITMUS["cross_reads_stale"]
    inst = make("tso")
    s_fast, s_naive = SearchStats(), SearchStats()
    assert verify_tso(inst, stats=s_fast, check_invariants=True) is not None
    assert naive_verify_tso(inst, stats=s_naive) is not None
    assert s_fast.done_insertions <= s_fast.done_bound
    assert s_naive.visited >= s_fast.visited


def test_states_stay_within_per_thread_flush_bound():
    rng = random.Random(99)
    for _ in range(100):
        inst = build_instance("tso", *gen_instance_spec(rng))
        stats = SearchStats()
        verify_tso(inst, stats=stats, check_invariants=True)
        assert stats.done_insertions <= stats.done_bound
