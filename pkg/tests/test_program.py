"""DSL parsing and the program machine."""

import pytest

from rfcheck import parse_program
from rfcheck.corpus import benchmark, benchmark_text
from rfcheck.events import Kind
from rfcheck.program import (BackwardJump, DslSyntaxError, Run,
                             UnknownVariable, enabled_events,
                             maximal_extension)


def test_parse_the_cross_store_program():
    prog = benchmark("store_buffer")
    assert prog.k == 2
    assert prog.threads[0][1][0] == ("store", "x", ("const", 1))
    assert prog.threads[0][1][1] == ("load", "r0", "y")
    assert prog.variables == ("x", "y")


def test_empty_program_is_valid():
    prog = parse_program("")
    assert prog.k == 0
    assert Run.start(prog, "tso").maximal()


def test_backward_goto_is_rejected():
    text = """
thread t
  top:
  set r0 1
  if r0 == 1 goto top
"""
    with pytest.raises(BackwardJump):
        parse_program(text)


def test_register_use_before_assignment_is_rejected():
    with pytest.raises(UnknownVariable):
        parse_program("thread t\n  add r0 1\n")


def test_undeclared_global_is_rejected_when_declared():
    with pytest.raises(UnknownVariable):
        parse_program("global x\nthread t\n  store y 1\n")


def test_syntax_errors_carry_positions():
    with pytest.raises(DslSyntaxError) as err:
        parse_program("thread t\n  bogus x\n")
    assert "line 2" in str(err.value)


def test_forward_branching_and_locals():
    text = """
thread t
  set r0 3
  add r0 4
  if r0 == 7 goto skip
  store x 1
skip:
  store y r0
"""
    prog = parse_program(text)
    run = Run.start(prog, "tso")
    maximal_extension(run)
    assert run.mem == {"y": 7}
    assert run.assert_failures == []


def test_assert_failures_are_recorded_not_raised():
    prog = parse_program("thread t\n  set r0 1\n  assert r0 == 2\n")
    run = Run.start(prog, "tso")
    maximal_extension(run)
    assert len(run.assert_failures) == 1


def test_fresh_cross_store_run_enables_only_the_stores():
    prog = benchmark("store_buffer")
    run = Run.start(prog, "tso")
    assert enabled_events(prog, run, "tso") == [("wB", 0, "x"), ("wB", 1, "y")]


def test_fence_is_not_enabled_with_a_nonempty_buffer():
    prog = parse_program("thread t\n  store x 1\n  fence\n")
    run = Run.start(prog, "tso")
    run.do_step(("t", 0))
    previews = run.enabled_previews()
    assert ("fence", 0, None) not in previews
    assert ("wM", 0, "x") in previews
    run.do_step(("m", run.lane(0, "x")))
    assert ("fence", 0, None) in run.enabled_previews()


def test_taken_lock_blocks_the_other_acquire():
    prog = benchmark("lock_handoff", 1)
    run = Run.start(prog, "tso")
    run.do_step(("t", 0))  # thread a acquires
    assert ("acquire", 1, "m") not in run.enabled_previews()
    run.do_step(("t", 0))  # store
    run.do_step(("m", run.lane(0, "x")))
    run.do_step(("t", 0))  # release
    assert ("acquire", 1, "m") in run.enabled_previews()


def test_release_requires_drained_buffer_under_tso_only():
    text = "thread t\n  lock m\n  store x 1\n  unlock m\n"
    tso = Run.start(parse_program(text), "tso")
    tso.do_step(("t", 0)), tso.do_step(("t", 0))
    assert ("release", 0, "m") not in tso.enabled_previews()
    pso = Run.start(parse_program(text), "pso")
    pso.do_step(("t", 0)), pso.do_step(("t", 0))
    assert ("release", 0, "m") in pso.enabled_previews()


def test_sc_lowering_inserts_a_fence_after_each_store():
    prog = parse_program("thread t\n  store x 1\n  store y 2\n")
    run = Run.start(prog, "sc")
    maximal_extension(run)
    kinds = [ev.kind for ev in run.events]
    assert kinds == [Kind.WBUF, Kind.WMEM, Kind.FENCE, Kind.WBUF, Kind.WMEM,
                     Kind.FENCE]


def test_fetch_and_add_emits_fence_then_an_atomic_block():
    prog = parse_program("thread t\n  faa r0 x 5\n")
    run = Run.start(prog, "tso")
    maximal_extension(run)
    kinds = [(ev.kind, ev.block is not None) for ev in run.events]
    assert kinds == [(Kind.FENCE, False), (Kind.READ, True), (Kind.WBUF, True),
                     (Kind.WMEM, True)]
    assert run.mem["x"] == 5 and run.regs[0]["r0"] == 0


def test_cas_success_and_failure_shapes():
    win = Run.start(parse_program("thread t\n  cas x 0 9\n"), "tso")
    maximal_extension(win)
    assert [ev.kind for ev in win.events] == [Kind.FENCE, Kind.READ, Kind.WBUF,
                                              Kind.WMEM]
    lose = Run.start(parse_program("thread t\n  store x 3\n  cas x 0 9\n"), "tso")
    maximal_extension(lose)
    assert [ev.kind for ev in lose.events][-1] == Kind.READ
    assert lose.mem["x"] == 3


def test_replaying_a_maximal_run_reproduces_it():
    for name, unroll in (("store_buffer", 1), ("lock_handoff", 1), ("rmw_pair", 1)):
        prog = benchmark(name, unroll)
        for model in ("sc", "tso", "pso"):
            run = Run.start(prog, model)
            maximal_extension(run)
            keys = [ev.key for ev in run.events]
            again = Run.start(prog, model)
            again.replay(keys)
            assert [ev.key for ev in again.events] == keys
            assert again.rf == run.rf
            assert again.maximal()


def test_memory_always_holds_the_last_flushed_value():
    import random

    rng = random.Random(11)
    prog = benchmark("lastwrite", 3)
    for model in ("tso", "pso"):
        run = Run.start(prog, model)
        while True:
            steps = run.enabled_steps()
            if not steps:
                break
            run.do_step(rng.choice(steps))
            last = {}
            for ev in run.events:
                if int(ev.kind) == 2:  # memory-write
                    last[ev.var] = ev.value
            for var, val in run.mem.items():
                assert last.get(var, 0) == val


def test_benchmark_generator_rejects_unknown_names():
    with pytest.raises(ValueError):
        benchmark_text("nonesuch")
