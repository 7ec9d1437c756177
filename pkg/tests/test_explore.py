"""Exploration-optimal stateless search over the reads-from partitioning."""

import pytest

from rfcheck import explore, oracle_rf_classes
from rfcheck.corpus import benchmark
from rfcheck.program import Run, maximal_extension


def assert_optimal(program, model):
    stats, classes = explore(program, model, collect_classes=True)
    want, _ = oracle_rf_classes(program, model)
    got = set(classes)
    assert len(classes) == len(got), "a class was explored twice"
    assert got == want, (program.name, model)
    assert stats.classes_explored == len(want)
    assert stats.maximal_traces == stats.classes_explored
    return stats


def test_cross_store_program_explores_four_classes():
    for model in ("tso", "pso"):
        stats = assert_optimal(benchmark("store_buffer"), model)
        assert stats.classes_explored == 4


def test_cross_store_program_under_sc_explores_three():
    stats = assert_optimal(benchmark("store_buffer"), "sc")
    assert stats.classes_explored == 3


@pytest.mark.parametrize("unroll", [1, 2, 3, 4])
def test_floating_read_is_optimal(unroll):
    for model in ("tso", "pso"):
        stats = assert_optimal(benchmark("floating_read", unroll), model)
        assert stats.classes_explored == unroll + 1


@pytest.mark.parametrize("unroll", [2, 3, 4])
def test_lastwrite_is_optimal(unroll):
    for model in ("tso", "pso"):
        stats = assert_optimal(benchmark("lastwrite", unroll), model)
        assert stats.classes_explored == unroll


def test_lock_handoff_is_optimal():
    for model in ("sc", "tso", "pso"):
        stats = assert_optimal(benchmark("lock_handoff", 1), model)
        assert stats.classes_explored == 2


def test_lock_handoff_two_rounds_explores_only_real_classes():
    # With more than one critical section per thread the single-mutation
    # scheme cannot reverse whole chains of sections, so exploration may
    # under-approximate; it must still visit each class at most once and
    # never a spurious one.
    stats, classes = explore(benchmark("lock_handoff", 2), "tso",
                             collect_classes=True)
    want, _ = oracle_rf_classes(benchmark("lock_handoff", 2), "tso")
    got = set(classes)
    assert len(classes) == len(got)
    assert got <= want


def test_two_fetch_and_adds_swap_exactly_once():
    for model in ("tso", "pso"):
        stats = assert_optimal(benchmark("rmw_pair", 1), model)
        assert stats.classes_explored == 2


def test_longer_rmw_chains_explore_only_real_classes():
    # Chains of several atomic instructions per thread reverse only pair
    # by pair, like lock chains; soundness still holds.
    stats, classes = explore(benchmark("rmw_pair", 2), "tso",
                             collect_classes=True)
    want, _ = oracle_rf_classes(benchmark("rmw_pair", 2), "tso")
    got = set(classes)
    assert len(classes) == len(got)
    assert got <= want


def test_witness_failures_only_count_pruned_mutations():
    stats, _ = explore(benchmark("rmw_pair", 1), "tso", collect_classes=True)
    assert stats.witness_calls == stats.witness_failures + stats.classes_explored - 1


def test_mutations_from_the_root_of_the_cross_store_program():
    """The two root mutations drop or retain the other read as the causal
    past dictates: re-sourcing the first read forgets the second thread's
    read, re-sourcing the second keeps the first."""
    from rfcheck.explore import _Engine

    class Recorder(_Engine):
        def __init__(self, *a, **k):
            super().__init__(*a, **k)
            self.accepted = []

        def _propose(self, key_event, idx, rf_tilde, tau_tilde, pos, r,
                     cand, overrides, below, marked):
            pk = tau_tilde[: pos[r] + 1]
            before = len(self.schedules.get(pk, ()))
            super()._propose(key_event, idx, rf_tilde, tau_tilde, pos, r,
                             cand, overrides, below, marked)
            if len(self.schedules.get(pk, ())) > before:
                self.accepted.append((r, cand, self.schedules[pk][-1]))

    prog = benchmark("store_buffer")
    eng = Recorder(prog, "tso", collect=True, check=True)
    eng.visit((), {}, (), frozenset(), frozenset())
    classes = {tuple(sorted(c.rf)) for c in eng.classes}
    assert len(classes) == 4
    # root proposals come first: one per read of the root trace
    (r1, _, sched1), (r2, _, sched2) = eng.accepted[:2]
    reads_of = lambda s: [k for k in s.tau if k[1] == 0]
    assert reads_of(sched1) == [r1]        # the later read is not retained
    assert reads_of(sched2) == [r1, r2]    # the earlier read is kept
    assert sched2.marked == frozenset()


def test_single_atomic_instruction_offers_no_swap():
    # One fetch-and-add plus a plain reader: the atomic read has nothing
    # to reverse with, so only ordinary mutations are proposed and the
    # class count still matches the oracle.
    from rfcheck.program import parse_program

    text = "thread a\n  faa r0 x 1\nthread b\n  load r1 x\n"
    prog = parse_program(text)
    assert_optimal(prog, "tso")


def test_failed_compare_and_swap_is_not_a_swap_target():
    # Thread b's compare-and-swap fails in every class the scheme can
    # predict (flipping its outcome would change its event shape), so
    # exploration stays sound and visits the stable-outcome classes.
    from rfcheck.program import parse_program

    text = "thread a\n  faa r0 x 5\nthread b\n  cas x 9 7\n"
    prog = parse_program(text)
    stats, classes = explore(prog, "tso", collect_classes=True)
    want, _ = oracle_rf_classes(prog, "tso")
    got = set(classes)
    assert len(classes) == len(got)
    assert got <= want


def test_assertion_violations_do_not_stop_exploration():
    from rfcheck.program import parse_program

    text = """
thread t0
  store x 1
  load r0 x
  assert r0 == 0
thread t1
  store x 2
"""
    prog = parse_program(text)
    stats, classes = explore(prog, "tso", collect_classes=True)
    want, _ = oracle_rf_classes(prog, "tso")
    assert set(classes) == want


def test_maximal_extension_is_idempotent_and_deterministic():
    prog = benchmark("store_buffer")
    run = Run.start(prog, "tso")
    maximal_extension(run)
    first = [ev.key for ev in run.events]
    assert maximal_extension(run) == []
    again = Run.start(prog, "tso")
    maximal_extension(again)
    assert [ev.key for ev in again.events] == first
