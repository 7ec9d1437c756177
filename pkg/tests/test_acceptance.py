"""Acceptance gate: one test and one printed pass/fail line per criterion.

The differential suite (1000 seeded random instances per model, n <= 10,
k <= 3, d <= 3, invariant checks on) runs once per session and feeds the
criteria that assert over it.
"""

import time

import pytest

from rfcheck import (compute_closure, explore, naive_verify_pso,
                     naive_verify_tso, oracle_rf_classes, verify_pso,
                     verify_tso)
from rfcheck.corpus import benchmark
from rfcheck.fuzz import run_differential
from rfcheck.litmus import BUILDERS, EXPECTED

SUITE_SEED = 2026


def _line(num: int, name: str, ok: bool) -> None:
    print(f"ACCEPTANCE {num} {name}: {'PASS' if ok else 'FAIL'}")
    assert ok, f"criterion {num} ({name})"


@pytest.fixture(scope="session")
def suite():
    t0 = time.monotonic()
    result = run_differential(count=1000, seed=SUITE_SEED, models=("tso", "pso"),
                              n_max=10, k_max=3, d_max=3, with_oracle=True,
                              check_invariants=True)
    return result, time.monotonic() - t0


def test_criterion_1_litmus_verdict_matrix():
    t0 = time.monotonic()
    ok = True
    for name, make in BUILDERS.items():
        for model in ("sc", "tso", "pso"):
            inst = make(model)
            fast = verify_tso if inst.effective == "tso" else verify_pso
            naive = (naive_verify_tso if inst.effective == "tso"
                     else naive_verify_pso)
            clo = compute_closure(inst)
            for algo in (fast, naive):
                for use in (None, clo):
                    if use is None:
                        verdict = algo(inst) is not None
                    elif clo is None:
                        verdict = False
                    else:
                        verdict = algo(inst, closure=clo) is not None
                    ok &= verdict == EXPECTED[name][model]
    elapsed = time.monotonic() - t0
    _line(1, "litmus verdict matrix (12 verdicts each)", ok and elapsed < 1.0)


def test_criterion_2_differential_agreement(suite):
    result, elapsed = suite
    ok = (not result.disagreements
          and result.realizable + result.unrealizable == 2 * result.count
          and elapsed < 300.0)
    _line(2, "fast = naive = oracle on 1000 instances per model", ok)


def test_criterion_3_closure_soundness(suite):
    result, _ = suite
    ok = result.closure_unsound == 0 and result.closure_witness_violations == 0
    _line(3, "closure never rejects realizable; witnesses respect it", ok)


def test_criterion_4_exploration_optimality():
    corpus = [("store_buffer", 1), ("lock_handoff", 1)]
    corpus += [("floating_read", u) for u in range(1, 5)]
    corpus += [("lastwrite", u) for u in range(2, 5)]
    ok = True
    for name, unroll in corpus:
        prog = benchmark(name, unroll)
        for model in ("tso", "pso"):
            stats, classes = explore(prog, model, collect_classes=True)
            want, _ = oracle_rf_classes(prog, model)
            distinct = len(set(classes)) == len(classes)
            ok &= distinct and set(classes) == want
            ok &= stats.classes_explored == len(want)
            ok &= stats.maximal_traces == stats.classes_explored
    _line(4, "explored classes equal the oracle partitioning exactly", ok)


def test_criterion_5_corpus_class_counts():
    t0 = time.monotonic()
    ok = True
    for model in ("tso", "pso"):
        stats, _ = explore(benchmark("store_buffer", 1), model)
        ok &= stats.classes_explored == 4
    for unroll in range(3, 8):
        for model in ("tso", "pso"):
            stats, _ = explore(benchmark("floating_read", unroll), model)
            ok &= stats.classes_explored == unroll + 1
    for unroll in range(3, 10):
        for model in ("tso", "pso"):
            stats, _ = explore(benchmark("lastwrite", unroll), model)
            ok &= stats.classes_explored == unroll
    elapsed = time.monotonic() - t0
    _line(5, "class counts: 4 / U+1 / U at desk scale", ok and elapsed < 30.0)


def test_criterion_6_fence_map_monotonicity(suite):
    result, _ = suite
    ok = result.monotonicity_violations == 0 and result.fmap_bound_violations == 0
    _line(6, "fence-map monotonicity and multiplicity bound", ok)


def test_criterion_7_state_bounds(suite):
    result, _ = suite
    ok = (result.done_bound_violations == 0
          and result.fence_free_fmap_violations == 0)
    _line(7, "visit keys within flush-count product; fence-free collapse", ok)


def test_criterion_8_witness_validity(suite):
    result, _ = suite
    ok = result.witness_invalid == 0
    _line(8, "every returned witness is well-formed and realizes the map", ok)
