"""Random-instance generation and the differential test runner.

One generated source spec is checked under each requested model by every
verifier variant (fast/naive, with and without the closure pre-pass) and
by the exhaustive oracle; any disagreement is recorded together with a
reproducible dump of the instance.  The same runner accumulates the
invariant counters the acceptance suite asserts on: fence-map
monotonicity along built traces, fence-map multiplicity per thread-event
set, visit-key bounds, witness validity, closure soundness against oracle
witnesses, and realizability monotonicity from tso to pso.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import closure as closure_mod
from .events import Op, build_instance, instance_to_json
from .machine import is_well_formed, rf_of_trace
from .oracle import oracle_realizable
from .pso import naive_verify_pso, verify_pso
from .tso import SearchStats, naive_verify_tso, verify_tso


def gen_instance_spec(rng: random.Random, n_max: int = 10, k_max: int = 3,
                      d_max: int = 3, cross_bias: float = 0.3,
                      fences: bool = True, atomics: float = 0.0):
    """A random proper source spec: thread op lists plus a reads-from map.

    Reads prefer cross-thread sources with probability ``cross_bias`` so
    held-variable and fence-map paths get exercised; a read may also be
    wired to the initial write or (unrealizably) to a hidden one.  With
    ``atomics`` > 0, some events come as fence-guarded atomic read-write
    blocks.
    """
    k = rng.randint(1, k_max)
    d = rng.randint(1, d_max)
    variables = [f"v{i}" for i in range(d)]
    budget = rng.randint(2, n_max)
    threads: list[list[Op]] = [[] for _ in range(k)]
    weight = [0.42, 0.42, 0.16] if fences else [0.5, 0.5, 0.0]
    next_block = 0
    while budget > 0:
        thr = rng.randrange(k)
        if atomics and budget >= 4 and rng.random() < atomics:
            var = rng.choice(variables)
            threads[thr] += [Op("fence"), Op("read", var, next_block),
                             Op("write", var, next_block)]
            next_block += 1
            budget -= 4
            continue
        kind = rng.choices(("read", "write", "fence"), weights=weight)[0]
        cost = 2 if kind == "write" else 1
        if cost > budget:
            kind = "read" if kind == "write" else kind
            cost = 1
        var = rng.choice(variables) if kind != "fence" else None
        threads[thr].append(Op(kind, var))
        budget -= cost

    # Source indices count thread by thread, matching the instance builder.
    src = 0
    reads: list[tuple[int, int, str]] = []
    by_var: dict[str, list[tuple[int, int]]] = {}
    local_before: dict[int, int | None] = {}
    for thr, ops in enumerate(threads):
        last: dict[str, int] = {}
        for op in ops:
            if op.kind == "read":
                reads.append((src, thr, op.var))
                local_before[src] = last.get(op.var)
            elif op.kind == "write":
                by_var.setdefault(op.var, []).append((src, thr))
                last[op.var] = src
            src += 1

    rf: dict[int, int | None] = {}
    for rsrc, thr, var in reads:
        remote = [s for s, wt in by_var.get(var, ()) if wt != thr]
        local = local_before.get(rsrc)
        pool: list[int | None] = list(remote) + [None]
        if local is not None:
            pool.append(local)
        if remote and rng.random() < cross_bias:
            rf[rsrc] = rng.choice(remote)
        else:
            rf[rsrc] = rng.choice(pool)
    return threads, rf


@dataclass
class SuiteResult:
    """Aggregated outcome of one differential run."""

    count: int = 0
    models: tuple = ()
    seed: int = 0
    verdicts: dict = field(default_factory=dict)     # (i, model) -> bool
    disagreements: list = field(default_factory=list)
    closure_unsound: int = 0
    closure_witness_violations: int = 0
    closure_two_thread_gaps: int = 0
    monotonicity_violations: int = 0
    fmap_bound_violations: int = 0
    done_bound_violations: int = 0
    fence_free_fmap_violations: int = 0
    witness_invalid: int = 0
    tso_not_pso: int = 0
    realizable: int = 0
    unrealizable: int = 0
    repro: list = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not (self.disagreements or self.closure_unsound
                    or self.closure_witness_violations or self.monotonicity_violations
                    or self.fmap_bound_violations or self.done_bound_violations
                    or self.fence_free_fmap_violations or self.witness_invalid
                    or self.tso_not_pso)


def _check_witness(inst, trace, result: SuiteResult) -> None:
    order = trace.order()
    if not is_well_formed(order, inst) or rf_of_trace(order, inst) != inst.rf:
        result.witness_invalid += 1


def run_differential(count: int = 1000, seed: int = 0, models=("tso", "pso"),
                     n_max: int = 10, k_max: int = 3, d_max: int = 3,
                     cross_bias: float = 0.3, with_oracle: bool = True,
                     oracle_cap: int = 14, check_invariants: bool = True,
                     atomics: float = 0.0, jobs: int = 1,
                     indices=None) -> SuiteResult:
    if jobs > 1:
        return _run_parallel(count, seed, models, n_max, k_max, d_max,
                             cross_bias, with_oracle, oracle_cap,
                             check_invariants, atomics, jobs)
    result = SuiteResult(count=count, models=tuple(models), seed=seed)
    for i in indices if indices is not None else range(count):
        # One generator per instance: results are independent of batching.
        rng = random.Random(seed * 1_000_003 + i)
        spec = gen_instance_spec(rng, n_max, k_max, d_max, cross_bias,
                                 atomics=atomics)
        tso_verdict = None
        for model in models:
            inst = build_instance(model, *spec)
            fast = verify_tso if inst.effective == "tso" else verify_pso
            naive = naive_verify_tso if inst.effective == "tso" else naive_verify_pso
            clo = closure_mod.compute_closure(inst)
            verdicts = {}
            for name, algo in (("fast", fast), ("naive", naive)):
                for use_clo in (False, True):
                    stats = SearchStats()
                    if use_clo and clo is None:
                        verdicts[(name, True)] = False
                        continue
                    w = algo(inst, closure=clo if use_clo else None, stats=stats,
                             **({"check_invariants": check_invariants}
                                if name == "fast" else {}))
                    verdicts[(name, use_clo)] = w is not None
                    if w is not None:
                        _check_witness(inst, w, result)
                    result.monotonicity_violations += stats.monotonicity_violations
                    if check_invariants and name == "fast":
                        if inst.effective == "tso":
                            if stats.done_insertions > stats.done_bound:
                                result.done_bound_violations += 1
                        else:
                            bound = 2 ** (inst.k * inst.d)
                            if stats.fmap_per_local_max > bound:
                                result.fmap_bound_violations += 1
                            if (not stats.fences_present
                                    and stats.fmap_per_local_max > 1):
                                result.fence_free_fmap_violations += 1
            row = set(verdicts.values())
            if with_oracle:
                ok, witness = oracle_realizable(inst, cap=oracle_cap)
                row.add(ok)
                if ok:
                    if clo is None:
                        result.closure_unsound += 1
                    elif not closure_mod.respects(witness, clo):
                        result.closure_witness_violations += 1
                elif inst.k <= 2 and clo is not None:
                    result.closure_two_thread_gaps += 1
            verdict = row.pop() if len(row) == 1 else None
            if verdict is None:
                result.disagreements.append((i, model, dict(verdicts)))
                result.repro.append(instance_to_json(inst) | {"model": model})
                continue
            result.verdicts[(i, model)] = verdict
            result.realizable += 1 if verdict else 0
            result.unrealizable += 0 if verdict else 1
            if model == "tso":
                tso_verdict = verdict
            if model == "pso" and tso_verdict is True and verdict is False:
                result.tso_not_pso += 1
    return result


def _run_slice(args) -> SuiteResult:
    kwargs, indices = args
    return run_differential(indices=indices, **kwargs)


def _run_parallel(count, seed, models, n_max, k_max, d_max, cross_bias,
                  with_oracle, oracle_cap, check_invariants, atomics,
                  jobs) -> SuiteResult:
    import multiprocessing

    kwargs = dict(count=count, seed=seed, models=models, n_max=n_max,
                  k_max=k_max, d_max=d_max, cross_bias=cross_bias,
                  with_oracle=with_oracle, oracle_cap=oracle_cap,
                  check_invariants=check_invariants, atomics=atomics)
    chunks = [list(range(count))[i::jobs] for i in range(jobs)]
    with multiprocessing.Pool(jobs) as pool:
        parts = pool.map(_run_slice, [(kwargs, c) for c in chunks if c])
    merged = SuiteResult(count=count, models=tuple(models), seed=seed)
    for part in parts:
        for name in ("closure_unsound", "closure_witness_violations",
                     "closure_two_thread_gaps", "monotonicity_violations",
                     "fmap_bound_violations", "done_bound_violations",
                     "fence_free_fmap_violations", "witness_invalid",
                     "tso_not_pso", "realizable", "unrealizable"):
            setattr(merged, name, getattr(merged, name) + getattr(part, name))
        merged.verdicts.update(part.verdicts)
        merged.disagreements.extend(part.disagreements)
        merged.repro.extend(part.repro)
    merged.disagreements.sort(key=lambda d: d[0])
    return merged
