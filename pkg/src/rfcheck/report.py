"""Desk-scale result reproduction: tables, delimited output and figures.

``write_report`` drives three small studies into an output directory:

* the litmus verdict matrix (three instances, three models, fast and
  naive verifiers, closure on and off),
* reads-from class counts of the benchmark corpus across unroll bounds,
* a fast-versus-naive visited-state comparison over a random instance
  sample.

Each study lands as a CSV next to a rendered PNG figure, plus a
``summary.json`` tying the run together.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend first)

from . import litmus
from .closure import compute_closure
from .corpus import benchmark
from .events import build_instance, instance_to_json
from .explore import explore
from .fuzz import gen_instance_spec
from .pso import naive_verify_pso, verify_pso
from .tso import SearchStats, naive_verify_tso, verify_tso

MODELS = ("sc", "tso", "pso")


def litmus_matrix() -> list[dict]:
    rows = []
    for name, make in litmus.BUILDERS.items():
        for model in MODELS:
            inst = make(model)
            fast = verify_tso if inst.effective == "tso" else verify_pso
            naive = naive_verify_tso if inst.effective == "tso" else naive_verify_pso
            clo = compute_closure(inst)
            for algo_name, algo in (("fast", fast), ("naive", naive)):
                for use_clo in (False, True):
                    if use_clo and clo is None:
                        verdict = False
                    else:
                        verdict = algo(inst, closure=clo if use_clo else None) is not None
                    rows.append({
                        "instance": name, "model": model, "algo": algo_name,
                        "closure": "on" if use_clo else "off",
                        "verdict": "realizable" if verdict else "unrealizable",
                        "expected": litmus.EXPECTED[name][model],
                    })
    return rows


def corpus_class_counts() -> list[dict]:
    plan = [("store_buffer", (1,)), ("floating_read", range(1, 6)),
            ("lastwrite", range(2, 7)), ("lock_handoff", (1,)),
            ("rmw_pair", (1,))]
    rows = []
    for name, unrolls in plan:
        for u in unrolls:
            prog = benchmark(name, u)
            for model in MODELS:
                stats, _ = explore(prog, model, check=False)
                rows.append({"program": name, "unroll": u, "model": model,
                             "classes": stats.classes_explored,
                             "witness_calls": stats.witness_calls})
    return rows


def verifier_state_sample(count: int = 120, seed: int = 7) -> list[dict]:
    import random

    rows = []
    for i in range(count):
        rng = random.Random(seed * 1_000_003 + i)
        spec = gen_instance_spec(rng)
        for model in ("tso", "pso"):
            inst = build_instance(model, *spec)
            fast = verify_tso if model == "tso" else verify_pso
            naive = naive_verify_tso if model == "tso" else naive_verify_pso
            sf, sn = SearchStats(), SearchStats()
            realizable = fast(inst, stats=sf) is not None
            naive(inst, stats=sn)
            rows.append({"instance": i, "model": model,
                         "realizable": realizable,
                         "fast_states": sf.visited, "naive_states": sn.visited})
    return rows


def _write_csv(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def _fig_class_counts(rows: list[dict], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    scalable = ("floating_read", "lastwrite")
    for name, marker in zip(scalable, "os"):
        pts = sorted((r["unroll"], r["classes"]) for r in rows
                     if r["program"] == name and r["model"] == "tso")
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker=marker,
                label=name)
    ax.set_xlabel("unroll bound")
    ax.set_ylabel("reads-from classes explored")
    ax.legend(frameon=False)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _fig_states(rows: list[dict], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(4.6, 4.2))
    for model, color in (("tso", "tab:blue"), ("pso", "tab:orange")):
        xs = [r["naive_states"] for r in rows if r["model"] == model]
        ys = [r["fast_states"] for r in rows if r["model"] == model]
        ax.scatter(xs, ys, s=12, alpha=0.6, color=color, label=model)
    top = max(max(r["naive_states"] for r in rows),
              max(r["fast_states"] for r in rows), 1)
    ax.plot([1, top], [1, top], color="tab:red", lw=1)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("states visited, naive enumeration")
    ax.set_ylabel("states visited, bounded search")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_report(out_dir: str | Path, sample: int = 120, seed: int = 7) -> dict:
    """Run all studies; returns the summary written to ``summary.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    matrix = litmus_matrix()
    _write_csv(out / "litmus_verdicts.csv", matrix)
    for name, make in litmus.BUILDERS.items():
        blob = instance_to_json(make("tso"))
        (out / f"{name}.json").write_text(json.dumps(blob, indent=1))

    counts = corpus_class_counts()
    _write_csv(out / "class_counts.csv", counts)
    _fig_class_counts(counts, out / "class_counts.png")

    states = verifier_state_sample(sample, seed)
    _write_csv(out / "verifier_states.csv", states)
    _fig_states(states, out / "verifier_states.png")

    summary = {
        "litmus_rows": len(matrix),
        "litmus_all_expected": all(
            (r["verdict"] == "realizable") == r["expected"] for r in matrix),
        "corpus_rows": len(counts),
        "state_sample": len(states),
        "fast_at_most_naive_fraction": round(
            sum(r["fast_states"] <= r["naive_states"] for r in states)
            / max(len(states), 1), 4),
        "seed": seed,
        "files": sorted(p.name for p in out.iterdir()),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    return summary
