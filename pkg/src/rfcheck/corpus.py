"""Built-in benchmark programs, each scaled by an unroll bound.

``store_buffer`` is the classic two-thread store/load cross pattern;
``floating_read`` has one reader racing any of U writers;
``lastwrite`` lets a thread race its own store against U-1 foreign ones;
``lock_handoff`` ping-pongs a mutex-protected store between two threads;
``rmw_pair`` interleaves two chains of fetch-and-add instructions.
"""

from __future__ import annotations

from .program import Program, parse_program

BENCHMARKS = ("store_buffer", "floating_read", "lastwrite", "lock_handoff",
              "rmw_pair")


def benchmark_text(name: str, unroll: int = 1) -> str:
    if name == "store_buffer":
        return (
            "thread t0\n"
            "  store x 1\n"
            "  load r0 y\n"
            "thread t1\n"
            "  store y 1\n"
            "  load r1 x\n"
        )
    if name == "floating_read":
        lines = ["thread reader", "  load r x"]
        for i in range(unroll):
            lines += [f"thread w{i}", f"  store x {i + 1}"]
        return "\n".join(lines) + "\n"
    if name == "lastwrite":
        lines = ["thread t0", "  store x 1", "  load r x"]
        for i in range(1, unroll):
            lines += [f"thread t{i}", f"  store x {i + 1}"]
        return "\n".join(lines) + "\n"
    if name == "lock_handoff":
        def cs(val):
            return ["  lock m", f"  store x {val}", "  unlock m"] * unroll
        return "\n".join(["thread a"] + cs(1) + ["thread b"] + cs(2)) + "\n"
    if name == "rmw_pair":
        body = ["  faa r x 1"] * unroll
        return "\n".join(["thread a"] + body + ["thread b"] + body) + "\n"
    raise ValueError(f"unknown benchmark {name!r}; know {', '.join(BENCHMARKS)}")


def benchmark(name: str, unroll: int = 1) -> Program:
    return parse_program(benchmark_text(name, unroll), name=f"{name}[{unroll}]")
