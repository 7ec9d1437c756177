"""Three small instances that tell the memory models apart.

* ``cross_reads_fresh`` — two threads each write their variable twice and
  then read the other one; one read observes a first write, the other a
  last write.  Realizable under every model.
* ``cross_reads_stale`` — both reads observe the *first* writes, so both
  threads must keep their second store buffered past the other thread's
  read.  Needs store buffers: tso and pso only.
* ``own_var_reorder`` — one thread writes x, x, y; the other reads the
  fresh y and then the stale first x, so the y-store must overtake two
  x-stores.  Needs per-variable buffers: pso only.
"""

from __future__ import annotations

from .events import Instance, Op, build_instance

EXPECTED = {
    "cross_reads_fresh": {"sc": True, "tso": True, "pso": True},
    "cross_reads_stale": {"sc": False, "tso": True, "pso": True},
    "own_var_reorder": {"sc": False, "tso": False, "pso": True},
}


def _writes_then_read(var_w: str, var_r: str) -> list[Op]:
    return [Op("write", var_w), Op("write", var_w), Op("read", var_r)]


def cross_reads_fresh(model: str) -> Instance:
    threads = [_writes_then_read("x", "y"), _writes_then_read("y", "x")]
    return build_instance(model, threads, {2: 4, 5: 0})


def cross_reads_stale(model: str) -> Instance:
    threads = [_writes_then_read("x", "y"), _writes_then_read("y", "x")]
    return build_instance(model, threads, {2: 3, 5: 0})


def own_var_reorder(model: str) -> Instance:
    threads = [
        [Op("write", "x"), Op("write", "x"), Op("write", "y")],
        [Op("read", "y"), Op("read", "x")],
    ]
    return build_instance(model, threads, {3: 2, 4: 0})


BUILDERS = {
    "cross_reads_fresh": cross_reads_fresh,
    "cross_reads_stale": cross_reads_stale,
    "own_var_reorder": own_var_reorder,
}
