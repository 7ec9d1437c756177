"""Bounded concurrent-program DSL and its store-buffer machine.

Programs are line oriented::

    # comment
    thread writer
      store x 1
      load r0 x
      add r0 1
      if r0 == 2 goto done
      fence
    done:
      assert r0 > 0

One instruction per line.  ``thread NAME`` opens a thread; labels end in
``:`` and may only be jumped to forward, so every program is a DAG and
every execution finite.  Shared variables appear in ``store``/``load``/
``lock``/``unlock``/``faa``/``cas`` positions; every other operand is a
thread-local register.  All globals start at 0.  ``faa`` and ``cas``
execute as a fence followed by an atomic read(+write) group; lock
acquisition reads the lock variable, lock release writes it with the
write immediately visible in shared memory.

The :class:`Run` machine executes a program under sc/tso/pso (sc compiles
to tso with a fence after every plain store) and is shared by the
exhaustive oracle, the maximal-extension policy of the explorer, and
witness replay.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .events import Kind

CMP_OPS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}
BIN_OPS = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
}


class ProgramError(Exception):
    pass


class DslSyntaxError(ProgramError):
    def __init__(self, line_no: int, msg: str):
        super().__init__(f"line {line_no}: {msg}")
        self.line_no = line_no


class BackwardJump(DslSyntaxError):
    pass


class UnknownVariable(DslSyntaxError):
    pass


class ReplayError(ProgramError):
    """A witness does not correspond to a machine execution."""


@dataclass(frozen=True)
class Program:
    name: str
    threads: tuple[tuple[str, tuple[tuple, ...]], ...]  # (name, instructions)
    variables: tuple[str, ...]

    @property
    def k(self) -> int:
        return len(self.threads)


_TOKEN = re.compile(r"\S+")


def parse_program(text: str, name: str = "<program>") -> Program:
    """Parse DSL text; raises position-annotated errors."""
    threads: list[tuple[str, list]] = []
    declared: set[str] = set()
    have_decl = False
    labels: dict[str, int] = {}
    pending_jumps: list[tuple[int, str, int]] = []  # line, label, instr index
    assigned: set[str] = set()
    variables: set[str] = set()

    def cur() -> list:
        if not threads:
            raise DslSyntaxError(no, "instruction outside a thread")
        return threads[-1][1]

    def reg_operand(tok: str) -> tuple:
        if re.fullmatch(r"-?\d+", tok):
            return ("const", int(tok))
        if tok not in assigned:
            raise UnknownVariable(no, f"register {tok!r} used before assignment")
        return ("reg", tok)

    def var_operand(tok: str) -> str:
        if have_decl and tok not in declared:
            raise UnknownVariable(no, f"undeclared variable {tok!r}")
        variables.add(tok)
        return tok

    def finish_thread() -> None:
        if not threads:
            return
        body = threads[-1][1]
        for line_no, label, at in pending_jumps:
            if label not in labels:
                raise DslSyntaxError(line_no, f"unknown label {label!r}")
            target = labels[label]
            if target <= at:
                raise BackwardJump(line_no, f"goto {label!r} jumps backward")
            body[at] = body[at][:-1] + (target,)
        pending_jumps.clear()
        labels.clear()
        assigned.clear()

    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = _TOKEN.findall(line)
        op = toks[0]
        if op == "global":
            have_decl = True
            declared.update(toks[1:])
            continue
        if op == "thread":
            if len(toks) != 2:
                raise DslSyntaxError(no, "thread takes one name")
            finish_thread()
            threads.append((toks[1], []))
            continue
        if len(toks) == 1 and op.endswith(":"):
            labels[op[:-1]] = len(cur())
            continue
        if op == "store":
            if len(toks) < 3:
                raise DslSyntaxError(no, "store <var> <expr>")
            cur().append(("store", var_operand(toks[1]), _expr(toks[2:], reg_operand, no)))
        elif op == "load":
            if len(toks) != 3:
                raise DslSyntaxError(no, "load <reg> <var>")
            cur().append(("load", toks[1], var_operand(toks[2])))
            assigned.add(toks[1])
        elif op == "fence":
            cur().append(("fence",))
        elif op in ("lock", "unlock"):
            if len(toks) != 2:
                raise DslSyntaxError(no, f"{op} <lockvar>")
            cur().append((op, var_operand(toks[1])))
        elif op == "set":
            if len(toks) < 3:
                raise DslSyntaxError(no, "set <reg> <expr>")
            cur().append(("set", toks[1], _expr(toks[2:], reg_operand, no)))
            assigned.add(toks[1])
        elif op in BIN_OPS:
            if len(toks) != 3:
                raise DslSyntaxError(no, f"{op} <reg> <reg|const>")
            if toks[1] not in assigned:
                raise UnknownVariable(no, f"register {toks[1]!r} used before assignment")
            cur().append(("binop", op, toks[1], reg_operand(toks[2])))
        elif op == "if":
            m = len(toks) == 6 and toks[4] == "goto" and toks[2] in CMP_OPS
            if not m:
                raise DslSyntaxError(no, "if <reg> <cmp> <const> goto <label>")
            if toks[1] not in assigned:
                raise UnknownVariable(no, f"register {toks[1]!r} used before assignment")
            cur().append(("if", toks[1], toks[2], int(toks[3]), -1))
            pending_jumps.append((no, toks[5], len(cur()) - 1))
        elif op == "assert":
            if len(toks) != 4 or toks[2] not in CMP_OPS:
                raise DslSyntaxError(no, "assert <reg> <cmp> <const>")
            if toks[1] not in assigned:
                raise UnknownVariable(no, f"register {toks[1]!r} used before assignment")
            cur().append(("assert", toks[1], toks[2], int(toks[3])))
        elif op == "faa":
            if len(toks) != 4:
                raise DslSyntaxError(no, "faa <reg> <var> <const>")
            cur().append(("faa", toks[1], var_operand(toks[2]), int(toks[3])))
            assigned.add(toks[1])
        elif op == "cas":
            if len(toks) != 4:
                raise DslSyntaxError(no, "cas <var> <expect> <new>")
            cur().append(("cas", var_operand(toks[1]), int(toks[2]), int(toks[3])))
        else:
            raise DslSyntaxError(no, f"unknown instruction {op!r}")
    finish_thread()
    return Program(name, tuple((n, tuple(b)) for n, b in threads),
                   tuple(sorted(variables)))


def _expr(toks: list[str], reg_operand, no: int) -> tuple:
    if len(toks) == 1:
        return reg_operand(toks[0])
    if len(toks) == 3 and toks[1] in BIN_OPS:
        return ("bin", toks[1], reg_operand(toks[0]), reg_operand(toks[2]))
    raise DslSyntaxError(no, f"bad expression {' '.join(toks)!r}")


# -- machine ---------------------------------------------------------------


@dataclass(frozen=True)
class PEvent:
    """One executed event of a program run."""

    thread: int
    kind: Kind
    var: str | None
    pos: int
    value: int | None = None
    block: int | None = None
    tag: str | None = None
    cas_expect: int | None = None

    @property
    def key(self) -> tuple:
        return (self.thread, int(self.kind), self.pos, self.var)


INIT = "init"


def init_src(var: str) -> tuple:
    return (INIT, var)


class Run:
    """A (partial) machine execution of a program under one memory model."""

    def __init__(self, program: Program, model: str):
        if model not in ("sc", "tso", "pso"):
            raise ProgramError(f"unknown model {model!r}")
        self.program = program
        self.model = model
        self.effective = "tso" if model == "sc" else model
        self.code = [_compile(body, model) for _, body in program.threads]
        k = program.k
        self.pc = [0] * k
        self.regs: list[dict] = [{} for _ in range(k)]
        self.atomic_phase = [False] * k  # fence of faa/cas already emitted
        self.mem: dict[str, int] = {}
        self.buffers: dict[tuple, list[PEvent]] = {}
        self.main_pos = [0] * k
        self.mem_pos: dict[tuple, int] = {}
        self.lock_holder: dict[str, int | None] = {}
        self.events: list[PEvent] = []
        self.rf: dict[tuple, tuple] = {}
        self.last_writer: dict[str, tuple] = {}
        self.assert_failures: list[tuple[int, str]] = []
        self.next_block = 0

    # -- plumbing ---------------------------------------------------------

    def clone(self) -> "Run":
        r = Run.__new__(Run)
        r.program, r.model, r.effective, r.code = (
            self.program, self.model, self.effective, self.code)
        r.pc = list(self.pc)
        r.regs = [dict(d) for d in self.regs]
        r.atomic_phase = list(self.atomic_phase)
        r.mem = dict(self.mem)
        r.buffers = {k: list(v) for k, v in self.buffers.items()}
        r.main_pos = list(self.main_pos)
        r.mem_pos = dict(self.mem_pos)
        r.lock_holder = dict(self.lock_holder)
        r.events = list(self.events)
        r.rf = dict(self.rf)
        r.last_writer = dict(self.last_writer)
        r.assert_failures = list(self.assert_failures)
        r.next_block = self.next_block
        return r

    @classmethod
    def start(cls, program: Program, model: str) -> "Run":
        run = cls(program, model)
        for thr in range(program.k):
            run._advance(thr)
        return run

    def lane(self, thr: int, var: str) -> tuple:
        return (thr, var if self.effective == "pso" else None)

    def buffer(self, thr: int, var: str) -> list[PEvent]:
        return self.buffers.setdefault(self.lane(thr, var), [])

    def buffers_of(self, thr: int) -> list[list[PEvent]]:
        return [q for (t, _), q in self.buffers.items() if t == thr]

    def buffers_empty(self, thr: int) -> bool:
        return all(not q for q in self.buffers_of(thr))

    def _advance(self, thr: int) -> None:
        """Run local instructions until the thread parks at a visible one."""
        code = self.code[thr]
        regs = self.regs[thr]
        while self.pc[thr] < len(code):
            ins = code[self.pc[thr]]
            op = ins[0]
            if op == "set":
                regs[ins[1]] = _eval(ins[2], regs)
            elif op == "binop":
                regs[ins[2]] = BIN_OPS[ins[1]](regs[ins[2]], _eval(ins[3], regs))
            elif op == "if":
                if CMP_OPS[ins[2]](regs[ins[1]], ins[3]):
                    self.pc[thr] = ins[4]
                    continue
            elif op == "assert":
                if not CMP_OPS[ins[2]](regs[ins[1]], ins[3]):
                    self.assert_failures.append((thr, f"assert {ins[1]} {ins[2]} {ins[3]}"))
            else:
                return  # visible instruction; park here
            self.pc[thr] += 1

    def thread_done(self, thr: int) -> bool:
        return self.pc[thr] >= len(self.code[thr])

    def maximal(self) -> bool:
        return not self.enabled_steps()

    # -- enabledness --------------------------------------------------------

    def enabled_steps(self) -> list[tuple]:
        """Steps runnable now: ("t", thr) thread steps and ("m", lane) flushes."""
        steps = []
        for thr in range(self.program.k):
            if self.thread_done(thr):
                continue
            ins = self.code[thr][self.pc[thr]]
            op = ins[0]
            if op in ("store", "load"):
                steps.append(("t", thr))
            elif op == "fence":
                if self.buffers_empty(thr):
                    steps.append(("t", thr))
            elif op == "lock":
                if self.lock_holder.get(ins[1]) is None:
                    steps.append(("t", thr))
            elif op == "unlock":
                # The release's memory-write dequeues immediately, so its
                # buffer lane must be empty (the whole buffer, under tso).
                if not self.buffers.get(self.lane(thr, ins[1])):
                    steps.append(("t", thr))
            elif op in ("faa", "cas"):
                if self.atomic_phase[thr] or self.buffers_empty(thr):
                    steps.append(("t", thr))
        for lane in sorted(self.buffers, key=_lane_sort):
            if self.buffers[lane]:
                steps.append(("m", lane))
        return steps

    def enabled_previews(self) -> list[tuple]:
        """A peek at the next event each enabled step would produce."""
        out = []
        for step in self.enabled_steps():
            if step[0] == "m":
                head = self.buffers[step[1]][0]
                out.append(("wM", head.thread, head.var))
            else:
                thr = step[1]
                ins = self.code[thr][self.pc[thr]]
                op = ins[0]
                if op in ("faa", "cas") and not self.atomic_phase[thr]:
                    out.append(("fence", thr, None))
                elif op == "store":
                    out.append(("wB", thr, ins[1]))
                elif op == "load":
                    out.append(("read", thr, ins[2]))
                elif op == "fence":
                    out.append(("fence", thr, None))
                elif op == "lock":
                    out.append(("acquire", thr, ins[1]))
                elif op == "unlock":
                    out.append(("release", thr, ins[1]))
                else:
                    out.append(("read", thr, ins[1] if op == "cas" else ins[2]))
        return out

    # -- execution ----------------------------------------------------------

    def _emit_main(self, thr, kind, var, value=None, block=None, tag=None,
                   cas_expect=None) -> PEvent:
        ev = PEvent(thr, kind, var, self.main_pos[thr], value, block, tag, cas_expect)
        self.main_pos[thr] += 1
        self.events.append(ev)
        return ev

    def _emit_wm(self, thr, var, value, block=None, tag=None) -> PEvent:
        lane = self.lane(thr, var)
        pos = self.mem_pos.get(lane, 0)
        self.mem_pos[lane] = pos + 1
        ev = PEvent(thr, Kind.WMEM, var, pos, value, block, tag)
        self.events.append(ev)
        return ev

    def _read_value(self, thr: int, var: str) -> tuple[int, tuple]:
        hit = None
        if self.effective == "tso":
            for ev in self.buffers.get((thr, None), ()):
                if ev.var == var:
                    hit = ev  # latest same-variable entry wins
        else:
            buf = self.buffers.get((thr, var), ())
            if buf:
                hit = buf[-1]
        if hit is not None:
            return hit.value, hit.key
        return self.mem.get(var, 0), self.last_writer.get(var, init_src(var))

    def do_step(self, step: tuple) -> list[PEvent]:
        """Execute one enabled step; returns the events it emitted."""
        if step[0] == "m":
            return [self._do_flush(step[1])]
        return self._do_thread(step[1])

    def _do_flush(self, lane: tuple) -> PEvent:
        wb = self.buffers[lane].pop(0)
        ev = self._emit_wm(wb.thread, wb.var, wb.value)
        self.mem[wb.var] = wb.value
        self.last_writer[wb.var] = wb.key
        return ev

    def _do_thread(self, thr: int) -> list[PEvent]:
        ins = self.code[thr][self.pc[thr]]
        op = ins[0]
        regs = self.regs[thr]
        emitted: list[PEvent] = []
        if op == "store":
            value = _eval(ins[2], regs)
            wb = self._emit_main(thr, Kind.WBUF, ins[1], value)
            self.buffer(thr, ins[1]).append(wb)
            emitted.append(wb)
        elif op == "load":
            value, src = self._read_value(thr, ins[2])
            rd = self._emit_main(thr, Kind.READ, ins[2], value)
            self.rf[rd.key] = src
            regs[ins[1]] = value
            emitted.append(rd)
        elif op == "fence":
            emitted.append(self._emit_main(thr, Kind.FENCE, None))
        elif op == "lock":
            var = ins[1]
            value = self.mem.get(var, 0)
            rd = self._emit_main(thr, Kind.READ, var, value, tag="acquire")
            self.rf[rd.key] = self.last_writer.get(var, init_src(var))
            self.lock_holder[var] = thr
            emitted.append(rd)
        elif op == "unlock":
            var = ins[1]
            bid = self._new_block()
            value = self.mem.get(var, 0) + 1  # release token
            wb = self._emit_main(thr, Kind.WBUF, var, value, block=bid, tag="release")
            wm = self._emit_wm(thr, var, value, block=bid, tag="release")
            self.mem[var] = value
            self.last_writer[var] = wb.key
            self.lock_holder[var] = None
            emitted.extend([wb, wm])
        elif op in ("faa", "cas"):
            if not self.atomic_phase[thr]:
                self.atomic_phase[thr] = True
                return [self._emit_main(thr, Kind.FENCE, None)]
            self.atomic_phase[thr] = False
            emitted.extend(self._do_atomic(thr, ins))
        else:  # pragma: no cover
            raise ProgramError(f"not a visible instruction: {op}")
        self.pc[thr] += 1
        self._advance(thr)
        return emitted

    def _do_atomic(self, thr: int, ins: tuple) -> list[PEvent]:
        regs = self.regs[thr]
        if ins[0] == "faa":
            _, reg, var, const = ins
            value = self.mem.get(var, 0)
            bid = self._new_block()
            rd = self._emit_main(thr, Kind.READ, var, value, block=bid, tag="atomic")
            self.rf[rd.key] = self.last_writer.get(var, init_src(var))
            new = value + const
            wb = self._emit_main(thr, Kind.WBUF, var, new, block=bid, tag="atomic")
            wm = self._emit_wm(thr, var, new, block=bid, tag="atomic")
            self.mem[var] = new
            self.last_writer[var] = wb.key
            regs[reg] = value
            return [rd, wb, wm]
        _, var, expect, new = ins
        value = self.mem.get(var, 0)
        if value == expect:
            bid = self._new_block()
            rd = self._emit_main(thr, Kind.READ, var, value, block=bid,
                                 tag="atomic", cas_expect=expect)
            self.rf[rd.key] = self.last_writer.get(var, init_src(var))
            wb = self._emit_main(thr, Kind.WBUF, var, new, block=bid, tag="atomic")
            wm = self._emit_wm(thr, var, new, block=bid, tag="atomic")
            self.mem[var] = new
            self.last_writer[var] = wb.key
            return [rd, wb, wm]
        rd = self._emit_main(thr, Kind.READ, var, value, tag="cas_fail",
                             cas_expect=expect)
        self.rf[rd.key] = self.last_writer.get(var, init_src(var))
        return [rd]

    def _new_block(self) -> int:
        self.next_block += 1
        return self.next_block - 1

    # -- replay ---------------------------------------------------------------

    def replay(self, keys: list[tuple]) -> None:
        """Drive the machine along a witness given as event keys.

        A thread step may legitimately emit more events than the witness
        has left (a mutated compare-and-swap whose outcome flips at the
        frontier); the surplus simply becomes part of the extension.
        Everything else must match exactly.
        """
        i = 0
        while i < len(keys):
            thr, kind, _pos, var = keys[i]
            if kind == int(Kind.WMEM):
                lane = self.lane(thr, var)
                if not self.buffers.get(lane):
                    raise ReplayError(f"flush of empty buffer for key {keys[i]}")
                ev = self._do_flush(lane)
                if ev.key != keys[i]:
                    raise ReplayError(f"expected {keys[i]}, machine produced {ev.key}")
                i += 1
                continue
            if ("t", thr) not in self.enabled_steps():
                raise ReplayError(f"thread {thr} not enabled at key {keys[i]}")
            emitted = self._do_thread(thr)
            want = keys[i: i + len(emitted)]
            got = [e.key for e in emitted]
            if got[: len(want)] != list(want):
                raise ReplayError(f"expected {list(want)}, machine produced {got}")
            i += len(want)


# A Run is the machine state of a partial program execution: the derived
# trace state plus register valuations and memory contents.
MachineState = Run


def _lane_sort(lane: tuple) -> tuple:
    return (lane[0], lane[1] or "")


def _eval(expr: tuple, regs: dict) -> int:
    if expr[0] == "const":
        return expr[1]
    if expr[0] == "reg":
        return regs[expr[1]]
    return BIN_OPS[expr[1]](_eval(expr[2], regs), _eval(expr[3], regs))


def _compile(body: tuple, model: str) -> list[tuple]:
    """Per-model lowering: sc inserts a fence after every plain store."""
    if model != "sc":
        return list(body)
    out: list[tuple] = []
    remap: dict[int, int] = {}
    for i, ins in enumerate(body):
        remap[i] = len(out)
        out.append(ins)
        if ins[0] == "store":
            out.append(("fence",))
    remap[len(body)] = len(out)
    for i, ins in enumerate(out):
        if ins[0] == "if":
            out[i] = ins[:-1] + (remap[ins[-1]],)
    return out


def enabled_events(program: Program, run: Run, model: str) -> list[tuple]:
    """Preview of the events executable next under the model's semantics."""
    assert run.program is program and run.model == model
    return run.enabled_previews()


def maximal_extension(run: Run) -> list[PEvent]:
    """Extend in place until nothing is enabled; returns the new events.

    Policy: lowest-index enabled thread first, buffers flushed (in lane
    order) only when no thread event is enabled.  Deterministic; any
    maximal extension would do.
    """
    before = len(run.events)
    while True:
        steps = run.enabled_steps()
        if not steps:
            break
        thread_steps = [s for s in steps if s[0] == "t"]
        run.do_step(thread_steps[0] if thread_steps else steps[0])
    return run.events[before:]
