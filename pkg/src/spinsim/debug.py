"""Interactive GDB-style debugger over a simulated machine.

Command names deliberately mirror the debugger so a published attack
procedure transcribes one-to-one:

    thread <n>                switch focus
    step [k]                  step the focused thread; in gdb mode a step
                              never stops inside an LDREX..STREX range
    set $R<j> = <v>           edit a register at the current stop
    set $R<j> += <v>          (rejected strictly inside an exclusive
                              range in gdb mode, like the debugger)
    info registers            focused thread's registers, flags, pc
    info threads              pc and nearest label for every thread
    x <symbol>                inspect a data word
    break <label>             set a breakpoint
    continue                  round-robin run to the next breakpoint
    set scheduler-locking step|off
                              with locking off, each step also advances
                              the other runnable threads one step
    trace on <path>           write the session trace on quit
    export <path>             save the session as a replayable scenario
    quit

Every dispatch and register edit is recorded, so `export` produces a
scenario file whose replay reproduces the session's final memory and
violations exactly.
"""

from __future__ import annotations

import re
from pathlib import Path

from .isa import Program
from .machine import MASK32, RUNNABLE, ExecMode, init_machine
from .sched import ScheduleScript, _Runner
from .scenario import Scenario, save_scenario
from .tamper import TamperSpec
from .trace import emit_trace, summarize

_CONTINUE_BUDGET = 100_000

_SET_REG = re.compile(r"\$[Rr](\d+)\s*(\+=|=)\s*(-?\d+)$")

HELP = """commands:
  thread <n>            switch focus to thread n
  step [k]              step the focused thread k times (default 1)
  set $R<j> = <v>       set a register of the focused thread
  set $R<j> += <v>      adjust a register of the focused thread
  set scheduler-locking step|off
  info registers        show the focused thread's registers
  info threads          show every thread's position
  x <symbol>            show a data word
  break <label>         set a breakpoint at a label
  continue              run round-robin until a breakpoint or completion
  trace on <path>       write the session trace to <path> on quit
  export <path>         save the session as a scenario file
  quit
"""


def location_for_pc(program: Program, pc: int) -> str | None:
    """Express a pc as label+offset (nearest preceding label, else the
    first following one with a negative offset)."""
    name = program.nearest_label(pc)
    if name is None:
        following = [(idx, n) for n, idx in program.labels.items() if idx > pc]
        if not following:
            return None
        name = min(following)[1]
    offset = pc - program.labels[name]
    if offset == 0:
        return name
    return f"{name}{offset:+d}"


class DebugSession:
    def __init__(
        self,
        program: Program,
        thread_count: int,
        mode: ExecMode = ExecMode.GDB,
        program_name: str | None = None,
    ):
        self.program = program
        self.program_name = program_name
        self.machine = init_machine(program, thread_count, mode)
        self.runner = _Runner(self.machine)
        self.focus = 0
        self.breakpoints: set[str] = set()
        self.scheduler_locking = "step"
        self.dispatch_log: list[int] = []
        self.recorded_tampers: list[TamperSpec] = []
        self.exec_counts: dict[tuple[int, int], int] = {}
        self.trace_path: Path | None = None
        self.done = False
        self._summary_shown = False

    # -- execution ---------------------------------------------------------

    def _dispatch(self, tid: int) -> None:
        outcome = self.runner.dispatch(tid)
        self.dispatch_log.append(tid)
        if outcome is not None:
            for pc, _ in outcome.executed:
                key = (tid, pc)
                self.exec_counts[key] = self.exec_counts.get(key, 0) + 1

    def _stop_line(self, tid: int) -> str:
        t = self.machine.threads[tid]
        if t.status != RUNNABLE:
            reason = f' ("{t.fault}")' if t.fault else ""
            return f"thread {tid}: {t.status}{reason}"
        loc = location_for_pc(self.program, t.pc)
        ins = self.program.instructions[t.pc].text()
        where = f" ({loc})" if loc else ""
        return f"thread {tid} stopped at pc {t.pc}{where}: {ins}"

    def _maybe_summary(self) -> str:
        if self.machine.finished() and not self._summary_shown:
            self._summary_shown = True
            return "all threads finished\n" + str(self.result_summary())
        return ""

    def result_summary(self):
        return summarize(self.run_result())

    def run_result(self):
        header = {
            "program_sha256": self.program.sha256(),
            "mode": self.machine.mode.value,
            "schedule": f"script:{self._script().digest()}",
        }
        return self.runner.result(header)

    def _script(self) -> ScheduleScript:
        entries: list[tuple[int, int]] = []
        for tid in self.dispatch_log:
            if entries and entries[-1][0] == tid:
                entries[-1] = (tid, entries[-1][1] + 1)
            else:
                entries.append((tid, 1))
        return ScheduleScript(entries=entries, mode=self.machine.mode, halt=True)

    # -- commands ----------------------------------------------------------

    def handle(self, line: str) -> str:
        line = line.strip()
        if not line:
            return ""
        fields = line.split()
        cmd = fields[0]
        try:
            if cmd == "thread":
                return self._cmd_thread(fields[1:])
            if cmd == "step":
                return self._cmd_step(fields[1:])
            if cmd == "set":
                return self._cmd_set(line[len("set"):].strip())
            if cmd == "info":
                return self._cmd_info(fields[1:])
            if cmd == "x":
                return self._cmd_examine(fields[1:])
            if cmd == "break":
                return self._cmd_break(fields[1:])
            if cmd == "continue":
                return self._cmd_continue()
            if cmd == "trace":
                return self._cmd_trace(fields[1:])
            if cmd == "export":
                return self._cmd_export(fields[1:])
            if cmd in ("quit", "q"):
                self.done = True
                out = self._flush_trace()
                return out + str(self.result_summary())
        except (IndexError, ValueError):
            pass
        return f"unknown or incomplete command: {line!r}\n" + HELP

    def _cmd_thread(self, args: list[str]) -> str:
        tid = int(args[0])
        if not 0 <= tid < len(self.machine.threads):
            return f"no thread {tid} (have 0..{len(self.machine.threads) - 1})"
        self.focus = tid
        return self._stop_line(tid)

    def _cmd_step(self, args: list[str]) -> str:
        count = int(args[0]) if args else 1
        if count < 1:
            return "step count must be >= 1"
        t = self.machine.threads[self.focus]
        if t.status != RUNNABLE:
            return self._stop_line(self.focus)
        for _ in range(count):
            self._dispatch(self.focus)
            if self.scheduler_locking == "off":
                for tid in self.machine.runnable_threads():
                    if tid != self.focus:
                        self._dispatch(tid)
            if self.machine.threads[self.focus].status != RUNNABLE:
                break
        out = self._stop_line(self.focus)
        extra = self._maybe_summary()
        return out + ("\n" + extra if extra else "")

    def _cmd_set(self, rest: str) -> str:
        if rest.startswith("scheduler-locking"):
            value = rest.split()[-1]
            if value not in ("step", "off"):
                return "scheduler-locking takes 'step' or 'off'"
            self.scheduler_locking = value
            return f"scheduler-locking {value}"
        m = _SET_REG.match(rest)
        if not m:
            return "usage: set $R<j> = <v> | set $R<j> += <v> | set scheduler-locking step|off"
        reg, op, value = int(m.group(1)), m.group(2), int(m.group(3))
        if not 0 <= reg <= 12:
            return f"register R{reg} out of range R0..R12"
        t = self.machine.threads[self.focus]
        if t.status != RUNNABLE:
            return f"cannot set registers: {self._stop_line(self.focus)}"
        if self.machine.mode is ExecMode.GDB:
            inside = self.machine.strictly_inside_exclusive(t.pc)
            if inside is not None:
                l, s = inside
                return (
                    f"refused: thread {self.focus} is stopped strictly inside the "
                    f"exclusive range [{l}, {s}] (between LDREX and STREX); in gdb "
                    "mode registers may only be edited at stop points outside the "
                    "range or at its entry"
                )
        old = t.regs[reg]
        new = (value if op == "=" else old + value) & MASK32
        t.regs[reg] = new
        location = location_for_pc(self.program, t.pc)
        if location is not None:
            self.recorded_tampers.append(
                TamperSpec(
                    thread_id=self.focus,
                    location=location,
                    register=reg,
                    action=("set", new) if op == "=" else ("add", value),
                    occurrence=self.exec_counts.get((self.focus, t.pc), 0) + 1,
                )
            )
        return f"R{reg} = {new} (was {old})"

    def _cmd_info(self, args: list[str]) -> str:
        what = args[0] if args else ""
        if what == "registers":
            t = self.machine.threads[self.focus]
            lines = [f"R{i} = {v}" for i, v in enumerate(t.regs)]
            lines.append(f"Z = {int(t.z)}  N = {int(t.n)}")
            lines.append(self._stop_line(self.focus))
            return "\n".join(lines)
        if what == "threads":
            lines = []
            for tid, t in enumerate(self.machine.threads):
                marker = "*" if tid == self.focus else " "
                if t.status != RUNNABLE:
                    reason = f' ("{t.fault}")' if t.fault else ""
                    lines.append(f"{marker} thread {tid}: {t.status}{reason}")
                else:
                    loc = location_for_pc(self.program, t.pc) or "?"
                    ins = self.program.instructions[t.pc].text()
                    lines.append(f"{marker} thread {tid}: pc {t.pc} ({loc}) next: {ins}")
            return "\n".join(lines)
        return "usage: info registers | info threads"

    def _cmd_examine(self, args: list[str]) -> str:
        symbol = args[0]
        addr = self.machine.sym_addr.get(symbol)
        if addr is None:
            return f"no data word named {symbol!r}"
        return f"{symbol} = {self.machine.memory[addr]}"

    def _cmd_break(self, args: list[str]) -> str:
        label = args[0]
        if label not in self.program.labels:
            return f"no label {label!r}"
        self.breakpoints.add(label)
        return f"breakpoint at {label} (pc {self.program.labels[label]})"

    def _cmd_continue(self) -> str:
        bp_indices = {self.program.labels[name]: name for name in self.breakpoints}
        budget = _CONTINUE_BUDGET
        while budget > 0:
            runnable = self.machine.runnable_threads()
            if not runnable:
                return self._maybe_summary() or "all threads finished"
            for tid in runnable:
                self._dispatch(tid)
                budget -= 1
                t = self.machine.threads[tid]
                if t.status == RUNNABLE and t.pc in bp_indices:
                    self.focus = tid
                    return f"breakpoint {bp_indices[t.pc]}:\n" + self._stop_line(tid)
        return "continue: step budget exhausted"

    def _cmd_trace(self, args: list[str]) -> str:
        if len(args) != 2 or args[0] != "on":
            return "usage: trace on <path>"
        self.trace_path = Path(args[1])
        return f"tracing to {self.trace_path} (written on quit)"

    def _flush_trace(self) -> str:
        if self.trace_path is None:
            return ""
        emit_trace(self.run_result(), self.trace_path)
        return f"trace written to {self.trace_path}\n"

    def _cmd_export(self, args: list[str]) -> str:
        path = Path(args[0])
        scenario = Scenario(
            threads=len(self.machine.threads),
            mode=self.machine.mode,
            schedule=self._script(),
            program=self.program_name,
            tampers=list(self.recorded_tampers),
        )
        if self.machine.finished():
            scenario.expect_memory = dict(self.machine.memory_by_symbol())
            scenario.expect_violations = len(self.runner.violations)
        save_scenario(scenario, path)
        return f"session exported to {path}"


def run_repl(session: DebugSession, input_fn=None, output=print) -> None:
    if input_fn is None:
        input_fn = input
    output(f"spinsim debugger: {len(session.machine.threads)} thread(s), "
           f"mode {session.machine.mode.value}. Type 'quit' to leave.")
    output(session.handle("info threads"))
    while not session.done:
        try:
            line = input_fn("(sim) ")
        except EOFError:
            output(session.handle("quit"))
            break
        text = session.handle(line)
        if text:
            output(text)
