"""Schedule execution: scripted and random runs, exhaustive exploration.

A schedule is a list of (thread_id, step_count) entries consumed in
order; one entry step equals one machine step() call, so in GDB mode a
step may retire a whole LDREX..STREX group while in HW mode it retires
exactly one instruction. After the script any remaining runnable
threads are completed round-robin (lowest thread id first) unless the
script says halt.

Random runs draw the next thread uniformly from the runnable set with
SplitMix64 (the generator is recorded in the trace header so seeds are
portable): pick = runnable[next_output % len(runnable)].

The explorer enumerates all interleavings of a program depth-first in
HW mode, memoizing on the full machine state (registers, flags, PCs,
monitors, memory, and version counters; versions are semantic state
because they decide reservation validity). Every declared `.region` is
treated as a mutual-exclusion region: a state where two threads' PCs
lie inside the same region at once is reported with the thread schedule
that reached it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .isa import Program
from .machine import RUNNABLE, ExecMode, MachineState, init_machine, step
from .tamper import CompiledTampers, TamperSpec, apply_tampers, compile_tampers
from .trace import TraceEvent

MASK64 = 0xFFFFFFFFFFFFFFFF

DEFAULT_MAX_STEPS = 100_000
EXPLORE_MAX_STEPS = 10_000
EXPLORE_MAX_STATES = 1_000_000


def splitmix64(seed: int):
    """Endless SplitMix64 output stream for the given 64-bit seed."""
    state = seed & MASK64
    while True:
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        yield z ^ (z >> 31)


@dataclass
class ScheduleScript:
    entries: list[tuple[int, int]]
    mode: ExecMode | None = None       # validated against the machine when set
    clrex_on_switch: bool = False
    halt: bool = False

    def digest(self) -> str:
        payload = json.dumps(
            [list(e) for e in self.entries] + [self.clrex_on_switch, self.halt],
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class RandomSchedule:
    seed: int
    max_steps: int = DEFAULT_MAX_STEPS


@dataclass(frozen=True)
class Violation:
    kind: str
    step_index: int
    threads: tuple[int, ...]
    region: str = ""


@dataclass
class RunResult:
    final_memory: dict[str, int]
    thread_statuses: list[tuple[str, str | None]]
    violations: list[Violation]
    trace: list[TraceEvent]
    steps_taken: int
    truncated: bool
    header: dict


class _Runner:
    """Dispatch loop shared by scripted runs, random runs, and the
    debugger: steps threads, applies tampers, tracks region occupancy,
    and accumulates the trace."""

    def __init__(self, machine: MachineState, compiled: CompiledTampers | None = None):
        self.machine = machine
        self.compiled = compiled
        self.trace: list[TraceEvent] = []
        self.violations: list[Violation] = []
        self.clrex_on_switch = False
        self._prev_tid: int | None = None
        self._occupants: list[set[int]] = [set() for _ in machine.program.regions]

    def _pre_exec(self, thread_id: int, pc: int) -> str | None:
        if self.compiled is None:
            return None
        edits = apply_tampers(self.compiled, self.machine, thread_id, pc)
        return "; ".join(edits) if edits else None

    def dispatch(self, thread_id: int):
        """Step one thread (or record a no-op for a finished one) and
        return the StepOutcome, None when nothing ran."""
        m = self.machine
        if self.clrex_on_switch and self._prev_tid not in (None, thread_id):
            # OS-like behavior: descheduling drops the outgoing reservation.
            m.threads[self._prev_tid].mon_granule = None
        self._prev_tid = thread_id

        t = m.threads[thread_id]
        if t.status != RUNNABLE:
            self.trace.append(
                TraceEvent(
                    step_index=m.next_event_index(),
                    thread_id=thread_id,
                    pc=t.pc,
                    label=m.program.nearest_label(t.pc) if t.pc < len(m.program.instructions) else None,
                    noop=True,
                )
            )
            return None
        outcome = step(m, thread_id, pre_exec=self._pre_exec)
        self.trace.extend(outcome.events)
        self._update_regions(thread_id)
        return outcome

    def _update_regions(self, thread_id: int) -> None:
        m = self.machine
        t = m.threads[thread_id]
        for i, region in enumerate(m.program.regions):
            occupants = self._occupants[i]
            inside = t.status == RUNNABLE and region.start <= t.pc < region.end
            if inside and thread_id not in occupants:
                if occupants:
                    idx = m.next_event_index()
                    group = tuple(sorted(occupants | {thread_id}))
                    self.violations.append(
                        Violation("mutual_exclusion", idx, group, region.name)
                    )
                    self.trace.append(
                        TraceEvent(
                            step_index=idx,
                            thread_id=thread_id,
                            pc=t.pc,
                            label=region.name,
                            violation="mutual_exclusion",
                        )
                    )
                occupants.add(thread_id)
            elif not inside and thread_id in occupants:
                occupants.discard(thread_id)

    def run_round_robin(self, max_steps: int) -> bool:
        """Step runnable threads ascending until everyone is done; returns
        True if the step budget ran out first."""
        m = self.machine
        while True:
            runnable = m.runnable_threads()
            if not runnable:
                return False
            for tid in runnable:
                if m.step_count >= max_steps:
                    return True
                self.dispatch(tid)

    def result(self, header: dict, truncated: bool = False) -> RunResult:
        m = self.machine
        return RunResult(
            final_memory=m.memory_by_symbol(),
            thread_statuses=[(t.status, t.fault) for t in m.threads],
            violations=self.violations,
            trace=self.trace,
            steps_taken=m.step_count,
            truncated=truncated,
            header=header,
        )


def run_schedule(
    machine: MachineState,
    script: ScheduleScript,
    tampers: list[TamperSpec] | None = None,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> RunResult:
    """Drive the machine through the script, then round-robin any
    remaining runnable threads to completion (unless the script halts).

    Tampers are compiled before the run starts; in GDB mode a tamper
    aimed strictly inside an LDREX..STREX range is rejected here.
    """
    if script.mode is not None and script.mode is not machine.mode:
        raise ValueError(
            f"schedule mode {script.mode.value!r} does not match machine mode "
            f"{machine.mode.value!r}"
        )
    for tid, count in script.entries:
        if not 0 <= tid < len(machine.threads):
            raise ValueError(f"schedule entry names unknown thread {tid}")
        if count < 1:
            raise ValueError(f"schedule entry for thread {tid} has step count {count}")

    compiled = compile_tampers(tampers, machine.program, machine.mode) if tampers else None
    runner = _Runner(machine, compiled)
    runner.clrex_on_switch = script.clrex_on_switch

    header = {
        "program_sha256": machine.program.sha256(),
        "mode": machine.mode.value,
        "schedule": f"script:{script.digest()}",
    }

    for tid, count in script.entries:
        for _ in range(count):
            runner.dispatch(tid)
    truncated = False
    if not script.halt:
        truncated = runner.run_round_robin(max_steps)
    return runner.result(header, truncated)


def run_random(
    machine: MachineState,
    seed: int,
    max_steps: int = DEFAULT_MAX_STEPS,
    tampers: list[TamperSpec] | None = None,
) -> RunResult:
    """Step uniformly random runnable threads until completion or the
    step budget runs out. Identical seeds give identical runs."""
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    compiled = compile_tampers(tampers, machine.program, machine.mode) if tampers else None
    runner = _Runner(machine, compiled)
    header = {
        "program_sha256": machine.program.sha256(),
        "mode": machine.mode.value,
        "schedule": f"random:splitmix64:{seed}",
    }
    rng = splitmix64(seed)
    truncated = False
    while True:
        runnable = machine.runnable_threads()
        if not runnable:
            break
        if machine.step_count >= max_steps:
            truncated = True
            break
        runner.dispatch(runnable[next(rng) % len(runnable)])
    return runner.result(header, truncated)


@dataclass
class ExploreReport:
    final_states: set[tuple[tuple[str, int], ...]]
    schedules_explored: int
    mutual_exclusion_violations: list[list[int]]
    truncated: bool
    witnesses: dict[tuple[tuple[str, int], ...], list[int]] = field(default_factory=dict)

    @property
    def final_memories(self) -> list[dict[str, int]]:
        return [dict(state) for state in sorted(self.final_states)]

    def final_values(self, symbol: str) -> set[int]:
        return {dict(state)[symbol] for state in self.final_states}


def _freeze(machine: MachineState, addrs: list[int]):
    return (
        tuple(
            (tuple(t.regs), t.z, t.n, t.pc, t.mon_granule, t.mon_version, t.status, t.fault)
            for t in machine.threads
        ),
        tuple(machine.memory[a] for a in addrs),
        tuple(machine.versions[a] for a in addrs),
    )


def _thaw(machine: MachineState, snap, addrs: list[int]) -> None:
    for t, s in zip(machine.threads, snap[0]):
        t.regs = list(s[0])
        t.z, t.n, t.pc = s[1], s[2], s[3]
        t.mon_granule, t.mon_version = s[4], s[5]
        t.status, t.fault = s[6], s[7]
    for a, value in zip(addrs, snap[1]):
        machine.memory[a] = value
    for a, version in zip(addrs, snap[2]):
        machine.versions[a] = version


def explore(
    program: Program,
    thread_count: int,
    max_steps: int = EXPLORE_MAX_STEPS,
    max_states: int = EXPLORE_MAX_STATES,
    overrides: dict[str, int] | None = None,
) -> ExploreReport:
    """Depth-first enumeration of every interleaving (HW mode, one
    instruction per step) up to the bounds, memoized on full machine
    state. Reports each distinct final memory with a witness schedule,
    plus every reachable state where two or more threads occupy the
    same declared region. Bound exhaustion sets truncated; the report
    stays sound for the explored prefix."""
    machine = init_machine(program, thread_count, ExecMode.HW, overrides)
    addrs = sorted(machine.memory)
    regions = program.regions

    final_states: set = set()
    witnesses: dict = {}
    violations: list[list[int]] = []
    schedules_explored = 0
    truncated = False

    root = _freeze(machine, addrs)
    stack: list[tuple[object, tuple[int, ...]]] = [(root, ())]
    visited = set()

    while stack:
        snap, path = stack.pop()
        if snap in visited:
            continue
        if len(visited) >= max_states:
            truncated = True
            break
        visited.add(snap)

        threads = snap[0]
        if regions:
            for region in regions:
                inside = [
                    i
                    for i, t in enumerate(threads)
                    if t[6] == RUNNABLE and region.start <= t[3] < region.end
                ]
                if len(inside) >= 2:
                    violations.append(list(path))
                    break

        runnable = [i for i, t in enumerate(threads) if t[6] == RUNNABLE]
        if not runnable:
            memory_key = tuple(
                sorted((machine.addr_sym[a], v) for a, v in zip(addrs, snap[1]))
            )
            final_states.add(memory_key)
            witnesses.setdefault(memory_key, list(path))
            schedules_explored += 1
            continue
        if len(path) >= max_steps:
            truncated = True
            continue

        for tid in reversed(runnable):
            _thaw(machine, snap, addrs)
            step(machine, tid, collect_events=False)
            child = _freeze(machine, addrs)
            if child not in visited:
                stack.append((child, path + (tid,)))

    return ExploreReport(
        final_states=final_states,
        schedules_explored=schedules_explored,
        mutual_exclusion_violations=violations,
        truncated=truncated,
        witnesses=witnesses,
    )


def witness_script(path: list[int]) -> ScheduleScript:
    """Schedule replaying an explorer witness path through run_schedule."""
    entries: list[tuple[int, int]] = []
    for tid in path:
        if entries and entries[-1][0] == tid:
            entries[-1] = (tid, entries[-1][1] + 1)
        else:
            entries.append((tid, 1))
    return ScheduleScript(entries=entries, mode=ExecMode.HW, halt=True)
