"""Scripted register tampering at named program points.

A tamper models an attacker editing a general register while a thread
is stopped: a debugger `set $Rn` at a stop point, or (in HW mode) a
hardware fault flipping bits at any instruction boundary. Hooks fire
immediately before the instruction at the hooked PC executes for the
hooked thread. Tampers touch registers only, never memory, PC, flags,
or monitors.

In GDB mode a hook may not sit strictly inside an LDREX..STREX range
(the debugger cannot stop there); hooking the LDREX itself, the range
entry, is legal. HW mode has no such restriction, modeling the stronger
fault-injection attacker.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .isa import Program
from .machine import MASK32, ExecMode, MachineState

EVERY = "every"

_LOCATION = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*([+-]\s*\d+)?$")


class TamperError(Exception):
    pass


@dataclass(frozen=True)
class TamperSpec:
    thread_id: int
    location: str                  # "label" or "label+offset"
    register: int                  # 0..12
    action: tuple[str, int]        # ("set", v) | ("add", d) | ("flip_bit", pos)
    occurrence: int | str = 1      # k-th arrival, or EVERY

    def describe_action(self) -> str:
        kind, value = self.action
        if kind == "set":
            return f"R{self.register} = {value}"
        if kind == "add":
            return f"R{self.register} += {value}"
        return f"R{self.register} flip_bit {value}"


@dataclass
class _Hook:
    spec: TamperSpec
    arrivals: int = 0


@dataclass
class CompiledTampers:
    hooks: dict[tuple[int, int], list[_Hook]]
    fire_log: list[tuple[int, int, str]] = field(default_factory=list)

    def hook_pcs(self) -> set[int]:
        return {pc for _, pc in self.hooks}


def resolve_location(location: str, program: Program) -> int:
    m = _LOCATION.match(location.strip())
    if not m:
        raise TamperError(f"malformed location {location!r} (want label or label+offset)")
    label, offset_text = m.group(1), m.group(2)
    if label not in program.labels:
        raise TamperError(f"location {location!r} names unknown label {label!r}")
    pc = program.labels[label] + (int(offset_text.replace(" ", "")) if offset_text else 0)
    if not 0 <= pc < len(program.instructions):
        raise TamperError(f"location {location!r} resolves outside the program (pc {pc})")
    return pc


def _validate(spec: TamperSpec) -> None:
    if not 0 <= spec.register <= 12:
        raise TamperError(f"register R{spec.register} out of range R0..R12")
    kind, value = spec.action
    if kind not in ("set", "add", "flip_bit"):
        raise TamperError(f"unknown tamper action {kind!r}")
    if kind == "flip_bit" and not 0 <= value <= 31:
        raise TamperError(f"flip_bit position {value} out of range 0..31")
    if spec.occurrence != EVERY and (not isinstance(spec.occurrence, int) or spec.occurrence < 1):
        raise TamperError(f"occurrence must be >= 1 or 'every', got {spec.occurrence!r}")


def compile_tampers(
    specs: list[TamperSpec],
    program: Program,
    mode: ExecMode,
) -> CompiledTampers:
    """Resolve tamper locations to PC indices and enforce the stop-point
    restriction: in GDB mode no hook may lie strictly inside an
    LDREX..STREX range (the error message names the range)."""
    ranges = program.exclusive_ranges()
    hooks: dict[tuple[int, int], list[_Hook]] = {}
    for spec in specs:
        _validate(spec)
        pc = resolve_location(spec.location, program)
        if mode is ExecMode.GDB:
            for l, s in ranges:
                if l < pc <= s:
                    raise TamperError(
                        f"tamper at {spec.location!r} (pc {pc}) lies strictly inside "
                        f"the exclusive range [{l}, {s}]; in gdb mode only the range "
                        f"entry (pc {l}) is a legal stop point"
                    )
        hooks.setdefault((spec.thread_id, pc), []).append(_Hook(spec))
    return CompiledTampers(hooks=hooks)


def apply_tampers(
    compiled: CompiledTampers,
    machine: MachineState,
    thread_id: int,
    pc: int,
) -> list[str]:
    """Apply any hooks matching (thread, pc); called by the scheduler
    immediately before that instruction executes. Non-matching calls are
    no-ops. Returns descriptions of the edits applied."""
    hook_list = compiled.hooks.get((thread_id, pc))
    if not hook_list:
        return []
    applied = []
    regs = machine.threads[thread_id].regs
    for hook in hook_list:
        hook.arrivals += 1
        spec = hook.spec
        if spec.occurrence != EVERY and hook.arrivals != spec.occurrence:
            continue
        kind, value = spec.action
        old = regs[spec.register]
        if kind == "set":
            new = value & MASK32
        elif kind == "add":
            new = (old + value) & MASK32
        else:
            new = old ^ (1 << value)
        regs[spec.register] = new
        desc = f"{spec.describe_action()} ({old} -> {new})"
        compiled.fire_log.append((thread_id, pc, desc))
        applied.append(desc)
    return applied
