"""Replayable event log and run summaries.

A trace is a line-delimited stream of JSON records: one header record
followed by one record per event. Identical runs produce byte-identical
streams, so traces diff cleanly and serve as replay fixtures.

Header fields:
    type="header", format=1, tool, program_sha256, mode, schedule
    (schedule is either "script:<sha256 of the schedule>" or
    "random:splitmix64:<seed>")

Event fields (empty ones are omitted):
    type="event", step, thread, pc, label, instr,
    reg_writes=[[reg, old, new], ...], mem_writes=[[symbol, old, new], ...],
    monitor=[old, new], tamper, violation, fault, noop
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

TRACE_FORMAT = 1


@dataclass
class TraceEvent:
    step_index: int
    thread_id: int
    pc: int
    label: str | None = None
    instr: str | None = None
    reg_writes: list[tuple[str, int, int]] = field(default_factory=list)
    mem_writes: list[tuple[str, int, int]] = field(default_factory=list)
    monitor: tuple[str, str] | None = None
    tamper: str | None = None
    violation: str | None = None
    fault: str | None = None
    noop: bool = False

    def to_record(self) -> dict:
        rec: dict = {
            "type": "event",
            "step": self.step_index,
            "thread": self.thread_id,
            "pc": self.pc,
        }
        if self.label is not None:
            rec["label"] = self.label
        if self.instr is not None:
            rec["instr"] = self.instr
        if self.reg_writes:
            rec["reg_writes"] = [list(w) for w in self.reg_writes]
        if self.mem_writes:
            rec["mem_writes"] = [list(w) for w in self.mem_writes]
        if self.monitor is not None:
            rec["monitor"] = list(self.monitor)
        if self.tamper is not None:
            rec["tamper"] = self.tamper
        if self.violation is not None:
            rec["violation"] = self.violation
        if self.fault is not None:
            rec["fault"] = self.fault
        if self.noop:
            rec["noop"] = True
        return rec


def _dump(record: dict) -> bytes:
    return json.dumps(record, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"


def emit_trace(run_result, destination=None) -> bytes:
    """Serialize a finished (or truncated) run to the trace stream.

    `destination` may be a path or a binary file object; either way the
    bytes are returned.
    """
    from . import __version__

    header = {"type": "header", "format": TRACE_FORMAT, "tool": f"spinsim {__version__}"}
    header.update(run_result.header)
    buf = io.BytesIO()
    buf.write(_dump(header))
    for event in run_result.trace:
        buf.write(_dump(event.to_record()))
    data = buf.getvalue()

    if destination is None:
        pass
    elif isinstance(destination, (str, Path)):
        Path(destination).write_bytes(data)
    else:
        destination.write(data)
    return data


@dataclass
class Report:
    final_memory: dict[str, int]
    thread_statuses: list[tuple[str, str | None]]
    violation_count: int
    steps: int
    truncated: bool = False

    def lines(self) -> list[str]:
        out = [f"{name} = {value}" for name, value in self.final_memory.items()]
        for tid, (status, reason) in enumerate(self.thread_statuses):
            shown = status if reason is None else f'{status}("{reason}")'
            out.append(f"thread {tid}: {shown}")
        out.append(f"violations: {self.violation_count}")
        out.append(f"steps: {self.steps}")
        if self.truncated:
            out.append("truncated: step budget exhausted")
        return out

    def __str__(self) -> str:
        return "\n".join(self.lines())


def summarize(run_result) -> Report:
    """One-line-per-symbol final values plus the violation verdict."""
    return Report(
        final_memory=dict(run_result.final_memory),
        thread_statuses=list(run_result.thread_statuses),
        violation_count=len(run_result.violations),
        steps=run_result.steps_taken,
        truncated=run_result.truncated,
    )
