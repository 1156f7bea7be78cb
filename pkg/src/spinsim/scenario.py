"""Scenario files: self-contained, replayable run descriptions.

A scenario is a YAML document naming a program, a thread count, an
execution mode, optional memory overrides, a schedule (scripted entries
or a seeded random schedule), tamper specs, and optional expectations
that make the scenario self-checking:

    program: lock_regcmp.s        # resolved relative to the scenario file
    threads: 3
    mode: gdb                     # gdb | hw
    overrides:
      accountBalance: 100
    schedule:
      entries: [[0, 7], [1, 12], [0, 5]]
      halt: false
      clrex_on_switch: false
    # or: schedule: {random: {seed: 7, max_steps: 100000}}
    tampers:
      - {thread: 1, at: retry+2, occurrence: 1, register: R7, action: add 1}
    expectations:
      memory: {accountBalance: 110}
      violations: 1
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .isa import Program
from .machine import ExecMode, init_machine
from .sched import (
    DEFAULT_MAX_STEPS,
    RandomSchedule,
    RunResult,
    ScheduleScript,
    run_random,
    run_schedule,
)
from .tamper import EVERY, TamperSpec


class ScenarioError(Exception):
    pass


@dataclass
class Scenario:
    threads: int
    mode: ExecMode
    schedule: ScheduleScript | RandomSchedule
    program: str | None = None
    overrides: dict[str, int] = field(default_factory=dict)
    tampers: list[TamperSpec] = field(default_factory=list)
    expect_memory: dict[str, int] | None = None
    expect_violations: int | None = None

    def has_expectations(self) -> bool:
        return self.expect_memory is not None or self.expect_violations is not None


def _parse_register(value) -> int:
    if isinstance(value, int):
        return value
    m = re.match(r"[Rr](\d+)$", str(value).strip())
    if not m:
        raise ScenarioError(f"bad register {value!r}")
    return int(m.group(1))


def _parse_action(value) -> tuple[str, int]:
    parts = str(value).split()
    if len(parts) != 2 or parts[0] not in ("set", "add", "flip_bit"):
        raise ScenarioError(f"bad tamper action {value!r} (want 'set V', 'add V', or 'flip_bit P')")
    try:
        return (parts[0], int(parts[1], 10))
    except ValueError:
        raise ScenarioError(f"bad tamper action value in {value!r}") from None


def _parse_tamper(entry) -> TamperSpec:
    if not isinstance(entry, dict):
        raise ScenarioError(f"tamper entry must be a mapping, got {entry!r}")
    try:
        thread = int(entry["thread"])
        location = str(entry["at"])
        register = _parse_register(entry["register"])
        action = _parse_action(entry["action"])
    except KeyError as e:
        raise ScenarioError(f"tamper entry missing field {e.args[0]!r}") from None
    occurrence = entry.get("occurrence", 1)
    if occurrence == EVERY:
        pass
    elif isinstance(occurrence, int):
        if occurrence < 1:
            raise ScenarioError(f"tamper occurrence must be >= 1, got {occurrence}")
    else:
        raise ScenarioError(f"bad tamper occurrence {occurrence!r}")
    return TamperSpec(
        thread_id=thread,
        location=location,
        register=register,
        action=action,
        occurrence=occurrence,
    )


def _parse_schedule(raw, mode: ExecMode) -> ScheduleScript | RandomSchedule:
    if not isinstance(raw, dict):
        raise ScenarioError("schedule must be a mapping with 'entries' or 'random'")
    if "random" in raw:
        rnd = raw["random"]
        if not isinstance(rnd, dict) or "seed" not in rnd:
            raise ScenarioError("random schedule needs a seed")
        return RandomSchedule(
            seed=int(rnd["seed"]),
            max_steps=int(rnd.get("max_steps", DEFAULT_MAX_STEPS)),
        )
    if "entries" not in raw:
        raise ScenarioError("schedule must have 'entries' or 'random'")
    entries = []
    for item in raw["entries"]:
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise ScenarioError(f"schedule entry must be [thread, steps], got {item!r}")
        entries.append((int(item[0]), int(item[1])))
    return ScheduleScript(
        entries=entries,
        mode=mode,
        clrex_on_switch=bool(raw.get("clrex_on_switch", False)),
        halt=bool(raw.get("halt", False)),
    )


_MODES = {"gdb": ExecMode.GDB, "hw": ExecMode.HW}


def parse_scenario(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a YAML mapping")
    unknown = set(doc) - {
        "program",
        "threads",
        "mode",
        "overrides",
        "schedule",
        "tampers",
        "expectations",
    }
    if unknown:
        raise ScenarioError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
    if "threads" not in doc:
        raise ScenarioError("scenario needs a thread count")
    threads = int(doc["threads"])
    if threads < 1:
        raise ScenarioError("threads must be >= 1")
    mode_name = str(doc.get("mode", "hw"))
    if mode_name not in _MODES:
        raise ScenarioError(f"bad mode {mode_name!r} (want gdb or hw)")
    mode = _MODES[mode_name]
    if "schedule" not in doc:
        raise ScenarioError("scenario needs a schedule")
    schedule = _parse_schedule(doc["schedule"], mode)

    overrides = {}
    for name, value in (doc.get("overrides") or {}).items():
        overrides[str(name)] = int(value)
    tampers = [_parse_tamper(t) for t in (doc.get("tampers") or [])]

    expect_memory = None
    expect_violations = None
    expectations = doc.get("expectations")
    if expectations is not None:
        if not isinstance(expectations, dict):
            raise ScenarioError("expectations must be a mapping")
        if "memory" in expectations:
            expect_memory = {str(k): int(v) for k, v in expectations["memory"].items()}
        if "violations" in expectations:
            expect_violations = int(expectations["violations"])

    return Scenario(
        threads=threads,
        mode=mode,
        schedule=schedule,
        program=str(doc["program"]) if "program" in doc else None,
        overrides=overrides,
        tampers=tampers,
        expect_memory=expect_memory,
        expect_violations=expect_violations,
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ScenarioError(f"{path}: {e}") from None
    try:
        return parse_scenario(doc)
    except ScenarioError as e:
        raise ScenarioError(f"{path}: {e}") from None


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    doc: dict = {}
    if scenario.program is not None:
        doc["program"] = scenario.program
    doc["threads"] = scenario.threads
    doc["mode"] = scenario.mode.value
    if scenario.overrides:
        doc["overrides"] = dict(scenario.overrides)
    if isinstance(scenario.schedule, RandomSchedule):
        doc["schedule"] = {
            "random": {"seed": scenario.schedule.seed, "max_steps": scenario.schedule.max_steps}
        }
    else:
        doc["schedule"] = {"entries": [list(e) for e in scenario.schedule.entries]}
        if scenario.schedule.halt:
            doc["schedule"]["halt"] = True
        if scenario.schedule.clrex_on_switch:
            doc["schedule"]["clrex_on_switch"] = True
    if scenario.tampers:
        doc["tampers"] = [
            {
                "thread": t.thread_id,
                "at": t.location,
                "occurrence": t.occurrence,
                "register": f"R{t.register}",
                "action": f"{t.action[0]} {t.action[1]}",
            }
            for t in scenario.tampers
        ]
    expectations = {}
    if scenario.expect_memory is not None:
        expectations["memory"] = dict(scenario.expect_memory)
    if scenario.expect_violations is not None:
        expectations["violations"] = scenario.expect_violations
    if expectations:
        doc["expectations"] = expectations
    Path(path).write_text(
        yaml.safe_dump(doc, sort_keys=False, default_flow_style=None), encoding="utf-8"
    )


def run_scenario(scenario: Scenario, program: Program) -> RunResult:
    """Execute a scenario against a parsed program."""
    machine = init_machine(program, scenario.threads, scenario.mode, scenario.overrides)
    if isinstance(scenario.schedule, RandomSchedule):
        return run_random(
            machine,
            scenario.schedule.seed,
            scenario.schedule.max_steps,
            tampers=scenario.tampers or None,
        )
    return run_schedule(machine, scenario.schedule, tampers=scenario.tampers or None)


def check_expectations(scenario: Scenario, result: RunResult) -> list[str]:
    """Mismatch descriptions; empty means the run met the scenario's
    expectations (absent a violations expectation, zero is expected)."""
    problems = []
    for name, want in (scenario.expect_memory or {}).items():
        got = result.final_memory.get(name)
        if got != want:
            problems.append(f"expected {name} = {want}, got {got}")
    want_violations = scenario.expect_violations if scenario.expect_violations is not None else 0
    if len(result.violations) != want_violations:
        problems.append(
            f"expected {want_violations} violation(s), got {len(result.violations)}"
        )
    return problems
