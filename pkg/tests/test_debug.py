from __future__ import annotations

import json

from spinsim.debug import DebugSession, location_for_pc, run_repl
from spinsim.machine import ExecMode
from spinsim.scenario import load_scenario, run_scenario

ATTACK_COMMANDS = [
    "thread 0",
    "step 5",          # thread 0 takes the lock, stops at the critical entry
    "thread 1",
    "step 2",          # thread 1 stops at the LDREX (right after its MOV)
    "set $R7 += 1",
    "step",            # atomic group sails through the held lock
    "set $R7 = 0",
    "step",            # status compare passes
    "set scheduler-locking off",
    "continue",
]


def drive(session, commands):
    return [session.handle(c) for c in commands]


def test_manual_attack_reaches_110(load_corpus):
    session = DebugSession(load_corpus("lock_regcmp.s"), 3, ExecMode.GDB)
    outputs = drive(session, ATTACK_COMMANDS)
    final = outputs[-1]
    assert "accountBalance = 110" in final
    assert "violations: 1" in final
    assert session.machine.finished()


def test_losers_shown_cycling_at_retry(load_corpus):
    session = DebugSession(load_corpus("lock_regcmp.s"), 3, ExecMode.GDB)
    drive(session, ["thread 0", "step 5"])
    # loser threads sit at the retry loop
    info = session.handle("info threads")
    lines = info.splitlines()
    assert "critical_section" in lines[0]
    assert "retry" in lines[1] and "retry" in lines[2]
    # step the loser a few times: it stays in the retry labels
    drive(session, ["thread 1", "step 7"])
    info = session.handle("info threads")
    assert "retry" in info.splitlines()[1]


def test_register_edit_refused_strictly_inside_range(load_corpus):
    session = DebugSession(load_corpus("lock_regcmp.s"), 1, ExecMode.GDB)
    # force a thread into the middle of the exclusive range (normal gdb
    # stepping can never park it there)
    session.machine.threads[0].pc = 4
    out = session.handle("set $R7 += 1")
    assert "refused" in out
    assert "[2, 6]" in out
    assert session.machine.threads[0].regs[7] == 0


def test_register_edit_allowed_inside_range_in_hw_mode(load_corpus):
    session = DebugSession(load_corpus("lock_regcmp.s"), 1, ExecMode.HW)
    drive(session, ["step 4"])  # single-instruction steps land mid-range
    assert session.machine.threads[0].pc == 4
    out = session.handle("set $R9 = 77")
    assert "R9 = 77" in out


def test_exported_session_replays_exactly(load_corpus, corpus_file, tmp_path):
    program = load_corpus("lock_regcmp.s")
    session = DebugSession(program, 3, ExecMode.GDB, program_name="lock_regcmp.s")
    drive(session, ATTACK_COMMANDS)
    session.handle(f"export {tmp_path}/session.scn")

    scenario = load_scenario(tmp_path / "session.scn")
    result = run_scenario(scenario, program)
    assert result.final_memory == dict(session.machine.memory_by_symbol())
    assert len(result.violations) == len(session.runner.violations) == 1
    assert result.final_memory["accountBalance"] == 110

    # the export embeds the session's outcome as expectations, so the
    # run command's exit status re-verifies the reproduction
    from spinsim.cli import main

    code = main(["run", str(corpus_file("lock_regcmp.s")), f"{tmp_path}/session.scn"])
    assert code == 0


def test_export_records_later_occurrences(load_corpus, tmp_path):
    """A register edit made after the loser already spun through the
    hooked pc exports with the matching occurrence number."""
    program = load_corpus("lock_regcmp.s")
    session = DebugSession(program, 2, ExecMode.GDB, program_name="lock_regcmp.s")
    drive(session, ["thread 0", "step 5", "thread 1", "step 8"])  # two full spin cycles
    assert session.machine.threads[1].pc == 2
    session.handle("set $R7 += 1")
    spec = session.recorded_tampers[-1]
    assert spec.location == "retry+2"
    assert spec.occurrence == 3  # pc 2 executed twice already
    drive(session, ["step", "set $R7 = 0", "step", "set scheduler-locking off", "continue"])
    session.handle(f"export {tmp_path}/late.scn")

    result = run_scenario(load_scenario(tmp_path / "late.scn"), program)
    assert result.final_memory["accountBalance"] == 105  # 2 threads, one update lost
    assert len(result.violations) == 1


def test_breakpoints_and_continue(load_corpus):
    session = DebugSession(load_corpus("lock_regcmp.s"), 2, ExecMode.GDB)
    assert "no label" in session.handle("break nowhere")
    out = session.handle("break critical_section")
    assert "pc 9" in out
    out = session.handle("continue")
    assert "breakpoint critical_section" in out
    # the thread that hit the breakpoint takes focus
    assert session.machine.threads[session.focus].pc == 9


def test_info_registers_and_examine(load_corpus):
    session = DebugSession(load_corpus("lock_regcmp.s"), 1, ExecMode.GDB)
    drive(session, ["step 3"])
    info = session.handle("info registers")
    assert "R8 = 0" in info and "R9 = 1" in info
    assert "Z = 1" in info
    assert session.handle("x lockVar") == "lockVar = 1"
    assert "no data word" in session.handle("x nothing")


def test_step_rejects_dead_thread_and_counts(load_corpus):
    session = DebugSession(load_corpus("unlocked_inc.s"), 1, ExecMode.GDB)
    drive(session, ["step 4"])
    out = session.handle("step")
    assert "exited" in out
    assert "cannot set registers" in session.handle("set $R1 = 5")


def test_unknown_command_prints_help(load_corpus):
    session = DebugSession(load_corpus("lock_regcmp.s"), 1, ExecMode.GDB)
    out = session.handle("disassemble")
    assert "unknown or incomplete command" in out
    assert "scheduler-locking" in out


def test_trace_on_writes_at_quit(load_corpus, tmp_path):
    session = DebugSession(load_corpus("lock_regcmp.s"), 1, ExecMode.GDB)
    session.handle(f"trace on {tmp_path}/session.trace")
    drive(session, ["step 3"])
    out = session.handle("quit")
    assert session.done
    assert "trace written" in out
    lines = (tmp_path / "session.trace").read_bytes().decode().splitlines()
    assert json.loads(lines[0])["type"] == "header"
    assert len(lines) > 3


def test_repl_loop_quits_on_eof(load_corpus, capsys):
    session = DebugSession(load_corpus("lock_regcmp.s"), 1, ExecMode.GDB)
    feed = iter(["step 2", "info registers"])

    def fake_input(prompt):
        try:
            return next(feed)
        except StopIteration:
            raise EOFError

    run_repl(session, input_fn=fake_input, output=print)
    out = capsys.readouterr().out
    assert "spinsim debugger" in out
    assert session.done


def test_location_for_pc(load_corpus):
    p = load_corpus("lock_regcmp.s")
    assert location_for_pc(p, 0) == "retry"
    assert location_for_pc(p, 2) == "retry+2"
    assert location_for_pc(p, 9) == "critical_section"
    assert location_for_pc(p, 14) == "unlock+1"
