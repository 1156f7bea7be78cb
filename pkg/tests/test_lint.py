from __future__ import annotations

import json

import pytest

from spinsim.isa import parse_program
from spinsim.lint import (
    MISSING_LL_BRANCH,
    MISSING_SC_BRANCH,
    ORPHAN_LDREX,
    ORPHAN_STREX,
    REG_COMPARE,
    lint,
    render_records,
    render_text,
)

CORPUS_EXPECTATIONS = [
    "lock_basic.s",
    "lock_regcmp.s",
    "lock_no_ll_branch.s",
    "unlocked_inc.s",
    "lock_unlock.s",
]


def test_constant_compare_lock_is_clean(load_corpus):
    assert lint(load_corpus("lock_basic.s")) == []
    assert lint(load_corpus("lock_unlock.s")) == []


def test_register_compare_lock_two_findings(load_corpus):
    findings = lint(load_corpus("lock_regcmp.s"))
    assert [f.rule for f in findings] == [REG_COMPARE, REG_COMPARE]
    assert [f.pc for f in findings] == [3, 7]
    assert all(f.severity == "error" for f in findings)


def test_no_ll_branch_lock_one_warning(load_corpus):
    findings = lint(load_corpus("lock_no_ll_branch.s"))
    assert [f.rule for f in findings] == [MISSING_LL_BRANCH]
    assert findings[0].severity == "warning"
    assert findings[0].pc == 1  # the LDREX


@pytest.mark.parametrize("name", CORPUS_EXPECTATIONS)
def test_findings_match_expectation_files(load_corpus, corpus_file, name):
    """Each shipped program's findings match its frozen expectation file
    byte for byte."""
    expected = corpus_file(name).with_suffix(".lint").read_text(encoding="utf-8")
    assert render_records(lint(load_corpus(name))) == expected


def test_adding_ll_check_removes_the_warning(load_corpus):
    """Monotonicity: inserting CMP <dest>, #0; BNE retry right after the
    LDREX removes MISSING_LL_BRANCH and introduces nothing."""
    text = parse_program(
        ".data lockVar 0\n"
        "retry:\n"
        "    LDR R10, =lockVar\n"
        "    LDREX R8, [R10]\n"
        "    CMP R8, #0\n"
        "    BNE retry\n"
        "    MOV R9, #1\n"
        "    STREX R2, R9, [R10]\n"
        "    CMP R2, #0\n"
        "    BNE retry\n"
    )
    without = parse_program(
        ".data lockVar 0\n"
        "retry:\n"
        "    LDR R10, =lockVar\n"
        "    LDREX R8, [R10]\n"
        "    MOV R9, #1\n"
        "    STREX R2, R9, [R10]\n"
        "    CMP R2, #0\n"
        "    BNE retry\n"
    )
    assert [f.rule for f in lint(without)] == [MISSING_LL_BRANCH]
    assert lint(text) == []


def test_missing_sc_branch_is_an_error():
    p = parse_program(
        ".data x 0\n"
        "retry:\n"
        "    LDR R10, =x\n"
        "    LDREX R8, [R10]\n"
        "    CMP R8, #0\n"
        "    BNE retry\n"
        "    MOV R9, #1\n"
        "    STREX R2, R9, [R10]\n"
        "    NOP\n"
    )
    findings = lint(p)
    assert [f.rule for f in findings] == [MISSING_SC_BRANCH]
    assert findings[0].severity == "error"
    assert p.instructions[findings[0].pc].opcode == "STREX"


def test_sc_compare_without_branch_still_flags():
    p = parse_program(
        ".data x 0\n"
        "    LDR R10, =x\n"
        "    LDREX R8, [R10]\n"
        "    CMP R8, #0\n"
        "    BNE out\n"
        "    MOV R9, #1\n"
        "    STREX R2, R9, [R10]\n"
        "    CMP R2, #0\n"
        "out:\n"
        "    NOP\n"
    )
    assert MISSING_SC_BRANCH in [f.rule for f in lint(p)]


def test_orphans():
    only_ll = parse_program(".data x 0\n    LDR R1, =x\n    LDREX R2, [R1]\n")
    assert [f.rule for f in lint(only_ll)] == [ORPHAN_LDREX]
    only_sc = parse_program(".data x 0\n    LDR R1, =x\n    STREX R2, R3, [R1]\n")
    rules = [f.rule for f in lint(only_sc)]
    assert ORPHAN_STREX in rules
    assert all(f.severity in ("warning", "error") for f in lint(only_sc))


def test_first_compare_rule_checks_only_the_guard():
    # The guard compares against an immediate; a later unrelated
    # register compare of the same register is not the guard.
    p = parse_program(
        ".data x 0\n"
        "retry:\n"
        "    LDR R10, =x\n"
        "    LDREX R8, [R10]\n"
        "    CMP R8, #0\n"
        "    BNE retry\n"
        "    MOV R9, #1\n"
        "    STREX R2, R9, [R10]\n"
        "    CMP R2, #0\n"
        "    BNE retry\n"
        "    CMP R8, R4\n"
        "    BEQ retry\n"
    )
    assert [f.rule for f in lint(p)] == []


def test_redefinition_ends_the_chain():
    # R8 is overwritten before any compare: no REG_COMPARE for the LDREX.
    p = parse_program(
        ".data x 0\n"
        "retry:\n"
        "    LDR R10, =x\n"
        "    LDREX R8, [R10]\n"
        "    MOV R8, #0\n"
        "    CMP R8, R4\n"
        "    BNE retry\n"
        "    MOV R9, #1\n"
        "    STREX R2, R9, [R10]\n"
        "    CMP R2, #0\n"
        "    BNE retry\n"
    )
    assert REG_COMPARE not in [f.rule for f in lint(p)]


def test_findings_sorted_by_pc(load_corpus):
    findings = lint(load_corpus("lock_regcmp.s"))
    assert findings == sorted(findings, key=lambda f: (f.pc, f.rule))


def test_render_formats(load_corpus):
    findings = lint(load_corpus("lock_regcmp.s"))
    text = render_text(findings)
    assert "REG_COMPARE" in text and "pc 3" in text
    records = render_records(findings).strip().splitlines()
    assert len(records) == 2
    parsed = [json.loads(line) for line in records]
    assert {r["rule"] for r in parsed} == {REG_COMPARE}
    assert {r["severity"] for r in parsed} == {"error"}
    assert render_text([]) == "no findings\n"
    assert render_records([]) == ""
