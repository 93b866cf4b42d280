"""Rewrite engine: lowered sequences, diagnostics, strategies, idempotence."""

from __future__ import annotations

from pathlib import Path

import pytest

from rvvback.asmtext import emit_source, parse_source
from rvvback.isa import TargetConfig
from rvvback.translate import Strategy, translate_program, verify_v071_purity

DATA = Path(__file__).resolve().parent / "data"
CORPUS = sorted((Path(__file__).resolve().parents[1] / "corpus").glob("*.s"))


def _translate(src, **kw):
    return translate_program(parse_source(src), **kw)


def _codes(res):
    return [d.code for d in res.diagnostics]


def _lines(res):
    return [ln for ln in emit_source(res.unit).splitlines()]


def _asm(res):
    """Instruction text only, whitespace-normalised, comments dropped."""
    out = []
    for ln in _lines(res):
        ln = ln.split("#", 1)[0].strip()
        if ln:
            out.append(" ".join(ln.split()))
    return out


# --- policy tokens --------------------------------------------------------

def test_policy_tokens_are_stripped_with_a_note():
    res = _translate("\tvsetvli t0, a0, e32, m1, ta, ma\n\tret\n")
    assert res.ok
    assert _codes(res) == ["N_POLICY_DROPPED"]
    assert _asm(res) == ["vsetvli t0, a0, e32, m1", "ret"]


def test_tail_undisturbed_warns():
    res = _translate("\tvsetvli t0, a0, e32, m1, tu, ma\n\tret\n")
    assert res.ok
    assert "W_TAIL_UNDISTURBED" in _codes(res)
    assert _asm(res) == ["vsetvli t0, a0, e32, m1", "ret"]


def test_bare_vsetvli_passes_untouched():
    res = _translate("\tvsetvli t0, a0, e32, m1\n\tret\n")
    assert res.diagnostics == []
    assert _asm(res) == ["vsetvli t0, a0, e32, m1", "ret"]


# --- vsetivli -------------------------------------------------------------

def test_vsetivli_expands_to_li_plus_vsetvli():
    res = _translate("\tvsetivli t0, 4, e32, m1, ta, ma\n\tret\n")
    assert res.ok
    assert _asm(res) == ["li t6, 4", "vsetvli t0, t6, e32, m1", "ret"]
    assert res.consumed_scratch == {31}
    assert "N_SCRATCH_USED" in _codes(res)


def test_vsetivli_memory_strategy_spills_instead():
    res = _translate("\tvsetivli t0, 4, e32, m1, ta, ma\n\tret\n",
                     strategy=Strategy.MEMORY)
    assert res.ok
    assert res.consumed_scratch == set()
    assert _asm(res) == [
        "addi sp, sp, -16",
        "sd t1, 0(sp)",
        "li t1, 4",
        "vsetvli t0, t1, e32, m1",
        "ld t1, 0(sp)",
        "addi sp, sp, 16",
        "ret",
    ]
    # memory mode tells you when register mode would have been free
    assert "N_REGISTER_CANDIDATE" in _codes(res)


# --- EEW-explicit memory ops ---------------------------------------------

def test_matching_eew_renames_to_sew_implied_form():
    res = _translate(
        "\tvsetvli t0, a0, e32, m1, ta, ma\n"
        "\tvle32.v v1, 0(a1)\n"
        "\tvse32.v v1, 0(a2)\n"
        "\tret\n"
    )
    assert res.ok
    assert _asm(res)[1:3] == ["vle.v v1, 0(a1)", "vse.v v1, 0(a2)"]
    assert "W_EEW_WRAPPED" not in _codes(res)


def test_differing_eew_gets_wrapped():
    res = _translate(
        "\tvsetvli t0, a0, e32, m4, ta, ma\n"
        "\tvle8.v v8, 0(a1)\n"
        "\tret\n"
    )
    assert res.ok
    assert "W_EEW_WRAPPED" in _codes(res)
    # EMUL = EEW/SEW * LMUL = 8/32 * 4 = 1
    assert _asm(res) == [
        "vsetvli t0, a0, e32, m4",
        "csrr t6, vl",
        "csrr t5, vtype",
        "vsetvli zero, t6, e8, m1",
        "vle.v v8, 0(a1)",
        "vsetvl zero, t6, t5",
        "ret",
    ]


def test_eew_without_known_configuration_is_an_error():
    res = _translate("\tvle32.v v4, 0(a1)\n\tret\n")
    assert not res.ok
    assert "E_EEW_MISMATCH" in _codes(res)


def test_indexed_access_with_differing_index_width_is_an_error():
    res = _translate(
        "\tvsetvli t0, a0, e32, m1, ta, ma\n"
        "\tvluxei16.v v4, (a1), v8\n"
        "\tret\n"
    )
    assert not res.ok
    assert "E_EEW_MISMATCH" in _codes(res)


def test_fractional_emul_after_scaling_is_an_error():
    # e8 under e32/m1: EMUL = 1/4
    res = _translate(
        "\tvsetvli t0, a0, e32, m1, ta, ma\n"
        "\tvle8.v v8, 0(a1)\n"
        "\tret\n"
    )
    assert not res.ok
    assert "E_FRACTIONAL_LMUL" in _codes(res)


# --- whole-register ops ---------------------------------------------------

def test_whole_register_load_wraps_in_e8_config():
    res = _translate("\tvl1r.v v2, (a0)\n\tret\n")
    assert res.ok
    assert _asm(res) == [
        "csrr t6, vl",
        "csrr t5, vtype",
        "vsetvli zero, zero, e8, m1",
        "vle.v v2, (a0)",
        "vsetvl zero, t6, t5",
        "ret",
    ]


def test_whole_register_group_uses_group_multiplier():
    res = _translate("\tvl2re16.v v2, (a0)\n\tret\n")
    assert res.ok
    assert "vsetvli zero, zero, e8, m2" in _asm(res)


def test_whole_register_move_becomes_vmv_v_v():
    res = _translate("\tvmv1r.v v2, v3\n\tret\n")
    assert res.ok
    assert "vmv.v.v v2, v3" in _asm(res)


# --- CSR shims ------------------------------------------------------------

def test_vlenb_with_known_vlen_is_a_constant():
    res = _translate("\tcsrr t0, vlenb\n\tret\n", cfg=TargetConfig(128, 64))
    assert res.ok
    assert _asm(res) == ["li t0, 16", "ret"]
    assert res.consumed_scratch == set()


def test_vlenb_with_unknown_vlen_probes_and_restores():
    res = _translate("\tcsrr t0, vlenb\n\tret\n")
    assert res.ok
    assert _asm(res) == [
        "csrr t6, vl",
        "csrr t5, vtype",
        "vsetvli t0, zero, e8, m1",
        "vsetvl zero, t6, t5",
        "ret",
    ]


def test_vcsr_is_composed_from_vxrm_and_vxsat():
    res = _translate("\tcsrr a0, vcsr\n\tret\n")
    assert res.ok
    assert "W_VCSR_SHIM" in _codes(res)
    assert _asm(res) == [
        "csrr a0, vxrm",
        "slli a0, a0, 1",
        "csrr t6, vxsat",
        "add a0, a0, t6",
        "ret",
    ]


# --- renames and scalar moves --------------------------------------------

RENAME_LINES = [
    ("\tvfredusum.vs v1, v2, v3\n", "vfredsum.vs v1, v2, v3"),
    ("\tvfwredusum.vs v1, v2, v3\n", "vfwredsum.vs v1, v2, v3"),
    ("\tvcpop.m a0, v4\n", "vpopc.m a0, v4"),
    ("\tvfirst.m a0, v4\n", "vmfirst.m a0, v4"),
    ("\tvmandn.mm v1, v2, v3\n", "vmandnot.mm v1, v2, v3"),
    ("\tvmorn.mm v1, v2, v3\n", "vmornot.mm v1, v2, v3"),
]


@pytest.mark.parametrize("line,expect", RENAME_LINES, ids=lambda v: v.split()[0])
def test_renames(line, expect):
    res = _translate(line + "\tret\n")
    assert res.ok
    assert _asm(res) == [expect, "ret"]


def test_vmv_x_s_becomes_vext_with_zero_index():
    res = _translate(
        "\tvsetvli t0, a0, e32, m1, ta, ma\n\tvmv.x.s a0, v2\n\tret\n"
    )
    assert res.ok
    assert _asm(res)[1] == "vext.x.v a0, v2, zero"


def test_unsupported_narrowing_op_is_an_error():
    res = _translate("\tvsetvli t0, a0, e32, m1, ta, ma\n\tvnsrl.wv v1, v2, v3\n\tret\n")
    assert not res.ok
    assert "E_UNSUPPORTED" in _codes(res)


# --- strategies -----------------------------------------------------------

ALL_LIVE_REGS = ["t0", "t1", "t2", "t3", "t4", "t5", "t6",
                 "a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7"]
ALL_LIVE_SRC = (
    "".join(f"\tli {r}, 1\n" for r in ALL_LIVE_REGS)
    + "\tvsetivli s2, 4, e32, m1, ta, ma\n"
    + "".join(f"\tadd s0, s0, {r}\n" for r in ALL_LIVE_REGS)
    + "\tret\n"
)


def test_register_strategy_fails_when_nothing_is_dead():
    res = _translate(ALL_LIVE_SRC, strategy=Strategy.REGISTER)
    assert not res.ok
    assert "E_NO_SCRATCH" in _codes(res)


def test_auto_strategy_falls_back_to_memory():
    res = _translate(ALL_LIVE_SRC, strategy=Strategy.AUTO)
    assert res.ok
    assert res.fallback_sites == [15]
    assert "sd t0, 0(sp)" in _asm(res)


def test_memory_strategy_never_consumes_registers():
    res = _translate(ALL_LIVE_SRC, strategy=Strategy.MEMORY)
    assert res.ok
    assert res.consumed_scratch == set()


# --- mask layout warning --------------------------------------------------

def test_moving_v0_through_memory_warns_when_masks_are_in_use():
    res = _translate(
        "\tvsetvli t0, a0, e32, m1, ta, ma\n"
        "\tvle32.v v0, 0(a1)\n"
        "\tvadd.vv v4, v4, v8, v0.t\n"
        "\tret\n"
    )
    assert "W_MASK_LAYOUT" in _codes(res)


def test_no_mask_warning_when_v0_is_plain_data():
    res = _translate(
        "\tvsetvli t0, a0, e32, m1, ta, ma\n"
        "\tvle32.v v0, 0(a1)\n"
        "\tvse32.v v0, 0(a2)\n"
        "\tret\n"
    )
    assert "W_MASK_LAYOUT" not in _codes(res)


# --- redundancy elimination ----------------------------------------------

def test_eliminate_redundant_drops_only_marked_sites():
    path = DATA / "redundant_exec.s"
    unit = parse_source(path.read_text(), name=str(path))
    res = translate_program(unit, eliminate_redundant=True)
    assert res.ok
    assert res.eliminated_sites == res.redundant_sites == [8, 10]
    notes = [d for d in res.diagnostics if d.code == "N_REDUNDANT_CONFIG"]
    assert [d.loc.line for d in notes] == [9, 11]
    asm = _asm(res)
    assert asm.count("vsetvli t1, a0, e32, m2") == 1
    assert asm.count("vsetvli zero, a0, e32, m2") == 0


def test_without_flag_redundant_sites_are_reported_but_kept():
    path = DATA / "redundant_exec.s"
    unit = parse_source(path.read_text(), name=str(path))
    res = translate_program(unit, eliminate_redundant=False)
    assert res.redundant_sites == [8, 10]
    assert res.eliminated_sites == []
    assert _asm(res).count("vsetvli zero, a0, e32, m2") == 2


# --- errors leave the unit unusable, not mangled --------------------------

def test_fractional_lmul_fixture_error_location():
    path = DATA / "frac.s"
    unit = parse_source(path.read_text(), name=str(path))
    res = translate_program(unit)
    assert not res.ok
    err = [d for d in res.diagnostics if d.code == "E_FRACTIONAL_LMUL"]
    assert len(err) == 1
    assert err[0].loc.line == 6


def test_malformed_operands_produce_errors_not_crashes():
    res = _translate("\tvsetivli\n\tret\n")
    assert not res.ok
    assert "E_VTYPE_SYNTAX" in _codes(res)
    # lowerings that must read their operands reject wrong shapes
    res = _translate("\tvmv1r.v v1\n\tret\n")
    assert not res.ok
    assert "E_PARSE" in _codes(res)
    res = _translate("\tvsetvli t0, a0, e32, m1, ta, ma\n\tvmv.x.s a0\n\tret\n")
    assert not res.ok
    assert "E_PARSE" in _codes(res)


# --- whole-corpus properties ---------------------------------------------

@pytest.mark.parametrize("strategy", list(Strategy), ids=lambda s: s.value)
@pytest.mark.parametrize("path", CORPUS, ids=lambda p: p.name)
def test_corpus_translates_cleanly_and_purely(path, strategy):
    unit = parse_source(path.read_text(), name=str(path))
    res = translate_program(unit, strategy=strategy)
    errors = [d for d in res.diagnostics if d.severity.value == "error"]
    assert errors == []
    assert verify_v071_purity(res.unit) == []


@pytest.mark.parametrize("path", CORPUS, ids=lambda p: p.name)
def test_translation_is_idempotent(path):
    unit = parse_source(path.read_text(), name=str(path))
    first = emit_source(translate_program(unit).unit)
    res2 = translate_program(parse_source(first))
    assert emit_source(res2.unit) == first
    assert res2.diagnostics == []


def test_original_lines_are_kept_as_comments():
    res = _translate("\tvsetivli t0, 4, e32, m1, ta, ma\n\tret\n")
    assert any("# was: vsetivli t0, 4, e32, m1, ta, ma" in ln for ln in _lines(res))
