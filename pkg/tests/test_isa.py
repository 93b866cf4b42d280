"""vtype encodings, VLMAX arithmetic, the mnemonic catalog, and classification.

The encoded vtype values asserted here were worked out by hand from the two
register layouts (v1.0: vma[7] vta[6] vsew[5:3] vlmul[2:0]; v0.7.1:
vediv[6:5] vsew[4:2] vlmul[1:0]) so they cross-check the implementation
rather than restating it.
"""

from __future__ import annotations

from fractions import Fraction

import pytest

from rvvback.asmtext import parse_source, iter_instructions
from rvvback.isa import (
    Category,
    CategoryKind,
    IsaVersion,
    LowerRule,
    Policy,
    TargetConfig,
    VILL,
    VTypeSpec,
    check_v071_legal,
    classify_instruction,
    compute_vl,
    decode_vtype,
    decode_vtype_tokens,
    default_catalog,
    encode_vtype,
    parse_mem_mnemonic,
    parse_whole_move,
    parse_whole_reg,
    vlmax,
)

CFG = TargetConfig(128, 64)


def _spec(sew, lmul, tail=Policy.UNSPECIFIED, mask=Policy.UNSPECIFIED):
    return VTypeSpec(sew, Fraction(lmul), tail, mask)


def _classify(line: str) -> Category:
    unit = parse_source(line + "\n")
    (_, item), = list(iter_instructions(unit))
    return classify_instruction(item.parsed, CFG)


# --- vtype encoding -------------------------------------------------------

HAND_ENCODED_V10 = [
    (_spec(8, 1, Policy.AGNOSTIC, Policy.AGNOSTIC), 0xC0),
    (_spec(32, 1, Policy.AGNOSTIC, Policy.AGNOSTIC), 0xD0),
    (_spec(32, 2, Policy.UNDISTURBED, Policy.AGNOSTIC), 0x91),
    (_spec(64, 8, Policy.AGNOSTIC, Policy.UNDISTURBED), 0x5B),
    (_spec(32, Fraction(1, 2), Policy.AGNOSTIC, Policy.AGNOSTIC), 0xD7),
]

HAND_ENCODED_V071 = [
    (_spec(8, 1), 0x0),
    (_spec(32, 1), 0x8),
    (_spec(16, 4), 0x6),
    (_spec(64, 8), 0xF),
]


@pytest.mark.parametrize("spec,value", HAND_ENCODED_V10)
def test_encode_vtype_v10(spec, value):
    assert encode_vtype(spec, IsaVersion.V10) == value


@pytest.mark.parametrize("spec,value", HAND_ENCODED_V071)
def test_encode_vtype_v071(spec, value):
    assert encode_vtype(spec, IsaVersion.V071) == value


def test_encode_vill():
    assert encode_vtype(None, IsaVersion.V10) == VILL == 1 << 63
    assert encode_vtype(None, IsaVersion.V071) == VILL


@pytest.mark.parametrize("version", [IsaVersion.V10, IsaVersion.V071])
def test_decode_inverts_encode(version):
    sews = (8, 16, 32, 64)
    lmuls = [Fraction(m) for m in (1, 2, 4, 8)]
    if version is IsaVersion.V10:
        lmuls += [Fraction(1, 2), Fraction(1, 4), Fraction(1, 8)]
        policies = (Policy.AGNOSTIC, Policy.UNDISTURBED)
    else:
        policies = (Policy.UNSPECIFIED,)
    for sew in sews:
        for lmul in lmuls:
            for ta in policies:
                for ma in policies:
                    spec = VTypeSpec(sew, lmul, ta, ma)
                    assert decode_vtype(encode_vtype(spec, version), version) == spec


def test_decode_vill_bit_wins():
    assert decode_vtype(VILL | 0xD0, IsaVersion.V10) is None
    assert decode_vtype(VILL, IsaVersion.V071) is None


# --- token decoding -------------------------------------------------------

def test_decode_vtype_tokens():
    spec, err = decode_vtype_tokens(("e32", "m2", "ta", "ma"))
    assert err is None
    assert spec == _spec(32, 2, Policy.AGNOSTIC, Policy.AGNOSTIC)

    spec, err = decode_vtype_tokens(("e16", "mf4"))
    assert err is None
    assert spec.lmul == Fraction(1, 4)

    spec, err = decode_vtype_tokens(("e31", "m1"))
    assert spec is None and "e31" in err

    spec, err = decode_vtype_tokens(("e32", "m3"))
    assert spec is None and err


# --- VLMAX / vl -----------------------------------------------------------

VLMAX_TABLE = [
    # (sew, lmul, vlen, expected VLMAX = lmul * vlen / sew)
    (8, 1, 128, 16),
    (16, 2, 128, 16),
    (32, 1, 128, 4),
    (32, 2, 128, 8),
    (64, 8, 128, 16),
    (32, Fraction(1, 2), 128, 2),
    (32, 1, 256, 8),
    (8, 8, 512, 512),
]


@pytest.mark.parametrize("sew,lmul,vlen,expect", VLMAX_TABLE)
def test_vlmax(sew, lmul, vlen, expect):
    assert vlmax(_spec(sew, lmul), vlen) == expect


def test_compute_vl_clamps_to_vlmax():
    assert compute_vl(100, _spec(32, 1), 128) == 4
    assert compute_vl(3, _spec(32, 1), 128) == 3
    assert compute_vl(0, _spec(32, 1), 128) == 0
    assert compute_vl(17, _spec(8, 1), 128) == 16


# --- v0.7.1 legality ------------------------------------------------------

def test_fractional_lmul_has_no_v071_encoding():
    res = check_v071_legal(_spec(32, Fraction(1, 2)), CFG)
    assert not res.ok
    assert res.code == "E_FRACTIONAL_LMUL"


def test_sew_wider_than_elen_is_rejected():
    res = check_v071_legal(_spec(64, 1), TargetConfig(128, 32))
    assert not res.ok
    assert res.code == "E_SEW_EXCEEDS_ELEN"


def test_legal_config_yields_tokens_without_policies():
    res = check_v071_legal(_spec(32, 2, Policy.UNDISTURBED, Policy.AGNOSTIC), CFG)
    assert res.ok
    assert res.tokens == ("e32", "m2")


# --- catalog --------------------------------------------------------------

RENAMES = {
    "vfredusum.vs": "vfredsum.vs",
    "vfwredusum.vs": "vfwredsum.vs",
    "vcpop.m": "vpopc.m",
    "vfirst.m": "vmfirst.m",
    "vmandn.mm": "vmandnot.mm",
    "vmorn.mm": "vmornot.mm",
}


def test_catalog_census():
    cat = default_catalog()
    assert len(cat.entries) == 399


def test_catalog_renames_both_present():
    cat = default_catalog()
    for new, old in RENAMES.items():
        e_new = cat.lookup(new)
        assert e_new is not None and e_new.action == "rename" and e_new.arg == old
        e_old = cat.lookup(old)
        assert e_old is not None and e_old.in_v071


def test_catalog_rename_targets_always_resolve():
    cat = default_catalog()
    for entry in cat.entries.values():
        if entry.action == "rename":
            target = cat.lookup(entry.arg)
            assert target is not None, entry.mnemonic
            assert target.in_v071, entry.mnemonic


def test_catalog_unknown_mnemonic():
    assert default_catalog().lookup("vbogus.vv") is None


# --- classification -------------------------------------------------------

CLASSIFY_CASES = [
    ("\tadd a0, a1, a2", CategoryKind.NON_VECTOR, None),
    ("\tfence", CategoryKind.NON_VECTOR, None),
    ("\tvadd.vv v1, v2, v3", CategoryKind.PASS_THROUGH, None),
    # a vsetvli with no policy tokens is already valid v0.7.1 text
    ("\tvsetvli t0, a0, e32, m1", CategoryKind.PASS_THROUGH, None),
    ("\tvsetvli t0, a0, e32, m1, ta, ma", CategoryKind.LOWER, LowerRule.CONFIG),
    ("\tvsetivli t0, 4, e32, m1, ta, ma", CategoryKind.LOWER, LowerRule.IMMEDIATE_CONFIG),
    ("\tvle32.v v4, 0(a1)", CategoryKind.LOWER, LowerRule.MEMORY_EEW),
    ("\tvluxei16.v v4, (a1), v8", CategoryKind.LOWER, LowerRule.MEMORY_EEW),
    ("\tvl1r.v v1, (a0)", CategoryKind.LOWER, LowerRule.WHOLE_REGISTER),
    ("\tvs2r.v v2, (a0)", CategoryKind.LOWER, LowerRule.WHOLE_REGISTER),
    ("\tvmv1r.v v2, v3", CategoryKind.LOWER, LowerRule.WHOLE_REG_MOVE),
    ("\tcsrr t0, vlenb", CategoryKind.LOWER, LowerRule.CSR_SHIM),
    ("\tcsrr t0, vcsr", CategoryKind.LOWER, LowerRule.CSR_SHIM),
    ("\tcsrr t0, vl", CategoryKind.PASS_THROUGH, None),
    ("\tvmv.x.s a0, v2", CategoryKind.LOWER, LowerRule.SCALAR_MOVE),
    ("\tvfredusum.vs v1, v2, v3", CategoryKind.RENAME, "vfredsum.vs"),
    ("\tvnsrl.wv v1, v2, v3", CategoryKind.UNSUPPORTED, None),
]


@pytest.mark.parametrize("line,kind,arg", CLASSIFY_CASES, ids=lambda v: str(v).strip()[:28])
def test_classification(line, kind, arg):
    cat = _classify(line)
    assert cat.kind is kind
    if arg is not None:
        assert cat.arg == arg


def test_unsupported_carries_error_code():
    cat = _classify("\tvnsrl.wv v1, v2, v3")
    assert cat.code == "E_UNSUPPORTED"


# --- mnemonic shape helpers ----------------------------------------------

def test_parse_mem_mnemonic():
    shape = parse_mem_mnemonic("vle32.v")
    assert (shape.op, shape.mode, shape.eew) == ("load", "unit", 32)
    shape = parse_mem_mnemonic("vsse64.v")
    assert (shape.op, shape.mode, shape.eew) == ("store", "strided", 64)
    shape = parse_mem_mnemonic("vluxei16.v")
    assert (shape.op, shape.mode, shape.eew) == ("load", "indexed_u", 16)
    assert parse_mem_mnemonic("vse.v") is None  # v0.7.1 SEW-implied form
    assert parse_mem_mnemonic("vadd.vv") is None


def test_parse_whole_register_forms():
    assert parse_whole_reg("vl1r.v") == ("load", 1)
    assert parse_whole_reg("vl2re16.v") == ("load", 2)
    assert parse_whole_reg("vs4r.v") == ("store", 4)
    assert parse_whole_reg("vle32.v") is None
    assert parse_whole_move("vmv8r.v") == 8
    assert parse_whole_move("vmv.v.v") is None
