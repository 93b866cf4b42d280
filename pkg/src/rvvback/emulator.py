"""Dual-version interpreter for the RVV subset the translator handles.

One step() implementation serves both ISA versions; behaviour that differs
between them is switched on ``state.version``:

- v0.7.1 zeroes tail elements and keeps inactive (masked-off) elements
  undisturbed; mask bit i lives at bit i*MLEN with MLEN = SEW/LMUL.
- v1.0 applies tail/mask policies; tail-agnostic is realized as
  undisturbed by default, or as an all-ones fill when
  ``hostile_agnostic`` is set (a test-only stand-in for hardware that
  overwrites agnostic tails with 1s).  Inactive elements stay
  undisturbed under both mask policies: that is a conforming reading of
  "agnostic" and it matches what v0.7.1 mandates, so there is no forced
  difference to model.  Mask bit i lives at bit i.

Scalar arithmetic is 64-bit two's complement; vector floats are modeled
at 32-bit element width only (plus the 64-bit accumulator of widening
float reductions).  This is a reference model for differential testing,
not a cycle- or trap-accurate simulator.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .asmtext import Instruction, ItemKind, MemRef, OperandKind, ProgramUnit
from .isa import (
    IsaVersion,
    Policy,
    VTypeSpec,
    decode_vtype,
    decode_vtype_tokens,
    encode_vtype,
    vlmax,
)

MASK64 = (1 << 64) - 1

E_UNSUPPORTED_INSN = "E_UNSUPPORTED_INSN"
E_ILLEGAL_VTYPE = "E_ILLEGAL_VTYPE"
E_MEM_FAULT = "E_MEM_FAULT"
E_FUEL_EXHAUSTED = "E_FUEL_EXHAUSTED"
E_BAD_OPERANDS = "E_BAD_OPERANDS"


class EmuError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def _sx(val: int, bits: int) -> int:
    val &= (1 << bits) - 1
    if val & (1 << (bits - 1)):
        val -= 1 << bits
    return val


def _u64(val: int) -> int:
    return val & MASK64


class MemImage:
    """Sparse byte memory made of explicit ranges; anything outside faults."""

    def __init__(self):
        self.ranges: list[tuple[int, bytearray]] = []

    def add_range(self, start: int, size_or_bytes) -> None:
        if isinstance(size_or_bytes, int):
            buf = bytearray(size_or_bytes)
        else:
            buf = bytearray(size_or_bytes)
        self.ranges.append((start, buf))

    def _locate(self, addr: int, n: int):
        for start, buf in self.ranges:
            if start <= addr and addr + n <= start + len(buf):
                return start, buf
        raise EmuError(E_MEM_FAULT, f"access of {n} byte(s) at {addr:#x} outside image")

    def read(self, addr: int, n: int) -> bytes:
        start, buf = self._locate(addr, n)
        off = addr - start
        return bytes(buf[off : off + n])

    def write(self, addr: int, data: bytes) -> None:
        start, buf = self._locate(addr, len(data))
        off = addr - start
        buf[off : off + len(data)] = data

    def clone(self) -> "MemImage":
        other = MemImage()
        for start, buf in self.ranges:
            other.ranges.append((start, bytearray(buf)))
        return other


@dataclass
class MachineState:
    version: IsaVersion
    vlen_bits: int = 128
    elen_bits: int = 64
    hostile_agnostic: bool = False
    xregs: list[int] = field(default_factory=lambda: [0] * 32)
    fregs: list[int] = field(default_factory=lambda: [0] * 32)  # f32 bit patterns
    vregs: bytearray = field(default_factory=bytearray)
    mem: MemImage = field(default_factory=MemImage)
    vl: int = 0
    vtype: VTypeSpec | None = None  # None encodes vill
    vstart: int = 0
    vxsat: int = 0
    vxrm: int = 0

    def __post_init__(self):
        if not self.vregs:
            self.vregs = bytearray(32 * self.vlenb)

    @property
    def vlenb(self) -> int:
        return self.vlen_bits // 8

    def set_xreg(self, idx: int, val: int) -> None:
        if idx != 0:
            self.xregs[idx] = _u64(val)

    def get_xreg(self, idx: int) -> int:
        return 0 if idx == 0 else self.xregs[idx]

    def vreg_bytes(self, reg: int, nregs: int = 1) -> bytes:
        return bytes(self.vregs[reg * self.vlenb : (reg + nregs) * self.vlenb])

    def set_vreg_bytes(self, reg: int, data: bytes) -> None:
        self.vregs[reg * self.vlenb : reg * self.vlenb + len(data)] = data


# ---------------------------------------------------------------------------
# configuration


def _apply_config(state: MachineState, avl_reg: int | None, avl_imm: int | None,
                  spec: VTypeSpec | None, rd: int) -> None:
    ok = (
        spec is not None
        and not spec.fractional
        and spec.lmul <= 8
        and 8 <= spec.sew <= state.elen_bits
        and vlmax(spec, state.vlen_bits) >= 1
    )
    if not ok:
        state.vtype = None
        state.vl = 0
        state.set_xreg(rd, 0)
        return
    state.vtype = spec
    limit = vlmax(spec, state.vlen_bits)
    if avl_imm is not None:
        avl = avl_imm
    elif avl_reg == 0:
        avl = limit  # AVL from the zero register requests the maximum
    else:
        avl = state.get_xreg(avl_reg)
    state.vl = min(avl, limit)
    state.set_xreg(rd, state.vl)


def _vtype_tokens_of(instr: Instruction) -> list[str]:
    return [op.value for op in instr.operands if op.kind is OperandKind.VTYPE_TOKEN]


def _exec_vsetvli(state: MachineState, instr: Instruction) -> None:
    ops = instr.operands
    if len(ops) < 2 or ops[0].kind is not OperandKind.SCALAR_REG \
            or ops[1].kind is not OperandKind.SCALAR_REG:
        raise EmuError(E_BAD_OPERANDS, f"vsetvli operands: {instr.mnemonic}")
    tokens = _vtype_tokens_of(instr)
    spec, err = decode_vtype_tokens(tokens)
    if err:
        raise EmuError(E_BAD_OPERANDS, f"vsetvli vtype: {err}")
    if state.version is IsaVersion.V071:
        if spec.tail is not Policy.UNSPECIFIED or spec.mask is not Policy.UNSPECIFIED:
            raise EmuError(
                E_UNSUPPORTED_INSN,
                "tail/mask policy tokens are not valid v0.7.1 vsetvli syntax",
            )
        if spec.fractional:
            raise EmuError(E_UNSUPPORTED_INSN, "fractional LMUL token in v0.7.1 vsetvli")
    _apply_config(state, ops[1].value, None, spec, ops[0].value)


def _exec_vsetivli(state: MachineState, instr: Instruction) -> None:
    ops = instr.operands
    if len(ops) < 2 or ops[0].kind is not OperandKind.SCALAR_REG \
            or ops[1].kind is not OperandKind.IMMEDIATE:
        raise EmuError(E_BAD_OPERANDS, "vsetivli operands")
    spec, err = decode_vtype_tokens(_vtype_tokens_of(instr))
    if err:
        raise EmuError(E_BAD_OPERANDS, f"vsetivli vtype: {err}")
    _apply_config(state, None, ops[1].value, spec, ops[0].value)


def _exec_vsetvl(state: MachineState, instr: Instruction) -> None:
    ops = instr.operands
    if len(ops) != 3 or any(o.kind is not OperandKind.SCALAR_REG for o in ops):
        raise EmuError(E_BAD_OPERANDS, "vsetvl operands")
    spec = decode_vtype(state.get_xreg(ops[2].value), state.version)
    _apply_config(state, ops[1].value, None, spec, ops[0].value)


# ---------------------------------------------------------------------------
# element access helpers


def _require_vtype(state: MachineState) -> VTypeSpec:
    if state.vtype is None:
        raise EmuError(E_ILLEGAL_VTYPE, "vector instruction with vill set")
    return state.vtype


def _emul_regs(state: MachineState, eew: int) -> int:
    """Effective register-group size in whole registers for element width
    ``eew`` under the current config; fractional groups are not modeled."""
    spec = _require_vtype(state)
    emul = Fraction(eew, spec.sew) * spec.lmul
    if emul < 1:
        raise EmuError(E_ILLEGAL_VTYPE, f"fractional register group (EMUL {emul}) not modeled")
    if emul > 8 or emul.denominator != 1:
        raise EmuError(E_ILLEGAL_VTYPE, f"illegal register group (EMUL {emul})")
    return int(emul)


def _read_elem(state: MachineState, reg: int, i: int, esize: int, signed=False) -> int:
    off = reg * state.vlenb + i * esize
    return int.from_bytes(state.vregs[off : off + esize], "little", signed=signed)


def _write_elem(state: MachineState, reg: int, i: int, esize: int, val: int) -> None:
    off = reg * state.vlenb + i * esize
    state.vregs[off : off + esize] = (val & ((1 << (esize * 8)) - 1)).to_bytes(
        esize, "little"
    )


def _mlen(state: MachineState) -> int:
    spec = _require_vtype(state)
    return max(1, spec.sew // int(spec.lmul))


def _mask_bit(state: MachineState, reg: int, i: int) -> bool:
    pos = i if state.version is IsaVersion.V10 else i * _mlen(state)
    byte = state.vregs[reg * state.vlenb + pos // 8]
    return bool(byte & (1 << (pos % 8)))


def _set_bit(state: MachineState, reg: int, pos: int, val: bool) -> None:
    off = reg * state.vlenb + pos // 8
    if val:
        state.vregs[off] |= 1 << (pos % 8)
    else:
        state.vregs[off] &= ~(1 << (pos % 8)) & 0xFF


def _write_mask_elem(state: MachineState, reg: int, i: int, val: bool) -> None:
    if state.version is IsaVersion.V10:
        _set_bit(state, reg, i, val)
        return
    mlen = _mlen(state)
    for b in range(mlen):
        _set_bit(state, reg, i * mlen + b, False)
    _set_bit(state, reg, i * mlen, val)


def _is_masked(instr: Instruction) -> bool:
    return bool(instr.operands) and instr.operands[-1].kind is OperandKind.MASK_REF


def _active(state: MachineState, i: int, masked: bool) -> bool:
    return not masked or _mask_bit(state, 0, i)


def _fill_bytes(state: MachineState, reg_byte_start: int, length: int, value: int) -> None:
    state.vregs[reg_byte_start : reg_byte_start + length] = bytes([value]) * length


def _finish_group_write(state: MachineState, vd: int, esize: int, nregs: int) -> None:
    """Apply the version's tail rule after an element-wise write of a
    destination group spanning ``nregs`` registers."""
    spec = state.vtype
    tail_start = vd * state.vlenb + state.vl * esize
    group_end = (vd + nregs) * state.vlenb
    if state.version is IsaVersion.V071:
        _fill_bytes(state, tail_start, group_end - tail_start, 0)
    elif state.hostile_agnostic and spec is not None and spec.tail is Policy.AGNOSTIC:
        _fill_bytes(state, tail_start, group_end - tail_start, 0xFF)


# ---------------------------------------------------------------------------
# float helpers (32-bit elements, 64-bit widening accumulator)


def _f32_from_bits(bits: int):
    return np.float32(struct.unpack("<f", struct.pack("<I", bits & 0xFFFFFFFF))[0])


def _bits_from_f32(val) -> int:
    return struct.unpack("<I", struct.pack("<f", float(np.float32(val))))[0]


def _read_f32(state: MachineState, reg: int, i: int):
    return _f32_from_bits(_read_elem(state, reg, i, 4))


def _write_f32(state: MachineState, reg: int, i: int, val) -> None:
    _write_elem(state, reg, i, 4, _bits_from_f32(val))


def _require_f32(state: MachineState) -> None:
    spec = _require_vtype(state)
    if spec.sew != 32:
        raise EmuError(E_ILLEGAL_VTYPE, f"float ops modeled at SEW 32 only, not {spec.sew}")


# ---------------------------------------------------------------------------
# vector op implementations


def _vec_regs(instr: Instruction, *positions: int) -> list[int]:
    regs = []
    for p in positions:
        op = instr.operands[p]
        if op.kind is not OperandKind.VECTOR_REG:
            raise EmuError(E_BAD_OPERANDS, f"{instr.mnemonic}: vector register expected")
        regs.append(op.value)
    return regs


def _elemwise_int(state: MachineState, instr: Instruction, fn) -> None:
    spec = _require_vtype(state)
    esize = spec.sew // 8
    nregs = _emul_regs(state, spec.sew)
    masked = _is_masked(instr)
    if state.version is IsaVersion.V10 and state.vl == 0:
        return
    (vd,) = _vec_regs(instr, 0)
    for i in range(state.vl):
        if _active(state, i, masked):
            _write_elem(state, vd, i, esize, fn(state, instr, i, esize))
    _finish_group_write(state, vd, esize, nregs)


def _int_binop_vv(op):
    def fn(state, instr, i, esize):
        _, vs2, vs1 = _vec_regs(instr, 0, 1, 2)
        a = _read_elem(state, vs2, i, esize)
        b = _read_elem(state, vs1, i, esize)
        return op(a, b)

    return fn


def _int_binop_vx(op):
    def fn(state, instr, i, esize):
        _, vs2 = _vec_regs(instr, 0, 1)
        rs1 = instr.operands[2]
        if rs1.kind is not OperandKind.SCALAR_REG:
            raise EmuError(E_BAD_OPERANDS, f"{instr.mnemonic}: scalar operand expected")
        a = _read_elem(state, vs2, i, esize)
        b = state.get_xreg(rs1.value)
        return op(a, b)

    return fn


def _exec_vmv_v_x(state: MachineState, instr: Instruction) -> None:
    rs1 = instr.operands[1]
    if rs1.kind is not OperandKind.SCALAR_REG:
        raise EmuError(E_BAD_OPERANDS, "vmv.v.x operand")
    _elemwise_int(state, instr, lambda st, ins, i, es: st.get_xreg(rs1.value))


def _exec_vmv_v_i(state: MachineState, instr: Instruction) -> None:
    val = instr.operands[1]
    if val.kind is not OperandKind.IMMEDIATE:
        raise EmuError(E_BAD_OPERANDS, "vmv.v.i operand")
    _elemwise_int(state, instr, lambda st, ins, i, es: val.value)


def _exec_vmv_v_v(state: MachineState, instr: Instruction) -> None:
    def fn(st, ins, i, es):
        _, vs1 = _vec_regs(ins, 0, 1)
        return _read_elem(st, vs1, i, es)

    _elemwise_int(state, instr, fn)


def _exec_vmerge(state: MachineState, instr: Instruction) -> None:
    """vmerge.v{v,x,i}m vd, vs2, <alt>, v0: unmasked write selecting per
    lane between vs2 (mask bit clear) and the alternative (bit set)."""
    if len(instr.operands) != 4 or instr.operands[3].kind is not OperandKind.VECTOR_REG \
            or instr.operands[3].value != 0:
        raise EmuError(E_BAD_OPERANDS, f"{instr.mnemonic}: expected trailing v0")
    alt = instr.operands[2]

    def fn(st, ins, i, es):
        _, vs2 = _vec_regs(ins, 0, 1)
        if not _mask_bit(st, 0, i):
            return _read_elem(st, vs2, i, es)
        if alt.kind is OperandKind.VECTOR_REG:
            return _read_elem(st, alt.value, i, es)
        if alt.kind is OperandKind.SCALAR_REG:
            return st.get_xreg(alt.value)
        if alt.kind is OperandKind.IMMEDIATE:
            return alt.value
        raise EmuError(E_BAD_OPERANDS, f"{ins.mnemonic}: bad merge operand")

    _elemwise_int(state, instr, fn)


def _elemwise_f32(state: MachineState, instr: Instruction, fn) -> None:
    _require_f32(state)
    nregs = _emul_regs(state, 32)
    masked = _is_masked(instr)
    if state.version is IsaVersion.V10 and state.vl == 0:
        return
    (vd,) = _vec_regs(instr, 0)
    with np.errstate(all="ignore"):
        for i in range(state.vl):
            if _active(state, i, masked):
                _write_f32(state, vd, i, fn(state, instr, i))
    _finish_group_write(state, vd, 4, nregs)


def _f32_binop_vv(op):
    def fn(state, instr, i):
        _, vs2, vs1 = _vec_regs(instr, 0, 1, 2)
        return op(_read_f32(state, vs2, i), _read_f32(state, vs1, i))

    return fn


def _freg_f32(state: MachineState, idx: int):
    return _f32_from_bits(state.fregs[idx])


def _exec_vfmacc_vv(state: MachineState, instr: Instruction) -> None:
    def fn(st, ins, i):
        vd, vs1, vs2 = _vec_regs(ins, 0, 1, 2)
        return np.float32(
            np.float32(_read_f32(st, vs1, i) * _read_f32(st, vs2, i))
            + _read_f32(st, vd, i)
        )

    _elemwise_f32(state, instr, fn)


def _exec_vfmacc_vf(state: MachineState, instr: Instruction) -> None:
    fs1 = instr.operands[1]
    if fs1.kind is not OperandKind.FLOAT_REG:
        raise EmuError(E_BAD_OPERANDS, "vfmacc.vf operand")

    def fn(st, ins, i):
        vd = ins.operands[0].value
        vs2 = ins.operands[2].value
        return np.float32(
            np.float32(_freg_f32(st, fs1.value) * _read_f32(st, vs2, i))
            + _read_f32(st, vd, i)
        )

    _elemwise_f32(state, instr, fn)


def _exec_vfmv_v_f(state: MachineState, instr: Instruction) -> None:
    fs1 = instr.operands[1]
    if fs1.kind is not OperandKind.FLOAT_REG:
        raise EmuError(E_BAD_OPERANDS, "vfmv.v.f operand")
    _elemwise_f32(state, instr, lambda st, ins, i: _freg_f32(st, fs1.value))


def _exec_vfmv_f_s(state: MachineState, instr: Instruction) -> None:
    _require_f32(state)
    fd, vs2 = instr.operands[0], instr.operands[1]
    if fd.kind is not OperandKind.FLOAT_REG or vs2.kind is not OperandKind.VECTOR_REG:
        raise EmuError(E_BAD_OPERANDS, "vfmv.f.s operands")
    state.fregs[fd.value] = _read_elem(state, vs2.value, 0, 4)


def _scalar_dest_reduction(state: MachineState, instr: Instruction, acc_fn) -> None:
    """Shared shape of *.vs reductions: vd[0] = fold(vs1[0], vs2[0..vl));
    remaining elements of the single destination register follow the
    version's tail rule."""
    spec = _require_vtype(state)
    masked = _is_masked(instr)
    if state.vl == 0 and state.version is IsaVersion.V10:
        return
    vd, vs2, vs1 = _vec_regs(instr, 0, 1, 2)
    esize, result = acc_fn(state, spec, vd, vs2, vs1, masked)
    _write_elem(state, vd, 0, esize, result)
    tail_start = vd * state.vlenb + esize
    group_end = (vd + 1) * state.vlenb
    if state.version is IsaVersion.V071:
        _fill_bytes(state, tail_start, group_end - tail_start, 0)
    elif state.hostile_agnostic and spec.tail is Policy.AGNOSTIC:
        _fill_bytes(state, tail_start, group_end - tail_start, 0xFF)


def _exec_vredsum(state: MachineState, instr: Instruction) -> None:
    def acc(st, spec, vd, vs2, vs1, masked):
        esize = spec.sew // 8
        total = _read_elem(st, vs1, 0, esize)
        for i in range(st.vl):
            if _active(st, i, masked):
                total = (total + _read_elem(st, vs2, i, esize)) & ((1 << spec.sew) - 1)
        return esize, total

    _scalar_dest_reduction(state, instr, acc)


def _exec_vfredsum(state: MachineState, instr: Instruction) -> None:
    _require_f32(state)

    def acc(st, spec, vd, vs2, vs1, masked):
        with np.errstate(all="ignore"):
            total = _read_f32(st, vs1, 0)
            for i in range(st.vl):
                if _active(st, i, masked):
                    total = np.float32(total + _read_f32(st, vs2, i))
        return 4, _bits_from_f32(total)

    _scalar_dest_reduction(state, instr, acc)


def _exec_vfwredsum(state: MachineState, instr: Instruction) -> None:
    _require_f32(state)
    if state.elen_bits < 64:
        raise EmuError(E_ILLEGAL_VTYPE, "widening reduction needs 64-bit elements")

    def acc(st, spec, vd, vs2, vs1, masked):
        with np.errstate(all="ignore"):
            bits = _read_elem(st, vs1, 0, 8)
            total = np.float64(struct.unpack("<d", struct.pack("<Q", bits))[0])
            for i in range(st.vl):
                if _active(st, i, masked):
                    total = np.float64(total + np.float64(_read_f32(st, vs2, i)))
        out = struct.unpack("<Q", struct.pack("<d", float(total)))[0]
        return 8, out

    _scalar_dest_reduction(state, instr, acc)


def _compare_write(state: MachineState, instr: Instruction, cmp_fn) -> None:
    spec = _require_vtype(state)
    esize = spec.sew // 8
    masked = _is_masked(instr)
    if state.version is IsaVersion.V10 and state.vl == 0:
        return
    (vd,) = _vec_regs(instr, 0)
    for i in range(state.vl):
        if _active(state, i, masked):
            _write_mask_elem(state, vd, i, cmp_fn(state, instr, i, esize))
    limit = vlmax(spec, state.vlen_bits)
    if state.version is IsaVersion.V071:
        for i in range(state.vl, limit):
            _write_mask_elem(state, vd, i, False)
    elif state.hostile_agnostic:
        # mask-producing ops treat the tail as always agnostic
        for pos in range(state.vl, state.vlen_bits):
            _set_bit(state, vd, pos, True)


def _exec_vmseq_vv(state: MachineState, instr: Instruction) -> None:
    def cmp(st, ins, i, esize):
        _, vs2, vs1 = _vec_regs(ins, 0, 1, 2)
        return _read_elem(st, vs2, i, esize) == _read_elem(st, vs1, i, esize)

    _compare_write(state, instr, cmp)


def _exec_vmslt_vx(state: MachineState, instr: Instruction) -> None:
    def cmp(st, ins, i, esize):
        _, vs2 = _vec_regs(ins, 0, 1)
        rs1 = ins.operands[2]
        a = _read_elem(st, vs2, i, esize, signed=True)
        b = _sx(st.get_xreg(rs1.value), esize * 8)
        return a < b

    _compare_write(state, instr, cmp)


def _mask_logical(state: MachineState, instr: Instruction, op) -> None:
    spec = _require_vtype(state)
    if state.version is IsaVersion.V10 and state.vl == 0:
        return
    vd, vs2, vs1 = _vec_regs(instr, 0, 1, 2)
    results = [
        op(_mask_bit(state, vs2, i), _mask_bit(state, vs1, i))
        for i in range(state.vl)
    ]
    for i, val in enumerate(results):
        _write_mask_elem(state, vd, i, val)
    limit = vlmax(spec, state.vlen_bits)
    if state.version is IsaVersion.V071:
        for i in range(state.vl, limit):
            _write_mask_elem(state, vd, i, False)
    elif state.hostile_agnostic:
        for pos in range(state.vl, state.vlen_bits):
            _set_bit(state, vd, pos, True)


def _exec_vcpop(state: MachineState, instr: Instruction) -> None:
    _require_vtype(state)
    rd, vs2 = instr.operands[0], instr.operands[1]
    if rd.kind is not OperandKind.SCALAR_REG or vs2.kind is not OperandKind.VECTOR_REG:
        raise EmuError(E_BAD_OPERANDS, f"{instr.mnemonic} operands")
    masked = _is_masked(instr)
    count = 0
    for i in range(state.vl):
        if _active(state, i, masked) and _mask_bit(state, vs2.value, i):
            count += 1
    state.set_xreg(rd.value, count)


def _exec_vfirst(state: MachineState, instr: Instruction) -> None:
    _require_vtype(state)
    rd, vs2 = instr.operands[0], instr.operands[1]
    if rd.kind is not OperandKind.SCALAR_REG or vs2.kind is not OperandKind.VECTOR_REG:
        raise EmuError(E_BAD_OPERANDS, f"{instr.mnemonic} operands")
    masked = _is_masked(instr)
    result = MASK64  # -1: no set bit found
    for i in range(state.vl):
        if _active(state, i, masked) and _mask_bit(state, vs2.value, i):
            result = i
            break
    state.set_xreg(rd.value, result)


def _exec_vext_x_v(state: MachineState, instr: Instruction) -> None:
    spec = _require_vtype(state)
    rd, vs2, rs1 = instr.operands[0], instr.operands[1], instr.operands[2]
    if rd.kind is not OperandKind.SCALAR_REG or vs2.kind is not OperandKind.VECTOR_REG \
            or rs1.kind is not OperandKind.SCALAR_REG:
        raise EmuError(E_BAD_OPERANDS, "vext.x.v operands")
    idx = state.get_xreg(rs1.value)
    esize = spec.sew // 8
    if idx >= vlmax(spec, state.vlen_bits):
        state.set_xreg(rd.value, 0)
    else:
        state.set_xreg(rd.value, _read_elem(state, vs2.value, idx, esize, signed=True))


def _exec_vmv_x_s(state: MachineState, instr: Instruction) -> None:
    spec = _require_vtype(state)
    rd, vs2 = instr.operands[0], instr.operands[1]
    if rd.kind is not OperandKind.SCALAR_REG or vs2.kind is not OperandKind.VECTOR_REG:
        raise EmuError(E_BAD_OPERANDS, "vmv.x.s operands")
    state.set_xreg(rd.value, _read_elem(state, vs2.value, 0, spec.sew // 8, signed=True))


def _exec_vmv_s_x(state: MachineState, instr: Instruction) -> None:
    spec = _require_vtype(state)
    vd, rs1 = instr.operands[0], instr.operands[1]
    if vd.kind is not OperandKind.VECTOR_REG or rs1.kind is not OperandKind.SCALAR_REG:
        raise EmuError(E_BAD_OPERANDS, "vmv.s.x operands")
    if state.vl == 0 and state.version is IsaVersion.V10:
        return
    esize = spec.sew // 8
    _write_elem(state, vd.value, 0, esize, state.get_xreg(rs1.value))
    tail_start = vd.value * state.vlenb + esize
    group_end = (vd.value + 1) * state.vlenb
    if state.version is IsaVersion.V071:
        _fill_bytes(state, tail_start, group_end - tail_start, 0)
    elif state.hostile_agnostic and spec.tail is Policy.AGNOSTIC:
        _fill_bytes(state, tail_start, group_end - tail_start, 0xFF)


# ---------------------------------------------------------------------------
# memory ops


def _mem_base(state: MachineState, op) -> int:
    if op.kind is not OperandKind.MEMORY_REF or not isinstance(op.value, MemRef):
        raise EmuError(E_BAD_OPERANDS, "memory operand expected")
    ref = op.value
    if not isinstance(ref.disp, int):
        raise EmuError(E_BAD_OPERANDS, f"symbolic displacement {ref.disp!r} not executable")
    return _u64(state.get_xreg(ref.base) + ref.disp)


def _unit_or_strided(state: MachineState, instr: Instruction, is_load: bool,
                     eew: int | None, strided: bool) -> None:
    spec = _require_vtype(state)
    esize = (eew if eew is not None else spec.sew) // 8
    nregs = _emul_regs(state, esize * 8)
    masked = _is_masked(instr)
    if state.version is IsaVersion.V10 and state.vl == 0:
        return
    vd = instr.operands[0]
    if vd.kind is not OperandKind.VECTOR_REG:
        raise EmuError(E_BAD_OPERANDS, f"{instr.mnemonic}: vector register expected")
    base = _mem_base(state, instr.operands[1])
    if strided:
        stride_op = instr.operands[2]
        if stride_op.kind is not OperandKind.SCALAR_REG:
            raise EmuError(E_BAD_OPERANDS, f"{instr.mnemonic}: stride register expected")
        stride = _sx(state.get_xreg(stride_op.value), 64)
    else:
        stride = esize
    for i in range(state.vl):
        addr = _u64(base + i * stride)
        if _active(state, i, masked):
            off = vd.value * state.vlenb + i * esize
            if is_load:
                state.vregs[off : off + esize] = state.mem.read(addr, esize)
            else:
                state.mem.write(addr, bytes(state.vregs[off : off + esize]))
    if is_load:
        _finish_group_write(state, vd.value, esize, nregs)


def _whole_register(state: MachineState, instr: Instruction, is_load: bool, nf: int) -> None:
    vd = instr.operands[0]
    if vd.kind is not OperandKind.VECTOR_REG:
        raise EmuError(E_BAD_OPERANDS, f"{instr.mnemonic}: vector register expected")
    base = _mem_base(state, instr.operands[1])
    nbytes = nf * state.vlenb
    if is_load:
        state.set_vreg_bytes(vd.value, state.mem.read(base, nbytes))
    else:
        state.mem.write(base, state.vreg_bytes(vd.value, nf))


# ---------------------------------------------------------------------------
# scalar ops


def _xops(instr: Instruction, *kinds):
    ops = instr.operands
    if len(ops) != len(kinds):
        raise EmuError(E_BAD_OPERANDS, f"{instr.mnemonic}: expected {len(kinds)} operands")
    out = []
    for op, kind in zip(ops, kinds):
        if kind is not None and op.kind is not kind:
            raise EmuError(
                E_BAD_OPERANDS, f"{instr.mnemonic}: unexpected operand {op.text!r}"
            )
        out.append(op)
    return out


def _exec_scalar_load(state: MachineState, instr: Instruction, size: int, signed: bool) -> None:
    rd, mem = _xops(instr, OperandKind.SCALAR_REG, OperandKind.MEMORY_REF)
    addr = _mem_base(state, mem)
    val = int.from_bytes(state.mem.read(addr, size), "little", signed=signed)
    state.set_xreg(rd.value, val)


def _exec_scalar_store(state: MachineState, instr: Instruction, size: int) -> None:
    rs, mem = _xops(instr, OperandKind.SCALAR_REG, OperandKind.MEMORY_REF)
    addr = _mem_base(state, mem)
    state.mem.write(addr, (state.get_xreg(rs.value) & ((1 << (size * 8)) - 1)).to_bytes(size, "little"))


def _csr_value(state: MachineState, name: str) -> int:
    if name == "vl":
        return state.vl
    if name == "vtype":
        return encode_vtype(state.vtype, state.version)
    if name == "vstart":
        return state.vstart
    if name == "vxsat":
        return state.vxsat
    if name == "vxrm":
        return state.vxrm
    if name == "vlenb":
        if state.version is IsaVersion.V071:
            raise EmuError(E_UNSUPPORTED_INSN, "vlenb CSR does not exist in v0.7.1")
        return state.vlenb
    if name == "vcsr":
        if state.version is IsaVersion.V071:
            raise EmuError(E_UNSUPPORTED_INSN, "vcsr CSR does not exist in v0.7.1")
        return (state.vxrm << 1) | state.vxsat
    raise EmuError(E_UNSUPPORTED_INSN, f"CSR {name!r} not modeled")


def _exec_csrr(state: MachineState, instr: Instruction) -> None:
    rd, name = _xops(instr, OperandKind.SCALAR_REG, OperandKind.CSR_NAME)
    state.set_xreg(rd.value, _csr_value(state, name.value))


# ---------------------------------------------------------------------------
# dispatch


def _both(fn):
    return ({IsaVersion.V071, IsaVersion.V10}, fn)


def _v071(fn):
    return ({IsaVersion.V071}, fn)


def _v10(fn):
    return ({IsaVersion.V10}, fn)


def _mask64_op(op):
    return lambda a, b: op(a, b)


_INT_VV = {
    "vadd.vv": lambda a, b: a + b,
    "vsub.vv": lambda a, b: a - b,
    "vand.vv": lambda a, b: a & b,
    "vor.vv": lambda a, b: a | b,
    "vxor.vv": lambda a, b: a ^ b,
}
_INT_VX = {
    "vadd.vx": lambda a, b: a + b,
    "vsub.vx": lambda a, b: a - b,
    "vand.vx": lambda a, b: a & b,
    "vor.vx": lambda a, b: a | b,
    "vxor.vx": lambda a, b: a ^ b,
}
_F32_VV = {
    "vfadd.vv": lambda a, b: np.float32(a + b),
    "vfsub.vv": lambda a, b: np.float32(a - b),
    "vfmul.vv": lambda a, b: np.float32(a * b),
}


def _build_handlers():
    h: dict[str, tuple[set, object]] = {}
    # configuration
    h["vsetvli"] = _both(_exec_vsetvli)
    h["vsetvl"] = _both(_exec_vsetvl)
    h["vsetivli"] = _v10(_exec_vsetivli)
    # integer element-wise
    for name, op in _INT_VV.items():
        h[name] = _both(
            lambda st, ins, _op=op: _elemwise_int(st, ins, _int_binop_vv(_op))
        )
    for name, op in _INT_VX.items():
        h[name] = _both(
            lambda st, ins, _op=op: _elemwise_int(st, ins, _int_binop_vx(_op))
        )
    h["vmv.v.x"] = _both(_exec_vmv_v_x)
    h["vmv.v.i"] = _both(_exec_vmv_v_i)
    h["vmv.v.v"] = _both(_exec_vmv_v_v)
    for suffix in ("vvm", "vxm", "vim"):
        h[f"vmerge.{suffix}"] = _both(_exec_vmerge)
    h["vmv.s.x"] = _both(_exec_vmv_s_x)
    h["vmv.x.s"] = _v10(_exec_vmv_x_s)
    h["vext.x.v"] = _v071(_exec_vext_x_v)
    # float
    for name, op in _F32_VV.items():
        h[name] = _both(
            lambda st, ins, _op=op: _elemwise_f32(st, ins, _f32_binop_vv(_op))
        )
    h["vfmacc.vv"] = _both(_exec_vfmacc_vv)
    h["vfmacc.vf"] = _both(_exec_vfmacc_vf)
    h["vfmv.v.f"] = _both(_exec_vfmv_v_f)
    h["vfmv.f.s"] = _both(_exec_vfmv_f_s)
    # reductions
    h["vredsum.vs"] = _both(_exec_vredsum)
    h["vfredsum.vs"] = _v071(_exec_vfredsum)
    h["vfredusum.vs"] = _v10(_exec_vfredsum)
    h["vfwredsum.vs"] = _v071(_exec_vfwredsum)
    h["vfwredusum.vs"] = _v10(_exec_vfwredsum)
    # masks
    h["vmseq.vv"] = _both(_exec_vmseq_vv)
    h["vmslt.vx"] = _both(_exec_vmslt_vx)
    h["vmand.mm"] = _both(lambda st, ins: _mask_logical(st, ins, lambda a, b: a and b))
    h["vmor.mm"] = _both(lambda st, ins: _mask_logical(st, ins, lambda a, b: a or b))
    h["vmxor.mm"] = _both(lambda st, ins: _mask_logical(st, ins, lambda a, b: a != b))
    h["vmandnot.mm"] = _v071(lambda st, ins: _mask_logical(st, ins, lambda a, b: a and not b))
    h["vmandn.mm"] = _v10(lambda st, ins: _mask_logical(st, ins, lambda a, b: a and not b))
    h["vmornot.mm"] = _v071(lambda st, ins: _mask_logical(st, ins, lambda a, b: a or not b))
    h["vmorn.mm"] = _v10(lambda st, ins: _mask_logical(st, ins, lambda a, b: a or not b))
    h["vpopc.m"] = _v071(_exec_vcpop)
    h["vcpop.m"] = _v10(_exec_vcpop)
    h["vmfirst.m"] = _v071(_exec_vfirst)
    h["vfirst.m"] = _v10(_exec_vfirst)
    # memory: v0.7.1 SEW-implied forms
    h["vle.v"] = _v071(lambda st, ins: _unit_or_strided(st, ins, True, None, False))
    h["vse.v"] = _v071(lambda st, ins: _unit_or_strided(st, ins, False, None, False))
    h["vlse.v"] = _v071(lambda st, ins: _unit_or_strided(st, ins, True, None, True))
    h["vsse.v"] = _v071(lambda st, ins: _unit_or_strided(st, ins, False, None, True))
    # memory: v1.0 EEW-suffixed forms
    for eew in (8, 16, 32, 64):
        h[f"vle{eew}.v"] = _v10(
            lambda st, ins, _e=eew: _unit_or_strided(st, ins, True, _e, False)
        )
        h[f"vse{eew}.v"] = _v10(
            lambda st, ins, _e=eew: _unit_or_strided(st, ins, False, _e, False)
        )
        h[f"vlse{eew}.v"] = _v10(
            lambda st, ins, _e=eew: _unit_or_strided(st, ins, True, _e, True)
        )
        h[f"vsse{eew}.v"] = _v10(
            lambda st, ins, _e=eew: _unit_or_strided(st, ins, False, _e, True)
        )
    # whole register moves between memory and the register file (v1.0)
    for nf in (1, 2, 4, 8):
        h[f"vl{nf}r.v"] = _v10(
            lambda st, ins, _n=nf: _whole_register(st, ins, True, _n)
        )
        h[f"vs{nf}r.v"] = _v10(
            lambda st, ins, _n=nf: _whole_register(st, ins, False, _n)
        )
        for eew in (8, 16, 32, 64):
            h[f"vl{nf}re{eew}.v"] = _v10(
                lambda st, ins, _n=nf: _whole_register(st, ins, True, _n)
            )
    return h


_VECTOR_HANDLERS = _build_handlers()

_BRANCH_CMP = {
    "beq": lambda a, b: a == b,
    "bne": lambda a, b: a != b,
    "blt": lambda a, b: _sx(a, 64) < _sx(b, 64),
    "bge": lambda a, b: _sx(a, 64) >= _sx(b, 64),
    "bltu": lambda a, b: a < b,
    "bgeu": lambda a, b: a >= b,
}
_BRANCH_Z = {
    "beqz": lambda a: a == 0,
    "bnez": lambda a: a != 0,
    "blez": lambda a: _sx(a, 64) <= 0,
    "bgez": lambda a: _sx(a, 64) >= 0,
    "bltz": lambda a: _sx(a, 64) < 0,
    "bgtz": lambda a: _sx(a, 64) > 0,
}

_SCALAR_LOADS = {"lb": (1, True), "lbu": (1, False), "lh": (2, True), "lhu": (2, False),
                 "lw": (4, True), "lwu": (4, False), "ld": (8, True)}
_SCALAR_STORES = {"sb": 1, "sh": 2, "sw": 4, "sd": 8}


class Halt(Exception):
    pass


class Branch(Exception):
    def __init__(self, target: str):
        super().__init__(target)
        self.target = target


def step(state: MachineState, instr: Instruction) -> None:
    """Execute one instruction.  Raises Branch/Halt for control transfers
    and EmuError for anything outside the modeled subset."""
    m = instr.mnemonic
    entry = _VECTOR_HANDLERS.get(m)
    if entry is not None:
        versions, fn = entry
        if state.version not in versions:
            raise EmuError(
                E_UNSUPPORTED_INSN,
                f"{m!r} is not a v{state.version.value} instruction",
            )
        fn(state, instr)
        return
    if m in _BRANCH_CMP:
        rs1, rs2, target = _xops(instr, OperandKind.SCALAR_REG, OperandKind.SCALAR_REG, None)
        if _BRANCH_CMP[m](state.get_xreg(rs1.value), state.get_xreg(rs2.value)):
            raise Branch(str(target.value if target.value is not None else target.text))
        return
    if m in _BRANCH_Z:
        rs1, target = _xops(instr, OperandKind.SCALAR_REG, None)
        if _BRANCH_Z[m](state.get_xreg(rs1.value)):
            raise Branch(str(target.value if target.value is not None else target.text))
        return
    if m == "j":
        (target,) = _xops(instr, None)
        raise Branch(str(target.value))
    if m == "ret":
        raise Halt()
    if m == "nop":
        return
    if m == "li":
        rd, val = _xops(instr, OperandKind.SCALAR_REG, OperandKind.IMMEDIATE)
        state.set_xreg(rd.value, val.value)
        return
    if m == "lui":
        rd, val = _xops(instr, OperandKind.SCALAR_REG, OperandKind.IMMEDIATE)
        state.set_xreg(rd.value, val.value << 12)
        return
    if m == "mv":
        rd, rs = _xops(instr, OperandKind.SCALAR_REG, OperandKind.SCALAR_REG)
        state.set_xreg(rd.value, state.get_xreg(rs.value))
        return
    if m in ("add", "sub", "and", "or", "xor", "mul"):
        rd, rs1, rs2 = _xops(instr, OperandKind.SCALAR_REG, OperandKind.SCALAR_REG, OperandKind.SCALAR_REG)
        a, b = state.get_xreg(rs1.value), state.get_xreg(rs2.value)
        val = {"add": a + b, "sub": a - b, "and": a & b, "or": a | b,
               "xor": a ^ b, "mul": a * b}[m]
        state.set_xreg(rd.value, val)
        return
    if m in ("addi", "andi", "ori", "xori", "slli", "srli", "srai"):
        rd, rs1, val = _xops(instr, OperandKind.SCALAR_REG, OperandKind.SCALAR_REG, OperandKind.IMMEDIATE)
        a = state.get_xreg(rs1.value)
        imm_v = val.value
        if m == "addi":
            out = a + imm_v
        elif m == "andi":
            out = a & _u64(imm_v)
        elif m == "ori":
            out = a | _u64(imm_v)
        elif m == "xori":
            out = a ^ _u64(imm_v)
        elif m == "slli":
            out = a << (imm_v & 63)
        elif m == "srli":
            out = a >> (imm_v & 63)
        else:  # srai
            out = _sx(a, 64) >> (imm_v & 63)
        state.set_xreg(rd.value, out)
        return
    if m in _SCALAR_LOADS:
        size, signed = _SCALAR_LOADS[m]
        _exec_scalar_load(state, instr, size, signed)
        return
    if m in _SCALAR_STORES:
        _exec_scalar_store(state, instr, _SCALAR_STORES[m])
        return
    if m == "flw":
        fd, mem = _xops(instr, OperandKind.FLOAT_REG, OperandKind.MEMORY_REF)
        addr = _mem_base(state, mem)
        state.fregs[fd.value] = int.from_bytes(state.mem.read(addr, 4), "little")
        return
    if m == "fsw":
        fs, mem = _xops(instr, OperandKind.FLOAT_REG, OperandKind.MEMORY_REF)
        addr = _mem_base(state, mem)
        state.mem.write(addr, state.fregs[fs.value].to_bytes(4, "little"))
        return
    if m == "csrr":
        _exec_csrr(state, instr)
        return
    raise EmuError(E_UNSUPPORTED_INSN, f"{m!r} is outside the modeled subset")


_NUMERIC_REF_RE = re.compile(r"^(\d+)([bf])$")


def _resolve_label(unit: ProgramUnit, target: str, from_idx: int) -> int:
    m = _NUMERIC_REF_RE.match(target)
    if m:
        name, direction = m.group(1), m.group(2)
        rng = range(from_idx, -1, -1) if direction == "b" else range(from_idx + 1, len(unit.items))
        for i in rng:
            it = unit.items[i]
            if it.kind is ItemKind.LABEL and it.label == name:
                return i
        raise EmuError(E_UNSUPPORTED_INSN, f"unresolved local label {target!r}")
    for i, it in enumerate(unit.items):
        if it.kind is ItemKind.LABEL and it.label == target:
            return i
    raise EmuError(E_UNSUPPORTED_INSN, f"unresolved branch target {target!r}")


def exec_program(unit: ProgramUnit, state: MachineState, fuel: int = 200_000) -> int:
    """Run a parsed unit to completion (fall off the end, or ``ret``).
    Returns the number of instructions executed; raises EmuError with
    code E_FUEL_EXHAUSTED when the budget runs out."""
    pc = 0
    steps = 0
    items = unit.items
    n = len(items)
    while pc < n:
        item = items[pc]
        if item.kind is ItemKind.RAW and item.text.strip():
            raise EmuError(E_UNSUPPORTED_INSN, f"raw line not executable: {item.text.strip()!r}")
        if item.kind is not ItemKind.INSTRUCTION or item.parsed is None:
            pc += 1
            continue
        if steps >= fuel:
            raise EmuError(E_FUEL_EXHAUSTED, f"exceeded fuel budget of {fuel} steps")
        steps += 1
        try:
            step(state, item.parsed)
        except Branch as br:
            pc = _resolve_label(unit, br.target, pc)
            continue
        except Halt:
            return steps
        pc += 1
    return steps
