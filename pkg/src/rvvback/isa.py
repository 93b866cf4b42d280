"""Instruction-set model: vtype decoding, target legality and the
mnemonic catalog that drives classification.

The catalog is loaded from a plain-text table (``catalog.tab``) with one
entry per line: mnemonic, presence flag for each vector ISA version, and
the translation rule to apply.  Users can point the tools at a modified
table to extend coverage without touching code.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from importlib import resources

from . import diagnostics as dc
from .asmtext import Instruction, OperandKind


class IsaVersion(Enum):
    V071 = "0.7.1"
    V10 = "1.0"


class Policy(Enum):
    UNSPECIFIED = "unspecified"
    UNDISTURBED = "undisturbed"
    AGNOSTIC = "agnostic"


@dataclass(frozen=True)
class VTypeSpec:
    sew: int
    lmul: Fraction
    tail: Policy = Policy.UNSPECIFIED
    mask: Policy = Policy.UNSPECIFIED

    @property
    def fractional(self) -> bool:
        return self.lmul < 1

    def same_shape(self, other: "VTypeSpec") -> bool:
        return self.sew == other.sew and self.lmul == other.lmul

    def tokens_v10(self) -> list[str]:
        toks = [f"e{self.sew}", _lmul_token(self.lmul)]
        if self.tail is not Policy.UNSPECIFIED:
            toks.append("ta" if self.tail is Policy.AGNOSTIC else "tu")
        if self.mask is not Policy.UNSPECIFIED:
            toks.append("ma" if self.mask is Policy.AGNOSTIC else "mu")
        return toks


def _lmul_token(lmul: Fraction) -> str:
    if lmul >= 1:
        return f"m{int(lmul)}"
    return f"mf{lmul.denominator}"


@dataclass(frozen=True)
class TargetConfig:
    """Hardware profile the output must run on.

    vlen_bits=None means the width is unknown at translation time and
    probes are emitted where a value is required.
    """

    vlen_bits: int | None = None
    elen_bits: int = 64

    def __post_init__(self) -> None:
        if self.elen_bits < 8 or self.elen_bits & (self.elen_bits - 1):
            raise ValueError(f"elen_bits must be a power of two >= 8: {self.elen_bits}")
        v = self.vlen_bits
        if v is not None:
            if v & (v - 1) or v < self.elen_bits or v > 1 << 16:
                raise ValueError(
                    f"vlen_bits must be a power of two, >= elen_bits and <= 65536: {v}"
                )


# ---------------------------------------------------------------------------
# vtype token decoding / legality

_SEW_TOKEN_RE = re.compile(r"^e(\d+)$")
_LMUL_TOKEN_RE = re.compile(r"^m([1248])$")
_FLMUL_TOKEN_RE = re.compile(r"^mf([248])$")
_POLICY = {
    "ta": ("tail", Policy.AGNOSTIC),
    "tu": ("tail", Policy.UNDISTURBED),
    "ma": ("mask", Policy.AGNOSTIC),
    "mu": ("mask", Policy.UNDISTURBED),
}


def decode_vtype_tokens(tokens) -> tuple[VTypeSpec | None, str | None]:
    """Decode vtype operand tokens; (spec, None) on success, (None, why)
    on malformed input (duplicate, conflicting or unknown tokens).
    A missing LMUL token defaults to m1; missing policies stay
    Policy.UNSPECIFIED.  SEW is required."""
    sew = None
    lmul = None
    tail = None
    mask = None
    for raw in tokens:
        t = str(raw).strip().lower()
        m = _SEW_TOKEN_RE.match(t)
        if m:
            if sew is not None:
                return None, f"duplicate SEW token {t!r}"
            val = int(m.group(1))
            if val < 8 or val > 1024 or val & (val - 1):
                return None, f"invalid SEW token {t!r}"
            sew = val
            continue
        m = _LMUL_TOKEN_RE.match(t)
        if m:
            if lmul is not None:
                return None, f"duplicate LMUL token {t!r}"
            lmul = Fraction(int(m.group(1)))
            continue
        m = _FLMUL_TOKEN_RE.match(t)
        if m:
            if lmul is not None:
                return None, f"duplicate LMUL token {t!r}"
            lmul = Fraction(1, int(m.group(1)))
            continue
        if t in _POLICY:
            which, value = _POLICY[t]
            if which == "tail":
                if tail is not None:
                    return None, f"conflicting tail policy token {t!r}"
                tail = value
            else:
                if mask is not None:
                    return None, f"conflicting mask policy token {t!r}"
                mask = value
            continue
        return None, f"unknown vtype token {t!r}"
    if sew is None:
        return None, "missing SEW token"
    if lmul is None:
        lmul = Fraction(1)
    return (
        VTypeSpec(
            sew,
            lmul,
            tail if tail is not None else Policy.UNSPECIFIED,
            mask if mask is not None else Policy.UNSPECIFIED,
        ),
        None,
    )


@dataclass(frozen=True)
class V071Legality:
    ok: bool
    tokens: tuple[str, ...] = ()
    code: str | None = None
    reason: str | None = None


def check_v071_legal(spec: VTypeSpec, cfg: TargetConfig) -> V071Legality:
    """v0.7.1 can express integer LMUL and SEW <= ELEN, nothing else;
    legal results carry the exact token spelling for emission (no policy
    tokens exist in the v0.7.1 syntax)."""
    if spec.fractional:
        return V071Legality(
            False,
            code=dc.E_FRACTIONAL_LMUL,
            reason=f"fractional LMUL {_lmul_token(spec.lmul)} has no v0.7.1 encoding",
        )
    if spec.sew > cfg.elen_bits:
        return V071Legality(
            False,
            code=dc.E_SEW_EXCEEDS_ELEN,
            reason=f"SEW {spec.sew} exceeds target ELEN {cfg.elen_bits}",
        )
    return V071Legality(True, (f"e{spec.sew}", f"m{int(spec.lmul)}"))


def vlmax(spec: VTypeSpec, vlen_bits: int) -> int:
    return int(Fraction(vlen_bits) * spec.lmul / spec.sew)


def compute_vl(avl: int, spec: VTypeSpec, vlen_bits: int) -> int:
    return min(avl, vlmax(spec, vlen_bits))


# ---------------------------------------------------------------------------
# vtype CSR encodings (version specific; vill lives in the sign bit)

VILL = 1 << 63

_V10_LMUL_CODES = {
    Fraction(1): 0, Fraction(2): 1, Fraction(4): 2, Fraction(8): 3,
    Fraction(1, 8): 5, Fraction(1, 4): 6, Fraction(1, 2): 7,
}
_V10_LMUL_DECODE = {v: k for k, v in _V10_LMUL_CODES.items()}
_SEW_CODES = {8: 0, 16: 1, 32: 2, 64: 3, 128: 4, 256: 5, 512: 6, 1024: 7}
_SEW_DECODE = {v: k for k, v in _SEW_CODES.items()}


def encode_vtype(spec: VTypeSpec | None, version: IsaVersion) -> int:
    if spec is None:
        return VILL
    if version is IsaVersion.V10:
        val = _V10_LMUL_CODES[spec.lmul] | (_SEW_CODES[spec.sew] << 3)
        if spec.tail is Policy.AGNOSTIC:
            val |= 1 << 6
        if spec.mask is Policy.AGNOSTIC:
            val |= 1 << 7
        return val
    # v0.7.1: vlmul[1:0], vsew[4:2], vediv[6:5]=0
    if spec.fractional:
        return VILL
    return int(spec.lmul).bit_length() - 1 | (_SEW_CODES[spec.sew] << 2)


def decode_vtype(value: int, version: IsaVersion) -> VTypeSpec | None:
    if value & VILL:
        return None
    if version is IsaVersion.V10:
        lmul = _V10_LMUL_DECODE.get(value & 0x7)
        sew = _SEW_DECODE.get((value >> 3) & 0x7)
        if lmul is None or sew is None:
            return None
        tail = Policy.AGNOSTIC if value & (1 << 6) else Policy.UNDISTURBED
        mask = Policy.AGNOSTIC if value & (1 << 7) else Policy.UNDISTURBED
        return VTypeSpec(sew, lmul, tail, mask)
    lmul = Fraction(1 << (value & 0x3))
    sew = _SEW_DECODE.get((value >> 2) & 0x7)
    if sew is None or (value >> 5) & 0x3:
        return None
    return VTypeSpec(sew, lmul)


# ---------------------------------------------------------------------------
# classification


class CategoryKind(Enum):
    NON_VECTOR = "non-vector"
    PASS_THROUGH = "pass-through"
    RENAME = "rename"
    LOWER = "lower"
    UNSUPPORTED = "unsupported"


class LowerRule(Enum):
    CONFIG = "config"
    IMMEDIATE_CONFIG = "immediate-config"
    MEMORY_EEW = "memory-eew"
    WHOLE_REGISTER = "whole-register"
    WHOLE_REG_MOVE = "whole-register-move"
    CSR_SHIM = "csr-shim"
    SCALAR_MOVE = "scalar-move"


@dataclass(frozen=True)
class Category:
    kind: CategoryKind
    # RENAME: v0.7.1 target mnemonic; LOWER: LowerRule; UNSUPPORTED: reason
    arg: object = None
    code: str | None = None  # diagnostic code for UNSUPPORTED


NON_VECTOR = Category(CategoryKind.NON_VECTOR)
PASS_THROUGH = Category(CategoryKind.PASS_THROUGH)


def _lower(rule: LowerRule) -> Category:
    return Category(CategoryKind.LOWER, rule)


def _unsupported(reason: str, code: str = dc.E_UNSUPPORTED) -> Category:
    return Category(CategoryKind.UNSUPPORTED, reason, code)


@dataclass(frozen=True)
class CatalogEntry:
    mnemonic: str
    in_v071: bool
    in_v10: bool
    action: str  # pass | rename | mem_eew | whole_reg | whole_move |
    #              config | config_imm | scalar_move | unsupported
    arg: str | None = None

    @property
    def operand_shape(self) -> str:
        return _operand_shape(self.mnemonic, self.action)


_SHAPE_BY_SUFFIX = {
    "vv": "vd, vs2, vs1[, v0.t]",
    "vx": "vd, vs2, rs1[, v0.t]",
    "vi": "vd, vs2, imm[, v0.t]",
    "vf": "vd, vs2, fs1[, v0.t]",
    "wv": "vd, vs2, vs1[, v0.t]",
    "wx": "vd, vs2, rs1[, v0.t]",
    "wf": "vd, vs2, fs1[, v0.t]",
    "vs": "vd, vs2, vs1[, v0.t]",
    "mm": "vd, vs2, vs1",
    "m": "rd, vs2[, v0.t]",
    "v": "vd, vs2[, v0.t]",
    "vvm": "vd, vs2, vs1, v0",
    "vxm": "vd, vs2, rs1, v0",
    "vim": "vd, vs2, imm, v0",
    "vm": "vd, vs2, vs1",
}


def _operand_shape(mnemonic: str, action: str) -> str:
    if action in ("config",):
        return "rd, rs1, vtypei" if mnemonic != "vsetvl" else "rd, rs1, rs2"
    if action == "config_imm":
        return "rd, uimm, vtypei"
    if action in ("mem_eew",):
        if "s" == mnemonic[1] and mnemonic.startswith("vss") or "lse" in mnemonic or "sse" in mnemonic:
            return "vd, (rs1), rs2[, v0.t]"
        if "xei" in mnemonic:
            return "vd, (rs1), vs2[, v0.t]"
        return "vd, (rs1)[, v0.t]"
    if action in ("whole_reg",):
        return "vd, (rs1)"
    if action == "whole_move":
        return "vd, vs2"
    if action == "scalar_move":
        return "rd, vs2"
    if mnemonic == "vmv.v.x":
        return "vd, rs1"
    if mnemonic == "vmv.v.i":
        return "vd, imm"
    if mnemonic == "vmv.v.v":
        return "vd, vs1"
    if mnemonic in ("vfmv.v.f", "vfmv.s.f"):
        return "vd, fs1"
    if mnemonic == "vfmv.f.s":
        return "fd, vs2"
    if mnemonic == "vmv.s.x":
        return "vd, rs1"
    if mnemonic == "vext.x.v":
        return "rd, vs2, rs1"
    if mnemonic == "vid.v":
        return "vd[, v0.t]"
    suffix = mnemonic.rsplit(".", 1)[-1]
    return _SHAPE_BY_SUFFIX.get(suffix, "...")


class Catalog:
    def __init__(self, entries: dict[str, CatalogEntry]):
        self.entries = entries

    @classmethod
    def from_text(cls, text: str) -> "Catalog":
        entries: dict[str, CatalogEntry] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            fields = body.split(None, 3)
            if len(fields) < 4:
                raise ValueError(f"catalog line {lineno}: expected 4 fields: {line!r}")
            mnemonic, v071, v10, action = fields
            arg = None
            if "=" in action:
                action, arg = action.split("=", 1)
            if action not in (
                "pass", "rename", "mem_eew", "whole_reg", "whole_move",
                "config", "config_imm", "scalar_move", "unsupported",
            ):
                raise ValueError(f"catalog line {lineno}: unknown action {action!r}")
            entries[mnemonic.lower()] = CatalogEntry(
                mnemonic.lower(), v071 == "y", v10 == "y", action, arg
            )
        return cls(entries)

    @classmethod
    def load(cls, path=None) -> "Catalog":
        if path is None:
            text = resources.files("rvvback").joinpath("catalog.tab").read_text()
        else:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        return cls.from_text(text)

    def lookup(self, mnemonic: str) -> CatalogEntry | None:
        return self.entries.get(mnemonic)

    def lowering_targets(self) -> set[str]:
        """Vector mnemonics any lowering rule may emit."""
        return {
            "vsetvli", "vsetvl", "vle.v", "vse.v", "vlse.v", "vsse.v",
            "vlxe.v", "vsxe.v", "vsuxe.v", "vext.x.v", "vmv.v.v",
        }


@lru_cache(maxsize=1)
def default_catalog() -> Catalog:
    return Catalog.load()


_MEM_UNIT_RE = re.compile(r"^v([ls])e(\d+)\.v$")
_MEM_STRIDE_RE = re.compile(r"^v([ls])se(\d+)\.v$")
_MEM_INDEX_RE = re.compile(r"^v([ls])([uo])xei(\d+)\.v$")
_WHOLE_RE = re.compile(r"^v([ls])([1248])r(?:e(\d+))?\.v$")
_WHOLE_MOVE_RE = re.compile(r"^vmv([1248])r\.v$")


@dataclass(frozen=True)
class MemOpShape:
    op: str  # "load" | "store"
    mode: str  # "unit" | "strided" | "indexed_u" | "indexed_o"
    eew: int


def parse_mem_mnemonic(mnemonic: str) -> MemOpShape | None:
    m = _MEM_UNIT_RE.match(mnemonic)
    if m:
        return MemOpShape("load" if m.group(1) == "l" else "store", "unit", int(m.group(2)))
    m = _MEM_STRIDE_RE.match(mnemonic)
    if m:
        return MemOpShape("load" if m.group(1) == "l" else "store", "strided", int(m.group(2)))
    m = _MEM_INDEX_RE.match(mnemonic)
    if m:
        mode = "indexed_u" if m.group(2) == "u" else "indexed_o"
        return MemOpShape("load" if m.group(1) == "l" else "store", mode, int(m.group(3)))
    return None


def parse_whole_reg(mnemonic: str) -> tuple[str, int] | None:
    """(op, nf) for whole-register loads/stores; EEW variants collapse."""
    m = _WHOLE_RE.match(mnemonic)
    if m:
        return ("load" if m.group(1) == "l" else "store", int(m.group(2)))
    return None


def parse_whole_move(mnemonic: str) -> int | None:
    m = _WHOLE_MOVE_RE.match(mnemonic)
    return int(m.group(1)) if m else None


_CSR_READS = {"csrr"}
_CSR_ACCESS = {"csrr", "csrw", "csrs", "csrc", "csrrw", "csrrs", "csrrc",
               "csrrwi", "csrrsi", "csrrci", "csrwi", "csrsi", "csrci"}


def _classify_csr(instr: Instruction) -> Category:
    names = [op.value for op in instr.operands if op.kind is OperandKind.CSR_NAME]
    if not names:
        return NON_VECTOR
    name = names[0]
    if name in ("vlenb", "vcsr"):
        if instr.mnemonic in _CSR_READS:
            return _lower(LowerRule.CSR_SHIM)
        # csrrs rd, vlenb, zero is also a pure read
        if instr.mnemonic in ("csrrs", "csrrc") and len(instr.operands) == 3:
            rs = instr.operands[2]
            if rs.kind is OperandKind.SCALAR_REG and rs.value == 0:
                return _lower(LowerRule.CSR_SHIM)
        return _unsupported(f"{name} is read-only v1.0 state; cannot write on v0.7.1")
    if name in ("vl", "vtype", "vstart", "vxsat", "vxrm"):
        return PASS_THROUGH
    return NON_VECTOR


def _extract_vtype_tokens(instr: Instruction) -> list[str]:
    return [op.value for op in instr.operands if op.kind is OperandKind.VTYPE_TOKEN]


def classify_instruction(
    instr: Instruction, cfg: TargetConfig, catalog: Catalog | None = None
) -> Category:
    """Map one instruction to its translation category.  Deterministic and
    total: any vector-namespace mnemonic without a catalog entry is
    Unsupported, never a guess."""
    catalog = catalog or default_catalog()
    m = instr.mnemonic
    if m in _CSR_ACCESS:
        return _classify_csr(instr)
    entry = catalog.lookup(m)
    if entry is None:
        if m.startswith("v"):
            return _unsupported(f"unknown vector instruction {m!r}")
        return NON_VECTOR
    if entry.action == "pass":
        return PASS_THROUGH
    if entry.action == "rename":
        return Category(CategoryKind.RENAME, entry.arg)
    if entry.action == "unsupported":
        return _unsupported(entry.arg or f"{m} has no v0.7.1 counterpart")
    if entry.action == "config":
        if m == "vsetvl":
            return PASS_THROUGH
        spec, err = decode_vtype_tokens(_extract_vtype_tokens(instr))
        if err:
            return _unsupported(err, dc.E_VTYPE_SYNTAX)
        legal = check_v071_legal(spec, cfg)
        if not legal.ok:
            return _unsupported(legal.reason, legal.code)
        if spec.tail is Policy.UNSPECIFIED and spec.mask is Policy.UNSPECIFIED:
            return PASS_THROUGH  # already in v0.7.1 spelling
        return _lower(LowerRule.CONFIG)
    if entry.action == "config_imm":
        spec, err = decode_vtype_tokens(_extract_vtype_tokens(instr))
        if err:
            return _unsupported(err, dc.E_VTYPE_SYNTAX)
        legal = check_v071_legal(spec, cfg)
        if not legal.ok:
            return _unsupported(legal.reason, legal.code)
        return _lower(LowerRule.IMMEDIATE_CONFIG)
    if entry.action == "mem_eew":
        shape = parse_mem_mnemonic(m)
        if shape is not None and shape.eew > cfg.elen_bits:
            return _unsupported(
                f"EEW {shape.eew} exceeds target ELEN {cfg.elen_bits}",
                dc.E_SEW_EXCEEDS_ELEN,
            )
        return _lower(LowerRule.MEMORY_EEW)
    if entry.action == "whole_reg":
        return _lower(LowerRule.WHOLE_REGISTER)
    if entry.action == "whole_move":
        return _lower(LowerRule.WHOLE_REG_MOVE)
    if entry.action == "scalar_move":
        return _lower(LowerRule.SCALAR_MOVE)
    raise AssertionError(f"unhandled catalog action {entry.action!r}")
