"""Lossless RISC-V assembly text model.

Parsing never throws on malformed input: anything that cannot be decoded
into an instruction survives as a Raw item, and ``emit_source`` reproduces
the original bytes exactly for every item that has not been replaced.
Statements separated by ``;`` and labels sharing a line become separate
items that carry the exact source slice plus the separator that followed
it, so concatenating ``text + eol`` over all items is the identity.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

# ---------------------------------------------------------------------------
# register name tables


def _build_xregs() -> dict[str, int]:
    names = {f"x{i}": i for i in range(32)}
    abi = [
        "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2",
        "s0", "s1", "a0", "a1", "a2", "a3", "a4", "a5",
        "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7",
        "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6",
    ]
    for i, n in enumerate(abi):
        names[n] = i
    names["fp"] = 8
    return names


def _build_fregs() -> dict[str, int]:
    names = {f"f{i}": i for i in range(32)}
    abi = (
        [f"ft{i}" for i in range(8)]
        + ["fs0", "fs1"]
        + [f"fa{i}" for i in range(8)]
        + [f"fs{i}" for i in range(2, 12)]
        + [f"ft{i}" for i in range(8, 12)]
    )
    for i, n in enumerate(abi):
        names[n] = i
    return names


XREGS = _build_xregs()
FREGS = _build_fregs()
VREGS = {f"v{i}": i for i in range(32)}

# canonical (ABI) spelling used when synthesizing operands
XREG_ABI = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2",
    "s0", "s1", "a0", "a1", "a2", "a3", "a4", "a5",
    "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7",
    "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6",
]
FREG_ABI = (
    [f"ft{i}" for i in range(8)]
    + ["fs0", "fs1"]
    + [f"fa{i}" for i in range(8)]
    + [f"fs{i}" for i in range(2, 12)]
    + [f"ft{i}" for i in range(8, 12)]
)

# CSR names recognised in csr-instruction operand position.
VECTOR_CSRS = {"vstart", "vxsat", "vxrm", "vl", "vtype", "vlenb", "vcsr"}
SCALAR_CSRS = {
    "cycle", "time", "instret", "mstatus", "mtvec", "mepc", "mcause",
    "fflags", "frm", "fcsr", "mhartid", "satp",
}
KNOWN_CSRS = VECTOR_CSRS | SCALAR_CSRS


# ---------------------------------------------------------------------------
# core data types


class ItemKind(Enum):
    INSTRUCTION = "instruction"
    DIRECTIVE = "directive"
    LABEL = "label"
    COMMENT = "comment"
    BLANK = "blank"
    RAW = "raw"


class OperandKind(Enum):
    SCALAR_REG = "xreg"
    FLOAT_REG = "freg"
    VECTOR_REG = "vreg"
    IMMEDIATE = "imm"
    MEMORY_REF = "mem"
    CSR_NAME = "csr"
    VTYPE_TOKEN = "vtype"
    MASK_REF = "mask"
    SYMBOL = "symbol"


@dataclass(frozen=True)
class SourceLocation:
    file: str
    line: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}"


@dataclass(frozen=True)
class MemRef:
    base: int
    # displacement is an int when literal, else the raw text (e.g. "%lo(x)")
    disp: object = 0


@dataclass(frozen=True)
class Operand:
    kind: OperandKind
    text: str
    value: object = None


@dataclass(frozen=True)
class Instruction:
    mnemonic: str  # lowercased for matching; original case lives in item.text
    operands: tuple[Operand, ...]
    loc: SourceLocation


@dataclass
class AsmItem:
    kind: ItemKind
    text: str  # exact source slice (no separator), or canonical synthesized text
    loc: SourceLocation
    eol: str = "\n"  # separator that followed: "\n", "\r\n", ";" or ""
    parsed: Instruction | None = None
    label: str | None = None
    note: str | None = None
    synthesized: bool = False


@dataclass
class ProgramUnit:
    name: str
    items: list[AsmItem] = field(default_factory=list)


class SourceEncodingError(Exception):
    """Input bytes are not valid UTF-8 (diagnostic code E_ENCODING)."""


# ---------------------------------------------------------------------------
# scanning helpers

_LABEL_RE = re.compile(r"^(\s*)([A-Za-z_.$][A-Za-z0-9_.$]*|\d+):")
_INT_RE = re.compile(r"^[+-]?(0[xX][0-9a-fA-F]+|0[bB][01]+|\d+)$")
_MEM_RE = re.compile(r"^(.*)\(\s*([A-Za-z0-9_]+)\s*\)$")
_SYMBOL_OK_RE = re.compile(r"^[^\s\"']+$")
_VTYPE_TOKEN_RE = re.compile(r"^(e\d+|m[1248]|mf[248]|ta|tu|ma|mu)$")


def _split_lines(text: str) -> list[tuple[str, str]]:
    lines = []
    start = 0
    n = len(text)
    while start < n:
        i = text.find("\n", start)
        if i < 0:
            lines.append((text[start:], ""))
            break
        if i > start and text[i - 1] == "\r":
            lines.append((text[start : i - 1], "\r\n"))
        else:
            lines.append((text[start:i], "\n"))
        start = i + 1
    return lines


def _split_statements(line: str) -> list[str]:
    """Split on top-level ';'.  Quotes and comments shield the separator."""
    pieces = []
    cur = []
    i, n = 0, len(line)
    in_str = False
    while i < n:
        c = line[i]
        if in_str:
            cur.append(c)
            if c == "\\" and i + 1 < n:
                cur.append(line[i + 1])
                i += 1
            elif c == '"':
                in_str = False
        elif c == '"':
            in_str = True
            cur.append(c)
        elif c == "'":
            # gas character constant: quote plus following char
            cur.append(c)
            if i + 1 < n:
                cur.append(line[i + 1])
                i += 1
        elif c == "#" or (c == "/" and i + 1 < n and line[i + 1] == "/"):
            cur.append(line[i:])
            break
        elif c == ";":
            pieces.append("".join(cur))
            cur = []
        else:
            cur.append(c)
        i += 1
    pieces.append("".join(cur))
    return pieces


def split_comment(code: str) -> tuple[str, str]:
    """Return (code, trailing_comment); the comment includes its marker."""
    i, n = 0, len(code)
    in_str = False
    while i < n:
        c = code[i]
        if in_str:
            if c == "\\":
                i += 1
            elif c == '"':
                in_str = False
        elif c == '"':
            in_str = True
        elif c == "'":
            i += 1
        elif c == "#" or (c == "/" and i + 1 < n and code[i + 1] == "/"):
            return code[:i], code[i:]
        i += 1
    return code, ""


def _split_operands(text: str) -> list[str] | None:
    """Split an operand field on top-level commas; None when malformed."""
    out = []
    cur = []
    depth = 0
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == '"':
            return None  # string literal in instruction operands: not ours
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth < 0:
                return None
        if c == "," and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(c)
        i += 1
    if depth != 0:
        return None
    out.append("".join(cur))
    return out


def _classify_operand(tok: str, mnemonic: str) -> Operand | None:
    text = tok
    t = tok.strip()
    if not t:
        return None
    low = t.lower()
    if mnemonic.startswith("vset") and _VTYPE_TOKEN_RE.match(low) and low not in XREGS:
        return Operand(OperandKind.VTYPE_TOKEN, text, low)
    if low == "v0.t":
        return Operand(OperandKind.MASK_REF, text, 0)
    if low in XREGS:
        return Operand(OperandKind.SCALAR_REG, text, XREGS[low])
    if low in VREGS:
        return Operand(OperandKind.VECTOR_REG, text, VREGS[low])
    if low in FREGS:
        return Operand(OperandKind.FLOAT_REG, text, FREGS[low])
    if mnemonic.startswith("csr") and low in KNOWN_CSRS:
        return Operand(OperandKind.CSR_NAME, text, low)
    if _INT_RE.match(t):
        return Operand(OperandKind.IMMEDIATE, text, int(t, 0))
    m = _MEM_RE.match(t)
    if m and m.group(2).lower() in XREGS:
        disp_text = m.group(1).strip()
        if not disp_text:
            disp: object = 0
        elif _INT_RE.match(disp_text):
            disp = int(disp_text, 0)
        else:
            disp = disp_text
        return Operand(
            OperandKind.MEMORY_REF, text, MemRef(XREGS[m.group(2).lower()], disp)
        )
    if _SYMBOL_OK_RE.match(t) and t.count("(") == t.count(")"):
        return Operand(OperandKind.SYMBOL, text, t)
    return None


def _parse_instruction(piece: str, loc: SourceLocation) -> tuple[Instruction | None, str | None]:
    code, _comment = split_comment(piece)
    stripped = code.strip()
    parts = stripped.split(None, 1)
    mnemonic = parts[0].lower()
    if len(parts) == 1:
        return Instruction(mnemonic, (), loc), None
    fields = _split_operands(parts[1])
    if fields is None:
        return None, f"unrecognized operand syntax: {parts[1].strip()!r}"
    operands = []
    for f in fields:
        op = _classify_operand(f, mnemonic)
        if op is None:
            return None, f"unrecognized operand {f.strip()!r}"
        operands.append(op)
    return Instruction(mnemonic, tuple(operands), loc), None


# ---------------------------------------------------------------------------
# public API


def parse_source(text: str, name: str = "<input>") -> ProgramUnit:
    """Parse assembly text into a ProgramUnit.  Total: never raises on
    malformed assembly; undecodable statements become Raw items."""
    unit = ProgramUnit(name)
    in_macro = False
    for lineno, (line, eol) in enumerate(_split_lines(text), start=1):
        loc = SourceLocation(name, lineno)
        pieces = _split_statements(line)
        for pi, piece in enumerate(pieces):
            sep = ";" if pi < len(pieces) - 1 else eol
            in_macro = _scan_piece(unit, piece, sep, loc, in_macro)
    return unit


def _scan_piece(
    unit: ProgramUnit, piece: str, sep: str, loc: SourceLocation, in_macro: bool
) -> bool:
    stripped = piece.strip()
    low = stripped.lower()
    if in_macro:
        # opaque macro body; keep raw until .endm
        unit.items.append(
            AsmItem(ItemKind.RAW, piece, loc, sep, note="assembler macro body")
        )
        return not low.startswith(".endm")
    if low.startswith(".macro"):
        unit.items.append(
            AsmItem(
                ItemKind.RAW,
                piece,
                loc,
                sep,
                note="assembler macro passed through unexpanded",
            )
        )
        return True
    # peel labels off the front; each keeps its exact slice
    rest = piece
    while True:
        m = _LABEL_RE.match(rest)
        if not m:
            break
        remainder = rest[m.end() :]
        label_text = rest[: m.end()]
        if not remainder.strip():
            label_text = rest
            remainder = ""
        unit.items.append(
            AsmItem(
                ItemKind.LABEL,
                label_text,
                loc,
                sep if not remainder else "",
                label=m.group(2),
            )
        )
        if not remainder:
            return False
        rest = remainder
    stripped = rest.strip()
    if not stripped:
        unit.items.append(AsmItem(ItemKind.BLANK, rest, loc, sep))
        return False
    if stripped.startswith("#") or stripped.startswith("//"):
        unit.items.append(AsmItem(ItemKind.COMMENT, rest, loc, sep))
        return False
    if stripped.startswith("."):
        unit.items.append(AsmItem(ItemKind.DIRECTIVE, rest, loc, sep))
        return False
    instr, note = _parse_instruction(rest, loc)
    if instr is None:
        unit.items.append(AsmItem(ItemKind.RAW, rest, loc, sep, note=note))
    else:
        unit.items.append(AsmItem(ItemKind.INSTRUCTION, rest, loc, sep, parsed=instr))
    return False


def parse_bytes(data: bytes, name: str = "<input>") -> ProgramUnit:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SourceEncodingError(f"{name}: input is not valid UTF-8 ({exc})") from exc
    return parse_source(text, name)


def emit_source(unit: ProgramUnit) -> str:
    return "".join(item.text + item.eol for item in unit.items)


def iter_instructions(unit: ProgramUnit):
    for idx, item in enumerate(unit.items):
        if item.kind is ItemKind.INSTRUCTION and item.parsed is not None:
            yield idx, item


# ---------------------------------------------------------------------------
# synthesized operand / instruction builders


def xreg(idx: int) -> Operand:
    return Operand(OperandKind.SCALAR_REG, XREG_ABI[idx], idx)


def freg(idx: int) -> Operand:
    return Operand(OperandKind.FLOAT_REG, FREG_ABI[idx], idx)


def vreg(idx: int) -> Operand:
    return Operand(OperandKind.VECTOR_REG, f"v{idx}", idx)


def imm(value: int) -> Operand:
    return Operand(OperandKind.IMMEDIATE, str(value), value)


def memref(base: int, disp: object = 0) -> Operand:
    return Operand(
        OperandKind.MEMORY_REF, f"{disp}({XREG_ABI[base]})", MemRef(base, disp)
    )


def csr(name: str) -> Operand:
    return Operand(OperandKind.CSR_NAME, name, name)


def vtype_token(tok: str) -> Operand:
    return Operand(OperandKind.VTYPE_TOKEN, tok, tok)


def symbol(name: str) -> Operand:
    return Operand(OperandKind.SYMBOL, name, name)


def mask_ref() -> Operand:
    return Operand(OperandKind.MASK_REF, "v0.t", 0)


def make_instruction(
    mnemonic: str, operands: tuple[Operand, ...] | list[Operand], loc: SourceLocation
) -> AsmItem:
    ops = tuple(operands)
    text = "\t" + mnemonic
    if ops:
        text += " " + ", ".join(op.text.strip() for op in ops)
    return AsmItem(
        ItemKind.INSTRUCTION,
        text,
        loc,
        "\n",
        parsed=Instruction(mnemonic, ops, loc),
        synthesized=True,
    )


def make_comment(text: str, loc: SourceLocation) -> AsmItem:
    return AsmItem(ItemKind.COMMENT, f"# {text}", loc, "\n", synthesized=True)
