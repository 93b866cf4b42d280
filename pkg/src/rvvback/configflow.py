"""Forward dataflow over the vector configuration (vtype + AVL source).

The lattice has three levels: Bottom (unreached), Known(spec, avl) and
Unknown.  Control flow is modeled conservatively: any label that might be
entered from outside the block graph (exported, referenced outside branch
operands, or a numeric local label) starts in Unknown, and calls plus
register-vtype ``vsetvl`` clobber the state.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from .asmtext import (
    AsmItem,
    Instruction,
    ItemKind,
    MemRef,
    OperandKind,
    ProgramUnit,
)
from .isa import VTypeSpec, decode_vtype_tokens

# ---------------------------------------------------------------------------
# scalar register use/def model

_ALL_READ = {
    "sb", "sh", "sw", "sd", "fsw", "fsd",
    "beq", "bne", "blt", "bge", "bltu", "bgeu",
    "beqz", "bnez", "blez", "bgez", "bltz", "bgtz",
    "j", "jr", "ret", "tail",
}
_DEST_FIRST = {
    "add", "addw", "addi", "addiw", "sub", "subw", "mul", "mulw", "mulh",
    "div", "divu", "rem", "remu", "divw", "remw",
    "and", "andi", "or", "ori", "xor", "xori", "not",
    "sll", "slli", "srl", "srli", "sra", "srai",
    "sllw", "slliw", "srlw", "srliw", "sraw", "sraiw",
    "slt", "slti", "sltu", "sltiu", "seqz", "snez", "sltz", "sgtz",
    "li", "lui", "la", "lla", "mv", "neg", "negw", "sext.w", "zext.b",
    "auipc", "ld", "lw", "lwu", "lh", "lhu", "lb", "lbu",
    "csrr", "csrrw", "csrrs", "csrrc", "csrrwi", "csrrsi", "csrrci",
    "fmv.x.w", "fmv.x.d", "fcvt.w.s", "fcvt.l.s", "fcvt.wu.s", "fcvt.lu.s",
    "rdcycle", "rdtime", "rdinstret",
}
_SCALAR_WRITING_VECTOR = {
    "vsetvli", "vsetivli", "vsetvl",
    "vmv.x.s", "vext.x.v", "vcpop.m", "vpopc.m", "vfirst.m", "vmfirst.m",
}
_CALLS = {"call", "jalr", "ecall"}


@dataclass(frozen=True)
class RegUses:
    reads: frozenset[int]
    writes: frozenset[int]
    precise: bool = True


def _scalar_operand_regs(instr: Instruction) -> list[tuple[int, int]]:
    """(operand position, xreg index) pairs, memory bases included."""
    out = []
    for pos, op in enumerate(instr.operands):
        if op.kind is OperandKind.SCALAR_REG:
            out.append((pos, op.value))
        elif op.kind is OperandKind.MEMORY_REF and isinstance(op.value, MemRef):
            out.append((pos, op.value.base))
    return out


def scalar_uses(instr: Instruction) -> RegUses:
    m = instr.mnemonic
    regs = _scalar_operand_regs(instr)
    if m in _ALL_READ:
        return RegUses(frozenset(r for _, r in regs), frozenset())
    if m == "jal":
        # "jal sym" is a call writing ra; "jal zero, sym" a plain jump
        if regs and regs[0][0] == 0:
            rd = regs[0][1]
            return RegUses(frozenset(r for p, r in regs if p != 0), frozenset({rd}))
        return RegUses(frozenset(), frozenset({1}))
    if m in _CALLS:
        # unknown callee: conservatively reads the argument registers and
        # clobbers an unknown set; callers treat this as imprecise anyway
        return RegUses(frozenset(r for _, r in regs), frozenset({1}), precise=False)
    if m in _DEST_FIRST:
        if regs and regs[0][0] == 0:
            rd = regs[0][1]
            rest = frozenset(r for p, r in regs if p != 0)
            # memory base of a load is a read even though it sits after rd
            return RegUses(rest, frozenset({rd}))
        return RegUses(frozenset(r for _, r in regs), frozenset())
    if m.startswith("v") or m.startswith("vf"):
        if m in _SCALAR_WRITING_VECTOR:
            if regs and regs[0][0] == 0:
                rd = regs[0][1]
                return RegUses(frozenset(r for p, r in regs if p != 0), frozenset({rd}))
            return RegUses(frozenset(r for _, r in regs), frozenset())
        return RegUses(frozenset(r for _, r in regs), frozenset())
    if m.startswith("f"):  # scalar float ops touch at most memory bases
        return RegUses(frozenset(r for _, r in regs), frozenset())
    if m.startswith("csr"):
        # csrw csr, rs / csrwi variants: reads only
        return RegUses(frozenset(r for _, r in regs), frozenset())
    if m == "nop":
        return RegUses(frozenset(), frozenset())
    # unknown mnemonic: assume it reads every register it names and may
    # write any of them
    names = frozenset(r for _, r in regs)
    return RegUses(names, names, precise=False)


# ---------------------------------------------------------------------------
# block graph

_COND_BRANCHES = {
    "beq", "bne", "blt", "bge", "bltu", "bgeu",
    "beqz", "bnez", "blez", "bgez", "bltz", "bgtz",
}
_TERMINATORS = _COND_BRANCHES | {"j", "jal", "jr", "jalr", "ret", "tail", "call"}
_NUMERIC_LABEL_RE = re.compile(r"^\d+$")
_IDENT_RE = re.compile(r"[A-Za-z0-9_.$]+")


def branch_target(instr: Instruction) -> str | None:
    for op in reversed(instr.operands):
        if op.kind is OperandKind.SYMBOL:
            return op.value
    return None


@dataclass
class Block:
    start: int  # item index of first item
    end: int  # one past last item
    succs: list[int] = field(default_factory=list)
    root: bool = False  # entered from outside the block graph


@dataclass
class BlockGraph:
    blocks: list[Block]
    block_of_item: list[int]
    labels: dict[str, int]  # label name -> item index of definition


def _dirty_labels(unit: ProgramUnit) -> set[str]:
    """Labels whose entry state cannot be derived from in-unit branches."""
    defined = {
        it.label for it in unit.items if it.kind is ItemKind.LABEL and it.label
    }
    dirty = {name for name in defined if _NUMERIC_LABEL_RE.match(name)}
    for item in unit.items:
        if item.kind is ItemKind.DIRECTIVE or item.kind is ItemKind.RAW:
            for tok in _IDENT_RE.findall(item.text):
                if tok in defined:
                    dirty.add(tok)
        elif item.kind is ItemKind.INSTRUCTION and item.parsed is not None:
            instr = item.parsed
            is_branch = instr.mnemonic in _COND_BRANCHES or _is_plain_jump(instr)
            for op in instr.operands:
                if op.kind is OperandKind.SYMBOL and op.value in defined:
                    if not is_branch:
                        dirty.add(op.value)  # address taken or call target
                elif op.kind is not OperandKind.SYMBOL:
                    for tok in _IDENT_RE.findall(op.text):
                        if tok in defined and tok != op.text:
                            dirty.add(tok)
    return dirty


def build_blocks(unit: ProgramUnit) -> BlockGraph:
    items = unit.items
    n = len(items)
    leaders = set()
    if n:
        leaders.add(0)
    for i, item in enumerate(items):
        if item.kind is ItemKind.LABEL:
            leaders.add(i)
        elif item.kind is ItemKind.INSTRUCTION and item.parsed is not None:
            if item.parsed.mnemonic in _TERMINATORS and i + 1 < n:
                leaders.add(i + 1)
    order = sorted(leaders)
    blocks = []
    block_of_item = [0] * n
    for bi, start in enumerate(order):
        end = order[bi + 1] if bi + 1 < len(order) else n
        for i in range(start, end):
            block_of_item[i] = bi
        blocks.append(Block(start, end))
    labels = {}
    for i, item in enumerate(items):
        if item.kind is ItemKind.LABEL and item.label:
            labels.setdefault(item.label, i)
    dirty = _dirty_labels(unit)

    for bi, blk in enumerate(blocks):
        if blk.start == 0:
            blk.root = True
        first = items[blk.start] if blk.start < n else None
        if first is not None and first.kind is ItemKind.LABEL:
            if first.label in dirty:
                blk.root = True
        last_instr = None
        for i in range(blk.end - 1, blk.start - 1, -1):
            if items[i].kind is ItemKind.INSTRUCTION and items[i].parsed is not None:
                last_instr = items[i].parsed
                break
        falls_through = True
        if last_instr is not None and last_instr.mnemonic in _TERMINATORS:
            m = last_instr.mnemonic
            target = branch_target(last_instr)
            if m in _COND_BRANCHES or _is_plain_jump(last_instr):
                if target is not None and target in labels and target not in dirty:
                    blk.succs.append(block_of_item[labels[target]])
                falls_through = m in _COND_BRANCHES
            elif m in ("ret", "jr", "tail"):
                falls_through = False
            else:  # call / jal sym / jalr: execution resumes after the call
                falls_through = True
        if falls_through and bi + 1 < len(blocks):
            blk.succs.append(bi + 1)
    return BlockGraph(blocks, block_of_item, labels)


# ---------------------------------------------------------------------------
# the lattice and the solver


class StateKind(Enum):
    BOTTOM = "bottom"
    KNOWN = "known"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class ConfigState:
    kind: StateKind
    spec: VTypeSpec | None = None
    # ("reg", idx) for a register AVL, ("imm", value) for vsetivli
    avl: tuple | None = None


BOTTOM = ConfigState(StateKind.BOTTOM)
UNKNOWN = ConfigState(StateKind.UNKNOWN)


def known(spec: VTypeSpec, avl: tuple) -> ConfigState:
    return ConfigState(StateKind.KNOWN, spec, avl)


def join(a: ConfigState, b: ConfigState) -> ConfigState:
    if a.kind is StateKind.BOTTOM:
        return b
    if b.kind is StateKind.BOTTOM:
        return a
    if a == b:
        return a
    return UNKNOWN


_FF_LOAD_RE = re.compile(r"^vle\d*ff\.v$")


def established_state(instr: Instruction) -> ConfigState | None:
    """The state a config-setting instruction establishes, or None when the
    instruction does not touch the configuration."""
    m = instr.mnemonic
    if m == "vsetvli":
        tokens = [op.value for op in instr.operands if op.kind is OperandKind.VTYPE_TOKEN]
        spec, err = decode_vtype_tokens(tokens)
        if err or len(instr.operands) < 2:
            return UNKNOWN
        rs1 = instr.operands[1]
        if rs1.kind is not OperandKind.SCALAR_REG:
            return UNKNOWN
        return known(spec, ("reg", rs1.value))
    if m == "vsetivli":
        tokens = [op.value for op in instr.operands if op.kind is OperandKind.VTYPE_TOKEN]
        spec, err = decode_vtype_tokens(tokens)
        if err or len(instr.operands) < 2:
            return UNKNOWN
        uimm = instr.operands[1]
        if uimm.kind is not OperandKind.IMMEDIATE:
            return UNKNOWN
        return known(spec, ("imm", uimm.value))
    if m == "vsetvl":
        return UNKNOWN  # vtype comes from a register; value not tracked
    return None


def _is_plain_jump(instr: Instruction) -> bool:
    return instr.mnemonic == "j" or (
        instr.mnemonic == "jal"
        and bool(instr.operands)
        and instr.operands[0].kind is OperandKind.SCALAR_REG
        and instr.operands[0].value == 0
    )


def transfer(state: ConfigState, instr: Instruction) -> ConfigState:
    est = established_state(instr)
    if est is not None:
        return est
    m = instr.mnemonic
    if m in _CALLS:
        return UNKNOWN
    if m == "jal" and not _is_plain_jump(instr):
        return UNKNOWN
    if _FF_LOAD_RE.match(m):
        return UNKNOWN  # fault-only-first may truncate vl
    return state


@dataclass
class FlowResult:
    before: list[ConfigState]
    after: list[ConfigState]
    graph: BlockGraph


def analyze(unit: ProgramUnit) -> FlowResult:
    graph = build_blocks(unit)
    items = unit.items
    n = len(items)
    before = [BOTTOM] * n
    after = [BOTTOM] * n
    nblocks = len(graph.blocks)
    block_in = [BOTTOM] * nblocks
    preds: list[list[int]] = [[] for _ in range(nblocks)]
    for bi, blk in enumerate(graph.blocks):
        for s in blk.succs:
            preds[s].append(bi)
    block_out = [BOTTOM] * nblocks

    worklist = list(range(nblocks))
    while worklist:
        bi = worklist.pop(0)
        blk = graph.blocks[bi]
        state = UNKNOWN if blk.root else BOTTOM
        for p in preds[bi]:
            state = join(state, block_out[p])
        block_in[bi] = state
        for i in range(blk.start, blk.end):
            before[i] = state
            item = items[i]
            if item.kind is ItemKind.INSTRUCTION and item.parsed is not None:
                state = transfer(state, item.parsed)
            elif item.kind is ItemKind.RAW:
                state = UNKNOWN  # opaque text may do anything
            after[i] = state
        if state != block_out[bi]:
            block_out[bi] = state
            for s in blk.succs:
                if s not in worklist:
                    worklist.append(s)
    return FlowResult(before, after, graph)


# ---------------------------------------------------------------------------
# redundant configuration sites


@dataclass(frozen=True)
class RedundantSite:
    index: int
    established: ConfigState


_VL_CLOBBER = {"vsetvl", "call", "jalr", "ecall", "jal"}


def find_redundant_configs(unit: ProgramUnit, flow: FlowResult | None = None) -> list[RedundantSite]:
    """vsetvli/vsetivli sites that provably re-establish the live state.

    Requirements: the incoming state is Known and identical in vtype and
    AVL source, the establishing instruction sits in the same block with
    no intervening write to the AVL register and nothing that can clobber
    vl, and the scalar destination is x0 or provably dead locally."""
    if flow is None:
        flow = analyze(unit)
    items = unit.items
    out = []
    for idx, item in enumerate(items):
        if item.kind is not ItemKind.INSTRUCTION or item.parsed is None:
            continue
        instr = item.parsed
        if instr.mnemonic not in ("vsetvli", "vsetivli"):
            continue
        est = established_state(instr)
        if est is None or est.kind is not StateKind.KNOWN:
            continue
        if flow.before[idx] != est:
            continue
        bi = flow.graph.block_of_item[idx]
        blk = flow.graph.blocks[bi]
        if not _established_in_block(items, blk.start, idx, est):
            continue
        rd = instr.operands[0] if instr.operands else None
        if rd is None or rd.kind is not OperandKind.SCALAR_REG:
            continue
        if rd.value != 0 and not _provably_dead(items, idx + 1, blk.end, rd.value):
            continue
        out.append(RedundantSite(idx, est))
    return out


def _established_in_block(items, start: int, idx: int, est: ConfigState) -> bool:
    avl_reg = est.avl[1] if est.avl and est.avl[0] == "reg" else None
    for i in range(idx - 1, start - 1, -1):
        item = items[i]
        if item.kind is ItemKind.RAW:
            return False
        if item.kind is not ItemKind.INSTRUCTION or item.parsed is None:
            continue
        instr = item.parsed
        prior = established_state(instr)
        if prior is not None:
            return prior == est
        if instr.mnemonic in _VL_CLOBBER or _FF_LOAD_RE.match(instr.mnemonic):
            return False
        uses = scalar_uses(instr)
        if avl_reg is not None and avl_reg != 0:
            if avl_reg in uses.writes or not uses.precise:
                return False
    return False


def _provably_dead(items, start: int, end: int, reg: int) -> bool:
    for i in range(start, end):
        item = items[i]
        if item.kind is ItemKind.RAW:
            return False
        if item.kind is not ItemKind.INSTRUCTION or item.parsed is None:
            continue
        uses = scalar_uses(item.parsed)
        if reg in uses.reads:
            return False
        if not uses.precise:
            return False
        if reg in uses.writes:
            return True
    return False  # could be live-out of the block


# ---------------------------------------------------------------------------
# scratch register selection

# caller-saved pool, preferred order
SCRATCH_POOL = [31, 30, 29, 28, 7, 6, 5] + list(range(17, 9, -1))  # t6..t0, a7..a0


def select_scratch(
    unit: ProgramUnit,
    graph: BlockGraph,
    idx: int,
    needed: int,
    exclude: set[int] = frozenset(),
) -> list[int] | None:
    """Caller-saved registers provably dead after item ``idx`` in its block:
    written before read in the remainder, or never mentioned at all.
    Returns None when fewer than ``needed`` can be proven free."""
    items = unit.items
    blk = graph.blocks[graph.block_of_item[idx]]
    state: dict[int, str] = {}  # reg -> "live" | "dead"
    for i in range(idx + 1, blk.end):
        item = items[i]
        if item.kind is ItemKind.RAW and item.text.strip():
            # opaque text: anything it names (or doesn't) may be read
            for r in SCRATCH_POOL:
                state.setdefault(r, "live")
            break
        if item.kind is not ItemKind.INSTRUCTION or item.parsed is None:
            continue
        uses = scalar_uses(item.parsed)
        if not uses.precise:
            for r in uses.reads | uses.writes:
                state.setdefault(r, "live")
            continue
        for r in uses.reads:
            state.setdefault(r, "live")
        for r in uses.writes:
            state.setdefault(r, "dead")
    found = []
    for r in SCRATCH_POOL:
        if r in exclude:
            continue
        if state.get(r, "dead") == "dead":
            found.append(r)
            if len(found) == needed:
                return found
    return None
