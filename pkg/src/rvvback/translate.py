"""Rewriting engine: turn a v1.0 unit into a v0.7.1 unit.

The driver walks items in order and dispatches on the classification from
the catalog.  Pass-through and renamed instructions are edited in place by
token surgery so spacing and trailing comments survive; instructions with
no one-line counterpart expand into short sequences, each introduced by a
comment naming the original.

Two strategies govern where those sequences find their temporaries:

- ``register``: borrow registers the liveness scan proves dead; their
  values are consumed (callers of the differential harness get the list).
  Fails with E_NO_SCRATCH when nothing provably free exists.
- ``memory``: spill fixed temporaries to a small stack frame around the
  sequence; always applicable, never consumes registers.
- ``auto``: register when possible, else memory, per site.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction

from . import configflow as cf
from . import diagnostics as dc
from .asmtext import (
    AsmItem,
    Instruction,
    ItemKind,
    MemRef,
    Operand,
    OperandKind,
    ProgramUnit,
    SourceLocation,
    XREG_ABI,
    csr,
    imm,
    make_instruction,
    memref,
    split_comment,
    vtype_token,
    xreg,
)
from .isa import (
    Catalog,
    CategoryKind,
    LowerRule,
    Policy,
    TargetConfig,
    VTypeSpec,
    check_v071_legal,
    classify_instruction,
    decode_vtype_tokens,
    default_catalog,
    parse_mem_mnemonic,
    parse_whole_move,
    parse_whole_reg,
)


class Strategy(Enum):
    MEMORY = "memory"
    REGISTER = "register"
    AUTO = "auto"


SP = 2
# memory-strategy temporaries are taken low-to-high so the borrowed names
# stay out of the way of the t6-first register strategy
_SPILL_ORDER = [5, 6, 7, 28, 29, 30, 31]  # t0..t6


@dataclass
class TranslationResult:
    unit: ProgramUnit
    diagnostics: list[dc.Diagnostic]
    strategy: Strategy
    consumed_scratch: set[int] = field(default_factory=set)
    redundant_sites: list[int] = field(default_factory=list)
    eliminated_sites: list[int] = field(default_factory=list)
    fallback_sites: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not dc.has_errors(self.diagnostics)


class _NoScratch(Exception):
    pass


def _mnemonic_surgery(item: AsmItem, new_mnemonic: str) -> AsmItem:
    """Swap the mnemonic token inside the original text, keeping the rest
    of the line (spacing, operands, trailing comment) byte-identical."""
    old = item.parsed.mnemonic
    pat = re.compile(r"(?<![\w.])" + re.escape(old) + r"(?![\w.])", re.IGNORECASE)
    code, comment = split_comment(item.text)
    new_text = pat.sub(new_mnemonic, code, count=1) + comment
    new_instr = replace(item.parsed, mnemonic=new_mnemonic)
    return replace(item, text=new_text, parsed=new_instr, synthesized=True)


_POLICY_TOKEN_RE = re.compile(r",\s*(?:ta|tu|ma|mu)(?![\w.])", re.IGNORECASE)


def _strip_policy_tokens(item: AsmItem) -> AsmItem:
    code, comment = split_comment(item.text)
    new_code = _POLICY_TOKEN_RE.sub("", code)
    kept = tuple(
        op
        for op in item.parsed.operands
        if not (op.kind is OperandKind.VTYPE_TOKEN and op.value in ("ta", "tu", "ma", "mu"))
    )
    new_instr = replace(item.parsed, operands=kept)
    return replace(item, text=new_code + comment, parsed=new_instr, synthesized=True)


class _Translator:
    def __init__(
        self,
        unit: ProgramUnit,
        cfg: TargetConfig,
        strategy: Strategy,
        eliminate_redundant: bool,
        catalog: Catalog,
    ):
        self.unit = unit
        self.cfg = cfg
        self.strategy = strategy
        self.eliminate = eliminate_redundant
        self.catalog = catalog
        self.flow = cf.analyze(unit)
        self.redundant = {s.index for s in cf.find_redundant_configs(unit, self.flow)}
        self.out: list[AsmItem] = []
        self.diags: list[dc.Diagnostic] = []
        self.consumed: set[int] = set()
        self.eliminated: list[int] = []
        self.fallbacks: list[int] = []
        self.uses_masks = any(
            any(op.kind is OperandKind.MASK_REF for op in ins.operands)
            for _, ins in _instructions(unit)
        )
        self._macro_noted = False

    # -- emission helpers ---------------------------------------------------

    def _emit(self, item: AsmItem) -> None:
        self.out.append(item)

    def _emit_seq(self, original: AsmItem, items: list[AsmItem]) -> None:
        """Replace one item with a sequence of whole lines.  A leading
        comment names the original; skipped for `;`-joined statements,
        where an inline comment would swallow the rest of the line."""
        seq = list(items)
        if original.eol != ";":
            intro = AsmItem(
                ItemKind.COMMENT,
                "\t# was: " + split_comment(original.text)[0].strip(),
                original.loc,
                "\n",
                synthesized=True,
            )
            seq = [intro] + seq
        last_eol = original.eol if original.eol not in (";",) else "\n"
        for i, it in enumerate(seq):
            eol = last_eol if i == len(seq) - 1 else "\n"
            self._emit(replace(it, loc=original.loc, eol=eol))

    def _ins(self, mnemonic: str, *operands: Operand, loc: SourceLocation) -> AsmItem:
        return make_instruction(mnemonic, operands, loc)

    def _diag(self, d: dc.Diagnostic) -> None:
        self.diags.append(d)

    # -- scratch management -------------------------------------------------

    def _register_scratch(self, idx: int, needed: int, exclude: set[int]) -> list[int]:
        regs = cf.select_scratch(self.unit, self.flow.graph, idx, needed, exclude | {0, SP})
        if regs is None:
            raise _NoScratch()
        return regs

    def _spill_regs(self, needed: int, exclude: set[int]) -> list[int]:
        out = [r for r in _SPILL_ORDER if r not in exclude]
        if len(out) < needed:
            # seven t-registers minus instruction operands always leaves enough
            raise AssertionError("spill pool exhausted")
        return out[:needed]

    def _site_regs(self, idx: int, needed: int, exclude: set[int], loc) -> tuple[list[int], bool]:
        """Pick temporaries for one lowering site.  Returns (regs, spilled)."""
        strategy = self.strategy
        if strategy is Strategy.REGISTER or strategy is Strategy.AUTO:
            try:
                regs = self._register_scratch(idx, needed, exclude)
                self.consumed.update(regs)
                self._diag(
                    dc.note(
                        dc.N_SCRATCH_USED,
                        "borrowed dead register(s) "
                        + ", ".join(XREG_ABI[r] for r in regs)
                        + "; their previous values are not preserved",
                        loc,
                    )
                )
                return regs, False
            except _NoScratch:
                if strategy is Strategy.REGISTER:
                    raise
                self.fallbacks.append(idx)
        else:
            regs = cf.select_scratch(
                self.unit, self.flow.graph, idx, needed, exclude | {0, SP}
            )
            if regs is not None:
                self._diag(
                    dc.note(
                        dc.N_REGISTER_CANDIDATE,
                        "dead register(s) available here; --strategy register would "
                        "avoid the stack round-trip",
                        loc,
                    )
                )
        return self._spill_regs(needed, exclude), True

    def _wrap_spill(
        self, original: AsmItem, regs: list[int], body: list[AsmItem]
    ) -> list[AsmItem]:
        loc = original.loc
        frame = 16 if len(regs) <= 2 else ((len(regs) * 8 + 15) // 16) * 16
        seq = [self._ins("addi", xreg(SP), xreg(SP), imm(-frame), loc=loc)]
        for i, r in enumerate(regs):
            seq.append(self._ins("sd", xreg(r), memref(SP, i * 8), loc=loc))
        seq.extend(body)
        for i, r in enumerate(regs):
            seq.append(self._ins("ld", xreg(r), memref(SP, i * 8), loc=loc))
        seq.append(self._ins("addi", xreg(SP), xreg(SP), imm(frame), loc=loc))
        return seq

    # -- per-category handlers ----------------------------------------------

    def _policy_diags(self, instr: Instruction, spec: VTypeSpec) -> None:
        toks = [
            op.value
            for op in instr.operands
            if op.kind is OperandKind.VTYPE_TOKEN and op.value in ("ta", "tu", "ma", "mu")
        ]
        if not toks:
            return
        if spec.tail is Policy.UNDISTURBED:
            self._diag(
                dc.warning(
                    dc.W_TAIL_UNDISTURBED,
                    "tail-undisturbed has no v0.7.1 equivalent: tails are zeroed "
                    "there, so code observing tail elements will see different values",
                    instr.loc,
                )
            )
        self._diag(
            dc.note(
                dc.N_POLICY_DROPPED,
                "dropped policy token(s) " + ", ".join(toks)
                + " (not part of the v0.7.1 vsetvli syntax)",
                instr.loc,
            )
        )

    def _handle_config(self, idx: int, item: AsmItem) -> None:
        instr = item.parsed
        spec, err = decode_vtype_tokens(
            [op.value for op in instr.operands if op.kind is OperandKind.VTYPE_TOKEN]
        )
        assert spec is not None and err is None  # classification vetted this
        self._policy_diags(instr, spec)
        self._emit(_strip_policy_tokens(item))

    def _handle_config_imm(self, idx: int, item: AsmItem) -> None:
        instr = item.parsed
        loc = instr.loc
        if (
            len(instr.operands) < 2
            or instr.operands[0].kind is not OperandKind.SCALAR_REG
            or instr.operands[1].kind is not OperandKind.IMMEDIATE
        ):
            self._diag(dc.error(dc.E_PARSE, "malformed vsetivli operand list", loc))
            self._emit(item)
            return
        rd = instr.operands[0]
        avl = instr.operands[1]
        spec, _ = decode_vtype_tokens(
            [op.value for op in instr.operands if op.kind is OperandKind.VTYPE_TOKEN]
        )
        self._policy_diags(instr, spec)
        legal = check_v071_legal(spec, self.cfg)
        exclude = {rd.value} if rd.kind is OperandKind.SCALAR_REG else set()
        regs, spilled = self._site_regs(idx, 1, exclude, loc)
        avl_reg = regs[0]
        body = [
            self._ins("li", xreg(avl_reg), imm(avl.value), loc=loc),
            self._ins(
                "vsetvli",
                rd,
                xreg(avl_reg),
                *[vtype_token(t) for t in legal.tokens],
                loc=loc,
            ),
        ]
        if spilled:
            body = self._wrap_spill(item, regs, body)
        self._emit_seq(item, body)

    def _mask_layout_check(self, instr: Instruction) -> None:
        if not self.uses_masks:
            return
        dest = instr.operands[0] if instr.operands else None
        if dest is not None and dest.kind is OperandKind.VECTOR_REG and dest.value == 0:
            self._diag(
                dc.warning(
                    dc.W_MASK_LAYOUT,
                    "v0 holds mask state in this unit, and the two versions lay "
                    "masks out differently (bit i vs bit i*MLEN); moving v0 "
                    "through memory is not value-portable",
                    instr.loc,
                )
            )

    def _handle_mem_eew(self, idx: int, item: AsmItem) -> None:
        instr = item.parsed
        loc = instr.loc
        shape = parse_mem_mnemonic(instr.mnemonic)
        self._mask_layout_check(instr)
        state = self.flow.before[idx]
        if state.kind is not cf.StateKind.KNOWN:
            self._diag(
                dc.error(
                    dc.E_EEW_MISMATCH,
                    f"{instr.mnemonic} names an element width, but the prevailing "
                    "SEW/LMUL at this point is not statically known; cannot prove "
                    "the v0.7.1 spelling matches",
                    loc,
                )
            )
            self._emit(item)
            return
        spec = state.spec
        base_071 = {
            ("load", "unit"): "vle.v",
            ("store", "unit"): "vse.v",
            ("load", "strided"): "vlse.v",
            ("store", "strided"): "vsse.v",
            ("load", "indexed_u"): "vlxe.v",
            ("load", "indexed_o"): "vlxe.v",
            ("store", "indexed_u"): "vsuxe.v",
            ("store", "indexed_o"): "vsxe.v",
        }[(shape.op, shape.mode)]
        if shape.eew == spec.sew:
            self._emit(_mnemonic_surgery(item, base_071))
            return
        if shape.mode.startswith("indexed"):
            self._diag(
                dc.error(
                    dc.E_EEW_MISMATCH,
                    f"index width {shape.eew} differs from SEW {spec.sew}; v0.7.1 "
                    "indexed accesses use SEW-wide indices and data together",
                    loc,
                )
            )
            self._emit(item)
            return
        emul = spec.lmul * Fraction(shape.eew, spec.sew)
        if emul < 1:
            self._diag(
                dc.error(
                    dc.E_FRACTIONAL_LMUL,
                    f"adapting to element width {shape.eew} under e{spec.sew}/"
                    f"m{spec.lmul} needs LMUL {emul}, and v0.7.1 has no "
                    "fractional groups",
                    loc,
                )
            )
            self._emit(item)
            return
        if emul > 8:
            self._diag(
                dc.error(
                    dc.E_UNSUPPORTED,
                    f"element-width adapter would need a register group of {emul}",
                    loc,
                )
            )
            self._emit(item)
            return
        operand_regs = _scalar_operand_regs(instr)
        try:
            regs, spilled = self._site_regs(idx, 2, operand_regs, loc)
        except _NoScratch:
            self._diag(
                dc.error(
                    dc.E_NO_SCRATCH,
                    "no provably dead register for the element-width adapter; "
                    "try --strategy memory",
                    loc,
                )
            )
            self._emit(item)
            return
        s_vl, s_vt = regs
        # the adapter keeps SEW/LMUL constant (both scale by EEW/SEW), so
        # MLEN and therefore any v0 mask layout are unchanged inside it
        inner = _mnemonic_surgery(item, base_071)
        if spilled:
            inner = _adjust_sp_disp(inner, 16)
        body = [
            self._ins("csrr", xreg(s_vl), csr("vl"), loc=loc),
            self._ins("csrr", xreg(s_vt), csr("vtype"), loc=loc),
            self._ins(
                "vsetvli",
                xreg(0),
                xreg(s_vl),
                vtype_token(f"e{shape.eew}"),
                vtype_token(f"m{int(emul)}"),
                loc=loc,
            ),
            replace(inner, eol="\n"),
            self._ins("vsetvl", xreg(0), xreg(s_vl), xreg(s_vt), loc=loc),
        ]
        if spilled:
            body = self._wrap_spill(item, regs, body)
        self._diag(
            dc.warning(
                dc.W_EEW_WRAPPED,
                f"wrapped {instr.mnemonic} in a temporary e{shape.eew}/m{int(emul)} "
                "configuration (v0.7.1 memory accesses move SEW-wide elements)",
                loc,
            )
        )
        self._emit_seq(item, body)

    def _reconfig_sequence(
        self, idx: int, item: AsmItem, tokens: tuple[str, str], inner: list[AsmItem]
    ) -> None:
        """Shared shape for whole-register ops: save vl/vtype, switch to a
        byte-wise view at full length, run ``inner``, restore."""
        instr = item.parsed
        loc = instr.loc
        operand_regs = _scalar_operand_regs(instr)
        try:
            regs, spilled = self._site_regs(idx, 2, operand_regs, loc)
        except _NoScratch:
            self._diag(
                dc.error(
                    dc.E_NO_SCRATCH,
                    f"no provably dead register to carry vl/vtype around "
                    f"{instr.mnemonic}; try --strategy memory",
                    loc,
                )
            )
            self._emit(item)
            return
        s_vl, s_vt = regs
        if spilled:
            inner = [_adjust_sp_disp(it, 16) for it in inner]
        body = [
            self._ins("csrr", xreg(s_vl), csr("vl"), loc=loc),
            self._ins("csrr", xreg(s_vt), csr("vtype"), loc=loc),
            self._ins(
                "vsetvli",
                xreg(0),
                xreg(0),
                vtype_token(tokens[0]),
                vtype_token(tokens[1]),
                loc=loc,
            ),
            *inner,
            self._ins("vsetvl", xreg(0), xreg(s_vl), xreg(s_vt), loc=loc),
        ]
        if spilled:
            body = self._wrap_spill(item, regs, body)
        self._emit_seq(item, body)

    def _operands_shaped(self, item: AsmItem, *kinds: OperandKind) -> bool:
        ops = item.parsed.operands
        if len(ops) < len(kinds) or any(
            o.kind is not k for o, k in zip(ops, kinds)
        ):
            self._diag(
                dc.error(
                    dc.E_PARSE,
                    f"malformed {item.parsed.mnemonic} operand list",
                    item.parsed.loc,
                )
            )
            self._emit(item)
            return False
        return True

    def _handle_whole_register(self, idx: int, item: AsmItem) -> None:
        if not self._operands_shaped(item, OperandKind.VECTOR_REG, OperandKind.MEMORY_REF):
            return
        instr = item.parsed
        op, nf = parse_whole_reg(instr.mnemonic)
        self._mask_layout_check(instr)
        mnem = "vle.v" if op == "load" else "vse.v"
        inner = [self._ins(mnem, instr.operands[0], instr.operands[1], loc=instr.loc)]
        self._reconfig_sequence(idx, item, ("e8", f"m{nf}"), inner)

    def _handle_whole_move(self, idx: int, item: AsmItem) -> None:
        if not self._operands_shaped(item, OperandKind.VECTOR_REG, OperandKind.VECTOR_REG):
            return
        instr = item.parsed
        nf = parse_whole_move(instr.mnemonic)
        inner = [
            self._ins("vmv.v.v", instr.operands[0], instr.operands[1], loc=instr.loc)
        ]
        self._reconfig_sequence(idx, item, ("e8", f"m{nf}"), inner)

    def _handle_csr_shim(self, idx: int, item: AsmItem) -> None:
        if not self._operands_shaped(item, OperandKind.SCALAR_REG):
            return
        instr = item.parsed
        loc = instr.loc
        rd = instr.operands[0]
        name = next(op.value for op in instr.operands if op.kind is OperandKind.CSR_NAME)
        if name == "vlenb":
            if self.cfg.vlen_bits is not None:
                self._emit_seq(
                    item, [self._ins("li", rd, imm(self.cfg.vlen_bits // 8), loc=loc)]
                )
                return
            # probe: at e8/m1 the maximum vl is exactly the byte width of a
            # register, which is what vlenb reports
            inner = []
            try:
                regs, spilled = self._site_regs(idx, 2, {rd.value}, loc)
            except _NoScratch:
                self._diag(
                    dc.error(
                        dc.E_NO_SCRATCH,
                        "no provably dead register to carry vl/vtype around the "
                        "vlenb probe; try --strategy memory or --vlen",
                        loc,
                    )
                )
                self._emit(item)
                return
            s_vl, s_vt = regs
            body = [
                self._ins("csrr", xreg(s_vl), csr("vl"), loc=loc),
                self._ins("csrr", xreg(s_vt), csr("vtype"), loc=loc),
                self._ins(
                    "vsetvli", rd, xreg(0), vtype_token("e8"), vtype_token("m1"), loc=loc
                ),
                self._ins("vsetvl", xreg(0), xreg(s_vl), xreg(s_vt), loc=loc),
            ]
            if spilled:
                body = self._wrap_spill(item, regs, body)
            self._emit_seq(item, body)
            return
        # vcsr: compose from the two v0.7.1 CSRs it aggregates
        try:
            regs, spilled = self._site_regs(idx, 1, {rd.value}, loc)
        except _NoScratch:
            self._diag(
                dc.error(
                    dc.E_NO_SCRATCH,
                    "no provably dead register for the vcsr shim; "
                    "try --strategy memory",
                    loc,
                )
            )
            self._emit(item)
            return
        tmp = regs[0]
        body = [
            self._ins("csrr", rd, csr("vxrm"), loc=loc),
            self._ins("slli", rd, rd, imm(1), loc=loc),
            self._ins("csrr", xreg(tmp), csr("vxsat"), loc=loc),
            self._ins("add", rd, rd, xreg(tmp), loc=loc),
        ]
        if spilled:
            body = self._wrap_spill(item, regs, body)
        self._diag(
            dc.warning(
                dc.W_VCSR_SHIM,
                "vcsr does not exist in v0.7.1; composed it from vxrm and vxsat "
                "(reads only; the fields remain separately writable state)",
                loc,
            )
        )
        self._emit_seq(item, body)

    def _handle_scalar_move(self, idx: int, item: AsmItem) -> None:
        if not self._operands_shaped(item, OperandKind.SCALAR_REG, OperandKind.VECTOR_REG):
            return
        instr = item.parsed
        body = [
            self._ins(
                "vext.x.v", instr.operands[0], instr.operands[1], xreg(0), loc=instr.loc
            )
        ]
        self._emit_seq(item, body)

    # -- driver -------------------------------------------------------------

    def _handle_instruction(self, idx: int, item: AsmItem) -> None:
        instr = item.parsed
        cat = classify_instruction(instr, self.cfg, self.catalog)
        if idx in self.redundant and cat.kind in (CategoryKind.PASS_THROUGH, CategoryKind.LOWER):
            self._diag(
                dc.note(
                    dc.N_REDUNDANT_CONFIG,
                    "re-establishes the configuration already in effect on every "
                    "path here" + ("; removed" if self.eliminate else ""),
                    instr.loc,
                )
            )
            if self.eliminate:
                self.eliminated.append(idx)
                return
        if cat.kind is CategoryKind.NON_VECTOR or cat.kind is CategoryKind.PASS_THROUGH:
            if instr.mnemonic in ("vse.v", "vsse.v", "vsxe.v", "vsuxe.v", "vle.v",
                                  "vlse.v", "vlxe.v"):
                self._mask_layout_check(instr)
            self._emit(item)
            return
        if cat.kind is CategoryKind.RENAME:
            self._emit(_mnemonic_surgery(item, cat.arg))
            return
        if cat.kind is CategoryKind.UNSUPPORTED:
            self._diag(
                dc.error(cat.code or dc.E_UNSUPPORTED, str(cat.arg), instr.loc)
            )
            self._emit(item)
            return
        # LOWER
        rule = cat.arg
        try:
            if rule is LowerRule.CONFIG:
                self._handle_config(idx, item)
            elif rule is LowerRule.IMMEDIATE_CONFIG:
                self._handle_config_imm(idx, item)
            elif rule is LowerRule.MEMORY_EEW:
                self._handle_mem_eew(idx, item)
            elif rule is LowerRule.WHOLE_REGISTER:
                self._handle_whole_register(idx, item)
            elif rule is LowerRule.WHOLE_REG_MOVE:
                self._handle_whole_move(idx, item)
            elif rule is LowerRule.CSR_SHIM:
                self._handle_csr_shim(idx, item)
            elif rule is LowerRule.SCALAR_MOVE:
                self._handle_scalar_move(idx, item)
            else:  # pragma: no cover - catalog actions are closed
                raise AssertionError(f"unhandled lowering rule {rule!r}")
        except _NoScratch:
            self._diag(
                dc.error(
                    dc.E_NO_SCRATCH,
                    "register strategy found no provably dead register at this "
                    "site; try --strategy memory or auto",
                    instr.loc,
                )
            )
            self._emit(item)

    def run(self) -> TranslationResult:
        for idx, item in enumerate(self.unit.items):
            if item.kind is ItemKind.RAW:
                self._handle_raw(item)
                continue
            if item.kind is not ItemKind.INSTRUCTION or item.parsed is None:
                self._emit(item)
                continue
            self._handle_instruction(idx, item)
        out_unit = ProgramUnit(self.unit.name, self.out)
        return TranslationResult(
            unit=out_unit,
            diagnostics=self.diags,
            strategy=self.strategy,
            consumed_scratch=self.consumed,
            redundant_sites=sorted(self.redundant),
            eliminated_sites=self.eliminated,
            fallback_sites=self.fallbacks,
        )

    def _handle_raw(self, item: AsmItem) -> None:
        text = item.text.strip()
        note = item.note or ""
        if "macro" in note:
            if not self._macro_noted:
                self._diag(
                    dc.note(
                        dc.N_MACRO_OPAQUE,
                        "assembler macros pass through unexpanded; vector "
                        "instructions inside them are not translated",
                        item.loc,
                    )
                )
                self._macro_noted = True
            self._emit(item)
            return
        first = text.split(None, 1)[0].lower() if text else ""
        if first.startswith("v"):
            self._diag(
                dc.error(
                    dc.E_PARSE,
                    f"could not parse apparent vector instruction: {text!r}"
                    + (f" ({note})" if note else ""),
                    item.loc,
                )
            )
        self._emit(item)


def _instructions(unit: ProgramUnit):
    for i, item in enumerate(unit.items):
        if item.kind is ItemKind.INSTRUCTION and item.parsed is not None:
            yield i, item.parsed


def _scalar_operand_regs(instr: Instruction) -> set[int]:
    regs = set()
    for op in instr.operands:
        if op.kind is OperandKind.SCALAR_REG:
            regs.add(op.value)
        elif op.kind is OperandKind.MEMORY_REF and isinstance(op.value, MemRef):
            regs.add(op.value.base)
    return regs


def _adjust_sp_disp(item: AsmItem, delta: int) -> AsmItem:
    """Fix sp-relative displacements for code that runs inside a spill frame."""
    instr = item.parsed
    changed = False
    ops = []
    for op in instr.operands:
        if (
            op.kind is OperandKind.MEMORY_REF
            and isinstance(op.value, MemRef)
            and op.value.base == SP
            and isinstance(op.value.disp, int)
        ):
            ops.append(memref(SP, op.value.disp + delta))
            changed = True
        else:
            ops.append(op)
    if not changed:
        return item
    return make_instruction(instr.mnemonic, ops, instr.loc)


def translate_program(
    unit: ProgramUnit,
    cfg: TargetConfig | None = None,
    strategy: Strategy = Strategy.AUTO,
    eliminate_redundant: bool = False,
    catalog: Catalog | None = None,
) -> TranslationResult:
    cfg = cfg or TargetConfig()
    catalog = catalog or default_catalog()
    return _Translator(unit, cfg, strategy, eliminate_redundant, catalog).run()


def verify_v071_purity(unit: ProgramUnit, catalog: Catalog | None = None) -> list[str]:
    """Mnemonics in ``unit`` that are not v0.7.1 vocabulary (vector names
    absent from the catalog's v0.7.1 column).  Empty list means pure."""
    catalog = catalog or default_catalog()
    bad = []
    for _, instr in _instructions(unit):
        entry = catalog.lookup(instr.mnemonic)
        if entry is not None and not entry.in_v071:
            bad.append(instr.mnemonic)
        elif entry is None and instr.mnemonic.startswith("vset"):
            bad.append(instr.mnemonic)
    return bad
