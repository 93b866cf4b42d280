"""Kernel generation and the differential harness.

A kernel is a self-contained v1.0 fragment plus its machine setup: memory
image, entry registers, and the observation windows whose bytes define
the kernel's visible result.  ``differential_check`` translates the
kernel, runs the original on the v1.0 interpreter and the translation on
the v0.7.1 interpreter, and compares windows byte for byte and scalar
registers exactly (minus any registers the translation consumed).

The generator draws from the interpreter-supported subset only, so a
clean run never depends on unmodeled behaviour.  Registers a0-a5, t0 and
t1 carry kernel state; t2-t6 stay free so the register strategy has
something to borrow.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field

from .asmtext import XREG_ABI, parse_source
from .diagnostics import Diagnostic, Severity, W_TAIL_UNDISTURBED
from .emulator import EmuError, MachineState, exec_program
from .isa import IsaVersion, TargetConfig
from .translate import Strategy, TranslationResult, translate_program

STACK_BASE = 0x1000
STACK_TOP = 0x1100
IN0 = 0x2000
IN1 = 0x3000
OUT = 0x4000
DATA_BYTES = 256
DEFAULT_FUEL = 200_000

# Seeds at or above this generate tail-observing tu kernels, which diverge
# between the versions by design (undisturbed vs zeroed tails).  The default
# rotation below it only emits kernels whose observable state is identical
# under both versions, so plain difftest sweeps compare byte-exactly.
TAIL_SEED_BASE = 1_000_000


@dataclass
class KernelSpec:
    name: str
    source: str
    vlen_bits: int = 128
    xregs: dict[int, int] = field(default_factory=dict)
    fregs: dict[int, int] = field(default_factory=dict)
    mem: dict[int, bytes] = field(default_factory=dict)
    windows: list[tuple[int, int]] = field(default_factory=list)
    fuel: int = DEFAULT_FUEL


def make_state(spec: KernelSpec, version: IsaVersion, hostile: bool = False) -> MachineState:
    st = MachineState(version, vlen_bits=spec.vlen_bits, hostile_agnostic=hostile)
    for addr, data in spec.mem.items():
        st.mem.add_range(addr, data)
    for idx, val in spec.xregs.items():
        st.xregs[idx] = val & ((1 << 64) - 1)
    for idx, val in spec.fregs.items():
        st.fregs[idx] = val & 0xFFFFFFFF
    return st


def run_kernel(spec: KernelSpec, version: IsaVersion, unit=None, hostile: bool = False):
    """Execute and return (state, steps); ``unit`` overrides the parsed
    source (used to run a translation against the same setup)."""
    if unit is None:
        unit = parse_source(spec.source, name=spec.name)
    st = make_state(spec, version, hostile)
    steps = exec_program(unit, st, fuel=spec.fuel)
    return st, steps


# ---------------------------------------------------------------------------
# manifest round-trip (key value lines, then the source after "asm:")


def to_manifest(spec: KernelSpec) -> str:
    lines = [f"kernel {spec.name}", f"vlen {spec.vlen_bits}", f"fuel {spec.fuel}"]
    for idx in sorted(spec.xregs):
        lines.append(f"xreg {idx} {spec.xregs[idx]:#x}")
    for idx in sorted(spec.fregs):
        lines.append(f"freg {idx} {spec.fregs[idx]:#010x}")
    for addr in sorted(spec.mem):
        lines.append(f"mem {addr:#x} {spec.mem[addr].hex()}")
    for addr, size in spec.windows:
        lines.append(f"window {addr:#x} {size}")
    lines.append("asm:")
    return "\n".join(lines) + "\n" + spec.source


def from_manifest(text: str) -> KernelSpec:
    header, sep, source = text.partition("\nasm:\n")
    if not sep:
        raise ValueError("manifest has no 'asm:' section")
    spec = KernelSpec(name="<manifest>", source=source)
    for line in header.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, *rest = line.split()
        if key == "kernel":
            spec.name = rest[0]
        elif key == "vlen":
            spec.vlen_bits = int(rest[0])
        elif key == "fuel":
            spec.fuel = int(rest[0])
        elif key == "xreg":
            spec.xregs[int(rest[0], 0)] = int(rest[1], 0)
        elif key == "freg":
            spec.fregs[int(rest[0], 0)] = int(rest[1], 0)
        elif key == "mem":
            spec.mem[int(rest[0], 0)] = bytes.fromhex(rest[1])
        elif key == "window":
            spec.windows.append((int(rest[0], 0), int(rest[1], 0)))
        else:
            raise ValueError(f"unknown manifest key {key!r}")
    return spec


# ---------------------------------------------------------------------------
# differential comparison


@dataclass(frozen=True)
class Mismatch:
    kind: str  # "mem" | "xreg" | "freg"
    where: str
    expected: str
    actual: str

    def render(self) -> str:
        return f"{self.kind} {self.where}: expected {self.expected}, got {self.actual}"


@dataclass
class Report:
    name: str
    strategy: Strategy
    status: str  # matched | mismatched | translation-error | run-error-v10 | run-error-v071
    diagnostics: list[Diagnostic] = field(default_factory=list)
    mismatches: list[Mismatch] = field(default_factory=list)
    consumed_scratch: set[int] = field(default_factory=set)
    error: str | None = None
    steps_v10: int = 0
    steps_v071: int = 0
    translation: TranslationResult | None = None

    @property
    def matched(self) -> bool:
        return self.status == "matched"

    @property
    def predicted(self) -> bool:
        """A mismatch counts as predicted when translation warned that the
        dropped tail policy changes observable values."""
        return any(d.code == W_TAIL_UNDISTURBED for d in self.diagnostics)

    @property
    def passed(self) -> bool:
        """Byte-identical observation windows and scalar registers.

        Predicted mismatches (``predicted``) are still failures; the
        prediction only tells the harness the divergence was warned about.
        """
        return self.matched

    def summary_line(self) -> str:
        extra = ""
        if self.status == "mismatched":
            extra = f" ({len(self.mismatches)} site(s){', predicted' if self.predicted else ''})"
        elif self.error:
            extra = f" ({self.error})"
        return f"{self.name}: {self.status}{extra}"


def compare_states(
    spec: KernelSpec,
    v10: MachineState,
    v071: MachineState,
    exclude_xregs: set[int] = frozenset(),
) -> list[Mismatch]:
    out: list[Mismatch] = []
    for addr, size in spec.windows:
        a = v10.mem.read(addr, size)
        b = v071.mem.read(addr, size)
        if a != b:
            # report the first differing span, not the whole window
            lo = next(i for i in range(size) if a[i] != b[i])
            hi = max(i for i in range(size) if a[i] != b[i]) + 1
            out.append(
                Mismatch(
                    "mem",
                    f"[{addr + lo:#x}..{addr + hi:#x})",
                    a[lo:hi].hex(),
                    b[lo:hi].hex(),
                )
            )
    for i in range(1, 32):
        if i in exclude_xregs:
            continue
        if v10.xregs[i] != v071.xregs[i]:
            out.append(
                Mismatch("xreg", XREG_ABI[i], f"{v10.xregs[i]:#x}", f"{v071.xregs[i]:#x}")
            )
    for i in range(32):
        if v10.fregs[i] != v071.fregs[i]:
            out.append(
                Mismatch("freg", f"f{i}", f"{v10.fregs[i]:#010x}", f"{v071.fregs[i]:#010x}")
            )
    return out


def differential_check(
    spec: KernelSpec,
    strategy: Strategy = Strategy.AUTO,
    eliminate_redundant: bool = False,
    hostile: bool = False,
    cfg: TargetConfig | None = None,
) -> Report:
    cfg = cfg or TargetConfig(vlen_bits=spec.vlen_bits)
    unit = parse_source(spec.source, name=spec.name)
    result = translate_program(
        unit, cfg, strategy, eliminate_redundant=eliminate_redundant
    )
    report = Report(
        name=spec.name,
        strategy=strategy,
        status="matched",
        diagnostics=result.diagnostics,
        consumed_scratch=result.consumed_scratch,
        translation=result,
    )
    if not result.ok:
        report.status = "translation-error"
        report.error = "; ".join(
            d.message for d in result.diagnostics if d.severity is Severity.ERROR
        )
        return report
    try:
        v10_state, report.steps_v10 = run_kernel(spec, IsaVersion.V10, unit, hostile)
    except EmuError as e:
        report.status = "run-error-v10"
        report.error = str(e)
        return report
    try:
        v071_state, report.steps_v071 = run_kernel(
            spec, IsaVersion.V071, result.unit
        )
    except EmuError as e:
        report.status = "run-error-v071"
        report.error = str(e)
        return report
    report.mismatches = compare_states(
        spec, v10_state, v071_state, exclude_xregs=result.consumed_scratch
    )
    if report.mismatches:
        report.status = "mismatched"
    return report


# ---------------------------------------------------------------------------
# generator


@dataclass
class GenParams:
    vlen_bits: int = 128
    mode: str = "auto"  # auto | straight | loop | tail | wide
    max_segments: int = 3


def _nice_f32(r: random.Random) -> float:
    return struct.unpack("<f", struct.pack("<f", r.randint(-64, 64) / 4.0))[0]


def _data_block(r: random.Random) -> bytes:
    vals = [_nice_f32(r) for _ in range(DATA_BYTES // 4)]
    return struct.pack(f"<{len(vals)}f", *vals)


class _Emitter:
    def __init__(self):
        self.lines: list[str] = []

    def op(self, text: str) -> None:
        self.lines.append("\t" + text)

    def label(self, name: str) -> None:
        self.lines.append(name + ":")

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def _gen_straight_segment(
    r: random.Random, e: _Emitter, out_addr: int, windows: list, vlen: int
) -> None:
    sew = r.choice([8, 16, 32, 32])  # lean toward the float-capable width
    lmul = r.choice([1, 1, 2])
    vlmax = vlen * lmul // sew
    avl = r.randint(2, 2 * vlmax)
    esize = sew // 8
    with_policy = r.choice(["", "", ", ta, ma", ", ta", ", ma"])
    use_ivli = avl <= 31 and r.random() < 0.25
    if use_ivli:
        e.op(f"vsetivli t1, {avl}, e{sew}, m{lmul}{with_policy}")
    else:
        e.op(f"li a0, {avl}")
        e.op(f"vsetvli t1, a0, e{sew}, m{lmul}{with_policy}")
    vl = min(avl, vlmax)
    step = lmul  # group stride in register numbers
    v_in0, v_in1, v_res = 2, 2 + step, 2 + 2 * step
    e.op(f"vle{sew}.v v{v_in0}, (a1)")
    e.op(f"vle{sew}.v v{v_in1}, (a2)")
    n_ops = r.randint(1, 3)
    masked = ""
    for _ in range(n_ops):
        kind = r.choice(["int", "int", "float" if sew == 32 else "int", "mask"])
        if kind == "int":
            mnem = r.choice(["vadd.vv", "vsub.vv", "vand.vv", "vor.vv", "vxor.vv"])
            e.op(f"{mnem} v{v_res}, v{v_in0}, v{v_in1}{masked}")
        elif kind == "float":
            mnem = r.choice(["vfadd.vv", "vfmul.vv", "vfsub.vv"])
            e.op(f"{mnem} v{v_res}, v{v_in0}, v{v_in1}{masked}")
        else:
            e.op(f"li t0, {r.randint(-16, 16)}")
            e.op(f"vmslt.vx v0, v{v_in0}, t0")
            e.op(f"vadd.vv v{v_res}, v{v_in0}, v{v_in1}")
            masked = ", v0.t"
            continue
        v_in0 = v_res  # chain results
    e.op(f"vse{sew}.v v{v_res}, (a3)")
    windows.append((out_addr, vl * esize))
    flavor = r.random()
    if flavor < 0.18:
        e.op("csrr a4, vlenb")
        e.op(f"sd a4, {vl * esize}(a3)")
        windows.append((out_addr + vl * esize, 8))
    elif flavor < 0.36:
        e.op(f"vmv.x.s a5, v{v_res}")
        e.op(f"sd a5, {vl * esize}(a3)")
        windows.append((out_addr + vl * esize, 8))
    elif flavor < 0.5:
        e.op(f"vmslt.vx v0, v{v_res}, zero")
        dest = r.choice(["vcpop.m", "vfirst.m"])
        e.op(f"{dest} a4, v0")
        e.op(f"sd a4, {vl * esize}(a3)")
        windows.append((out_addr + vl * esize, 8))
    elif flavor < 0.6:
        e.op("vl1r.v v8, (a1)")
        e.op(f"addi a5, a3, {vl * esize}")
        e.op("vs1r.v v8, (a5)")
        windows.append((out_addr + vl * esize, vlen // 8))


def _gen_mask_segment(r: random.Random, e: _Emitter, out_addr: int, windows: list, vlen: int) -> None:
    sew = r.choice([16, 32])
    vlmax = vlen // sew
    avl = r.randint(2, vlmax)
    esize = sew // 8
    e.op(f"li a0, {avl}")
    e.op(f"vsetvli t1, a0, e{sew}, m1")
    e.op(f"vle{sew}.v v2, (a1)")
    e.op(f"vle{sew}.v v3, (a2)")
    e.op(f"li t0, {r.randint(-8, 8)}")
    e.op("vmslt.vx v4, v2, t0")
    e.op("vmseq.vv v5, v2, v3")
    mnem = r.choice(["vmandn.mm", "vmorn.mm", "vmand.mm", "vmxor.mm"])
    e.op(f"{mnem} v0, v4, v5")
    e.op("vcpop.m a4, v0")
    e.op("vfirst.m a5, v0")
    e.op("vadd.vv v6, v2, v3, v0.t" if r.random() < 0.7 else "vmv.v.i v6, 3")
    e.op(f"vse{sew}.v v6, (a3)")
    e.op(f"sd a4, {avl * esize}(a3)")
    e.op(f"sd a5, {avl * esize + 8}(a3)")
    windows.append((out_addr, min(avl, vlmax) * esize))
    windows.append((out_addr + avl * esize, 16))


def _gen_reduce_segment(r: random.Random, e: _Emitter, out_addr: int, windows: list, vlen: int) -> None:
    vlmax = vlen // 32
    avl = r.randint(2, vlmax)
    e.op(f"li a0, {avl}")
    e.op("vsetvli t1, a0, e32, m1")
    e.op("vle32.v v2, (a1)")
    e.op("vmv.v.i v3, 0")
    which = r.choice(["int", "fred", "fwred"])
    if which == "int":
        e.op("vredsum.vs v4, v2, v3")
        e.op("vmv.x.s a4, v4")
        e.op("sd a4, 0(a3)")
        windows.append((out_addr, 8))
    elif which == "fred":
        e.op("vfredusum.vs v4, v2, v3")
        e.op("vfmv.f.s fa0, v4")
        e.op("fsw fa0, 0(a3)")
        windows.append((out_addr, 4))
    else:
        e.op("vfwredusum.vs v4, v2, v3")
        # view the doubled-width total as two words for the store
        e.op("li t0, 2")
        e.op("vsetvli zero, t0, e32, m1")
        e.op("vse32.v v4, (a3)")
        windows.append((out_addr, 8))


def _gen_loop(r: random.Random, e: _Emitter, name: str, windows: list, vlen: int) -> dict:
    n = r.randint(5, 24)
    e.op(f"li a0, {n}")
    e.op("flw fa0, 0(a2)")
    e.label(name)
    e.op("vsetvli t1, a0, e32, m1, ta, ma")
    e.op("vle32.v v2, (a1)")
    e.op("vle32.v v3, (a3)")
    e.op("vfmacc.vf v3, fa0, v2")
    e.op("vse32.v v3, (a3)")
    e.op("slli t0, t1, 2")
    e.op("add a1, a1, t0")
    e.op("add a3, a3, t0")
    e.op("sub a0, a0, t1")
    e.op(f"bnez a0, {name}")
    windows.append((OUT, n * 4))
    return {}


def _gen_tail_observe(r: random.Random, e: _Emitter, windows: list, vlen: int) -> None:
    """Shrink vl under tail-undisturbed, then store across the old length:
    v1.0 keeps the upper elements from the first load, v0.7.1 zeroes them.
    Uses m2 so the full length spans two registers and the tail is real."""
    full = 2 * vlen // 32
    short = full // 2
    e.op(f"li a0, {full}")
    e.op("vsetvli t1, a0, e32, m2, ta, ma")
    e.op("vle32.v v2, (a1)")
    e.op(f"li a0, {short}")
    e.op("vsetvli t1, a0, e32, m2, tu, mu")
    e.op("vadd.vv v2, v2, v2")
    e.op(f"li a0, {full}")
    e.op("vsetvli t1, a0, e32, m2, ta, ma")
    e.op("vse32.v v2, (a3)")
    windows.append((OUT, full * 4))


def generate_kernel(seed: int, params: GenParams | None = None) -> KernelSpec:
    params = params or GenParams()
    r = random.Random(seed)
    vlen = params.vlen_bits
    mode = params.mode
    if mode == "auto":
        if seed >= TAIL_SEED_BASE:
            mode = "tail"
        else:
            roll = seed % 10
            if roll in (3, 8):
                mode = "loop"
            elif roll == 5:
                mode = "wide"
            else:
                mode = "straight"
    e = _Emitter()
    windows: list[tuple[int, int]] = []
    name = f"gen-{mode}-{seed:05d}"
    e.lines.append(f"# {name}: generated differential kernel")
    e.label("entry")
    e.op("li a1, %d" % IN0)
    e.op("li a2, %d" % IN1)
    e.op("li a3, %d" % OUT)
    if mode == "loop":
        _gen_loop(r, e, f"loop{seed % 97}", windows, vlen)
    elif mode == "tail":
        _gen_tail_observe(r, e, windows, vlen)
    elif mode == "wide":
        _gen_reduce_segment(r, e, OUT, windows, vlen)
        e.op("addi a3, a3, 64")
        _gen_mask_segment(r, e, OUT + 64, windows, vlen)
    else:
        n_segs = r.randint(1, params.max_segments)
        for seg in range(n_segs):
            out_addr = OUT + seg * 0x80
            if seg:
                e.op(f"li a3, {out_addr}")
                e.op(f"li a1, {IN0}")
                e.op(f"li a2, {IN1}")
            kind = r.random()
            if kind < 0.6:
                _gen_straight_segment(r, e, out_addr, windows, vlen)
            elif kind < 0.8:
                _gen_mask_segment(r, e, out_addr, windows, vlen)
            else:
                _gen_reduce_segment(r, e, out_addr, windows, vlen)
    e.op("ret")
    spec = KernelSpec(name=name, source=e.text(), vlen_bits=vlen)
    spec.mem[STACK_BASE] = bytes(STACK_TOP - STACK_BASE)
    spec.mem[IN0] = _data_block(r)
    spec.mem[IN1] = _data_block(r)
    out_span = max((a + s for a, s in windows), default=OUT + DATA_BYTES) - OUT
    spec.mem[OUT] = bytes(max(out_span, DATA_BYTES))
    spec.xregs[2] = STACK_TOP
    spec.windows = windows
    return spec
