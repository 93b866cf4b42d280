"""Top-level acceptance checks, one verdict line per criterion.

Each test prints exactly one PASS/FAIL line (bypassing pytest capture so the
lines appear in plain test logs) and then asserts.  Budgets are wall-clock
and generous for CI noise: the corpus pass must finish inside 1 s, the
200-kernel differential sweep inside 30 s.
"""

from __future__ import annotations

import csv
import os
import struct
import subprocess
import sys
import time
from pathlib import Path

import pytest

from rvvback.asmtext import emit_source, parse_bytes, parse_source
from rvvback.configflow import find_redundant_configs
from rvvback.emulator import IsaVersion, MachineState, exec_program
from rvvback.isa import TargetConfig
from rvvback.kernels import (
    TAIL_SEED_BASE,
    KernelSpec,
    differential_check,
    generate_kernel,
)
from rvvback.translate import Strategy, translate_program, verify_v071_purity

REPO = Path(__file__).resolve().parents[1]
CORPUS = sorted((REPO / "corpus").glob("*.s"))
DATA = Path(__file__).resolve().parent / "data"

SWEEP_SEEDS = range(42, 242)          # 200 kernels
SWEEP_BUDGET_SECONDS = 30.0
CORPUS_BUDGET_SECONDS = 1.0


def _verdict(capfd, criterion: str, ok: bool, detail: str = "") -> None:
    line = f"{'PASS' if ok else 'FAIL'} {criterion}"
    if detail:
        line += f" ({detail})"
    with capfd.disabled():
        print(line, flush=True)
    assert ok, line


def _sweep_reports():
    # computed once, shared by the sweep/equivalence/prediction criteria
    if not hasattr(_sweep_reports, "cache"):
        t0 = time.monotonic()
        reports = [differential_check(generate_kernel(s)) for s in SWEEP_SEEDS]
        _sweep_reports.cache = (reports, time.monotonic() - t0)
    return _sweep_reports.cache


def test_criterion_corpus_translates_clean_and_pure(capfd):
    t0 = time.monotonic()
    failures = []
    for path in CORPUS:
        for strategy in Strategy:
            unit = parse_source(path.read_text(), name=str(path))
            res = translate_program(unit, strategy=strategy)
            errs = [d for d in res.diagnostics if d.severity.value == "error"]
            impure = verify_v071_purity(res.unit)
            if errs or impure:
                failures.append((path.name, strategy.value, errs, impure))
    elapsed = time.monotonic() - t0
    ok = not failures and elapsed < CORPUS_BUDGET_SECONDS
    _verdict(capfd, "corpus-clean-translation",
        ok,
        f"{len(CORPUS)} files x 3 strategies in {elapsed:.2f}s"
        + (f"; failures: {failures}" if failures else ""),
    )


def test_criterion_differential_sweep_200_kernels(capfd):
    reports, elapsed = _sweep_reports()
    bad = [r.summary_line() for r in reports if not r.matched]
    ok = not bad and elapsed < SWEEP_BUDGET_SECONDS
    _verdict(capfd, "differential-sweep",
        ok,
        f"{len(reports) - len(bad)}/{len(reports)} bit-exact in {elapsed:.1f}s"
        + (f"; failed: {bad[:3]}" if bad else ""),
    )


def test_criterion_strategy_equivalence(capfd):
    problems = []
    for seed in range(42, 142):
        spec = generate_kernel(seed)
        auto = differential_check(spec, Strategy.AUTO)
        mem = differential_check(spec, Strategy.MEMORY)
        reg = differential_check(spec, Strategy.REGISTER)
        if not (auto.passed and mem.passed):
            problems.append((seed, "auto/memory failed"))
            continue
        if auto.status != mem.status:
            problems.append((seed, f"status {auto.status} != {mem.status}"))
        if reg.passed:
            if reg.status != auto.status:
                problems.append((seed, f"register status {reg.status}"))
        else:
            codes = {d.code for d in reg.diagnostics
                     if d.severity.value == "error"}
            if codes != {"E_NO_SCRATCH"}:
                problems.append((seed, f"register failed with {codes}"))
    _verdict(capfd, "strategy-equivalence", not problems,
             "100 seeds x 3 strategies" + (f"; {problems[:3]}" if problems else ""))


RENAME_KERNELS = {
    "vfredusum.vs": (
        "\tli a0, 4\n\tli a1, 0x2000\n"
        "\tvsetvli t0, a0, e32, m1, ta, ma\n"
        "\tvle32.v v4, 0(a1)\n"
        "\tvmv.v.i v8, 0\n"
        "\tvfredusum.vs v12, v4, v8\n"
        "\tvfmv.f.s fa0, v12\n"
        "\tret\n"
    ),
    "vfwredusum.vs": (
        "\tli a0, 4\n\tli a1, 0x2000\n"
        "\tvsetvli t0, a0, e32, m1, ta, ma\n"
        "\tvle32.v v4, 0(a1)\n"
        "\tvmv.v.i v8, 0\n"
        "\tvfwredusum.vs v12, v4, v8\n"
        "\tret\n"
    ),
    "vcpop.m": (
        "\tli a0, 4\n\tli a1, 0x2000\n\tli a2, 0x3000\n"
        "\tvsetvli t0, a0, e32, m1, ta, ma\n"
        "\tvle32.v v4, 0(a1)\n"
        "\tvle32.v v8, 0(a2)\n"
        "\tvmseq.vv v0, v4, v8\n"
        "\tvcpop.m a3, v0\n"
        "\tret\n"
    ),
    "vfirst.m": (
        "\tli a0, 4\n\tli a1, 0x2000\n\tli a2, 0x3000\n"
        "\tvsetvli t0, a0, e32, m1, ta, ma\n"
        "\tvle32.v v4, 0(a1)\n"
        "\tvle32.v v8, 0(a2)\n"
        "\tvmseq.vv v0, v4, v8\n"
        "\tvfirst.m a3, v0\n"
        "\tret\n"
    ),
    "vmandn.mm": (
        "\tli a0, 4\n\tli a1, 0x2000\n\tli a2, 0x3000\n"
        "\tvsetvli t0, a0, e32, m1, ta, ma\n"
        "\tvle32.v v4, 0(a1)\n"
        "\tvle32.v v8, 0(a2)\n"
        "\tvmseq.vv v1, v4, v4\n"
        "\tvmseq.vv v2, v4, v8\n"
        "\tvmandn.mm v0, v1, v2\n"
        "\tvcpop.m a3, v0\n"
        "\tret\n"
    ),
    "vmorn.mm": (
        "\tli a0, 4\n\tli a1, 0x2000\n\tli a2, 0x3000\n"
        "\tvsetvli t0, a0, e32, m1, ta, ma\n"
        "\tvle32.v v4, 0(a1)\n"
        "\tvle32.v v8, 0(a2)\n"
        "\tvmseq.vv v1, v4, v8\n"
        "\tvmseq.vv v2, v8, v8\n"
        "\tvmorn.mm v0, v1, v2\n"
        "\tvcpop.m a3, v0\n"
        "\tret\n"
    ),
}


def test_criterion_rename_fidelity(capfd):
    # textual goldens first
    problems = []
    goldens = [
        ("\tvfredusum.vs v1, v2, v3\n\tret\n", "\tvfredsum.vs v1, v2, v3"),
        ("\tvcpop.m a0, v4\n\tret\n", "\tvpopc.m a0, v4"),
        ("\tvfirst.m a0, v4\n\tret\n", "\tvmfirst.m a0, v4"),
        ("\tvmandn.mm v1, v2, v3\n\tret\n", "\tvmandnot.mm v1, v2, v3"),
        ("\tvmorn.mm v1, v2, v3\n\tret\n", "\tvmornot.mm v1, v2, v3"),
        ("\tvfwredusum.vs v1, v2, v3\n\tret\n", "\tvfwredsum.vs v1, v2, v3"),
    ]
    for src, want in goldens:
        res = translate_program(parse_source(src))
        if want not in emit_source(res.unit):
            problems.append(f"golden missing {want.strip()}")
    # then run every renamed mnemonic through the interpreter pair
    mem = {
        0x2000: struct.pack("<4f", 1.0, 2.0, 3.0, 4.0),
        0x3000: struct.pack("<4f", 1.0, 9.0, 3.0, 9.0),
    }
    for name, src in RENAME_KERNELS.items():
        spec = KernelSpec(name=f"rename-{name}", source=src, mem=dict(mem),
                          windows=[])
        rep = differential_check(spec)
        if rep.status != "matched":
            problems.append(f"{name}: {rep.summary_line()}")
    _verdict(capfd, "rename-fidelity", not problems,
             "6 goldens + 6 executed kernels"
             + (f"; {problems[:3]}" if problems else ""))


def test_criterion_fractional_lmul_error_location(capfd):
    proc = subprocess.run(
        [sys.executable, "-m", "rvvback.cli", "translate", str(DATA / "frac.s")],
        capture_output=True, text=True,
    )
    wanted = "frac.s:6: error[E_FRACTIONAL_LMUL]"
    ok = proc.returncode == 1 and wanted in proc.stderr
    _verdict(capfd, "fractional-lmul-location", ok,
             f"exit={proc.returncode}, message pinned to line 6")


def test_criterion_redundancy_detection_and_elimination(capfd):
    problems = []
    # detection: exactly the five marked sites, none of the near misses
    path = DATA / "redundant5.s"
    unit = parse_source(path.read_text(), name=str(path))
    found = sorted(unit.items[s.index].loc.line
                   for s in find_redundant_configs(unit))
    if found != [7, 9, 13, 20, 28]:
        problems.append(f"marked sites: {found}")
    # elimination keeps the runnable fixture's behaviour
    src = (DATA / "redundant_exec.s").read_text()
    spec = KernelSpec(
        name="redundant-exec",
        source=src,
        mem={0x2000: struct.pack("<8i", *range(1, 9)), 0x4000: bytes(32)},
        windows=[(0x4000, 32)],
    )
    rep = differential_check(spec, eliminate_redundant=True)
    if rep.status != "matched":
        problems.append(f"fixture: {rep.summary_line()}")
    # and the generated kernels agree with themselves under elimination
    for seed in range(42, 92):
        rep = differential_check(generate_kernel(seed), eliminate_redundant=True)
        if not rep.passed:
            problems.append(f"seed {seed}: {rep.summary_line()}")
            break
    _verdict(capfd, "redundancy-detection-and-elimination", not problems,
             "5 sites, 5 near-misses kept, 50 eliminated kernels"
             + (f"; {problems[:3]}" if problems else ""))


def test_criterion_mismatches_always_predicted(capfd):
    # suite = the default sweep plus the tail class, so tu-configured
    # instructions with observed tails are definitely represented
    reports, _elapsed = _sweep_reports()
    tail = [differential_check(generate_kernel(s))
            for s in range(TAIL_SEED_BASE, TAIL_SEED_BASE + 20)]
    mismatched = [r for r in reports + tail if r.status == "mismatched"]
    unpredicted = [r.summary_line() for r in mismatched if not r.predicted]
    ok = not unpredicted and len(mismatched) >= 15
    _verdict(capfd, "tail-mismatch-prediction",
        ok,
        f"{len(mismatched)} observed mismatches, every one carried "
        "W_TAIL_UNDISTURBED" + (f"; unpredicted: {unpredicted[:3]}" if unpredicted else ""),
    )


def test_criterion_configuration_arithmetic(capfd):
    problems = []
    for version, tokens in ((IsaVersion.V10, ", ta, ma"), (IsaVersion.V071, "")):
        for sew in (8, 16, 32, 64):
            for lmul in (1, 2, 4, 8):
                vlmax = lmul * 128 // sew
                for avl in (0, 1, vlmax - 1, vlmax, vlmax + 3, 5 * vlmax):
                    if avl < 0:
                        continue
                    st = MachineState(version)
                    st.xregs[10] = avl
                    exec_program(parse_source(
                        f"\tvsetvli t0, a0, e{sew}, m{lmul}{tokens}\n\tret\n"
                    ), st)
                    if st.vl != min(avl, vlmax):
                        problems.append((version.value, sew, lmul, avl, st.vl))
    # the v0.7.1 tail rule, observed at byte level
    st = MachineState(IsaVersion.V071)
    vlenb = st.vlen_bits // 8
    st.vregs[4 * vlenb:5 * vlenb] = b"\xff" * vlenb
    st.xregs[10] = 4
    st.xregs[7] = 0xFE
    exec_program(parse_source(
        "\tvsetvli t0, a0, e8, m1\n\tvadd.vx v4, v8, t2\n\tret\n"
    ), st)
    got = bytes(st.vregs[4 * vlenb:5 * vlenb])
    if got != b"\xfe" * 4 + b"\x00" * 12:
        problems.append(("tail-zero", got.hex()))
    _verdict(capfd, "configuration-arithmetic", not problems,
             "vl = min(AVL, VLMAX) over 2 versions x 4 SEW x 4 LMUL x 6 AVL; "
             "tails zeroed on v0.7.1"
             + (f"; {problems[:3]}" if problems else ""))


def test_criterion_text_identity_and_idempotence(capfd):
    problems = []
    for path in CORPUS:
        raw = path.read_bytes()
        if emit_source(parse_bytes(raw, name=str(path))).encode() != raw:
            problems.append(f"roundtrip {path.name}")
    for path in CORPUS:
        unit = parse_source(path.read_text(), name=str(path))
        once = emit_source(translate_program(unit).unit)
        res2 = translate_program(parse_source(once))
        if emit_source(res2.unit) != once or res2.diagnostics:
            problems.append(f"idempotence {path.name}")
    _verdict(capfd, "text-identity-and-idempotence", not problems,
             f"{len(CORPUS)} files emit=parse^-1, translate o translate = translate"
             + (f"; {problems[:4]}" if problems else ""))


def test_criterion_pipeline_stages(tmp_path, capfd):
    cc = tmp_path / "fakecc"
    asm = tmp_path / "fakeas"
    cc.write_text(
        "#!/bin/sh\nout=\"\"\nwhile [ $# -gt 0 ]; do\n"
        "  if [ \"$1\" = \"-o\" ]; then out=\"$2\"; shift; fi\n  shift\ndone\n"
        "printf '\\tvsetvli t0, a0, e32, m1, ta, ma\\n\\tret\\n' > \"$out\"\n"
    )
    asm.write_text(
        "#!/bin/sh\nin=\"\"\nout=\"\"\nwhile [ $# -gt 0 ]; do\n"
        "  case \"$1\" in\n    -o) out=\"$2\"; shift ;;\n    *) in=\"$1\" ;;\n"
        "  esac\n  shift\ndone\ncp \"$in\" \"$out\"\n"
    )
    cc.chmod(0o755)
    asm.chmod(0o755)
    csrc = tmp_path / "k.c"
    csrc.write_text("void f(void) {}\n")
    env = dict(os.environ, RVVB_CC=str(cc), RVVB_AS=str(asm))
    proc = subprocess.run(
        [sys.executable, "-m", "rvvback.cli", "pipeline", str(csrc),
         "-o", str(tmp_path / "k.o"), "--vlen", "128"],
        capture_output=True, text=True, env=env, cwd=tmp_path,
    )
    log = proc.stderr
    stages_ordered = (
        "pipeline[1/3] compile:" in log
        and "pipeline[2/3] translate:" in log
        and "pipeline[3/3] assemble:" in log
        and log.index("[1/3]") < log.index("[2/3]") < log.index("[3/3]")
    )
    ok = (
        proc.returncode == 0
        and stages_ordered
        and "--riscv-v-vector-bits-min=128" in log
        and (tmp_path / "k.v10.s").exists()
        and (tmp_path / "k.rvv071.s").exists()
        and (tmp_path / "k.o").exists()
    )
    _verdict(capfd, "pipeline-stages", ok,
             "3 logged stages in order, width preset pinned, intermediates kept")


def test_criterion_report_artifacts(tmp_path, capfd):
    proc = subprocess.run(
        [sys.executable, "-m", "rvvback.cli", "difftest", "--trials", "10",
         "--seed", "42", "--report", str(tmp_path / "rep")],
        capture_output=True, text=True, cwd=tmp_path,
    )
    rep = tmp_path / "rep"
    ok = proc.returncode == 0
    rows = []
    if (rep / "difftest.csv").exists():
        with (rep / "difftest.csv").open() as fh:
            rows = list(csv.reader(fh))
    ok = (
        ok
        and len(rows) == 11
        and rows[0][0] == "kernel"
        and (rep / "difftest_status.png").read_bytes()[:4] == b"\x89PNG"
        and (rep / "difftest_diagnostics.png").read_bytes()[:4] == b"\x89PNG"
    )
    _verdict(capfd, "report-artifacts", ok,
             "delimited trial table plus rendered figures next to it")
