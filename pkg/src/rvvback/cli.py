"""Command-line front end.

Subcommands:

- ``translate``: rewrite one file, diagnostics to stderr.
- ``check``: dry-run over many files, no outputs, optional report dir.
- ``difftest``: generate kernels and differential-test the translator
  against the embedded dual-version interpreter.
- ``pipeline``: compile C with an external v1.0 compiler, translate the
  assembly, and hand the result to an external v0.7.1 assembler.

Exit codes are a function of what was diagnosed: 0 clean, 1 translation
errors (unsupported constructs), 2 usage/input/tool problems, 3 warnings
present under ``--strict-warnings``.
"""

from __future__ import annotations

import argparse
import os
import shlex
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

from . import __version__
from . import diagnostics as dc
from .asmtext import SourceEncodingError, emit_source, parse_bytes
from .isa import Catalog, TargetConfig, default_catalog
from .kernels import differential_check, generate_kernel, to_manifest
from .translate import Strategy, translate_program

EXIT_OK = 0
EXIT_TRANSLATION = 1
EXIT_USAGE = 2
EXIT_STRICT_WARNINGS = 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--strategy",
        choices=[s.value for s in Strategy],
        default=Strategy.AUTO.value,
        help="where lowered sequences get temporaries (default: auto)",
    )
    p.add_argument(
        "--vlen",
        type=int,
        default=None,
        metavar="BITS",
        help="target vector register width; omit if unknown at translation time",
    )
    p.add_argument(
        "--elen",
        type=int,
        default=64,
        metavar="BITS",
        help="widest element the target supports (default: 64)",
    )
    p.add_argument(
        "--catalog",
        type=Path,
        default=None,
        metavar="TABLE",
        help="override the built-in mnemonic catalog",
    )
    p.add_argument(
        "--strict-warnings",
        action="store_true",
        help="exit 3 when any warning is emitted",
    )


def _config_from(args) -> TargetConfig:
    return TargetConfig(vlen_bits=args.vlen, elen_bits=args.elen)


def _catalog_from(args) -> Catalog:
    if args.catalog is None:
        return default_catalog()
    return Catalog.from_text(args.catalog.read_text())


def _print_diags(diags, quiet_notes: bool = False) -> None:
    for d in diags:
        if quiet_notes and d.severity is dc.Severity.NOTE:
            continue
        print(d.render(), file=sys.stderr)


def _exit_code(diags, strict_warnings: bool) -> int:
    if dc.has_errors(diags):
        return EXIT_TRANSLATION
    if strict_warnings and dc.has_warnings(diags):
        return EXIT_STRICT_WARNINGS
    return EXIT_OK


def default_output_path(input_path: str) -> str:
    if input_path.endswith(".s"):
        return input_path[: -len(".s")] + ".rvv071.s"
    return input_path + ".rvv071.s"


def _write_atomic(path: str, data: str) -> None:
    """Land the output with a rename so readers never see half a file."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".rvvback.", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _read_unit(path: str):
    if path == "-":
        data = sys.stdin.buffer.read()
        return parse_bytes(data, name="<stdin>")
    with open(path, "rb") as fh:
        return parse_bytes(fh.read(), name=path)


def cmd_translate(args) -> int:
    try:
        unit = _read_unit(args.input)
    except OSError as e:
        print(f"rvvback: cannot read {args.input}: {e.strerror}", file=sys.stderr)
        return EXIT_USAGE
    except SourceEncodingError as e:
        print(e.diagnostic.render(), file=sys.stderr)
        return EXIT_USAGE
    result = translate_program(
        unit,
        _config_from(args),
        Strategy(args.strategy),
        eliminate_redundant=args.eliminate_redundant,
        catalog=_catalog_from(args),
    )
    _print_diags(result.diagnostics, quiet_notes=args.quiet)
    code = _exit_code(result.diagnostics, args.strict_warnings)
    if code == EXIT_TRANSLATION:
        print("rvvback: translation errors; no output written", file=sys.stderr)
        return code
    text = emit_source(result.unit)
    out = args.output or (
        "-" if args.input == "-" else default_output_path(args.input)
    )
    if out == "-":
        sys.stdout.write(text)
    else:
        try:
            _write_atomic(out, text)
        except OSError as e:
            print(f"rvvback: cannot write {out}: {e.strerror}", file=sys.stderr)
            return EXIT_USAGE
        if args.verbose:
            print(f"rvvback: wrote {out}", file=sys.stderr)
    return code


def cmd_check(args) -> int:
    entries = []
    all_diags = []
    io_trouble = False
    for path in args.inputs:
        try:
            unit = _read_unit(path)
        except OSError as e:
            print(f"rvvback: cannot read {path}: {e.strerror}", file=sys.stderr)
            io_trouble = True
            continue
        except SourceEncodingError as e:
            print(e.diagnostic.render(), file=sys.stderr)
            io_trouble = True
            continue
        result = translate_program(
            unit,
            _config_from(args),
            Strategy(args.strategy),
            catalog=_catalog_from(args),
        )
        _print_diags(result.diagnostics, quiet_notes=args.quiet)
        entries.append((path, result.diagnostics))
        all_diags.extend(result.diagnostics)
    for path, diags in entries:
        e = sum(1 for d in diags if d.severity is dc.Severity.ERROR)
        w = sum(1 for d in diags if d.severity is dc.Severity.WARNING)
        verdict = "clean" if not (e or w) else f"{e} error(s), {w} warning(s)"
        print(f"{path}: {verdict}")
    if args.report:
        from .report import write_check_report

        for p in write_check_report(entries, args.report):
            print(f"rvvback: wrote {p}", file=sys.stderr)
    if io_trouble:
        return EXIT_USAGE
    return _exit_code(all_diags, args.strict_warnings)


def cmd_difftest(args) -> int:
    if args.trials <= 0:
        print("rvvback: --trials must be a positive integer", file=sys.stderr)
        return EXIT_USAGE
    vlen = args.vlen or 128
    reports = []
    failures = []
    for seed in range(args.seed, args.seed + args.trials):
        spec = generate_kernel(seed)
        spec.vlen_bits = vlen
        rep = differential_check(
            spec,
            Strategy(args.strategy),
            eliminate_redundant=args.eliminate_redundant,
            hostile=args.hostile,
            cfg=TargetConfig(vlen_bits=vlen, elen_bits=args.elen),
        )
        reports.append(rep)
        if args.verbose or not rep.passed:
            print(rep.summary_line(), file=sys.stderr)
        if not rep.passed:
            failures.append((seed, spec, rep))
    npass = sum(1 for r in reports if r.passed)
    warned = sum(1 for r in reports if r.status == "mismatched" and r.predicted)
    hard = len(reports) - npass - warned
    print(
        f"{npass}/{len(reports)} pass, "
        f"{warned} mismatched-as-warned, {hard} failed"
    )
    if failures:
        art = Path(args.artifacts)
        art.mkdir(parents=True, exist_ok=True)
        for seed, spec, rep in failures:
            base = art / spec.name
            (base.with_suffix(".v10.s")).write_text(spec.source)
            (base.with_suffix(".manifest")).write_text(to_manifest(spec))
            if rep.translation is not None and rep.translation.ok:
                (base.with_suffix(".rvv071.s")).write_text(
                    emit_source(rep.translation.unit)
                )
            lines = [rep.summary_line()]
            lines += ["  " + m.render() for m in rep.mismatches]
            lines += ["  " + d.render() for d in rep.diagnostics]
            (base.with_suffix(".report.txt")).write_text("\n".join(lines) + "\n")
        print(f"rvvback: failure artifacts under {art}", file=sys.stderr)
    if args.report:
        from .report import write_difftest_report

        for p in write_difftest_report(reports, args.report):
            print(f"rvvback: wrote {p}", file=sys.stderr)
    return EXIT_TRANSLATION if failures else EXIT_OK


VLS_PRESET = (
    "-march=rv64gcv -O3 -ffast-math "
    "-mllvm --riscv-v-vector-bits-min={vlen} -no-integrate-as -S"
)
VLA_PRESET = (
    "-march=rv64gcv -O3 -ffast-math "
    "-mllvm -scalable-vectorization=on -no-integrate-as -S"
)


def _resolve_tool(env_var: str, stage: str) -> list[str] | None:
    value = os.environ.get(env_var)
    if not value:
        print(
            dc.error(
                dc.E_TOOL_MISSING,
                f"stage {stage!r} needs {env_var} to name its tool",
                None,
            ).render(),
            file=sys.stderr,
        )
        return None
    argv = shlex.split(value)
    if shutil.which(argv[0]) is None:
        print(
            dc.error(
                dc.E_TOOL_MISSING,
                f"stage {stage!r}: {argv[0]!r} not found on PATH",
                None,
            ).render(),
            file=sys.stderr,
        )
        return None
    return argv


def _log_stage(n: int, stage: str, argv: list[str]) -> None:
    print(f"pipeline[{n}/3] {stage}: " + " ".join(shlex.quote(a) for a in argv),
          file=sys.stderr)


def cmd_pipeline(args) -> int:
    cc = _resolve_tool("RVVB_CC", "compile")
    asm = _resolve_tool("RVVB_AS", "assemble")
    if cc is None or asm is None:
        return EXIT_USAGE
    vlen = args.vlen or 128
    out = Path(args.output)
    workdir = Path(args.workdir) if args.workdir else out.parent
    workdir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.source).stem
    v10_asm = workdir / f"{stem}.v10.s"
    v071_asm = workdir / f"{stem}.rvv071.s"

    preset = VLS_PRESET.format(vlen=vlen) if args.mode == "vls" else VLA_PRESET
    cc_cmd = cc + shlex.split(preset) + [str(args.source), "-o", str(v10_asm)]
    _log_stage(1, "compile", cc_cmd)
    rc = subprocess.call(cc_cmd)
    if rc != 0:
        print(f"rvvback: compile stage failed with status {rc}", file=sys.stderr)
        return EXIT_USAGE

    translate_cmd = [
        "rvvback", "translate", str(v10_asm), "-o", str(v071_asm),
        "--strategy", args.strategy,
    ]
    if args.vlen:
        translate_cmd += ["--vlen", str(args.vlen)]
    _log_stage(2, "translate", translate_cmd)
    targs = _build_parser().parse_args(translate_cmd[1:])
    rc = cmd_translate(targs)
    if rc not in (EXIT_OK, EXIT_STRICT_WARNINGS):
        print(f"rvvback: translate stage failed with status {rc}", file=sys.stderr)
        return rc

    as_cmd = asm + [str(v071_asm), "-o", str(out)]
    _log_stage(3, "assemble", as_cmd)
    rc = subprocess.call(as_cmd)
    if rc != 0:
        print(f"rvvback: assemble stage failed with status {rc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"rvvback: wrote {out} (intermediates kept in {workdir})", file=sys.stderr)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rvvback",
        description="Backport RISC-V vector assembly from v1.0 to v0.7.1.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("translate", help="rewrite one assembly file")
    p.add_argument("input", help="v1.0 assembly file, or - for stdin")
    p.add_argument("-o", "--output", default=None,
                   help="output path (default: INPUT with a .rvv071.s suffix; - for stdout)")
    p.add_argument("--eliminate-redundant", action="store_true",
                   help="drop vsetvli/vsetivli that re-establish the live configuration")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress notes")
    p.add_argument("-v", "--verbose", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("check", help="diagnose files without writing outputs")
    p.add_argument("inputs", nargs="+", help="assembly files to examine")
    p.add_argument("--report", type=Path, default=None, metavar="DIR",
                   help="write a CSV and charts summarizing the diagnostics")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress notes")
    _add_common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser(
        "difftest",
        help="differential-test generated kernels through the interpreter pair",
    )
    p.add_argument("--seed", type=int, default=0, help="first seed (default: 0)")
    p.add_argument("--trials", type=int, default=100,
                   help="number of consecutive seeds to run (default: 100)")
    p.add_argument("--eliminate-redundant", action="store_true")
    p.add_argument("--hostile", action="store_true",
                   help="model v1.0 hardware that fills agnostic tails with ones")
    p.add_argument("--artifacts", default="difftest-artifacts", metavar="DIR",
                   help="where failing kernels are saved (default: %(default)s)")
    p.add_argument("--report", type=Path, default=None, metavar="DIR",
                   help="write a CSV and charts for the whole run")
    p.add_argument("-v", "--verbose", action="store_true",
                   help="print one line per kernel")
    _add_common(p)
    p.set_defaults(func=cmd_difftest)

    p = sub.add_parser(
        "pipeline",
        help="compile C, translate, assemble (tools from RVVB_CC / RVVB_AS)",
    )
    p.add_argument("source", help="C source file")
    p.add_argument("-o", "--output", required=True, help="object file to produce")
    p.add_argument("--mode", choices=["vls", "vla"], default="vls",
                   help="vectorization preset handed to the compiler (default: vls)")
    p.add_argument("--workdir", default=None, metavar="DIR",
                   help="where intermediates land (default: output directory)")
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as e:
        print(f"rvvback: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
