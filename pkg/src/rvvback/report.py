"""Report rendering: delimited summaries plus figures.

Both the checker and the differential harness can drop a report
directory: a CSV with one row per unit of work and PNG charts
summarizing outcome and diagnostic mix.  Figures use the Agg backend so
rendering works headless; matplotlib is imported lazily to keep the
library importable without a display stack.
"""

from __future__ import annotations

import csv
from collections import Counter
from pathlib import Path

from .diagnostics import Diagnostic, Severity
from .kernels import Report

DIFFTEST_COLUMNS = [
    "kernel",
    "strategy",
    "status",
    "passed",
    "predicted",
    "mismatches",
    "errors",
    "warnings",
    "notes",
    "steps_v10",
    "steps_v071",
]

CHECK_COLUMNS = ["file", "errors", "warnings", "notes", "worst", "codes"]


def _severity_counts(diags: list[Diagnostic]) -> tuple[int, int, int]:
    e = sum(1 for d in diags if d.severity is Severity.ERROR)
    w = sum(1 for d in diags if d.severity is Severity.WARNING)
    n = sum(1 for d in diags if d.severity is Severity.NOTE)
    return e, w, n


def difftest_rows(reports: list[Report]) -> list[list]:
    rows = []
    for r in reports:
        e, w, n = _severity_counts(r.diagnostics)
        rows.append(
            [
                r.name,
                r.strategy.value,
                r.status,
                int(r.passed),
                int(r.predicted),
                len(r.mismatches),
                e,
                w,
                n,
                r.steps_v10,
                r.steps_v071,
            ]
        )
    return rows


def check_rows(entries: list[tuple[str, list[Diagnostic]]]) -> list[list]:
    rows = []
    for path, diags in entries:
        e, w, n = _severity_counts(diags)
        worst = "clean"
        if e:
            worst = "error"
        elif w:
            worst = "warning"
        elif n:
            worst = "note"
        codes = " ".join(sorted({d.code for d in diags}))
        rows.append([path, e, w, n, worst, codes])
    return rows


def write_csv(path: Path, columns: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _bar_figure(path: Path, counts: Counter, title: str, color: str) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7, 3.5))
    keys = sorted(counts)
    ax.bar(range(len(keys)), [counts[k] for k in keys], color=color)
    ax.set_xticks(range(len(keys)))
    ax.set_xticklabels(keys, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("count")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_difftest_report(
    reports: list[Report], out_dir: Path, basename: str = "difftest"
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out_dir / f"{basename}.csv"
    write_csv(csv_path, DIFFTEST_COLUMNS, difftest_rows(reports))
    written.append(csv_path)
    status_png = out_dir / f"{basename}_status.png"
    _bar_figure(
        status_png,
        Counter(r.status for r in reports),
        f"differential outcomes over {len(reports)} kernel(s)",
        "#4878cf",
    )
    written.append(status_png)
    diag_png = out_dir / f"{basename}_diagnostics.png"
    _bar_figure(
        diag_png,
        Counter(d.code for r in reports for d in r.diagnostics),
        "diagnostic codes emitted during translation",
        "#d1894b",
    )
    written.append(diag_png)
    return written


def write_check_report(
    entries: list[tuple[str, list[Diagnostic]]], out_dir: Path, basename: str = "check"
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out_dir / f"{basename}.csv"
    write_csv(csv_path, CHECK_COLUMNS, check_rows(entries))
    written.append(csv_path)
    diag_png = out_dir / f"{basename}_diagnostics.png"
    _bar_figure(
        diag_png,
        Counter(d.code for _, diags in entries for d in diags),
        f"diagnostic codes across {len(entries)} file(s)",
        "#d1894b",
    )
    written.append(diag_png)
    return written
