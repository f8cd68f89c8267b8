"""Writing a RunReport to disk: JSON summary, CSV tables, plot-ready series."""

from __future__ import annotations

import csv
import io
import json
import os
import shutil
import tempfile
from pathlib import Path

from ..eulergen import save_checkpoint
from .config import config_text
from .experiments import RunReport, Table

FORMATS = ("json", "csv", "series", "checkpoints")
DEFAULT_FORMATS = ("json", "csv", "series")


class ReportError(OSError):
    pass


def table_csv(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.header)
    for row in table.rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def report_json(report: RunReport) -> str:
    data = report.to_dict()
    data["config"] = report.config
    data["tables"] = {k: v.to_dict() for k, v in sorted(report.tables.items())}
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def _files(report: RunReport, formats) -> dict[str, str]:
    files = {"config.ini": config_text(report.config),
             "deviations.txt": "".join(d + "\n" for d in report.deviations)}
    if "json" in formats:
        files["report.json"] = report_json(report)
    if "csv" in formats:
        for name, t in report.tables.items():
            files[f"tables/{name}.csv"] = table_csv(t)
    if "series" in formats:
        for name, t in report.series.items():
            files[f"series/{name}.csv"] = table_csv(t)
    return files


def emit_report(report: RunReport, out_dir, formats=DEFAULT_FORMATS) -> list[Path]:
    """Write every file into a temporary sibling directory, then move it into place.

    An existing ``out_dir`` is replaced only after the new content is complete,
    so a failure never leaves a half-written report behind.
    """
    bad = set(formats) - set(FORMATS)
    if bad:
        raise ValueError(f"unknown report formats {sorted(bad)}; choose from {FORMATS}")
    out = Path(out_dir)
    parent = out.parent if str(out.parent) else Path(".")
    try:
        parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=parent))
    except OSError as exc:
        raise ReportError(f"cannot write report under {parent}: {exc}") from None
    try:
        written = []
        for rel, text in sorted(_files(report, formats).items()):
            path = tmp / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
            written.append(out / rel)
        if "checkpoints" in formats:
            (tmp / "checkpoints").mkdir()
            for name, gen in sorted(report.generators.items()):
                save_checkpoint(gen, tmp / "checkpoints" / f"{name}.ckpt")
                written.append(out / "checkpoints" / f"{name}.ckpt")
        old = None
        if out.exists():
            old = Path(tempfile.mkdtemp(prefix=f".{out.name}.old.", dir=parent))
            os.replace(out, old / "prev")
        os.replace(tmp, out)
        if old is not None:
            shutil.rmtree(old, ignore_errors=True)
    except OSError as exc:
        shutil.rmtree(tmp, ignore_errors=True)
        raise ReportError(f"cannot write report to {out}: {exc}") from None
    return written


def render(report_dir) -> str:
    """Plain-text rendering of every table in an emitted report directory."""
    root = Path(report_dir)
    if not (root / "report.json").exists() and not (root / "tables").exists():
        raise ReportError(f"{root}: not a report directory")
    parts = []
    if (root / "report.json").exists():
        data = json.loads((root / "report.json").read_text())
        parts.append(f"experiment {data['kind']}  config {data['config_hash']}  seeds {data['seeds']}")
    for path in sorted((root / "tables").glob("*.csv")) if (root / "tables").exists() else []:
        rows = list(csv.reader(path.open()))
        parts.append(f"\n[{path.stem}]")
        if rows:
            widths = [max(len(_short(r[i])) for r in rows if i < len(r)) for i in range(len(rows[0]))]
            for r in rows:
                parts.append("  ".join(_short(v).ljust(w) for v, w in zip(r, widths)))
    dev = root / "deviations.txt"
    if dev.exists() and dev.read_text().strip():
        parts.append("\n[deviations]")
        parts.append(dev.read_text().rstrip())
    return "\n".join(parts) + "\n"


def _short(v: str) -> str:
    try:
        f = float(v)
    except ValueError:
        return v
    if v.lstrip("-").isdigit():
        return v
    return f"{f:.4g}"
