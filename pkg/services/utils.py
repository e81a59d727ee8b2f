# services/utils.py
import os
import csv
import logging
from datetime import datetime, timezone


def _format_cell(value):
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_report_csv(path, command, config, columns, rows, summary, dry_run=False):
    """
    Write one suite report. Comment lines carry the run context; the body
    (column row, data rows, summary line) depends only on config and seed.
    """
    if dry_run:
        logging.info(f"[suite] Dry run: would write {path}")
        return None

    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    generated = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow([f"# command={command}"])
        writer.writerow([f"# generated={generated}"])
        writer.writerow([f"# grid={config.grid}"])
        writer.writerow([f"# seed={config.seed}"])
        writer.writerow(list(columns))
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])
        writer.writerow([f"# summary {summary}"])
    logging.info(f"[suite] CSV written: {path}")
    return path


def read_report_body(path):
    """Rows of a report CSV without the comment header lines (summary kept)."""
    with open(path, newline="", encoding="utf-8") as f:
        lines = list(csv.reader(f))
    return [r for r in lines if not (r and r[0].startswith("# ") and not r[0].startswith("# summary"))]
