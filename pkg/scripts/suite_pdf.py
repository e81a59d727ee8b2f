"""
suite_pdf.py

PDF rendering of a verification suite. The CSV written next to it stays the
canonical artifact; this is presentation only.

Layout: page header with the suite title and run parameters, a summary
paragraph, one table per `check` group (rows keep their CSV order).
"""

import logging
import unicodedata
from dataclasses import dataclass, field
from itertools import groupby
from typing import List, Mapping, Optional, Sequence
from xml.sax.saxutils import escape

from reportlab.lib import colors
from reportlab.lib.pagesizes import landscape, letter
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

# Built-in Type 1 fonts only; Greek and math symbols are spelled out.
FONT = "Helvetica"
FONT_BOLD = "Helvetica-Bold"

_SYMBOLS = {
    "φ": "phi", "ψ": "psi", "χ": "chi", "λ": "lambda", "ρ": "rho", "ξ": "xi", "ω": "omega",
    "∫": "int ", "∂": "d", "δ": "delta", "π": "pi", "′": "'", "≤": "<=", "≥": ">=", "·": "*",
    "²": "^2", "³": "^3", "⁴": "^4", "ⁿ": "^n", "⊗": "(x)", "ε": "eps", "∑": "sum ", "Σ": "sum ",
    "‖": "||", "→": "->", "↦": "->", "₁": "1", "₂": "2", "₃": "3", "ₙ": "n",
}

HEADER_FILL = colors.HexColor("#F6F6F7")
RULE_COLOR = colors.HexColor("#D9D9DB")


def to_ascii(value) -> str:
    text = str(value)
    for sym, repl in _SYMBOLS.items():
        text = text.replace(sym, repl)
    return unicodedata.normalize("NFKD", text).encode("ascii", "ignore").decode("ascii")


@dataclass(frozen=True)
class SuiteStyle:
    """Page decoration and row shading shared by every suite table."""

    status_fills: Mapping[str, colors.Color] = field(default_factory=lambda: {
        "fail": colors.HexColor("#FBE3E4"),
        "inconclusive": colors.HexColor("#FFF4D6"),
        "skipped": colors.HexColor("#EDEDEF"),
    })
    font_size: int = 7

    def table_commands(self, data, status_col: Optional[int] = None) -> List[tuple]:
        commands = [
            ("BACKGROUND", (0, 0), (-1, 0), HEADER_FILL),
            ("FONTNAME", (0, 0), (-1, 0), FONT_BOLD),
            ("FONTNAME", (0, 1), (-1, -1), FONT),
            ("FONTSIZE", (0, 0), (-1, -1), self.font_size),
            ("BOTTOMPADDING", (0, 0), (-1, 0), 6),
            ("GRID", (0, 0), (-1, -1), 0.25, RULE_COLOR),
            ("VALIGN", (0, 0), (-1, -1), "MIDDLE"),
        ]
        if status_col is None:
            return commands
        for i, row in enumerate(data[1:], start=1):
            fill = self.status_fills.get(str(row[status_col]))
            if fill is not None:
                commands.append(("BACKGROUND", (0, i), (-1, i), fill))
        return commands

    def table(self, data, col_widths, status_col: Optional[int] = None) -> Table:
        table = Table(data, colWidths=col_widths, repeatRows=1)
        table.setStyle(TableStyle(self.table_commands(data, status_col)))
        return table

    def decorate_page(self, canvas, doc, title: str, parameters_text: str) -> None:
        """Title and run parameters on top, title and page number in the footer."""
        width, height = doc.pagesize
        canvas.saveState()
        canvas.setFont(FONT_BOLD, 12)
        canvas.drawString(doc.leftMargin, height - 0.6 * inch, title)
        canvas.setFont(FONT, 9)
        canvas.drawString(doc.leftMargin, height - 0.6 * inch - 14, parameters_text)
        canvas.setStrokeColor(RULE_COLOR)
        canvas.line(doc.leftMargin, 0.7 * inch, width - doc.rightMargin, 0.7 * inch)
        canvas.setFont(FONT, 8)
        canvas.drawString(doc.leftMargin, 0.5 * inch, title)
        canvas.drawRightString(width - doc.rightMargin, 0.5 * inch, f"Page {doc.page}")
        canvas.restoreState()


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.4g}"
    return to_ascii(value)


def generate_suite_pdf(title: str, parameters_text: str, columns: Sequence[str],
                       rows: Sequence[Sequence], summary: str, output_path: str,
                       style: Optional[SuiteStyle] = None) -> str:
    """Render rows grouped by their first column."""
    style = style or SuiteStyle()
    doc = SimpleDocTemplate(
        output_path,
        pagesize=landscape(letter),
        leftMargin=0.6 * inch,
        rightMargin=0.6 * inch,
        topMargin=1.1 * inch,
        bottomMargin=0.75 * inch,
    )
    styles = getSampleStyleSheet()
    styles["BodyText"].fontName = FONT
    styles["Heading4"].fontName = FONT_BOLD
    styles.add(ParagraphStyle(name="Summary", parent=styles["BodyText"], fontSize=9, leading=11))

    usable = doc.pagesize[0] - doc.leftMargin - doc.rightMargin
    col_widths = [usable / len(columns)] * len(columns)
    status_col = list(columns).index("status") if "status" in columns else None

    story = [Paragraph(escape(to_ascii(summary)), styles["Summary"]), Spacer(1, 0.2 * inch)]
    for group, members in groupby(rows, key=lambda r: r[0]):
        story.append(Paragraph(f"<b>{escape(to_ascii(group).upper())}</b>", styles["Heading4"]))
        data = [[to_ascii(c) for c in columns]] + [[_cell(v) for v in r] for r in members]
        story.append(style.table(data, col_widths, status_col))
        story.append(Spacer(1, 0.25 * inch))

    header = to_ascii(title)
    params = to_ascii(parameters_text)
    doc.build(
        story,
        onFirstPage=lambda canvas, d: style.decorate_page(canvas, d, header, params),
        onLaterPages=lambda canvas, d: style.decorate_page(canvas, d, header, params),
    )
    logging.info(f"[pdf] Suite PDF written: {output_path}")
    return output_path
