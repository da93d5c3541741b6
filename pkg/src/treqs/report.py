"""Tabular reports and their markdown / CSV / HTML renderings.

Reports are built once (timestamp included) and rendered by pure functions,
so rendering the same report twice gives identical bytes.
"""

from __future__ import annotations

import csv
import html
import io
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Sequence, Union

from treqs.graph import Coverage, TraceGraph
from treqs.model import Model, RequirementElement, SourceSpan
from treqs.vcs import ChangeKind, CommitRef, ElementChange

Cell = Union[str, int, bool, None]

FORMATS = ("markdown", "csv", "html")
MARK = "x"


@dataclass(frozen=True)
class Table:
    columns: tuple[str, ...]
    rows: tuple[tuple[Cell, ...], ...] = ()


@dataclass(frozen=True)
class Section:
    title: str
    table: Table | None = None
    text: tuple[str, ...] = ()


@dataclass(frozen=True)
class Report:
    title: str
    generated_at: str | None = None
    source_revisions: tuple[str, ...] = ()
    sections: tuple[Section, ...] = field(default=())


def utc_now() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat().replace("+00:00", "Z")


def cell_text(value: Cell) -> str:
    if value is None or value is False:
        return ""
    if value is True:
        return MARK
    return str(value)


def percent(part: int, whole: int) -> str:
    """``part/whole`` as a percentage rounded half-up to one decimal; ``n/a`` when empty."""
    if whole == 0:
        return "n/a"
    value = (Decimal(part) * 100 / Decimal(whole)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    return f"{value}%"


def _location(span: SourceSpan | None) -> str:
    if span is None:
        return ""
    return f"{span.path}:{span.start_line}-{span.end_line}"


def _sorted_of_kind(model: Model, kind: str) -> list[RequirementElement]:
    return sorted((e for e in model.elements.values() if e.kind == kind), key=lambda e: e.id)


# -- builders -----------------------------------------------------------------


def traceability_matrix(
    graph: TraceGraph,
    model: Model,
    row_kind: str = "requirement",
    col_kind: str = "test",
    via: str = "tests",
    direction: str = "inbound",
    generated_at: str | None = None,
    source_revisions: Sequence[str] = (),
) -> Report:
    """Cross ``row_kind`` against ``col_kind`` elements.

    With ``direction="inbound"`` a cell is marked when the column element
    links to the row element with a ``via`` edge; ``"outbound"`` reverses it.
    The matrix carries a per-row total; column totals get their own section.
    """
    if direction not in ("inbound", "outbound"):
        raise ValueError(f"direction must be 'inbound' or 'outbound', not {direction!r}")
    rows = _sorted_of_kind(model, row_kind)
    cols = _sorted_of_kind(model, col_kind)
    if direction == "inbound":
        marked = {(e.target, e.source) for e in graph.edges if e.link_type == via}
    else:
        marked = {(e.source, e.target) for e in graph.edges if e.link_type == via}

    body = []
    col_totals = [0] * len(cols)
    for r in rows:
        marks = [(r.id, c.id) in marked for c in cols]
        for i, m in enumerate(marks):
            col_totals[i] += m
        body.append((r.id, r.title, *marks, sum(marks)))
    matrix = Table(("ID", "Title", *(c.id for c in cols), "Total"), tuple(body))
    totals = Table(("Column", "Total"), tuple((c.id, n) for c, n in zip(cols, col_totals)))
    arrow = f"{col_kind} -> {row_kind}" if direction == "inbound" else f"{row_kind} -> {col_kind}"
    return Report(
        title=f"Traceability matrix: {row_kind} vs {col_kind} ({via}, {arrow})",
        generated_at=generated_at,
        source_revisions=tuple(source_revisions),
        sections=(Section("Matrix", matrix), Section("Column totals", totals)),
    )


def coverage_report(
    result: Coverage,
    model: Model,
    generated_at: str | None = None,
    source_revisions: Sequence[str] = (),
    title: str = "Coverage report",
) -> Report:
    def listing(ids: Iterable[str]) -> Table:
        rows = []
        for id_ in sorted(ids):
            e = model.elements[id_]
            rows.append((e.id, e.kind, e.title, _location(e.span)))
        return Table(("ID", "Type", "Title", "Location"), tuple(rows))

    summary = Table(
        ("Metric", "Value"),
        (
            ("Total", result.total),
            ("Covered", len(result.covered)),
            ("Uncovered", len(result.uncovered)),
            ("Covered %", percent(len(result.covered), result.total)),
        ),
    )
    return Report(
        title=title,
        generated_at=generated_at,
        source_revisions=tuple(source_revisions),
        sections=(
            Section("Summary", summary),
            Section("Covered", listing(result.covered)),
            Section("Uncovered", listing(result.uncovered)),
        ),
    )


def change_report(
    changes: Sequence[ElementChange],
    commits: Sequence[CommitRef],
    model_head: Model,
    audience_filter: str | None = None,
    model_base: Model | None = None,
    generated_at: str | None = None,
    source_revisions: Sequence[str] = (),
    title: str = "Requirement changes",
) -> Report:
    """One section per change kind listing the changed elements.

    Titles and types come from *model_head*, or from *model_base* for removed
    elements. Each entry lists the commits whose trailers reference it.
    """
    refs: dict[str, list[str]] = {}
    for c in commits:
        for id_ in c.referenced:
            refs.setdefault(id_, []).append(c.commit[:12])

    sections = []
    for kind in ChangeKind:
        rows = []
        for change in sorted((c for c in changes if c.kind is kind), key=lambda c: c.id):
            source = model_head if kind is not ChangeKind.REMOVED else model_base
            element = source.elements.get(change.id) if source is not None else None
            element_kind = element.kind if element is not None else ""
            if audience_filter is not None and element_kind != audience_filter:
                continue
            rows.append(
                (
                    change.id,
                    element_kind,
                    element.title if element is not None else "",
                    _location(change.new_span or change.old_span),
                    _location(change.old_span) if kind is ChangeKind.MOVED else "",
                    " ".join(refs.get(change.id, [])),
                )
            )
        if rows:
            columns = ("ID", "Type", "Title", "Location", "Previous location", "Commits")
            sections.append(Section(kind.value, Table(columns, tuple(rows))))
    if not sections:
        sections.append(Section("Changes", text=("No changes.",)))
    return Report(
        title=title,
        generated_at=generated_at,
        source_revisions=tuple(source_revisions),
        sections=tuple(sections),
    )


# -- rendering ----------------------------------------------------------------


def _md_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("|", "\\|").replace("\n", " ")


def render_markdown(report: Report) -> str:
    out = [f"# {report.title}", "", f"Generated: {report.generated_at or 'n/a'}"]
    if report.source_revisions:
        out.append(f"Revisions: {', '.join(report.source_revisions)}")
    for section in report.sections:
        out += ["", f"## {section.title}"]
        if section.text:
            out += [""] + list(section.text)
        if section.table is not None:
            t = section.table
            out += ["", "| " + " | ".join(_md_escape(c) for c in t.columns) + " |"]
            out.append("|" + "|".join(" --- " for _ in t.columns) + "|")
            for row in t.rows:
                out.append("| " + " | ".join(_md_escape(cell_text(v)) for v in row) + " |")
    return "\n".join(out) + "\n"


def render_csv(report: Report) -> str:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    first = True
    for section in report.sections:
        if not first:
            buf.write("\r\n")
        first = False
        buf.write(f"# {section.title}\r\n")
        for line in section.text:
            buf.write(f"# {line}\r\n")
        if section.table is not None:
            writer.writerow(section.table.columns)
            writer.writerows([cell_text(v) for v in row] for row in section.table.rows)
    return buf.getvalue()


_STYLE = """body{font-family:sans-serif;margin:2em;color:#222}
table{border-collapse:collapse;margin:1em 0}
th,td{border:1px solid #bbb;padding:.3em .6em;text-align:left}
th{background:#eee}
.meta{color:#666;font-size:.9em}"""


def render_html(report: Report) -> str:
    e = html.escape
    out = [
        "<!DOCTYPE html>",
        '<html lang="en">',
        "<head>",
        '<meta charset="utf-8">',
        f"<title>{e(report.title)}</title>",
        f"<style>\n{_STYLE}\n</style>",
        "</head>",
        "<body>",
        f"<h1>{e(report.title)}</h1>",
        f'<p class="meta">Generated: {e(report.generated_at or "n/a")}</p>',
    ]
    if report.source_revisions:
        out.append(f'<p class="meta">Revisions: {e(", ".join(report.source_revisions))}</p>')
    for section in report.sections:
        out.append(f"<h2>{e(section.title)}</h2>")
        out += [f"<p>{e(line)}</p>" for line in section.text]
        if section.table is not None:
            out.append("<table>")
            out.append("<tr>" + "".join(f"<th>{e(c)}</th>" for c in section.table.columns) + "</tr>")
            for row in section.table.rows:
                out.append("<tr>" + "".join(f"<td>{e(cell_text(v))}</td>" for v in row) + "</tr>")
            out.append("</table>")
    out += ["</body>", "</html>"]
    return "\n".join(out) + "\n"


def render(report: Report, fmt: str = "markdown") -> str:
    if fmt == "markdown":
        return render_markdown(report)
    if fmt == "csv":
        return render_csv(report)
    if fmt == "html":
        return render_html(report)
    raise ValueError(f"unknown format {fmt!r}; expected one of {', '.join(FORMATS)}")
