"""Parsing and canonical serialization of ``<treqs-element>`` markdown files.

An element looks like::

    <treqs-element id="REQ-1" type="requirement">
    ## Title
    Body text, one sentence per line.
    <treqs-link type="tests" target="TC-1" />
    </treqs-element>

Tags sit alone on their line. Everything outside elements is narrative
markdown and is ignored. Fenced code blocks outside elements are skipped, so
documentation may show the tag syntax without defining elements.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable

from treqs.model import Finding, RequirementElement, SourceSpan, TraceLink, is_token

_ATTR_RE = re.compile(r'\s+([A-Za-z0-9][A-Za-z0-9._-]*)="([^"]*)"')
_OPEN_RE = re.compile(r'^<treqs-element((?:\s+[A-Za-z0-9][A-Za-z0-9._-]*="[^"]*")*)\s*>$')
_LINK_RE = re.compile(r'^<treqs-link((?:\s+[A-Za-z0-9][A-Za-z0-9._-]*="[^"]*")*)\s*/>$')
_OPEN_START_RE = re.compile(r"^<treqs-element(?:[\s>]|$)")
_LINK_START_RE = re.compile(r"^<treqs-link(?:[\s/>]|$)")
CLOSE_TAG = "</treqs-element>"

_HEADING_RE = re.compile(r"^(#{1,6})[ \t]+(.*?)[ \t]*$")
_FENCE_RE = re.compile(r"^(`{3,}|~{3,})")
_LIST_RE = re.compile(r"^([-*+]|\d+[.)])(\s|$)")
_SENTENCE_END_RE = re.compile(r"[.!?]\s+")


@dataclass
class ParseResult:
    path: str
    elements: list[RequirementElement] = field(default_factory=list)
    findings: list[Finding] = field(default_factory=list)
    total_lines: int = 0
    newline: str = "\n"


class _TagError(ValueError):
    pass


def _parse_attrs(raw: str) -> dict[str, str]:
    attrs: dict[str, str] = {}
    for name, value in _ATTR_RE.findall(raw):
        if name in attrs:
            raise _TagError(f"attribute {name!r} given twice")
        attrs[name] = value
    return attrs


def _parse_open(line: str) -> tuple[str, str, dict[str, str]]:
    m = _OPEN_RE.match(line)
    if not m:
        raise _TagError("malformed opening tag")
    attrs = _parse_attrs(m.group(1))
    id_, kind = attrs.pop("id", None), attrs.pop("type", None)
    if id_ is None or kind is None:
        raise _TagError('opening tag needs both "id" and "type" attributes')
    if not is_token(id_):
        raise _TagError(f"invalid element id {id_!r}")
    if not is_token(kind):
        raise _TagError(f"invalid element type {kind!r}")
    return id_, kind, attrs


def _parse_link(line: str) -> tuple[str, str]:
    m = _LINK_RE.match(line)
    if not m:
        raise _TagError("malformed link tag")
    attrs = _parse_attrs(m.group(1))
    if set(attrs) != {"type", "target"}:
        raise _TagError('link tag needs exactly the "type" and "target" attributes')
    if not is_token(attrs["type"]) or not is_token(attrs["target"]):
        raise _TagError("link type and target must be tokens")
    return attrs["type"], attrs["target"]


def split_lines(content: str) -> tuple[list[str], str]:
    """Split *content* on LF, stripping CR; return lines and the file's newline."""
    if not content:
        return [], "\n"
    raw = content.split("\n")
    if raw[-1] == "":
        raw.pop()
    crlf = sum(1 for l in raw if l.endswith("\r"))
    newline = "\r\n" if crlf and crlf * 2 >= len(raw) else "\n"
    return [l[:-1] if l.endswith("\r") else l for l in raw], newline


class _OpenElement:
    def __init__(self, id_: str, kind: str, attrs: dict[str, str], line: int) -> None:
        self.id = id_
        self.kind = kind
        self.attrs = attrs
        self.start = line
        self.content: list[str] = []
        self.links: list[TraceLink] = []
        self.in_fence: str | None = None


def parse_file(path: str, content: str) -> ParseResult:
    """Parse one markdown file into elements and findings.

    Pure function of its arguments; never touches the file system. Malformed
    regions become ``E003-malformed-tag`` findings and are skipped; an opening
    tag inside an open element yields ``E004-nested-element`` and is kept as
    body text.
    """
    lines, newline = split_lines(content)
    result = ParseResult(path=path, total_lines=len(lines), newline=newline)
    current: _OpenElement | None = None
    skipping_from: int | None = None  # line of a malformed opening tag
    outer_fence: str | None = None

    def finding(code: str, message: str, line: int, end: int | None = None) -> None:
        result.findings.append(Finding(code, message, SourceSpan(path, line, end or line)))

    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()

        if current is not None:
            fence = _FENCE_RE.match(stripped)
            if current.in_fence is not None:
                if fence and stripped.startswith(current.in_fence):
                    current.in_fence = None
                current.content.append(line)
                continue
            if fence:
                current.in_fence = fence.group(1)
                current.content.append(line)
                continue
            if stripped == CLOSE_TAG:
                result.elements.append(_finish(current, lineno, path))
                current = None
            elif _OPEN_START_RE.match(stripped):
                finding(
                    "E004-nested-element",
                    f"element tag nested inside {current.id!r}; kept as body text",
                    lineno,
                )
                current.content.append(line)
            elif _LINK_START_RE.match(stripped):
                try:
                    link_type, target = _parse_link(stripped)
                except _TagError as exc:
                    finding("E003-malformed-tag", f"{exc}; kept as body text", lineno)
                    current.content.append(line)
                    continue
                # a self-link stays in the body so formatting never drops it
                if target == current.id:
                    finding("W003-self-link", f"{current.id!r} links to itself ({link_type})", lineno)
                    current.content.append(line)
                elif any(l.target == target and l.link_type == link_type for l in current.links):
                    finding(
                        "W004-duplicate-link",
                        f"{current.id!r} repeats {link_type} link to {target!r}",
                        lineno,
                    )
                else:
                    span = SourceSpan(path, lineno, lineno)
                    current.links.append(TraceLink(current.id, target, link_type, span))
            else:
                current.content.append(line)
            continue

        if skipping_from is not None:
            if stripped == CLOSE_TAG:
                skipping_from = None
            continue

        if outer_fence is not None:
            if stripped.startswith(outer_fence):
                outer_fence = None
            continue
        fence = _FENCE_RE.match(stripped)
        if fence:
            outer_fence = fence.group(1)
            continue

        if _OPEN_START_RE.match(stripped):
            try:
                id_, kind, attrs = _parse_open(stripped)
            except _TagError as exc:
                finding("E003-malformed-tag", f"{exc}; region skipped", lineno)
                skipping_from = lineno
                continue
            current = _OpenElement(id_, kind, attrs, lineno)
        elif stripped == CLOSE_TAG:
            finding("E003-malformed-tag", "closing tag without opening tag", lineno)
        elif _LINK_START_RE.match(stripped):
            finding("E003-malformed-tag", "link tag outside of an element", lineno)

    if current is not None:
        finding(
            "E003-malformed-tag",
            f"element {current.id!r} is never closed; region skipped",
            current.start,
            len(lines),
        )
    if skipping_from is not None:
        finding(
            "E003-malformed-tag",
            "malformed element region is never closed",
            skipping_from,
            len(lines),
        )
    result.findings.sort(key=Finding.sort_key)
    return result


def _finish(current: _OpenElement, end: int, path: str) -> RequirementElement:
    title, level, body = _extract_title(current.content)
    return RequirementElement(
        id=current.id,
        kind=current.kind,
        title=title,
        title_level=level,
        body=tuple(body),
        links=tuple(current.links),
        attributes=current.attrs,
        span=SourceSpan(path, current.start, end),
    )


def _extract_title(content: list[str]) -> tuple[str, int, list[str]]:
    """Pull the first heading (outside code fences) out of the element content."""
    fence: str | None = None
    for i, line in enumerate(content):
        stripped = line.strip()
        if fence is not None:
            if stripped.startswith(fence):
                fence = None
            continue
        m_fence = _FENCE_RE.match(stripped)
        if m_fence:
            fence = m_fence.group(1)
            continue
        m = _HEADING_RE.match(line)
        if m and m.group(2):
            return m.group(2), len(m.group(1)), content[:i] + content[i + 1 :]
    return "", 0, list(content)


def _quote(value: str) -> str:
    return f'"{value}"'


def open_tag(element: RequirementElement) -> str:
    parts = [f"id={_quote(element.id)}", f"type={_quote(element.kind)}"]
    parts += [f"{k}={_quote(v)}" for k, v in sorted(element.attributes.items())]
    return f"<treqs-element {' '.join(parts)}>"


def link_tag(link: TraceLink) -> str:
    return f"<treqs-link type={_quote(link.link_type)} target={_quote(link.target)} />"


def serialize_lines(element: RequirementElement) -> list[str]:
    lines = [open_tag(element)]
    if element.title:
        lines.append(f"{'#' * max(element.title_level, 1)} {element.title}")
    lines.extend(element.body)
    lines.extend(link_tag(l) for l in element.links)
    lines.append(CLOSE_TAG)
    return lines


def serialize_element(element: RequirementElement, newline: str = "\n") -> str:
    """Canonical text of *element*, newline-terminated.

    Opening tag with ``id``, ``type``, then extra attributes alphabetically;
    the title heading; body lines verbatim; one link tag per line in original
    order; the closing tag.
    """
    return newline.join(serialize_lines(element)) + newline


# -- line-wise normalization -------------------------------------------------


def _is_verbatim(stripped: str) -> bool:
    # headings, list items, html/tags, tables and quotes are never reflowed
    return bool(
        stripped.startswith(("#", "<", "|", ">")) or _LIST_RE.match(stripped)
    )


def split_sentences(text: str) -> list[str]:
    """Split after ``.``, ``!`` or ``?`` followed by whitespace and an uppercase letter."""
    sentences = []
    start = 0
    for m in _SENTENCE_END_RE.finditer(text):
        nxt = m.end()
        if nxt < len(text) and text[nxt].isupper():
            sentences.append(text[start : m.start() + 1])
            start = nxt
    sentences.append(text[start:])
    return [s for s in sentences if s]


def normalize_lines(body: Iterable[str]) -> list[str]:
    """Reflow prose so each sentence sits on its own line.

    Blank lines, headings, list items, tag/HTML lines, tables, block quotes and
    fenced code blocks are copied verbatim. Idempotent.
    """
    out: list[str] = []
    paragraph: list[str] = []
    fence: str | None = None

    def flush() -> None:
        if paragraph:
            out.extend(split_sentences(" ".join(paragraph)))
            paragraph.clear()

    for line in body:
        stripped = line.strip()
        if fence is not None:
            out.append(line)
            if stripped.startswith(fence):
                fence = None
            continue
        m_fence = _FENCE_RE.match(stripped)
        if m_fence:
            flush()
            fence = m_fence.group(1)
            out.append(line)
        elif not stripped or _is_verbatim(stripped):
            flush()
            out.append(line)
        else:
            paragraph.append(stripped)
    flush()
    return out


def normalize_body(element: RequirementElement) -> RequirementElement:
    """Return *element* with its body in one-sentence-per-line form."""
    return replace(element, body=tuple(normalize_lines(element.body)))


def generate_id(kind: str, existing: Iterable[str], prefix: str) -> str:
    """Smallest ``<prefix>-<n>`` (n >= 1) not in *existing*."""
    if not is_token(prefix):
        raise ValueError(f"invalid id prefix {prefix!r}")
    taken = set(existing)
    n = 1
    while f"{prefix}-{n}" in taken:
        n += 1
    return f"{prefix}-{n}"


def format_text(path: str, content: str) -> str:
    """Rewrite every well-formed element of *content* in normalized canonical form.

    Text outside elements, and malformed regions, are left byte-for-byte alone.
    Rewritten lines use the file's dominant newline.
    """
    result = parse_file(path, content)
    if not result.elements:
        return content
    raw = content.split("\n")
    suffix = "\r" if result.newline == "\r\n" else ""
    for element in sorted(result.elements, key=lambda e: e.span.start_line, reverse=True):
        new = [l + suffix for l in serialize_lines(normalize_body(element))]
        raw[element.span.start_line - 1 : element.span.end_line] = new
    return "\n".join(raw)
