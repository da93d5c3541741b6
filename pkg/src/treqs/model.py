"""Domain types and the indexed requirement model."""

from __future__ import annotations

import hashlib
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable

if TYPE_CHECKING:
    from treqs.parser import ParseResult

TOKEN_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]{0,63}$")

BUILTIN_KINDS = ("requirement", "user-story", "test", "information")
BUILTIN_LINK_TYPES = ("refines", "implements", "tests", "relates-to", "deprecates")


def is_token(value: str) -> bool:
    """Return True if *value* is a valid ID / kind / link-type token."""
    return bool(TOKEN_RE.match(value))


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


# code -> severity; the code alone decides how bad a finding is
FINDING_CODES: dict[str, Severity] = {
    "E001-duplicate-id": Severity.ERROR,
    "E002-dangling-link": Severity.ERROR,
    "E003-malformed-tag": Severity.ERROR,
    "E004-nested-element": Severity.ERROR,
    "E005-refinement-cycle": Severity.ERROR,
    "W001-unknown-kind": Severity.WARNING,
    "W002-untested-requirement": Severity.WARNING,
    "W003-self-link": Severity.WARNING,
    "W004-duplicate-link": Severity.WARNING,
    "W005-unknown-link-type": Severity.WARNING,
}


@dataclass(frozen=True, order=True)
class SourceSpan:
    path: str
    start_line: int
    end_line: int

    def __post_init__(self) -> None:
        if self.start_line < 1 or self.start_line > self.end_line:
            raise ValueError(f"invalid line range {self.start_line}-{self.end_line}")
        if "\\" in self.path or ".." in self.path.split("/"):
            raise ValueError(f"invalid repository path {self.path!r}")

    def contains(self, other: SourceSpan) -> bool:
        return (
            self.path == other.path
            and self.start_line <= other.start_line
            and other.end_line <= self.end_line
        )

    def shifted(self, offset: int, path: str | None = None) -> SourceSpan:
        return SourceSpan(path or self.path, self.start_line + offset, self.end_line + offset)

    def __str__(self) -> str:
        return f"{self.path}:{self.start_line}"


@dataclass(frozen=True)
class TraceLink:
    source: str
    target: str
    link_type: str
    span: SourceSpan

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.source, self.target, self.link_type)


@dataclass(frozen=True)
class Finding:
    code: str
    message: str
    span: SourceSpan

    def __post_init__(self) -> None:
        if self.code not in FINDING_CODES:
            raise ValueError(f"unknown finding code {self.code!r}")

    @property
    def severity(self) -> Severity:
        return FINDING_CODES[self.code]

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def format(self) -> str:
        """Compiler-style one-line rendering: ``<severity> <code> <path>:<line> <message>``."""
        return f"{self.severity.value} {self.code} {self.span} {self.message}"

    def sort_key(self) -> tuple:
        return (self.span.path, self.span.start_line, self.code, self.message)


@dataclass(frozen=True)
class RequirementElement:
    id: str
    kind: str
    title: str = ""
    body: tuple[str, ...] = ()
    links: tuple[TraceLink, ...] = ()
    attributes: dict[str, str] = field(default_factory=dict)
    span: SourceSpan = SourceSpan("<memory>", 1, 1)
    # heading depth of the title line (0 when there is no title)
    title_level: int = 0

    def content(self) -> tuple:
        """The comparable content of the element, without its location."""
        return (
            self.id,
            self.kind,
            self.title,
            tuple(self.body),
            tuple((l.target, l.link_type) for l in self.links),
            tuple(sorted(self.attributes.items())),
        )

    def digest(self) -> str:
        """SHA-256 over kind, title, normalized body, attributes and sorted links.

        Two revisions of an element with the same digest differ only in
        line wrapping or location.
        """
        from treqs.parser import normalize_lines

        payload = {
            "kind": self.kind,
            "title": self.title,
            "body": normalize_lines(self.body),
            "attributes": sorted(self.attributes.items()),
            "links": sorted((l.link_type, l.target) for l in self.links),
        }
        raw = json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "title": self.title,
            "body": list(self.body),
            "links": [
                {"target": l.target, "type": l.link_type, "line": l.span.start_line}
                for l in self.links
            ],
            "attributes": dict(sorted(self.attributes.items())),
            "span": [self.span.path, self.span.start_line, self.span.end_line],
        }


@dataclass(frozen=True)
class Model:
    elements: dict[str, RequirementElement] = field(default_factory=dict)
    links: tuple[TraceLink, ...] = ()
    findings: tuple[Finding, ...] = ()
    file_count: int = 0

    def __len__(self) -> int:
        return len(self.elements)

    def ids_of_kind(self, kind: str) -> set[str]:
        return {e.id for e in self.elements.values() if e.kind == kind}

    def to_json(self) -> str:
        data = {
            "file_count": self.file_count,
            "elements": [e.to_dict() for e in self.elements.values()],
            "findings": [f.format() for f in self.findings],
        }
        return json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True)


def _occurrences(parsed_files: Iterable[ParseResult]) -> list[RequirementElement]:
    ordered = sorted(parsed_files, key=lambda r: r.path)
    return [e for r in ordered for e in sorted(r.elements, key=lambda e: e.span.start_line)]


def find_duplicates(parsed_files: Iterable[ParseResult]) -> list[tuple[str, list[SourceSpan]]]:
    """Every ID that occurs at least twice, with all its spans, sorted by ID."""
    spans: dict[str, list[SourceSpan]] = defaultdict(list)
    for element in _occurrences(parsed_files):
        spans[element.id].append(element.span)
    return [(id_, found) for id_, found in sorted(spans.items()) if len(found) > 1]


def build_model(
    parsed_files: Iterable[ParseResult],
    kinds: Iterable[str] = BUILTIN_KINDS,
    link_types: Iterable[str] = BUILTIN_LINK_TYPES,
) -> Model:
    """Index parse results into a :class:`Model`.

    The first occurrence of an ID in ``(path, start_line)`` order wins; each
    later occurrence is left out and reported as ``E001-duplicate-id``.
    Parser findings are carried over. Never raises.
    """
    parsed_files = list(parsed_files)
    known_kinds = set(kinds)
    known_link_types = set(link_types)
    findings: list[Finding] = [f for r in parsed_files for f in r.findings]
    elements: dict[str, RequirementElement] = {}
    links: list[TraceLink] = []

    for element in _occurrences(parsed_files):
        first = elements.get(element.id)
        if first is not None:
            findings.append(
                Finding(
                    "E001-duplicate-id",
                    f"duplicate id {element.id!r}, first defined at {first.span}",
                    element.span,
                )
            )
            continue
        elements[element.id] = element
        links.extend(element.links)
        if element.kind not in known_kinds:
            findings.append(
                Finding(
                    "W001-unknown-kind",
                    f"element {element.id!r} has undeclared kind {element.kind!r}",
                    element.span,
                )
            )
        for link in element.links:
            if link.link_type not in known_link_types:
                findings.append(
                    Finding(
                        "W005-unknown-link-type",
                        f"link from {link.source!r} uses undeclared type {link.link_type!r}",
                        link.span,
                    )
                )

    findings.sort(key=Finding.sort_key)
    return Model(
        elements=elements,
        links=tuple(links),
        findings=tuple(findings),
        file_count=len({r.path for r in parsed_files}),
    )
