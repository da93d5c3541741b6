"""Directed trace graph over a model: validation and coverage queries."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from treqs.model import Finding, Model, TraceLink


@dataclass(frozen=True)
class TraceGraph:
    nodes: frozenset[str]
    edges: tuple[TraceLink, ...]
    dangling: tuple[TraceLink, ...]
    duplicate_drops: tuple[TraceLink, ...] = ()
    findings: tuple[Finding, ...] = ()


@dataclass(frozen=True)
class Coverage:
    covered: frozenset[str]
    uncovered: frozenset[str]
    findings: tuple[Finding, ...] = field(default=())

    @property
    def total(self) -> int:
        return len(self.covered) + len(self.uncovered)


def _edge_order(link: TraceLink) -> tuple:
    return (link.source, link.link_type, link.target, link.span)


def build_graph(model: Model) -> TraceGraph:
    """Split the model's links into resolved edges and dangling links.

    A link declared twice (same source, target and type) is kept once; the
    repeats are recorded in ``duplicate_drops`` with a ``W004`` warning.
    """
    nodes = frozenset(model.elements)
    seen: set[tuple[str, str, str]] = set()
    edges, dangling, drops, findings = [], [], [], []
    for link in sorted(model.links, key=_edge_order):
        if link.key in seen:
            drops.append(link)
            findings.append(
                Finding(
                    "W004-duplicate-link",
                    f"{link.source!r} repeats {link.link_type} link to {link.target!r}",
                    link.span,
                )
            )
            continue
        seen.add(link.key)
        (edges if link.target in nodes else dangling).append(link)
    return TraceGraph(
        nodes=nodes,
        edges=tuple(edges),
        dangling=tuple(dangling),
        duplicate_drops=tuple(drops),
        findings=tuple(findings),
    )


def dangling_links(graph: TraceGraph) -> list[Finding]:
    findings = [
        Finding(
            "E002-dangling-link",
            f"{link.source!r} {link.link_type} unknown element {link.target!r}",
            link.span,
        )
        for link in graph.dangling
    ]
    return sorted(findings, key=Finding.sort_key)


def reverse_links(graph: TraceGraph, target: str) -> list[TraceLink]:
    """All resolved edges pointing at *target*, sorted by (source, link_type)."""
    inbound = [e for e in graph.edges if e.target == target]
    return sorted(inbound, key=lambda e: (e.source, e.link_type))


def coverage(
    graph: TraceGraph,
    model: Model,
    required_kind: str = "requirement",
    via: str = "tests",
    from_kind: str = "test",
) -> Coverage:
    """Partition the ``required_kind`` elements by whether a ``from_kind``
    element links to them with a ``via`` edge.

    With ``via == "tests"`` every uncovered element also gets a
    ``W002-untested-requirement`` warning.
    """
    required = model.ids_of_kind(required_kind)
    covered = {
        e.target
        for e in graph.edges
        if e.link_type == via
        and e.target in required
        and model.elements[e.source].kind == from_kind
    }
    uncovered = required - covered
    findings: list[Finding] = []
    if via == "tests":
        findings = [
            Finding(
                "W002-untested-requirement",
                f"{id_!r} has no inbound {via} link from a {from_kind} element",
                model.elements[id_].span,
            )
            for id_ in uncovered
        ]
        findings.sort(key=Finding.sort_key)
    return Coverage(frozenset(covered), frozenset(uncovered), tuple(findings))


def refinement_cycles(graph: TraceGraph, link_type: str = "refines") -> list[list[str]]:
    """Elementary cycles among ``link_type`` edges.

    Each cycle is rotated so its smallest ID comes first and reported once;
    the list is sorted.
    """
    succ: dict[str, list[str]] = defaultdict(list)
    for e in graph.edges:
        if e.link_type == link_type and e.source != e.target:
            succ[e.source].append(e.target)
    for targets in succ.values():
        targets.sort()

    cycles: list[list[str]] = []
    for start in sorted(succ):
        # only visit nodes greater than start, so start is the cycle minimum
        path = [start]
        on_path = {start}
        stack = [iter(succ[start])]
        while stack:
            for nxt in stack[-1]:
                if nxt == start:
                    cycles.append(list(path))
                elif nxt > start and nxt not in on_path:
                    path.append(nxt)
                    on_path.add(nxt)
                    stack.append(iter(succ.get(nxt, ())))
                    break
            else:
                stack.pop()
                on_path.discard(path.pop())
    return sorted(cycles)


def cycle_findings(graph: TraceGraph, link_type: str = "refines") -> list[Finding]:
    spans = {e.source: e.span for e in graph.edges if e.link_type == link_type}
    findings = []
    for cycle in refinement_cycles(graph, link_type):
        chain = " -> ".join(cycle + [cycle[0]])
        findings.append(
            Finding("E005-refinement-cycle", f"{link_type} cycle {chain}", spans[cycle[0]])
        )
    return findings
