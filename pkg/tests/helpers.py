"""Test support: brute-force oracles, random corpora and scripted git repositories.

The oracles deliberately avoid the package's graph and parser code paths.
"""

from __future__ import annotations

import csv
import io
import itertools
import os
import random
import re
import shutil
import subprocess
import time
from collections import Counter
from contextlib import contextmanager
from pathlib import Path

from treqs.parser import format_text, parse_file

KINDS = ("requirement", "user-story", "test", "information")
LINK_TYPES = ("refines", "implements", "tests", "relates-to", "deprecates")

OPEN_GREP = re.compile(r'^<treqs-element id="([^"]+)" type="([^"]+)"')
LINK_GREP = re.compile(r'^<treqs-link type="([^"]+)" target="([^"]+)" />$')
CLOSE_GREP = re.compile(r"^</treqs-element>$")


# -- random corpora -------------------------------------------------------------


def random_corpus(rng: random.Random, max_elements: int = 50, max_links: int = 150):
    """Markdown files with random elements and links, including duplicate IDs,
    dangling targets and self-links. Returns ``{path: text}``."""
    n = rng.randint(1, max_elements)
    pool = [f"E-{i}" for i in range(max(3, n - rng.randint(0, 5)))]
    elements = []
    for _ in range(n):
        elements.append([rng.choice(pool), rng.choice(KINDS), []])
    for _ in range(rng.randint(0, max_links)):
        src = rng.choice(elements)
        roll = rng.random()
        if roll < 0.1:
            target = src[0]  # self-link
        elif roll < 0.25:
            target = f"GHOST-{rng.randint(0, 9)}"  # dangling
        else:
            target = rng.choice(pool)
        link = (rng.choice(LINK_TYPES), target)
        src[2].append(link)
    n_files = rng.randint(1, 6)
    files: dict[str, list[str]] = {f"doc{i}.md": [] for i in range(n_files)}
    names = sorted(files)
    for id_, kind, links in elements:
        lines = files[rng.choice(names)]
        lines += [f'<treqs-element id="{id_}" type="{kind}">', f"## Title of {id_}", "Body."]
        lines += [f'<treqs-link type="{t}" target="{tg}" />' for t, tg in links]
        lines += ["</treqs-element>", ""]
    return {p: "\n".join(ls) + "\n" for p, ls in files.items()}


def parse_corpus(files: dict[str, str]):
    return [parse_file(p, t) for p, t in sorted(files.items())]


# -- independent oracles --------------------------------------------------------


def grep_elements(files: dict[str, str]):
    """Every element occurrence by plain line scanning: ``[(path, line, id, kind, links)]``
    where links are the well-formed, non-self ``(type, target)`` pairs, first
    occurrence only."""
    found = []
    for path in sorted(files):
        current = None
        for lineno, line in enumerate(files[path].splitlines(), 1):
            line = line.rstrip("\r")
            m = OPEN_GREP.match(line)
            if m:
                current = [path, lineno, m.group(1), m.group(2), []]
                continue
            m = LINK_GREP.match(line)
            if m and current is not None:
                pair = (m.group(1), m.group(2), lineno)
                if m.group(2) != current[2] and all(p[:2] != pair[:2] for p in current[4]):
                    current[4].append(pair)
                continue
            if CLOSE_GREP.match(line) and current is not None:
                found.append(tuple(current[:4]) + (list(current[4]),))
                current = None
    return found


def oracle_winners(files):
    """First occurrence of each ID in (path, line) order."""
    winners = {}
    for occ in grep_elements(files):
        winners.setdefault(occ[2], occ)
    return winners


def oracle_duplicates(files):
    by_id: dict[str, list[tuple[str, int]]] = {}
    for path, line, id_, _kind, _links in grep_elements(files):
        by_id.setdefault(id_, []).append((path, line))
    return sorted((i, locs) for i, locs in by_id.items() if len(locs) > 1)


def oracle_links(files):
    """``(source, target, type, path, line)`` for every link of a winning element."""
    out = []
    for path, _line, id_, _kind, links in oracle_winners(files).values():
        out += [(id_, target, t, path, ln) for t, target, ln in links]
    return out


def oracle_dangling(files):
    ids = set(oracle_winners(files))
    return sorted((p, ln, s, t, ty) for s, t, ty, p, ln in oracle_links(files) if t not in ids)


def oracle_reverse(files, target):
    ids = set(oracle_winners(files))
    hits = {(s, ty) for s, t, ty, _p, _l in oracle_links(files) if t == target and t in ids}
    return sorted(hits)


def oracle_coverage(files, required_kind, via, from_kind):
    winners = oracle_winners(files)
    required = {i for i, occ in winners.items() if occ[3] == required_kind}
    covered = set()
    for s, t, ty, _p, _l in oracle_links(files):
        if ty == via and t in required and winners[s][3] == from_kind:
            covered.add(t)
    return covered, required - covered


def canonical_cycle(cycle):
    i = cycle.index(min(cycle))
    return tuple(cycle[i:] + cycle[:i])


def brute_force_cycles(edges):
    """All elementary cycles by exhaustive simple-path enumeration.

    For every edge ``v -> u``, enumerate every simple path ``u ~> v`` (no
    pruning beyond "never revisit a node") and close it into a cycle.
    """
    succ: dict[str, set[str]] = {}
    for a, b in edges:
        succ.setdefault(a, set()).add(b)
    found = set()

    def paths(node, goal, seen):
        if node == goal:
            yield [node]
            return
        for nxt in succ.get(node, ()):
            if nxt not in seen:
                for rest in paths(nxt, goal, seen | {nxt}):
                    yield [node] + rest

    for v, u in edges:
        if u == v:
            continue
        for p in paths(u, v, {u}):
            found.add(canonical_cycle(p))
    return sorted(list(c) for c in found)


def permutation_cycles(nodes, edges):
    """Slow second oracle for tiny graphs: test every ordered node subset."""
    edge_set = set(edges)
    found = set()
    for k in range(2, len(nodes) + 1):
        for combo in itertools.permutations(sorted(nodes), k):
            if combo[0] != min(combo):
                continue
            pairs = zip(combo, combo[1:] + combo[:1])
            if all(p in edge_set for p in pairs):
                found.add(combo)
    return sorted(list(c) for c in found)


def random_dag_with_back_edges(rng: random.Random, n_nodes: int, k: int):
    nodes = [f"N{i:02d}" for i in range(n_nodes)]
    order = nodes[:]
    rng.shuffle(order)
    edges = set()
    for i, a in enumerate(order):
        for b in order[i + 1 :]:
            if rng.random() < 0.25:
                edges.add((a, b))
    forward = sorted(edges)
    for _ in range(k):
        i, j = sorted(rng.sample(range(n_nodes), 2))
        edges.add((order[j], order[i]))
    return nodes, sorted(edges), forward


def corpus_from_edges(nodes, edges, link_type="refines"):
    lines = []
    for n in nodes:
        lines.append(f'<treqs-element id="{n}" type="requirement">')
        lines += [f'<treqs-link type="{link_type}" target="{b}" />' for a, b in edges if a == n]
        lines += ["</treqs-element>", ""]
    return {"graph.md": "\n".join(lines)}


def tag_counts(text: str) -> Counter:
    c = Counter()
    for line in text.splitlines():
        s = line.strip()
        if s.startswith("<treqs-element"):
            c["open"] += 1
        elif s == "</treqs-element>":
            c["close"] += 1
        elif LINK_GREP.match(s):
            c["link"] += 1
    return c


# -- scripted git repositories --------------------------------------------------

GIT_ENV = {
    "GIT_AUTHOR_NAME": "Test Author",
    "GIT_AUTHOR_EMAIL": "author@example.com",
    "GIT_COMMITTER_NAME": "Test Author",
    "GIT_COMMITTER_EMAIL": "author@example.com",
    "GIT_CONFIG_NOSYSTEM": "1",
}


class GitRepo:
    def __init__(self, root: Path) -> None:
        self.root = root
        root.mkdir(parents=True, exist_ok=True)
        self.git("init", "-q", "-b", "main")
        self.git("config", "user.name", "Test Author")
        self.git("config", "user.email", "author@example.com")
        self.git("config", "merge.conflictstyle", "merge")
        self.git("config", "commit.gpgsign", "false")
        self.git("config", "core.autocrlf", "false")

    def git(self, *args: str, check: bool = True) -> subprocess.CompletedProcess:
        env = {**os.environ, **GIT_ENV}
        return subprocess.run(
            ["git", *args], cwd=self.root, env=env, capture_output=True, text=True, check=check
        )

    def write(self, path: str, text: str) -> None:
        target = self.root / path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(text.encode("utf-8"))

    def remove(self, path: str) -> None:
        (self.root / path).unlink()

    def commit(self, message: str) -> str:
        self.git("add", "-A")
        self.git("commit", "-q", "--allow-empty", "-m", message)
        return self.head()

    def head(self) -> str:
        return self.git("rev-parse", "HEAD").stdout.strip()


def element(id_: str, kind: str = "requirement", body=("Body text.",), links=(), title=None) -> str:
    lines = [f'<treqs-element id="{id_}" type="{kind}">', f"## {title or 'Title ' + id_}"]
    lines += list(body)
    lines += [f'<treqs-link type="{t}" target="{tg}" />' for t, tg in links]
    lines.append("</treqs-element>")
    return "\n".join(lines) + "\n"


def doc(*elements: str) -> str:
    return "# Document\n\n" + "\n".join(elements)


# -- the change-ledger fixture ---------------------------------------------------

LEDGER_TEXTS = {
    ("A", 1): element("A", body=["Alpha shall hold.", "Second sentence here."]),
    ("A", 2): element(
        "A", body=["Alpha shall hold.", "Second sentence here."], links=[("relates-to", "D")]
    ),
    ("B", 1): element("B", body=["Beta shall work. It shall be fast."]),
    ("B", 2): element("B", body=["Beta shall work. It shall be faster."]),
    # same normalized content as version 2, wrapped differently
    ("B", "2w"): element("B", body=["Beta shall work.", "It shall be faster."]),
    ("C", 1): element("C", kind="test", body=["Gamma checks.", "Nothing else."], links=[("tests", "A")]),
    ("D", 1): element("D", kind="user-story", body=["Delta is a story."]),
}

# revision -> {path: [(id, version), ...]}; revision 0 has no requirement files
LEDGER_STATES = [
    {},
    {"reqs/a.md": [("A", 1), ("B", 1)], "reqs/b.md": [("C", 1)]},
    {"reqs/a.md": [("A", 1), ("B", 2)], "reqs/b.md": [("C", 1), ("D", 1)]},
    # B re-wrapped (no change), D moved to another file
    {"reqs/a.md": [("A", 1), ("B", "2w")], "reqs/b.md": [("C", 1)], "reqs/c.md": [("D", 1)]},
    # C removed, A modified
    {"reqs/a.md": [("A", 2), ("B", "2w")], "reqs/c.md": [("D", 1)]},
    # a.md renamed: A and B both move
    {"docs/a.md": [("A", 2), ("B", "2w")], "reqs/c.md": [("D", 1)]},
    # A and B swap places inside one file
    {"docs/a.md": [("B", "2w"), ("A", 2)], "reqs/c.md": [("D", 1)]},
]

CONTENT_VERSION = {"2w": 2}


def ledger_file(entries):
    return doc(*(LEDGER_TEXTS[e] for e in entries))


def ledger_locations(state, survivors):
    """id -> (content version, path, rank among *survivors* in that file)."""
    out = {}
    for path, entries in state.items():
        rank = 0
        for id_, version in entries:
            out[id_] = (CONTENT_VERSION.get(version, version), path, rank if id_ in survivors else None)
            rank += id_ in survivors
    return out


def ledger_ids(state):
    return {id_ for entries in state.values() for id_, _ in entries}


def ledger_expected(i, j):
    """Expected (kind, id) changes between ledger revisions i and j."""
    survivors = ledger_ids(LEDGER_STATES[i]) & ledger_ids(LEDGER_STATES[j])
    old = ledger_locations(LEDGER_STATES[i], survivors)
    new = ledger_locations(LEDGER_STATES[j], survivors)
    changes = []
    for id_ in old.keys() | new.keys():
        if id_ not in old:
            changes.append(("Added", id_))
        elif id_ not in new:
            changes.append(("Removed", id_))
        elif old[id_][0] != new[id_][0]:
            changes.append(("Modified", id_))
        elif old[id_][1:] != new[id_][1:]:
            changes.append(("Moved", id_))
    order = ["Added", "Removed", "Modified", "Moved"]
    return sorted(changes, key=lambda c: (order.index(c[0]), c[1]))


def build_ledger_repo(repo: GitRepo) -> list[str]:
    revs = []
    for n, state in enumerate(LEDGER_STATES):
        for tracked in repo.git("ls-files").stdout.split():
            if tracked.endswith(".md") and tracked not in state:
                repo.remove(tracked)
        for path, entries in state.items():
            repo.write(path, ledger_file(entries))
        revs.append(repo.commit(f"revision {n}"))
    return revs


def build_trailer_repo(repo: GitRepo) -> tuple[str, list[str]]:
    repo.write("reqs.md", doc(element("REQ-1"), element("REQ-2"), element("REQ-3")))
    base = repo.commit("initial")
    messages = [
        "Plain change without trailers",
        "Tighten login\n\nSome explanation.\n\nTreqs-ref: REQ-1",
        "Mention Treqs-ref: REQ-2 in the subject only",
        "Rework export\n\nTreqs-ref: REQ-1, REQ-2\nSigned-off-by: Test Author <author@example.com>",
        "Fix typo\n\ntreqs-ref: REQ-3, not a token!",
    ]
    commits = []
    for i, message in enumerate(messages):
        repo.write("log.txt", f"{i}\n")
        commits.append(repo.commit(message))
    return base, commits


# -- report extraction ------------------------------------------------------------


def _md_cells(line: str) -> tuple[str, ...]:
    cells, cur, i = [], "", 1
    body = line.strip()
    while i < len(body) - 1:
        ch = body[i]
        if ch == "\\" and i + 1 < len(body) - 1:
            cur += body[i + 1]
            i += 2
            continue
        if ch == "|":
            cells.append(cur.strip())
            cur = ""
        else:
            cur += ch
        i += 1
    cells.append(cur.strip())
    return tuple(cells)


def markdown_rows(text: str) -> Counter:
    """Multiset of (section, row) pairs from a markdown render, header rows included."""
    rows: Counter = Counter()
    section = None
    for line in text.splitlines():
        if line.startswith("## "):
            section = line[3:]
        elif line.startswith("|") and not re.match(r"^\|( --- \|)+$", line):
            rows[(section, _md_cells(line))] += 1
    return rows


def csv_rows(text: str) -> Counter:
    rows: Counter = Counter()
    section = None
    assert "\n" not in text.replace("\r\n", "")
    for block in text.split("\r\n\r\n"):
        lines = block.split("\r\n")
        section = lines[0][2:]
        data = "\r\n".join(l for l in lines[1:] if not l.startswith("# "))
        for row in csv.reader(io.StringIO(data, newline="")):
            if row:
                rows[(section, tuple(row))] += 1
    return rows


# -- CLI contract -----------------------------------------------------------------

FINDING_LINE = re.compile(r"^(error|warning) [EW]\d{3}-[a-z-]+ \S+:\d+ .+$")

# (args, exit on clean repo, exit on findings repo, bad invocation args)
CLI_TABLE = [
    (["check"], 0, 1, ["check", "missing-dir"]),
    (["list"], 0, 0, ["list", "missing-dir"]),
    (
        ["new", "--kind", "requirement", "--title", "Fresh", "--file", "new.md"],
        0,
        0,
        ["new", "--kind", "no-such-kind", "--file", "new.md"],
    ),
    (["changed", "--since", "HEAD~1", "--no-timestamp"], 0, 0, ["changed", "--since", "nope"]),
    (["matrix", "--no-timestamp"], 0, 0, ["matrix", "--rows", "no-such-kind"]),
    (["coverage", "--no-timestamp"], 0, 0, ["coverage", "--via", "no-such-link"]),
    (["branch-diff", "--base", "HEAD~1", "--no-timestamp"], 0, 0, ["branch-diff", "--base", "nope"]),
    (["fmt", "--check"], 0, 1, ["fmt", "missing-dir"]),
    (["hook-install"], 0, 0, ["hook-install", "--bogus-flag"]),
]


def normalize_tree(root: Path) -> None:
    for path in root.rglob("*.md"):
        text = path.read_bytes().decode()
        path.write_bytes(format_text(path.name, text).encode())


def build_clean_repo(root: Path, corpus: Path) -> GitRepo:
    """The fixture corpus, normalized and committed."""
    repo = GitRepo(root)
    shutil.copytree(corpus, root, dirs_exist_ok=True)
    normalize_tree(root)
    repo.commit("corpus")
    return repo


def add_second_commit(repo: GitRepo) -> GitRepo:
    repo.write("extra.md", doc(element("EXTRA-1", kind="information")))
    repo.commit("second commit")
    return repo


def add_findings(repo: GitRepo) -> GitRepo:
    """Commit an element with a dangling link and an unnormalized body."""
    repo.write(
        "broken.md",
        doc(element("BROKEN-1", body=["Two sentences. On one line."], links=[("refines", "NOPE")])),
    )
    repo.commit("add broken element")
    return repo


# -- acceptance bookkeeping -------------------------------------------------------

ACCEPTANCE_RESULTS: list[str] = []


@contextmanager
def criterion(number: int, name: str, limit: float):
    """Time a block and record one PASS/FAIL line; over the limit counts as a failure."""
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        _record(number, name, False, time.perf_counter() - start, limit, type(exc).__name__)
        raise
    elapsed = time.perf_counter() - start
    ok = elapsed < limit
    _record(number, name, ok, elapsed, limit, "" if ok else "too slow")
    assert ok, f"criterion {number} took {elapsed:.2f}s (limit {limit}s)"


def _record(number, name, ok, elapsed, limit, note):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {name} ({elapsed:.2f}s, limit {limit:g}s)"
    if note:
        line += f" [{note}]"
    ACCEPTANCE_RESULTS.append(line)
    print(line)
