"""Read-only git queries mapped onto requirement elements.

All repository access goes through the ``git`` executable; this module never
writes to the repository.
"""

from __future__ import annotations

import functools
import re
import subprocess
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from treqs.config import glob_match
from treqs.model import BUILTIN_KINDS, BUILTIN_LINK_TYPES, Model, SourceSpan, build_model, is_token
from treqs.parser import parse_file

DEFAULT_GLOBS = ("**/*.md",)
TRAILER_KEY = "treqs-ref"

_TRAILER_LINE_RE = re.compile(r"^([A-Za-z0-9][A-Za-z0-9-]*)[ \t]*:[ \t]*(.*)$")


class GitError(RuntimeError):
    """A git invocation failed: bad revision, unrelated histories, no repository."""


class MalformedTrailerWarning(UserWarning):
    pass


class ChangeKind(str, Enum):
    ADDED = "Added"
    REMOVED = "Removed"
    MODIFIED = "Modified"
    MOVED = "Moved"


_KIND_ORDER = {k: i for i, k in enumerate(ChangeKind)}


@dataclass(frozen=True)
class ElementChange:
    id: str
    kind: ChangeKind
    old_span: SourceSpan | None = None
    new_span: SourceSpan | None = None
    old_hash: str | None = None
    new_hash: str | None = None

    def sort_key(self) -> tuple[int, str]:
        return (_KIND_ORDER[self.kind], self.id)


@dataclass(frozen=True)
class CommitRef:
    commit: str
    referenced: tuple[str, ...]
    subject: str


def git(repo_root: Path | str, *args: str) -> str:
    """Run git in *repo_root* and return stdout; raise :class:`GitError` on failure."""
    cmd = ["git", "-c", "core.quotepath=off", *args]
    try:
        proc = subprocess.run(
            cmd, cwd=repo_root, capture_output=True, text=True, encoding="utf-8"
        )
    except (FileNotFoundError, NotADirectoryError) as exc:
        raise GitError(f"cannot run git in {repo_root}: {exc}") from exc
    if proc.returncode != 0:
        detail = proc.stderr.strip() or f"exit status {proc.returncode}"
        raise GitError(f"git {' '.join(args)} failed: {detail}")
    return proc.stdout


def repo_toplevel(path: Path | str) -> Path:
    return Path(git(path, "rev-parse", "--show-toplevel").strip())


def resolve(repo_root: Path | str, rev: str) -> str:
    """Full commit hash for *rev*."""
    if not rev or rev.startswith("-"):
        raise GitError(f"invalid revision {rev!r}")
    try:
        return git(repo_root, "rev-parse", "--verify", "--quiet", f"{rev}^{{commit}}").strip()
    except GitError:
        raise GitError(f"unknown revision {rev!r}") from None


def merge_base(repo_root: Path | str, a: str, b: str) -> str:
    ha, hb = resolve(repo_root, a), resolve(repo_root, b)
    try:
        return git(repo_root, "merge-base", ha, hb).strip()
    except GitError:
        raise GitError(f"{a!r} and {b!r} have no common ancestor") from None


def read_blobs(repo_root: Path | str, objects: Sequence[str]) -> list[bytes]:
    """Contents of the given blob ids, in order, via one ``cat-file --batch``."""
    if not objects:
        return []
    proc = subprocess.run(
        ["git", "cat-file", "--batch"],
        cwd=repo_root,
        input=("\n".join(objects) + "\n").encode(),
        capture_output=True,
    )
    if proc.returncode != 0:
        raise GitError(f"git cat-file failed: {proc.stderr.decode(errors='replace').strip()}")
    out, pos, blobs = proc.stdout, 0, []
    for obj in objects:
        nl = out.index(b"\n", pos)
        header = out[pos:nl].split()
        if len(header) != 3:
            raise GitError(f"cannot read object {obj}")
        size = int(header[2])
        blobs.append(out[nl + 1 : nl + 1 + size])
        pos = nl + 1 + size + 1
    return blobs


def _decode(path: str, data: bytes) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise GitError(f"{path} is not valid UTF-8: {exc}") from exc


def _model_from_entries(
    repo_root: Path | str,
    entries: list[tuple[str, str]],
    include_globs: Iterable[str],
    kinds: Iterable[str],
    link_types: Iterable[str],
) -> Model:
    globs = tuple(include_globs)
    chosen = [(p, o) for p, o in entries if any(glob_match(g, p) for g in globs)]
    blobs = read_blobs(repo_root, [o for _, o in chosen])
    parsed = [parse_file(p, _decode(p, b)) for (p, _), b in zip(chosen, blobs)]
    return build_model(parsed, kinds=kinds, link_types=link_types)


@functools.lru_cache(maxsize=256)
def _snapshot(
    repo_root: str,
    commit: str | None,
    globs: tuple[str, ...],
    kinds: tuple[str, ...],
    link_types: tuple[str, ...],
) -> Model:
    if commit is None:
        return build_model([])
    entries = []
    for record in git(repo_root, "ls-tree", "-r", "-z", "--full-tree", commit).split("\0"):
        if not record:
            continue
        meta, path = record.split("\t", 1)
        _mode, otype, obj = meta.split()
        if otype == "blob":
            entries.append((path, obj))
    return _model_from_entries(repo_root, entries, globs, kinds, link_types)


def snapshot_model(
    repo_root: Path | str,
    rev: str,
    include_globs: Iterable[str] = DEFAULT_GLOBS,
    kinds: Iterable[str] = BUILTIN_KINDS,
    link_types: Iterable[str] = BUILTIN_LINK_TYPES,
) -> Model:
    """Model of the matching files as committed at *rev* (not the working tree)."""
    commit = resolve(repo_root, rev)
    return _snapshot(str(repo_root), commit, tuple(include_globs), tuple(kinds), tuple(link_types))


def index_model(
    repo_root: Path | str,
    include_globs: Iterable[str] = DEFAULT_GLOBS,
    kinds: Iterable[str] = BUILTIN_KINDS,
    link_types: Iterable[str] = BUILTIN_LINK_TYPES,
) -> Model:
    """Model of the matching files as staged in the index."""
    entries = []
    for record in git(repo_root, "ls-files", "-s", "-z").split("\0"):
        if not record:
            continue
        meta, path = record.split("\t", 1)
        _mode, obj, stage = meta.split()
        if stage == "0":
            entries.append((path, obj))
    return _model_from_entries(repo_root, entries, include_globs, kinds, link_types)


def _positions(model: Model, keep: set[str]) -> dict[str, tuple[str, int]]:
    """(path, rank among the *keep* elements of that file) for each kept ID."""
    order: dict[str, list[str]] = {}
    for e in sorted(model.elements.values(), key=lambda e: (e.span.path, e.span.start_line)):
        if e.id in keep:
            order.setdefault(e.span.path, []).append(e.id)
    return {id_: (path, rank) for path, ids in order.items() for rank, id_ in enumerate(ids)}


def diff_models(base: Model, head: Model) -> list[ElementChange]:
    """Classify element differences by ID.

    An element present in both with an equal digest is Moved when its file
    changed or its order relative to the other surviving elements of the file
    changed; line shifts from edits elsewhere or from re-wrapping do not count.
    """
    common = base.elements.keys() & head.elements.keys()
    old_pos, new_pos = _positions(base, common), _positions(head, common)
    changes = []
    for id_, old in base.elements.items():
        new = head.elements.get(id_)
        if new is None:
            changes.append(ElementChange(id_, ChangeKind.REMOVED, old_span=old.span, old_hash=old.digest()))
            continue
        old_hash, new_hash = old.digest(), new.digest()
        if old_hash != new_hash:
            kind = ChangeKind.MODIFIED
        elif old_pos[id_] != new_pos[id_]:
            kind = ChangeKind.MOVED
        else:
            continue
        changes.append(ElementChange(id_, kind, old.span, new.span, old_hash, new_hash))
    for id_, new in head.elements.items():
        if id_ not in base.elements:
            changes.append(ElementChange(id_, ChangeKind.ADDED, new_span=new.span, new_hash=new.digest()))
    return sorted(changes, key=ElementChange.sort_key)


def changed_elements(
    repo_root: Path | str,
    base: str,
    head: str,
    include_globs: Iterable[str] = DEFAULT_GLOBS,
    kinds: Iterable[str] = BUILTIN_KINDS,
    link_types: Iterable[str] = BUILTIN_LINK_TYPES,
) -> list[ElementChange]:
    """Element changes from revision *base* to revision *head*, sorted by (kind, id)."""
    args = (tuple(include_globs), tuple(kinds), tuple(link_types))
    return diff_models(
        snapshot_model(repo_root, base, *args),
        snapshot_model(repo_root, head, *args),
    )


def parse_trailers(message: str) -> list[tuple[str, str]]:
    """``(key, value)`` pairs from the trailer block of a commit message.

    The block is the last paragraph, provided it is not the subject paragraph
    and every line in it is a ``Key: value`` trailer or an indented
    continuation of one.
    """
    paragraphs = [p for p in re.split(r"\n[ \t]*\n", message.strip("\n")) if p.strip()]
    if len(paragraphs) < 2:
        return []
    trailers: list[tuple[str, str]] = []
    for line in paragraphs[-1].split("\n"):
        if line[:1] in (" ", "\t") and trailers:
            key, value = trailers[-1]
            trailers[-1] = (key, f"{value} {line.strip()}")
            continue
        m = _TRAILER_LINE_RE.match(line)
        if not m:
            return []
        trailers.append((m.group(1), m.group(2).strip()))
    return trailers


def scan_commit_refs(repo_root: Path | str, rev_range: str) -> tuple[list[CommitRef], list[str]]:
    """Like :func:`commit_refs`, returning malformed-ID messages instead of warning."""
    if not rev_range or rev_range.startswith("-"):
        raise GitError(f"invalid revision range {rev_range!r}")
    try:
        out = git(repo_root, "log", "-z", "--format=%H%n%B", rev_range, "--")
    except GitError:
        raise GitError(f"unknown revision range {rev_range!r}") from None
    refs, problems = [], []
    for record in out.split("\0"):
        if not record.strip():
            continue
        commit, _, message = record.partition("\n")
        ids: list[str] = []
        for key, value in parse_trailers(message):
            if key.lower() != TRAILER_KEY:
                continue
            for item in (v.strip() for v in value.split(",")):
                if is_token(item):
                    if item not in ids:
                        ids.append(item)
                else:
                    problems.append(f"{commit[:12]}: malformed id {item!r} in {key} trailer")
        if ids:
            subject = message.strip("\n").split("\n", 1)[0]
            refs.append(CommitRef(commit, tuple(ids), subject))
    return refs, problems


def commit_refs(repo_root: Path | str, rev_range: str) -> list[CommitRef]:
    """Commits in *rev_range* (newest first) whose ``Treqs-ref`` trailers name element IDs.

    Malformed IDs are skipped with a :class:`MalformedTrailerWarning`.
    """
    refs, problems = scan_commit_refs(repo_root, rev_range)
    for problem in problems:
        warnings.warn(problem, MalformedTrailerWarning, stacklevel=2)
    return refs


def element_history(
    repo_root: Path | str,
    id_: str,
    limit: int,
    rev: str = "HEAD",
    include_globs: Iterable[str] = DEFAULT_GLOBS,
) -> list[tuple[str, ChangeKind]]:
    """Commits on the first-parent line of *rev* that changed element *id_*, newest first."""
    if limit < 1:
        raise ValueError("limit must be positive")
    globs = tuple(include_globs)
    head = resolve(repo_root, rev)
    history = []
    for line in git(repo_root, "rev-list", "--first-parent", "--parents", head).splitlines():
        commit, *parents = line.split()
        parent = parents[0] if parents else None
        old = _snapshot(str(repo_root), parent, globs, BUILTIN_KINDS, BUILTIN_LINK_TYPES)
        new = _snapshot(str(repo_root), commit, globs, BUILTIN_KINDS, BUILTIN_LINK_TYPES)
        if id_ not in old.elements and id_ not in new.elements:
            continue
        for change in diff_models(old, new):
            if change.id == id_:
                history.append((commit, change.kind))
                break
        if len(history) >= limit:
            break
    return history


def branch_requirements_diff(
    repo_root: Path | str,
    branch: str,
    base: str,
    include_globs: Iterable[str] = DEFAULT_GLOBS,
    kinds: Iterable[str] = BUILTIN_KINDS,
    link_types: Iterable[str] = BUILTIN_LINK_TYPES,
) -> list[ElementChange]:
    """Requirement delta of *branch* relative to its merge base with *base*."""
    fork = merge_base(repo_root, base, branch)
    return changed_elements(repo_root, fork, branch, include_globs, kinds, link_types)
