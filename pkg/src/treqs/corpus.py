"""Collect requirement files from the working tree."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from treqs.config import Config
from treqs.model import Model, build_model
from treqs.parser import ParseResult, parse_file
from treqs.vcs import GitError, git


class CorpusError(OSError):
    """A requirement file or directory could not be read."""


@dataclass
class Corpus:
    root: Path
    files: list[ParseResult]
    model: Model


def _tracked_and_untracked(root: Path) -> list[str] | None:
    try:
        out = git(root, "ls-files", "-z", "--cached", "--others", "--exclude-standard")
    except GitError:
        return None
    return sorted({p for p in out.split("\0") if p})


def _walk(directory: Path) -> list[Path]:
    found = []
    for dirpath, dirnames, filenames in os.walk(directory):
        dirnames[:] = sorted(d for d in dirnames if not d.startswith("."))
        found.extend(Path(dirpath) / f for f in filenames)
    return sorted(found)


def relpath(root: Path, path: Path) -> str:
    try:
        rel = path.resolve().relative_to(root.resolve())
    except ValueError:
        raise CorpusError(f"{path} is outside the repository root {root}") from None
    return rel.as_posix()


def read_text(path: Path) -> str:
    try:
        return path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusError(f"{path}: not valid UTF-8 ({exc.reason})") from None
    except OSError as exc:
        raise CorpusError(f"{path}: {exc.strerror or exc}") from None


def discover(root: Path, config: Config, paths: Iterable[Path] = ()) -> list[Path]:
    """Requirement files to read.

    With explicit *paths*, files are taken as given and directories are
    walked; otherwise the whole repository is scanned (git's view of it when
    *root* is a work tree, so ignored files stay out). Directory contents are
    filtered by the include globs.
    """
    paths = list(paths)
    if not paths:
        listed = _tracked_and_untracked(root)
        if listed is not None:
            return [root / p for p in listed if config.matches(p) and (root / p).is_file()]
        paths = [root]
    chosen: list[Path] = []
    for p in paths:
        if p.is_dir():
            chosen.extend(f for f in _walk(p) if config.matches(relpath(root, f)))
        elif p.is_file():
            chosen.append(p)
        else:
            raise CorpusError(f"{p}: no such file or directory")
    return sorted(set(chosen))


def load_corpus(root: Path, config: Config, paths: Iterable[Path] = ()) -> Corpus:
    files = [parse_file(relpath(root, p), read_text(p)) for p in discover(root, config, paths)]
    model = build_model(files, kinds=config.kinds, link_types=config.link_types)
    return Corpus(root=root, files=files, model=model)
