"""Command-line interface.

Exit status: 0 clean, 1 findings or pending reformat, 2 usage / IO / revision
error.
"""

from __future__ import annotations

import argparse
import os
import stat
import sys
from pathlib import Path
from typing import Sequence

from treqs import __version__
from treqs.config import Config, ConfigError, load_config
from treqs.corpus import Corpus, CorpusError, discover, load_corpus, read_text, relpath
from treqs.graph import build_graph, coverage, cycle_findings, dangling_links
from treqs.model import Finding, Model, RequirementElement, SourceSpan
from treqs.parser import format_text, generate_id, parse_file, serialize_element, split_lines
from treqs.report import FORMATS, change_report, coverage_report, render, traceability_matrix, utc_now
from treqs.vcs import (
    GitError,
    branch_requirements_diff,
    changed_elements,
    git,
    index_model,
    merge_base,
    repo_toplevel,
    resolve,
    scan_commit_refs,
    snapshot_model,
)

EXIT_OK, EXIT_FINDINGS, EXIT_ERROR = 0, 1, 2
HOOK_MARKER = "# treqs-pre-commit-hook"


class UsageError(Exception):
    """Bad invocation detected after argument parsing."""


def _err(message: str) -> None:
    print(f"treqs: error: {message}", file=sys.stderr)


def _warn(message: str) -> None:
    print(f"treqs: warning: {message}", file=sys.stderr)


class Context:
    def __init__(self, args: argparse.Namespace) -> None:
        start = Path(args.root or ".").resolve()
        if not start.is_dir():
            raise CorpusError(f"{start}: not a directory")
        try:
            self.root = repo_toplevel(start)
            self.is_repo = True
        except GitError:
            self.root = start
            self.is_repo = False
        self.config: Config = load_config(self.root)
        for w in self.config.warnings:
            _warn(w)
        self.timestamp = None if getattr(args, "no_timestamp", False) else utc_now()

    def require_repo(self) -> None:
        if not self.is_repo:
            raise GitError(f"{self.root} is not inside a git repository")

    def corpus(self, paths: Sequence[str] = ()) -> Corpus:
        return load_corpus(self.root, self.config, [Path(p) for p in paths])

    def model_at(self, rev: str | None) -> tuple[Model, tuple[str, ...]]:
        if rev is None:
            return self.corpus().model, ()
        self.require_repo()
        model = snapshot_model(
            self.root, rev, self.config.include_globs, self.config.kinds, self.config.link_types
        )
        return model, (resolve(self.root, rev),)

    def check_kind(self, kind: str) -> None:
        if kind not in self.config.kinds:
            raise UsageError(f"unknown kind {kind!r}; known kinds: {', '.join(self.config.kinds)}")

    def check_link_type(self, link_type: str) -> None:
        if link_type not in self.config.link_types:
            raise UsageError(
                f"unknown link type {link_type!r}; known link types: "
                f"{', '.join(self.config.link_types)}"
            )


def collect_findings(model: Model, config: Config, with_coverage: bool = True) -> list[Finding]:
    """Every finding for *model*: parser and model findings, dangling links,
    refinement cycles and, optionally, untested requirements."""
    graph = build_graph(model)
    findings = list(model.findings) + list(graph.findings)
    findings += dangling_links(graph)
    findings += cycle_findings(graph, "refines")
    if with_coverage:
        findings += coverage(graph, model, "requirement", config.default_test_link, "test").findings
    return sorted(findings, key=Finding.sort_key)


# -- commands -----------------------------------------------------------------


def cmd_check(ctx: Context, args: argparse.Namespace) -> int:
    if args.staged:
        ctx.require_repo()
        staged = git(ctx.root, "diff", "--cached", "--name-only", "-z").split("\0")
        if not any(p and ctx.config.matches(p) for p in staged):
            return EXIT_OK
        model = index_model(
            ctx.root, ctx.config.include_globs, ctx.config.kinds, ctx.config.link_types
        )
    else:
        model = ctx.corpus(args.paths).model
    findings = collect_findings(model, ctx.config, with_coverage=not args.no_coverage)
    for f in findings:
        print(f.format())
    if any(f.is_error for f in findings) or (args.strict and findings):
        return EXIT_FINDINGS
    return EXIT_OK


def cmd_list(ctx: Context, args: argparse.Namespace) -> int:
    model = ctx.corpus(args.paths).model
    rows = [("ID", "KIND", "TITLE", "LOCATION")]
    for e in sorted(model.elements.values(), key=lambda e: e.id):
        if args.kind and e.kind != args.kind:
            continue
        if args.id_prefix and not e.id.startswith(args.id_prefix):
            continue
        rows.append((e.id, e.kind, e.title, str(e.span)))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)) + "  " + r[3])
    return EXIT_OK


def cmd_new(ctx: Context, args: argparse.Namespace) -> int:
    ctx.check_kind(args.kind)
    target = Path(args.file)
    if not target.is_absolute():
        target = Path.cwd() / target
    rel = relpath(ctx.root, target)
    existing_text = read_text(target) if target.exists() else ""

    corpus = ctx.corpus()
    taken = {e.id for f in corpus.files for e in f.elements}
    taken |= {e.id for e in parse_file(rel, existing_text).elements}
    new_id = generate_id(args.kind, taken, ctx.config.prefix_for(args.kind))

    _, newline = split_lines(existing_text)
    element = RequirementElement(
        id=new_id,
        kind=args.kind,
        title=args.title,
        title_level=2 if args.title else 0,
        body=("",),
        span=SourceSpan(rel, 1, 1),
    )
    text = serialize_element(element, newline)
    prefix = ""
    if existing_text:
        prefix = ("" if existing_text.endswith("\n") else newline) + newline
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "a", encoding="utf-8", newline="") as fh:
        fh.write(prefix + text)
    if not ctx.config.matches(rel):
        _warn(f"{rel} does not match include_globs; the new element will not be scanned")
    sys.stdout.write(text.replace("\r\n", "\n"))
    print(new_id)
    return EXIT_OK


def _print_report(report, fmt: str) -> None:
    sys.stdout.write(render(report, fmt))


def cmd_changed(ctx: Context, args: argparse.Namespace) -> int:
    ctx.require_repo()
    if args.kind:
        ctx.check_kind(args.kind)
    cfg = ctx.config
    base, head = resolve(ctx.root, args.since), resolve(ctx.root, args.until)
    changes = changed_elements(ctx.root, base, head, cfg.include_globs, cfg.kinds, cfg.link_types)
    commits, problems = scan_commit_refs(ctx.root, f"{base}..{head}")
    for p in problems:
        _warn(p)
    model_base, _ = ctx.model_at(base)
    model_head, _ = ctx.model_at(head)
    report = change_report(
        changes,
        commits,
        model_head,
        audience_filter=args.kind,
        model_base=model_base,
        generated_at=ctx.timestamp,
        source_revisions=(base, head),
        title=f"Requirement changes {args.since}..{args.until}",
    )
    _print_report(report, args.format)
    return EXIT_OK


def cmd_branch_diff(ctx: Context, args: argparse.Namespace) -> int:
    ctx.require_repo()
    if args.kind:
        ctx.check_kind(args.kind)
    cfg = ctx.config
    fork = merge_base(ctx.root, args.base, args.branch)
    head = resolve(ctx.root, args.branch)
    changes = branch_requirements_diff(
        ctx.root, head, args.base, cfg.include_globs, cfg.kinds, cfg.link_types
    )
    commits, problems = scan_commit_refs(ctx.root, f"{fork}..{head}")
    for p in problems:
        _warn(p)
    report = change_report(
        changes,
        commits,
        ctx.model_at(head)[0],
        audience_filter=args.kind,
        model_base=ctx.model_at(fork)[0],
        generated_at=ctx.timestamp,
        source_revisions=(fork, head),
        title=f"Experiment report: {args.branch} against {args.base}",
    )
    _print_report(report, args.format)
    return EXIT_OK


def cmd_matrix(ctx: Context, args: argparse.Namespace) -> int:
    ctx.check_kind(args.rows)
    ctx.check_kind(args.cols)
    ctx.check_link_type(args.via)
    model, revs = ctx.model_at(args.rev)
    report = traceability_matrix(
        build_graph(model),
        model,
        args.rows,
        args.cols,
        args.via,
        direction=args.direction,
        generated_at=ctx.timestamp,
        source_revisions=revs,
    )
    _print_report(report, args.format)
    return EXIT_OK


def cmd_coverage(ctx: Context, args: argparse.Namespace) -> int:
    via = args.via or ctx.config.default_test_link
    ctx.check_kind(args.kind)
    ctx.check_kind(args.from_kind)
    ctx.check_link_type(via)
    model, revs = ctx.model_at(args.rev)
    result = coverage(build_graph(model), model, args.kind, via, args.from_kind)
    report = coverage_report(
        result,
        model,
        generated_at=ctx.timestamp,
        source_revisions=revs,
        title=f"Coverage: {args.kind} by {args.from_kind} ({via})",
    )
    _print_report(report, args.format)
    return EXIT_OK


def cmd_fmt(ctx: Context, args: argparse.Namespace) -> int:
    pending = []
    for path in discover(ctx.root, ctx.config, [Path(p) for p in args.paths]):
        rel = relpath(ctx.root, path)
        content = read_text(path)
        formatted = format_text(rel, content)
        if formatted == content:
            continue
        pending.append(rel)
        if args.check:
            print(f"would reformat {rel}")
            continue
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(formatted)
        except OSError as exc:
            raise CorpusError(f"{path}: {exc.strerror or exc}") from None
        print(f"reformatted {rel}")
    if args.check and pending:
        return EXIT_FINDINGS
    return EXIT_OK


HOOK_TEMPLATE = """#!/bin/sh
{marker} (written by `treqs hook-install`; re-running it is safe)
exec "{python}" -m treqs check --staged
"""


def cmd_hook_install(ctx: Context, args: argparse.Namespace) -> int:
    ctx.require_repo()
    hooks = Path(git(ctx.root, "rev-parse", "--git-path", "hooks").strip())
    if not hooks.is_absolute():
        hooks = ctx.root / hooks
    hook = hooks / "pre-commit"
    if hook.exists() and not args.force:
        if HOOK_MARKER not in read_text(hook):
            raise UsageError(f"{hook} exists and was not written by treqs; use --force to replace it")
    hooks.mkdir(parents=True, exist_ok=True)
    hook.write_text(HOOK_TEMPLATE.format(marker=HOOK_MARKER, python=sys.executable), encoding="utf-8")
    hook.chmod(hook.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    print(f"installed {hook}")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------


def _add_format(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=FORMATS, default="markdown")
    p.add_argument(
        "--no-timestamp", action="store_true", help="omit the generation time (stable output)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treqs", description="Requirements as tagged markdown elements in git."
    )
    parser.add_argument("--version", action="version", version=f"treqs {__version__}")
    parser.add_argument("-C", "--root", metavar="DIR", help="run as if started in DIR")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("check", help="validate elements and trace links")
    p.add_argument("paths", nargs="*", help="files or directories (default: whole repository)")
    p.add_argument("--strict", action="store_true", help="fail on warnings too")
    p.add_argument("--no-coverage", action="store_true", help="skip untested-requirement warnings")
    p.add_argument("--staged", action="store_true", help="check the staged (index) version")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("list", help="list elements")
    p.add_argument("paths", nargs="*")
    p.add_argument("--kind")
    p.add_argument("--id-prefix")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("new", help="append a new element skeleton to a file")
    p.add_argument("--kind", default="requirement")
    p.add_argument("--title", default="")
    p.add_argument("--file", required=True)
    p.set_defaults(func=cmd_new)

    p = sub.add_parser("changed", help="report element changes between two revisions")
    p.add_argument("--since", required=True, metavar="REV")
    p.add_argument("--until", default="HEAD", metavar="REV")
    p.add_argument("--kind", help="only show elements of this kind")
    _add_format(p)
    p.set_defaults(func=cmd_changed)

    p = sub.add_parser("matrix", help="traceability matrix")
    p.add_argument("--rows", default="requirement", metavar="KIND")
    p.add_argument("--cols", default="test", metavar="KIND")
    p.add_argument("--via", default="tests", metavar="LINK_TYPE")
    p.add_argument("--direction", choices=("inbound", "outbound"), default="inbound")
    p.add_argument("--rev", help="read the corpus at this revision instead of the working tree")
    _add_format(p)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("coverage", help="coverage report")
    p.add_argument("--kind", default="requirement")
    p.add_argument("--from", dest="from_kind", default="test", metavar="KIND")
    p.add_argument("--via", metavar="LINK_TYPE", help="default: config default_test_link")
    p.add_argument("--rev")
    _add_format(p)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("branch-diff", help="requirement delta of a branch since its fork point")
    p.add_argument("--base", required=True, metavar="REV")
    p.add_argument("--branch", default="HEAD", metavar="REV")
    p.add_argument("--kind")
    _add_format(p)
    p.set_defaults(func=cmd_branch_diff)

    p = sub.add_parser("fmt", help="normalize elements to one sentence per line")
    p.add_argument("paths", nargs="*")
    p.add_argument("--check", action="store_true", help="write nothing; exit 1 if changes are needed")
    p.set_defaults(func=cmd_fmt)

    p = sub.add_parser("hook-install", help="install the pre-commit hook")
    p.add_argument("--force", action="store_true", help="replace a foreign pre-commit hook")
    p.set_defaults(func=cmd_hook_install)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        ctx = Context(args)
        return args.func(ctx, args)
    except (UsageError, GitError, CorpusError, ConfigError) as exc:
        _err(str(exc))
        return EXIT_ERROR
    except BrokenPipeError:
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
