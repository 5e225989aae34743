"""Commit corpus ingestion: git history to timestamped, filtered diffs.

The canonical corpus is NDJSON, one commit per line:

    {"commit": "...", "author": "...", "project": "...",
     "author_time_utc_min": 12345678,
     "diffs": [{"path": "...", "lang": "java", "added": [...], "deleted": [...]}]}

Timestamps are UTC minutes since the epoch; sub-minute precision is
discarded because the coding-time model works on a one-minute grid.
"""
from __future__ import annotations

import difflib
import os
import subprocess
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .ioutil import DataError, dumps, read_json, read_ndjson, write_ndjson

SQUASH_THRESHOLD_MINUTES = 2

DEFAULT_EXTENSION_ALLOWLIST: Mapping[str, frozenset[str]] = {
    "java": frozenset({".java"}),
    "python": frozenset({".py"}),
    "javascript": frozenset({".js", ".jsx"}),
    "typescript": frozenset({".ts", ".tsx"}),
    "c": frozenset({".c", ".h"}),
    "cpp": frozenset({".cc", ".cpp", ".cxx", ".hpp", ".hh"}),
    "go": frozenset({".go"}),
    "rust": frozenset({".rs"}),
    "ruby": frozenset({".rb"}),
    "csharp": frozenset({".cs"}),
    "kotlin": frozenset({".kt"}),
    "scala": frozenset({".scala"}),
}

DEFAULT_EXCLUDED_FRAGMENTS = frozenset({"vendor", "third_party", "generated", "dist", "build"})
DEFAULT_GENERATED_MARKERS = ("DO NOT EDIT", "@generated")


@dataclass(frozen=True)
class FileDiff:
    """One file's line-level change. A modified line counts as one
    deleted plus one added line."""

    path: str
    language: str
    added_lines: tuple[str, ...]
    deleted_lines: tuple[str, ...]


@dataclass(frozen=True)
class Commit:
    commit_id: str
    author_id: str
    project_id: str
    author_time: int  # UTC minutes since epoch
    file_diffs: tuple[FileDiff, ...]

    def lines_added(self) -> int:
        return sum(len(d.added_lines) for d in self.file_diffs)

    def lines_deleted(self) -> int:
        return sum(len(d.deleted_lines) for d in self.file_diffs)


@dataclass(frozen=True)
class FilterRules:
    """File-level filtering: allowlisted extensions, excluded path
    fragments, minified and generated-file heuristics.

    Verdicts depend only on (path, added lines, deleted lines), so the
    same input always yields the same decision regardless of source.
    """

    extension_allowlist: Mapping[str, frozenset[str]] = field(
        default_factory=lambda: dict(DEFAULT_EXTENSION_ALLOWLIST)
    )
    excluded_path_fragments: frozenset[str] = DEFAULT_EXCLUDED_FRAGMENTS
    minified_mean_line_length: float = 200.0
    generated_markers: tuple[str, ...] = DEFAULT_GENERATED_MARKERS
    generated_scan_lines: int = 5

    def language_of(self, path: str) -> str | None:
        _, ext = os.path.splitext(path)
        ext = ext.lower()
        for lang, exts in self.extension_allowlist.items():
            if ext in exts:
                return lang
        return None

    def verdict(self, path: str, added: Sequence[str], deleted: Sequence[str]) -> str | None:
        """Return the file's language if it passes all filters, else None."""
        lang = self.language_of(path)
        if lang is None:
            return None
        if any(frag in path for frag in self.excluded_path_fragments):
            return None
        lines = list(added) + list(deleted)
        if lines:
            mean_len = sum(len(ln) for ln in lines) / len(lines)
            if mean_len > self.minified_mean_line_length:
                return None
        for ln in list(added)[: self.generated_scan_lines]:
            if any(marker in ln for marker in self.generated_markers):
                return None
        return lang

    @classmethod
    def from_json(cls, path: str) -> "FilterRules":
        raw = read_json(path)
        kwargs = {}
        if "extension_allowlist" in raw:
            kwargs["extension_allowlist"] = {
                lang: frozenset(e.lower() for e in exts)
                for lang, exts in raw["extension_allowlist"].items()
            }
        if "excluded_path_fragments" in raw:
            kwargs["excluded_path_fragments"] = frozenset(raw["excluded_path_fragments"])
        if "minified_mean_line_length" in raw:
            kwargs["minified_mean_line_length"] = float(raw["minified_mean_line_length"])
        if "generated_markers" in raw:
            kwargs["generated_markers"] = tuple(raw["generated_markers"])
        if "generated_scan_lines" in raw:
            kwargs["generated_scan_lines"] = int(raw["generated_scan_lines"])
        return cls(**kwargs)


@dataclass(frozen=True)
class CommitCorpus:
    """Immutable collection of commits; safe to share across workers."""

    commits: tuple[Commit, ...]
    warnings: Mapping[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.commits)

    def by_author(self, by_project: bool = False) -> dict:
        """Time-ordered commit streams keyed by author (optionally by
        (author, project))."""
        streams: dict = {}
        for c in self.commits:
            key = (c.author_id, c.project_id) if by_project else c.author_id
            streams.setdefault(key, []).append(c)
        for key in streams:
            streams[key].sort(key=lambda c: (c.author_time, c.commit_id))
        return streams

    def projects(self) -> dict[str, list[Commit]]:
        out: dict[str, list[Commit]] = {}
        for c in self.commits:
            out.setdefault(c.project_id, []).append(c)
        return out


def compute_diff(parent_text: str, child_text: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Line-level LCS edit script: (added, deleted) line tuples.

    Applying "delete then add" to the parent's line multiset yields the
    child's line multiset.
    """
    parent = parent_text.splitlines()
    child = child_text.splitlines()
    matcher = difflib.SequenceMatcher(a=parent, b=child, autojunk=False)
    added: list[str] = []
    deleted: list[str] = []
    for op, i1, i2, j1, j2 in matcher.get_opcodes():
        if op in ("delete", "replace"):
            deleted.extend(parent[i1:i2])
        if op in ("insert", "replace"):
            added.extend(child[j1:j2])
    return tuple(added), tuple(deleted)


def squash_commits(
    commits: Sequence[Commit], threshold_minutes: int = SQUASH_THRESHOLD_MINUTES
) -> list[Commit]:
    """Merge maximal runs of one author's commits whose successive gaps
    are strictly below the threshold.

    The merged commit keeps the last run member's identity and
    timestamp and concatenates all run members' diffs. Idempotent.
    """
    if not commits:
        return []
    times = [c.author_time for c in commits]
    if any(t2 < t1 for t1, t2 in zip(times, times[1:])):
        raise DataError("squash_commits requires commits sorted by author_time")
    out: list[Commit] = []
    run: list[Commit] = [commits[0]]
    for c in commits[1:]:
        if c.author_time - run[-1].author_time < threshold_minutes:
            run.append(c)
        else:
            out.append(_merge_run(run))
            run = [c]
    out.append(_merge_run(run))
    return out


def _merge_run(run: list[Commit]) -> Commit:
    if len(run) == 1:
        return run[0]
    diffs: list[FileDiff] = []
    for c in run:
        diffs.extend(c.file_diffs)
    return replace(run[-1], file_diffs=tuple(diffs))


def squash_corpus(
    corpus: CommitCorpus,
    threshold_minutes: int = SQUASH_THRESHOLD_MINUTES,
    by_project: bool = False,
) -> CommitCorpus:
    """Apply squashing per author stream (or per (author, project))."""
    merged: list[Commit] = []
    for _, commits in sorted(corpus.by_author(by_project=by_project).items()):
        merged.extend(squash_commits(commits, threshold_minutes))
    merged.sort(key=lambda c: (c.author_time, c.commit_id))
    return CommitCorpus(commits=tuple(merged), warnings=dict(corpus.warnings))


# --- git ingestion ---------------------------------------------------------

_REC_SEP = "\x01"
_FIELD_SEP = "\x02"


def ingest_git_log(repo_path: str, rules: FilterRules, project_id: str | None = None) -> CommitCorpus:
    """Read a corpus from a git repository or an NDJSON commit-log export.

    Git repositories are read with one `git log` pass over HEAD's
    history; merge commits are diffed against their first parent only.
    Files that fail the filter rules contribute no diff; files whose
    patch text cannot be decoded are skipped and counted in
    ``warnings["undecodable_files"]``.
    """
    if os.path.isfile(repo_path):
        return load_corpus(repo_path, rules=rules)
    if not os.path.isdir(repo_path):
        raise DataError(f"not a git repository or corpus file: {repo_path}")
    if project_id is None:
        project_id = os.path.basename(os.path.abspath(repo_path))

    cmd = [
        "git",
        "-C",
        repo_path,
        "log",
        "--no-color",
        "--no-renames",
        "--diff-merges=first-parent",
        "-p",
        f"--pretty=format:{_REC_SEP}%H{_FIELD_SEP}%ae{_FIELD_SEP}%at",
    ]
    try:
        proc = subprocess.run(cmd, capture_output=True, check=True)
    except (subprocess.CalledProcessError, FileNotFoundError) as exc:
        detail = exc.stderr.decode("utf-8", "replace") if getattr(exc, "stderr", None) else str(exc)
        raise DataError(f"unreadable repository {repo_path}: {detail.strip()}") from exc

    commits: list[Commit] = []
    undecodable = 0
    for record in proc.stdout.split(_REC_SEP.encode())[1:]:
        header, _, patch = record.partition(b"\n")
        commit_hash, author, at_secs = header.decode("utf-8", "replace").split(_FIELD_SEP)
        diffs, skipped = _parse_patch_bytes(patch, rules)
        undecodable += skipped
        commits.append(
            Commit(
                commit_id=commit_hash,
                author_id=author,
                project_id=project_id,
                author_time=int(at_secs) // 60,
                file_diffs=tuple(diffs),
            )
        )
    commits.sort(key=lambda c: (c.author_time, c.commit_id))
    warnings = {"undecodable_files": undecodable} if undecodable else {}
    return CommitCorpus(commits=tuple(commits), warnings=warnings)


def _parse_patch_bytes(patch: bytes, rules: FilterRules) -> tuple[list[FileDiff], int]:
    diffs: list[FileDiff] = []
    undecodable = 0
    for section in patch.split(b"diff --git ")[1:]:
        try:
            text = section.decode("utf-8")
        except UnicodeDecodeError:
            undecodable += 1
            continue
        fd = _parse_patch_section(text, rules)
        if fd is not None:
            diffs.append(fd)
    return diffs, undecodable


def _parse_patch_section(section: str, rules: FilterRules) -> FileDiff | None:
    lines = section.split("\n")
    path = _path_from_diff_header(lines[0])
    if path is None:
        return None
    added: list[str] = []
    deleted: list[str] = []
    in_hunk = False
    for ln in lines[1:]:
        if ln.startswith("@@"):
            in_hunk = True
            continue
        if not in_hunk:
            continue
        if ln.startswith("+"):
            added.append(ln[1:])
        elif ln.startswith("-"):
            deleted.append(ln[1:])
        elif ln.startswith("\\"):
            continue  # "\ No newline at end of file"
        elif not ln.startswith(" ") and ln:
            in_hunk = False
    lang = rules.verdict(path, added, deleted)
    if lang is None:
        return None
    return FileDiff(path=path, language=lang, added_lines=tuple(added), deleted_lines=tuple(deleted))


def _path_from_diff_header(header: str) -> str | None:
    # header looks like: a/some/path b/some/path  (quoting is rare; skip quoted)
    if header.startswith('"'):
        return None
    parts = header.split(" b/")
    if len(parts) < 2:
        return None
    return parts[-1]


def parse_patch_file(path: str, rules: FilterRules | None = None) -> tuple[FileDiff, ...]:
    """Parse a unified-diff patch file into FileDiffs (for `predict`)."""
    rules = rules or FilterRules()
    with open(path, "rb") as fh:
        data = fh.read()
    diffs, _ = _parse_patch_bytes(data, rules)
    if not diffs:
        # fall back: plain unified diff without git headers
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataError(f"undecodable patch file: {path}") from exc
        diffs = list(_parse_plain_unified(text, rules))
    return tuple(diffs)


def _parse_plain_unified(text: str, rules: FilterRules) -> Iterable[FileDiff]:
    path = None
    added: list[str] = []
    deleted: list[str] = []

    def flush():
        if path is None:
            return None
        lang = rules.verdict(path, added, deleted) or rules.language_of(path) or "other"
        return FileDiff(path=path, language=lang, added_lines=tuple(added), deleted_lines=tuple(deleted))

    for ln in text.split("\n"):
        if ln.startswith("+++ "):
            fd = flush()
            if fd is not None:
                yield fd
            target = ln[4:].strip()
            path = target[2:] if target.startswith("b/") else target
            added, deleted = [], []
        elif ln.startswith("--- ") or ln.startswith("@@"):
            continue
        elif ln.startswith("+"):
            added.append(ln[1:])
        elif ln.startswith("-"):
            deleted.append(ln[1:])
    fd = flush()
    if fd is not None:
        yield fd


# --- NDJSON corpus file ----------------------------------------------------


def commit_to_record(c: Commit) -> dict:
    return {
        "commit": c.commit_id,
        "author": c.author_id,
        "project": c.project_id,
        "author_time_utc_min": int(c.author_time),
        "diffs": [
            {
                "path": d.path,
                "lang": d.language,
                "added": list(d.added_lines),
                "deleted": list(d.deleted_lines),
            }
            for d in c.file_diffs
        ],
    }


def commit_from_record(rec: dict) -> Commit:
    return Commit(
        commit_id=rec["commit"],
        author_id=rec["author"],
        project_id=rec["project"],
        author_time=int(rec["author_time_utc_min"]),
        file_diffs=tuple(
            FileDiff(
                path=d["path"],
                language=d["lang"],
                added_lines=tuple(d["added"]),
                deleted_lines=tuple(d["deleted"]),
            )
            for d in rec.get("diffs", [])
        ),
    )


def save_corpus(corpus: CommitCorpus, path: str) -> None:
    write_ndjson(path, (commit_to_record(c) for c in corpus.commits))


def load_corpus(path: str, rules: FilterRules | None = None) -> CommitCorpus:
    """Load an NDJSON corpus; when rules are given, re-apply filtering."""
    commits = []
    for rec in read_ndjson(path):
        c = commit_from_record(rec)
        if rules is not None:
            kept = tuple(
                replace(d, language=lang)
                for d in c.file_diffs
                for lang in [rules.verdict(d.path, d.added_lines, d.deleted_lines)]
                if lang is not None
            )
            c = replace(c, file_diffs=kept)
        commits.append(c)
    commits.sort(key=lambda c: (c.author_time, c.commit_id))
    seen = set()
    for c in commits:
        if c.commit_id in seen:
            raise DataError(f"duplicate commit_id in corpus: {c.commit_id}")
        seen.add(c.commit_id)
    return CommitCorpus(commits=tuple(commits))
