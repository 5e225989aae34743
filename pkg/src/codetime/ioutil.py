"""Serialization helpers shared across the toolkit.

All artifact files are NDJSON/JSON/CSV written atomically (temp file +
rename) with deterministic formatting, so identical inputs and seeds
yield byte-identical outputs.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from typing import Any, Iterable, Iterator

import numpy as np


class CodetimeError(Exception):
    """Base class for data/model errors surfaced to the CLI (exit code 2)."""


class DataError(CodetimeError):
    pass


def _plain(obj: Any) -> Any:
    """Recursively convert numpy scalars/arrays to plain Python values.

    Floats are round-tripped through 17-significant-digit formatting,
    which is lossless for float64 and pins the serialized form.
    """
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(f"{float(obj):.17g}")
    return obj


def dumps(obj: Any) -> str:
    """Deterministic compact JSON encoding (insertion-ordered keys)."""
    return json.dumps(_plain(obj), ensure_ascii=False, separators=(",", ":"))


def atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_ndjson(path: str, records: Iterable[dict]) -> None:
    atomic_write_text(path, "".join(dumps(r) + "\n" for r in records))


def read_ndjson(path: str) -> Iterator[dict]:
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_json(path: str, obj: Any) -> None:
    atomic_write_text(path, json.dumps(_plain(obj), ensure_ascii=False, indent=1) + "\n")


def read_json(path: str) -> Any:
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_csv(path: str, header: list[str], rows: Iterable[Iterable[Any]]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(_plain(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def text_sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def derive_seed(root_seed: int, *labels: Any) -> int:
    """Stable per-stage seed derivation from one root seed."""
    key = "/".join([str(int(root_seed))] + [str(x) for x in labels])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2**63 - 1)
