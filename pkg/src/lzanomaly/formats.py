"""Plain-text inputs other than transaction CSVs."""

from __future__ import annotations

import csv

import numpy as np

from .errors import RecordError, SchemaError


def read_symbol_rows(path) -> list:
    """One sequence per CSV row of integer symbols; ``#`` lines are comments."""
    seqs = []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            try:
                seqs.append(np.array([int(x) for x in row if x.strip() != ""], dtype=np.int64))
            except ValueError as exc:
                raise RecordError(i, f"non-integer symbol ({exc})") from None
    return seqs


def write_symbol_rows(seqs, stream) -> None:
    for s in seqs:
        stream.write(",".join(str(int(x)) for x in s))
        stream.write("\n")


def read_category_mapping(path) -> tuple:
    """Two-column ``call_name,category`` CSV.

    Returns ``(mapping, categories)``; category indices follow first
    appearance in the file. A ``call_name,category`` header row is optional.
    """
    mapping = {}
    categories = []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            if i == 1 and [c.strip().lower() for c in row] == ["call_name", "category"]:
                continue
            if len(row) != 2:
                raise RecordError(i, "expected call_name,category")
            name, cat = row[0].strip(), row[1].strip()
            if cat not in categories:
                categories.append(cat)
            mapping[name] = categories.index(cat)
    if len(categories) < 2:
        raise SchemaError("category mapping needs at least 2 categories")
    return mapping, categories


def read_calls(path, mapping: dict, strict: bool = False) -> np.ndarray:
    """Recorded call trace, one call per line (first whitespace token).

    Calls missing from the mapping raise in strict mode, else are skipped.
    """
    out = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            name = parts[0]
            if name in mapping:
                out.append(mapping[name])
            elif strict:
                raise RecordError(i, f"call {name!r} has no category")
    return np.array(out, dtype=np.int64)
