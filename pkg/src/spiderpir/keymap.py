"""Stable key-to-index mapping for keyed corpora.

Keys are sorted lexicographically (as Unicode strings) and ranked; the
resulting indices are 0-based to match database files and the wire.  The
map is saved as UTF-8 TSV, one "key<TAB>index" line per key, in key order.
"""

from __future__ import annotations

from pathlib import Path

from .errors import DuplicateKeyError


def build_keymap(keys) -> dict[str, int]:
    """Rank keys by sorted order; raises DuplicateKeyError listing repeats."""
    keys = list(keys)
    seen: set[str] = set()
    duplicates: list[str] = []
    for key in keys:
        if key in seen and key not in duplicates:
            duplicates.append(key)
        seen.add(key)
    if duplicates:
        raise DuplicateKeyError(sorted(duplicates))
    return {key: index for index, key in enumerate(sorted(keys))}


def save_keymap(keymap: dict[str, int], path: str | Path) -> Path:
    path = Path(path)
    lines = [f"{key}\t{index}\n" for key, index in sorted(keymap.items())]
    path.write_text("".join(lines), encoding="utf-8")
    return path


def load_keymap(path: str | Path) -> dict[str, int]:
    keymap: dict[str, int] = {}
    for line_number, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line:
            continue
        key, _, index = line.rpartition("\t")
        if not key:
            raise ValueError(f"line {line_number}: no tab separator")
        keymap[key] = int(index)
    return keymap
