"""Loading the measured tables that ship as CSV fixtures."""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Union

__all__ = ["FixtureError", "Grid", "fixture_dir", "load_grid", "fixture_digest", "TABLES"]

#: file name -> allowed cell alphabet
TABLES = {
    "table2": frozenset("HCN"),
    "table4": frozenset("HCN"),
    "table5": frozenset("01"),
}


class FixtureError(Exception):
    """A fixture file is missing or malformed."""


@dataclass(frozen=True)
class Grid:
    """Rows keyed by runtime/language id, columns by signal number 1..31."""

    rows: dict[str, str]

    def cell(self, row: str, signal: int) -> str:
        return self.rows[row][signal - 1]

    def diff(self, other: "Grid", signals=range(1, 32)) -> list[tuple[str, int, str, str]]:
        """Cells where ``other`` disagrees with ``self`` as (row, signal, expected, got)."""
        out = []
        for row, got in other.rows.items():
            want = self.rows.get(row)
            if want is None:
                raise FixtureError(f"fixture has no row {row!r}")
            for n in signals:
                if want[n - 1] != got[n - 1]:
                    out.append((row, n, want[n - 1], got[n - 1]))
        return out

    def render(self, signals=range(1, 32)) -> str:
        signals = list(signals)
        width = max(len(r) for r in self.rows) if self.rows else 4
        head = " " * width + " " + " ".join(f"{n:>2}" for n in signals)
        lines = [head]
        for row, cells in self.rows.items():
            lines.append(f"{row:<{width}} " + " ".join(f"{cells[n - 1]:>2}" for n in signals))
        return "\n".join(lines)


def fixture_dir(override: Optional[Union[str, Path]] = None) -> Path:
    if override is not None:
        return Path(override)
    return Path(str(resources.files("sgxsignal") / "fixtures"))


def _path(name: str, directory) -> Path:
    path = fixture_dir(directory) / f"{name}.csv"
    if not path.is_file():
        raise FixtureError(f"missing fixture {path}")
    return path


def load_grid(name: str, directory=None) -> Grid:
    path = _path(name, directory)
    alphabet = TABLES[name]
    rows: dict[str, str] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FixtureError(f"{path} is empty") from None
        if header[1:] != [str(n) for n in range(1, 32)]:
            raise FixtureError(f"{path}: header must list signals 1..31")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 32:
                raise FixtureError(f"{path}:{lineno}: expected 32 fields, got {len(rec)}")
            cells = "".join(c.strip() for c in rec[1:])
            bad = set(cells) - alphabet
            if bad or len(cells) != 31:
                raise FixtureError(f"{path}:{lineno}: invalid cells {sorted(bad)}")
            rows[rec[0].strip()] = cells
    return Grid(rows)


def load_modes(directory=None) -> dict[str, tuple[bool, bool]]:
    """Rows of the implicit/explicit support table."""
    path = _path("table6", directory)
    out = {}
    with path.open(newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            try:
                out[rec["language"]] = (rec["implicit"] == "1", rec["explicit"] == "1")
            except KeyError as exc:
                raise FixtureError(f"{path}: missing column {exc}") from None
    return out


def fixture_digest(name: str, directory=None) -> str:
    return hashlib.sha256(_path(name, directory).read_bytes()).hexdigest()
