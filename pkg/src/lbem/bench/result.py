from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Table:
    name: str
    header: list[str]
    rows: list[list]


@dataclass
class Result:
    tables: list[Table]
    files: dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    inputs: dict[str, bytes] = field(default_factory=dict)
