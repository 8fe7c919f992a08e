"""Structured text reports: a self-describing key-value header followed by
named TSV tables.

Floats print with ``repr``, the shortest decimal string that round-trips
to the same binary value, so a report regenerated from the same inputs is
byte-identical.
"""

from __future__ import annotations


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return "none"
    return str(value)


class Report:
    def __init__(self, kind: str):
        self.kind = kind
        self._scalars: list[tuple[str, str]] = []
        self._tables: list[tuple[str, list[str], list[list[str]]]] = []

    def scalar(self, key: str, value) -> "Report":
        self._scalars.append((key, format_value(value)))
        return self

    def table(self, name: str, columns: list[str], rows) -> "Report":
        rendered = [[format_value(v) for v in row] for row in rows]
        self._tables.append((name, list(columns), rendered))
        return self

    def render(self) -> str:
        lines = [f"# pcgfit report: {self.kind}"]
        for key, value in self._scalars:
            lines.append(f"{key} = {value}")
        for name, columns, rows in self._tables:
            lines.append("")
            lines.append(f"[table {name}]")
            lines.append("\t".join(columns))
            for row in rows:
                lines.append("\t".join(row))
        return "\n".join(lines) + "\n"
