"""File formats: comparison files, season game files, scenario configs.

Comparison files are UTF-8 CSV with header ``i,j,y`` and one comparison
per row; items are 1-based integers and rows with j < i are ingested as
the negated (i, j) outcome. Game files carry
``season,home,away,home_score,away_score`` rows; the outcome is the
signed point differential under the same canonical orientation.
"""

from __future__ import annotations

import csv
import os
import sys

import yaml

from .errors import InputError, ParseError
from .graph import ComparisonGraph
from .seasons import SeasonPanel
from .simulate import Scenario, scenario_from_dict

COMPARISON_HEADER = ["i", "j", "y"]
GAMES_HEADER = ["season", "home", "away", "home_score", "away_score"]


def read_comparisons(path: str) -> ComparisonGraph:
    """Load a comparison graph; K is the largest item index present."""
    rows: list[tuple[int, int, float]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file: expected header i,j,y", path=path, line=1)
        if [h.strip().lower() for h in header] != COMPARISON_HEADER:
            raise ParseError(
                f"bad header {header!r}: expected i,j,y", path=path, line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", path=path, line=lineno)
            try:
                i = int(row[0])
                j = int(row[1])
                y = float(row[2])
            except ValueError as exc:
                raise ParseError(str(exc), path=path, line=lineno) from None
            if i < 1 or j < 1:
                raise ParseError("items are 1-based positive integers", path=path, line=lineno)
            if i == j:
                raise ParseError(f"item {i} compared with itself", path=path, line=lineno)
            rows.append((i, j, y))
    if not rows:
        raise ParseError("no comparison rows", path=path, line=2)
    k = max(max(i, j) for i, j, _ in rows)
    return ComparisonGraph.from_comparisons(k, rows)


def write_comparisons(g: ComparisonGraph, target) -> None:
    """Write the canonical form: lexicographic pairs, stored sample order,
    shortest round-trip decimals."""

    def _write(fh) -> None:
        fh.write("i,j,y\n")
        for e in range(g.edge_count):
            i, j = int(g.pairs[e, 0]), int(g.pairs[e, 1])
            for y in g.flat_values[g.offsets[e] : g.offsets[e + 1]]:
                fh.write(f"{i},{j},{float(y)!r}\n")

    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", encoding="utf-8", newline="") as fh:
            _write(fh)
    else:
        _write(target)


def _read_games_file(path: str, games: dict[str, list[tuple[str, str, float]]]) -> None:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != GAMES_HEADER:
            raise ParseError(
                f"bad header {header!r}: expected {','.join(GAMES_HEADER)}",
                path=path,
                line=1,
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 5:
                raise ParseError(f"expected 5 fields, got {len(row)}", path=path, line=lineno)
            season = row[0].strip()
            home = row[1].strip()
            away = row[2].strip()
            if not season or not home or not away or home == away:
                raise ParseError("bad season/team fields", path=path, line=lineno)
            try:
                diff = float(row[3]) - float(row[4])
            except ValueError as exc:
                raise ParseError(str(exc), path=path, line=lineno) from None
            games.setdefault(season, []).append((home, away, diff))


def read_season_panel(path: str) -> SeasonPanel:
    """Build a panel from one games file or a directory of them.

    Seasons sort by label; teams sort by name and index every season. Every
    team must appear in every season.
    """
    games: dict[str, list[tuple[str, str, float]]] = {}
    if os.path.isdir(path):
        files = sorted(
            os.path.join(path, f) for f in os.listdir(path) if f.endswith(".csv")
        )
        if not files:
            raise InputError(f"no .csv season files in {path}")
        for f in files:
            _read_games_file(f, games)
    else:
        _read_games_file(path, games)
    if not games:
        raise InputError("no game rows found")
    labels = tuple(sorted(games))
    teams = tuple(sorted({t for rows in games.values() for hw, aw, _ in rows for t in (hw, aw)}))
    index = {t: n for n, t in enumerate(teams, start=1)}
    graphs = []
    for label in labels:
        seen = {t for hw, aw, _ in games[label] for t in (hw, aw)}
        missing = set(teams) - seen
        if missing:
            raise InputError(
                f"season {label} is missing teams: {', '.join(sorted(missing))}"
            )
        rows = []
        for home, away, diff in games[label]:
            hi, ai = index[home], index[away]
            if hi < ai:
                rows.append((hi, ai, diff))
            else:
                rows.append((ai, hi, -diff))
        graphs.append(ComparisonGraph.from_comparisons(len(teams), rows))
    return SeasonPanel.build(teams=teams, labels=labels, graphs=tuple(graphs))


def read_scenario(path: str) -> Scenario:
    """Parse a YAML scenario file; see the CLI documentation for the schema."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ParseError(f"bad YAML: {exc}", path=path) from None
    return scenario_from_dict(raw if raw is not None else {})


def render_to(text: str, out: str | None) -> None:
    """Write report text to a file or stdout."""
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
