"""ASCII scenario maps and flat key=value config files.

Map format: one character per cell, '#' obstacle, '.' free, 'O' the
operation center (exactly one). Lines starting with ';' are metadata and
are ignored. All map lines must have equal length.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import OccupancyGrid

OBSTACLE = "#"
FREE = "."
CENTER = "O"


class ScenarioError(ValueError):
    """Raised for malformed scenario files; carries line/column context."""


def loads_scenario(text: str) -> OccupancyGrid:
    rows: list[str] = []
    oc: tuple[int, int] | None = None
    lineno = 0
    for raw in text.splitlines():
        lineno += 1
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith(";"):
            continue
        if rows and len(line) != len(rows[0]):
            raise ScenarioError(
                f"line {lineno}: ragged row (expected {len(rows[0])} columns,"
                f" got {len(line)})")
        for col, ch in enumerate(line):
            if ch == CENTER:
                if oc is not None:
                    raise ScenarioError(
                        f"line {lineno}, column {col + 1}: duplicate '{CENTER}'")
                oc = (len(rows), col)
            elif ch not in (OBSTACLE, FREE):
                raise ScenarioError(
                    f"line {lineno}, column {col + 1}: unknown character {ch!r}")
        rows.append(line)
    if not rows:
        raise ScenarioError("empty scenario")
    if oc is None:
        raise ScenarioError(f"no '{CENTER}' operation-center cell")
    height, width = len(rows), len(rows[0])
    free = np.empty((height, width), dtype=bool)
    for y, line in enumerate(rows):
        for x, ch in enumerate(line):
            free[y, x] = ch != OBSTACLE
    return OccupancyGrid(free=free, oc=oc[0] * width + oc[1])


def load_scenario(path) -> OccupancyGrid:
    return loads_scenario(Path(path).read_text())


def dumps_scenario(grid: OccupancyGrid) -> str:
    ocx, ocy = grid.xy(grid.oc)
    lines = []
    for y in range(grid.height):
        chars = []
        for x in range(grid.width):
            if (x, y) == (ocx, ocy):
                chars.append(CENTER)
            elif grid.free[y, x]:
                chars.append(FREE)
            else:
                chars.append(OBSTACLE)
        lines.append("".join(chars))
    return "\n".join(lines) + "\n"


def save_scenario(grid: OccupancyGrid, path) -> None:
    Path(path).write_text(dumps_scenario(grid))


def loads_config(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' and ';' start comments."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path) -> dict[str, str]:
    return loads_config(Path(path).read_text())
