"""Self-describing CSV files.

Layout: ``#`` comment lines (tool, mode, resolved config as JSON, column
descriptions), one header row, data rows.  Floats are written with
``repr`` so that every value round-trips exactly.
"""

from __future__ import annotations

import io
import json
import math
from pathlib import Path

import numpy as np

from . import __version__

TOOL = "aloha-uncertainty"


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "nan" if math.isnan(value) else repr(value)
    text = str(value)
    if any(ch in text for ch in ',"\n'):
        text = '"' + text.replace('"', '""') + '"'
    return text


def config_json(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def render_csv(columns, rows, config: dict, units: dict | None = None, notes=()) -> str:
    """CSV text for ``rows`` (dicts or sequences) with a provenance header."""
    units = units or {}
    buf = io.StringIO()
    buf.write(f"# {TOOL} {__version__} mode={config.get('mode', '')}\n")
    buf.write(f"# config: {config_json(config)}\n")
    buf.write("# columns: " + "; ".join(f"{c} [{units[c]}]" if c in units else c for c in columns) + "\n")
    for note in notes:
        buf.write(f"# {note}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        values = [row.get(c, "") for c in columns] if isinstance(row, dict) else list(row)
        if len(values) != len(columns):
            raise ValueError(f"row has {len(values)} values for {len(columns)} columns")
        buf.write(",".join(_cell(v) for v in values) + "\n")
    return buf.getvalue()


def write_text(text: str, path: str | Path | None) -> None:
    if path is None or str(path) == "-":
        import sys

        sys.stdout.write(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def read_config_line(path: str | Path) -> dict:
    """The resolved config stored in a CSV written by :func:`render_csv`."""
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# config: "):
            return json.loads(line[len("# config: ") :])
        if not line.startswith("#"):
            break
    raise ValueError(f"{path} has no '# config:' provenance line")
