"""Tabular outputs: CSV with '#' metadata header lines and a JSON mirror.

Column schemas (a sweep prepends a column named after the swept parameter):

* populations: ``t_ns, pop_gs, pop_es, pop_t[, corr_s1s2]``
* spectrum:    ``field_mK, chi_re, chi_im, comp_<label>_re, comp_<label>_im, ...``
* trepr:       ``t_ns, field_mK, chi_re, chi_im`` (long format)

Floats are written as their shortest round-trip text, so CSV and JSON
carry identical doubles and output is byte-reproducible.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["Table", "format_float", "write_table", "read_csv_table", "table_to_csv", "table_to_json"]


def format_float(x) -> str:
    # shortest text that round-trips to the same double
    return repr(float(x))


@dataclass
class Table:
    """Named columns plus metadata; ``rows`` holds Python floats/strings."""

    name: str
    columns: list
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


def _cell(x):
    return x if isinstance(x, str) else format_float(x)


def table_to_csv(table: Table) -> str:
    buf = io.StringIO()
    for key, value in table.metadata.items():
        text = value if isinstance(value, str) else json.dumps(value, sort_keys=True)
        for i, line in enumerate(text.splitlines() or [""]):
            buf.write(f"# {key}: {line}\n" if i == 0 else f"#   {line}\n")
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_cell(x) for x in row])
    return buf.getvalue()


def _json_number(x):
    return x if isinstance(x, str) else float(format_float(x))


def table_to_json(table: Table) -> str:
    doc = {
        "metadata": table.metadata,
        "columns": table.columns,
        "rows": [[_json_number(x) for x in row] for row in table.rows],
    }
    return json.dumps(doc, indent=1, sort_keys=False, allow_nan=False) + "\n"


def write_table(table: Table, directory, fmt: str = "csv"):
    """Write ``<name>.<fmt>`` into ``directory`` and return its path."""
    path = Path(directory) / f"{table.name}.{fmt}"
    text = table_to_csv(table) if fmt == "csv" else table_to_json(table)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def read_csv_table(path) -> Table:
    """Read a CSV written by :func:`write_table` (metadata kept as raw text)."""
    meta, body = {}, []
    with open(path, encoding="utf-8", newline="") as fh:
        for line in fh:
            if line.startswith("# ") and ": " in line:
                key, value = line[2:].rstrip("\n").split(": ", 1)
                meta[key] = value
            elif not line.startswith("#"):
                body.append(line)
    rows = list(csv.reader(body))
    columns, data = rows[0], rows[1:]
    parsed = [[float(x) for x in r] for r in data]
    return Table(Path(path).stem, columns, parsed, meta)
