"""Output documents: named tables of flat records plus run metadata, as JSON or CSV."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

KINDS = ("correlation", "chsh", "scan", "curve", "tally")
SIG_DIGITS = 7


def _round(x, full_precision: bool):
    if isinstance(x, bool) or x is None or isinstance(x, str):
        return x
    if isinstance(x, int):
        return x
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite value {x!r} in output document")
        return x if full_precision else float(f"{x:.{SIG_DIGITS}g}")
    if isinstance(x, (list, tuple)):
        return [_round(v, full_precision) for v in x]
    if isinstance(x, dict):
        return {k: _round(v, full_precision) for k, v in x.items()}
    raise TypeError(f"unsupported value {x!r} in output document")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return v
    return json.dumps(v, separators=(",", ":"))


@dataclass(frozen=True)
class OutputDocument:
    kind: str
    payload: dict[str, list[dict]]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown document kind {self.kind!r}")
        # rejects non-finite numbers early
        _round(self.payload, True)

    def rounded(self, full_precision: bool = False) -> OutputDocument:
        return OutputDocument(
            self.kind, _round(self.payload, full_precision), _round(self.metadata, full_precision)
        )

    def to_json(self, full_precision: bool = False) -> str:
        doc = self.rounded(full_precision)
        body = {"kind": doc.kind, "metadata": doc.metadata, "payload": doc.payload}
        return json.dumps(body, indent=2, allow_nan=False) + "\n"

    def to_csv(self, full_precision: bool = False) -> str:
        """Comment lines carry kind and metadata; each table follows a ``# table:`` line."""
        doc = self.rounded(full_precision)
        out = [f"# kind: {doc.kind}"]
        for k, v in doc.metadata.items():
            out.append(f"# {k}: {json.dumps(v, separators=(',', ':'))}")
        for name, rows in doc.payload.items():
            out.append(f"# table: {name}")
            if not rows:
                continue
            cols = list(rows[0])
            out.append(",".join(cols))
            for row in rows:
                out.append(",".join(_cell(row.get(c)) for c in cols))
        return "\n".join(out) + "\n"

    def render(self, fmt: str = "json", full_precision: bool = False) -> str:
        if fmt == "json":
            return self.to_json(full_precision)
        if fmt == "csv":
            return self.to_csv(full_precision)
        raise ValueError(f"unknown format {fmt!r}")


def parse_csv_tables(text: str) -> dict[str, list[dict[str, str]]]:
    """Read back the tables of :meth:`OutputDocument.to_csv` (cells stay strings)."""
    tables: dict[str, list[dict[str, str]]] = {}
    current = None
    header = None
    for line in text.splitlines():
        if line.startswith("# table: "):
            current = line[len("# table: "):]
            tables[current] = []
            header = None
        elif line.startswith("#") or current is None:
            continue
        elif header is None:
            header = line.split(",")
        else:
            tables[current].append(dict(zip(header, line.split(","))))
    return tables
