"""Trace and summary file I/O.

Trace format: UTF-8 CSV, one record per line after the header:

    bin_index,photon_count,pulse,true_state

pulse is 0 (none), 1 (repump) or 2 (depump); true_state is -1 when ground
truth is withheld. The format is deliberately plain so traces diff cleanly
and can be parsed from any language.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

from .model import Pulse, TraceRecord

TRACE_HEADER = "bin_index,photon_count,pulse,true_state"


def format_trace(records: Iterable[TraceRecord]) -> str:
    lines = [TRACE_HEADER]
    for r in records:
        ts = -1 if r.true_state is None else r.true_state
        lines.append(f"{r.bin_index},{r.photon_count},{int(r.pulse)},{ts}")
    return "\n".join(lines) + "\n"


def write_trace(path: Path, records: Iterable[TraceRecord]) -> None:
    Path(path).write_text(format_trace(records), encoding="utf-8")


def parse_trace(text: str) -> list[TraceRecord]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != TRACE_HEADER:
        raise ValueError(f"trace file must start with header {TRACE_HEADER!r}")
    records = []
    prev_index = -1
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected 4 comma-separated fields")
        try:
            idx, count, pulse, true_state = (int(p) for p in parts)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if idx <= prev_index:
            raise ValueError(f"line {lineno}: bin_index must be strictly increasing")
        prev_index = idx
        records.append(
            TraceRecord(
                idx,
                count,
                Pulse(pulse),
                true_state=None if true_state == -1 else true_state,
            )
        )
    return records


def read_trace(path: Path) -> list[TraceRecord]:
    return parse_trace(Path(path).read_text(encoding="utf-8"))


def config_digest(config_text: str) -> str:
    return hashlib.sha256(config_text.encode("utf-8")).hexdigest()


def write_manifest(path: Path, payload: dict) -> None:
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_manifest(path: Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
