"""CSV readers and writers for case records and age distributions."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from pathlib import Path
from typing import Iterable

from .cohort import AgeDistribution, PrevalentRecord, ScreeningFrame
from .errors import ParseError

RECORD_COLUMNS = ("bwd", "fwd_obs", "event", "age_cat")


def digest(paths: Iterable[str | Path]) -> str:
    """SHA-256 over the bytes of the given files, in order."""
    h = hashlib.sha256()
    for p in paths:
        data = Path(p).read_bytes()
        h.update(len(data).to_bytes(8, "big"))
        h.update(data)
    return h.hexdigest()


def _float(value: str, line: int, column: str) -> float:
    try:
        x = float(value)
    except ValueError:
        raise ParseError(f"line {line}, column {column}: {value!r} is not a number",
                         line, column) from None
    if not math.isfinite(x):
        raise ParseError(f"line {line}, column {column}: {value!r} is not finite", line, column)
    return x


def _read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None


def parse_records(text: str) -> list[PrevalentRecord]:
    rows = csv.reader(io.StringIO(text))
    try:
        header = next(rows)
    except StopIteration:
        raise ParseError("empty file: expected header bwd,fwd_obs,event,age_cat", 1) from None
    header = [h.strip() for h in header]
    if header[:3] != list(RECORD_COLUMNS[:3]) or len(header) > 4 or (
            len(header) == 4 and header[3] != "age_cat"):
        raise ParseError(f"bad header {header!r}; expected {','.join(RECORD_COLUMNS)}", 1)
    has_age = len(header) == 4
    out = []
    for line, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"line {line}: expected {len(header)} fields, got {len(row)}", line)
        bwd = _float(row[0], line, "bwd")
        fwd = _float(row[1], line, "fwd_obs")
        ev = row[2].strip()
        if ev not in ("0", "1"):
            raise ParseError(f"line {line}, column event: {ev!r} is not 0 or 1", line, "event")
        cat = row[3].strip() if has_age else ""
        out.append(PrevalentRecord(bwd, fwd, ev == "1", cat or None))
    return out


def read_records(path: str | Path) -> list[PrevalentRecord]:
    return parse_records(_read_text(path))


def format_records(records: Iterable[PrevalentRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        w.writerow([repr(float(r.bwd)), repr(float(r.fwd_obs)), int(bool(r.event)),
                    "" if r.age_cat is None else r.age_cat])
    return buf.getvalue()


def write_records(frame: ScreeningFrame, path: str | Path) -> None:
    Path(path).write_text(format_records(frame.records), encoding="utf-8")


def parse_age(text: str) -> AgeDistribution:
    """``segment_start,segment_end,<cat>,...``; one row per calendar segment."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError("empty age distribution file", 1)
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["segment_start", "segment_end"] or len(header) < 3:
        raise ParseError("age header must be segment_start,segment_end,<categories...>", 1)
    cats = tuple(header[2:])
    segs = []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"line {line}: expected {len(header)} fields, got {len(row)}", line)
        a = _float_or_inf(row[0], line, "segment_start")
        b = _float_or_inf(row[1], line, "segment_end")
        probs = tuple(_float(v, line, c) for v, c in zip(row[2:], cats))
        segs.append((a, b, probs))
    if not segs:
        raise ParseError("age distribution has no segments", 2)
    return AgeDistribution(cats, tuple(segs))


def _float_or_inf(value: str, line: int, column: str) -> float:
    v = value.strip().lower()
    if v in ("inf", "+inf", "infinity"):
        return math.inf
    if v in ("-inf", "-infinity"):
        return -math.inf
    return _float(value, line, column)


def read_age(path: str | Path) -> AgeDistribution:
    return parse_age(_read_text(path))
