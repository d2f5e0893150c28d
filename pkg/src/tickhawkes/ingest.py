"""Trade-file ingestion: parse, filter by side and session, and emit per-day unit-jump logs.

Input schema (CSV, header required)::

    timestamp,price,volume,side
    2024-03-01T09:00:00.123456789+01:00,100.01,3,B
    1709280000123456789,100.02,1,S

``timestamp`` is ISO-8601 with an explicit offset (``Z`` allowed, up to nine
fractional digits) or integer epoch nanoseconds (read as UTC).  Prices are
parsed as decimals so that tick arithmetic is exact.
"""

from __future__ import annotations

import csv
import io
import logging
import re
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, List, Optional
from zoneinfo import ZoneInfo

import numpy as np

from .model import EventLog

log = logging.getLogger(__name__)

HEADER = ["timestamp", "price", "volume", "side"]
SIDES = ("B", "S")
_NS = 1_000_000_000

_ISO = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})[T ](\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,9}))?"
    r"(Z|[+-]\d{2}:?\d{2})$"
)


class TickParseError(ValueError):
    """Raised with every offending ``(line, message)`` pair in ``errors``."""

    def __init__(self, errors):
        self.errors = list(errors)
        shown = "; ".join(f"line {n}: {m}" for n, m in self.errors[:10])
        more = f" (+{len(self.errors) - 10} more)" if len(self.errors) > 10 else ""
        super().__init__(shown + more)


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class TickRecord:
    epoch_ns: int                  # UTC epoch nanoseconds
    utc_offset: Optional[int]      # seconds east of UTC as written, None for epoch input
    price: Decimal
    volume: int
    side: str
    line: int = 0

    def local_datetime(self, tz=None) -> datetime:
        """Wall-clock time (microsecond resolution) in ``tz`` or in the record's own offset."""
        if tz is None:
            tz = timezone(timedelta(seconds=self.utc_offset or 0))
        utc = datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(
            microseconds=self.epoch_ns // 1000)
        return utc.astimezone(tz)


def parse_timestamp(text: str):
    """Return ``(epoch_ns, utc_offset_seconds | None)``."""
    text = text.strip()
    if re.fullmatch(r"-?\d+", text):
        return int(text), None
    m = _ISO.match(text)
    if not m:
        raise ValueError(f"bad timestamp {text!r}: need ISO-8601 with offset or epoch ns")
    y, mo, d, h, mi, s, frac, off = m.groups()
    if off == "Z":
        offset = 0
    else:
        sign = -1 if off[0] == "-" else 1
        digits = off[1:].replace(":", "")
        offset = sign * (int(digits[:2]) * 3600 + int(digits[2:]) * 60)
    try:
        naive = datetime(int(y), int(mo), int(d), int(h), int(mi), int(s))
    except ValueError as exc:
        raise ValueError(f"bad timestamp {text!r}: {exc}") from None
    seconds = int((naive - datetime(1970, 1, 1)).total_seconds()) - offset
    ns = int((frac or "0").ljust(9, "0"))
    return seconds * _NS + ns, offset


def _parse_line(row, lineno):
    if len(row) != 4:
        raise ValueError(f"expected 4 fields, got {len(row)}")
    ts, offset = parse_timestamp(row[0])
    try:
        price = Decimal(row[1].strip())
    except InvalidOperation:
        raise ValueError(f"bad price {row[1]!r}") from None
    if not price.is_finite() or price <= 0:
        raise ValueError(f"price must be > 0, got {row[1]!r}")
    try:
        volume = int(row[2])
    except ValueError:
        raise ValueError(f"bad volume {row[2]!r}") from None
    if volume < 0:
        raise ValueError(f"volume must be >= 0, got {volume}")
    side = row[3].strip()
    if side not in SIDES:
        raise ValueError(f"side must be B or S, got {side!r}")
    return TickRecord(ts, offset, price, volume, side, lineno)


def parse_ticks(source, reversal_tolerance_ns: int = 0) -> List[TickRecord]:
    """Parse a trade file (path, text stream, or CSV text).

    Every malformed line is collected and reported together.  A timestamp
    earlier than its predecessor by more than ``reversal_tolerance_ns`` is an
    error; smaller reversals are accepted and later clamped to the running
    maximum when building event logs.
    """
    if isinstance(source, (str, Path)) and not (isinstance(source, str) and "\n" in source):
        with Path(source).open(newline="") as fh:
            return parse_ticks(fh, reversal_tolerance_ns)
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        return []
    if [h.strip() for h in header] != HEADER:
        raise TickParseError([(1, f"header must be {','.join(HEADER)}, got {','.join(header)}")])
    records, errors = [], []
    latest = None
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            rec = _parse_line(row, lineno)
        except ValueError as exc:
            errors.append((lineno, str(exc)))
            continue
        if latest is not None and rec.epoch_ns < latest - reversal_tolerance_ns:
            errors.append((lineno, f"timestamp goes back {(latest - rec.epoch_ns) / 1e9:.9f} s"))
            continue
        latest = rec.epoch_ns if latest is None else max(latest, rec.epoch_ns)
        records.append(rec)
    if errors:
        raise TickParseError(errors)
    return records


@dataclass(frozen=True)
class SessionSpec:
    """Daily window ``[start, end)`` in local clock time and the instrument tick.

    ``tz`` names an IANA zone for the clock; without it the clock is read in
    each record's own UTC offset (UTC for epoch-nanosecond input).
    """

    start: time = time(9, 0)
    end: time = time(11, 0)
    tick_size: Decimal = Decimal("0.01")
    tz: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "tick_size", Decimal(str(self.tick_size)))
        if not self.start < self.end:
            raise IngestError("session start must be before its end")
        if not self.tick_size > 0:
            raise IngestError("tick size must be > 0")

    @property
    def length(self) -> float:
        return (datetime.combine(date.min, self.end)
                - datetime.combine(date.min, self.start)).total_seconds()

    def zone(self, rec: TickRecord):
        if self.tz is not None:
            return ZoneInfo(self.tz)
        return timezone(timedelta(seconds=rec.utc_offset or 0))


@dataclass(frozen=True)
class DayLog:
    day: str
    log: EventLog
    manifest: dict = field(default_factory=dict)


def _session_start_ns(day: date, session: SessionSpec, zone) -> int:
    local = datetime.combine(day, session.start).replace(tzinfo=zone)
    # Integer arithmetic keeps the nanosecond grid exact.
    delta = local.astimezone(timezone.utc) - datetime(1970, 1, 1, tzinfo=timezone.utc)
    return (delta.days * 86400 + delta.seconds) * _NS + delta.microseconds * 1000


def _ticks(change: Decimal, tick: Decimal, rec: TickRecord) -> int:
    k = change / tick
    nearest = k.to_integral_value()
    if abs(k - nearest) > Decimal("1e-6"):
        raise IngestError(f"line {rec.line}: price change {change} is not a multiple of tick {tick}")
    return int(nearest)


def to_event_logs(records: Iterable[TickRecord], session: SessionSpec = SessionSpec(),
                  side: Optional[str] = "B", split_multi_tick: bool = True) -> List[DayLog]:
    """One event log per trading day.

    The first in-session trade of a day fixes the reference price; every later
    change of ``k`` ticks emits ``|k|`` events on stream 1 (up) or 2 (down) at
    the trade time, measured in seconds from the session start.  With
    ``split_multi_tick=False`` each change emits a single event instead.
    Days without events are skipped with a warning.
    """
    if side is not None and side not in SIDES:
        raise IngestError(f"side filter must be B, S or None, got {side!r}")
    by_day = {}
    for rec in records:
        if side is not None and rec.side != side:
            continue
        local = rec.local_datetime(session.zone(rec))
        if not session.start <= local.time() < session.end:
            continue
        by_day.setdefault(local.date(), []).append(rec)
    out = []
    tick = session.tick_size
    for day in sorted(by_day):
        recs = by_day[day]
        start_ns = _session_start_ns(day, session, session.zone(recs[0]))
        times, streams = [], []
        first = prev = recs[0].price
        latest = recs[0].epoch_ns
        for rec in recs[1:]:
            latest = max(latest, rec.epoch_ns)
            k = _ticks(rec.price - prev, tick, rec)
            prev = rec.price
            if k == 0:
                continue
            n = abs(k) if split_multi_tick else 1
            t = (latest - start_ns) / 1e9
            times.extend([t] * n)
            streams.extend([1 if k > 0 else 2] * n)
        if not times:
            log.warning("skipping %s: no in-session price changes", day.isoformat())
            continue
        streams = np.array(streams)
        up, down = int(np.sum(streams == 1)), int(np.sum(streams == 2))
        manifest = {
            "date": day.isoformat(),
            "n_trades": len(recs),
            "n_events": len(times),
            "up_events": up,
            "down_events": down,
            "net_move_ticks": up - down,
            "first_price": str(first),
            "last_price": str(prev),
            "net_move": str(prev - first),
            "horizon": session.length,
            "split_multi_tick": split_multi_tick,
            "side": side,
        }
        ev = EventLog(np.array(times), streams, session.length, n_streams=2, meta=manifest)
        out.append(DayLog(day.isoformat(), ev, manifest))
    return out


__all__ = [
    "DayLog",
    "IngestError",
    "SessionSpec",
    "TickParseError",
    "TickRecord",
    "parse_ticks",
    "parse_timestamp",
    "to_event_logs",
]
