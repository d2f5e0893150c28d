import io
import logging
from datetime import time
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tickhawkes.ingest import (
    IngestError,
    SessionSpec,
    TickParseError,
    parse_ticks,
    parse_timestamp,
    to_event_logs,
)
from tickhawkes.simulation import read_event_log_csv, write_event_log_csv

HEADER = "timestamp,price,volume,side\n"


def ticks(*rows):
    return HEADER + "".join(",".join(map(str, r)) + "\n" for r in rows)


def test_empty_file(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("")
    assert parse_ticks(f) == []
    assert parse_ticks(io.StringIO(HEADER)) == []


def test_single_line_roundtrip():
    recs = parse_ticks(ticks(("2024-03-01T09:00:00.123456789+01:00", "100.01", 3, "B")))
    assert len(recs) == 1
    r = recs[0]
    assert r.price == Decimal("100.01") and r.volume == 3 and r.side == "B" and r.line == 2
    assert r.utc_offset == 3600
    assert r.epoch_ns == 1709280000123456789
    assert r.local_datetime().isoformat() == "2024-03-01T09:00:00.123456+01:00"


def test_timestamp_forms():
    assert parse_timestamp("1709280000123456789") == (1709280000123456789, None)
    assert parse_timestamp("2024-03-01T08:00:00.123456789Z") == (1709280000123456789, 0)
    assert parse_timestamp("2024-03-01T03:00:00-05:00")[0] == 1709280000 * 10 ** 9
    assert parse_timestamp("2024-03-01 08:00:00.5+0000")[0] == 1709280000 * 10 ** 9 + 5 * 10 ** 8
    for bad in ("2024-03-01T08:00:00", "yesterday", "2024-02-30T00:00:00Z",
                "2024-03-01T08:00:00.1234567891Z"):
        with pytest.raises(ValueError):
            parse_timestamp(bad)


def test_bad_lines_collected():
    text = ticks(("2024-03-01T09:00:00Z", "100", 1, "X"),
                 ("2024-03-01T09:00:01Z", "abc", 1, "B"),
                 ("2024-03-01T09:00:02Z", "100", -1, "B"),
                 ("2024-03-01T09:00:03Z", "100", 1, "S"),
                 ("2024-03-01T09:00:04Z", "0", 1, "B"))
    with pytest.raises(TickParseError) as info:
        parse_ticks(text)
    lines = [n for n, _ in info.value.errors]
    assert lines == [2, 3, 4, 6]
    assert "side" in info.value.errors[0][1]


def test_bad_header():
    with pytest.raises(TickParseError):
        parse_ticks("time,price,volume,side\n1,1,1,B\n")


def test_time_reversal():
    text = ticks(("2024-03-01T09:00:01Z", "100", 1, "B"),
                 ("2024-03-01T09:00:00.999Z", "100.01", 1, "B"))
    with pytest.raises(TickParseError, match="back"):
        parse_ticks(text)
    recs = parse_ticks(text, reversal_tolerance_ns=5_000_000)
    assert len(recs) == 2
    session = SessionSpec(time(9), time(11))
    (day,) = to_event_logs(recs, session)
    # the late record is clamped to the running maximum
    assert day.log.times.tolist() == [1.0]


def test_up_then_flat():
    recs = parse_ticks(ticks(("2024-03-01T09:00:00Z", "100.00", 1, "B"),
                             ("2024-03-01T09:00:05Z", "100.01", 1, "B"),
                             ("2024-03-01T09:00:09Z", "100.01", 1, "B")))
    (day,) = to_event_logs(recs)
    assert day.log.times.tolist() == [5.0] and day.log.streams.tolist() == [1]
    assert day.log.horizon == 7200.0


def test_multi_tick_split():
    recs = parse_ticks(ticks(("2024-03-01T09:00:00Z", "100.00", 1, "B"),
                             ("2024-03-01T09:00:05Z", "100.03", 1, "B"),
                             ("2024-03-01T09:00:06Z", "99.99", 1, "B")))
    (day,) = to_event_logs(recs)
    assert day.log.times.tolist() == [5.0] * 3 + [6.0] * 4
    assert day.log.streams.tolist() == [1, 1, 1, 2, 2, 2, 2]
    (single,) = to_event_logs(recs, split_multi_tick=False)
    assert single.log.streams.tolist() == [1, 2]
    assert day.manifest["net_move_ticks"] == -1 and day.manifest["net_move"] == "-0.01"


def test_off_grid_price_rejected():
    recs = parse_ticks(ticks(("2024-03-01T09:00:00Z", "100.00", 1, "B"),
                             ("2024-03-01T09:00:05Z", "100.015", 1, "B")))
    with pytest.raises(IngestError, match="line 3"):
        to_event_logs(recs)


def test_side_filter():
    recs = parse_ticks(ticks(("2024-03-01T09:00:00Z", "100.00", 1, "B"),
                             ("2024-03-01T09:00:01Z", "105.00", 1, "S"),
                             ("2024-03-01T09:00:02Z", "100.01", 1, "B")))
    (day,) = to_event_logs(recs, side="B")
    assert day.log.streams.tolist() == [1]
    (both,) = to_event_logs(recs, side=None)
    assert len(both.log) == 500 + 499
    with pytest.raises(IngestError):
        to_event_logs(recs, side="X")


def test_sessions_and_days(caplog):
    recs = parse_ticks(ticks(("2024-03-01T08:59:59Z", "99.00", 1, "B"),
                             ("2024-03-01T09:00:00Z", "100.00", 1, "B"),
                             ("2024-03-01T10:59:59Z", "100.02", 1, "B"),
                             ("2024-03-01T11:00:00Z", "101.00", 1, "B"),
                             ("2024-03-04T09:30:00Z", "100.00", 1, "B"),
                             ("2024-03-04T09:31:00Z", "100.00", 1, "B"),
                             ("2024-03-05T10:00:00Z", "100.00", 1, "B"),
                             ("2024-03-05T10:00:01Z", "99.98", 1, "B")))
    with caplog.at_level(logging.WARNING):
        days = to_event_logs(recs)
    assert [d.day for d in days] == ["2024-03-01", "2024-03-05"]
    assert "2024-03-04" in caplog.text
    assert days[0].log.times.tolist() == [7199.0, 7199.0]
    assert days[1].log.times.tolist() == [3601.0, 3601.0]
    assert all(d.log.times.max() <= d.log.horizon for d in days)


def test_timezone_session():
    # 08:30Z is 09:30 in Paris during winter time
    recs = parse_ticks(ticks(("2024-01-15T08:30:00Z", "100.00", 1, "B"),
                             ("2024-01-15T08:30:10Z", "100.01", 1, "B")))
    assert to_event_logs(recs, SessionSpec(time(9), time(11))) == []
    (day,) = to_event_logs(recs, SessionSpec(time(9), time(11), tz="Europe/Paris"))
    assert day.log.times.tolist() == [1810.0]


def test_session_validation():
    with pytest.raises(IngestError):
        SessionSpec(time(11), time(9))
    with pytest.raises(IngestError):
        SessionSpec(tick_size="0")
    assert SessionSpec(time(9), time(17, 30)).length == 8.5 * 3600


def test_manifest_lands_in_sidecar(tmp_path):
    recs = parse_ticks(ticks(("2024-03-01T09:00:00Z", "100.00", 1, "B"),
                             ("2024-03-01T09:00:05Z", "100.02", 1, "B")))
    (day,) = to_event_logs(recs)
    write_event_log_csv(day.log, tmp_path / "d.csv")
    back = read_event_log_csv(tmp_path / "d.csv")
    assert back.meta["date"] == "2024-03-01" and back.meta["up_events"] == 2
    np.testing.assert_array_equal(back.times, day.log.times)


prices = st.lists(st.integers(-5, 5), min_size=1, max_size=60)


@given(prices, st.lists(st.integers(0, 3000), min_size=60, max_size=60),
       st.sampled_from(["0.01", "0.5", "0.25"]))
def test_reconstruction_invariant(steps, gaps, tick):
    """Signed event count times the tick equals the session's net price move, exactly."""
    tick = Decimal(tick)
    price = Decimal(1000)
    t = 9 * 3600 * 10 ** 9 + 1_700_000_000 // 86400 * 86400 * 10 ** 9
    rows = [(t, price, 1, "B")]
    for k, gap in zip(steps, gaps):
        t += gap * 10 ** 6
        price += k * tick
        rows.append((t, price, 1, "B"))
    recs = parse_ticks(ticks(*rows))
    days = to_event_logs(recs, SessionSpec(tick_size=tick))
    in_session = [r for r in recs if r.epoch_ns % (86400 * 10 ** 9) < 11 * 3600 * 10 ** 9]
    net = in_session[-1].price - in_session[0].price
    if not days:
        assert net == 0
        return
    (day,) = days
    signed = int(np.sum(day.log.streams == 1)) - int(np.sum(day.log.streams == 2))
    assert signed * tick == net
    assert Decimal(day.manifest["net_move"]) == net
    assert np.all(day.log.times >= 0) and np.all(day.log.times <= day.log.horizon)
