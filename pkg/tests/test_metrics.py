import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ntn_handover.engine import MsgClass
from ntn_handover.metrics import (
    SUMMARY_COLUMNS,
    MetricsLedger,
    RunReport,
    aggregate,
    build_report,
    drop_rate,
    export,
    read_event_log,
    replay,
    reports_from_json,
    success_rate,
    t_ci,
    time_series,
    waiting_times,
    write_event_log,
)

# two-sided 95% Student-t quantiles from printed tables
T975 = {1: 12.706204736, 2: 4.302652730, 4: 2.776445105}


def ledger_with_flow(keep_log=True):
    L = MetricsLedger(bucket_ms=200.0, protocol="ho", seed=1, ue_count=3, keep_log=keep_log)
    for u, t in enumerate((10.0, 20.0, 30.0)):
        L.apply(t, "SAT1", "ue-request-sent", "", u)
        L.arrival(t + 3, "SAT1", MsgClass.UE_REQUEST, False)
    L.arrival(250.0, "SAT1", MsgClass.UE_RETRANSMISSION, True)
    L.evicted(260.0, "SAT1", MsgClass.UE_REQUEST)
    L.service_done(14.0, "SAT1")
    L.apply(19.0, "SAT1", "ue-configured", "", 0)
    L.apply(35.0, "SAT1", "ue-configured", "", 1)
    L.apply(35.0, "SAT1", "ue-configured", "", 1)  # duplicate ignored
    L.apply(400.0, "SAT1", "ue-failed", "", 2)
    return L


def test_counts_and_rates():
    L = ledger_with_flow()
    assert L.total_received("SAT1") == 4
    assert L.total_dropped("SAT1") == 2
    assert L.ue_messages("SAT1") == 4
    assert L.triggered("SAT1") == 3
    assert success_rate(L, "SAT1").percent == pytest.approx(200 / 3)
    assert drop_rate(L, "SAT1") == 50.0
    assert list(waiting_times(L, "SAT1", "success")) == [9.0, 15.0]
    assert list(waiting_times(L, "SAT1", "failed")) == [370.0]


def test_no_demand_is_flagged():
    sr = success_rate(MetricsLedger(), "SAT1")
    assert sr.percent == 100.0 and sr.no_demand


def test_unknown_event_kind():
    with pytest.raises(ValueError):
        MetricsLedger().apply(0.0, "SAT1", "teleport")


def test_replay_equals_live():
    L = ledger_with_flow()
    assert replay(L.log, 200.0).snapshot() == L.snapshot()


def test_event_log_file_round_trip(tmp_path):
    L = ledger_with_flow()
    p = tmp_path / "ev.csv"
    write_event_log(L.log, p)
    assert replay(read_event_log(p), 200.0).snapshot() == L.snapshot()


def test_time_series_buckets():
    L = ledger_with_flow()
    rows = time_series(L, "SAT1", 600.0)
    assert rows == [(0.0, 3, 0), (200.0, 1, 2), (400.0, 0, 0)]
    assert sum(r[1] for r in rows) == L.total_received("SAT1")
    assert sum(r[2] for r in rows) == L.total_dropped("SAT1")
    assert time_series(MetricsLedger(), "SAT1", 400.0) == [(0.0, 0, 0), (200.0, 0, 0)]


def test_messages_in_same_bucket():
    L = MetricsLedger()
    L.arrival(50.0, "S", MsgClass.UE_REQUEST, False)
    L.arrival(150.0, "S", MsgClass.UE_REQUEST, False)
    assert time_series(L, "S", 200.0) == [(0.0, 2, 0)]


@given(st.lists(st.tuples(st.floats(0, 5000), st.sampled_from(list(MsgClass)[:9]), st.booleans()), max_size=80))
def test_bucket_conservation(arrivals):
    L = MetricsLedger(keep_log=True)
    for t, c, d in arrivals:
        L.arrival(t, "S", c, d)
    rows = time_series(L, "S", 5000.0)
    assert sum(r[1] for r in rows) == L.total_received("S") == len(arrivals)
    assert sum(r[2] for r in rows) == L.total_dropped("S")
    assert replay(L.log).snapshot() == L.snapshot()


def test_t_ci_against_table():
    assert t_ci([1.0, 2.0, 3.0]) == pytest.approx(T975[2] / math.sqrt(3), rel=1e-8)
    xs = [10.0, 12.0, 11.0, 9.0, 13.0]
    sd = np.std(xs, ddof=1)
    assert t_ci(xs) == pytest.approx(T975[4] * sd / math.sqrt(5), rel=1e-8)
    assert t_ci([5.0]) is None
    assert t_ci([2.0, 2.0]) == 0.0


def test_report_validation():
    with pytest.raises(ValueError):
        RunReport("ho", 1, 1, 101.0, 1, 0, 0.0, None, None)
    with pytest.raises(ValueError):
        RunReport("ho", 1, 1, 100.0, 1, 2, 0.0, None, None)


def report(p, n, seed, sr, total=100):
    return RunReport(p, n, seed, sr, total, total // 3, 0.0, 9.0 + seed / 100, None)


def test_aggregate_over_seeds():
    reps = [report("ho", 10, s, v) for s, v in ((10, 90.0), (20, 92.0), (30, 94.0))]
    reps.append(report("gho", 10, 10, 100.0))
    (row,) = aggregate(reps)
    m, ci = row.values[("success_rate", "ho")]
    assert m == 92.0 and ci == pytest.approx(T975[2] * 2.0 / math.sqrt(3), rel=1e-8)
    assert row.values[("success_rate", "gho")] == (100.0, None)
    assert row.values[("wt_failed_ms", "ho")] == (None, None)
    assert row.n_seeds == {"ho": 3, "gho": 1}


def test_build_report_from_ledger():
    r = build_report(ledger_with_flow(), "SAT1", note=1)
    assert (r.triggered, r.configured, r.failed) == (3, 2, 1)
    assert r.wt_success_mean_ms == 12.0 and r.wt_failed_ci_ms is None
    assert r.extra == {"note": 1}


def test_export_layout_and_golden_header(tmp_path):
    reps = [report(p, n, s, 100.0) for p in ("ho", "gho") for n in (10, 20) for s in (1, 2)]
    series = {("ho", 10, 1, "SAT1"): [(0.0, 1, 0)]}
    written = export(reps, tmp_path, "csv", series)
    with open(written["summary"]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == [
        "protocol", "ue_count", "seed", "success_rate", "total_messages", "ue_messages",
        "drop_rate", "wt_success_mean_ms", "wt_success_ci_ms", "wt_failed_mean_ms", "wt_failed_ci_ms",
    ] == SUMMARY_COLUMNS
    assert len(rows) == 9 and rows[1][:3] == ["gho", "10", "1"]
    agg = (tmp_path / "aggregate.csv").read_text().splitlines()
    assert agg[0].startswith("#") and len(agg) == 4
    assert (tmp_path / "timeseries" / "ho-10-1-SAT1.csv").read_text().splitlines() == ["t_ms,received,dropped", "0.0,1,0"]


def test_json_round_trip(tmp_path):
    reps = [report("ho", 10, 1, 97.5), report("gho", 10, 1, 100.0)]
    written = export(reps, tmp_path, "json")
    back = reports_from_json(written["summary"])
    assert sorted(back, key=lambda r: r.protocol) == sorted(reps, key=lambda r: r.protocol)


def test_export_rejects_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        export([], tmp_path, "xml")
