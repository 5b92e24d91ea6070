"""Event-sourced run metrics, seed aggregation and CSV/JSON exports.

Every mutation of a :class:`MetricsLedger` goes through :meth:`MetricsLedger.apply`
with one flat record ``(time_ms, node, event_kind, message_class, outcome)``.
Keeping the optional event log therefore lets a ledger be rebuilt exactly by
folding the log again (see :func:`replay`).
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .engine import MsgClass

# classes counted as "UE messages" at the source satellite
UE_MESSAGE_CLASSES = frozenset(
    (MsgClass.UE_REQUEST, MsgClass.UE_RETRANSMISSION, MsgClass.GA_REQUEST)
)

ARRIVAL = "arrival"
SERVICED = "serviced"
EVICTED = "evicted"
UE_REQUEST_SENT = "ue-request-sent"
UE_CONFIGURED = "ue-configured"
UE_FAILED = "ue-failed"
VERIFY_FAILED = "ticket-rejected"

_CLASS_BY_LABEL = {c.label: c for c in MsgClass}

SUMMARY_COLUMNS = [
    "protocol",
    "ue_count",
    "seed",
    "success_rate",
    "total_messages",
    "ue_messages",
    "drop_rate",
    "wt_success_mean_ms",
    "wt_success_ci_ms",
    "wt_failed_mean_ms",
    "wt_failed_ci_ms",
]


class MetricsLedger:
    def __init__(
        self,
        bucket_ms: float = 200.0,
        protocol: str = "",
        seed: int = 0,
        ue_count: int = 0,
        keep_log: bool = False,
    ):
        self.bucket_ms = bucket_ms
        self.protocol = protocol
        self.seed = seed
        self.ue_count = ue_count
        self.received = defaultdict(lambda: [0] * len(MsgClass))
        self.dropped = defaultdict(lambda: [0] * len(MsgClass))
        self.serviced = defaultdict(int)
        # node -> {bucket index: [received, dropped]}
        self.buckets = defaultdict(dict)
        # source node -> {ue id: time}
        self.request_sent = defaultdict(dict)
        self.config_received = defaultdict(dict)
        self.failed = defaultdict(dict)
        self.ticket_rejections = defaultdict(int)
        self.log: Optional[list] = [] if keep_log else None

    # -- the only mutation entry point -------------------------------------

    def apply(self, time_ms, node, event_kind, message_class="", outcome=""):
        if self.log is not None:
            self.log.append((time_ms, node, event_kind, message_class, outcome))
        if event_kind == ARRIVAL:
            cls = _CLASS_BY_LABEL[message_class]
            self._arrival(time_ms, node, cls, outcome == "dropped")
        elif event_kind == EVICTED:
            self._evicted(time_ms, node, _CLASS_BY_LABEL[message_class])
        elif event_kind == SERVICED:
            self.serviced[node] += 1
        elif event_kind == UE_REQUEST_SENT:
            self.request_sent[node].setdefault(int(outcome), time_ms)
        elif event_kind == UE_CONFIGURED:
            self.config_received[node].setdefault(int(outcome), time_ms)
        elif event_kind == UE_FAILED:
            self.failed[node].setdefault(int(outcome), time_ms)
        elif event_kind == VERIFY_FAILED:
            self.ticket_rejections[node] += 1
        else:
            raise ValueError(f"unknown ledger event kind {event_kind!r}")

    # fast paths used by the simulator; identical effect to apply()
    def arrival(self, time_ms, node, cls: int, dropped: bool):
        if self.log is not None:
            self.log.append(
                (time_ms, node, ARRIVAL, MsgClass(cls).label,
                 "dropped" if dropped else "accepted")
            )
        self._arrival(time_ms, node, cls, dropped)

    def _arrival(self, time_ms, node, cls, dropped):
        self.received[node][cls] += 1
        b = int(time_ms // self.bucket_ms)
        row = self.buckets[node].get(b)
        if row is None:
            row = self.buckets[node][b] = [0, 0]
        row[0] += 1
        if dropped:
            self.dropped[node][cls] += 1
            row[1] += 1

    def evicted(self, time_ms, node, cls: int):
        """A queued message pushed out by a higher-priority arrival."""
        if self.log is not None:
            self.log.append((time_ms, node, EVICTED, MsgClass(cls).label, "dropped"))
        self._evicted(time_ms, node, cls)

    def _evicted(self, time_ms, node, cls):
        self.dropped[node][cls] += 1
        b = int(time_ms // self.bucket_ms)
        row = self.buckets[node].get(b)
        if row is None:
            row = self.buckets[node][b] = [0, 0]
        row[1] += 1

    def service_done(self, time_ms, node):
        if self.log is not None:
            self.log.append((time_ms, node, SERVICED, "", ""))
        self.serviced[node] += 1

    # -- queries ----------------------------------------------------------

    def total_received(self, node) -> int:
        return sum(self.received[node]) if node in self.received else 0

    def total_dropped(self, node) -> int:
        return sum(self.dropped[node]) if node in self.dropped else 0

    def ue_messages(self, node) -> int:
        if node not in self.received:
            return 0
        r = self.received[node]
        return sum(r[c] for c in UE_MESSAGE_CLASSES)

    def triggered(self, node) -> int:
        return len(self.request_sent.get(node, ()))

    def nodes(self) -> list:
        return sorted(set(self.received) | set(self.serviced))

    def snapshot(self) -> dict:
        """Plain-data view used for equality checks and JSON export."""

        def plain(d):
            return {str(k): v for k, v in sorted(d.items(), key=lambda kv: str(kv[0]))}

        return {
            "received": plain({k: list(v) for k, v in self.received.items()}),
            "dropped": plain({k: list(v) for k, v in self.dropped.items()}),
            "serviced": plain(dict(self.serviced)),
            "buckets": plain(
                {k: {str(b): list(r) for b, r in sorted(v.items())}
                 for k, v in self.buckets.items()}
            ),
            "request_sent": plain(
                {k: {str(u): t for u, t in sorted(v.items())}
                 for k, v in self.request_sent.items()}
            ),
            "config_received": plain(
                {k: {str(u): t for u, t in sorted(v.items())}
                 for k, v in self.config_received.items()}
            ),
            "failed": plain(
                {k: {str(u): t for u, t in sorted(v.items())}
                 for k, v in self.failed.items()}
            ),
            "ticket_rejections": plain(dict(self.ticket_rejections)),
        }


def replay(log: Iterable, bucket_ms: float = 200.0, **labels) -> MetricsLedger:
    """Rebuild a ledger by folding an event log."""
    ledger = MetricsLedger(bucket_ms=bucket_ms, **labels)
    for rec in log:
        t, node, kind, cls, outcome = rec
        ledger.apply(float(t), node, kind, cls, outcome)
    return ledger


def write_event_log(log: Sequence, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_ms", "node", "event_kind", "message_class", "outcome"])
        for t, node, kind, cls, outcome in log:
            w.writerow([repr(float(t)), node, kind, cls, outcome])


def read_event_log(path) -> list:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        return [(float(t), node, kind, cls, outcome) for t, node, kind, cls, outcome in r]


# ---------------------------------------------------------------------------
# per-run statistics


@dataclass
class SuccessRate:
    percent: float
    no_demand: bool = False


def success_rate(ledger: MetricsLedger, node) -> SuccessRate:
    sent = ledger.request_sent.get(node, {})
    if not sent:
        return SuccessRate(100.0, no_demand=True)
    conf = ledger.config_received.get(node, {})
    ok = sum(1 for u in sent if u in conf)
    return SuccessRate(100.0 * ok / len(sent))


def drop_rate(ledger: MetricsLedger, node) -> float:
    rec = ledger.total_received(node)
    if rec == 0:
        return 0.0
    return 100.0 * ledger.total_dropped(node) / rec


def waiting_times(ledger: MetricsLedger, node, outcome: str) -> np.ndarray:
    sent = ledger.request_sent.get(node, {})
    done = (ledger.config_received if outcome == "success" else ledger.failed).get(
        node, {}
    )
    if outcome not in ("success", "failed"):
        raise ValueError("outcome must be 'success' or 'failed'")
    vals = [done[u] - sent[u] for u in sorted(done) if u in sent]
    return np.asarray(vals, dtype=float)


def mean_or_none(values) -> Optional[float]:
    values = np.asarray(values, dtype=float)
    return float(values.mean()) if values.size else None


def t_ci(values, confidence: float = 0.95) -> Optional[float]:
    """Half-width of the Student-t confidence interval of the mean."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        return None
    sd = values.std(ddof=1)
    if sd == 0:
        return 0.0
    from scipy import stats  # slow import, only needed here

    return float(stats.t.ppf(0.5 + confidence / 2, n - 1) * sd / math.sqrt(n))


def waiting_time_stats(ledger: MetricsLedger, node, outcome: str):
    """(mean ms, None) for one run; None when there are no samples."""
    m = mean_or_none(waiting_times(ledger, node, outcome))
    return None if m is None else (m, None)


def time_series(ledger: MetricsLedger, node, t_end_ms: float, bucket_ms=None):
    """Rows ``(bucket start ms, received, dropped)`` covering [0, t_end)."""
    bucket_ms = ledger.bucket_ms if bucket_ms is None else bucket_ms
    if bucket_ms != ledger.bucket_ms:
        raise ValueError("ledger was bucketed at a different width")
    n = max(1, int(math.ceil(t_end_ms / bucket_ms)))
    data = ledger.buckets.get(node, {})
    if data:
        n = max(n, max(data) + 1)
    rows = []
    for b in range(n):
        r = data.get(b, (0, 0))
        rows.append((b * bucket_ms, r[0], r[1]))
    return rows


# ---------------------------------------------------------------------------
# reports


@dataclass
class RunReport:
    protocol: str
    ue_count: int
    seed: int
    success_rate: float
    total_messages: int
    ue_messages: int
    drop_rate: float
    wt_success_mean_ms: Optional[float]
    wt_failed_mean_ms: Optional[float]
    triggered: int = 0
    configured: int = 0
    failed: int = 0
    no_demand: bool = False
    wt_success_ci_ms: Optional[float] = None
    wt_failed_ci_ms: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0 <= self.success_rate <= 100 and 0 <= self.drop_rate <= 100):
            raise ValueError("rates must lie in [0, 100]")
        if self.ue_messages > self.total_messages:
            raise ValueError("ue_messages cannot exceed total_messages")

    def row(self) -> dict:
        return {k: getattr(self, k) for k in SUMMARY_COLUMNS}


def build_report(ledger: MetricsLedger, node, **extra) -> RunReport:
    sr = success_rate(ledger, node)
    ws_samples = waiting_times(ledger, node, "success")
    wf_samples = waiting_times(ledger, node, "failed")
    ws, wf = mean_or_none(ws_samples), mean_or_none(wf_samples)
    return RunReport(
        protocol=ledger.protocol,
        ue_count=ledger.ue_count,
        seed=ledger.seed,
        success_rate=sr.percent,
        total_messages=ledger.total_received(node),
        ue_messages=ledger.ue_messages(node),
        drop_rate=drop_rate(ledger, node),
        wt_success_mean_ms=ws,
        wt_failed_mean_ms=wf,
        triggered=ledger.triggered(node),
        configured=len(ledger.config_received.get(node, {})),
        failed=len(ledger.failed.get(node, {})),
        no_demand=sr.no_demand,
        # within a single run the interval is over per-UE samples
        wt_success_ci_ms=t_ci(ws_samples),
        wt_failed_ci_ms=t_ci(wf_samples),
        extra=dict(extra),
    )


@dataclass
class AggregateRow:
    ue_count: int
    n_seeds: dict
    values: dict  # (metric, protocol) -> (mean, ci)


AGG_METRICS = [
    ("success_rate", "success_rate"),
    ("total_messages", "total_messages"),
    ("ue_messages", "ue_messages"),
    ("drop_rate", "drop_rate"),
    ("wt_success_ms", "wt_success_mean_ms"),
    ("wt_failed_ms", "wt_failed_mean_ms"),
]


def aggregate(reports: Sequence[RunReport], protocols=("ho", "gho")) -> list[AggregateRow]:
    """Cross-seed mean and 95% t-interval per (UE count, protocol)."""
    by = defaultdict(list)
    for r in reports:
        by[(r.ue_count, r.protocol)].append(r)
    rows = []
    for n in sorted({r.ue_count for r in reports}):
        values, counts = {}, {}
        for p in protocols:
            runs = sorted(by.get((n, p), []), key=lambda r: r.seed)
            counts[p] = len(runs)
            for name, attr in AGG_METRICS:
                xs = [getattr(r, attr) for r in runs if getattr(r, attr) is not None]
                if not xs:
                    values[(name, p)] = (None, None)
                    continue
                m = float(np.mean(xs))
                ci = t_ci(xs)
                values[(name, p)] = (m, ci)
        rows.append(AggregateRow(n, counts, values))
    return rows


def _fmt(v, digits=2) -> str:
    if v is None:
        return "---"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{v:.{digits}f}"


def aggregate_columns(protocols=("ho", "gho")) -> list[str]:
    cols = ["ue_count"]
    for name, _ in AGG_METRICS:
        for p in protocols:
            cols += [f"{name}_{p}", f"{name}_{p}_ci"]
    return cols


def write_summary_csv(reports: Sequence[RunReport], path) -> None:
    ordered = sorted(reports, key=lambda r: (r.protocol, r.ue_count, r.seed))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for r in ordered:
            w.writerow(
                [
                    r.protocol,
                    r.ue_count,
                    r.seed,
                    _fmt(r.success_rate),
                    r.total_messages,
                    r.ue_messages,
                    _fmt(r.drop_rate),
                    _fmt(r.wt_success_mean_ms),
                    _fmt(r.wt_success_ci_ms),
                    _fmt(r.wt_failed_mean_ms),
                    _fmt(r.wt_failed_ci_ms),
                ]
            )


def write_aggregate_csv(rows: Sequence[AggregateRow], path, protocols=("ho", "gho")) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# mean over seeds; *_ci = 95% Student-t half-width over per-seed means\n")
        w = csv.writer(fh)
        w.writerow(aggregate_columns(protocols))
        for row in rows:
            out = [row.ue_count]
            for name, _ in AGG_METRICS:
                for p in protocols:
                    m, ci = row.values[(name, p)]
                    out += [_fmt(m), _fmt(ci)]
            w.writerow(out)


def write_time_series_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_ms", "received", "dropped"])
        for t, rec, drop in rows:
            w.writerow([_fmt(float(t), 1), rec, drop])


def reports_to_json(reports: Sequence[RunReport], path) -> None:
    data = [asdict(r) for r in sorted(reports, key=lambda r: (r.protocol, r.ue_count, r.seed))]
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True))


def reports_from_json(path) -> list[RunReport]:
    return [RunReport(**d) for d in json.loads(Path(path).read_text())]


def export(reports: Sequence[RunReport], out_dir, fmt: str = "csv", series=None) -> dict:
    """Write summary (+ aggregate) files and optional per-satellite series.

    ``series`` maps ``(protocol, ue_count, seed, node)`` to time-series rows.
    Returns the written paths keyed by role.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    if fmt == "csv":
        written["summary"] = out / "summary.csv"
        write_summary_csv(reports, written["summary"])
        written["aggregate"] = out / "aggregate.csv"
        write_aggregate_csv(aggregate(reports), written["aggregate"])
    elif fmt == "json":
        written["summary"] = out / "summary.json"
        reports_to_json(reports, written["summary"])
        agg = []
        for row in aggregate(reports):
            agg.append(
                {
                    "ue_count": row.ue_count,
                    "n_seeds": row.n_seeds,
                    **{f"{n}_{p}": list(v) for (n, p), v in row.values.items()},
                }
            )
        written["aggregate"] = out / "aggregate.json"
        written["aggregate"].write_text(json.dumps(agg, indent=2, sort_keys=True))
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    if series:
        ts_dir = out / "timeseries"
        ts_dir.mkdir(exist_ok=True)
        for (protocol, n, seed, node), rows in sorted(series.items()):
            p = ts_dir / f"{protocol}-{n}-{seed}-{node}.csv"
            write_time_series_csv(rows, p)
            written[f"timeseries/{p.name}"] = p
    return written
