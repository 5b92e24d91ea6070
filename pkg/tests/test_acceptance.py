"""Acceptance gate: one test and one printed PASS/FAIL line per criterion.

The storm-regime sweep (7 UE counts x 5 seeds x 2 protocols) is computed once
per session and shared by the criteria that need it.  It takes tens of minutes
on one core; set NTNHO_ACCEPT_JOBS to use several worker processes.
"""

import math
import os
import random
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from functools import reduce

import numpy as np
import pytest

from ntn_handover import geometry as geo
from ntn_handover import protocol as pc
from ntn_handover.cli import main as cli_main
from ntn_handover.entities import Simulation
from ntn_handover.metrics import time_series
from ntn_handover.runner import run_scenario, satellite_tracks
from ntn_handover.scenario import DEFAULT_SEEDS, ScenarioConfig, assign_groups

UE_GRID = [10_000, 20_000, 30_000, 40_000, 50_000, 60_000, 70_000]


@pytest.fixture
def report_line(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}")

    return emit


# -- shared sweep ---------------------------------------------------------------------


def _sweep_job(key):
    protocol, n, seed = key
    res = run_scenario(ScenarioConfig(protocol=protocol, ue_count=n, seed=seed))
    series = time_series(res.ledger, "SAT1", res.sim.t_end)
    return key, res.report, res.wall_s, series


_SWEEP = {}


def sweep():
    if not _SWEEP:
        keys = [(p, n, s) for n in UE_GRID for p in ("ho", "gho") for s in DEFAULT_SEEDS]
        jobs = int(os.environ.get("NTNHO_ACCEPT_JOBS", "1"))
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_sweep_job, keys))
        else:
            results = [_sweep_job(k) for k in keys]
        for key, rep, wall, series in results:
            _SWEEP[key] = (rep, wall, series)
    return _SWEEP


def mean_over_seeds(protocol, n, attr):
    data = sweep()
    return float(np.mean([getattr(data[(protocol, n, s)][0], attr) for s in DEFAULT_SEEDS]))


# -- 1 ----------------------------------------------------------------------------------


def test_geometry_oracle_cli(report_line):
    t0 = time.perf_counter()
    r = subprocess.run(
        [sys.executable, "-m", "ntn_handover", "analyze", "--radius", "12.07", "--speed", "7.56",
         "--ues", "65519", "--dt", "1"],
        capture_output=True, text=True, check=True,
    )
    wall = time.perf_counter() - t0
    figs = dict(line.split("=") for line in r.stdout.splitlines())
    n = float(figs["N_handoff"])
    ok = abs(n - 2.6e4) / 2.6e4 <= 0.03 and wall < 1.0
    report_line(1, "handoff load", ok, f"N_handoff={n:.1f} (2.6e4 +/-3%), {wall:.2f}s (<1s)")
    assert ok


# -- 2 ----------------------------------------------------------------------------------


def _lens_monte_carlo(r, d, n, rng):
    """Overlap of disc(0,r) and disc((d,0),r) by sampling the lens bounding box."""
    h = math.sqrt(max(r * r - d * d / 4, 0.0))
    x = rng.uniform(d - r, r, n)
    y = rng.uniform(-h, h, n)
    inside = (x * x + y * y <= r * r) & ((x - d) ** 2 + y * y <= r * r)
    return inside.mean() * (2 * r - d) * 2 * h


def test_geometry_properties(report_line):
    rng = np.random.default_rng(2024)
    worst_sum = 0.0
    for _ in range(1000):
        r = float(rng.uniform(0.1, 100.0))
        d = float(rng.uniform(0.0, 2 * r))
        total = geo.intersect_area(r, d) + geo.handoff_area(r, d)
        worst_sum = max(worst_sum, abs(total - math.pi * r * r) / (math.pi * r * r))
    worst_mc = 0.0
    for _ in range(100):
        r = float(rng.uniform(0.5, 50.0))
        d = float(rng.uniform(0.0, 1.99 * r))
        mc = _lens_monte_carlo(r, d, 1_000_000, rng)
        worst_mc = max(worst_mc, abs(geo.intersect_area(r, d) - mc) / mc)
    ok = worst_sum <= 1e-9 and worst_mc <= 0.005
    report_line(2, "area identities", ok, f"max partition err {worst_sum:.1e} (<=1e-9), max MC err {worst_mc:.2%} (<=0.5%)")
    assert ok


# -- 3 ----------------------------------------------------------------------------------


def _xor(shares):
    return reduce(lambda a, b: bytes(x ^ y for x, y in zip(a, b)), shares, bytes(pc.SHARE_BYTES))


def test_protocol_oracle_equivalence(report_line):
    t0 = time.perf_counter()
    mismatches = checked = 0
    for n in range(1, 9):
        rng = random.Random(n)
        gid, rand = f"G{n}:0", rng.randbytes(16)
        shares, cm, csm = pc.generate_shares(gid, rand, n, rng)
        threshold = pc.decide_threshold(n)
        subsets = [tuple(i for i in range(n) if m >> i & 1) for m in range(1 << n)]
        tickets = {s: _xor([shares[i] for i in s]) for s in subsets}
        for s in subsets:
            ga = pc.GaState(gid, rand, threshold, cm)
            reqs = [q for q in (ga.on_broadcast(gid, shares[i]) for i in s) if q is not None]
            checked += 1
            if (len(reqs) == 1) != (len(s) > threshold) or len(reqs) > 1:
                mismatches += 1
            if reqs and not (
                reqs[0].ticket == _xor([shares[i] for i in reqs[0].aggregated_commitment])
                and pc.verify_ticket(reqs[0], csm, cm)
            ):
                mismatches += 1
            # verification against every candidate ticket
            for t in tickets.values():
                req = pc.GroupHandoverRequest(gid, t, s)
                if pc.verify_ticket(req, csm, cm) != (t == tickets[s]):
                    mismatches += 1
    wall = time.perf_counter() - t0
    ok = mismatches == 0 and wall < 10.0
    report_line(3, "GA/ticket exhaustive oracle", ok, f"{checked} subsets, {mismatches} mismatches, {wall:.2f}s (<10s)")
    assert ok


# -- 4 ----------------------------------------------------------------------------------


def test_notification_replay_and_signature(report_line):
    rng = random.Random(4)
    keys = pc.SatKeyPair.generate(rng)
    window = pc.DEFAULT_FRESHNESS_MS
    fresh = replay = stale = flips = 0
    total = 200
    for k in range(total):
        rand = rng.randbytes(16)
        ts = 10_000 + k * 37
        action = pc.Action.SWITCH if k % 2 else pc.Action.CANCEL
        n = pc.make_notification(keys, "SAT1", rand, f"G{k}:0", action, ts)
        wire = pc.decode_notification(pc.encode_notification(n))
        seen = set()
        now = ts + rng.uniform(0, window)
        fresh += pc.verify_notification(keys.public, wire, window, now, seen, rand) is pc.Verdict.ACCEPT
        replay += pc.verify_notification(keys.public, wire, window, now + 1, seen, rand) is pc.Verdict.REPLAY
        stale += pc.verify_notification(keys.public, wire, window, ts + window + 1 + k, set(), rand) is pc.Verdict.STALE
        byte, bit = rng.randrange(64), rng.randrange(8)
        sig = bytearray(wire.signature)
        sig[byte] ^= 1 << bit
        bad = pc.Notification(wire.ran_id, wire.gid, wire.action, wire.timestamp, bytes(sig))
        flips += pc.verify_notification(keys.public, bad, window, now, set(), rand) is pc.Verdict.BAD_SIGNATURE
    ok = fresh == replay == stale == flips == total
    report_line(4, "notification checks", ok,
                f"accept {fresh}/{total}, replay rejected {replay}/{total}, stale rejected {stale}/{total}, "
                f"bit-flip rejected {flips}/{total}")
    assert ok


# -- 5 ----------------------------------------------------------------------------------


def _isolated_group(protocol, n=20):
    rng = np.random.default_rng(5)
    pos = np.column_stack((0.1 + 0.8 * rng.random(n), 0.1 + 0.8 * rng.random(n)))
    cfg = ScenarioConfig(protocol=protocol, ue_count=n, k_ga=2)
    groups = assign_groups(pos, cfg.square_width_km)[0] if protocol == "gho" else ()
    sim = Simulation(cfg, pos, satellite_tracks(cfg), groups)
    sim.run()
    return sim


def test_message_overhead_identity(report_line):
    gho = _isolated_group("gho")
    ho = _isolated_group("ho")
    g, h = gho.ledger.total_received("SAT1"), ho.ledger.total_received("SAT1")
    drops = gho.ledger.total_dropped("SAT1") + ho.ledger.total_dropped("SAT1")
    ok = g == 4 and h == 60 and drops == 0
    report_line(5, "message overhead N_G=20, K_G=2", ok, f"GHO {g} (==4), HO {h} (==60), drops {drops}")
    assert ok


# -- 6 ----------------------------------------------------------------------------------


@pytest.mark.parametrize("n", [10_000, 20_000])
def test_low_load_regime(n, report_line):
    ho = run_scenario(ScenarioConfig(protocol="ho", ue_count=n))
    gho = run_scenario(ScenarioConfig(protocol="gho", ue_count=n))
    h, g = ho.report, gho.report
    ok = (
        h.success_rate == 100.0
        and h.drop_rate == 0.0
        and h.total_messages == 3 * h.triggered
        and g.success_rate == 100.0
        and g.total_messages < 0.6 * h.total_messages
        and ho.wall_s < 60
        and gho.wall_s < 60
    )
    report_line(
        6, f"low load n={n}", ok,
        f"HO success {h.success_rate:.2f}% drop {h.drop_rate:.2f}% total {h.total_messages} "
        f"(3x{h.triggered}); GHO success {g.success_rate:.2f}% total {g.total_messages} "
        f"({g.total_messages / h.total_messages:.1%} of HO); wall {ho.wall_s:.1f}s/{gho.wall_s:.1f}s",
    )
    assert ok


# -- 7 ----------------------------------------------------------------------------------


def test_storm_regime_trends(report_line):
    ho_sr = [mean_over_seeds("ho", n, "success_rate") for n in UE_GRID]
    gho_sr = [mean_over_seeds("gho", n, "success_rate") for n in UE_GRID]
    ho_dr = [mean_over_seeds("ho", n, "drop_rate") for n in UE_GRID]
    gho_dr = [mean_over_seeds("gho", n, "drop_rate") for n in UE_GRID]
    i40 = UE_GRID.index(40_000)
    a = all(x >= y for x, y in zip(ho_sr, ho_sr[1:])) and ho_sr[i40] < 90.0
    b = all(g >= h for g, h in zip(gho_sr, ho_sr))
    c = any(g == 100.0 and h < 85.0 for g, h in zip(gho_sr, ho_sr))
    d = all(x > 50.0 for x in ho_dr[i40:]) and gho_dr[i40] == 0.0 and gho_dr[i40 + 1] == 0.0
    ok = a and b and c and d
    table = "; ".join(
        f"{n // 1000}k HO {hs:.2f}%/{hd:.2f}% GHO {gs:.2f}%/{gd:.2f}%"
        for n, hs, hd, gs, gd in zip(UE_GRID, ho_sr, ho_dr, gho_sr, gho_dr)
    )
    report_line(7, "storm regime (success/drop, seed means)", ok, f"(a){a} (b){b} (c){c} (d){d} :: {table}")
    assert ok


# -- 8 ----------------------------------------------------------------------------------


def test_retransmission_amplification(report_line):
    res = run_scenario(ScenarioConfig(protocol="ho", ue_count=40_000))
    L, rep = res.ledger, res.report
    rows = time_series(L, "SAT1", res.sim.t_end)
    recv = [r[1] for r in rows]
    peak = int(np.argmax(recv))
    first = next(i for i, v in enumerate(recv) if v)
    last = max(i for i, v in enumerate(recv) if v)
    rises_then_falls = first < peak < last and recv[first] < recv[peak] > recv[last]
    sums = sum(recv) == L.total_received("SAT1") and sum(r[2] for r in rows) == L.total_dropped("SAT1")
    ok = rep.drop_rate > 0 and rep.total_messages > 3 * rep.triggered and rises_then_falls and sums
    report_line(
        8, "retransmission amplification", ok,
        f"total {rep.total_messages} vs 3x triggered {3 * rep.triggered}, peak bucket {rows[peak][0]:.0f}ms "
        f"({recv[peak]}), rise-then-fall {rises_then_falls}, bucket sums exact {sums}",
    )
    assert ok


# -- 9 ----------------------------------------------------------------------------------


def test_compare_determinism(tmp_path, report_line, capsys):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        code = cli_main(["compare", "--ues", "3000,6000", "--seeds", "10,20,30", "--out", str(out)])
        assert code == 0
        outs.append(out)
    capsys.readouterr()
    same = all(
        (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in ("summary.csv", "aggregate.csv")
    )
    report_line(9, "compare determinism", same, "summary.csv and aggregate.csv byte-identical" if same else "outputs differ")
    assert same


# -- 10 ---------------------------------------------------------------------------------


def test_scale_70k_gho(report_line):
    data = sweep()
    walls = [data[("gho", 70_000, s)][1] for s in DEFAULT_SEEDS]
    ok = max(walls) < 300
    report_line(10, "70,000-UE GHO run time", ok, f"max {max(walls):.1f}s over {len(walls)} seeds (<300s)")
    assert ok
