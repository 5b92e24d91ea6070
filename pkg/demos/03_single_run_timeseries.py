"""A single baseline run past saturation, and what SAT1 sees over time."""

from ntn_handover import ScenarioConfig, run_scenario

cfg = ScenarioConfig(protocol="ho", ue_count=30_000, seed=10)
res = run_scenario(cfg)
r = res.report
print(f"{r.triggered} UEs triggered, {r.configured} configured ({r.success_rate:.2f}%)")
print(f"SAT1 received {r.total_messages} messages, dropped {r.drop_rate:.2f}%")
print(f"mean wait: success {r.wt_success_mean_ms:.1f} ms, failed {r.wt_failed_mean_ms:.1f} ms")

# 200 ms buckets; the retransmission storm shows up as the hump
rows = [row for row in res.series("SAT1") if row[1]]
peak = max(row[1] for row in rows)
for t, recv, drop in rows:
    bar = "#" * int(50 * recv / peak)
    print(f"{t / 1000:5.1f}s {recv:6d} {drop:6d} {bar}")

# the same population under group handover
g = run_scenario(cfg.replace(protocol="gho")).report
print(f"GHO: {g.success_rate:.2f}% success with {g.total_messages} messages at SAT1")
