"""HO vs GHO over a small grid, aggregated across seeds like the CLI does."""

from ntn_handover import ScenarioConfig, run_scenario
from ntn_handover.metrics import aggregate

reports = []
for n in (10_000, 30_000, 50_000):
    for protocol in ("ho", "gho"):
        for seed in (10, 20):
            reports.append(run_scenario(ScenarioConfig(protocol=protocol, ue_count=n, seed=seed)).report)

print(f"{'UEs':>7} | {'success HO':>10} {'GHO':>7} | {'msgs HO':>9} {'GHO':>7} | {'drop HO':>7} {'GHO':>5}")
for row in aggregate(reports):
    v = row.values
    print(
        f"{row.ue_count:>7} | {v[('success_rate', 'ho')][0]:>10.2f} {v[('success_rate', 'gho')][0]:>7.2f} | "
        f"{v[('total_messages', 'ho')][0]:>9.0f} {v[('total_messages', 'gho')][0]:>7.0f} | "
        f"{v[('drop_rate', 'ho')][0]:>7.2f} {v[('drop_rate', 'gho')][0]:>5.2f}"
    )
