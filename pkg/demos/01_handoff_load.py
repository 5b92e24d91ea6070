"""How many UEs a moving LEO cell hands off per second."""

import math

import numpy as np

from ntn_handover import geometry as geo

# a Starlink-like cell: 12.07 km radius, 7.56 km/s ground speed
R, V = 12.07, 7.56
a_circle = math.pi * R**2
print(f"cell area {a_circle:.1f} km^2")

# one second later the footprint has slid 7.56 km; the part it left behind
# is the hand-off area
moved = V * 1.0
print(f"overlap {geo.intersect_area(R, moved):.1f} km^2, left behind {geo.handoff_area(R, moved):.1f} km^2")

# scale by UE density: 65,519 UEs in the cell
q = geo.HandoffLoadQuery(ue_count=65_519, cell_radius=R, satellite_speed=V, window=1.0)
print(f"UEs needing handover per second: {geo.expected_handoffs(q):,.0f}")

# smaller windows, smaller bursts; the curve is close to linear early on
for dt in (0.01, 0.1, 0.5, 1.0, 2.0):
    q = geo.HandoffLoadQuery(65_519, R, V, dt)
    print(f"  dt={dt:>4}s  N={geo.expected_handoffs(q):>9,.0f}")

# a quick Monte-Carlo check of the overlap formula
rng = np.random.default_rng(0)
pts = rng.uniform(-R, R, size=(1_000_000, 2))
inside = ((pts**2).sum(1) <= R * R) & (((pts[:, 0] - moved) ** 2 + pts[:, 1] ** 2) <= R * R)
print(f"monte-carlo overlap {inside.mean() * 4 * R * R:.1f} km^2")
