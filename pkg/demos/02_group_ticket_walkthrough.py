"""One group handover, step by step, using only the protocol primitives."""

import random

from ntn_handover import protocol as pc

rng = random.Random(42)

# the source satellite issued shares for a 7-member group this epoch
gid, rand = "G3:5", rng.randbytes(16)
shares, cm, csm = pc.generate_shares(gid, rand, 7, rng)
print(f"{len(shares)} shares, commitment[0] = {cm[0].hex()[:16]}...")

# it signs a SwitchToGroupHandover notification for the members
sat = pc.SatKeyPair.generate(rng)
note = pc.make_notification(sat, "SAT1", rand, gid, pc.Action.SWITCH, timestamp=5_000)
wire = pc.encode_notification(note)
print(f"notification is {len(wire)} bytes on the air")

# each member checks signature, freshness and replay
seen = set()
print("member verdict:", pc.verify_notification(sat.public, pc.decode_notification(wire), 5_000, 5_020, seen, rand).value)
print("same bytes again:", pc.verify_notification(sat.public, pc.decode_notification(wire), 5_000, 5_030, seen, rand).value)

# two aggregators get the threshold and the commitment list
threshold = pc.decide_threshold(len(shares))
gas = pc.select_aggregators(list(range(7)), 2, rng)
print(f"threshold {threshold}: a GA needs {threshold + 1} verified shares; GAs are members {gas}")

# members broadcast; one forged share is mixed in and ignored
ga = pc.GaState(gid, rand, threshold, cm)
arrivals = [shares[3], rng.randbytes(16), shares[0], shares[5], shares[6]]
for s in arrivals:
    req = ga.on_broadcast(gid, s)
    print(f"  share {s.hex()[:8]}: count={ga.count}", "-> request!" if req else "")
    if req:
        break

# the request travels as bytes; the issuer re-XORs the listed shares
blob = pc.encode_group_request(req)
back = pc.decode_group_request(blob)
print(f"request {len(blob)} bytes, members {back.aggregated_commitment}, ticket ok: {pc.verify_ticket(back, csm, cm)}")

# a GA that lies about who took part is caught
lie = pc.GroupHandoverRequest(gid, back.ticket, (0, 1, 2, 3))
print("forged membership accepted?", pc.verify_ticket(lie, csm, cm))
