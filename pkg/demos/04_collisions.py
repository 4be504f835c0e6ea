"""Two users ask the same device in the same slot.

The resolver compares scheduling one winner (the other user is rescheduled
to a different device or falls back to the base station) with serving both
users at once through power-domain multiplexing, and keeps the cheaper one.
"""

import numpy as np

from d2dvideo.association import Candidate, Mode, SlotContext, resolve_collisions
from d2dvideo.config import load_config

config = load_config()
radio, prof = config.radio, config.profile

# device 0 sits between both users; device 1 only serves user 1
candidates = [
    [Candidate(device=0, quality=2, gain=0.05, arrivals=1)],
    [Candidate(device=0, quality=1, gain=0.01, arrivals=1),
     Candidate(device=1, quality=0, gain=0.002, arrivals=0)],
]
ctx = SlotContext(
    queues=np.array([10.0, 95.0]), candidates=candidates,
    user_pos=np.array([[40.0, 50.0], [60.0, 50.0]]),
    device_pos=np.array([[50.0, 50.0], [75.0, 50.0]]),
    radius=radio.coverage_radius, measure=np.asarray(prof.measure_db),
    chunk_bits=np.asarray(prof.chunk_bits), control=config.control,
    bandwidth=radio.bandwidth, noise_var=radio.noise_var,
    coherence_time=radio.coherence_time)

first = [ctx.choice(u, candidates[u][0], Mode.SOLO) for u in range(2)]
final, resolutions = resolve_collisions(first, ctx)
for r in resolutions:
    noma = "n/a" if r.noma_cost is None else f"{r.noma_cost:.2f}"
    print(f"device {r.group.device}: schedule cost {r.schedule_cost:.2f}, "
          f"multiplexing cost {noma}, picked {r.mode}")
for ch in final:
    print(f"  user {ch.user}: device {ch.device}, quality {ch.quality}, "
          f"{ch.arrivals} chunk(s), {ch.mode.value}")
