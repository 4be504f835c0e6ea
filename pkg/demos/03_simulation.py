"""One seed of the streaming simulation under the three association rules.

The proposed rule trades chunk arrivals against quality through the weight V.
Max-arrival fills queues fastest at low quality; highest-quality streams the
best version and stalls more often.
"""

from d2dvideo.config import load_config
from d2dvideo.engine import Simulator, prepare_placement

config = load_config()
placement = prepare_placement(config)

print(f"{'policy':16s} {'quality dB':>10s} {'delay':>8s} {'backlog':>9s}  collisions")
for policy in ("proposed", "max-arrival", "highest-quality"):
    report = Simulator(config, seed=0, policy=policy, placement=placement).run(5000)
    print(f"{policy:16s} {report.average_quality:10.3f} {report.average_delay:8.4f} "
          f"{report.average_backlog:9.2f}  {report.scheduled_groups + report.noma_groups}")

# The full trace is available too: every row is (slot, user, Q, quality, mode, delayed).
rows = list(report.trace_rows())
print("\nfirst trace rows:", rows[:3])
