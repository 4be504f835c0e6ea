"""How the quality weight V moves the proposed rule.

Runs a few seeds for each V and prints the mean quality and delay incidence
with standard errors. Larger V buys quality; at the default operating point
the delay incidence barely moves.
"""

from d2dvideo.config import load_config
from d2dvideo.experiments import simulation_sweep

config = load_config()
rows = simulation_sweep(config, "quality_weight", values=[0.01, 0.1, 0.2, 1.0],
                        seeds=range(5), slots=4000)
for x, policy, v, metric, mean, se in rows:
    if metric != "backlog":
        print(f"V={x:<5} {metric:8s} {mean:9.4f} +/- {se:.4f}")
