"""Where should devices cache which file at which quality?

Solves the caching problem for the default five-file catalog and shows how
the optimum shifts as the link SNR drops.
"""

import numpy as np

from d2dvideo.config import load_config
from d2dvideo.placement import solve_placement

config = load_config()
plc = config.placement


def solve(cfg):
    return solve_placement(cfg.catalog, cfg.profile, cfg.radio, plc.storage, plc.tolerance,
                           plc.max_iter, quality_scale=plc.quality_scale,
                           log_base=plc.log_base)


np.set_printoptions(precision=4, suppress=True)
for snr in (20.0, 10.0):
    sol = solve(config.with_param("snr_db", snr).with_param("device_intensity", 0.1))
    print(f"SNR {snr:.0f} dB: caching probability p[file, quality]")
    print(sol.p)
    print(f"  storage used {sol.storage_used:.4f} of {sol.storage}, "
          f"multiplier {sol.nu:.4g}, expected quality sum {sol.objective():.2f}\n")

# At low SNR a cached copy rarely reaches the user, so storage is spent on
# the popular files only and the tail of the catalog is not cached at all.
