"""
Throughput and CPU
==================

Push a paced stream through one suite at rising rates. Below saturation the
achieved rate follows the attempted one and CPU grows with it; past it the
achieved rate flattens.
"""

import numpy as np

from e2sec.linkbench import (LinkParams, cpu_linearity, run_max_throughput, run_throughput_bench,
                             saturation_index)
from e2sec.secchan import get_profile, random_key

profile, key = get_profile("AES256-GCM"), random_key()

best = run_max_throughput(profile, key, duration=2.0, payload_bytes=6144)
print(f"unpaced: {best.achieved_bps / 1e6:.0f} Mb/s at {best.cpu_pct_mean:.0f}% CPU")

rates = np.linspace(0.2, 1.4, 7) * best.achieved_bps
sweep = run_throughput_bench(rates, 1.0, profile, LinkParams(), key, payload_bytes=6144)
for s in sweep:
    print(f"attempted {s.attempted_bps / 1e6:7.0f}  achieved {s.achieved_bps / 1e6:7.0f} Mb/s"
          f"  cpu {s.cpu_pct_mean:5.1f}%")

sat = saturation_index(sweep)
monotone, r2, n = cpu_linearity(sweep)
print("saturates at", "never" if sat is None else f"{sweep[sat].attempted_bps / 1e6:.0f} Mb/s",
      f"| CPU monotone={monotone}, R2={r2:.3f} over {n} points")
