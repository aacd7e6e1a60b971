"""
Echo latency over an emulated link
==================================

Round trips over a 100 Mb/s link with 0.5 ms propagation delay. The link
fixes the transmission and propagation terms, so what is left over is the
time spent sealing, opening and scheduling.
"""

from e2sec.linkbench import LinkParams, run_echo_bench
from e2sec.secchan import get_profile, random_key

link = LinkParams(rate_bps=100e6, prop_delay_s=5e-4)
key = random_key()

print(f"{'suite':12s} {'bytes':>6s} {'wire':>6s} {'p50 us':>9s} {'2*d_trans':>10s} {'d_proc':>8s}")
for suite in ("NULL", "AES256-GCM", "paper-ccm"):
    for s in run_echo_bench([62, 512, 1400], 50, get_profile(suite), link, key):
        print(f"{suite:12s} {s.payload_bytes:6d} {s.wire_bytes:6d} {s.rtt_p50 * 1e6:9.1f} "
              f"{2 * s.d_trans * 1e6:10.1f} {s.d_proc_est * 1e6:8.1f}")
