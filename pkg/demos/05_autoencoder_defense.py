"""
Autoencoder in front of the agent
=================================

Train the denoising autoencoder on synthetic KPIs, then perturb KPI windows
and count how often the agent's action changes with and without it.
"""

from e2sec import config as C
from e2sec.attack import NoiseMode
from e2sec.cli import _train
from e2sec.metrics import AttackConfig, run_attack_experiment

cfg = C.load_config()
ds, ae = _train(cfg)
print(f"val MSE {ae.report['val_mse']:.4f} vs per-feature variance {ae.report['val_variance']:.4f}")

for mode in (NoiseMode.PAPER_LITERAL, NoiseMode.ZERO_MEAN):
    out = run_attack_experiment(AttackConfig(sigmas=(0.1, 0.2, 0.5, 1.0), mode=mode), ae)
    print(f"\n{mode.value}")
    print(f"{'sigma':>6s} {'raw dev':>8s} {'ae dev':>8s} {'raw d_slice':>12s} {'ae d_slice':>11s}")
    for sigma in (0.1, 0.2, 0.5, 1.0):
        raw, with_ae = out.result(sigma, False), out.result(sigma, True)
        print(f"{sigma:6.1f} {raw.deviation_rate_any:8.2f} {with_ae.deviation_rate_any:8.2f} "
              f"{raw.mean_norm_dist_slice:12.4f} {with_ae.mean_norm_dist_slice:11.4f}")
