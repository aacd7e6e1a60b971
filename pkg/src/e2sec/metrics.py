"""Action deviation/distance metrics and the perturbation experiment driver.

Per-run seeds follow one splitting rule so any run can be reproduced alone::

    seed_run = int.from_bytes(sha256(f"{master}|{sigma!r}|{arm}|{run}").digest()[:8], "big")

where ``arm`` is ``"ae"`` or ``"raw"``. Each run's generator draws the KPI
window first, then the perturbation noise.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .attack import NoiseMode, PerturbationSpec, perturb_window
from .intelligence import TOTAL_PRBS, AgentAction, Autoencoder, decide_batch
from .kpi import DEFAULT_WINDOW, ConfigError, Normalizer, Scenario, default_scenario, generate_traffic

SCHED_NORM = 2.0 * math.sqrt(3.0)
SLICE_NORM = TOTAL_PRBS * math.sqrt(2.0)
THREADS_ENV = "ORAN_SEC_BENCH_THREADS"

ATTACK_SIM_COLUMNS = ["sigma", "mode", "with_ae", "run_id", "deviated_any", "deviated_sched",
                      "deviated_slice", "dist_sched", "dist_slice", "seed"]
SUMMARY_COLUMNS = ["sigma", "mode", "with_ae", "runs", "deviation_rate_any", "deviation_rate_sched",
                   "deviation_rate_slice", "mean_norm_dist_sched", "mean_norm_dist_slice",
                   "rate_any_ci_lo", "rate_any_ci_hi"]


def action_deviation(intended: AgentAction, taken: AgentAction) -> Tuple[bool, bool, bool]:
    sched = intended.scheduling != taken.scheduling
    sl = intended.slicing != taken.slicing
    return sched or sl, sched, sl


def normalized_distance(intended: AgentAction, taken: AgentAction) -> Tuple[float, float]:
    d_sched = np.linalg.norm(np.subtract(intended.scheduling, taken.scheduling)) / SCHED_NORM
    d_slice = np.linalg.norm(np.subtract(intended.slicing, taken.slicing)) / SLICE_NORM
    return float(d_sched), float(d_slice)


def run_seed(master_seed: int, sigma: float, arm: str, run_index: int) -> int:
    key = f"{master_seed}|{float(sigma)!r}|{arm}|{run_index}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


def thread_cap(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, default)))
    except ValueError:
        return default


@dataclass(frozen=True)
class AttackConfig:
    sigmas: Tuple[float, ...] = (0.0, 0.1, 0.2, 0.5, 1.0)
    mode: NoiseMode = NoiseMode.PAPER_LITERAL
    runs: int = 200
    master_seed: int = 0
    window: int = DEFAULT_WINDOW
    burn_in: int = 20
    target_features: Tuple[str, ...] = ()
    clamp: bool = True
    arms: Tuple[bool, ...] = (False, True)
    bootstrap: int = 1000


@dataclass(frozen=True)
class DeviationResult:
    sigma: float
    mode: str
    with_ae: bool
    runs: int
    deviation_rate_any: float
    deviation_rate_sched: float
    deviation_rate_slice: float
    mean_norm_dist_sched: float
    mean_norm_dist_slice: float
    rate_any_ci: Tuple[float, float] = (float("nan"), float("nan"))

    def row(self) -> dict:
        return {
            "sigma": repr(self.sigma), "mode": self.mode, "with_ae": int(self.with_ae),
            "runs": self.runs,
            "deviation_rate_any": f"{self.deviation_rate_any:.6f}",
            "deviation_rate_sched": f"{self.deviation_rate_sched:.6f}",
            "deviation_rate_slice": f"{self.deviation_rate_slice:.6f}",
            "mean_norm_dist_sched": f"{self.mean_norm_dist_sched:.9f}",
            "mean_norm_dist_slice": f"{self.mean_norm_dist_slice:.9f}",
            "rate_any_ci_lo": f"{self.rate_any_ci[0]:.6f}",
            "rate_any_ci_hi": f"{self.rate_any_ci[1]:.6f}",
        }


@dataclass
class AttackRun:
    sigma: float
    mode: str
    with_ae: bool
    run_id: int
    deviated_any: bool
    deviated_sched: bool
    deviated_slice: bool
    dist_sched: float
    dist_slice: float
    seed: int

    def row(self) -> dict:
        return {
            "sigma": repr(self.sigma), "mode": self.mode, "with_ae": int(self.with_ae),
            "run_id": self.run_id, "deviated_any": int(self.deviated_any),
            "deviated_sched": int(self.deviated_sched), "deviated_slice": int(self.deviated_slice),
            "dist_sched": f"{self.dist_sched:.12g}", "dist_slice": f"{self.dist_slice:.12g}",
            "seed": self.seed,
        }


@dataclass
class AttackOutcome:
    runs: List[AttackRun]
    summary: List[DeviationResult]

    def result(self, sigma: float, with_ae: bool) -> DeviationResult:
        for r in self.summary:
            if r.sigma == sigma and r.with_ae == with_ae:
                return r
        raise KeyError((sigma, with_ae))

    def reduction_factors(self) -> List[dict]:
        """Mean distance without the AE over mean distance with it, per sigma."""
        out = []
        for sigma in sorted({r.sigma for r in self.summary}):
            raw, ae = self.result(sigma, False), self.result(sigma, True)
            out.append({
                "sigma": sigma,
                "sched": _ratio(raw.mean_norm_dist_sched, ae.mean_norm_dist_sched),
                "slice": _ratio(raw.mean_norm_dist_slice, ae.mean_norm_dist_slice),
            })
        return out


def _ratio(a: float, b: float) -> float:
    if b == 0:
        return math.inf if a > 0 else float("nan")
    return a / b


def bootstrap_ci(flags: np.ndarray, rng: np.random.Generator, n: int = 1000) -> Tuple[float, float]:
    flags = np.asarray(flags, dtype=float)
    if len(flags) == 0 or n <= 0:
        return float("nan"), float("nan")
    means = flags[rng.integers(0, len(flags), (n, len(flags)))].mean(axis=1)
    lo, hi = np.percentile(means, [2.5, 97.5])
    return float(lo), float(hi)


def _cell(sigma: float, with_ae: bool, cfg: AttackConfig, ae: Optional[Autoencoder],
          normalizer: Normalizer, scenario: Scenario):
    arm = "ae" if with_ae else "raw"
    seeds = [run_seed(cfg.master_seed, sigma, arm, i) for i in range(cfg.runs)]
    spec = PerturbationSpec(sigma, cfg.mode, frozenset(cfg.target_features), cfg.master_seed, cfg.clamp)
    clean, dirty = [], []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        raw = generate_traffic(rng, cfg.burn_in + cfg.window, scenario)[-cfg.window:]
        x = normalizer.normalize(raw).reshape(-1)
        clean.append(x)
        dirty.append(perturb_window(x, spec, rng))
    model = ae if with_ae else None
    s0, p0 = decide_batch(np.array(clean), model)
    s1, p1 = decide_batch(np.array(dirty), model)
    d_sched = np.linalg.norm(s0 - s1, axis=1) / SCHED_NORM
    d_slice = np.linalg.norm(p0 - p1, axis=1) / SLICE_NORM
    dev_sched = (s0 != s1).any(axis=1)
    dev_slice = (p0 != p1).any(axis=1)
    runs = [AttackRun(sigma, cfg.mode.value, with_ae, i, bool(a or b), bool(a), bool(b),
                      float(ds), float(dp), seeds[i])
            for i, (a, b, ds, dp) in enumerate(zip(dev_sched, dev_slice, d_sched, d_slice))]
    dev_any = dev_sched | dev_slice
    boot_rng = np.random.default_rng(run_seed(cfg.master_seed, sigma, arm + "/bootstrap", 0))
    result = DeviationResult(
        sigma, cfg.mode.value, with_ae, cfg.runs,
        float(dev_any.mean()), float(dev_sched.mean()), float(dev_slice.mean()),
        float(d_sched.mean()), float(d_slice.mean()), bootstrap_ci(dev_any, boot_rng, cfg.bootstrap))
    return runs, result


def run_attack_experiment(cfg: AttackConfig, ae: Optional[Autoencoder],
                          normalizer: Optional[Normalizer] = None,
                          scenario: Optional[Scenario] = None,
                          threads: Optional[int] = None) -> AttackOutcome:
    """Sweep sigma for each arm; one clean/perturbed pair per run.

    ``normalizer`` defaults to the one stored with ``ae``.
    """
    if any(cfg.arms) and ae is None:
        raise ConfigError("the with-AE arm needs a trained autoencoder")
    normalizer = normalizer or (ae.normalizer if ae is not None else None)
    if normalizer is None:
        raise ConfigError("no normalization statistics: pass a normalizer or an AE that carries one")
    scenario = scenario or default_scenario()
    cells = [(float(s), arm) for s in cfg.sigmas for arm in cfg.arms]
    workers = min(threads or thread_cap(), len(cells)) or 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        done = list(pool.map(lambda c: _cell(c[0], c[1], cfg, ae, normalizer, scenario), cells))
    runs = [r for cell_runs, _ in done for r in cell_runs]
    return AttackOutcome(runs, [res for _, res in done])


def write_attack_csv(path, runs: Sequence[AttackRun]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, ATTACK_SIM_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in runs:
            w.writerow(r.row())


def write_summary_csv(path, summary: Sequence[DeviationResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in summary:
            w.writerow(r.row())
