"""Acceptance criteria, one test each, each recording a PASS/FAIL line.

The lines are printed as the tests run and collected again in the terminal
summary. Hardware-dependent checks (4, 5, 6) measure on the machine running
the suite, with repeated interleaved runs to tame scheduler noise.
"""

import hashlib
import json
import time

import numpy as np
import pytest

from e2sec import config as C
from e2sec.attack import NoiseMode, PerturbationSpec, perturb_window
from e2sec.cli import _train, main
from e2sec.intelligence import Autoencoder, decide_batch, reconstruct
from e2sec.linkbench import (
    LinkParams,
    cpu_linearity,
    run_echo_bench,
    run_max_throughput,
    run_throughput_bench,
    saturation_index,
    transmission_delay,
)
from e2sec.metrics import AttackConfig, run_attack_experiment
from e2sec.secchan import (
    PROFILES,
    SecChanError,
    channel_pair,
    ciphertext_length,
    get_profile,
    overhead,
)
from tests.acceptance_log import record
from tests.helpers import grad_rel_error

KEY = hashlib.sha256(b"acceptance").digest()

# Published saturation figures (Mb/s), shown next to local measurements only.
REFERENCE_MBPS = {"AES256-GCM": 1370, "CHACHA20-POLY1305": 989, "AES256-CCM": 573, "AES256-CBC-HMAC": 505}
REFERENCE_REDUCTION = {"sched": 2.0, "slice": 13.0}

THROUGHPUT_PAYLOAD = 6144
MAX_ROUNDS, MAX_RUN_S = 16, 1.5
KEY_PAIRS = [("AES128-CCM", "AES256-CCM"), ("AES128-CBC-HMAC", "AES256-CBC-HMAC")]
ORDER = ["AES256-GCM", "CHACHA20-POLY1305", "AES256-CCM", "AES256-CBC-HMAC"]


def _timed(budget_s):
    start = time.perf_counter()
    return lambda: (time.perf_counter() - start, budget_s)


def test_ac01_overhead_calibration():
    clock = _timed(1.0)
    ct = ciphertext_length(62, get_profile("paper-ccm"))
    floors = {name: min(overhead(n, p) for n in range(1, 4097))
              for name, p in PROFILES.items() if name != "NULL"}
    elapsed, budget = clock()
    ok = ct == 138 and min(floors.values()) >= 57 and elapsed < budget
    record(1, "overhead calibration", ok,
           f"ct(62)={ct}; min overhead per profile {floors}; {elapsed:.2f}s")
    assert ok


def test_ac02_rtt_lower_bound():
    clock = _timed(30.0)
    link = LinkParams(rate_bps=100e6, prop_delay_s=5e-4)
    sizes = [16, 62, 128, 256, 512, 1024, 1400]
    details, ok = [], True
    for suite in ("NULL", "paper-ccm"):
        for s in run_echo_bench(sizes, 100, get_profile(suite), link, KEY):
            bound = 2 * link.prop_delay_s + 2 * transmission_delay(8 * s.wire_bytes, link.rate_bps)
            ok &= bool(np.all(s.rtts >= bound))
            if s.payload_bytes in (62, 1400):
                details.append(f"{suite}/{s.payload_bytes}B median residual "
                               f"{np.median(s.rtts - bound) * 1e6:.1f}us")
    elapsed, budget = clock()
    ok &= elapsed < budget
    record(2, "RTT >= 2*d_prop + 2*L/R", ok, "; ".join(details) + f"; {elapsed:.1f}s")
    assert ok


def _channel_contract(profile, rng):
    failures = []
    tx, rx = channel_pair(profile, KEY)
    for _ in range(1000):
        frame = rng.bytes(int(rng.integers(0, 1500)))
        if rx.open_bytes(tx.seal(frame).to_bytes()) != frame:
            failures.append("roundtrip")

    if profile.suite.value != "NULL":
        tx, rx = channel_pair(profile, KEY, spi=0x51)
        wire = tx.seal(b"\x07" * 62).to_bytes()
        for i in range(len(wire)):
            for v in range(256):
                if v == wire[i]:
                    continue
                forged = bytearray(wire)
                forged[i] = v
                try:
                    rx.open_bytes(bytes(forged))
                    failures.append(f"tamper@{i}={v}")
                except SecChanError:
                    pass
        if rx.open_bytes(wire) != b"\x07" * 62:
            failures.append("original after sweep")

    tx, rx = channel_pair(profile, KEY, spi=0x52)
    records = [tx.seal(bytes([i % 256]) * 8).to_bytes() for i in range(200)]
    held = records[:64]
    for r in records[64:]:
        rx.open_bytes(r)
    # Everything up to 64 behind the newest (seq 200) is below the window.
    for r in held + records[64:]:
        try:
            rx.open_bytes(r)
            failures.append("replay accepted")
        except SecChanError:
            pass

    tx, rx = channel_pair(profile, KEY, spi=0x53)
    batch = [tx.seal(bytes([i]) * 4) for i in range(64)]
    for j in rng.permutation(64):
        if rx.open(batch[j]) != bytes([j]) * 4:
            failures.append("reorder")
    return failures


def test_ac03_secured_channel_contract():
    clock = _timed(120.0)
    rng = np.random.default_rng(3)
    results = {name: _channel_contract(p, rng) for name, p in PROFILES.items()}
    elapsed, budget = clock()
    bad = {k: v[:3] for k, v in results.items() if v}
    ok = not bad and elapsed < budget
    record(3, "secured channel contract", ok,
           f"{len(results)} profiles; failures {bad or 'none'}; {elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def saturation():
    """Unpaced throughput per suite over interleaved rounds, in Mb/s.

    Each AES128/AES256 pair runs back to back, in alternating order from one
    round to the next, so host drift hits both members of a pair alike.
    """
    paired = [s for pair in KEY_PAIRS for s in pair]
    order = paired + [s for s in ORDER if s not in paired]
    runs = {s: [] for s in order}
    start = time.perf_counter()
    for r in range(MAX_ROUNDS):
        for s in (order if r % 2 == 0 else order[::-1]):
            sample = run_max_throughput(get_profile(s), KEY, MAX_RUN_S, payload_bytes=THROUGHPUT_PAYLOAD)
            runs[s].append(sample.achieved_bps / 1e6)
    runs = {s: np.array(v) for s, v in runs.items()}
    return {s: float(np.median(v)) for s, v in runs.items()}, runs, time.perf_counter() - start


@pytest.mark.slow
def test_ac04_key_size_indifference(saturation):
    med, runs, elapsed = saturation
    # Median over rounds of the paired AES256/AES128 ratio.
    gaps = {(a, b): 1 - float(np.median(runs[b] / runs[a])) for a, b in KEY_PAIRS}
    ok = all(abs(g) <= 0.10 for g in gaps.values()) and elapsed < 300
    detail = "; ".join(f"{a} vs {b}: {med[a]:.0f}/{med[b]:.0f} Mb/s, paired gap {g:.1%}"
                       for (a, b), g in gaps.items())
    record(4, "AES128 vs AES256 within 10%", ok, f"{detail}; {MAX_ROUNDS} rounds, {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_ac05_suite_ordering(saturation):
    med, _, _ = saturation
    values = [med[s] for s in ORDER]
    ok = all(a >= b for a, b in zip(values, values[1:]))
    detail = ", ".join(f"{s} {med[s]:.0f} (ref {REFERENCE_MBPS[s]})" for s in ORDER)
    record(5, "GCM >= ChaCha20 >= CCM >= CBC", ok, detail + " Mb/s")
    assert ok


@pytest.mark.slow
def test_ac06_cpu_grows_linearly_until_saturation(saturation):
    med, _, _ = saturation
    clock = _timed(600.0)
    suite = "AES256-CCM"
    rates = np.linspace(0.1, 1.5, 15) * med[suite] * 1e6
    sweep = run_throughput_bench(rates, 2.0, get_profile(suite), LinkParams(), KEY,
                                 payload_bytes=THROUGHPUT_PAYLOAD)
    monotone, r2, n_pre = cpu_linearity(sweep)
    sat = saturation_index(sweep)
    elapsed, budget = clock()
    ok = monotone and n_pre >= 3 and r2 >= 0.9 and elapsed < budget
    cpu = ", ".join(f"{s.attempted_bps / 1e6:.0f}:{s.cpu_pct_mean:.0f}%" for s in sweep)
    where = "none" if sat is None else f"{sweep[sat].attempted_bps / 1e6:.0f} Mb/s"
    record(6, "CPU monotone and linear below saturation", ok,
           f"{suite}: R2={r2:.3f} over {n_pre} points, saturation at {where}; cpu {cpu}")
    assert ok


@pytest.mark.slow
def test_ac07_autoencoder_reduces_deviation():
    clock = _timed(300.0)
    violations, factors = [], {}
    for seed in range(5):
        cfg = C.load_config(seed=seed)
        _, ae = _train(cfg)
        for mode in (NoiseMode.PAPER_LITERAL, NoiseMode.ZERO_MEAN):
            acfg = AttackConfig(sigmas=(0.1, 0.2, 0.5, 1.0), mode=mode, runs=200, master_seed=seed)
            out = run_attack_experiment(acfg, ae)
            for sigma in acfg.sigmas:
                raw, with_ae = out.result(sigma, False), out.result(sigma, True)
                if with_ae.deviation_rate_any > raw.deviation_rate_any:
                    violations.append(f"seed{seed}/{mode.value}/{sigma}: rate")
                if sigma >= 0.2 and not (with_ae.mean_norm_dist_sched < raw.mean_norm_dist_sched
                                         and with_ae.mean_norm_dist_slice < raw.mean_norm_dist_slice):
                    violations.append(f"seed{seed}/{mode.value}/{sigma}: distance")
            if seed == 0:
                factors[mode.value] = {f["sigma"]: (round(f["sched"], 2), round(f["slice"], 2))
                                       for f in out.reduction_factors()}
    elapsed, budget = clock()
    ok = not violations and elapsed < budget
    record(7, "AE never increases deviation", ok,
           f"violations {violations or 'none'}; seed-0 distance reduction (sched, slice) {factors}; "
           f"reference sched x{REFERENCE_REDUCTION['sched']:g}, slice >x{REFERENCE_REDUCTION['slice']:g}; "
           f"{elapsed:.0f}s")
    assert ok


def test_ac08_denoising(trained):
    ds, ae = trained
    clock = _timed(60.0)
    clean = ds.flat("val")
    parts, ok = [], True
    for sigma in (0.2, 0.5, 1.0):
        noisy = perturb_window(clean, PerturbationSpec(sigma, NoiseMode.ZERO_MEAN, seed=8))
        d_noisy = float(np.linalg.norm(noisy - clean, axis=1).mean())
        d_rec = float(np.linalg.norm(reconstruct(ae, noisy) - clean, axis=1).mean())
        ok &= d_rec < d_noisy
        parts.append(f"sigma {sigma}: {d_rec:.3f} < {d_noisy:.3f}")
    elapsed, budget = clock()
    ok &= elapsed < budget
    record(8, "reconstruction closer to clean than the noisy input", ok, "; ".join(parts))
    assert ok


def test_ac09_gradient_check(trained):
    ds, _ = trained
    clock = _timed(60.0)
    rng = np.random.default_rng(9)
    val = ds.flat("val")
    worst = {}
    for out_act in ("linear", "sigmoid"):
        ae = Autoencoder.initialized((120, 32, 8, 32, 120), rng, out_act)
        errs = []
        for _ in range(5):
            x = val[rng.choice(len(val), 4, replace=False)]
            errs.append(grad_rel_error(ae, x + rng.normal(0, 0.5, x.shape), x))
        worst[out_act] = max(errs)
    elapsed, budget = clock()
    ok = max(worst.values()) < 1e-4 and elapsed < budget
    record(9, "analytic vs finite-difference gradients", ok,
           f"max relative error {', '.join(f'{k} {v:.1e}' for k, v in worst.items())}; {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_ac10_determinism(tmp_path):
    clock = _timed(300.0)
    files = ("attack_sim.csv", "kpi_dataset.csv", "kpi_dataset.json")
    digests = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["train-ae", "--out", str(out)]) == 0
        assert main(["attack-sim", "--out", str(out)]) == 0
        report = json.loads((out / "train_report.json").read_text())
        digests.append({**{f: hashlib.sha256((out / f).read_bytes()).hexdigest() for f in files},
                        "model": report["model_sha256"],
                        "model_file": hashlib.sha256((out / "ae.bin").read_bytes()).hexdigest()})
    elapsed, budget = clock()
    ok = digests[0] == digests[1] and elapsed < budget
    record(10, "byte-identical reruns", ok,
           f"model {digests[0]['model'][:16]}, attack_sim {digests[0]['attack_sim.csv'][:16]}; {elapsed:.0f}s")
    assert ok


def test_ac11_action_invariants(trained):
    _, ae = trained
    clock = _timed(60.0)
    rng = np.random.default_rng(11)
    n, chunk, bad = 1_000_000, 100_000, 0
    for start in range(0, n, chunk):
        w = rng.uniform(-0.5, 2.5, (chunk, 120))
        w[: chunk // 100] = 0.0
        # Alternate chunks go through the autoencoder as the defended agent does.
        sched, sl = decide_batch(w, ae if (start // chunk) % 2 else None)
        bad += int(np.count_nonzero((sl.sum(axis=1) != 50) | (sl < 0).any(axis=1)
                                    | ~np.isin(sched, (0, 1, 2)).all(axis=1)))
    elapsed, budget = clock()
    ok = bad == 0 and elapsed < budget
    record(11, "slicing sums to 50, scheduling in {0,1,2}", ok,
           f"{n} windows, {bad} violations; {elapsed:.1f}s")
    assert ok
