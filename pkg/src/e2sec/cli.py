"""Command-line runner.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as C
from .intelligence import Autoencoder, train_autoencoder
from .kpi import ConfigError, build_dataset, generate_traffic, load_dataset, save_dataset
from .linkbench import (LinkParams, run_echo_bench, run_max_throughput, run_throughput_bench,
                        saturation_index, saturation_rate, write_latency_csv, write_throughput_csv)
from .metrics import run_attack_experiment, write_attack_csv, write_summary_csv
from .pipeline import run_e2e

log = logging.getLogger("e2sec")


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    C.dump(cfg, out / "config.resolved.json")
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")


def cmd_bench_latency(cfg: dict) -> Path:
    out = _outdir(cfg)
    b = cfg["bench_latency"]
    suites = list(dict.fromkeys(["NULL"] + list(b["suites"])))
    link, key = C.link_params(cfg), C.key(cfg)
    samples = []
    for name in suites:
        samples += run_echo_bench(b["sizes"], int(b["reps"]), C.profile(cfg, name), link, key,
                                  timeout=float(b["timeout_s"]))
    path = out / "latency.csv"
    write_latency_csv(path, samples)
    return path


def cmd_bench_throughput(cfg: dict) -> Path:
    out = _outdir(cfg)
    b = cfg["bench_throughput"]
    link = LinkParams() if b.get("unconstrained_link", True) else C.link_params(cfg)
    key = C.key(cfg)
    rates = [float(r) * 1e6 for r in b["rates_mbps"]]
    rows, summary = [], []
    for name in b["suites"]:
        prof = C.profile(cfg, name)
        sweep = run_throughput_bench(rates, float(b["duration_s"]), prof, link, key,
                                     payload_bytes=int(b["payload_bytes"]))
        rows += sweep
        sat = saturation_index(sweep)
        summary.append({
            "suite": name,
            "saturation_mbps": saturation_rate(sweep) / 1e6,
            "first_saturated_attempt_mbps": None if sat is None else sweep[sat].attempted_bps / 1e6,
        })
        if b.get("max_duration_s"):
            best = run_max_throughput(prof, key, float(b["max_duration_s"]), link, int(b["payload_bytes"]))
            rows.append(best)
            summary[-1]["max_mbps"] = best.achieved_bps / 1e6
    path = out / "throughput.csv"
    write_throughput_csv(path, rows)
    _write_json(out / "throughput_summary.json", summary)
    return path


def _dataset(cfg: dict):
    t = cfg["traffic"]
    if t.get("dataset_path"):
        return load_dataset(t["dataset_path"])
    seed = C.derive_seed(cfg["master_seed"], "traffic")
    stream = generate_traffic(seed, int(t["ticks"]), C.scenario(cfg))
    meta = {"seed": seed, "ticks": int(t["ticks"]), "scenario": C.scenario(cfg).to_dict()}
    return build_dataset(stream, int(t["window"]), C.derive_seed(cfg["master_seed"], "split") % (1 << 32), meta=meta)


def _train(cfg: dict):
    ds = _dataset(cfg)
    train, val = ds.flat("train"), ds.flat("val")
    ae = train_autoencoder(train, val, C.train_config(cfg), ds.normalizer)
    return ds, ae


def cmd_train_ae(cfg: dict) -> Path:
    out = _outdir(cfg)
    ds, ae = _train(cfg)
    save_dataset(ds, out)
    model_path = out / "ae.bin"
    digest = ae.save(model_path)
    val = ds.flat("val")
    report = dict(ae.report)
    report.update(model_sha256=digest, model_file=model_path.name,
                  mean_predictor_val_mse=float(np.mean((val - ds.flat("train").mean(axis=0)) ** 2)),
                  latent_dim=ae.latent_dim, sizes=list(ae.sizes))
    _write_json(out / "train_report.json", report)
    return model_path


def _load_or_train(cfg: dict) -> Autoencoder:
    path = cfg["ae"].get("model_path")
    if path:
        if not Path(path).is_file():
            raise ConfigError(f"autoencoder file {path} not found")
        return Autoencoder.load(path)
    return _train(cfg)[1]


def cmd_attack_sim(cfg: dict) -> Path:
    out = _outdir(cfg)
    ae = _load_or_train(cfg)
    outcome = run_attack_experiment(C.attack_config(cfg), ae, scenario=C.scenario(cfg))
    write_attack_csv(out / "attack_sim.csv", outcome.runs)
    write_summary_csv(out / "attack_summary.csv", outcome.summary)
    _write_json(out / "reduction_factors.json", outcome.reduction_factors())
    return out / "attack_sim.csv"


def cmd_e2e(cfg: dict) -> Path:
    out = _outdir(cfg)
    e = cfg["e2e"]
    ds, ae = _train(cfg) if e["use_ae"] and not cfg["ae"].get("model_path") else (_dataset(cfg), None)
    if e["use_ae"] and ae is None:
        ae = _load_or_train(cfg)
    normalizer = ae.normalizer if ae is not None and ae.normalizer is not None else ds.normalizer
    seed = C.derive_seed(cfg["master_seed"], "e2e")
    stream = generate_traffic(seed, int(e["ticks"]), C.scenario(cfg))
    result = run_e2e(stream, normalizer, int(cfg["traffic"]["window"]),
                     C.profile(cfg, cfg["security"]["profile"]), C.key(cfg), C.link_params(cfg), ae,
                     float(e["tamper_rate"]), float(e["replay_rate"]), C.perturbation(cfg), seed)
    counters = dict(result.counters)
    counters["actions_sha256"] = hashlib.sha256(
        json.dumps([[a.scheduling, a.slicing] for a in result.actions]).encode()).hexdigest()
    _write_json(out / "e2e_counters.json", counters)
    return out / "e2e_counters.json"


COMMANDS = {
    "bench-latency": cmd_bench_latency,
    "bench-throughput": cmd_bench_throughput,
    "train-ae": cmd_train_ae,
    "attack-sim": cmd_attack_sim,
    "e2e": cmd_e2e,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="e2sec", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config layered over the defaults")
        s.add_argument("--out", help="output directory (overrides output_dir)")
        s.add_argument("--seed", type=int, help="master seed (overrides master_seed)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = C.load_config(args.config, args.seed, args.out)
        path = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {exc!r}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
