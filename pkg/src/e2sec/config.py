"""Experiment configuration: JSON documents layered over the shipped defaults."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from importlib import resources
from pathlib import Path
from typing import Optional

from .attack import NoiseMode, PerturbationSpec
from .intelligence import TrainConfig
from .kpi import ConfigError, Scenario, default_scenario
from .linkbench import LinkParams
from .metrics import AttackConfig
from .secchan import PROFILES, SecurityProfile, profile_from_dict

SCHEMA_VERSION = 1


def default_config() -> dict:
    text = resources.files("e2sec").joinpath("data/default_config.json").read_text()
    return json.loads(text)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "scenario":
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path=None, seed: Optional[int] = None, out: Optional[str] = None) -> dict:
    cfg = default_config()
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        version = user.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        unknown = set(user) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        cfg = _merge(cfg, user)
    if seed is not None:
        cfg["master_seed"] = int(seed)
    if out is not None:
        cfg["output_dir"] = str(out)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    link_params(cfg)
    profiles(cfg)
    profile(cfg, cfg["security"]["profile"])
    for name in cfg["bench_latency"]["suites"] + cfg["bench_throughput"]["suites"]:
        profile(cfg, name)
    scenario(cfg)
    train_config(cfg)
    attack_config(cfg)
    key(cfg)
    if int(cfg["traffic"]["window"]) < 1 or int(cfg["traffic"]["ticks"]) < int(cfg["traffic"]["window"]):
        raise ConfigError("traffic.ticks must be at least traffic.window >= 1")
    for rate in ("tamper_rate", "replay_rate"):
        if not 0 <= float(cfg["e2e"][rate]) <= 1:
            raise ConfigError(f"e2e.{rate} must lie in [0, 1]")


def derive_seed(master: int, label: str) -> int:
    return int.from_bytes(hashlib.sha256(f"{master}|{label}".encode()).digest()[:8], "big")


def link_params(cfg: dict) -> LinkParams:
    rate = cfg["link"].get("rate_bps")
    try:
        return LinkParams(math.inf if rate is None else float(rate), float(cfg["link"]["prop_delay_s"]))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"link: {exc}") from None


def profiles(cfg: dict) -> dict:
    out = dict(PROFILES)
    for name, d in cfg["security"].get("profiles", {}).items():
        try:
            out[name] = profile_from_dict({**d, "name": name})
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"security.profiles.{name}: {exc}") from None
    return out


def profile(cfg: dict, name: str) -> SecurityProfile:
    table = profiles(cfg)
    if name not in table:
        raise ConfigError(f"unknown security profile {name!r}")
    return table[name]


def key(cfg: dict) -> bytes:
    """Pre-shared 256-bit key: ``security.key_hex`` or one derived from the master seed."""
    hexkey = cfg["security"].get("key_hex")
    if hexkey is None:
        return hashlib.sha256(f"e2sec-psk|{cfg['master_seed']}".encode()).digest()
    try:
        k = bytes.fromhex(hexkey)
    except ValueError:
        raise ConfigError("security.key_hex is not hex") from None
    if len(k) != 32:
        raise ConfigError("security.key_hex must encode 32 bytes")
    return k


def scenario(cfg: dict) -> Scenario:
    d = cfg["traffic"].get("scenario")
    return default_scenario() if d is None else Scenario.from_dict(d)


def train_config(cfg: dict) -> TrainConfig:
    a = cfg["ae"]
    try:
        return TrainConfig(hidden=tuple(a["hidden"]), epochs=int(a["epochs"]),
                           learning_rate=float(a["learning_rate"]), batch_size=int(a["batch_size"]),
                           noise_sigma=float(a["noise_sigma"]),
                           output_activation=str(a.get("output_activation", "linear")),
                           seed=derive_seed(cfg["master_seed"], "ae") % (1 << 32))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"ae: {exc}") from None


def attack_config(cfg: dict) -> AttackConfig:
    a = cfg["attack"]
    try:
        sigmas = tuple(float(s) for s in a["sigmas"])
        if any(s < 0 for s in sigmas):
            raise ValueError("sigmas must be non-negative")
        PerturbationSpec(0.0, target_features=frozenset(a["target_features"])).mask()
        return AttackConfig(sigmas=sigmas, mode=NoiseMode(a["mode"]), runs=int(a["runs"]),
                            master_seed=int(cfg["master_seed"]), window=int(cfg["traffic"]["window"]),
                            burn_in=int(a["burn_in"]), target_features=tuple(a["target_features"]),
                            clamp=bool(a["clamp"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"attack: {exc}") from None


def perturbation(cfg: dict) -> Optional[PerturbationSpec]:
    d = cfg["e2e"].get("perturbation")
    if d is None:
        return None
    try:
        return PerturbationSpec(float(d["sigma"]), NoiseMode(d.get("mode", "PAPER_LITERAL")),
                                frozenset(d.get("target_features", ())),
                                derive_seed(cfg["master_seed"], "e2e/perturbation"),
                                bool(d.get("clamp", True)))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"e2e.perturbation: {exc}") from None


def dump(cfg: dict, path) -> None:
    Path(path).write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
