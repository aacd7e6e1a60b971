"""Synthetic per-slice KPI streams and the windowed datasets built from them.

A stream is an array of shape ``(ticks, 3, 4)``: slices in
:data:`SLICES` order, features in :data:`FEATURES` order. Each of the 12
series is an independent stationary AR(1) process around its configured mean,
floored at zero (and rounded for UE counts).
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Optional

import numpy as np

SLICES = ("eMBB", "URLLC", "mMTC")
FEATURES = ("throughput_mbps", "buffer_bytes", "requested_prbs", "num_ues")
N_FEATURES = len(SLICES) * len(FEATURES)
CSV_COLUMNS = ["tick", "slice"] + list(FEATURES)
DEFAULT_WINDOW = 10


class ConfigError(ValueError):
    pass


DEFAULT_SCENARIO = {
    "phi": 0.8,
    "slices": {
        # eMBB: high throughput; URLLC: small buffers; mMTC: many UEs.
        "eMBB": {"throughput_mbps": [40.0, 8.0], "buffer_bytes": [60000.0, 15000.0],
                 "requested_prbs": [25.0, 5.0], "num_ues": [10.0, 2.0]},
        "URLLC": {"throughput_mbps": [5.0, 1.0], "buffer_bytes": [2000.0, 500.0],
                  "requested_prbs": [10.0, 2.0], "num_ues": [5.0, 1.0]},
        "mMTC": {"throughput_mbps": [1.0, 0.25], "buffer_bytes": [8000.0, 2000.0],
                 "requested_prbs": [15.0, 3.0], "num_ues": [40.0, 8.0]},
    },
}


@dataclass(frozen=True)
class Scenario:
    """Per-(slice, feature) means and standard deviations plus AR(1) memory."""

    means: np.ndarray
    stds: np.ndarray
    phi: float = 0.8

    @classmethod
    def from_dict(cls, d: Mapping) -> "Scenario":
        try:
            means = np.array([[float(d["slices"][s][f][0]) for f in FEATURES] for s in SLICES])
            stds = np.array([[float(d["slices"][s][f][1]) for f in FEATURES] for s in SLICES])
            phi = float(d.get("phi", 0.8))
        except (KeyError, IndexError, TypeError) as exc:
            raise ConfigError(f"malformed traffic scenario: {exc!r}") from None
        if (stds < 0).any():
            raise ConfigError("scenario standard deviations must be non-negative")
        if (means < 0).any() or not np.isfinite(means).all() or not np.isfinite(stds).all():
            raise ConfigError("scenario means must be finite and non-negative")
        if not 0 <= phi < 1:
            raise ConfigError(f"AR(1) coefficient must lie in [0, 1), got {phi}")
        return cls(means, stds, phi)

    def to_dict(self) -> dict:
        return {
            "phi": self.phi,
            "slices": {s: {f: [float(self.means[i, j]), float(self.stds[i, j])]
                           for j, f in enumerate(FEATURES)}
                       for i, s in enumerate(SLICES)},
        }


def default_scenario() -> Scenario:
    return Scenario.from_dict(DEFAULT_SCENARIO)


@dataclass(frozen=True)
class KpiReport:
    slice_id: str
    throughput_mbps: float
    buffer_bytes: float
    requested_prbs: float
    num_ues: int
    timestamp: int


def generate_traffic(seed: int, ticks: int, scenario: Optional[Scenario] = None) -> np.ndarray:
    if scenario is None:
        scenario = default_scenario()
    if ticks < 1:
        raise ConfigError("ticks must be positive")
    rng = np.random.default_rng(seed)
    mu, sd, phi = scenario.means, scenario.stds, scenario.phi
    innov = sd * np.sqrt(1.0 - phi * phi)
    eps = rng.standard_normal((ticks, 3, 4))
    raw = np.empty((ticks, 3, 4))
    raw[0] = mu + sd * eps[0]
    for t in range(1, ticks):
        raw[t] = mu + phi * (raw[t - 1] - mu) + innov * eps[t]
    out = np.maximum(raw, 0.0)
    out[..., 3] = np.rint(out[..., 3])
    return out


def reports(stream: np.ndarray) -> Iterator[KpiReport]:
    for t, tick in enumerate(stream):
        for s, row in zip(SLICES, tick):
            yield KpiReport(s, float(row[0]), float(row[1]), float(row[2]), int(row[3]), t)


def sliding_windows(stream: np.ndarray, window: int) -> np.ndarray:
    """All length-``window`` windows, shape ``(n, window, 3, 4)``."""
    if len(stream) < window:
        raise ConfigError(f"stream of {len(stream)} ticks is shorter than the window {window}")
    idx = np.arange(len(stream) - window + 1)[:, None] + np.arange(window)
    return stream[idx]


@dataclass(frozen=True)
class Normalizer:
    """Per-(slice, feature) min-max scaling fitted on training data.

    Degenerate features (max == min) map to 0 and back to their constant.
    """

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, windows: np.ndarray) -> "Normalizer":
        flat = windows.reshape(-1, 3, 4)
        lo, hi = flat.min(axis=0), flat.max(axis=0)
        degenerate = hi == lo
        if degenerate.any():
            names = [f"{SLICES[i]}.{FEATURES[j]}" for i, j in zip(*np.nonzero(degenerate))]
            warnings.warn(f"degenerate KPI features pinned to 0: {', '.join(names)}", stacklevel=2)
        return cls(lo, hi)

    @property
    def span(self) -> np.ndarray:
        span = self.hi - self.lo
        return np.where(span == 0, 1.0, span)

    @property
    def degenerate(self) -> np.ndarray:
        return self.hi == self.lo

    def normalize(self, x: np.ndarray) -> np.ndarray:
        """Scale raw KPIs of shape ``(..., 3, 4)``; no clipping is applied."""
        z = (np.asarray(x, dtype=float) - self.lo) / self.span
        return np.where(self.degenerate, 0.0, z)

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.span * ~self.degenerate + self.lo

    def to_dict(self) -> dict:
        return {"min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Normalizer":
        return cls(np.array(d["min"], dtype=float), np.array(d["max"], dtype=float))


@dataclass
class KpiDataset:
    stream: np.ndarray
    window: int
    train_idx: np.ndarray
    val_idx: np.ndarray
    normalizer: Normalizer
    meta: dict = field(default_factory=dict)

    @property
    def windows(self) -> np.ndarray:
        return sliding_windows(self.stream, self.window)

    def flat(self, which: str = "train") -> np.ndarray:
        """Normalized windows flattened to ``(n, 12 * window)`` vectors."""
        idx = {"train": self.train_idx, "val": self.val_idx}[which]
        z = self.normalizer.normalize(self.windows[idx])
        return z.reshape(len(idx), -1)


def build_dataset(stream: np.ndarray, window: int = DEFAULT_WINDOW, seed: int = 0,
                  train_fraction: float = 0.8, meta: Optional[dict] = None) -> KpiDataset:
    windows = sliding_windows(stream, window)
    n = len(windows)
    order = np.random.default_rng(seed).permutation(n)
    n_train = max(1, int(round(train_fraction * n)))
    train_idx, val_idx = np.sort(order[:n_train]), np.sort(order[n_train:])
    norm = Normalizer.fit(windows[train_idx])
    meta = dict(meta or {})
    meta.update(window=window, split_seed=seed, train_fraction=train_fraction)
    return KpiDataset(stream, window, train_idx, val_idx, norm, meta)


def normalize_window(raw_window: np.ndarray, normalizer: Normalizer) -> np.ndarray:
    """Raw ``(W, 3, 4)`` window to the flat normalized vector the models take."""
    return normalizer.normalize(raw_window).reshape(-1)


# -- persistence ---------------------------------------------------------------

def _stream_csv(stream: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for t, tick in enumerate(stream):
        for s, row in zip(SLICES, tick):
            w.writerow([t, s, repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), int(row[3])])
    return buf.getvalue()


def save_dataset(ds: KpiDataset, directory, stem: str = "kpi_dataset") -> tuple:
    """Write ``<stem>.csv`` (raw stream) and ``<stem>.json`` (stats + config)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = directory / f"{stem}.csv", directory / f"{stem}.json"
    csv_path.write_text(_stream_csv(ds.stream))
    sidecar = {
        "normalization": ds.normalizer.to_dict(),
        "window": ds.window,
        "train_idx": ds.train_idx.tolist(),
        "val_idx": ds.val_idx.tolist(),
        "generator": ds.meta,
    }
    json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


def load_dataset(csv_path, json_path=None) -> KpiDataset:
    csv_path = Path(csv_path)
    json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
    try:
        sidecar = json.loads(json_path.read_text())
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load dataset {csv_path}: {exc}") from None
    if not rows or rows[0] != CSV_COLUMNS:
        raise ConfigError(f"{csv_path}: unexpected header {rows[:1]}")
    body = rows[1:]
    if len(body) % 3:
        raise ConfigError(f"{csv_path}: row count {len(body)} is not a multiple of 3 slices")
    stream = np.array([[float(v) for v in r[2:]] for r in body]).reshape(-1, 3, 4)
    return KpiDataset(stream, int(sidecar["window"]), np.array(sidecar["train_idx"], dtype=int),
                      np.array(sidecar["val_idx"], dtype=int),
                      Normalizer.from_dict(sidecar["normalization"]), sidecar.get("generator", {}))
