"""RIC-side decision stage: denoising autoencoder front-end and surrogate policy.

The autoencoder is a plain numpy MLP (tanh hidden layers, linear output)
trained with Adam on mean squared reconstruction error. Inputs are corrupted
with zero-mean Gaussian noise during training while targets stay clean.

The policy maps a normalized ``(W, 3, 4)`` window to an :class:`AgentAction`:
PRBs by largest-remainder apportionment of per-slice demand, scheduler by
thresholding mean buffer occupancy.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .kpi import FEATURES, Normalizer

TOTAL_PRBS = 50
N_SLICES = 3
DEMAND_WEIGHTS = {"buffer_bytes": 0.5, "requested_prbs": 0.3, "num_ues": 0.2}
SCHED_THRESHOLDS = (0.33, 0.66)
_BUF = FEATURES.index("buffer_bytes")
_QUOTA_DECIMALS = 9
MODEL_MAGIC = b"E2SECAE1"
OUTPUT_ACTIVATIONS = ("linear", "sigmoid")


class TrainingError(RuntimeError):
    pass


class InputError(ValueError):
    pass


# -- actions -------------------------------------------------------------------

@dataclass(frozen=True)
class AgentAction:
    scheduling: Tuple[int, int, int]
    slicing: Tuple[int, int, int]

    def __post_init__(self):
        sched = tuple(int(v) for v in self.scheduling)
        sl = tuple(int(v) for v in self.slicing)
        if len(sched) != N_SLICES or any(v not in (0, 1, 2) for v in sched):
            raise ValueError(f"scheduling must be three policies in {{0,1,2}}, got {sched}")
        if len(sl) != N_SLICES or min(sl) < 0 or sum(sl) != TOTAL_PRBS:
            raise ValueError(f"slicing must be three non-negative PRB counts summing to 50, got {sl}")
        object.__setattr__(self, "scheduling", sched)
        object.__setattr__(self, "slicing", sl)


def apportion(scores: Sequence[float], seats: int = TOTAL_PRBS) -> Tuple[int, ...]:
    """Largest-remainder (Hamilton) apportionment; ties go to the earlier slice.

    Negative scores count as zero demand; all-zero demand is an equal split.
    Quotas are rounded to 9 decimals before flooring so exact proportions
    are not lost to float error.
    """
    s = np.maximum(np.asarray(scores, dtype=float), 0.0)
    total = s.sum()
    if total <= 0:
        s, total = np.ones_like(s), float(len(s))
    quotas = np.round(seats * s / total, _QUOTA_DECIMALS)
    base = np.floor(quotas).astype(int)
    rem = np.round(quotas - base, _QUOTA_DECIMALS)
    # lexsort: last key is primary -> descending remainder, then slice order.
    order = np.lexsort((np.arange(len(s)), -rem))
    base[order[: seats - base.sum()]] += 1
    return tuple(int(v) for v in base)


def apportion_batch(scores: np.ndarray, seats: int = TOTAL_PRBS) -> np.ndarray:
    """Row-wise :func:`apportion` for an ``(n, k)`` score matrix."""
    s = np.maximum(np.asarray(scores, dtype=float), 0.0)
    total = s.sum(axis=1, keepdims=True)
    zero = (total <= 0).ravel()
    s[zero] = 1.0
    total[zero] = s.shape[1]
    quotas = np.round(seats * s / total, _QUOTA_DECIMALS)
    base = np.floor(quotas).astype(int)
    rem = np.round(quotas - base, _QUOTA_DECIMALS)
    k = s.shape[1]
    # Stable sort on -rem keeps slice order among equal remainders.
    order = np.argsort(-rem, axis=1, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(k)[None, :].repeat(len(s), 0), axis=1)
    missing = seats - base.sum(axis=1, keepdims=True)
    return base + (rank < missing)


def _as_cells(window: np.ndarray) -> np.ndarray:
    w = np.asarray(window, dtype=float)
    if w.ndim >= 1 and w.shape[-1] != 4:
        w = w.reshape(w.shape[:-1] + (-1, N_SLICES, 4))
    return w


def demand_scores(window: np.ndarray) -> np.ndarray:
    """Per-slice demand, averaged over the window's ticks."""
    cells = _as_cells(window)
    means = cells.mean(axis=-3)
    return sum(wt * means[..., FEATURES.index(f)] for f, wt in DEMAND_WEIGHTS.items())


def scheduling_policy(mean_buffer: np.ndarray) -> np.ndarray:
    lo, hi = SCHED_THRESHOLDS
    return np.where(mean_buffer < lo, 0, np.where(mean_buffer < hi, 1, 2))


def surrogate_policy(window: np.ndarray) -> AgentAction:
    """Deterministic stand-in for the slicing/scheduling agent."""
    cells = _as_cells(window)
    if cells.ndim != 3:
        raise InputError(f"expected one window, got shape {np.shape(window)}")
    sched = scheduling_policy(cells[..., _BUF].mean(axis=0))
    return AgentAction(tuple(sched), apportion(demand_scores(cells)))


def surrogate_policy_batch(windows: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized policy over ``(n, 12 * W)`` windows: ``(scheduling, slicing)`` arrays."""
    cells = _as_cells(np.asarray(windows, dtype=float).reshape(len(windows), -1))
    sched = scheduling_policy(cells[..., _BUF].mean(axis=1))
    return sched, apportion_batch(demand_scores(cells))


# -- autoencoder ----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    hidden: Tuple[int, ...] = (32, 8, 32)
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 64
    noise_sigma: float = 0.5
    output_activation: str = "linear"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if len(self.hidden) % 2 == 0:
            raise ValueError("hidden layers must be symmetric around one latent layer")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {OUTPUT_ACTIVATIONS}")
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0 or self.noise_sigma < 0:
            raise ValueError(f"invalid training config {self}")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


class Autoencoder:
    """MLP ``input -> hidden... -> input``; the middle hidden layer is the latent code."""

    activation = "tanh"

    def __init__(self, sizes: Sequence[int], params: Optional[List[np.ndarray]] = None,
                 output_activation: str = "linear"):
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {output_activation!r}")
        self.output_activation = output_activation
        self.sizes = tuple(int(s) for s in sizes)
        latent = min(self.sizes[1:-1]) if len(self.sizes) > 2 else self.sizes[0]
        if self.sizes[0] != self.sizes[-1] or latent >= self.sizes[0]:
            raise ValueError(f"not an undercomplete autoencoder: {self.sizes}")
        if params is None:
            params = [p for a, b in zip(self.sizes, self.sizes[1:]) for p in (np.zeros((a, b)), np.zeros(b))]
        self.params = [np.asarray(p, dtype=np.float64) for p in params]
        self.normalizer: Optional[Normalizer] = None
        self.config: Optional[TrainConfig] = None
        self.report: dict = {}

    @classmethod
    def initialized(cls, sizes: Sequence[int], rng: np.random.Generator,
                    output_activation: str = "linear") -> "Autoencoder":
        params = []
        for a, b in zip(sizes, sizes[1:]):
            limit = np.sqrt(6.0 / (a + b))
            params += [rng.uniform(-limit, limit, (a, b)), np.zeros(b)]
        return cls(sizes, params, output_activation)

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def latent_dim(self) -> int:
        return min(self.sizes[1:-1])

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def _forward(self, x: np.ndarray):
        acts = [x]
        h = x
        for i in range(self.n_layers):
            w, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ w + b
            if i < self.n_layers - 1:
                h = np.tanh(z)
            elif self.output_activation == "sigmoid":
                h = 1.0 / (1.0 + np.exp(-z))
            else:
                h = z
            acts.append(h)
        return acts

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self._forward(np.asarray(x, dtype=float))[-1]

    def encode(self, x: np.ndarray) -> np.ndarray:
        acts = self._forward(np.asarray(x, dtype=float))
        return acts[1 + self.sizes[1:-1].index(self.latent_dim)]

    def loss_and_grad(self, x: np.ndarray, target: np.ndarray):
        """Mean squared error over all elements and its gradient per parameter."""
        acts = self._forward(x)
        diff = acts[-1] - target
        loss = float(np.mean(diff * diff))
        delta = 2.0 * diff / diff.size
        if self.output_activation == "sigmoid":
            delta = delta * acts[-1] * (1.0 - acts[-1])
        grads: List[np.ndarray] = [None] * len(self.params)
        for i in reversed(range(self.n_layers)):
            grads[2 * i] = acts[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i:
                delta = (delta @ self.params[2 * i].T) * (1.0 - acts[i] ** 2)
        return loss, grads

    def mse(self, x: np.ndarray, target: Optional[np.ndarray] = None) -> float:
        x = np.asarray(x, dtype=float)
        target = x if target is None else target
        return float(np.mean((self.forward(x) - target) ** 2))

    # -- persistence --

    def header(self) -> dict:
        return {
            "format": "e2sec-autoencoder/1",
            "sizes": list(self.sizes),
            "activation": self.activation,
            "output_activation": self.output_activation,
            "param_order": [f"{k}{i}" for i in range(self.n_layers) for k in ("W", "b")],
            "dtype": "<f8",
            "normalization": self.normalizer.to_dict() if self.normalizer else None,
            "train_config": asdict(self.config) if self.config else None,
            "train_config_hash": self.config.digest() if self.config else None,
            "report": self.report,
        }

    def to_bytes(self) -> bytes:
        head = json.dumps(self.header(), sort_keys=True).encode()
        body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in self.params)
        return MODEL_MAGIC + struct.pack("<Q", len(head)) + head + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "Autoencoder":
        if data[:8] != MODEL_MAGIC:
            raise InputError("not an e2sec autoencoder file")
        (n,) = struct.unpack_from("<Q", data, 8)
        head = json.loads(data[16:16 + n])
        sizes = head["sizes"]
        params, pos = [], 16 + n
        for a, b in zip(sizes, sizes[1:]):
            for shape in ((a, b), (b,)):
                count = int(np.prod(shape))
                params.append(np.frombuffer(data, "<f8", count, pos).reshape(shape).astype(np.float64))
                pos += 8 * count
        if pos != len(data):
            raise InputError(f"model file has {len(data) - pos} trailing bytes")
        ae = cls(sizes, params, head.get("output_activation", "linear"))
        if head.get("normalization"):
            ae.normalizer = Normalizer.from_dict(head["normalization"])
        if head.get("train_config"):
            ae.config = TrainConfig(**head["train_config"])
        ae.report = head.get("report") or {}
        return ae

    def save(self, path) -> str:
        data = self.to_bytes()
        Path(path).write_bytes(data)
        return hashlib.sha256(data).hexdigest()

    @classmethod
    def load(cls, path) -> "Autoencoder":
        return cls.from_bytes(Path(path).read_bytes())

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def train_autoencoder(train: np.ndarray, val: Optional[np.ndarray] = None,
                      config: TrainConfig = TrainConfig(),
                      normalizer: Optional[Normalizer] = None) -> Autoencoder:
    """Denoising training with Adam; deterministic for a given ``config.seed``."""
    train = np.asarray(train, dtype=float)
    if train.ndim != 2 or not np.isfinite(train).all():
        raise TrainingError("training data must be a finite 2-D array")
    dim = train.shape[1]
    sizes = (dim,) + config.hidden + (dim,)
    rng = np.random.default_rng(config.seed)
    ae = Autoencoder.initialized(sizes, rng, config.output_activation)
    m = [np.zeros_like(p) for p in ae.params]
    v = [np.zeros_like(p) for p in ae.params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        total = 0.0
        for start in range(0, len(train), config.batch_size):
            clean = train[order[start:start + config.batch_size]]
            noisy = clean + rng.normal(0.0, config.noise_sigma, clean.shape) if config.noise_sigma else clean
            loss, grads = ae.loss_and_grad(noisy, clean)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch starting {start}; "
                                    f"last epoch losses {history[-3:]}")
            step += 1
            for p, g, mi, vi in zip(ae.params, grads, m, v):
                mi *= beta1
                mi += (1 - beta1) * g
                vi *= beta2
                vi += (1 - beta2) * g * g
                mhat = mi / (1 - beta1 ** step)
                vhat = vi / (1 - beta2 ** step)
                p -= config.learning_rate * mhat / (np.sqrt(vhat) + eps)
            total += loss * len(clean)
        history.append(total / len(train))
    ae.normalizer = normalizer
    ae.config = config
    ae.report = {
        "epochs": config.epochs,
        "final_train_loss": history[-1] if history else None,
        "train_mse": ae.mse(train),
        "val_mse": ae.mse(val) if val is not None and len(val) else None,
        "val_variance": float(np.mean(np.var(val, axis=0))) if val is not None and len(val) else None,
    }
    return ae


def reconstruct(ae: Autoencoder, window: np.ndarray) -> np.ndarray:
    x = np.asarray(window, dtype=float)
    flat = x.reshape(-1) if x.ndim != 2 else x
    if flat.shape[-1] != ae.input_dim:
        raise InputError(f"window has {flat.shape[-1]} features, autoencoder expects {ae.input_dim}")
    return ae.forward(flat).reshape(x.shape)


def decide(window: np.ndarray, ae: Optional[Autoencoder] = None) -> AgentAction:
    if ae is not None:
        window = reconstruct(ae, window)
    return surrogate_policy(window)


def decide_batch(windows: np.ndarray, ae: Optional[Autoencoder] = None):
    windows = np.asarray(windows, dtype=float)
    if ae is not None:
        windows = reconstruct(ae, windows)
    return surrogate_policy_batch(windows)
