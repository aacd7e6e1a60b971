"""Adversarial inputs: KPI perturbation and record tamper / replay injectors.

``sigma`` is a standard deviation in normalized-feature units. In
``PAPER_LITERAL`` mode the noise is centred on the KPI's own value, so a
feature ``x`` becomes ``x + N(x, sigma)`` and its expectation doubles; in
``ZERO_MEAN`` mode it becomes ``x + N(0, sigma)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import FrozenSet, Optional, Tuple

import numpy as np

from .kpi import FEATURES, SLICES
from .secchan import AuthenticationError, ReplayError, SealedRecord, SecureChannel

CLAMP_RANGE = (0.0, 2.0)


class NoiseMode(str, enum.Enum):
    PAPER_LITERAL = "PAPER_LITERAL"
    ZERO_MEAN = "ZERO_MEAN"


@dataclass(frozen=True)
class PerturbationSpec:
    sigma: float
    mode: NoiseMode = NoiseMode.PAPER_LITERAL
    # Feature names ("buffer_bytes") or slice-qualified ones ("eMBB.buffer_bytes");
    # empty means every feature of every slice.
    target_features: FrozenSet[str] = field(default_factory=frozenset)
    seed: int = 0
    clamp: bool = True

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        object.__setattr__(self, "mode", NoiseMode(self.mode))
        object.__setattr__(self, "target_features", frozenset(self.target_features))

    def mask(self) -> np.ndarray:
        """Boolean ``(3, 4)`` mask of the (slice, feature) cells under attack."""
        if not self.target_features:
            return np.ones((len(SLICES), len(FEATURES)), dtype=bool)
        m = np.zeros((len(SLICES), len(FEATURES)), dtype=bool)
        for name in self.target_features:
            slice_name, _, feat = name.rpartition(".")
            if feat not in FEATURES or (slice_name and slice_name not in SLICES):
                raise ValueError(f"unknown target feature {name!r}")
            rows = [SLICES.index(slice_name)] if slice_name else slice(None)
            m[rows, FEATURES.index(feat)] = True
        return m

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "mode": self.mode.value,
                "target_features": sorted(self.target_features), "seed": self.seed,
                "clamp": self.clamp}


def perturb_window(window: np.ndarray, spec: PerturbationSpec,
                   rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Perturb a normalized window (flat ``12 * W`` vector or ``(..., 3, 4)``).

    Noise is drawn for every cell from ``rng`` (default: seeded from
    ``spec.seed``) so the draw sequence does not depend on the target mask.
    """
    x = np.asarray(window, dtype=float)
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    cells = x.reshape(-1, len(SLICES), len(FEATURES))
    noise = rng.normal(0.0, 1.0, size=cells.shape) * spec.sigma
    if spec.mode is NoiseMode.PAPER_LITERAL:
        noise = noise + cells
    out = np.where(spec.mask(), cells + noise, cells)
    if spec.clamp:
        out = np.clip(out, *CLAMP_RANGE)
    return out.reshape(x.shape)


def tamper_record(record: SealedRecord, byte_index: int, new_value: int) -> SealedRecord:
    """Overwrite one byte of the record's wire image and re-split it.

    Field boundaries are kept, so a changed length byte survives as a
    mismatched ``total_length`` for :meth:`SecureChannel.open` to reject.
    """
    data = bytearray(record.to_bytes())
    if not 0 <= byte_index < len(data):
        raise IndexError(f"byte {byte_index} outside a {len(data)}-byte record")
    data[byte_index] = new_value & 0xFF
    return SealedRecord.from_bytes(bytes(data), len(record.nonce), len(record.tag))


def replay_record(record: SealedRecord, channel: SecureChannel) -> Tuple[str, Optional[bytes]]:
    """Resubmit ``record`` to ``channel``.

    Returns ``("replay", None)``, ``("auth", None)`` or ``("accepted", plaintext)``.
    """
    try:
        return "accepted", channel.open(record)
    except ReplayError:
        return "replay", None
    except AuthenticationError:
        return "auth", None


def field_of(byte_index: int, record: SealedRecord) -> str:
    """Name of the record field a wire byte belongs to."""
    bounds = [("total_length", 4), ("spi", 8), ("seq", 16), ("nonce", 16 + len(record.nonce)),
              ("ciphertext", 16 + len(record.nonce) + len(record.ciphertext)),
              ("tag", record.encoded_length)]
    for name, end in bounds:
        if byte_index < end:
            return name
    raise IndexError(byte_index)
